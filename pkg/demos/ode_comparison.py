"""Comparison ODEs: closed-form Riccati lifespans and the delta scaling of the
second-order inequality, with the rescaling that removes delta."""
import numpy as np

from exterior_blowup.cli import ode_cases
from exterior_blowup.ode import (OdeProblem, integrate_riccati, integrate_sideris,
                                 rescale_sideris, riccati_closed_form, unscaled_time)


def main():
    print("Riccati v' = C9 v^p / (t+R)^s")
    for prob in ode_cases():
        exact = riccati_closed_form(prob).value
        num = integrate_riccati(prob)
        lo, hi = num.certified_interval
        print(f"  n={prob.n} p={prob.p:<4} eps={prob.epsilon:<4} closed {exact:12.6g} "
              f"numerical {num.value:12.6g}  bracket [{lo:.6g}, {hi:.6g}]")

    print("F'' = (t+1)^-3 F^2 with F >= delta (t+1)^2")
    deltas = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    T = []
    for d in deltas:
        ode = OdeProblem(p=2, a=2, q=3, R=1, delta=d)
        b = integrate_sideris(ode)
        via = unscaled_time(ode, integrate_sideris(rescale_sideris(ode)).value)
        T.append(b.value)
        print(f"  delta={d:.0e}  T={b.value:12.6g}  via rescaled problem {via:12.6g}")
    slope = np.polyfit(np.log(deltas), np.log(T), 1)[0]
    print(f"  log-log slope {slope:.4f}")


if __name__ == "__main__":
    main()
