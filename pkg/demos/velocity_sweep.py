"""Velocity-source blowup in one dimension.

Runs the sweep in ``configs/velocity_n1.cfg``, prints each lifespan with the
inequality checks applied to its trace, and fits ``log T`` against ``log eps``.
"""
from pathlib import Path

from exterior_blowup import harness as hx

HERE = Path(__file__).parent


def main():
    cfg = hx.load_config(HERE / "configs" / "velocity_n1.cfg")
    result = hx.run_sweep(cfg)
    for e in result.entries:
        checks = ", ".join(f"{r.name}={'ok' if r.passed else 'FAIL'}" for r in e.reports)
        print(f"eps={e.epsilon:<5} T={e.T_num:8.4f}  {checks}")
    fit = hx.fit_sweep(result)
    print(f"slope {fit.slope:.3f} (theory -{fit.alpha_theory}), r^2 {fit.r_squared:.4f}")
    files = hx.emit_outputs(result)
    print("wrote", files["manifest"].parent)


if __name__ == "__main__":
    main()
