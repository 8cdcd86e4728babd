import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exterior_blowup import harness as hx
from exterior_blowup.cli import main
from exterior_blowup.errors import ConfigError, InsufficientPoints
from exterior_blowup.ode import ExponentialLifespan

FAST = {"numerics.spacing": "0.005", "sweep.epsilons": "0.8, 0.6, 0.4"}


def test_defaults_round_trip():
    cfg = hx.ExperimentConfig.from_mapping({})
    again = hx.ExperimentConfig.from_text(cfg.to_text())
    assert again == cfg
    assert cfg.alpha_theory == 1.0


@pytest.mark.parametrize("overrides", [
    {"sweep.epsilons": "0.8, 0.8, 0.4"},
    {"sweep.epsilons": "0.4, 0.8, 0.2"},
    {"sweep.epsilons": "1.5, 0.8, 0.2"},
    {"no.such.key": "1"},
    {"problem.source": "cubic"},
    {"numerics.cfl": "1.5"},
    {"numerics.workers": "0"},
])
def test_invalid_config(overrides):
    with pytest.raises(ConfigError):
        hx.ExperimentConfig.from_mapping(overrides)


def test_fit_needs_three_epsilons():
    cfg = hx.ExperimentConfig.from_mapping({"sweep.epsilons": "0.8, 0.4"})
    with pytest.raises(ConfigError):
        cfg.validate()


def test_config_file_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# velocity run\nproblem.p = 2.0\n\nsweep.epsilons = 0.9, 0.5, 0.3\n")
    cfg = hx.load_config(path)
    assert cfg.epsilons == (0.9, 0.5, 0.3)
    with pytest.raises(ConfigError):
        hx.load_config(tmp_path / "missing.cfg")


def test_fit_exact_power_law():
    eps = np.array([0.8, 0.4, 0.2, 0.1])
    fit = hx.fit_scaling(eps, 3.0 * eps ** -2.0, 2.0)
    assert fit.slope == pytest.approx(-2.0)
    assert fit.A_envelope == pytest.approx(3.0)
    assert fit.passed and fit.upper_bound_consistent


@given(st.floats(0.5, 20.0), st.integers(0, 2 ** 32 - 1))
def test_fit_with_noise(A, seed):
    rng = np.random.default_rng(seed)
    eps = np.geomspace(0.8, 0.05, 6)
    T = A * eps ** -1.0 * np.exp(rng.uniform(-0.02, 0.02, eps.size))
    fit = hx.fit_scaling(eps, T, 1.0, 0.2)
    assert abs(fit.slope + 1.0) <= 0.1
    assert fit.passed


def test_fit_sharpness_versus_upper_bound():
    eps = np.array([0.8, 0.4, 0.2])
    slow = hx.fit_scaling(eps, eps ** -1.5, 2.0)
    assert not slow.passed and slow.upper_bound_consistent
    fast = hx.fit_scaling(eps, eps ** -3.0, 2.0)
    assert not fast.upper_bound_consistent


def test_fit_exponential_mode():
    eps = np.array([0.5, 0.4, 0.3, 0.25])
    fit = hx.fit_scaling(eps, np.exp(2.0 / eps), ExponentialLifespan, p=2.0)
    assert fit.mode == "exponential" and fit.passed
    assert fit.slope == pytest.approx(2.0)


def test_fit_insufficient_points():
    with pytest.raises(InsufficientPoints):
        hx.fit_scaling([0.8, 0.4, 0.2], [1.0, math.inf, math.nan], 1.0)


@pytest.fixture(scope="module")
def fast_sweep():
    cfg = hx.ExperimentConfig.from_mapping(FAST)
    return hx.run_sweep(cfg)


def test_sweep_entries(fast_sweep):
    assert fast_sweep.all_converged and fast_sweep.monotone
    assert all(e.checks_passed for e in fast_sweep.entries)
    names = {r.name for r in fast_sweep.entries[0].reports}
    assert {"Ineq413", "Riccati417", "G0Nonnegative"} <= names


def test_outputs_layout_and_determinism(fast_sweep, tmp_path):
    a = hx.emit_outputs(fast_sweep, tmp_path / "a", plot=False)
    b = hx.emit_outputs(fast_sweep, tmp_path / "b", plot=True)
    assert not (tmp_path / "a" / "lifespan.svg").exists()
    assert (tmp_path / "b" / "lifespan.svg").exists()
    head = (tmp_path / "a" / "summary.csv").read_text().splitlines()[0]
    assert head == "epsilon,T_num,converged"
    for key in a:
        if key.startswith("trace") or key in ("summary", "checks"):
            assert a[key].read_bytes() == b[key].read_bytes()
    tr = hx.read_trace_csv(a["trace:0.8"])
    assert np.array_equal(tr.F1, fast_sweep.entries[0].trace.F1)
    manifest = json.loads(a["manifest"].read_text())
    assert manifest["config"]["sweep.epsilons"] == "0.8, 0.6, 0.4"
    assert hx.load_config(a["manifest"]) == fast_sweep.config


def test_plot_is_reproducible(fast_sweep, tmp_path):
    fit = hx.fit_sweep(fast_sweep)
    p1 = hx.plot_lifespans(fast_sweep, fit, tmp_path / "1.svg")
    p2 = hx.plot_lifespans(fast_sweep, fit, tmp_path / "2.svg")
    assert p1.read_bytes() == p2.read_bytes()


def cli(*args):
    return main(list(args))


def overrides(extra=FAST):
    out = []
    for k, v in extra.items():
        out += ["--override", f"{k}={v}"]
    return out


def test_cli_sweep_then_fit(tmp_path, capsys):
    out = str(tmp_path / "sw")
    assert cli("sweep", "--out", out, *overrides()) == 0
    assert "fit: slope" in capsys.readouterr().out
    assert cli("fit", "--out", out) == 0
    assert (tmp_path / "sw" / "fit.json").exists()


def test_cli_simulate_and_verify(tmp_path):
    out = str(tmp_path / "sim")
    assert cli("simulate", "--epsilon", "0.8", "--out", out, *overrides()) == 0
    manifest = tmp_path / "sim" / "run_manifest.json"
    assert manifest.exists()
    assert cli("verify", "--manifest", str(manifest), "--out", out) == 0


def test_cli_elliptic_and_ode(tmp_path):
    assert cli("elliptic", "--out", str(tmp_path), "--spacing", "0.01") == 0
    assert cli("verify-ode", "--out", str(tmp_path)) == 0
    rows = (tmp_path / "ode_cases.csv").read_text().splitlines()
    assert rows[0] == "case,T_closed,T_num,ratio,pass"
    assert all(r.endswith("true") for r in rows[1:])


def test_cli_usage_errors(tmp_path, capsys):
    assert cli("sweep", "--override", "bogus=1") == 2
    assert cli("sweep", "--override", "noequals") == 2
    assert cli("sweep", "--config", str(tmp_path / "nope.cfg")) == 2
    with pytest.raises(SystemExit) as exc:
        cli("frobnicate")
    assert exc.value.code == 2
