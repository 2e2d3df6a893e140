import csv
import io
import json
import math

import numpy as np
import pytest

from ptnoise.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    ExperimentReport,
    check,
    initial_field,
    qv_density,
    qv_exact_moments,
    run_experiment,
)
from ptnoise.noise import NoiseParams, build_noise_ensemble
from ptnoise.spectral import SpectralGrid, kdot, sample_gaussian_field, sobolev_norm


# --- configuration -----------------------------------------------------------------

def test_every_registered_default_is_valid():
    for name in EXPERIMENTS:
        cfg = ExperimentConfig.from_dict({"experiment": name})
        assert cfg.experiment == name
        assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("doc,field", [
    ({"N_list": [8, 4]}, "N_list"),
    ({"N_list": []}, "N_list"),
    ({"K": 8, "N_list": [4, 16]}, "N_list/K"),
    ({"d": 4}, "d"),
    ({"replicas": 0}, "replicas"),
    ({"dt": 2.0, "T": 1.0}, "dt/T"),
    ({"chunk": 3}, "chunk"),
])
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ValueError, match=field):
        ExperimentConfig.from_dict({"experiment": "corrector_convergence", **doc})


def test_unknown_experiment():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "nope"})


def test_options_merge_keywise():
    cfg = ExperimentConfig.from_dict({"experiment": "scaling_limit", "options": {"delta": 0.25}})
    assert cfg.options["delta"] == 0.25
    assert cfg.options["form"] == "scalar"


# --- report plumbing ------------------------------------------------------------------

def test_check_relations_and_margins():
    c = check("x", 0.3, "<=", 0.5)
    assert c.passed and c.margin == pytest.approx(0.2)
    c = check("x", 0.3, ">=", 0.5)
    assert not c.passed and c.margin == pytest.approx(-0.2)
    c = check("x", -2.0, "in", (-2.6, -1.4))
    assert c.passed and c.margin == pytest.approx(0.6)
    assert not check("x", math.nan, "<=", 1.0).passed
    with pytest.raises(ValueError):
        check("x", 1.0, "<", 2.0)


def test_report_serialization():
    rep = ExperimentReport("demo", {"seed": 1})
    rep.rows = [{"N": 4, "v": 0.1}, {"N": 8, "w": math.inf, "flag": True}]
    rep.criteria = [check("ok", 1.0, "<=", 2.0), check("bad", 3.0, "<=", 2.0)]
    rep.series["s"] = [{"t": 0.5, "x": [1.0, 2.0]}]
    doc = json.loads(rep.to_json())
    assert doc["passed"] is False
    assert doc["rows"][1]["w"] == "inf"
    bad = next(c for c in doc["criteria"] if c["name"] == "bad")
    assert bad["margin"] == -1.0
    text = rep.to_csv()
    assert "\r" not in text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["N", "v", "w", "flag"]
    assert rows[0]["w"] == "" and rows[1]["flag"] == "1"
    assert float(rows[0]["v"]) == 0.1
    assert rep.to_csv("s").splitlines()[1] == "0.5,1 2"
    lines = rep.lines()
    assert lines[0].startswith("PASS demo:ok") and lines[1].startswith("FAIL demo:bad")
    assert "margin=-1" in lines[1]


# --- initial data ------------------------------------------------------------------------

def test_initial_field_kinds():
    g = SpectralGrid(3, 4)
    assert np.all(initial_field(g, None, 3).coeffs == 0)
    tg = initial_field(g, {"kind": "taylor_green", "amplitude": 2.0}, 3)
    assert tg.solenoidal and np.max(np.abs(kdot(g, tg.coeffs))) < 1e-14
    # L2 norm of amp * sin x cos y cos z on the torus is amp (2 pi)^(3/2) / (2 sqrt 2), twice for two components
    assert sobolev_norm(tg, 0) == pytest.approx(2.0 * (2 * np.pi) ** 1.5 / 2, rel=1e-12)
    sh = initial_field(g, {"kind": "shear"}, 3)
    assert np.allclose(sh.physical()[0][0, :, 0], np.sin(np.arange(g.M) * 2 * np.pi / g.M))
    r = initial_field(g, {"kind": "random", "amplitude": 3.0, "seed": 4}, 3)
    assert sobolev_norm(r, 0) == pytest.approx(3.0)
    assert np.array_equal(r.coeffs, initial_field(g, {"kind": "random", "amplitude": 3.0,
                                                      "seed": 4}, 3).coeffs)
    m = initial_field(SpectralGrid(2, 4), {"kind": "modes", "modes": [[[1, 0], [0.5, 0.5]]]})
    assert m.mode((1, 0))[0] == 0.5 + 0.5j and m.mode((-1, 0))[0] == 0.5 - 0.5j
    with pytest.raises(ValueError):
        initial_field(g, {"kind": "taylor_green"}, 1)
    with pytest.raises(ValueError):
        initial_field(g, {"kind": "vortex"}, 3)


# --- quadratic variation -------------------------------------------------------------------

def test_qv_exact_matches_monte_carlo():
    # the exact path works on white-noise coordinates, the MC path on FFT products
    d, N = 2, 4
    p = NoiseParams(d=d, a=0.0, N=N)
    ens = build_noise_ensemble(p)
    grid = SpectralGrid(d, 2 * N + 1)
    ex = qv_exact_moments(ens, (1, 0))
    n = 4000
    rng = np.random.default_rng(8)
    w = sample_gaussian_field(grid, lambda k: np.ones_like(k), rng, batch=(n,))
    from ptnoise.experiments import _test_function

    phi = _test_function(grid, np.array([1, 0]))
    q = qv_density(grid, ens, w.coeffs, phi)
    se = q.std(ddof=1) / np.sqrt(n)
    assert abs(q.mean() - ex["mean"]) <= 3 * se
    vse = np.sqrt(np.var((q - q.mean()) ** 2, ddof=1) / n)
    assert abs(q.var(ddof=1) - ex["var"]) <= 3 * vse


def test_qv_mean_near_limit_already_at_moderate_N():
    ens = build_noise_ensemble(NoiseParams(d=2, a=0.0, N=16))
    assert qv_exact_moments(ens, (1, 0))["mean"] == pytest.approx(2.0, rel=0.1)


# --- small experiment runs ------------------------------------------------------------------

def small(name, **kw):
    return run_experiment({"experiment": name, **kw})


def test_corrector_convergence_rows_and_linearity():
    rep = small("corrector_convergence", K=8, N_list=[4, 8],
                options={"a_list": [0.0], "xi_list": [[1, 0], [1, 1]]})
    assert len(rep.rows) == 4
    assert {(r["N"], r["xi"]) for r in rep.rows} == {(4, "(1,0)"), (8, "(1,0)"),
                                                    (4, "(1,1)"), (8, "(1,1)")}
    lin = [c for c in rep.criteria if c.name.startswith("nu_linear")]
    assert lin and all(c.passed for c in lin)


def test_corrector_oracle_small():
    rep = small("corrector_oracle", options={"dims": [2], "N_max": 2, "galerkin_N_max": 1})
    assert rep.passed
    assert max(r["rel_err"] for r in rep.rows) <= 1e-10


def test_martingale_vanishes_without_noise():
    rep = small("martingale_decay", nu=0.0, K=8, N_list=[2, 4], replicas=2, T=0.01)
    assert all(r["iso_mean"] == 0 and r["direct_mean"] == 0 for r in rep.rows)


def test_martingale_small_run_is_consistent():
    rep = small("martingale_decay", K=8, N_list=[2, 4], replicas=40, T=0.02, dt=1e-3)
    assert all(c.passed for c in rep.criteria if c.name.startswith("isometry"))
    assert all(r["iso_mean"] > 0 for r in rep.rows)


def test_scaling_limit_zero_data():
    rep = small("scaling_limit", K=6, N_list=[2, 4], replicas=3, T=0.01, dt=1e-3,
                options={"u0": {"kind": "zero"}})
    assert all(r["median"] == 0 for r in rep.rows)


def test_blowup_stay_fraction_zero_below_initial_norm():
    rep = small("blowup_delay", K=4, N_list=[2, 4], replicas=2, T=0.01, dt=1e-3,
                options={"cutoff_R_factor": 0.5, "u0": {"kind": "taylor_green", "amplitude": 2.0}})
    assert all(r["stay_fraction"] == 0 for r in rep.rows)


def test_stationarity_small_run():
    rep = small("stationarity", replicas=300, T=0.02, options={"ou_replicas": 2000})
    assert rep.passed, rep.lines()


def test_experiment_is_deterministic():
    doc = {"experiment": "martingale_decay", "K": 8, "N_list": [2, 4], "replicas": 6,
           "T": 0.01, "seed": 3}
    a, b = run_experiment(doc), run_experiment(doc)
    assert a.to_json() == b.to_json()
    assert a.to_csv() == b.to_csv()
