"""End-to-end acceptance runs at full size.

Each test runs one registered experiment with its frozen default config and
prints a single ``PASS``/``FAIL`` line, so ``pytest -v -s`` (or the tee'd log)
reads as a checklist. Several of these take minutes.
"""

import json

import pytest

from ptnoise.cli import dispatch
from ptnoise.experiments import run_experiment


def _report_line(capsys, number, title, report):
    status = "PASS" if report.passed else "FAIL"
    failing = [c.name for c in report.criteria if not c.passed]
    detail = f" (failing: {', '.join(failing)})" if failing else ""
    with capsys.disabled():
        print(f"\n{status} criterion {number:>2}: {title}{detail}")
        for line in report.lines():
            print(f"    {line}")


def _run(capsys, number, title, doc):
    report = run_experiment(doc)
    _report_line(capsys, number, title, report)
    assert report.criteria, "experiment produced no criteria"
    assert report.passed, "\n".join(report.lines())
    return report


def test_01_corrector_limits(capsys):
    scalar = run_experiment({"experiment": "corrector_convergence"})
    vector = run_experiment({
        "experiment": "corrector_convergence", "d": 3, "K": 32, "N_list": [4, 8, 16, 32],
        "options": {"form": "vector", "a_list": [0.0], "xi_list": [[1, 0, 0], [1, 1, 0]]},
        "tolerance": {"ratio": None, "gap_max": 0.1}})
    scalar.criteria += vector.criteria
    _report_line(capsys, 1, "corrector converges to its scalar and vector limits", scalar)
    assert scalar.passed, "\n".join(scalar.lines())


def test_02_corrector_oracle(capsys):
    _run(capsys, 2, "multiplier tables match brute-force operator composition",
         {"experiment": "corrector_oracle"})


def test_03_pathwise_conservation(capsys):
    rep = _run(capsys, 3, "midpoint scheme conserves the weighted Sobolev norm",
               {"experiment": "pathwise_conservation"})
    assert len({r["replica"] for r in rep.rows}) == 10


def test_04_moment_oracle(capsys):
    _run(capsys, 4, "Monte Carlo second moments match the moment ODE",
         {"experiment": "moment_oracle"})


def test_05_martingale_decay(capsys):
    _run(capsys, 5, "martingale part decays in N at the expected rate",
         {"experiment": "martingale_decay"})


def test_06_scaling_limit(capsys):
    _run(capsys, 6, "paths approach the fractional heat flow as N grows",
         {"experiment": "scaling_limit"})


def test_07_stationary_qv(capsys):
    _run(capsys, 7, "stationary quadratic variation concentrates on its limit",
         {"experiment": "stationary_qv"})


def test_08_stationarity(capsys):
    _run(capsys, 8, "white-noise law is preserved by OU and linear SPDE runs",
         {"experiment": "stationarity"})


def test_09_energy_balance(capsys):
    _run(capsys, 9, "energy identity holds in the critical viscous case",
         {"experiment": "energy_balance"})


def test_10_limit_bounds(capsys):
    _run(capsys, 10, "limit equations respect their envelopes and decay",
         {"experiment": "limit_bounds"})


def test_11_blowup_delay(capsys):
    _run(capsys, 11, "noisy runs track the hyperviscous limit more closely as N grows",
         {"experiment": "blowup_delay"})


@pytest.mark.parametrize("command,doc", [
    ("martingale-check", {"N_list": [4, 8], "K": 8, "replicas": 20, "T": 0.02,
                          "options": {"chunk": 10}}),
    ("simulate-ns", {"K": 4, "N": 2, "a": -0.5, "b": 0.25, "dt": 1e-3, "T": 0.01,
                     "replicas": 2, "seed": 9, "scheme": "strat_midpoint",
                     "u0": {"kind": "taylor_green"}}),
])
def test_12_determinism(capsys, tmp_path, command, doc):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    runs = [tmp_path / "a", tmp_path / "b"]
    codes = [dispatch([command, "--config", str(cfg), "--out", str(o), "--quiet"]) for o in runs]
    names = sorted(p.name for p in runs[0].iterdir() if p.name != "manifest.json")
    same = (codes[0] == codes[1]
            and names == sorted(p.name for p in runs[1].iterdir() if p.name != "manifest.json")
            and all((runs[0] / n).read_bytes() == (runs[1] / n).read_bytes() for n in names))
    with capsys.disabled():
        print(f"\n{'PASS' if same else 'FAIL'} criterion 12: {command} re-run is byte-identical "
              f"({len(names)} files)")
    assert len(names) >= 2
    assert same
