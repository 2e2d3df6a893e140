"""Command-line entry point.

Every subcommand reads a JSON config, validates it, runs, and writes a report
(``report.json``), long-format CSV tables and a ``manifest.json`` into the
output directory. Exit status: 0 when every criterion passes, 1 when a
criterion fails or the run aborts, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from . import spectral as sp
from .experiments import (EXPERIMENTS, ExperimentReport, check, config_errors, initial_field,
                          merge_defaults, run_experiment)
from .limits import damped_euler, fractional_heat, hyperviscous_ns
from .noise import NoiseParams
from .sde import IntegratorError, SimConfig, simulate
from .spectral import SpectralGrid

__all__ = ["main", "dispatch", "validate_config", "RunManifest", "config_digest", "OUT_ENV"]

OUT_ENV = "PTNOISE_OUT"
DEFAULT_OUT = "ptnoise-out"

# subcommand -> (allowed experiment ids, default id); simulation commands have none
COMMANDS = {
    "corrector-check": (("corrector_convergence", "corrector_oracle"), "corrector_convergence"),
    "qv-check": (("stationary_qv",), "stationary_qv"),
    "martingale-check": (("martingale_decay",), "martingale_decay"),
    "scaling-limit": (("scaling_limit",), "scaling_limit"),
    "blowup-stats": (("blowup_delay",), "blowup_delay"),
    "smr-check": (("uniform_smr",), "uniform_smr"),
    "stationarity-check": (("stationarity",), "stationarity"),
    "limit-solve": (("limit_bounds", "moment_oracle"), "limit_bounds"),
    "simulate-scalar": (("pathwise_conservation",), None),
    "simulate-ns": (("energy_balance",), None),
    "simulate-euler": ((), None),
}

SIM_FORMS = {"simulate-scalar": "scalar", "simulate-ns": "ns", "simulate-euler": "euler"}
LIMIT_SOLVERS = ("heat", "hyperviscous", "damped_euler")

# field -> (types, default); ``None`` default means required
_SIM_SCHEMA = {
    "K": ((int,), None),
    "dt": ((int, float), None),
    "T": ((int, float), None),
    "d": ((int,), 2),
    "N": ((int,), 4),
    "a": ((int, float), 0.0),
    "b": ((int, float), 0.0),
    "gamma": ((int, float), 0.0),
    "nu": ((int, float), 1.0),
    "shell": ((str,), "ball"),
    "kappa": ((int, float), 0.0),
    "scheme": ((str,), "ito_etd"),
    "corrector": ((str,), "full"),
    "record_every": ((int,), 10),
    "replicas": ((int,), 1),
    "seed": ((int,), 0),
    "cutoff_R": ((int, float, type(None)), None),
    "cutoff_delta": ((int, float), 0.0),
    "norm_s": ((list,), []),
    "besov_p": ((int, float), 2.0),
    "u0": ((dict,), {"kind": "zero"}),
    "noise": ((bool,), True),
    "vector_b_sign": ((int,), -1),
}
_OPTIONAL_NONE = {"cutoff_R"}
_SIM_FORM_DEFAULTS = {"scalar": {"d": 2}, "ns": {"d": 3, "kappa": 1.0}, "euler": {"d": 3}}

_LIMIT_SCHEMA = {
    "solver": ((str,), None),
    "K": ((int,), None),
    "dt": ((int, float), None),
    "T": ((int, float), None),
    "d": ((int,), 3),
    "nu": ((int, float), 1.0),
    "a": ((int, float), 0.0),
    "b": ((int, float), 0.0),
    "kappa": ((int, float), 0.0),
    "s": ((int, float), 3.0),
    "cutoff_R": ((int, float, type(None)), None),
    "cutoff_delta": ((int, float), 0.0),
    "coefficient": ((int, float, type(None)), None),
    "record_every": ((int,), 10),
    "u0": ((dict,), {"kind": "zero"}),
    "seed": ((int,), 0),
}
_LIMIT_OPTIONAL_NONE = {"cutoff_R", "coefficient"}

_TYPED_EXPERIMENT_FIELDS = {
    "d": (int,), "K": (int,), "N_list": (list,), "a": (int, float), "b": (int, float),
    "gamma": (int, float), "nu": (int, float), "kappa": (int, float), "shell": (str,),
    "replicas": (int,), "T": (int, float), "dt": (int, float), "seed": (int,),
    "options": (dict,), "tolerance": (dict,), "experiment": (str,),
}


class UsageError(Exception):
    """Bad command line, config or output location (exit status 2)."""


# --- validation -----------------------------------------------------------------------

def _type_ok(val, types) -> bool:
    if isinstance(val, bool) and bool not in types:
        return False
    return isinstance(val, types)


def _type_name(types) -> str:
    names = {int: "integer", float: "number", str: "string", list: "array", dict: "object",
             bool: "boolean", type(None): "null"}
    return " or ".join(dict.fromkeys(names[t] for t in types))


def _apply_schema(doc: dict, schema: dict, optional_none: set, errors: list) -> dict:
    out = {}
    for key, (types, default) in schema.items():
        if key in doc:
            val = doc[key]
            if not _type_ok(val, types):
                errors.append(f"$.{key}: expected {_type_name(types)}, got {type(val).__name__}")
                continue
            out[key] = copy.deepcopy(val)
        elif default is None and key not in optional_none:
            errors.append(f"$.{key}: required field is missing")
        else:
            out[key] = copy.deepcopy(default)
    for key in doc:
        if key not in schema:
            errors.append(f"$.{key}: unknown field")
    return out


def _sim_checks(cfg: dict, form: str, errors: list, warnings: list) -> None:
    if "K" in cfg and "N" in cfg and cfg["N"] > cfg["K"]:
        errors.append(f"$.N/$.K: noise cutoff N={cfg['N']} exceeds truncation K={cfg['K']}")
    elif cfg.get("shell") == "annulus" and "K" in cfg and 2 * cfg.get("N", 0) > cfg["K"]:
        errors.append(f"$.N/$.K: annulus outer radius 2N={2 * cfg['N']} exceeds K={cfg['K']}")
    if "dt" in cfg and "T" in cfg:
        if not cfg["dt"] > 0:
            errors.append(f"$.dt: must be > 0, got {cfg['dt']}")
        elif cfg["dt"] > cfg["T"]:
            errors.append(f"$.dt/$.T: dt={cfg['dt']} exceeds T={cfg['T']}")
    if cfg.get("d") not in (2, 3):
        errors.append(f"$.d: must be 2 or 3, got {cfg.get('d')}")
    if form in ("ns", "euler") and cfg.get("d") != 3:
        errors.append(f"$.d: {form} runs are three-dimensional, got d={cfg.get('d')}")
    if cfg.get("scheme") not in ("ito_em", "ito_etd", "strat_midpoint"):
        errors.append(f"$.scheme: must be ito_em, ito_etd or strat_midpoint, got {cfg.get('scheme')!r}")
    if cfg.get("shell") not in ("ball", "annulus"):
        errors.append(f"$.shell: must be ball or annulus, got {cfg.get('shell')!r}")
    if "d" in cfg and not 0 <= cfg.get("gamma", 0) <= cfg["d"] / 2:
        errors.append(f"$.gamma: must lie in [0, d/2], got {cfg.get('gamma')}")
    if cfg.get("nu", 1) <= 0:
        errors.append(f"$.nu: must be > 0, got {cfg.get('nu')}")
    if cfg.get("record_every", 1) < 1 or cfg.get("replicas", 1) < 1:
        errors.append("$.record_every/$.replicas: must be >= 1")
    if form == "euler" and cfg.get("kappa", 0) != 0:
        errors.append(f"$.kappa: Euler runs are inviscid, got kappa={cfg['kappa']}")
    a = cfg.get("a", 0.0)
    if a > 0.5:
        warnings.append(f"$.a: a={a} > 1/2; only existence of weak solutions is known in this "
                        "regime, so uniqueness and continuum-limit behavior are not claimed")


def validate_config(document: dict, command: str = "simulate-scalar") -> tuple[dict | None, list, list]:
    """Normalize a config document for ``command``.

    Returns ``(config, errors, warnings)``. On any error ``config`` is
    ``None``; all violations are reported together. Normalizing an already
    normalized document returns it unchanged.
    """
    errors: list[str] = []
    warnings: list[str] = []
    if not isinstance(document, dict):
        return None, ["$: config must be a JSON object"], warnings
    if command not in COMMANDS:
        return None, [f"unknown subcommand {command!r}"], warnings
    allowed, default_exp = COMMANDS[command]
    doc = copy.deepcopy(document)
    exp = doc.get("experiment")
    if exp is None and default_exp is not None and "solver" not in doc:
        exp = default_exp
    if exp is not None:
        if exp not in allowed:
            return None, [f"$.experiment: {exp!r} is not available under {command} "
                          f"(choose from {', '.join(allowed)})"], warnings
        for key, types in _TYPED_EXPERIMENT_FIELDS.items():
            if key in doc and not _type_ok(doc[key], types):
                errors.append(f"$.{key}: expected {_type_name(types)}, got {type(doc[key]).__name__}")
        for key in doc:
            if key not in _TYPED_EXPERIMENT_FIELDS:
                errors.append(f"$.{key}: unknown field")
        if errors:
            return None, errors, warnings
        cfg = merge_defaults(exp, doc)
        errors.extend(f"$.{e}" for e in config_errors(cfg))
        if cfg.get("a", 0) > 0.5:
            warnings.append(f"$.a: a={cfg['a']} > 1/2; only existence of weak solutions is known "
                            "in this regime, so uniqueness and continuum-limit behavior are not claimed")
        return (None if errors else cfg), errors, warnings
    if command == "limit-solve" or "solver" in doc:
        cfg = _apply_schema(doc, _LIMIT_SCHEMA, _LIMIT_OPTIONAL_NONE, errors)
        if "solver" in cfg and cfg["solver"] not in LIMIT_SOLVERS:
            errors.append(f"$.solver: must be one of {', '.join(LIMIT_SOLVERS)}, got {cfg['solver']!r}")
        if "dt" in cfg and "T" in cfg and not 0 < cfg["dt"] <= cfg["T"]:
            errors.append(f"$.dt/$.T: need 0 < dt <= T, got dt={cfg['dt']}, T={cfg['T']}")
        return (None if errors else cfg), errors, warnings
    form = SIM_FORMS[command]
    for key, val in _SIM_FORM_DEFAULTS[form].items():
        doc.setdefault(key, val)
    cfg = _apply_schema(doc, _SIM_SCHEMA, _OPTIONAL_NONE, errors)
    _sim_checks(cfg, form, errors, warnings)
    return (None if errors else cfg), errors, warnings


# --- manifest -------------------------------------------------------------------------

def config_digest(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys), independent of key order."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """Provenance of one run; the only output that carries timestamps."""

    command: str
    config_digest: str
    seed: int
    code_version: str
    started: str
    finished: str = ""
    host: str = field(default_factory=lambda: f"{platform.node()} {platform.platform()} "
                                              f"python {platform.python_version()}")
    outputs: list = field(default_factory=list)
    status: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# --- runners --------------------------------------------------------------------------

def _run_simulation(command: str, cfg: dict) -> tuple[ExperimentReport, dict]:
    form = SIM_FORMS[command]
    d = cfg["d"]
    vector = form != "scalar"
    grid = SpectralGrid(d, cfg["K"])
    noise = None
    if cfg["noise"]:
        noise = NoiseParams(d=d, a=cfg["a"], b=cfg["b"], gamma=cfg["gamma"], nu=cfg["nu"],
                            N=cfg["N"], shell=cfg["shell"], vector_b_sign=cfg["vector_b_sign"])
    R = math.inf if cfg["cutoff_R"] is None else float(cfg["cutoff_R"])
    sim = SimConfig(grid=grid, noise=noise, dt=float(cfg["dt"]), T=float(cfg["T"]),
                    form="vector" if vector else "scalar", kappa=float(cfg["kappa"]),
                    nonlinear=vector, cutoff_R=R, cutoff_delta=float(cfg["cutoff_delta"]),
                    scheme=cfg["scheme"], corrector=cfg["corrector"], seed=cfg["seed"],
                    replicas=cfg["replicas"], record_every=cfg["record_every"],
                    norm_s=tuple(cfg["norm_s"]), besov_p=float(cfg["besov_p"]))
    u0 = initial_field(grid, cfg["u0"], d if vector else 1)
    tr = simulate(sim, u0)
    rep = ExperimentReport(command, cfg)
    n = tr.norm(sim.energy_exponent)
    rep.rows = [{"replica": r, "final_norm": float(n[-1, r]),
                 "max_rel_change": float(abs(n[:, r] / n[0, r] - 1).max()) if n[0, r] > 0 else 0.0,
                 "guard_tripped": bool(tr.tripped[r])} for r in range(sim.replicas)]
    if sim.scheme == "strat_midpoint" and sim.kappa == 0 and not sim.nonlinear and n[0].min() > 0:
        drift = float(abs(n / n[0] - 1).max())
        rep.criteria.append(check("conservation_drift", drift, "<=", 1e-6))
    if tr.energy_residual is not None and sim.scheme == "strat_midpoint":
        rep.criteria.append(check("energy_residual", float(abs(tr.energy_residual).max()), "<=", 1e-4))
    tables = {f"trajectory_r{r}": tr.to_csv(r) for r in range(sim.replicas)}
    extras = {"final_state.json": json.dumps(sp.dump_field(tr.final.with_coeffs(tr.final.coeffs[0])),
                                             sort_keys=True) + "\n"}
    return rep, {"csv": tables, "extra": extras}


def _run_limit(cfg: dict) -> tuple[ExperimentReport, dict]:
    grid = SpectralGrid(cfg["d"], cfg["K"])
    solver = cfg["solver"]
    rep = ExperimentReport("limit-solve", cfg)
    if solver == "heat":
        u0 = initial_field(grid, cfg["u0"], 1)
        n = int(round(cfg["T"] / cfg["dt"]))
        rows = []
        for i in range(0, n + 1, cfg["record_every"]):
            t = i * cfg["dt"]
            f = fractional_heat(u0, cfg["nu"], cfg["a"], t)
            rows.append({"t": t, "L2": sp.sobolev_norm(f, 0.0), "H1": sp.sobolev_norm(f, 1.0)})
        rep.rows = rows
        return rep, {"csv": {}, "extra": {}}
    u0 = initial_field(grid, cfg["u0"], cfg["d"])
    if solver == "hyperviscous":
        R = math.inf if cfg["cutoff_R"] is None else float(cfg["cutoff_R"])
        tr = hyperviscous_ns(u0, cfg["nu"], cfg["a"], cfg["kappa"], R, cfg["dt"], cfg["T"],
                             b=cfg["b"], cutoff_delta=cfg["cutoff_delta"],
                             coefficient=cfg["coefficient"], record_every=cfg["record_every"],
                             norm_s=(cfg["s"],))
        rep.rows = [{"sup_norm": float(tr.norm(cfg["s"]).max()), "tripped": bool(tr.tripped[0])}]
    else:
        tr, summ = damped_euler(u0, cfg["nu"], cfg["s"], cfg["dt"], cfg["T"],
                                record_every=cfg["record_every"])
        rep.rows = [{"monotone": summ["monotone"], "riccati_C": summ["riccati_C"],
                     "sup_norm": summ["sup_norm"]}]
    return rep, {"csv": {"trajectory_r0": tr.to_csv(0)}, "extra": {}}


def _write_outputs(out: Path, rep: ExperimentReport, produced: dict | None) -> list[str]:
    files = {"report.json": rep.to_json()}
    if produced is None:
        for name in rep.tables():
            files[f"{name}.csv"] = rep.to_csv(name)
    else:
        files["rows.csv"] = rep.to_csv("rows")
        for name, text in produced["csv"].items():
            files[f"{name}.csv"] = text
        files.update(produced["extra"])
    for name, text in files.items():
        with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return sorted(files)


def _prepare_out(path: str | None) -> Path:
    out = Path(path or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    return out


_HELP = {
    "corrector-check": "corrector convergence to its limit, or match with brute force",
    "qv-check": "stationary quadratic variation by exact sums and Monte Carlo",
    "martingale-check": "decay of the martingale part in N",
    "scaling-limit": "path distance to the fractional heat flow",
    "blowup-stats": "noisy Navier-Stokes runs against the hyperviscous limit",
    "smr-check": "N-uniformity of trace and integral norms",
    "stationarity-check": "preservation of the white-noise law",
    "limit-solve": "deterministic limit solvers, or their envelope checks",
    "simulate-scalar": "noisy linear scalar equation",
    "simulate-ns": "noisy Navier-Stokes in 3D",
    "simulate-euler": "noisy Euler in 3D",
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ptnoise", description="Simulations and verification experiments for "
                                    "equations driven by pseudo-transport noise.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        p.add_argument("--quiet", action="store_true", help="suppress progress and result lines")
    return ap


def dispatch(argv: list[str] | None) -> int:
    """Run one subcommand and return its exit status."""
    ap = _parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        ap.print_usage(sys.stderr)
        return 2
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    say = (lambda *a: None) if args.quiet else (lambda *a: print(*a, file=sys.stderr))
    try:
        doc = {}
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    doc = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise UsageError("--seed must be an unsigned 64-bit integer")
            doc["seed"] = args.seed
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.command == "limit-solve" and "solver" not in doc and "experiment" not in doc:
            doc["experiment"] = COMMANDS["limit-solve"][1]
        cfg, errors, warnings = validate_config(doc, args.command)
        for w in warnings:
            say(f"warning: {w}")
        if errors:
            raise UsageError("invalid config:\n  " + "\n  ".join(errors))
        out = _prepare_out(args.out)
    except UsageError as exc:
        print(f"ptnoise: {exc}", file=sys.stderr)
        return 2

    sp.FFT_WORKERS = args.threads
    manifest = RunManifest(args.command, config_digest(cfg), int(cfg.get("seed", 0)),
                           __version__, _now())
    try:
        if "experiment" in cfg and cfg["experiment"] in EXPERIMENTS:
            rep, produced = run_experiment(cfg), None
        elif args.command == "limit-solve":
            rep, produced = _run_limit(cfg)
        else:
            rep, produced = _run_simulation(args.command, cfg)
    except (IntegratorError, ValueError) as exc:
        manifest.finished, manifest.status = _now(), f"error: {exc}"
        (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
        print(f"ptnoise: run failed: {exc}", file=sys.stderr)
        return 1
    manifest.outputs = _write_outputs(out, rep, produced) + ["manifest.json"]
    manifest.finished = _now()
    manifest.status = "pass" if rep.passed else "fail"
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    for line in rep.lines():
        say(line)
    return 0 if rep.passed else 1


def main() -> None:
    sys.exit(dispatch(None))


if __name__ == "__main__":
    main()
