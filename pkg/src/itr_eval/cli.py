"""``itr-eval`` command-line front end.

Subcommands
-----------
evaluate   fixed-rule estimates (ATE, PAV, PAPE and rule differences)
crossfit   cross-fitted PAV and PAPE for a built-in learning algorithm
simulate   run a Monte Carlo scenario and write a summary and a tidy CSV

Exit codes: 0 success, 2 validation error, 3 every variance clipped,
4 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .core import ExperimentDataset, TreatmentRule, column_rule, constant_rule, linear_rule, threshold_rule, validate_dataset
from .crossfit import (
    BaselineRiskScorer,
    ConstantScorer,
    FixedRuleAlgorithm,
    ScoringAlgorithm,
    StratumCATELearner,
    cross_fit_pape,
    cross_fit_pav,
    make_folds,
)
from .dgp import COVARIATE_NAMES, DgpSpec, oracle_cate_rule
from .errors import ConfigError, Indivisible, ITREvalError, ValidationError
from .estimators import (
    CLIPPED,
    estimate_ate,
    estimate_pape,
    estimate_pape_difference,
    estimate_pav,
    estimate_pav_difference,
)
from .montecarlo import SCENARIOS, monte_carlo
from .shift import diagnose_dataset

EXIT_OK, EXIT_VALIDATION, EXIT_CLIPPED, EXIT_CONFIG = 0, 2, 3, 4
NOISE_NOTE = "simulated outcomes carry additive Gaussian noise (noise_sd in the config)"
COVARIATE_NOTE = "covariates are synthetic: continuous ones standard normal, x4 and x42 uniform on {-1, +1}"


class ParseError(ITREvalError):
    code = "PARSE"

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message, line=line, column=column)
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvaluationReport:
    """Serializable result of one command.

    ``to_json`` is key-sorted and stable, so equal reports are
    byte-identical and ``from_json(r.to_json()) == r``.
    """

    metadata: Dict[str, object]
    estimates: Dict[str, dict] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    extra: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "estimates": self.estimates,
            "warnings": self.warnings,
            "notes": self.notes,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        d = json.loads(text)
        return cls(d["metadata"], d["estimates"], d["warnings"], d["notes"], d.get("extra", {}))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def config_hash(payload: dict) -> str:
    blob = json.dumps(_jsonable(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _metadata(command: str, payload: dict, seed, timestamp: bool) -> dict:
    meta = {
        "command": command,
        "config_hash": config_hash(payload),
        "seed": seed,
        "version": __version__,
        "inputs": payload,
    }
    if timestamp:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return meta


def _collect_warnings(estimates: Dict[str, dict]) -> List[str]:
    out = []
    for name in sorted(estimates):
        for flag in estimates[name].get("flags", []):
            out.append(f"{name}: {flag}")
    return out


def _all_clipped(estimates: Dict[str, dict]) -> bool:
    with_var = [e for e in estimates.values() if e.get("std_error") is not None or CLIPPED in e.get("flags", [])]
    return bool(with_var) and all(CLIPPED in e.get("flags", []) for e in with_var)


# ---------------------------------------------------------------------------
# CSV ingestion


def read_dataset(
    path_or_buffer, outcome: str = "outcome", treatment: str = "treatment"
) -> ExperimentDataset:
    """Parse a comma-separated file with a header row.

    ``outcome`` and ``treatment`` name the required columns; every other
    column is a numeric covariate, in file order. Errors report the
    1-based file line.
    """
    if isinstance(path_or_buffer, (str, os.PathLike)):
        with open(path_or_buffer, newline="", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = path_or_buffer.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("file is empty", 1) from None
    for col in (outcome, treatment):
        if col not in header:
            raise ParseError(f"missing required column {col!r}", 1, col)
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", 1)
    io_, it = header.index(outcome), header.index(treatment)
    cov_idx = [j for j in range(len(header)) if j not in (io_, it)]
    names = tuple(header[j] for j in cov_idx)
    ys, ts, xs = [], [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
        vals = []
        for j, cell in enumerate(row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(f"column {header[j]!r}: cannot parse {cell!r} as a number", line, header[j]) from None
        ys.append(vals[io_])
        ts.append(vals[it])
        xs.append([vals[j] for j in cov_idx])
    if not ys:
        raise ParseError("no data rows", 2)
    x = np.asarray(xs, dtype=float).reshape(len(ys), len(cov_idx))
    data = ExperimentDataset(x, np.asarray(ts, dtype=float), np.asarray(ys, dtype=float), names)
    return validate_dataset(data)


# ---------------------------------------------------------------------------
# rule and algorithm specs


def _column_index(names: Sequence[str], name: str, what: str) -> int:
    if name in names:
        return list(names).index(name)
    raise ConfigError(f"unknown covariate {name!r}; available: {list(names)}", what)


def parse_rule(spec: str, names: Sequence[str]) -> TreatmentRule:
    """Rule from a command-line spec.

    ``constant-1`` / ``constant-0``
        treat everyone / no one.
    ``column:<name>``
        a precomputed 0/1 assignment stored in covariate column <name>.
    ``threshold:<name>:<c>``
        treat when covariate <name> exceeds c.
    ``linear:<file.json>``
        treat when intercept + sum_j coef_j x_j > 0; the file holds
        ``{"intercept": b, "coef": {"<name>": value, ...}}``. Unlisted
        covariates get coefficient 0.
    ``oracle-cate``
        the true-CATE rule of the simulation model; needs the eight
        simulation covariates x4, x17, ... as columns.
    """
    if spec in ("constant-1", "constant-0"):
        return constant_rule(int(spec[-1]))
    kind, _, rest = spec.partition(":")
    if kind == "column" and rest:
        return column_rule(_column_index(names, rest, "rule"), f"column:{rest}")
    if kind == "threshold" and rest:
        name, _, c = rest.rpartition(":")
        try:
            cut = float(c)
        except ValueError:
            raise ConfigError(f"bad threshold {c!r}", "rule") from None
        rule = threshold_rule(_column_index(names, name, "rule"), cut)
        return TreatmentRule(rule.assign, f"{name}>{cut:g}")
    if kind == "linear" and rest:
        try:
            with open(rest, encoding="utf-8") as fh:
                spec_d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read coefficient file: {exc}", "rule") from None
        coef = np.zeros(len(names))
        given = spec_d.get("coef", {})
        if not isinstance(given, dict):
            raise ConfigError("'coef' must map covariate names to numbers", "rule.coef")
        for name, value in given.items():
            coef[_column_index(names, name, f"rule.coef.{name}")] = float(value)
        return linear_rule(coef, float(spec_d.get("intercept", 0.0)), f"linear:{os.path.basename(rest)}")
    if spec == "oracle-cate":
        idx = [_column_index(names, c, "rule") for c in COVARIATE_NAMES]
        base = oracle_cate_rule()
        return TreatmentRule(lambda x: base(x[:, idx]), "oracle-cate")
    raise ConfigError(
        f"unknown rule spec {spec!r}; use constant-1, constant-0, column:<name>, "
        "threshold:<name>:<c>, linear:<file.json> or oracle-cate",
        "rule",
    )


def parse_algorithm(spec: str, names: Sequence[str]) -> ScoringAlgorithm:
    """Algorithm from a command-line spec.

    ``constant-1`` / ``constant-0``, ``fixed:<rule spec>``,
    ``stratum:<name>:<c1,c2,...>`` (difference in means within strata cut
    at the listed points) and ``baseline-risk`` (treat units with above
    median predicted control outcome).
    """
    if spec == "constant-1":
        return ConstantScorer(1.0)
    if spec == "constant-0":
        return ConstantScorer(-1.0)
    if spec == "baseline-risk":
        return BaselineRiskScorer()
    kind, _, rest = spec.partition(":")
    if kind == "fixed" and rest:
        return FixedRuleAlgorithm(parse_rule(rest, names))
    if kind == "stratum" and rest:
        name, _, cuts = rest.partition(":")
        try:
            cutpoints = [float(c) for c in cuts.split(",")] if cuts else [0.0]
        except ValueError:
            raise ConfigError(f"bad cutpoints {cuts!r}", "algo") from None
        return StratumCATELearner(_column_index(names, name, "algo"), cutpoints)
    raise ConfigError(
        f"unknown algorithm spec {spec!r}; use constant-1, constant-0, fixed:<rule>, "
        "stratum:<name>:<cuts> or baseline-risk",
        "algo",
    )


# ---------------------------------------------------------------------------
# commands


def cmd_evaluate(
    data_path: str,
    rule: str,
    rule2: Optional[str] = None,
    shift: Optional[float] = None,
    seed: int = 0,
    outcome: str = "outcome",
    treatment: str = "treatment",
    timestamp: bool = False,
) -> EvaluationReport:
    """Fixed-rule estimates with 95% normal intervals.

    ``shift`` adds a constant to every outcome before estimation and adds
    shift diagnostics (kappas and the variance-minimising shift) to the
    report. The seed is recorded for replay; evaluation itself is not
    random.
    """
    data = read_dataset(data_path, outcome, treatment)
    names = data.covariate_names or ()
    f = parse_rule(rule, names)
    g = parse_rule(rule2, names) if rule2 else None
    payload = {"data_sha256": _file_digest(data_path), "rule": rule, "rule2": rule2, "shift": shift}
    if shift:
        data = data.shifted(float(shift))
    est = {
        "ATE": estimate_ate(data).to_dict(),
        "PAV": estimate_pav(data, f).to_dict(),
        "PAPE": estimate_pape(data, f).to_dict(),
    }
    for k in ("PAV", "PAPE"):
        est[k]["rule"] = f.label
    if g is not None:
        est["PAV_rule2"] = {**estimate_pav(data, g).to_dict(), "rule": g.label}
        est["PAPE_rule2"] = {**estimate_pape(data, g).to_dict(), "rule": g.label}
        est["PAV_DIFF"] = {**estimate_pav_difference(data, f, g).to_dict(), "rules": [f.label, g.label]}
        est["PAPE_DIFF"] = {**estimate_pape_difference(data, f, g).to_dict(), "rules": [f.label, g.label]}
    extra: Dict[str, object] = {}
    if shift is not None:
        try:
            extra["shift_diagnostics"] = diagnose_dataset(data, f).to_dict()
        except ITREvalError as exc:
            extra["shift_diagnostics"] = {"error": str(exc)}
    report = EvaluationReport(_metadata("evaluate", payload, seed, timestamp), est, _collect_warnings(est), [], extra)
    if shift:
        report.notes.append(f"outcomes shifted by {float(shift):g} before estimation")
    return report


def cmd_crossfit(
    data_path: str,
    algo: str,
    k: int,
    seed: int = 0,
    outcome: str = "outcome",
    treatment: str = "treatment",
    workers: int = 1,
    timestamp: bool = False,
) -> EvaluationReport:
    """Cross-fitted PAV and PAPE with per-fold tables."""
    data = read_dataset(data_path, outcome, treatment)
    names = data.covariate_names or ()
    algorithm = parse_algorithm(algo, names)
    plan = make_folds(data, k, seed)
    pav = cross_fit_pav(data, algorithm, plan, seed, workers)
    pape = cross_fit_pape(data, algorithm, plan, seed, workers)
    est = {"PAV_CROSSFIT": pav.to_dict(), "PAPE_CROSSFIT": pape.to_dict()}
    payload = {"data_sha256": _file_digest(data_path), "algo": algo, "k": k}
    notes = ["covariance-of-training term set to 0; the standard error ignores training randomness"]
    extra = {"folds": {"K": plan.K, "m": plan.m, "m1": plan.m1, "m0": plan.m0, "assignment": plan.assignment}}
    return EvaluationReport(_metadata("crossfit", payload, seed, timestamp), est, _collect_warnings(est), notes, extra)


# --- simulation config

CONFIG_DEFAULTS = {
    "scenario": None,
    "seed": 0,
    "replications": 10_000,
    "population_size": 1_000_000,
    "noise_sd": 1.0,
    "n": None,
    "delta": None,
    "points": 11,
    "center": True,
    "rule": "oracle-cate",
    "chunk": 5000,
    "workers": 1,
    "backend": "auto",
    "k": [2, 4],
    "draws": 1000,
    "learner_column": "x29",
    "learner_cutpoints": [-0.5, 0.0, 0.5],
}
DEFAULT_N = {
    "shift_curve": [100],
    "ex_ante_vs_ex_post": [100, 200, 300, 400, 500],
    "variance_fidelity": [200],
    "crossfit_validation": [40, 80],
}


def _load_config_text(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    if path.endswith(".json"):
        try:
            data = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"invalid TOML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a table/object")
    return data


def _int(v, path, lo=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", path)
    if lo is not None and v < lo:
        raise ConfigError(f"must be >= {lo}, got {v}", path)
    return v


def _num(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {v!r}", path)
    return float(v)


def _int_list(v, path, lo) -> List[int]:
    if isinstance(v, int) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a non-empty list of integers", path)
    return [_int(x, f"{path}[{i}]", lo) for i, x in enumerate(v)]


def validate_config(raw: dict) -> dict:
    """Fill defaults and check types; errors name the offending field path."""
    unknown = sorted(set(raw) - set(CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown}", f"config.{unknown[0]}")
    cfg = {**CONFIG_DEFAULTS, **raw}
    if cfg["scenario"] not in SCENARIOS:
        raise ConfigError(f"must be one of {list(SCENARIOS)}, got {cfg['scenario']!r}", "config.scenario")
    scen = cfg["scenario"]
    cfg["seed"] = _int(cfg["seed"], "config.seed", 0)
    cfg["replications"] = _int(cfg["replications"], "config.replications", 0)
    cfg["population_size"] = _int(cfg["population_size"], "config.population_size", 1)
    cfg["noise_sd"] = _num(cfg["noise_sd"], "config.noise_sd")
    if cfg["noise_sd"] < 0:
        raise ConfigError("must be >= 0", "config.noise_sd")
    cfg["n"] = _int_list(DEFAULT_N[scen] if cfg["n"] is None else cfg["n"], "config.n", 4)
    if scen in ("ex_ante_vs_ex_post", "variance_fidelity"):
        for i, n in enumerate(cfg["n"]):
            if n % 4:
                raise ConfigError(f"must be divisible by 4, got {n}", f"config.n[{i}]")
    if cfg["delta"] is not None:
        if not isinstance(cfg["delta"], list) or not cfg["delta"]:
            raise ConfigError("expected a non-empty list of numbers", "config.delta")
        cfg["delta"] = [_num(d, f"config.delta[{i}]") for i, d in enumerate(cfg["delta"])]
    cfg["points"] = _int(cfg["points"], "config.points", 2)
    if not isinstance(cfg["center"], bool):
        raise ConfigError("expected true or false", "config.center")
    cfg["chunk"] = _int(cfg["chunk"], "config.chunk", 1)
    cfg["workers"] = _int(cfg["workers"], "config.workers", 1)
    if cfg["backend"] not in ("auto", "numba", "numpy"):
        raise ConfigError("must be auto, numba or numpy", "config.backend")
    cfg["k"] = _int_list(cfg["k"], "config.k", 2)
    cfg["draws"] = _int(cfg["draws"], "config.draws", 2)
    if cfg["learner_column"] not in COVARIATE_NAMES:
        raise ConfigError(f"must be one of {list(COVARIATE_NAMES)}", "config.learner_column")
    if not isinstance(cfg["learner_cutpoints"], list):
        raise ConfigError("expected a list of numbers", "config.learner_cutpoints")
    cfg["learner_cutpoints"] = [_num(c, f"config.learner_cutpoints[{i}]") for i, c in enumerate(cfg["learner_cutpoints"])]
    if not isinstance(cfg["rule"], str):
        raise ConfigError("expected a rule spec string", "config.rule")
    if scen == "crossfit_validation":
        for i, n in enumerate(cfg["n"]):
            for j, k in enumerate(cfg["k"]):
                if n % k or (n // 2) % k:
                    raise ConfigError(f"K={k} must divide n={n} and n/2", f"config.k[{j}]")
    return cfg


def write_tidy_csv(path: str, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_csv_cell(r[c]) for c in columns])


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def cmd_simulate(config_path: str, out_dir: str, timestamp: bool = False) -> Tuple[EvaluationReport, str]:
    """Run the configured scenario; returns the report and the CSV path."""
    cfg = validate_config(_load_config_text(config_path))
    scen = cfg["scenario"]
    backend = None if cfg["backend"] == "auto" else cfg["backend"]
    rule = parse_rule(cfg["rule"], COVARIATE_NAMES)
    kw = dict(chunk=cfg["chunk"], workers=cfg["workers"], backend=backend)
    if scen == "shift_curve":
        opts = dict(n=cfg["n"][0], grid=cfg["delta"], points=cfg["points"], center=cfg["center"], **kw)
    elif scen == "ex_ante_vs_ex_post":
        opts = dict(n_grid=cfg["n"], **kw)
    elif scen == "variance_fidelity":
        opts = dict(n=cfg["n"][0], **kw)
    else:
        learner = StratumCATELearner(COVARIATE_NAMES.index(cfg["learner_column"]), cfg["learner_cutpoints"])
        opts = dict(learner=learner, n_grid=cfg["n"], k_grid=cfg["k"], draws=cfg["draws"], **kw)
    result = monte_carlo(
        DgpSpec(noise_sd=cfg["noise_sd"]),
        scen,
        cfg["replications"],
        cfg["seed"],
        population_size=cfg["population_size"],
        rule=rule,
        **opts,
    )
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{scen}.csv")
    write_tidy_csv(csv_path, result.columns, result.grid)
    report = EvaluationReport(
        _metadata("simulate", cfg, cfg["seed"], timestamp),
        {},
        [],
        [NOISE_NOTE, COVARIATE_NOTE],
        {"summary": result.summary, "grid": result.grid, "csv": os.path.basename(csv_path)},
    )
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    return report, csv_path


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="itr-eval", description="Evaluate individualized treatment rules from experimental data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="CSV with a header row")
        sp.add_argument("--outcome-column", default="outcome")
        sp.add_argument("--treatment-column", default="treatment")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        sp.add_argument("--timestamp", action="store_true", help="record the wall-clock time in the report")

    ev = sub.add_parser("evaluate", help="fixed-rule ATE, PAV and PAPE estimates")
    data_args(ev)
    ev.add_argument("--rule", required=True, help="rule spec, e.g. constant-1 or column:assign")
    ev.add_argument("--rule2", help="second rule; adds PAV and PAPE differences")
    ev.add_argument("--shift", type=float, help="add this constant to every outcome first")

    cf = sub.add_parser("crossfit", help="cross-fitted PAV and PAPE")
    data_args(cf)
    cf.add_argument("--algo", required=True, help="algorithm spec, e.g. stratum:x1:0")
    cf.add_argument("--k", type=int, required=True, help="number of folds")
    cf.add_argument("--workers", type=int, default=1)

    sm = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    sm.add_argument("--config", required=True, help="TOML or JSON scenario file")
    sm.add_argument("--out-dir", required=True)
    sm.add_argument("--timestamp", action="store_true")
    return p


def _emit(report: EvaluationReport, out: Optional[str]) -> None:
    text = report.to_json()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evaluate":
            report = cmd_evaluate(
                args.data, args.rule, args.rule2, args.shift, args.seed,
                args.outcome_column, args.treatment_column, args.timestamp,
            )
        elif args.command == "crossfit":
            report = cmd_crossfit(
                args.data, args.algo, args.k, args.seed,
                args.outcome_column, args.treatment_column, args.workers, args.timestamp,
            )
        else:
            report, csv_path = cmd_simulate(args.config, args.out_dir, args.timestamp)
            print(f"wrote {csv_path} and summary.json", file=sys.stderr)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Indivisible as exc:
        hint = f" (try --k {exc.suggestion})" if exc.suggestion else ""
        print(f"error: {exc}{hint}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ITREvalError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _emit(report, getattr(args, "out", None))
    return EXIT_CLIPPED if _all_clipped(report.estimates) else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
