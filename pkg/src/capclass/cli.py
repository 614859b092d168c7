"""Command-line experiment harness.

Subcommands:

* ``run --config cfg.json --out dir`` executes a configured experiment and
  writes ``results.csv`` (one row per evaluated cell and variant),
  ``summary.json`` (per-cell aggregates), ``meta.json`` (the fully resolved
  config, so results are self-describing) and ``timings.csv``. Result files
  are byte-identical across reruns of the same config; measured wall times
  live only in ``timings.csv``, whose content is allowed to vary.
* ``summarize --in results.csv`` recomputes the aggregate summary from a
  results file.
* ``oracle-1d --pi0 P --b B --mu M`` prints the analytic one-dimensional
  oracle: gamma-star, the optimal region, and the tangency shift mu_c.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.

Every (method, b, pi0, repetition) cell runs on its own derived seed;
within a cell the variants (classical / capacity / smote) share the same
data draw and, where the rule family allows it, the same fitted scorer, so
capacity-vs-classical comparisons are paired.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import forest as forest_mod
from . import ingest, kde, knn, smote, svm, synth
from .calib import calibrate_threshold
from .core import (CapacitySpec, DataFormatError, InsufficientDataError,
                   InvalidConfigError, LabeledDataset, NumericalError,
                   SplitPlan, derive_seed, split)
from .metrics import MetricReport, evaluate

EXPERIMENTS = ("sim1d", "sim2d", "real")
METHODS = ("kde", "knn", "knn_posthoc", "svm", "forest")

RESULT_COLUMNS = ("experiment_id", "method", "variant", "b", "pi0",
                  "repetition", "seed", "m_hat", "sensitivity", "specificity",
                  "accuracy", "positive_rate", "tau_or_gamma", "wall_time_ms")

_METHOD_DEFAULTS = {
    "kde": {"bandwidth": None, "kernel": "gaussian"},
    "knn": {"k_grid": None, "a0_grid": None},
    "knn_posthoc": {"k": None},
    "svm": {"kernel": "rbf", "c": 1.0, "gamma": None, "solver_tol": 1e-3},
    "forest": {"b_trees": 200, "mtry": None, "min_leaf": 5, "max_depth": 20,
               "bootstrap": True},
}


@dataclass(frozen=True)
class SmoteSettings:
    enabled: bool = False
    k_neighbors: int = 5
    factor: float | None = 4.0
    schedule: tuple | None = None  # ((pi0, factor), ...) knots

    def to_dict(self) -> dict:
        return {"enabled": self.enabled, "k_neighbors": self.k_neighbors,
                "factor": self.factor,
                "schedule": None if self.schedule is None
                else [list(k) for k in self.schedule]}

    def config(self, seed: int) -> smote.SmoteConfig:
        schedule = None
        if self.schedule is not None:
            schedule = smote.SmoteSchedule(
                knots=tuple((p, f) for p, f in self.schedule),
                factor_max=max(f for _, f in self.schedule))
        return smote.SmoteConfig(k_neighbors=self.k_neighbors,
                                 factor=self.factor, schedule=schedule,
                                 seed=seed)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    b_values: tuple = (1.0, 2.0)
    pi0_values: tuple = (0.005, 0.01, 0.02, 0.05, 0.1)
    repetitions: int = 1
    methods: tuple = ()            # ((name, options-dict), ...) in run order
    mu_values: tuple = ()          # sim1d sweep
    n0: int = 100                  # sim2d minority count
    split_fractions: tuple = (0.5, 0.25, 0.25)
    data_path: str | None = None   # real
    csv_schema: dict | None = None
    n_train: int = 8000
    n_test: int = 10000
    smote: SmoteSettings = field(default_factory=SmoteSettings)
    write_manifests: bool = False

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "b_values": list(self.b_values),
            "pi0_values": list(self.pi0_values),
            "repetitions": self.repetitions,
            "methods": {name: dict(opts) for name, opts in self.methods},
            "mu_values": list(self.mu_values),
            "n0": self.n0,
            "split_fractions": list(self.split_fractions),
            "data_path": self.data_path,
            "csv_schema": self.csv_schema,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "smote": self.smote.to_dict(),
            "write_manifests": self.write_manifests,
        }


def _fail(path: str, message: str):
    raise InvalidConfigError(f"{path}: {message}")


def _require_type(value, types, path, what):
    if not isinstance(value, types) or isinstance(value, bool) and bool not in (
            types if isinstance(types, tuple) else (types,)):
        _fail(path, f"expected {what}, got {value!r}")
    return value


def _number_list(value, path, positive=True):
    if not isinstance(value, (list, tuple)) or not value:
        _fail(path, f"expected a nonempty list of numbers, got {value!r}")
    out = []
    for i, v in enumerate(value):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            _fail(f"{path}[{i}]", f"expected a number, got {v!r}")
        if positive and v <= 0:
            _fail(f"{path}[{i}]", f"must be positive, got {v!r}")
        out.append(float(v))
    return tuple(out)


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate a parsed JSON document into an ExperimentConfig."""
    if not isinstance(doc, dict):
        _fail("<root>", "config must be a JSON object")
    unknown = set(doc) - {
        "experiment", "seed", "b_values", "pi0_values", "repetitions",
        "methods", "mu_values", "n0", "split_fractions", "data_path",
        "csv_schema", "n_train", "n_test", "smote", "write_manifests"}
    if unknown:
        _fail(sorted(unknown)[0], "unknown config field")
    experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        _fail("experiment", f"must be one of {EXPERIMENTS}, got {experiment!r}")

    kwargs = {"experiment": experiment}
    if "seed" in doc:
        kwargs["seed"] = _require_type(doc["seed"], int, "seed", "an integer")
    if "b_values" in doc:
        kwargs["b_values"] = _number_list(doc["b_values"], "b_values")
    if "pi0_values" in doc:
        pi0s = _number_list(doc["pi0_values"], "pi0_values")
        for i, p in enumerate(pi0s):
            if not (0 < p < 1):
                _fail(f"pi0_values[{i}]", f"must be in (0, 1), got {p}")
        kwargs["pi0_values"] = pi0s
    if "repetitions" in doc:
        reps = _require_type(doc["repetitions"], int, "repetitions", "an integer")
        if reps < 1:
            _fail("repetitions", f"must be >= 1, got {reps}")
        kwargs["repetitions"] = reps
    if "mu_values" in doc:
        kwargs["mu_values"] = _number_list(doc["mu_values"], "mu_values",
                                           positive=False)
    if "n0" in doc:
        n0 = _require_type(doc["n0"], int, "n0", "an integer")
        if n0 < 1:
            _fail("n0", "must be >= 1")
        kwargs["n0"] = n0
    if "split_fractions" in doc:
        fr = _number_list(doc["split_fractions"], "split_fractions")
        if len(fr) != 3 or abs(sum(fr) - 1.0) > 1e-9:
            _fail("split_fractions", f"must be three fractions summing to 1, got {fr}")
        kwargs["split_fractions"] = fr
    if "data_path" in doc and doc["data_path"] is not None:
        kwargs["data_path"] = _require_type(doc["data_path"], str, "data_path",
                                            "a string path")
    if "csv_schema" in doc and doc["csv_schema"] is not None:
        sch = doc["csv_schema"]
        if not isinstance(sch, dict):
            _fail("csv_schema", "must be an object")
        bad = set(sch) - {"label_column", "feature_columns", "minority_values",
                          "majority_values", "has_header"}
        if bad:
            _fail(f"csv_schema.{sorted(bad)[0]}", "unknown schema field")
        kwargs["csv_schema"] = sch
    for key in ("n_train", "n_test"):
        if key in doc:
            v = _require_type(doc[key], int, key, "an integer")
            if v < 2:
                _fail(key, f"must be >= 2, got {v}")
            kwargs[key] = v
    if "write_manifests" in doc:
        kwargs["write_manifests"] = bool(doc["write_manifests"])

    if "smote" in doc:
        sm = doc["smote"]
        if not isinstance(sm, dict):
            _fail("smote", "must be an object")
        bad = set(sm) - {"enabled", "k_neighbors", "factor", "schedule"}
        if bad:
            _fail(f"smote.{sorted(bad)[0]}", "unknown smote field")
        schedule = None
        if sm.get("schedule") is not None:
            knots = sm["schedule"]
            if not isinstance(knots, list) or not knots:
                _fail("smote.schedule", "expected a nonempty list of [pi0, factor]")
            schedule = tuple((float(k[0]), float(k[1])) for k in knots)
        factor = sm.get("factor", 4.0 if schedule is None else None)
        if factor is not None:
            if not isinstance(factor, (int, float)) or factor < 1:
                _fail("smote.factor", f"must be a number >= 1, got {factor!r}")
            factor = float(factor)
        kwargs["smote"] = SmoteSettings(
            enabled=bool(sm.get("enabled", False)),
            k_neighbors=int(sm.get("k_neighbors", 5)),
            factor=factor, schedule=schedule)

    methods_doc = doc.get("methods", {})
    if not isinstance(methods_doc, dict):
        _fail("methods", "must be an object mapping method name to options")
    methods = []
    for name, opts in methods_doc.items():
        if name not in METHODS:
            _fail(f"methods.{name}", f"unknown method, expected one of {METHODS}")
        if opts is None:
            opts = {}
        if not isinstance(opts, dict):
            _fail(f"methods.{name}", "options must be an object")
        merged = dict(_METHOD_DEFAULTS[name])
        for k, v in opts.items():
            if k not in merged:
                _fail(f"methods.{name}.{k}", "unknown option")
            merged[k] = v
        methods.append((name, merged))
    kwargs["methods"] = tuple(methods)

    cfg = ExperimentConfig(**kwargs)
    _validate_experiment(cfg)
    return cfg


def _validate_experiment(cfg: ExperimentConfig) -> None:
    if cfg.experiment == "sim1d":
        if not cfg.mu_values:
            _fail("mu_values", "sim1d requires a mu grid")
    if cfg.experiment == "sim2d":
        names = [n for n, _ in cfg.methods]
        if not names:
            _fail("methods", "sim2d requires the kde method")
        if set(names) - {"kde"}:
            _fail("methods", "sim2d supports only the kde plug-in method")
    if cfg.experiment == "real":
        if not cfg.methods:
            _fail("methods", "real experiments need at least one method")
        if cfg.data_path is None:
            _fail("data_path", "real experiments require a data file")
    for b in cfg.b_values:
        for pi0 in cfg.pi0_values:
            if b > 1.0 / pi0:
                _fail("b_values", f"b={b} exceeds 1/pi0 for pi0={pi0}")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InvalidConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"config is not valid JSON: {e}") from None
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# result rows


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        if math.isnan(value):
            return "NA"
        return repr(value)
    return str(value)


@dataclass
class ResultRow:
    experiment_id: str
    method: str
    variant: str
    b: float
    pi0: float
    repetition: int
    seed: int
    m_hat: float
    sensitivity: float
    specificity: float
    accuracy: float
    positive_rate: float
    tau_or_gamma: float
    wall_time_ms: float = 0.0  # kept 0 in results.csv; see timings.csv

    def csv_values(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in RESULT_COLUMNS]


def _report_row(experiment_id, method, variant, b, pi0, rep, seed,
                report: MetricReport, tau_or_gamma) -> ResultRow:
    return ResultRow(experiment_id=experiment_id, method=method,
                     variant=variant, b=b, pi0=pi0, repetition=rep, seed=seed,
                     m_hat=report.m_hat, sensitivity=report.sensitivity,
                     specificity=report.specificity, accuracy=report.accuracy,
                     positive_rate=report.positive_rate,
                     tau_or_gamma=float(tau_or_gamma))


# ---------------------------------------------------------------------------
# experiment kinds


def _run_sim1d(cfg: ExperimentConfig):
    rows = []
    for b in cfg.b_values:
        for pi0 in cfg.pi0_values:
            cap = CapacitySpec(b=b, pi0=pi0)
            for mu in cfg.mu_values:
                eid = f"sim1d[mu={mu:g}]"
                spec = synth.OneDimSpec(mu=mu, pi0=pi0)
                gamma, region = synth.analytic_gamma_star(spec, cap)
                met = synth.rule_metrics(spec, region, cap)
                rows.append(ResultRow(
                    eid, "analytic", "capacity", b, pi0, 0, cfg.seed,
                    met["m"], met["sensitivity"], met["specificity"],
                    met["accuracy"], met["positive_rate"], gamma))
                bayes = synth.analytic_bayes_region(spec)
                met_b = synth.rule_metrics(spec, bayes, cap)
                rows.append(ResultRow(
                    eid, "analytic", "classical", b, pi0, 0, cfg.seed,
                    met_b["m"], met_b["sensitivity"], met_b["specificity"],
                    met_b["accuracy"], met_b["positive_rate"],
                    spec.pi1 / spec.pi0))
    return rows, {}


def _sim2d_dataset(cfg, pi0, cell_seed):
    """Ellipse draw whose training part contains both classes."""
    spec = synth.default_ellipse_spec(cfg.n0, pi0)
    for attempt in range(100):
        data = synth.gen_ellipses(spec, derive_seed(cell_seed, "data", attempt))
        n = data.n
        n1 = int(round(cfg.split_fractions[0] * n))
        n2 = int(round(cfg.split_fractions[1] * n))
        plan = SplitPlan(n1, n2, n - n1 - n2)
        a1, a2, b_fold = split(data, plan, derive_seed(cell_seed, "split", attempt))
        if a2 is None or b_fold is None:
            raise InvalidConfigError(
                "split_fractions leave an empty calibration or test part")
        if 0 < (a1.labels == 0).sum() < a1.n and (b_fold.labels == 0).sum() > 0:
            return a1, a2, b_fold
    raise NumericalError("could not draw a sim2d dataset with both classes "
                         "in the training part")


def _run_sim2d(cfg: ExperimentConfig):
    rows = []
    timings = []
    opts = dict(cfg.methods)["kde"] if cfg.methods else dict(_METHOD_DEFAULTS["kde"])
    n3_by_pi0 = {}
    for b in cfg.b_values:
        for pi0 in cfg.pi0_values:
            cap = CapacitySpec(b=b, pi0=pi0)
            for rep in range(cfg.repetitions):
                cell_seed = derive_seed(cfg.seed, "sim2d", "kde", repr(float(b)),
                                        repr(float(pi0)), rep)
                t0 = time.perf_counter()
                a1, a2, b_fold = _sim2d_dataset(cfg, pi0, cell_seed)
                n3_by_pi0[repr(float(pi0))] = b_fold.n
                model = kde.fit_kde(a1, h=opts["bandwidth"], kernel=opts["kernel"])
                calib_scores = model.minority_score(a2.features)
                test_scores = model.minority_score(b_fold.features)
                tau = calibrate_threshold(calib_scores, cap)
                _assert_feasible(calib_scores, tau, cap)
                gamma_bayes = (1.0 - pi0) / pi0
                for variant, cut in (("capacity", tau), ("classical", gamma_bayes)):
                    pred = np.where(test_scores > cut, 0, 1)
                    rows.append(_report_row(
                        "sim2d", "kde", variant, b, pi0, rep, cell_seed,
                        evaluate(pred, b_fold.labels, cap), cut))
                timings.append(("sim2d", "kde", b, pi0, rep,
                                (time.perf_counter() - t0) * 1000.0))
    return rows, {"n3_by_pi0": n3_by_pi0, "timings": timings}


def _assert_rate(rate: float, cap: CapacitySpec) -> None:
    if rate > cap.budget + 1e-12:
        raise NumericalError(
            f"calibration feasibility violated: rate {rate} > budget {cap.budget}")


def _assert_feasible(calib_scores, tau, cap: CapacitySpec) -> None:
    _assert_rate(float((np.asarray(calib_scores) > tau).mean()), cap)


def _real_source(cfg: ExperimentConfig) -> LabeledDataset:
    schema = ingest.CsvSchema()
    if cfg.csv_schema:
        fields = dict(cfg.csv_schema)
        if "feature_columns" in fields and fields["feature_columns"] is not None:
            fields["feature_columns"] = tuple(fields["feature_columns"])
        for key in ("minority_values", "majority_values"):
            if key in fields:
                fields[key] = tuple(str(v) for v in fields[key])
        schema = ingest.CsvSchema(**fields)
    return ingest.load_csv(cfg.data_path, schema)


def _split_halves(train: LabeledDataset, seed: int):
    n1 = train.n // 2
    plan = SplitPlan(n1, train.n - n1, 0)
    a1, a2, _ = split(train, plan, seed)
    return a1, a2


def _scorer_variants(method, opts, a1, cap, cell_seed, smote_settings, pi0):
    """Fitted scorers keyed by variant for the threshold-family methods."""
    if method == "forest":
        fit = lambda data, s: forest_mod.fit_forest(
            data, b_trees=opts["b_trees"], mtry=opts["mtry"],
            min_leaf=opts["min_leaf"], max_depth=opts["max_depth"],
            bootstrap=opts["bootstrap"], seed=s)
        classical_cut = 0.5
    elif method == "svm":
        fit = lambda data, s: svm.fit_svm(
            data, kernel=opts["kernel"], c=opts["c"], gamma=opts["gamma"],
            solver_tol=opts["solver_tol"])
        classical_cut = 0.0
    elif method == "kde":
        fit = lambda data, s: kde.fit_kde(data, h=opts["bandwidth"],
                                          kernel=opts["kernel"])
        classical_cut = (1.0 - pi0) / pi0
    else:
        raise ValueError(method)
    scorers = {"base": fit(a1, derive_seed(cell_seed, method, "fit"))}
    if smote_settings.enabled:
        aug = smote.smote_augment(
            a1, smote_settings.config(derive_seed(cell_seed, "smote")), pi0=pi0)
        scorers["smote"] = fit(aug, derive_seed(cell_seed, method, "fit-smote"))
    return scorers, classical_cut


def _real_cell(method, opts, source, cap, pi0, rep, cfg, cell_seed):
    """All variant rows for one (method, b, pi0, repetition) cell."""
    draw = ingest.draw_train_test(source, pi0, cfg.n_train, cfg.n_test,
                                  derive_seed(cell_seed, "draw"))
    a1, a2 = _split_halves(draw.train, derive_seed(cell_seed, "halves"))
    test = draw.test
    out = []

    def emit(variant, pred, tau_or_gamma):
        out.append((variant, evaluate(pred, test.labels, cap), tau_or_gamma))

    if method in ("forest", "svm", "kde"):
        scorers, classical_cut = _scorer_variants(
            method, opts, a1, cap, cell_seed, cfg.smote, pi0)
        base = scorers["base"]
        calib_scores = base.minority_score(a2.features)
        test_scores = base.minority_score(test.features)
        tau = calibrate_threshold(calib_scores, cap)
        _assert_feasible(calib_scores, tau, cap)
        emit("capacity", np.where(test_scores > tau, 0, 1), tau)
        emit("classical", np.where(test_scores > classical_cut, 0, 1),
             classical_cut)
        if "smote" in scorers:
            sm_scores = scorers["smote"].minority_score(test.features)
            emit("smote", np.where(sm_scores > classical_cut, 0, 1),
                 classical_cut)
    elif method == "knn":
        k_grid = opts["k_grid"]
        a0_grid = opts["a0_grid"]
        model = knn.fit_capacity_knn(a1, a2, cap, k_grid=k_grid,
                                     a0_grid=a0_grid)
        _assert_rate(float((model.predict(a2.features) == 0).mean()), cap)
        emit("capacity", model.predict(test.features), model.a0)
        classical = knn.fit_classical_knn(a1, a2, k_grid=k_grid)
        emit("classical", classical.predict(test.features), classical.a0)
        if cfg.smote.enabled:
            aug = smote.smote_augment(
                a1, cfg.smote.config(derive_seed(cell_seed, "smote")), pi0=pi0)
            sm_model = knn.fit_classical_knn(aug, a2, k_grid=k_grid)
            emit("smote", sm_model.predict(test.features), sm_model.a0)
    elif method == "knn_posthoc":
        k = opts["k"] if opts["k"] is not None else knn.default_posthoc_k(a1.n)
        clf = knn.posthoc_knn(a1, a2, cap, k=k)
        _assert_feasible(clf.scores(a2.features), clf.tau, cap)
        emit("posthoc", clf.predict(test.features), clf.tau)
    else:
        raise ValueError(method)
    return out, draw


def _run_real(cfg: ExperimentConfig, out_dir: Path | None):
    source = _real_source(cfg)
    rows = []
    timings = []
    shrunk = []
    for method, opts in cfg.methods:
        for b in cfg.b_values:
            for pi0 in cfg.pi0_values:
                cap = CapacitySpec(b=b, pi0=pi0)
                for rep in range(cfg.repetitions):
                    cell_seed = derive_seed(cfg.seed, "real", method,
                                            repr(float(b)), repr(float(pi0)), rep)
                    t0 = time.perf_counter()
                    cell_rows, draw = _real_cell(method, opts, source, cap,
                                                 pi0, rep, cfg, cell_seed)
                    dt = (time.perf_counter() - t0) * 1000.0
                    timings.append(("real", method, b, pi0, rep, dt))
                    for variant, report, tog in cell_rows:
                        rows.append(_report_row("real", method, variant, b,
                                                pi0, rep, cell_seed, report, tog))
                    if draw.shrunk:
                        shrunk.append({"method": method, "b": b, "pi0": pi0,
                                       "repetition": rep,
                                       "test_size": draw.test_size})
                    if cfg.write_manifests and out_dir is not None:
                        mdir = out_dir / "manifests"
                        mdir.mkdir(exist_ok=True)
                        ingest.write_fold_manifest(
                            mdir / f"{method}_b{b:g}_pi{pi0:g}_r{rep}.json",
                            draw, extra={"seed": cell_seed})
    meta = {"n3": cfg.n_test, "shrunk_cells": shrunk, "timings": timings}
    return rows, meta


# ---------------------------------------------------------------------------
# output files


def _write_results(path: Path, rows: list[ResultRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_values())


def _write_timings(path: Path, timings) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("experiment_id", "method", "b", "pi0", "repetition",
                         "wall_time_ms"))
        for entry in timings:
            writer.writerow([_fmt(v) for v in entry])


def _quantile(sorted_vals, q):
    if not sorted_vals:
        return None
    return float(np.quantile(np.array(sorted_vals), q))


def summarize_rows(rows: list[dict], n3: int | None = None,
                   n3_by_pi0: dict | None = None) -> dict:
    """Aggregate parsed result rows per (method, variant, b, pi0) cell.

    Cells whose test positive rate exceeded the budget by more than three
    binomial standard errors are counted in ``over_budget``; undefined
    m_hat rows are excluded from aggregates and counted separately.
    """
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["method"], row["variant"], row["b"], row["pi0"])
        groups.setdefault(key, []).append(row)
    summary = {}
    for key in sorted(groups):
        method, variant, b, pi0 = key
        rs = groups[key]
        budget = float(b) * float(pi0)
        m_vals = sorted(r["m_hat"] for r in rs if not math.isnan(r["m_hat"]))
        cell_n3 = n3
        if n3_by_pi0 is not None:
            cell_n3 = n3_by_pi0.get(repr(float(pi0)), n3)
        over = None
        if cell_n3:
            tol = budget + 3.0 * math.sqrt(budget * (1 - budget) / cell_n3)
            over = sum(1 for r in rs if r["positive_rate"] > tol)
        entry = {
            "n_rows": len(rs),
            "n_undefined": sum(1 for r in rs if math.isnan(r["m_hat"])),
            "budget": budget,
            "m_hat_mean": float(np.mean(m_vals)) if m_vals else None,
            "m_hat_median": _quantile(m_vals, 0.5),
            "m_hat_iqr": ([_quantile(m_vals, 0.25), _quantile(m_vals, 0.75)]
                          if m_vals else None),
            "sensitivity_mean": _mean_defined(rs, "sensitivity"),
            "specificity_mean": _mean_defined(rs, "specificity"),
            "accuracy_mean": _mean_defined(rs, "accuracy"),
            "positive_rate_mean": _mean_defined(rs, "positive_rate"),
        }
        if over is not None:
            entry["over_budget"] = over
        summary[f"{method}/{variant}/b={b:g}/pi0={pi0:g}"] = entry
    return summary


def _mean_defined(rows, field_name):
    vals = [r[field_name] for r in rows if not math.isnan(r[field_name])]
    return float(np.mean(vals)) if vals else None


def _parse_results_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_COLUMNS:
            raise DataFormatError(f"{path}: unexpected results header")
        for rec in reader:
            row = dict(rec)
            for col in ("b", "pi0", "m_hat", "sensitivity", "specificity",
                        "accuracy", "positive_rate", "tau_or_gamma"):
                row[col] = math.nan if rec[col] == "NA" else float(rec[col])
            row["repetition"] = int(rec["repetition"])
            rows.append(row)
    return rows


def run(cfg: ExperimentConfig, out_dir) -> dict:
    """Execute the configured experiment; returns the written file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "sim1d":
        rows, extra = _run_sim1d(cfg)
    elif cfg.experiment == "sim2d":
        rows, extra = _run_sim2d(cfg)
    else:
        rows, extra = _run_real(cfg, out)
    timings = extra.pop("timings", [])
    results_path = out / "results.csv"
    _write_results(results_path, rows)
    parsed = [{**{c: getattr(r, c) for c in RESULT_COLUMNS}} for r in rows]
    summary = summarize_rows(parsed, n3=extra.get("n3"),
                             n3_by_pi0=extra.get("n3_by_pi0"))
    summary_path = out / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    meta = {"config": cfg.to_dict()}
    meta.update({k: v for k, v in extra.items()})
    meta_path = out / "meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_timings(out / "timings.csv", timings)
    return {"results": results_path, "summary": summary_path, "meta": meta_path}


# ---------------------------------------------------------------------------
# entry points


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.manifests:
        cfg = dataclasses.replace(cfg, write_manifests=True)
    paths = run(cfg, args.out)
    print(f"wrote {paths['results']}")
    return 0


def _cmd_summarize(args) -> int:
    rows = _parse_results_csv(args.infile)
    n3 = args.n3
    n3_by_pi0 = None
    meta_path = Path(args.infile).parent / "meta.json"
    if n3 is None and meta_path.exists():
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        n3 = meta.get("n3")
        n3_by_pi0 = meta.get("n3_by_pi0")
    summary = summarize_rows(rows, n3=n3, n3_by_pi0=n3_by_pi0)
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    print()
    return 0


def _cmd_oracle_1d(args) -> int:
    spec = synth.OneDimSpec(mu=args.mu, pi0=args.pi0)
    cap = CapacitySpec(b=args.b, pi0=args.pi0)
    gamma, region = synth.analytic_gamma_star(spec, cap)
    print(f"gamma_star = {gamma!r}")
    print("region = " + ", ".join(f"({lo!r}, {hi!r})" for lo, hi in region))
    print(f"mu_c = {synth.mu_c(args.pi0)!r}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="capclass",
        description="Capacity-constrained classification experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--manifests", action="store_true",
                       help="write per-cell fold manifests")
    p_run.set_defaults(func=_cmd_run)

    p_sum = sub.add_parser("summarize", help="aggregate a results file")
    p_sum.add_argument("--in", dest="infile", required=True)
    p_sum.add_argument("--n3", type=int, default=None,
                       help="test-fold size for over-budget flagging")
    p_sum.set_defaults(func=_cmd_summarize)

    p_or = sub.add_parser("oracle-1d", help="print the 1-d analytic oracle")
    p_or.add_argument("--pi0", type=float, required=True)
    p_or.add_argument("--b", type=float, required=True)
    p_or.add_argument("--mu", type=float, required=True)
    p_or.set_defaults(func=_cmd_oracle_1d)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (DataFormatError, InsufficientDataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
