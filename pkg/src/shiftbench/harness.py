"""Experiment orchestration: the method registry, the grid protocol, and reports.

For each (dataset, method) cell: train a shared pool of models, build raw
intervals, recalibrate them on val, fit selective scorers and thresholds on
val, then evaluate on test. Single-model methods average over randomly
selected pool members; ensemble methods repeat random M-subsets.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, nn, selective, synthbench
from .calibration import calibrate, calibration_offset, conformity_scores
from .intervals import (Intervals, conformal_halfwidth, conformal_intervals,
                        direct_ensemble_stats, fuse_gaussian_ensemble,
                        gaussian_interval, quantile_interval)
from .metrics import MetricsReport, coverage, coverage_error, ece, mae, \
    mean_interval_length, prediction_rate
from .statkit import substream

METHOD_IDS = (
    "conformal",
    "ensemble",
    "gaussian",
    "gaussian_ensemble",
    "quantile",
    "gaussian_selective_gmm",
    "gaussian_selective_knn",
    "gaussian_selective_variance",
    "gaussian_ensemble_selective_gmm",
    "gaussian_ensemble_selective_variance",
)

NON_SELECTIVE_METHODS = ("conformal", "ensemble", "gaussian", "gaussian_ensemble", "quantile")

_METHOD_HEAD = {
    "conformal": "direct",
    "ensemble": "direct",
    "quantile": "quantile",
}


def method_head(method: str) -> str:
    return _METHOD_HEAD.get(method, "gaussian")


def is_ensemble_method(method: str) -> bool:
    return method.startswith(("ensemble", "gaussian_ensemble"))


@dataclass
class ExperimentConfig:
    datasets: list = field(default_factory=list)  # ShiftSpec or CSV path strings
    methods: tuple = METHOD_IDS
    alpha: float = 0.1
    n_models_trained: int = 20
    n_models_selected: int = 5
    n_repeats: int = 5
    ensemble_M: int = 5
    hyper: nn.TrainHyper = field(default_factory=nn.TrainHyper)
    seed: int = 0
    output_dir: str = "results"
    hidden: tuple = (64, 64)
    feature_dim: int = 32
    activation: str = "tanh"
    gmm_k: int = 4
    knn_k: int = 10
    knn_metric: str = "cosine"
    threshold_quantile: float = 0.95
    ece_m: int = 99
    config_text: str = ""  # raw config file contents, echoed into results.json

    def __post_init__(self):
        self.methods = tuple(self.methods)
        unknown = [m for m in self.methods if m not in METHOD_IDS]
        if unknown:
            raise ValueError(f"unknown method {unknown[0]!r}")
        if self.n_models_selected > self.n_models_trained:
            raise ValueError("n_models_selected > n_models_trained")
        if self.ensemble_M > self.n_models_trained:
            raise ValueError("ensemble_M > n_models_trained")
        if self.ensemble_M < 2:
            raise ValueError("ensemble_M must be >= 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha outside (0, 1)")


SMALL_PRESET = dict(n_models_trained=8, n_models_selected=3, n_repeats=3)
SMALL_SIZES = dict(n_train=1000, n_val=200, n_test=1000)


def apply_small_preset(config: ExperimentConfig) -> ExperimentConfig:
    """CI-scale preset: 8 trained / 3 selected / 3 repeats, 1000/200/1000 rows."""
    datasets = [replace(d, **SMALL_SIZES) if isinstance(d, synthbench.ShiftSpec) else d
                for d in config.datasets]
    M = min(config.ensemble_M, 5, SMALL_PRESET["n_models_trained"])
    return replace(config, datasets=datasets, ensemble_M=M, **SMALL_PRESET)


def _load_toml(path):
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def config_from_toml(path) -> ExperimentConfig:
    """Build an ExperimentConfig from a TOML file (echoed into the report)."""
    raw = _load_toml(path)
    with open(path) as fh:
        text = fh.read()
    kwargs = {}
    for key in ("methods", "alpha", "n_models_trained", "n_models_selected", "n_repeats",
                "ensemble_M", "seed", "output_dir", "feature_dim", "activation",
                "gmm_k", "knn_k", "knn_metric", "threshold_quantile", "ece_m"):
        if key in raw:
            kwargs[key] = raw[key]
    if "hidden" in raw:
        kwargs["hidden"] = tuple(raw["hidden"])
    if "hyper" in raw:
        kwargs["hyper"] = nn.TrainHyper(**raw["hyper"])
    datasets = []
    for entry in raw.get("dataset", []):
        if "csv" in entry:
            datasets.append(entry["csv"])
        else:
            spec_kwargs = dict(entry)
            for tup in ("full_range", "shift_band"):
                if tup in spec_kwargs:
                    spec_kwargs[tup] = tuple(spec_kwargs[tup])
            datasets.append(synthbench.ShiftSpec(**spec_kwargs))
    return ExperimentConfig(datasets=datasets, config_text=text, **kwargs)


def dataset_id(entry) -> str:
    if isinstance(entry, synthbench.ShiftSpec):
        if entry.kind == "none" or entry.level == 0:
            return "none"
        suffix = "" if entry.level == 4 else f"-l{entry.level}"
        return f"{entry.kind}{suffix}"
    return os.path.splitext(os.path.basename(str(entry)))[0]


def _worker_count() -> int:
    return max(1, int(os.environ.get("SHIFTBENCH_WORKERS", "1")))


def _parallel_map(fn, items):
    workers = _worker_count()
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class PoolEntry:
    """One trained model plus cached per-split predictions and features."""

    model: nn.TrainedModel
    val_out: object
    test_out: object
    train_features: np.ndarray = None
    val_features: np.ndarray = None
    test_features: np.ndarray = None
    _gmm: selective.GmmModel = None
    _knn: selective.KnnScorer = None

    def gmm(self, k, seed):
        if self._gmm is None:
            self._gmm = selective.fit_gmm(self.train_features, k=k, seed=seed)
        return self._gmm

    def knn(self, k, metric):
        if self._knn is None:
            self._knn = selective.KnnScorer(self.train_features, k=k, metric=metric)
        return self._knn


def train_pool(dataset: synthbench.Dataset, head: str, config: ExperimentConfig,
               ds_id: str) -> list:
    """Train the shared model pool for one head type on one dataset."""
    X_train, y_train = dataset.split_xy("train")
    X_val, _ = dataset.split_xy("val")
    X_test, _ = dataset.split_xy("test")
    arch = nn.Architecture(input_dim=X_train.shape[1], hidden=config.hidden,
                           feature_dim=config.feature_dim, head=head,
                           activation=config.activation)
    seed_rng = substream(config.seed, ds_id, head, "pool")
    seeds = seed_rng.integers(2 ** 32, size=config.n_models_trained)

    def train_one(seed):
        seed = int(seed)
        model = nn.init_model(arch, seed)
        model = nn.train(model, X_train, y_train, replace(config.hyper, seed=seed),
                         alpha=config.alpha)
        entry = PoolEntry(model=model, val_out=nn.predict(model, X_val),
                          test_out=nn.predict(model, X_test))
        if head == "gaussian":
            entry.train_features = nn.extract_features(model, X_train)
            entry.val_features = nn.extract_features(model, X_val)
            entry.test_features = nn.extract_features(model, X_test)
        return entry

    return _parallel_map(train_one, seeds)


class _IntervalSource:
    """alpha -> (raw val Intervals, raw test Intervals) for one evaluation."""

    def __init__(self, method, entries, y_val):
        self.method = method
        self.y_val = y_val
        if method in ("conformal", "quantile") or method.startswith("gaussian_selective") \
                or method == "gaussian":
            entry = entries[0]
            self.val_out, self.test_out = entry.val_out, entry.test_out
        elif method == "ensemble":
            val_preds = np.stack([e.val_out for e in entries])
            test_preds = np.stack([e.test_out for e in entries])
            self.val_out = direct_ensemble_stats(val_preds)
            self.test_out = direct_ensemble_stats(test_preds)
        else:  # gaussian ensembles
            self.val_out = fuse_gaussian_ensemble(
                np.stack([e.val_out[0] for e in entries]),
                np.stack([e.val_out[1] for e in entries]))
            self.test_out = fuse_gaussian_ensemble(
                np.stack([e.test_out[0] for e in entries]),
                np.stack([e.test_out[1] for e in entries]))
        if method == "conformal":
            self.residuals = np.abs(y_val - self.val_out)

    def raw(self, alpha):
        if self.method == "conformal":
            q = conformal_halfwidth(self.residuals, alpha)
            return (conformal_intervals(self.val_out, q, alpha),
                    conformal_intervals(self.test_out, q, alpha))
        if self.method == "quantile":
            return (quantile_interval(*self.val_out, alpha),
                    quantile_interval(*self.test_out, alpha))
        return (gaussian_interval(*self.val_out, alpha),
                gaussian_interval(*self.test_out, alpha))

    def calibrated(self, alpha):
        raw_val, raw_test = self.raw(alpha)
        offset = calibration_offset(conformity_scores(raw_val, self.y_val), alpha)
        return calibrate(raw_val, offset), calibrate(raw_test, offset)


def _selective_scores(method, entries, config, ds_id):
    """(val_scores, test_scores) for a selective method, None otherwise."""
    if method in NON_SELECTIVE_METHODS:
        return None
    if method == "gaussian_selective_gmm":
        entry = entries[0]
        gmm = entry.gmm(config.gmm_k, seed=config.seed)
        return selective.gmm_scores(gmm, entry.val_features), \
            selective.gmm_scores(gmm, entry.test_features)
    if method == "gaussian_selective_knn":
        entry = entries[0]
        knn = entry.knn(config.knn_k, config.knn_metric)
        return knn.score(entry.val_features), knn.score(entry.test_features)
    if method == "gaussian_selective_variance":
        entry = entries[0]
        return entry.val_out[1], entry.test_out[1]
    if method == "gaussian_ensemble_selective_gmm":
        gmms = [e.gmm(config.gmm_k, seed=config.seed) for e in entries]
        return (selective.ensemble_gmm_scores(gmms, [e.val_features for e in entries]),
                selective.ensemble_gmm_scores(gmms, [e.test_features for e in entries]))
    if method == "gaussian_ensemble_selective_variance":
        return (selective.ensemble_variance_scores(np.stack([e.val_out[0] for e in entries])),
                selective.ensemble_variance_scores(np.stack([e.test_out[0] for e in entries])))
    raise ValueError(f"unknown method {method!r}")


def evaluate_cell(method, entries, dataset, config, ds_id) -> MetricsReport:
    """One repeat of one method on one dataset."""
    _, y_val = dataset.split_xy("val")
    _, y_test = dataset.split_xy("test")
    source = _IntervalSource(method, entries, y_val)
    cal_val, cal_test = source.calibrated(config.alpha)

    scores = _selective_scores(method, entries, config, ds_id)
    if scores is None:
        mask = None
        rate = 1.0
    else:
        val_scores, test_scores = scores
        threshold = selective.select_threshold(val_scores, config.threshold_quantile)
        mask = selective.accept_mask(test_scores, threshold)
        rate = prediction_rate(mask)

    cov = coverage(cal_test, y_test, mask)
    report = MetricsReport(
        coverage=cov,
        prediction_rate=rate,
        mae_val=mae(cal_val.point, y_val),
        interval_length_val=mean_interval_length(cal_val),
        ece=ece(lambda a: source.calibrated(a)[1], y_test, m=config.ece_m,
                accepted_mask=mask),
        coverage_error=coverage_error(cov, config.alpha),
        alpha=config.alpha,
        n_evaluated=int(np.sum(mask)) if mask is not None else len(y_test),
    )
    return report


@dataclass
class ReportRow:
    dataset: str
    method: str
    alpha: float
    repeats: list = field(default_factory=list)   # MetricsReport per repeat
    errors: list = field(default_factory=list)    # strings, one per failed repeat
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    level: int = None  # shift intensity level for synthetic datasets


def aggregate(rows) -> list:
    """Fill mean and (n-1)-denominator std per metric; std 0 for one repeat."""
    for row in rows:
        for name in MetricsReport.FIELDS:
            values = [getattr(r, name) for r in row.repeats]
            if not values:
                continue
            row.mean[name] = float(np.mean(values))
            row.std[name] = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return rows


def _load_dataset(entry) -> synthbench.Dataset:
    if isinstance(entry, synthbench.ShiftSpec):
        return synthbench.generate(entry)
    return synthbench.load_csv(entry)


def run_experiment(config: ExperimentConfig, log=None) -> list:
    """Run the full method x dataset grid; returns aggregated ReportRows."""
    log = log or (lambda msg: None)
    rows = []
    for entry in config.datasets:
        ds_id = dataset_id(entry)
        dataset = _load_dataset(entry)
        heads = sorted({method_head(m) for m in config.methods})
        pools = {}
        for head in heads:
            log(f"[{ds_id}] training {config.n_models_trained} {head}-head models")
            pools[head] = train_pool(dataset, head, config, ds_id)
        for method in config.methods:
            pool = pools[method_head(method)]
            row = ReportRow(dataset=ds_id, method=method, alpha=config.alpha,
                            level=entry.level if isinstance(entry, synthbench.ShiftSpec)
                            else None)
            if is_ensemble_method(method):
                picks = []
                for r in range(config.n_repeats):
                    rng = substream(config.seed, ds_id, method, "select", r)
                    picks.append(rng.choice(len(pool), size=config.ensemble_M, replace=False))
                groups = [[pool[i] for i in idx] for idx in picks]
            else:
                rng = substream(config.seed, ds_id, method, "select")
                idx = rng.choice(len(pool), size=config.n_models_selected, replace=False)
                groups = [[pool[i]] for i in idx]
            for g, group in enumerate(groups):
                try:
                    row.repeats.append(evaluate_cell(method, group, dataset, config, ds_id))
                except (ValueError, RuntimeError) as exc:
                    row.errors.append(f"repeat {g}: {exc}")
            log(f"[{ds_id}] {method}: coverage "
                + ", ".join(f"{r.coverage:.3f}" for r in row.repeats)
                + (f" ({len(row.errors)} failed)" if row.errors else ""))
            rows.append(row)
    return aggregate(rows)


_CSV_HEADER = ["dataset", "method", "alpha", "repeat"] + list(MetricsReport.FIELDS) \
    + ["n_evaluated"]


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def config_echo(config: ExperimentConfig) -> dict:
    echo = dataclasses.asdict(config)
    echo["datasets"] = [d.to_dict() if isinstance(d, synthbench.ShiftSpec) else str(d)
                        for d in config.datasets]
    return echo


def emit_report(rows, out_dir, formats=("csv", "json"), config=None) -> list:
    """Write results.csv / results.json (and shiftsweep.csv after a sweep)."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        path = os.path.join(out_dir, "results.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_HEADER)
            for row in rows:
                for i, rep in enumerate(row.repeats):
                    writer.writerow([row.dataset, row.method, _fmt(row.alpha), i]
                                    + [_fmt(getattr(rep, f)) for f in MetricsReport.FIELDS]
                                    + [rep.n_evaluated])
                for agg_name, agg in (("mean", row.mean), ("std", row.std)):
                    if agg:
                        writer.writerow([row.dataset, row.method, _fmt(row.alpha), agg_name]
                                        + [_fmt(agg[f]) for f in MetricsReport.FIELDS] + [""])
        written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "results.json")
        payload = {
            "format": "shiftbench-results-v1",
            "version": __version__,
            "config": config_echo(config) if config is not None else {},
            "rows": [dataclasses.asdict(row) for row in rows],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        written.append(path)
    levels = {row.level for row in rows if row.level is not None}
    if len(levels) > 1:
        path = os.path.join(out_dir, "shiftsweep.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "method", "coverage"])
            for row in sorted((r for r in rows if r.level is not None),
                              key=lambda r: (r.level, r.method)):
                if "coverage" in row.mean:
                    writer.writerow([row.level, row.method, _fmt(row.mean["coverage"])])
        written.append(path)
    return written


def rows_from_json(path) -> list:
    """Rebuild ReportRows from a results.json (for the `report` subcommand)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "shiftbench-results-v1":
        raise ValueError(f"unknown results format in {path}")
    rows = []
    for raw in payload["rows"]:
        row = ReportRow(dataset=raw["dataset"], method=raw["method"], alpha=raw["alpha"],
                        errors=list(raw["errors"]), mean=dict(raw["mean"]),
                        std=dict(raw["std"]), level=raw["level"])
        row.repeats = [MetricsReport(**rep) for rep in raw["repeats"]]
        rows.append(row)
    return rows
