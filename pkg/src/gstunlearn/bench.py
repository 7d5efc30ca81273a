"""Experiment harness: sequential-unlearning runs against a retrain baseline,
bound-validation runs, and report emission."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import LossModel
from .errors import BoundViolationError, GSTUnlearnError, ParameterError
from .graph import Dataset, load_dataset, random_split
from .scattering import ScatteringConfig, embed_dataset
from .synthetic import make_synthetic
from .unlearn import RemovalRequest, Unlearner, read_requests, write_outcomes
from .wavelets import WaveletFamily

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "load_experiment_data",
    "make_requests",
    "run_unlearning_experiment",
    "run_bound_validation",
    "emit_report",
    "load_report",
]

STEP_FIELDS = ["seed", "step", "arm", "kind", "action", "accuracy", "cum_time", "bound", "beta", "retrain_count"]
VALIDATION_FIELDS = ["seed", "step", "kind", "graph_size", "residual", "bound", "worst_case", "slack"]


@dataclass
class ExperimentConfig:
    """Everything one experiment needs. ``dataset`` is a TU directory, or
    ``"synthetic"`` for the built-in generator (``synthetic_*`` fields)."""

    dataset: str = "synthetic"
    split: tuple = (0.1, 0.1, 0.8)
    seeds: tuple = (0,)
    family: str = "geometric"
    J: int = 3
    L: int = 3
    Q: int = 1
    lam: float = 1e-3
    alpha: float = 0.1
    epsilon: float = 1.0
    delta: float = 1e-4
    loss: str = "logistic"
    fraction: float = 0.1
    kind: str = "node"
    order_seed: int = 0
    requests: str = ""
    retrain_arm: bool = True
    timing: bool = True
    output: str = "runs"
    synthetic_graphs: int = 200
    synthetic_min_nodes: int = 8
    synthetic_max_nodes: int = 32
    synthetic_seed: int = 0

    def __post_init__(self):
        self.split = tuple(float(v) for v in self.split)
        self.seeds = tuple(int(v) for v in self.seeds)
        if len(self.split) != 3 or any(v < 0 for v in self.split) or not math.isclose(sum(self.split), 1.0):
            raise ParameterError(f"split ratios must be three nonnegative numbers summing to 1, got {self.split}")
        if not self.seeds:
            raise ParameterError("at least one seed is required")
        if not 0.0 <= self.fraction <= 1.0:
            raise ParameterError(f"fraction must lie in [0, 1], got {self.fraction}")
        if self.kind not in ("node", "feature", "graph", "mixed"):
            raise ParameterError(f"unknown removal kind {self.kind!r}")
        LossModel.named(self.loss)
        self.scattering  # validates family, J, Q, L

    @property
    def scattering(self) -> ScatteringConfig:
        return ScatteringConfig(WaveletFamily(self.family, self.J, self.Q), self.L)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split"] = list(self.split)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "ExperimentConfig":
        """Read a JSON config (or start from defaults) and apply string overrides."""
        data = {} if path is None else json.loads(Path(path).read_text())
        for key, raw in (overrides or {}).items():
            data[key] = _coerce(cls, key, raw)
        return cls.from_dict(data)


def _coerce(cls, key: str, raw):
    types = {f.name: f.default for f in dataclasses.fields(cls)}
    if key not in types:
        raise ParameterError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    default = types[key]
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, tuple):
            return [float(v) if key == "split" else int(v) for v in raw.replace(",", " ").split()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ParameterError(f"{key}: cannot parse {raw!r}") from None
    return raw


@dataclass
class RunReport:
    config: dict
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    fields: list = field(default_factory=lambda: list(STEP_FIELDS))
    # seed -> (outcomes, accuracies) of the unlearning arm; not serialized
    outcomes: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"config": self.config, "fields": self.fields, "records": self.records, "summary": self.summary}

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(data["config"], data["records"], data["summary"], data["fields"])

    def arm(self, name: str, seed: int | None = None) -> list:
        return [r for r in self.records if r.get("arm") == name and (seed is None or r["seed"] == seed)]


# --- data and requests ----------------------------------------------------------------


def load_experiment_data(config: ExperimentConfig) -> Dataset:
    if config.dataset == "synthetic":
        return make_synthetic(
            config.synthetic_graphs, config.synthetic_min_nodes, config.synthetic_max_nodes,
            seed=config.synthetic_seed,
        )
    return load_dataset(config.dataset)


def make_requests(graphs, fraction: float, kind: str, rng: np.random.Generator) -> list[RemovalRequest]:
    """One request for each of ``round(fraction * n)`` distinct random graphs,
    in random order. ``kind="mixed"`` alternates node and feature requests.
    Single-node graphs are never picked for node removal."""
    n = len(graphs)
    count = int(round(fraction * n))
    order = rng.permutation(n)
    reqs = []
    for i in order:
        if len(reqs) == count:
            break
        g = graphs[i]
        k = ("node", "feature")[len(reqs) % 2] if kind == "mixed" else kind
        if k == "graph":
            reqs.append(RemovalRequest("graph", int(i)))
            continue
        if k == "node" and g.node_count < 2:
            continue
        node = int(rng.choice(np.flatnonzero(g.active_mask)))
        reqs.append(RemovalRequest(k, int(i), node))
    return reqs


def _split_graphs(dataset: Dataset, config: ExperimentConfig, seed: int):
    sp = random_split(dataset.n, config.split, seed)
    train = [dataset.graphs[i] for i in sp["train"]]
    test = [dataset.graphs[i] for i in sp["test"]]
    if not train:
        raise ParameterError("the split leaves no training graphs")
    return train, test


def _engine(train, config: ExperimentConfig, seed: int, **kw) -> Unlearner:
    opts = dict(
        lam=config.lam, alpha=config.alpha, epsilon=config.epsilon, delta=config.delta,
        loss=LossModel.named(config.loss), seed=seed,
    )
    opts.update(kw)
    return Unlearner(train, config.scattering, **opts)


# --- experiments ----------------------------------------------------------------------


def run_unlearning_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> RunReport:
    """Stream removal requests through the unlearning engine, and optionally
    through a retrain-from-scratch baseline, recording test accuracy and
    cumulative wall time after every request.

    Timing covers embedding recomputation and model updates, not data loading
    or evaluation. With ``config.timing`` off every time column is zero, which
    makes reports byte-identical across runs.
    """
    if dataset is None:
        dataset = load_experiment_data(config)
    clock = time.perf_counter if config.timing else (lambda: 0.0)
    report = RunReport(config.to_dict())
    initial, retrains, speedups = [], [], []
    for seed in config.seeds:
        try:
            train, test = _split_graphs(dataset, config, seed)
            Zt, yt = embed_dataset(test, config.scattering)
            if config.requests:
                requests = read_requests(config.requests)
            else:
                rng = np.random.default_rng([config.order_seed, seed])
                requests = make_requests(train, config.fraction, config.kind, rng)

            arms = {"unlearn": _engine(train, config, seed)}
            if config.retrain_arm:
                arms["retrain"] = _engine(train, config, seed)
            initial.append(arms["unlearn"].accuracy(Zt, yt))
            outcomes, accs = [], []
            for arm, engine in arms.items():
                total = 0.0
                for step, req in enumerate(requests, 1):
                    t0 = clock()
                    if arm == "unlearn":
                        out = engine.process(req)
                        if not config.timing:
                            out.wall_time = 0.0
                        outcomes.append(out)
                        action, bound = out.action, out.bound_used
                    else:
                        engine.remove_and_retrain(req)
                        action, bound = "retrain", 0.0
                    total += clock() - t0
                    acc = engine.accuracy(Zt, yt)
                    if arm == "unlearn":
                        accs.append(acc)
                    report.records.append({
                        "seed": seed, "step": step, "arm": arm, "kind": req.kind, "action": action,
                        "accuracy": acc, "cum_time": total, "bound": bound,
                        "beta": engine.ledger.beta, "retrain_count": engine.ledger.retrain_count,
                    })
            report.outcomes[seed] = (outcomes, accs)
            retrains.append(arms["unlearn"].ledger.retrain_count)
            if config.retrain_arm and requests and config.timing:
                t_un = report.arm("unlearn", seed)[-1]["cum_time"]
                t_re = report.arm("retrain", seed)[-1]["cum_time"]
                speedups.append(t_re / t_un if t_un > 0 else float("nan"))
        except GSTUnlearnError as exc:
            exc.args = (f"[{config.dataset}, seed {seed}] {exc}",) + exc.args[1:]
            raise

    report.summary = _summarize(report, config, initial, retrains, speedups)
    return report


def _mean_std(values):
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return float("nan"), float("nan")
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), std


def _summarize(report, config, initial, retrains, speedups) -> dict:
    summary = {
        "seeds": list(config.seeds),
        "initial_accuracy": dict(zip(("mean", "std"), _mean_std(initial))),
        "retrain_count": {"per_seed": retrains, "mean": _mean_std(retrains)[0]},
        "arms": {},
    }
    if speedups:
        summary["speedup"] = dict(zip(("mean", "std"), _mean_std(speedups)))
    for arm in ("unlearn", "retrain"):
        recs = report.arm(arm)
        if not recs:
            continue
        steps = sorted({r["step"] for r in recs})
        rows = []
        for s in steps:
            at = [r for r in recs if r["step"] == s]
            acc = _mean_std([r["accuracy"] for r in at])
            tm = _mean_std([r["cum_time"] for r in at])
            rows.append({"step": s, "accuracy_mean": acc[0], "accuracy_std": acc[1],
                         "cum_time_mean": tm[0], "cum_time_std": tm[1]})
        summary["arms"][arm] = rows
    return summary


def run_bound_validation(
    config: ExperimentConfig,
    dataset: Dataset | None = None,
    n_requests: int | None = None,
    dump_dir=None,
) -> RunReport:
    """Check ``residual <= data-dependent bound`` and ``residual <= worst-case
    bound`` on every request of an ``alpha = 0`` run.

    Before each request the model is polished to stationarity; the remaining
    gradient norm before the request (``slack``) carries over one-for-one to
    the residual after it and is added to both bounds. A violation raises
    :class:`BoundViolationError` after writing the instance to ``dump_dir``.
    """
    if dataset is None:
        dataset = load_experiment_data(config)
    report = RunReport(config.to_dict(), fields=list(VALIDATION_FIELDS))
    looser = total = 0
    for seed in config.seeds:
        train, _ = _split_graphs(dataset, config, seed)
        engine = _engine(train, config, seed, alpha=0.0, diagnostics=True, enforce_budget=False)
        rng = np.random.default_rng([config.order_seed, seed])
        count = n_requests if n_requests is not None else int(round(config.fraction * len(train)))
        kind = "mixed" if config.kind == "graph" else config.kind
        for step in range(1, count + 1):
            req = _random_request(engine, kind, step, rng)
            if req is None:
                log.warning("seed %d: no removable node left after %d requests", seed, step - 1)
                break
            engine.reoptimize()
            g_size = engine.graphs[req.graph].node_count
            out = engine.process(req)
            slack = out.stationarity + 1e-12 * max(1.0, out.bound_used)
            rec = {
                "seed": seed, "step": step, "kind": req.kind, "graph_size": g_size,
                "residual": out.residual_true, "bound": out.bound_used,
                "worst_case": out.worst_case, "slack": slack,
            }
            report.records.append(rec)
            total += 1
            looser += out.worst_case is not None and out.worst_case >= out.bound_used
            bad = out.residual_true > out.bound_used + slack or (
                out.worst_case is not None and out.residual_true > out.worst_case + slack
            )
            if bad:
                instance = {"request": json.loads(req.to_json()), "record": rec,
                            "weights": engine.weights.tolist(), "config": config.to_dict()}
                if dump_dir is not None:
                    path = Path(dump_dir)
                    path.mkdir(parents=True, exist_ok=True)
                    (path / f"violation_seed{seed}_step{step}.json").write_text(json.dumps(instance, indent=2))
                raise BoundViolationError(
                    f"seed {seed} step {step}: residual {out.residual_true:.6e} exceeds "
                    f"bound {out.bound_used:.6e} / worst case {out.worst_case} (slack {slack:.2e})",
                    instance,
                )
    report.summary = {
        "requests": total,
        "violations": 0,
        "worst_case_at_least_data_dependent": looser,
    }
    return report


def _random_request(engine: Unlearner, kind: str, step: int, rng) -> RemovalRequest | None:
    k = ("node", "feature")[step % 2] if kind == "mixed" else kind
    alive = np.flatnonzero(engine.alive)
    if k == "node":
        alive = np.array([i for i in alive if engine.graphs[i].node_count >= 2], dtype=int)
    if alive.size == 0:
        return None
    i = int(rng.choice(alive))
    node = int(rng.choice(np.flatnonzero(engine.graphs[i].active_mask)))
    return RemovalRequest(k, i, node)


# --- output ---------------------------------------------------------------------------


def _write_csv(path: Path, fields, rows):
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fields})


def emit_report(report: RunReport, outdir, formats=("csv", "json"), prefix: str = "run") -> list[Path]:
    """Write the per-step and long-format tables plus one outcome log per seed
    (``csv``), and the full report next to its summary (``json``)."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        if "csv" in formats:
            p = outdir / f"{prefix}_steps.csv"
            _write_csv(p, report.fields, report.records)
            written.append(p)
            p = outdir / f"{prefix}_long.csv"
            long_rows = []
            metrics = [f for f in report.fields if f not in ("seed", "step", "arm", "kind", "action")]
            for r in report.records:
                for m in metrics:
                    if r.get(m) is not None:
                        long_rows.append({"step": r["step"], "arm": r.get("arm", "validation"),
                                          "metric": m, "value": r[m], "seed": r["seed"]})
            _write_csv(p, ["step", "arm", "metric", "value", "seed"], long_rows)
            written.append(p)
            for seed, (outcomes, accs) in sorted(report.outcomes.items()):
                p = outdir / f"{prefix}_outcomes_seed{seed}.csv"
                write_outcomes(p, outcomes, accs)
                written.append(p)
        if "json" in formats:
            p = outdir / f"{prefix}_report.json"
            p.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True))
            written.append(p)
            p = outdir / f"{prefix}_summary.json"
            p.write_text(json.dumps(report.summary, indent=1, sort_keys=True))
            written.append(p)
    except OSError as exc:
        raise OSError(f"writing report to {outdir}: {exc}") from exc
    return written


def load_report(path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text()))
