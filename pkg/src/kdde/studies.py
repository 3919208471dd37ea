"""Seeded simulation studies: ISE of bandwidth selectors and ARI of mean-shift clustering."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimator import KdeModel
from .meanshift import MeanShiftConfig, adjusted_rand_index, correct_insignificant
from .mise import ise, oracle_bandwidth
from .mixtures import (
    ClusterModel,
    NormalMixture,
    as_cluster_model,
    load_model,
    sample_cluster_model,
    sample_mixture,
)
from .optimize import OptimizerConfig
from .selectors import SelectorConfig, select

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
THREADS_ENV = "KDDE_THREADS"
RECORDS_FILE = "records.ndjson"
SUMMARY_FILE = "summary.csv"
RUNTIME_FILE = "runtime.ndjson"
#: Seconds per ``n^2`` pair evaluation-set, a rough single-core cost model.
COST_PER_PAIR = {"nr": 0.0, "or": 0.0, "cv": 5e-6, "pi": 1.5e-6, "scv": 7e-6}
BUDGET_WARN_SECONDS = 3600.0


class StudyConfigError(ValueError):
    pass


class SchemaVersionError(ValueError):
    pass


def hash64(*parts) -> int:
    """Stable 64-bit seed from any JSON-serializable key."""
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":")).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")


def replication_seed(base_seed: int, model_id: str, r: int, k: int) -> int:
    """Seed for the sample of replication ``k``.

    The selector is deliberately not part of the key, so every selector sees
    the same samples (paired comparison).
    """
    return hash64(int(base_seed), str(model_id), int(r), int(k))


@dataclass
class StudyConfig:
    """Configuration of a study; mirrors the JSON schema of study files.

    ``selectors`` holds method names (``"or"``, ``"nr"``, ``"cv"``, ``"pi"``,
    ``"scv"``) or dicts with ``method`` and optional ``stages`` / ``prescale``.
    """

    study: str
    models: list
    n: int = 1000
    replications: int = 100
    r_orders: list = field(default_factory=lambda: [0])
    selectors: list = field(default_factory=lambda: ["or", "nr", "cv", "pi", "scv"])
    seed: int = 1
    output: str | None = None
    alpha_pct: float = 5.0

    def __post_init__(self):
        if self.study not in ("rates", "ise", "cluster"):
            raise StudyConfigError(f"unsupported study {self.study!r}")
        if self.replications < 1:
            raise StudyConfigError("replications must be >= 1")
        if self.n < 2:
            raise StudyConfigError("n must be >= 2")
        if self.study == "cluster" and self.r_orders == [0]:
            self.r_orders = [1]
        for r in self.r_orders:
            if int(r) < 0:
                raise StudyConfigError("orders must be nonnegative")
        self.selectors = [self._selector(s) for s in self.selectors]
        for m in self.models:
            load_model(m)

    @staticmethod
    def _selector(s) -> dict:
        if isinstance(s, str):
            s = {"method": s}
        s = dict(s)
        s["method"] = str(s.get("method", "")).lower()
        if s["method"] not in ("or", "nr", "cv", "pi", "scv"):
            raise StudyConfigError(f"unknown selector {s['method']!r}")
        return s

    @classmethod
    def from_dict(cls, cfg: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(cfg) - known - {"schema"}
        if extra:
            raise StudyConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**{k: v for k, v in cfg.items() if k in known})

    @classmethod
    def load(cls, path) -> "StudyConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class StudyResult:
    records: list
    summary: list
    runtimes: list


def _model_id(spec) -> str:
    if isinstance(spec, dict):
        return spec.get("name", format(hash64(spec), "x"))
    return str(spec)


def _selector_id(sel: dict) -> str:
    extra = {k: v for k, v in sel.items() if k != "method"}
    return sel["method"] + ("" if not extra else json.dumps(extra, sort_keys=True, separators=(",", ":")))


def _selector_config(sel: dict, r: int) -> SelectorConfig:
    return SelectorConfig(method=sel["method"], r=r, stages=int(sel.get("stages", 2)),
                          prescale=bool(sel.get("prescale", True)),
                          optimizer=OptimizerConfig(**sel.get("optimizer", {})))


def _matrix(H) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(H)]


def _ise_task(args):
    cfg, model_spec, sel, r, k, oracle_H = args
    f = load_model(model_spec)
    mid = _model_id(model_spec)
    seed = replication_seed(cfg["seed"], mid, r, k)
    rec = dict(schema=SCHEMA_VERSION, study="ise", model=mid, selector=_selector_id(sel), r=r, rep=k,
               seed=seed, n=cfg["n"])
    t0 = time.perf_counter()
    try:
        X = sample_mixture(f, cfg["n"], seed).points
        H = np.asarray(oracle_H) if sel["method"] == "or" else select(X, _selector_config(sel, r)).H
        err = ise(KdeModel(X, H, r), f)
        rec.update(status="ok", H=_matrix(H), ise=err, log_ise=float(np.log(err)) if err > 0 else None)
    except Exception as exc:  # recorded, never dropped
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return rec, time.perf_counter() - t0


def _cluster_task(args):
    cfg, model_spec, sel, r, k, _ = args
    model = as_cluster_model(load_model(model_spec))
    mid = _model_id(model_spec)
    seed = replication_seed(cfg["seed"], mid, r, k)
    rec = dict(schema=SCHEMA_VERSION, study="cluster", model=mid, selector=_selector_id(sel), r=r, rep=k,
               seed=seed, n=cfg["n"])
    t0 = time.perf_counter()
    try:
        if sel["method"] == "or":
            raise StudyConfigError("the oracle selector is not defined for cluster models")
        sample = sample_cluster_model(model, cfg["n"], seed)
        scfg = _selector_config(sel, r)
        H = select(sample.points, scfg).H
        part = correct_insignificant(sample.points, MeanShiftConfig(H, alpha_pct=cfg["alpha_pct"]), scfg)
        rec.update(status="ok", H=_matrix(H), ari=adjusted_rand_index(part.labels, sample.labels),
                   n_clusters=part.n_clusters, corrections=part.corrections,
                   monotone_violations=part.monotone_violations)
    except Exception as exc:
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return rec, time.perf_counter() - t0


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def predicted_seconds(cfg: StudyConfig) -> float:
    per = sum(COST_PER_PAIR[s["method"]] for s in cfg.selectors) * cfg.n**2
    return per * cfg.replications * len(cfg.models) * len(cfg.r_orders)


def _record_key(rec):
    return (rec["model"], rec["r"], rec["selector"], rec["rep"])


def run_study(cfg: StudyConfig) -> StudyResult:
    if cfg.study == "rates":
        from .rates import rate_table

        recs = [dict(schema=SCHEMA_VERSION, study="rates", **{k: (str(v) if k == "value" else v) for k, v in e.items()})
                for e in rate_table()]
        return StudyResult(recs, [], [])
    est = predicted_seconds(cfg)
    if est > BUDGET_WARN_SECONDS:
        log.warning("study predicted to take about %.0f s on one core", est)
    base = dict(seed=cfg.seed, n=cfg.n, alpha_pct=cfg.alpha_pct)
    tasks = []
    task_fn = _ise_task if cfg.study == "ise" else _cluster_task
    for spec in cfg.models:
        model = load_model(spec)
        if cfg.study == "ise" and not isinstance(model, NormalMixture):
            raise StudyConfigError(f"ISE study needs a normal mixture, got {_model_id(spec)!r}")
        for r in cfg.r_orders:
            oracle_H = None
            if cfg.study == "ise" and any(s["method"] == "or" for s in cfg.selectors):
                oracle_H = oracle_bandwidth(model, cfg.n, int(r))[0].tolist()
            for sel in cfg.selectors:
                for k in range(cfg.replications):
                    tasks.append((base, spec, sel, int(r), k, oracle_H))
    workers = _threads()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(task_fn, tasks))
    else:
        out = [task_fn(t) for t in tasks]
    pairs = sorted(out, key=lambda p: _record_key(p[0]))
    records = [p[0] for p in pairs]
    runtimes = [dict(model=p[0]["model"], selector=p[0]["selector"], r=p[0]["r"], rep=p[0]["rep"],
                     seconds=round(p[1], 6)) for p in pairs]
    return StudyResult(records, summarize(records), runtimes)


def summarize(records: list) -> list[dict]:
    """Per (model, selector, r): counts and boxplot statistics of log-ISE or ARI."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec["model"], rec["selector"], rec["r"]), []).append(rec)
    rows = []
    for (model, selector, r), recs in sorted(groups.items()):
        metric = "log_ise" if recs[0]["study"] == "ise" else "ari"
        vals = np.array([x[metric] for x in recs if x["status"] == "ok" and x.get(metric) is not None], float)
        row = dict(model=model, selector=selector, r=r, metric=metric, count=len(recs),
                   failures=sum(x["status"] != "ok" for x in recs))
        if vals.size:
            q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
            row.update(mean=float(vals.mean()), sd=float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                       min=float(q[0]), q25=float(q[1]), median=float(q[2]), q75=float(q[3]),
                       max=float(q[4]))
        rows.append(row)
    return rows


SUMMARY_COLUMNS = ["model", "selector", "r", "metric", "count", "failures", "mean", "sd",
                   "min", "q25", "median", "q75", "max"]


def write_result(result: StudyResult, outdir) -> dict:
    """Write records, summary CSV and the runtime sidecar; return the paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = dict(records=out / RECORDS_FILE, summary=out / SUMMARY_FILE, runtime=out / RUNTIME_FILE)
    with open(paths["records"], "w", encoding="utf-8", newline="\n") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    with open(paths["summary"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in result.summary:
            fh.write(",".join("" if row.get(c) is None else str(row.get(c)) for c in SUMMARY_COLUMNS) + "\n")
    with open(paths["runtime"], "w", encoding="utf-8", newline="\n") as fh:
        for rec in result.runtimes:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    return paths


def load_records(path) -> list[dict]:
    recs = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("schema") != SCHEMA_VERSION:
            raise SchemaVersionError(f"line {i}: schema {rec.get('schema')!r}, expected {SCHEMA_VERSION}")
        recs.append(rec)
    return recs


def run_ise_study(cfg: StudyConfig) -> StudyResult:
    if cfg.study != "ise":
        cfg = StudyConfig(**{**asdict(cfg), "study": "ise"})
    return run_study(cfg)


def run_cluster_study(cfg: StudyConfig) -> StudyResult:
    if cfg.study != "cluster":
        cfg = StudyConfig(**{**asdict(cfg), "study": "cluster"})
    return run_study(cfg)
