"""Grid-by-restart experiment harness and information-plane reporting."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import bipartite, variational
from .errors import InvalidArgumentError
from .evaluation import clustering_accuracy
from .metrics import info_report
from .prob import enumerate_bipartitions
from .rng import derive_seed
from .synth import SynthSpec, build_joint, invertible_spec, sample_dataset

SOLVERS = ("bipartite", "vi")
CSV_HEADER = ("solver", "grid_value", "seed", "final_loss", "iterations", "terminated_by",
              "wall_ms", "mi_z_xv", "cond_mi_sum", "accuracy", "param_count")
DATA_KEY = -1
DECODE_KEY = -2


def default_grid() -> tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(0.1, 10.0, 20))


@dataclass(frozen=True)
class SweepConfig:
    solver: str = "bipartite"
    synth: SynthSpec = field(default_factory=invertible_spec)
    grid: tuple[float, ...] = field(default_factory=default_grid)
    restarts: int = 25
    z_cardinality: int | None = None
    base_seed: int = 0
    max_iters: int = 10_000
    loss_tol: float = 1e-6
    accuracy_samples: int = 10_000
    record_time: bool = True
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        if self.solver not in SOLVERS:
            raise InvalidArgumentError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        g = np.array(self.grid)
        if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
            raise InvalidArgumentError("grid must be nonempty, positive and strictly increasing")
        if self.restarts < 1 or self.threads < 1:
            raise InvalidArgumentError("restarts and threads must be >= 1")
        if self.z_cardinality is not None and self.z_cardinality < 1:
            raise InvalidArgumentError("z_cardinality must be >= 1")
        if self.accuracy_samples < 0:
            raise InvalidArgumentError("accuracy_samples must be >= 0")

    @property
    def z(self) -> int:
        return self.synth.y_cardinality if self.z_cardinality is None else self.z_cardinality

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth"] = json.loads(self.synth.to_json())
        d["grid"] = list(self.grid)
        d["z_cardinality"] = self.z
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        doc = dict(doc)
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InvalidArgumentError(f"unknown sweep config fields {sorted(unknown)}")
        if "synth" in doc:
            doc["synth"] = SynthSpec.from_dict(doc["synth"])
        if "grid" in doc:
            doc["grid"] = tuple(doc["grid"])
        return cls(**doc)


@dataclass(frozen=True)
class SweepRecord:
    solver: str
    grid_index: int
    restart: int
    grid_value: float
    seed: int
    final_loss: float
    iterations: int
    terminated_by: str
    wall_ms: float | None
    mi_z_xv: float
    cond_mi_sum: float
    accuracy: float | None
    param_count: int

    def row(self) -> list[str]:
        def num(v):
            return "" if v is None else repr(float(v))
        return [self.solver, repr(self.grid_value), str(self.seed), repr(self.final_loss),
                str(self.iterations), self.terminated_by, num(self.wall_ms), repr(self.mi_z_xv),
                repr(self.cond_mi_sum), num(self.accuracy), str(self.param_count)]


def param_count(solver: str, cards: tuple[int, ...], z: int) -> int:
    return z * sum(cards) if solver == "vi" else z * int(np.prod(cards))


def knob(solver: str, value: float, num_sources: int) -> float:
    """Grid value to solver multiplier: ``beta`` for VI, ``kappa(beta)`` for the bipartite solver."""
    return value if solver == "vi" else bipartite.kappa_from_beta(value, num_sources)


def cell_seed(base_seed: int, g: int, r: int) -> int:
    return derive_seed(base_seed, g, r)


def _grid_task(cfg: SweepConfig, g: int, on_trace=None) -> list[SweepRecord]:
    """All restarts of one grid value; restarts stay sequential (the VI stall rule needs the best so far)."""
    joint = build_joint(cfg.synth, cfg.z)
    spec = joint.spec
    V = spec.num_sources
    value = cfg.grid[g]
    k = knob(cfg.solver, value, V)
    pc = param_count(cfg.solver, spec.cardinalities, cfg.z)
    out, encoders = [], []
    best_seen = math.inf
    for r in range(cfg.restarts):
        seed = cell_seed(cfg.base_seed, g, r)
        t0 = time.perf_counter()
        if cfg.solver == "bipartite":
            bcfg = bipartite.BipartiteConfig(kappas=k, max_iters=cfg.max_iters, loss_tol=cfg.loss_tol,
                                             restarts=1, seed=seed)
            enc, trace = bipartite.run(joint, bcfg, bipartite.random_encoder(spec, seed))
            elapsed = time.perf_counter() - t0
        else:
            vcfg = variational.VIConfig(beta=k, max_iters=cfg.max_iters, loss_tol=cfg.loss_tol,
                                        restarts=1, seed=seed)
            params, trace = variational.run(joint, vcfg, variational.random_params(spec, seed), best_seen)
            elapsed = time.perf_counter() - t0
            enc = variational.project_encoder(params)
            if trace.terminated_by != "stall":
                best_seen = min(best_seen, trace.final_loss)
        rep = info_report(joint, enc)
        encoders.append(enc)
        out.append(SweepRecord(cfg.solver, g, r, value, seed, trace.final_loss, trace.iterations,
                               trace.terminated_by, elapsed * 1e3 if cfg.record_time else None,
                               rep.mi_z_xv, rep.cond_mi_sum, None, pc))
        if on_trace is not None:
            on_trace(out[-1], trace)
    if cfg.accuracy_samples > 0:
        best = min(range(len(out)), key=lambda i: (out[i].final_loss, out[i].iterations, out[i].seed))
        data = sample_dataset(cfg.synth, cfg.accuracy_samples, derive_seed(cfg.base_seed, g, DATA_KEY))
        acc = clustering_accuracy(encoders[best], data, derive_seed(cfg.base_seed, g, DECODE_KEY),
                                  num_labels=cfg.synth.y_cardinality).accuracy
        out[best] = replace(out[best], accuracy=acc)
    return out


def _grid_task_star(args):
    return _grid_task(*args)


def run_sweep(cfg: SweepConfig, on_trace=None) -> list[SweepRecord]:
    """One record per (grid value, restart), ordered by (grid index, restart index).

    ``on_trace(record, trace)`` sees every solver trace; it needs ``threads == 1``.
    """
    tasks = [(cfg, g) for g in range(len(cfg.grid))]
    if on_trace is not None and cfg.threads != 1:
        raise InvalidArgumentError("on_trace requires a single-threaded sweep")
    if cfg.threads == 1:
        chunks = [_grid_task(*t, on_trace=on_trace) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(_grid_task_star, tasks))
    records = [rec for chunk in chunks for rec in chunk]
    return sorted(records, key=lambda rec: (rec.grid_index, rec.restart))


def pareto_frontier(records) -> list[SweepRecord]:
    """Records not dominated in ``(cond_mi_sum, mi_z_xv)``, sorted by ``cond_mi_sum``."""
    recs = list(records)
    if not recs:
        raise InvalidArgumentError("pareto_frontier needs at least one record")
    order = sorted(recs, key=lambda r: (r.cond_mi_sum, r.mi_z_xv))
    front, best_mi, prev = [], math.inf, None
    for rec in order:
        point = (rec.cond_mi_sum, rec.mi_z_xv)
        if rec.mi_z_xv < best_mi or point == prev:
            front.append(rec)
            best_mi = min(best_mi, rec.mi_z_xv)
            prev = point
    return front


def best_feasible(records, cmi_max: float):
    """Lowest ``mi_z_xv`` among records with ``cond_mi_sum < cmi_max`` (None if there are none)."""
    ok = [r for r in records if r.cond_mi_sum < cmi_max]
    return min(ok, key=lambda r: (r.mi_z_xv, r.cond_mi_sum, r.grid_index, r.restart)) if ok else None


def runtime_profile(cfg: SweepConfig, z_values) -> list[tuple[int, float]]:
    """Total solve wall time (ms) of the full sweep for each ``|Z|``, single-threaded.

    One untimed cell runs first so that first-call costs do not land on the
    first ``|Z|``.
    """
    z_values = [int(z) for z in z_values]
    run_sweep(replace(cfg, grid=cfg.grid[:1], restarts=1, z_cardinality=min(z_values), threads=1,
                      accuracy_samples=0))
    out = []
    for z in z_values:
        recs = run_sweep(replace(cfg, z_cardinality=int(z), threads=1, record_time=True, accuracy_samples=0))
        out.append((int(z), float(sum(r.wall_ms for r in recs))))
    return out


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def records_from_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and tuple(rows[0].keys()) != CSV_HEADER:
        raise InvalidArgumentError("unexpected sweep CSV header")
    return rows


def num_bipartitions(num_sources: int) -> int:
    return len(enumerate_bipartitions(num_sources))
