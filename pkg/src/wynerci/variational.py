"""Alternating-minimization solver for the variational (factorized) form.

Variables are a fixed uniform prior ``p(z)`` and one column-stochastic table
``P_theta(X_i | Z)`` per source.  The model joint is the mixture of products
``P_theta(x^V) = sum_z p(z) prod_i p_theta(x_i|z)``.  The solver minimizes

    L = -sum_i H_theta(X_i|Z) - E_theta[log P(X^V)] + beta D(P_theta || P)     (bits)

one source at a time.  For source ``i`` the stationarity condition gives

    p(x_i|z) ∝ p(x_i) exp{ -D(p_theta(x^w|z) || p(x^w|x_i))
                           + beta sum_w p_theta(x^w|z) log p(x_i,x^w)/p_theta(x_i,x^w) }

with ``x^w`` the remaining sources.  The right side still depends on the
current table through ``p_theta(x_i, x^w)``; the step from the old table to
the right-hand side is a descent direction of the convex sub-problem, so a
halving line search along it never increases ``L``.

The step is taken geometrically, ``old^(1-t) target^t``, halving ``t``
until the loss does not increase (``t = 1`` is the plain closed-form update).

The reference joint is smoothed by mixing in a uniform of total mass
``floor`` so that ``log P`` is finite everywhere.  A run walks down a
schedule of floors (continuation): heavy smoothing first, which keeps
latent symbols from piling onto one block of the support, then
near-exact refinement.  Losses are only comparable within a stage; the
trace lists stage starts in ``reseeds``.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bipartite import SolveTrace, restart_seeds
from .errors import InvalidArgumentError, InvalidDistributionError
from .prob import Encoder, JointDist, SourceSpec
from .rng import make_rng

LN2 = math.log(2.0)
MAX_HALVINGS = 40
DEFAULT_FLOORS = (0.3, 0.1, 1e-2, 1e-4, 1e-8)
TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class VIParams:
    z_prior: np.ndarray
    source_conds: tuple[np.ndarray, ...]

    def __post_init__(self):
        prior = np.array(self.z_prior, dtype=float)
        conds = tuple(np.array(c, dtype=float) for c in self.source_conds)
        if prior.ndim != 1 or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise InvalidDistributionError("z_prior must be a probability vector")
        if len(conds) < 2:
            raise InvalidArgumentError("need at least 2 source tables")
        for i, c in enumerate(conds):
            if c.ndim != 2 or c.shape[1] != prior.size:
                raise InvalidArgumentError(f"table {i} has shape {c.shape}, expected (|X_{i + 1}|, {prior.size})")
            if np.any(c < 0) or np.max(np.abs(c.sum(axis=0) - 1.0)) > 1e-12:
                raise InvalidDistributionError(f"table {i} columns are not simplices")
        for a in (prior, *conds):
            a.setflags(write=False)
        object.__setattr__(self, "z_prior", prior)
        object.__setattr__(self, "source_conds", conds)

    @property
    def z_cardinality(self) -> int:
        return self.z_prior.size

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.source_conds)

    @property
    def param_count(self) -> int:
        """Entries held in the per-source tables: ``|Z| * sum_i |X_i|``."""
        return int(sum(c.size for c in self.source_conds))

    def replace(self, i: int, table: np.ndarray) -> "VIParams":
        conds = list(self.source_conds)
        conds[i] = table
        return VIParams(self.z_prior, tuple(conds))

    def to_json(self) -> str:
        return json.dumps({"z_prior": self.z_prior.tolist(),
                           "source_conds": [c.tolist() for c in self.source_conds]})

    @classmethod
    def from_json(cls, text: str) -> "VIParams":
        doc = json.loads(text)
        return cls(np.asarray(doc["z_prior"]), tuple(np.asarray(c) for c in doc["source_conds"]))


@dataclass(frozen=True)
class VIConfig:
    beta: float = 1.0
    max_iters: int = 10_000
    loss_tol: float = 1e-6
    restarts: int = 25
    seed: int = 0
    patience: int = 50
    stall_eps: float = 1e-8
    floors: tuple[float, ...] = DEFAULT_FLOORS

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidArgumentError(f"beta must be positive, got {self.beta}")
        if self.restarts < 1 or self.max_iters < 0 or self.patience < 1:
            raise InvalidArgumentError("restarts and patience must be >= 1, max_iters >= 0")
        object.__setattr__(self, "floors", tuple(float(f) for f in self.floors))
        if not self.floors or any(not 0 <= f < 1 for f in self.floors):
            raise InvalidArgumentError("floors must be a nonempty sequence in [0, 1)")

    @property
    def floor(self) -> float:
        """Smoothing of the final stage; losses are reported against it."""
        return self.floors[-1]


def random_params(spec: SourceSpec, seed: int) -> VIParams:
    """Uniform(0,1) entries, each column normalized; prior uniform."""
    rng = make_rng(seed)
    z = spec.z_cardinality
    conds = []
    for n in spec.cardinalities:
        t = rng.random((n, z))
        conds.append(t / t.sum(axis=0, keepdims=True))
    return VIParams(np.full(z, 1.0 / z), tuple(conds))


def _mix(params: VIParams, skip: int | None = None) -> np.ndarray:
    """``p(z) prod_{j != skip} p(x_j|z)`` with shape ``(*cards_without_skip, |Z|)``."""
    out = np.array(params.z_prior)
    for j, c in enumerate(params.source_conds):
        if j == skip:
            continue
        out = out[..., None, :] * c
    return out


def model_joint(params: VIParams) -> JointDist:
    t = _mix(params).sum(axis=-1)
    return JointDist(SourceSpec(t.shape, params.z_cardinality), t / t.sum())


def smoothed(joint: JointDist, floor: float) -> np.ndarray:
    """``(1 - floor) P + floor U`` with ``U`` uniform; the identity when ``floor == 0``."""
    p = np.array(joint.probs)
    if floor == 0:
        return p
    return (1.0 - floor) * p + floor / p.size


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``x log y`` with ``0 log y = 0``; ``-inf`` where ``x > 0 = y``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.log(y)
    return np.where(x > 0, out, 0.0)


def _loss_nats(params: VIParams, ref: np.ndarray, beta: float) -> float:
    pz = params.z_prior
    neg_h = sum(float(np.sum(pz * np.sum(_xlogy(c, c), axis=0))) for c in params.source_conds)
    pt = _mix(params).sum(axis=-1)
    cross = float(np.sum(_xlogy(pt, ref)))
    kl = float(np.sum(_xlogy(pt, pt))) - cross
    if math.isinf(cross):
        return math.inf
    return neg_h - cross + beta * kl


def surrogate_loss(params: VIParams, joint: JointDist, cfg: VIConfig) -> float:
    """The penalized surrogate in bits against the joint smoothed by ``cfg.floor``."""
    _check(params, joint)
    return _loss_nats(params, smoothed(joint, cfg.floor), cfg.beta) / LN2


def lemma_bound(params: VIParams, joint: JointDist, floor: float = 0.0) -> float:
    """``-sum_i H_theta(X_i|Z) - E_theta[log P]`` in bits; never below ``I_theta(Z;X^V)``."""
    _check(params, joint)
    return _loss_nats(params, smoothed(joint, floor), 0.0) / LN2


def _check(params: VIParams, joint: JointDist):
    if params.cardinalities != joint.spec.cardinalities:
        raise InvalidArgumentError(
            f"parameter cardinalities {params.cardinalities} do not match joint "
            f"{joint.spec.cardinalities}")


def _log_target(params: VIParams, ref: np.ndarray, i: int, beta: float) -> np.ndarray:
    """Log of the stationarity right-hand side for source ``i``, normalized per column."""
    V = len(params.source_conds)
    rest = _mix(params, skip=i)                      # (*w, z), includes p(z)
    w_given_z = rest / params.z_prior               # p_theta(x^w | z)
    pt = _mix(params).sum(axis=-1)
    # bring source i to the front: (x_i, *w)
    order = [i] + [j for j in range(V) if j != i]
    with np.errstate(divide="ignore"):
        log_ref = np.log(np.transpose(ref, order))
    log_pt = np.log(np.maximum(np.transpose(pt, order), TINY))
    n_i = ref.shape[i]
    wz = w_given_z.reshape(-1, params.z_cardinality)
    # log p(x_i) + sum_w p(w|z) log p(w|x_i) equals sum_w p(w|z) log p(x_i, w) + const(z)
    a = (1.0 + beta) * log_ref.reshape(n_i, -1) - beta * log_pt.reshape(n_i, -1)
    hole = ~np.isfinite(a)
    expo = np.where(hole, 0.0, a) @ wz
    if hole.any():
        # reference zero where p(x^w|z) > 0: that x_i gets no mass
        expo[(hole.astype(float) @ (wz > 0)) > 0] = -np.inf
    if np.any(np.all(np.isneginf(expo), axis=0)):
        raise InvalidDistributionError("reference joint leaves a latent column with no admissible symbol")
    return _log_normalize(expo)


def _log_normalize(expo: np.ndarray) -> np.ndarray:
    return expo - logsumexp(expo, axis=0, keepdims=True)


def _target(params: VIParams, ref: np.ndarray, i: int, beta: float) -> np.ndarray:
    """Right-hand side of the stationarity condition for source ``i``, as a table."""
    return np.exp(_log_target(params, ref, i, beta))


def update_source(params: VIParams, joint: JointDist, i: int, cfg: VIConfig) -> np.ndarray:
    """New table ``P_theta(X_i|Z)``; never increases :func:`surrogate_loss`."""
    _check(params, joint)
    if not 0 <= i < len(params.source_conds):
        raise InvalidArgumentError(f"source index {i} out of range")
    return _line_search(params, smoothed(joint, cfg.floor), i, cfg.beta)[0]


def _line_search(params: VIParams, ref: np.ndarray, i: int, beta: float,
                 base: float | None = None) -> tuple[np.ndarray, float]:
    old = params.source_conds[i]
    if base is None:
        base = _loss_nats(params, ref, beta)
    log_old = np.log(np.maximum(old, TINY))
    log_step = _log_target(params, ref, i, beta) - log_old
    t = 1.0
    for _ in range(MAX_HALVINGS):
        cand = np.exp(_log_normalize(log_old + t * log_step))
        trial = params.replace(i, cand)
        loss = _loss_nats(trial, ref, beta)
        if loss <= base:
            return cand, loss
        t *= 0.5
    return np.array(old), base


def project_encoder(params: VIParams, return_flags: bool = False):
    """Bayes posterior ``p(z|x^V) ∝ p(z) prod_i p(x_i|z)`` as an :class:`Encoder`.

    Rows where every ``z`` gives zero likelihood become uniform; with
    ``return_flags`` a boolean mask over flattened ``x^V`` marks them.
    """
    t = _mix(params)
    spec = SourceSpec(params.cardinalities, params.z_cardinality)
    rows = t.reshape(spec.size, spec.z_cardinality)
    total = rows.sum(axis=1, keepdims=True)
    empty = total[:, 0] <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rows = np.where(total > 0, rows / np.where(total > 0, total, 1.0), 1.0 / spec.z_cardinality)
    rows = rows / rows.sum(axis=1, keepdims=True)
    enc = Encoder(spec, rows)
    return (enc, empty) if return_flags else enc


@dataclass
class VIRun:
    seed: int
    params: VIParams
    trace: SolveTrace
    wall_ms: float


@dataclass
class VIResult:
    params: VIParams
    encoder: Encoder
    trace: SolveTrace
    seed: int
    runs: list[VIRun] = field(default_factory=list)

    @property
    def param_count(self) -> int:
        return self.params.param_count


def run(joint: JointDist, cfg: VIConfig, init: VIParams,
        best_seen: float = math.inf) -> tuple[VIParams, SolveTrace]:
    """Sequential sweeps over the sources, stage by stage through ``cfg.floors``.

    Each stage ends on the tolerance rule; ``max_iters`` bounds the total.
    A stall (``patience`` consecutive iterations improving by less than
    ``stall_eps`` while the loss sits above ``best_seen``, in bits) can only
    end the final stage, where losses are comparable across restarts.
    """
    _check(init, joint)
    params = init
    trace = SolveTrace()
    last = len(cfg.floors) - 1
    for stage, floor in enumerate(cfg.floors):
        ref = smoothed(joint, floor)
        loss = _loss_nats(params, ref, cfg.beta)
        if stage:
            trace.reseeds.append(len(trace.losses))
        trace.losses.append(loss / LN2)
        slow = 0
        trace.terminated_by = "max_iters"
        while trace.iterations < cfg.max_iters:
            cur = loss
            for i in range(len(params.source_conds)):
                table, cur = _line_search(params, ref, i, cfg.beta, base=cur)
                params = params.replace(i, table)
            trace.iterations += 1
            trace.losses.append(cur / LN2)
            gain = (loss - cur) / LN2
            loss = cur
            slow = slow + 1 if gain < cfg.stall_eps else 0
            if stage == last and slow >= cfg.patience and loss / LN2 > best_seen:
                trace.terminated_by = "stall"
                break
            if abs(gain) < cfg.loss_tol:
                trace.terminated_by = "tolerance"
                break
    return params, trace


def solve(joint: JointDist, cfg: VIConfig, z_cardinality: int | None = None) -> VIResult:
    """Best of ``cfg.restarts`` initializations; stalled runs consume the same budget."""
    spec = joint.spec if z_cardinality is None else joint.spec.with_z(z_cardinality)
    runs: list[VIRun] = []
    best_seen = math.inf
    for s in restart_seeds(cfg.seed, cfg.restarts):
        t0 = time.perf_counter()
        params, trace = run(joint, cfg, random_params(spec, s), best_seen)
        runs.append(VIRun(s, params, trace, (time.perf_counter() - t0) * 1e3))
        if trace.terminated_by != "stall":
            best_seen = min(best_seen, trace.final_loss)
    best = min(runs, key=lambda r: (r.trace.final_loss, r.trace.iterations, r.seed))
    return VIResult(best.params, project_encoder(best.params), best.trace, best.seed, runs)
