"""Difference-of-convex solver for the bipartite relaxation of Wyner's problem.

For every bipartition ``(S, S^c)`` of the sources the solver trades
``I(X^V;Z)`` against ``I(X_S;Z) + I(X_Sc;Z)``:

    L(q) = I(X^V;Z) - sum_S kappa_S [I(X_S;Z) + I(X_Sc;Z)]        (bits)

Splitting ``L = f - g`` with ``f = -H(Z|X^V)`` and
``g = -H(Z) + sum_S kappa_S [I(X_S;Z) + I(X_Sc;Z)]`` (both convex in the
encoder) and linearizing ``g`` gives the closed-form update

    q'(z|x) ∝ p(z) exp{ sum_S kappa_S [log p(x_S|z)/p(x_S) + log p(x_Sc|z)/p(x_Sc)] }

where ``p(z)``, ``p(x_S|z)`` are induced by the current encoder.  Each update
is the exact minimizer of the convex surrogate, so ``L`` never increases.
The additive constant ``sum_S kappa_S I(X_S;X_Sc)`` that turns ``L`` into the
Lagrangian of the constrained problem is omitted from every reported value.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidArgumentError
from .prob import Bipartition, Encoder, JointDist, SourceSpec, enumerate_bipartitions
from .rng import derive_seed, make_rng

LN2 = math.log(2.0)
DEAD_PATIENCE = 10
RESEED_MASS = 1e-6


def kappa_from_beta(beta: float, num_sources: int) -> float:
    """Shared multiplier ``beta`` mapped to ``kappa = beta / (1 + |Pi_V| beta)``."""
    n = len(enumerate_bipartitions(num_sources))
    return beta / (1.0 + n * beta)


@dataclass(frozen=True)
class BipartiteConfig:
    kappas: float | Mapping[Bipartition, float] | None = None
    max_iters: int = 10_000
    loss_tol: float = 1e-6
    restarts: int = 25
    seed: int = 0

    def resolve(self, num_sources: int) -> list[float]:
        """Per-bipartition kappas in :func:`enumerate_bipartitions` order."""
        bps = enumerate_bipartitions(num_sources)
        if self.kappas is None:
            ks = [1.0 / len(bps)] * len(bps)
        elif isinstance(self.kappas, Mapping):
            missing = [bp.label() for bp in bps if bp not in self.kappas]
            if missing:
                raise InvalidArgumentError(f"no kappa given for bipartitions {missing}")
            ks = [float(self.kappas[bp]) for bp in bps]
        else:
            ks = [float(self.kappas)] * len(bps)
        if any(not k > 0 for k in ks):
            raise InvalidArgumentError(f"every kappa must be positive, got {ks}")
        return ks


@dataclass
class SolveTrace:
    losses: list[float] = field(default_factory=list)
    iterations: int = 0
    terminated_by: str = "max_iters"
    reseeds: list[int] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def is_nonincreasing(self, slack: float = 1e-12) -> bool:
        """Descent check; transitions into a reseeded iterate are excluded."""
        skip = set(self.reseeds)
        return all(self.losses[k + 1] <= self.losses[k] + slack
                   for k in range(len(self.losses) - 1) if (k + 1) not in skip)


@dataclass
class RunResult:
    seed: int
    encoder: Encoder
    trace: SolveTrace
    wall_ms: float


@dataclass
class SolveResult:
    encoder: Encoder
    trace: SolveTrace
    seed: int
    runs: list[RunResult]


def random_encoder(spec: SourceSpec, seed: int) -> Encoder:
    """Uniform(0,1) entries, each row normalized."""
    rng = make_rng(seed)
    rows = rng.random((spec.size, spec.z_cardinality))
    rows /= rows.sum(axis=1, keepdims=True)
    return Encoder(spec, rows)


class _Kernel:
    """Precomputed marginals for one joint; evaluates statistics and updates on raw tensors."""

    def __init__(self, joint: JointDist, kappas: list[float]):
        self.px = joint.probs
        self.V = joint.spec.num_sources
        self.bps = enumerate_bipartitions(self.V)
        self.kappas = kappas
        self.sides = []  # (kappa, summed-out axes, log p(x_A) keepdims, zero-marginal mask)
        for bp, k in zip(self.bps, kappas):
            for side in bp.sides:
                other = tuple(i for i in range(self.V) if i not in side)
                pa = self.px.sum(axis=other, keepdims=True)
                with np.errstate(divide="ignore"):
                    self.sides.append((k, other, np.log(pa)[..., None], (pa <= 0)[..., None]))
        self.x_axes = tuple(range(self.V))

    def stats(self, q: np.ndarray):
        """Return ``(p(z), tilt, loss_bits)`` for encoder tensor ``q``.

        ``tilt`` is ``sum_S kappa_S [log p(x_S|z)/p(x_S) + ...]`` broadcast to
        the full tensor, with dead clusters and zero marginals contributing 0.
        """
        pzx = q * self.px[..., None]
        pz = pzx.sum(axis=self.x_axes)
        alive = pz > 0
        with np.errstate(divide="ignore"):
            log_pz = np.log(pz)
        tilt = np.zeros_like(q)
        loss = 0.0
        # I(X^V;Z)
        mask = pzx > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            loss += float(np.sum(np.where(mask, pzx * (np.log(np.where(mask, q, 1.0)) - log_pz), 0.0)))
        for k, other, log_pa, zero_pa in self.sides:
            pza = pzx.sum(axis=other, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                lr = np.log(pza) - log_pa - log_pz
            lr = np.where(zero_pa | ~alive, 0.0, lr)
            pos = pza > 0
            loss -= k * float(np.sum(np.where(pos, pza * np.where(pos, lr, 0.0), 0.0)))
            tilt = tilt + k * lr
        return pz, log_pz, tilt, loss / LN2

    @staticmethod
    def update(log_pz: np.ndarray, tilt: np.ndarray) -> np.ndarray:
        expo = log_pz + tilt
        top = expo.max(axis=-1, keepdims=True)
        # no admissible z: only where P(x^V)=0 and the sides disagree; fall back to p(z)
        stuck = ~np.isfinite(top)
        if stuck.any():
            expo = np.where(stuck, log_pz, expo)
            top = expo.max(axis=-1, keepdims=True)
        new = np.exp(expo - top)
        return new / new.sum(axis=-1, keepdims=True)


def _as_tensor(enc: Encoder) -> np.ndarray:
    return np.array(enc.tensor)


def _check(joint: JointDist, enc: Encoder):
    if joint.spec.cardinalities != enc.spec.cardinalities:
        raise InvalidArgumentError(
            f"encoder cardinalities {enc.spec.cardinalities} do not match joint "
            f"{joint.spec.cardinalities}")


def dca_step(joint: JointDist, enc: Encoder, cfg: BipartiteConfig) -> Encoder:
    """One closed-form update computed from the previous encoder's induced marginals."""
    _check(joint, enc)
    ker = _Kernel(joint, cfg.resolve(joint.spec.num_sources))
    _, log_pz, tilt, _ = ker.stats(_as_tensor(enc))
    return Encoder.from_tensor(enc.spec, ker.update(log_pz, tilt))


def objective(joint: JointDist, enc: Encoder, cfg: BipartiteConfig) -> float:
    """``I(X^V;Z) - sum_S kappa_S [I(X_S;Z) + I(X_Sc;Z)]`` in bits."""
    _check(joint, enc)
    ker = _Kernel(joint, cfg.resolve(joint.spec.num_sources))
    return ker.stats(_as_tensor(enc))[3]


def run(joint: JointDist, cfg: BipartiteConfig, init: Encoder) -> tuple[Encoder, SolveTrace]:
    """Iterate from ``init`` until the loss change drops below ``loss_tol`` or ``max_iters``."""
    _check(joint, init)
    ker = _Kernel(joint, cfg.resolve(joint.spec.num_sources))
    q = _as_tensor(init)
    pz, log_pz, tilt, loss = ker.stats(q)
    trace = SolveTrace(losses=[loss])
    dead = np.zeros(q.shape[-1], dtype=int)
    while trace.iterations < cfg.max_iters:
        q = ker.update(log_pz, tilt)
        trace.iterations += 1
        pz, log_pz, tilt, new_loss = ker.stats(q)
        dead = np.where(pz > 0, 0, dead + 1)
        if np.any(dead >= DEAD_PATIENCE):
            cols = dead >= DEAD_PATIENCE
            q[..., cols] += RESEED_MASS
            q /= q.sum(axis=-1, keepdims=True)
            dead[cols] = 0
            pz, log_pz, tilt, new_loss = ker.stats(q)
            trace.reseeds.append(trace.iterations)
        trace.losses.append(new_loss)
        if abs(loss - new_loss) < cfg.loss_tol and trace.iterations not in trace.reseeds:
            trace.terminated_by = "tolerance"
            break
        loss = new_loss
    return Encoder.from_tensor(init.spec, q), trace


def _better(a: RunResult, b: RunResult) -> bool:
    ka = (a.trace.final_loss, a.trace.iterations, a.seed)
    kb = (b.trace.final_loss, b.trace.iterations, b.seed)
    return ka < kb


def restart_seeds(seed: int, restarts: int) -> list[int]:
    return [derive_seed(seed, r) for r in range(restarts)]


def solve(joint: JointDist, cfg: BipartiteConfig, z_cardinality: int | None = None) -> SolveResult:
    """Best of ``cfg.restarts`` random restarts (lowest final loss, then fewest iterations, then seed)."""
    spec = joint.spec if z_cardinality is None else joint.spec.with_z(z_cardinality)
    runs = []
    for s in restart_seeds(cfg.seed, cfg.restarts):
        init = random_encoder(spec, s)
        t0 = time.perf_counter()
        enc, trace = run(joint, cfg, init)
        runs.append(RunResult(s, enc, trace, (time.perf_counter() - t0) * 1e3))
    best = runs[0]
    for r in runs[1:]:
        if _better(r, best):
            best = r
    return SolveResult(best.encoder, best.trace, best.seed, runs)
