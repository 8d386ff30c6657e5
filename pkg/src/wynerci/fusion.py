"""Fusion of per-bipartition exponential-family experts into one posterior.

Each key (a bipartition, or a single group label for the factorized form)
contributes experts ``e`` for ``P(Z | x_part)``.  With reference prior ``p0``
the fused posterior has log-density

    log p0(z) + sum_key kappa_key sum_e [log e(z) - log p0(z)]  (+ normalizer)

which stays in the family of ``p0``.  For a Gaussian prior ``N(0, I)`` this is
a precision-weighted product of experts; for a uniform categorical prior it is
a softmax of weighted log-probabilities.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from .errors import DomainError, FusionDegenerateError, InvalidArgumentError

GAUSSIAN = "gaussian"
CATEGORICAL = "categorical"


def _spd_factor(mat: np.ndarray, what: str):
    try:
        return cho_factor(mat, lower=True)
    except LinAlgError as exc:
        raise DomainError(f"{what} is not positive definite") from exc


@dataclass(frozen=True)
class GaussianExpert:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise InvalidArgumentError(f"mean {mean.shape} and covariance {cov.shape} disagree")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10:
            raise DomainError("covariance is not symmetric")
        _spd_factor(cov, "covariance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def standard(cls, dim: int) -> "GaussianExpert":
        return cls(np.zeros(dim), np.eye(dim))

    def precision(self) -> np.ndarray:
        return cho_solve(_spd_factor(self.cov, "covariance"), np.eye(self.dim))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True)
class CategoricalExpert:
    log_probs: np.ndarray

    def __post_init__(self):
        lp = np.atleast_1d(np.asarray(self.log_probs, dtype=float))
        if lp.ndim != 1 or np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise InvalidArgumentError("log_probs must be a vector without nan or +inf")
        if abs(math.fsum(np.exp(lp)) - 1.0) > 1e-9:
            raise DomainError("exp(log_probs) does not sum to 1")
        object.__setattr__(self, "log_probs", lp)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @classmethod
    def from_probs(cls, probs) -> "CategoricalExpert":
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(probs, dtype=float)))

    @classmethod
    def uniform(cls, k: int) -> "CategoricalExpert":
        return cls(np.full(k, -math.log(k)))

    def to_dict(self) -> dict:
        return {"log_probs": [v if np.isfinite(v) else None for v in self.log_probs.tolist()]}


@dataclass(frozen=True)
class NaturalParamExpert:
    """Natural parameters plus a family tag.

    Gaussian: ``eta = [Sigma^-1 mu, vec(Sigma^-1)]``.  Categorical: ``eta = log q``
    (all categories kept, so conversion back is a softmax).
    """

    eta: np.ndarray
    family: str

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float).ravel())
        if self.family not in (GAUSSIAN, CATEGORICAL):
            raise InvalidArgumentError(f"unknown family {self.family!r}")
        check_domain(self)


def _gauss_dim(n: int) -> int:
    d = int(round((-1 + math.sqrt(1 + 4 * n)) / 2))
    if d * (d + 1) != n or d < 1:
        raise DomainError(f"{n} natural parameters do not describe a Gaussian")
    return d


def check_domain(expert: NaturalParamExpert) -> None:
    eta = expert.eta
    if expert.family == GAUSSIAN:
        d = _gauss_dim(eta.size)
        if not np.all(np.isfinite(eta)):
            raise DomainError("gaussian natural parameters must be finite")
        prec = eta[d:].reshape(d, d)
        if np.max(np.abs(prec - prec.T)) > 1e-10:
            raise DomainError("precision block is not symmetric")
        _spd_factor(prec, "precision block")
    else:
        if np.any(np.isnan(eta)) or np.any(eta == np.inf) or not np.any(np.isfinite(eta)):
            raise DomainError("categorical natural parameters need a finite entry and no nan/+inf")


def to_natural(expert) -> NaturalParamExpert:
    if isinstance(expert, GaussianExpert):
        prec = expert.precision()
        return NaturalParamExpert(np.concatenate([prec @ expert.mean, prec.ravel()]), GAUSSIAN)
    if isinstance(expert, CategoricalExpert):
        return NaturalParamExpert(expert.log_probs, CATEGORICAL)
    raise InvalidArgumentError(f"cannot convert {type(expert).__name__}")


def from_natural(nat: NaturalParamExpert):
    if nat.family == GAUSSIAN:
        d = _gauss_dim(nat.eta.size)
        prec = nat.eta[d:].reshape(d, d)
        fac = _spd_factor(prec, "precision block")
        cov = cho_solve(fac, np.eye(d))
        cov = 0.5 * (cov + cov.T)
        return GaussianExpert(cho_solve(fac, nat.eta[:d]), cov)
    return CategoricalExpert(nat.eta - logsumexp(nat.eta))


def _pairs(experts: Mapping, kappas: Mapping) -> list[tuple[float, Sequence]]:
    if set(experts) != set(kappas):
        raise InvalidArgumentError("experts and kappas must have the same keys")
    out = []
    for key in sorted(experts, key=_key_order):
        k = float(kappas[key])
        if not k > 0:
            raise InvalidArgumentError(f"kappa for {key} must be positive, got {k}")
        group = tuple(experts[key])
        if not group:
            raise InvalidArgumentError(f"no experts given for {key}")
        out.append((k, group))
    return out


def _key_order(key):
    return (0, key) if not isinstance(key, str) else (1, key)


def gaussian_fuse(experts: Mapping, kappas: Mapping) -> GaussianExpert:
    """Precision-weighted fusion against the standard normal reference.

    ``Lambda = I + sum kappa (sum_e Sigma_e^-1 - n_e I)``,
    ``mu = Lambda^-1 sum kappa sum_e Sigma_e^-1 mu_e``.
    """
    groups = _pairs(experts, kappas)
    d = groups[0][1][0].dim
    prec = np.eye(d)
    lin = np.zeros(d)
    total_kappa = 0.0
    for k, group in groups:
        total_kappa += k
        for e in group:
            if e.dim != d:
                raise InvalidArgumentError("experts disagree on dimension")
            p = e.precision()
            prec = prec + k * (p - np.eye(d))
            lin = lin + k * (p @ e.mean)
    prec = 0.5 * (prec + prec.T)
    try:
        fac = cho_factor(prec, lower=True)
    except LinAlgError as exc:
        raise FusionDegenerateError(
            f"fused precision is indefinite (total kappa {total_kappa:.6g}); reduce the kappa scale") from exc
    cov = cho_solve(fac, np.eye(d))
    return GaussianExpert(cho_solve(fac, lin), 0.5 * (cov + cov.T))


def categorical_fuse(experts: Mapping, kappas: Mapping) -> CategoricalExpert:
    """``softmax(sum kappa sum_e log q_e)``."""
    groups = _pairs(experts, kappas)
    k0 = groups[0][1][0].log_probs.size
    acc = np.zeros(k0)
    for k, group in groups:
        for e in group:
            if e.log_probs.size != k0:
                raise InvalidArgumentError("experts disagree on |Z|")
            acc = acc + np.where(np.isneginf(e.log_probs), -np.inf, k * e.log_probs)
    if not np.any(np.isfinite(acc)):
        raise FusionDegenerateError("experts have disjoint supports")
    return CategoricalExpert(acc - logsumexp(acc))


def expfam_fuse(experts: Mapping, prior: NaturalParamExpert, kappas: Mapping) -> NaturalParamExpert:
    """``eta = eta0 + sum kappa sum_e (eta_e - eta0)``."""
    groups = _pairs(experts, kappas)
    eta0 = prior.eta
    eta = np.array(eta0)
    for k, group in groups:
        for e in group:
            if e.family != prior.family:
                raise InvalidArgumentError(f"mixed families {e.family!r} and {prior.family!r}")
            if e.eta.shape != eta0.shape:
                raise InvalidArgumentError("natural parameter shapes disagree")
            with np.errstate(invalid="ignore"):
                diff = np.where(np.isneginf(e.eta), -np.inf, e.eta - eta0)
            eta = eta + k * diff
    if prior.family == GAUSSIAN:
        d = _gauss_dim(eta.size)
        prec = eta[d:].reshape(d, d)
        eta[d:] = (0.5 * (prec + prec.T)).ravel()
    return NaturalParamExpert(eta, prior.family)


def gaussian_kl_to_standard(expert: GaussianExpert) -> float:
    """``KL[N(mu, Sigma) || N(0, I)]`` in nats."""
    fac = _spd_factor(expert.cov, "covariance")
    logdet = 2.0 * float(np.sum(np.log(np.diag(fac[0]))))
    val = 0.5 * (float(np.trace(expert.cov)) + float(expert.mean @ expert.mean) - expert.dim - logdet)
    return max(val, 0.0)


def _gauss_cross(post: GaussianExpert, e: GaussianExpert) -> float:
    """``E_post[log e(z) - log N(z; 0, I)]``."""
    fac = _spd_factor(e.cov, "covariance")
    logdet = 2.0 * float(np.sum(np.log(np.diag(fac[0]))))
    diff = post.mean - e.mean
    quad = float(np.trace(cho_solve(fac, post.cov))) + float(diff @ cho_solve(fac, diff))
    std = float(np.trace(post.cov)) + float(post.mean @ post.mean)
    return -0.5 * (logdet + quad) + 0.5 * std


def _cat_cross(post: CategoricalExpert, e: CategoricalExpert, prior: CategoricalExpert) -> float:
    w = post.probs
    mask = w > 0
    return float(np.sum(w[mask] * (e.log_probs[mask] - prior.log_probs[mask])))


def sample_loss(experts: Mapping, kappas: Mapping, prior=None) -> float:
    """Per-sample objective: ``KL[post || prior] - sum kappa sum_e E_post[log e/prior]`` (nats)."""
    groups = _pairs(experts, kappas)
    first = groups[0][1][0]
    if isinstance(first, GaussianExpert):
        prior = GaussianExpert.standard(first.dim) if prior is None else prior
        if not np.allclose(prior.mean, 0) or not np.allclose(prior.cov, np.eye(prior.dim)):
            raise InvalidArgumentError("gaussian loss is defined against N(0, I)")
        post = gaussian_fuse(experts, kappas)
        loss = gaussian_kl_to_standard(post)
        for k, group in groups:
            loss -= k * sum(_gauss_cross(post, e) for e in group)
        return loss
    if isinstance(first, CategoricalExpert):
        prior = CategoricalExpert.uniform(first.log_probs.size) if prior is None else prior
        post = from_natural(expfam_fuse(
            {key: [to_natural(e) for e in grp] for key, grp in experts.items()},
            to_natural(prior), kappas))
        w = post.probs
        mask = w > 0
        loss = float(np.sum(w[mask] * (post.log_probs[mask] - prior.log_probs[mask])))
        for k, group in groups:
            loss -= k * sum(_cat_cross(post, e, prior) for e in group)
        return loss
    raise InvalidArgumentError(f"unsupported expert type {type(first).__name__}")


def bipartite_empirical_loss(samples: Sequence[Mapping], kappas: Mapping, prior=None) -> float:
    """Sample average of :func:`sample_loss`.

    Each sample maps a key to its experts: a bipartition to ``(e_S, e_Sc)``
    for the bipartite form, or one group key to the ``V`` per-source experts
    for the factorized form (see :func:`factorized_config`).
    """
    if not samples:
        raise InvalidArgumentError("need at least one sample")
    keys = set(samples[0])
    for s in samples:
        if set(s) != keys:
            raise InvalidArgumentError("every sample must carry experts for the same keys")
    return math.fsum(sample_loss(s, kappas, prior) for s in samples) / len(samples)


FACTORIZED_KEY = "[V]"


def factorized_config(per_source: Sequence[Sequence], kappa: float) -> tuple[list[dict], dict]:
    """Per-source experts and a single shared kappa, shaped for :func:`bipartite_empirical_loss`."""
    return [{FACTORIZED_KEY: tuple(row)} for row in per_source], {FACTORIZED_KEY: kappa}


# JSON -----------------------------------------------------------------------

def expert_from_dict(doc: dict):
    if "log_probs" in doc:
        return CategoricalExpert(np.array([-np.inf if v is None else v for v in doc["log_probs"]], dtype=float))
    if "mean" in doc and "cov" in doc:
        return GaussianExpert(np.asarray(doc["mean"], dtype=float), np.asarray(doc["cov"], dtype=float))
    raise InvalidArgumentError("expert needs either 'log_probs' or 'mean' and 'cov'")


def expert_to_json(expert) -> str:
    return json.dumps(expert.to_dict())
