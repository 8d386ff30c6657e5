"""Clustering evaluation and the paired contrastive loss."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidArgumentError
from .prob import Encoder
from .rng import make_rng
from .synth import LabeledDataset, SynthSpec, build_joint, latent_posterior


def bayes_decode(enc: Encoder, x, u: float, argmax: bool = False) -> int:
    """Smallest ``z`` whose cumulative posterior mass strictly exceeds ``u``.

    ``argmax=True`` returns the mode instead (diagnostics only).
    """
    row = enc.tensor[tuple(int(v) for v in x)]
    if argmax:
        return int(np.argmax(row))
    if not 0.0 <= u < 1.0:
        raise InvalidArgumentError(f"u must lie in [0, 1), got {u}")
    return int(min(np.searchsorted(np.cumsum(row), u, side="right"), row.size - 1))


def decode_all(enc: Encoder, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized :func:`bayes_decode` over rows of ``x`` with matching ``u``."""
    flat = np.ravel_multi_index(tuple(np.asarray(x).T), enc.spec.cardinalities)
    cdf = np.cumsum(enc.rows[flat], axis=1)
    z = (cdf <= np.asarray(u)[:, None]).sum(axis=1)
    return np.minimum(z, enc.spec.z_cardinality - 1)


def _lex_min_assignment(w: np.ndarray) -> np.ndarray:
    """Max-weight assignment of every row of ``w`` (rows <= cols), lexicographically smallest."""
    n, m = w.shape
    r, c = linear_sum_assignment(w, maximize=True)
    best = w[r, c].sum()
    tol = 1e-9 * max(1.0, abs(best))
    out = np.empty(n, dtype=int)
    rows = list(range(n))
    cols = list(range(m))
    acc = 0.0
    for i in range(n):
        rest_rows = rows[i + 1:]
        for col in sorted(cols):
            remaining = [k for k in cols if k != col]
            val = acc + w[i, col]
            if rest_rows:
                sub = w[np.ix_(rest_rows, remaining)]
                rr, cc = linear_sum_assignment(sub, maximize=True)
                val += sub[rr, cc].sum()
            if val >= best - tol:
                out[i] = col
                acc += w[i, col]
                cols.remove(col)
                break
    return out


def label_match(confusion) -> np.ndarray:
    """Cluster -> label map maximizing matched counts; ``-1`` marks an unmatched cluster.

    Ties resolve to the lexicographically smallest assignment vector over the
    shorter axis.
    """
    c = np.asarray(confusion, dtype=float)
    if c.ndim != 2 or np.any(c < 0):
        raise InvalidArgumentError("confusion must be a nonnegative matrix")
    nz, ny = c.shape
    perm = np.full(nz, -1, dtype=int)
    if nz <= ny:
        perm[:] = _lex_min_assignment(c)
    else:
        cols = _lex_min_assignment(c.T)
        perm[cols] = np.arange(ny)
    return perm


def matched_value(confusion, perm) -> float:
    c = np.asarray(confusion)
    return float(sum(c[z, y] for z, y in enumerate(perm) if y >= 0))


@dataclass(frozen=True)
class ClusterResult:
    accuracy: float
    permutation: np.ndarray
    confusion: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"accuracy": self.accuracy,
                           "permutation": self.permutation.tolist(),
                           "confusion": self.confusion.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ClusterResult":
        doc = json.loads(text)
        return cls(float(doc["accuracy"]), np.asarray(doc["permutation"], dtype=int),
                   np.asarray(doc["confusion"], dtype=np.int64))


def confusion_matrix(pred: np.ndarray, labels: np.ndarray, nz: int, ny: int) -> np.ndarray:
    out = np.zeros((nz, ny), dtype=np.int64)
    np.add.at(out, (pred, labels), 1)
    return out


def clustering_accuracy(enc: Encoder, data: LabeledDataset, seed: int,
                        num_labels: int | None = None) -> ClusterResult:
    """Decode every sample with one seeded uniform, match labels, report the matched fraction."""
    if tuple(data.spec.cardinalities) != enc.spec.cardinalities:
        raise InvalidArgumentError("dataset and encoder alphabets differ")
    ny = int(num_labels if num_labels is not None else max(int(data.y.max()) + 1, 1))
    u = make_rng(seed).random(len(data))
    pred = decode_all(enc, data.x, u)
    conf = confusion_matrix(pred, data.y, enc.spec.z_cardinality, ny)
    perm = label_match(conf)
    return ClusterResult(matched_value(conf, perm) / len(data), perm, conf)


def bayes_optimal_accuracy(spec: SynthSpec) -> float:
    """``sum_x max_y P(x, y)``: accuracy of the exact MAP decoder."""
    px = build_joint(spec).probs
    return float(np.sum(px * latent_posterior(spec).max(axis=-1)))


def posterior_sampling_accuracy(spec: SynthSpec) -> float:
    """``sum_x P(x) sum_y P(y|x)^2``: expected accuracy of sampling the exact posterior."""
    px = build_joint(spec).probs
    return float(np.sum(px * np.sum(latent_posterior(spec) ** 2, axis=-1)))


# contrastive correlation loss ---------------------------------------------------

def _check_scores(scores) -> np.ndarray:
    h = np.asarray(scores, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 2:
        raise InvalidArgumentError("scores must be an N x N matrix with N >= 2")
    if np.any(h < 0) or not np.all(np.isfinite(h)):
        raise InvalidArgumentError("scores must be finite and nonnegative")
    return h


def contrastive_loss(scores) -> float:
    """``-(1/N) sum_n log(h_nn / sum_k h_nk)`` in nats; ``inf`` if a paired score has no mass."""
    h = _check_scores(scores)
    rows = h.sum(axis=1)
    diag = np.diag(h)
    if np.any(rows <= 0) or np.any(diag <= 0):
        return math.inf
    return float(-np.mean(np.log(diag) - np.log(rows)))


def paired_mi(n: int) -> float:
    """Mutual information of the empirical pairing of ``n`` samples: ``log n`` nats."""
    return math.log(n)


def correlation_terms(scores) -> dict:
    """Pieces of the pairing decomposition for the row-normalized critic ``Q``.

    ``loss`` is :func:`contrastive_loss`; ``marginal_kl`` is
    ``(1/N) sum_n KL[uniform || Q(.|n)]``; ``paired_mi - (loss - marginal_kl)``
    is reported as ``residual`` so the exact identity can be audited.
    """
    h = _check_scores(scores)
    n = h.shape[0]
    q = h / h.sum(axis=1, keepdims=True)
    loss = contrastive_loss(h)
    with np.errstate(divide="ignore"):
        mkl = float(np.mean(np.sum((1.0 / n) * (-math.log(n) - np.log(q)), axis=1)))
    mi = paired_mi(n)
    return {"paired_mi": mi, "loss": loss, "marginal_kl": mkl,
            "residual": mi - (loss - mkl), "bound_holds": bool(mi <= loss + 1e-9)}
