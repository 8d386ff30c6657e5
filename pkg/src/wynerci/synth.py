"""Synthetic latent-class sources and labeled sample generation.

A latent label ``Y`` is uniform on ``|Y|`` symbols.  Every source ``X_i`` is
drawn from the same column-stochastic kernel ``P(X_i | Y)`` built from a block
profile ``l`` (length ``b``) and a leakage profile ``delta``: column ``y`` puts
``l - delta`` on row block ``y`` and ``delta`` on block ``y + 1 (mod |Y|)``.
With ``delta = 0`` each symbol ``x_i`` identifies ``y`` (the invertible case).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError, TooLargeError
from .prob import JointDist, SourceSpec
from .rng import make_rng

MAX_JOINT_SIZE = 10**8


@dataclass(frozen=True)
class SynthSpec:
    y_cardinality: int
    block: tuple[float, ...]
    shift: tuple[float, ...]
    num_sources: int = 2

    def __post_init__(self):
        object.__setattr__(self, "block", tuple(float(v) for v in self.block))
        object.__setattr__(self, "shift", tuple(float(v) for v in self.shift))
        object.__setattr__(self, "y_cardinality", int(self.y_cardinality))
        object.__setattr__(self, "num_sources", int(self.num_sources))
        l, d = np.array(self.block), np.array(self.shift)
        if self.y_cardinality < 1:
            raise InvalidSpecError("y_cardinality must be positive")
        if self.num_sources < 2:
            raise InvalidSpecError("num_sources must be at least 2")
        if l.size == 0 or l.shape != d.shape:
            raise InvalidSpecError(f"block {self.block} and shift {self.shift} must have equal nonzero length")
        if np.any(d < 0) or np.any(d > l):
            raise InvalidSpecError("shift must satisfy 0 <= shift <= block elementwise")
        if abs(l.sum() - 1.0) > 1e-12:
            raise InvalidSpecError(f"block must sum to 1, sums to {l.sum()!r}")
        if self.x_cardinality < 2:
            raise InvalidSpecError("each source alphabet must have at least 2 symbols")

    @property
    def x_cardinality(self) -> int:
        return len(self.block) * self.y_cardinality

    def source_spec(self, z_cardinality: int = 1) -> SourceSpec:
        return SourceSpec((self.x_cardinality,) * self.num_sources, z_cardinality)

    def to_json(self) -> str:
        return json.dumps({"y_cardinality": self.y_cardinality, "block": list(self.block),
                           "shift": list(self.shift), "num_sources": self.num_sources})

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        doc = json.loads(text)
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        for key in ("y_cardinality", "block", "shift", "num_sources"):
            if key not in doc:
                raise InvalidSpecError(f"synthetic spec is missing field {key!r}")
        return cls(doc["y_cardinality"], tuple(doc["block"]), tuple(doc["shift"]), doc["num_sources"])


def invertible_spec(num_sources: int = 2) -> SynthSpec:
    """|Y|=8, l=[.5,.5], no leakage."""
    return SynthSpec(8, (0.5, 0.5), (0.0, 0.0), num_sources)


def noninvertible_spec(num_sources: int = 2) -> SynthSpec:
    """|Y|=8, l=[.5,.5], leakage [.05,.05] into the next block."""
    return SynthSpec(8, (0.5, 0.5), (0.05, 0.05), num_sources)


def build_source_conditional(spec: SynthSpec) -> np.ndarray:
    """``P(X_i | Y)`` as a ``(b|Y|, |Y|)`` column-stochastic matrix."""
    b = len(spec.block)
    ny = spec.y_cardinality
    l, d = np.array(spec.block), np.array(spec.shift)
    table = np.zeros((b * ny, ny))
    for y in range(ny):
        table[b * y: b * (y + 1), y] += l - d
        nxt = (y + 1) % ny
        table[b * nxt: b * (nxt + 1), y] += d
    return table


def build_joint(spec: SynthSpec, z_cardinality: int | None = None) -> JointDist:
    """``P(X^V) = sum_y P(y) prod_i P(x_i | y)`` with uniform ``P(y)``."""
    nx = spec.x_cardinality
    if nx ** spec.num_sources > MAX_JOINT_SIZE:
        raise TooLargeError(f"joint would have {nx ** spec.num_sources} entries")
    cond = build_source_conditional(spec)
    ny = spec.y_cardinality
    # accumulate over axes (y, x_1, ..., x_k), then sum out y
    t = np.full(ny, 1.0 / ny)
    for k in range(spec.num_sources):
        t = t[..., None] * cond.T.reshape((ny,) + (1,) * k + (nx,))
    joint = t
    probs = joint.sum(axis=0)
    probs = probs / probs.sum()
    zc = spec.y_cardinality if z_cardinality is None else z_cardinality
    return JointDist(SourceSpec(probs.shape, zc), probs)


def latent_posterior(spec: SynthSpec) -> np.ndarray:
    """Exact ``P(Y | x^V)`` with shape ``(*cardinalities, |Y|)``; zero-mass rows are uniform."""
    cond = build_source_conditional(spec)
    ny = spec.y_cardinality
    post = np.full(ny, 1.0 / ny)
    for _ in range(spec.num_sources):
        post = post[..., None, :] * cond
    # post has shape (x_1, ..., x_V, y)
    total = post.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, post / np.where(total > 0, total, 1.0), 1.0 / ny)


@dataclass(frozen=True)
class LabeledDataset:
    spec: SourceSpec
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    @property
    def samples(self) -> list[tuple[tuple[int, ...], int]]:
        return [(tuple(int(v) for v in row), int(lab)) for row, lab in zip(self.x, self.y)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        V = self.spec.num_sources
        w.writerow([f"x{i + 1}" for i in range(V)] + ["y"])
        for row, lab in zip(self.x, self.y):
            w.writerow([int(v) for v in row] + [int(lab)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, spec: SourceSpec) -> "LabeledDataset":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64)
        data = data.reshape(-1, spec.num_sources + 1)
        return cls(spec, data[:, :-1], data[:, -1])


def inverse_transform(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Smallest index whose cumulative mass strictly exceeds ``u``."""
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def sample_dataset(spec: SynthSpec, n: int, seed: int) -> LabeledDataset:
    """Draw ``n`` labeled samples: uniform ``y``, then each ``x_i`` from column ``y``.

    Draw order: all ``n`` labels first, then an ``(n, V)`` block of uniforms
    consumed row by row.
    """
    if n < 1:
        raise InvalidSpecError("n must be at least 1")
    rng = make_rng(seed)
    cond = build_source_conditional(spec)
    cdfs = np.cumsum(cond, axis=0)
    y = rng.integers(0, spec.y_cardinality, size=n)
    u = rng.random((n, spec.num_sources))
    x = np.empty((n, spec.num_sources), dtype=np.int64)
    for lab in range(spec.y_cardinality):
        rows = y == lab
        if rows.any():
            x[rows] = inverse_transform(cdfs[:, lab], u[rows].ravel()).reshape(-1, spec.num_sources)
    return LabeledDataset(spec.source_spec(spec.y_cardinality), x, y.astype(np.int64))
