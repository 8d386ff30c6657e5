"""Dense discrete probability containers and the bipartition set.

Layout convention used throughout the package: a joint tensor over V sources
has shape ``(|X_1|, ..., |X_V|)`` in C order, so source 1 is the slowest
varying axis of the flattened vector.  Encoders store ``P(Z | x^V)`` as a
``(prod |X_i|, |Z|)`` matrix whose rows follow the same flattening; ``Z`` is
always the last axis.  Source indices are 0-based in the API.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidDistributionError, InvalidSpecError

SUM_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SourceSpec:
    cardinalities: tuple[int, ...]
    z_cardinality: int = 1

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "z_cardinality", int(self.z_cardinality))
        if len(cards) < 2:
            raise InvalidSpecError(f"need at least 2 sources, got {len(cards)}")
        if any(c < 2 for c in cards):
            raise InvalidSpecError(f"every cardinality must be >= 2, got {cards}")
        if self.z_cardinality < 1:
            raise InvalidSpecError(f"z_cardinality must be >= 1, got {self.z_cardinality}")

    @property
    def num_sources(self) -> int:
        return len(self.cardinalities)

    @property
    def size(self) -> int:
        return int(np.prod(self.cardinalities))

    def with_z(self, z_cardinality: int) -> "SourceSpec":
        return SourceSpec(self.cardinalities, z_cardinality)


@dataclass(frozen=True)
class JointDist:
    """Joint pmf ``P(X^V)`` stored as a tensor of shape ``spec.cardinalities``."""

    spec: SourceSpec
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.size != self.spec.size:
            raise InvalidArgumentError(
                f"probs has {probs.size} entries, spec needs {self.spec.size}")
        probs = _frozen(probs.reshape(self.spec.cardinalities))
        if np.any(probs < 0):
            raise InvalidDistributionError("joint has negative entries")
        total = probs.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise InvalidDistributionError(f"joint sums to {total!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_array(cls, probs, z_cardinality: int = 1) -> "JointDist":
        probs = np.asarray(probs, dtype=float)
        return cls(SourceSpec(probs.shape, z_cardinality), probs)

    @property
    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)

    def to_json(self) -> str:
        return json.dumps({
            "cardinalities": list(self.spec.cardinalities),
            "z_cardinality": self.spec.z_cardinality,
            "probs": self.flat.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "JointDist":
        doc = json.loads(text)
        for key in ("cardinalities", "z_cardinality", "probs"):
            if key not in doc:
                raise InvalidSpecError(f"joint document is missing field {key!r}")
        spec = SourceSpec(tuple(doc["cardinalities"]), doc["z_cardinality"])
        return cls(spec, np.asarray(doc["probs"], dtype=float))


@dataclass(frozen=True)
class Encoder:
    """Conditional table ``P(Z | x^V)``; one simplex row per joint realization."""

    spec: SourceSpec
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float).reshape(self.spec.size, self.spec.z_cardinality)
        if np.any(rows < 0):
            raise InvalidDistributionError("encoder has negative entries")
        err = np.max(np.abs(rows.sum(axis=1) - 1.0))
        if err > SUM_TOL:
            raise InvalidDistributionError(f"encoder rows deviate from 1 by {err:.3e}")
        object.__setattr__(self, "rows", _frozen(rows))

    @property
    def tensor(self) -> np.ndarray:
        """Rows reshaped to ``(|X_1|, ..., |X_V|, |Z|)``."""
        return self.rows.reshape(self.spec.cardinalities + (self.spec.z_cardinality,))

    @classmethod
    def from_tensor(cls, spec: SourceSpec, tensor) -> "Encoder":
        return cls(spec, np.asarray(tensor).reshape(spec.size, spec.z_cardinality))

    @classmethod
    def constant(cls, spec: SourceSpec, z: int = 0) -> "Encoder":
        rows = np.zeros((spec.size, spec.z_cardinality))
        rows[:, z] = 1.0
        return cls(spec, rows)

    @classmethod
    def uniform(cls, spec: SourceSpec) -> "Encoder":
        return cls(spec, np.full((spec.size, spec.z_cardinality), 1.0 / spec.z_cardinality))

    def to_json(self) -> str:
        return json.dumps({
            "cardinalities": list(self.spec.cardinalities),
            "z_cardinality": self.spec.z_cardinality,
            "rows": self.rows.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "Encoder":
        doc = json.loads(text)
        spec = SourceSpec(tuple(doc["cardinalities"]), doc["z_cardinality"])
        return cls(spec, np.asarray(doc["rows"], dtype=float))


@dataclass(frozen=True, order=True)
class Bipartition:
    """Unordered split ``(S, S^c)`` of the source indices with ``|S| <= |S^c|``."""

    s: tuple[int, ...]
    s_complement: tuple[int, ...]

    def __post_init__(self):
        s, sc = tuple(sorted(self.s)), tuple(sorted(self.s_complement))
        if not s:
            raise InvalidArgumentError("bipartition side S must be nonempty")
        if set(s) & set(sc):
            raise InvalidArgumentError(f"S={s} and S^c={sc} overlap")
        if len(s) > len(sc):
            raise InvalidArgumentError(f"|S|={len(s)} exceeds |S^c|={len(sc)}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "s_complement", sc)

    @property
    def sides(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.s, self.s_complement

    def label(self) -> str:
        """1-based compact label, e.g. ``'1|23'``; used as report/CSV keys."""
        fmt = lambda side: "".join(str(i + 1) for i in side)  # noqa: E731
        return f"{fmt(self.s)}|{fmt(self.s_complement)}"


def enumerate_bipartitions(num_sources: int) -> list[Bipartition]:
    """All unordered splits of ``range(num_sources)``, each exactly once.

    Sorted by ``(|S|, S)``.  When ``|S| == |S^c|`` only the orientation with
    index 0 in ``S`` is kept.
    """
    if num_sources < 2:
        raise InvalidSpecError(f"need at least 2 sources, got {num_sources}")
    universe = range(num_sources)
    out = []
    for size in range(1, num_sources // 2 + 1):
        for s in itertools.combinations(universe, size):
            sc = tuple(i for i in universe if i not in s)
            if len(s) == len(sc) and 0 not in s:
                continue
            out.append(Bipartition(s, sc))
    return out


def _check_indices(num_sources: int, idx: Iterable[int], what: str) -> tuple[int, ...]:
    idx = tuple(sorted(set(int(i) for i in idx)))
    if not idx:
        raise InvalidArgumentError(f"{what} index set is empty")
    if idx[0] < 0 or idx[-1] >= num_sources:
        raise InvalidArgumentError(f"{what} indices {idx} out of range for V={num_sources}")
    return idx


def marginalize(joint: JointDist, keep: Sequence[int]) -> np.ndarray:
    """Sum out every source not in ``keep``; axes of the result follow sorted ``keep``."""
    keep = _check_indices(joint.spec.num_sources, keep, "keep")
    drop = tuple(i for i in range(joint.spec.num_sources) if i not in keep)
    return joint.probs.sum(axis=drop) if drop else np.array(joint.probs)


@dataclass(frozen=True)
class Conditional:
    """``P(X_target | X_given)`` with axes ``(*given, *target)``.

    Slices whose conditioning mass is zero are uniform and marked in ``zero_mass``.
    """

    target: tuple[int, ...]
    given: tuple[int, ...]
    probs: np.ndarray = field(repr=False)
    zero_mass: np.ndarray = field(repr=False)

    @property
    def any_zero_mass(self) -> bool:
        return bool(self.zero_mass.any())


def conditional_on(joint: JointDist, target: Sequence[int], given: Sequence[int]) -> Conditional:
    V = joint.spec.num_sources
    target = _check_indices(V, target, "target")
    given = _check_indices(V, given, "given")
    if set(target) & set(given):
        raise InvalidArgumentError(f"target {target} and given {given} overlap")
    both = tuple(sorted(target + given))
    pair = marginalize(joint, both)
    # reorder axes to (*given, *target)
    order = [both.index(i) for i in given + target]
    pair = np.transpose(pair, order)
    t_axes = tuple(range(len(given), len(given) + len(target)))
    mass = pair.sum(axis=t_axes, keepdims=True)
    zero = mass <= 0
    n_target = int(np.prod([joint.spec.cardinalities[i] for i in target]))
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(zero, 1.0 / n_target, pair / np.where(zero, 1.0, mass))
    return Conditional(target, given, cond, zero.reshape(zero.shape[: len(given)]))


def joint_zx(joint: JointDist, enc: Encoder) -> np.ndarray:
    """``P(x^V, z) = P(z | x^V) P(x^V)`` with shape ``(*cardinalities, |Z|)``."""
    if joint.spec.cardinalities != enc.spec.cardinalities:
        raise InvalidArgumentError(
            f"joint cardinalities {joint.spec.cardinalities} != encoder "
            f"cardinalities {enc.spec.cardinalities}")
    return enc.tensor * joint.probs[..., None]
