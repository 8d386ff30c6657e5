"""Exact information measures on known pmf tensors.  Everything is in bits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, InvalidDistributionError
from .prob import Bipartition, Encoder, JointDist, enumerate_bipartitions, joint_zx

NEG_TOL = 1e-9
IDENTITY_TOL = 1e-9


def _plogp(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(np.sum(p * np.log2(p)))


def _clamp(value: float, what: str) -> float:
    if value < -NEG_TOL:
        raise ConsistencyError(f"{what} is negative beyond tolerance: {value:.3e}")
    return max(value, 0.0)


def entropy(dist) -> float:
    """Shannon entropy ``-sum p log2 p`` with ``0 log 0 = 0``."""
    p = np.asarray(dist, dtype=float)
    if np.any(p < -1e-12):
        raise InvalidDistributionError("distribution has negative entries")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise InvalidDistributionError(f"distribution sums to {total!r}")
    return max(-_plogp(p), 0.0)


def kl_divergence(p, q) -> float:
    """``D(p || q)`` in bits; returns ``math.inf`` when ``q`` misses support of ``p``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidDistributionError(f"shape mismatch {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] <= 0):
        return math.inf
    ps, qs = p[support], q[support]
    return max(float(np.sum(ps * (np.log2(ps) - np.log2(qs)))), 0.0)


def mutual_information(joint2) -> float:
    """``I(A;B) = H(A) + H(B) - H(A,B)`` for a 2-D joint pmf."""
    pab = np.asarray(joint2, dtype=float)
    if pab.ndim != 2:
        raise InvalidDistributionError(f"expected a 2-D joint, got ndim={pab.ndim}")
    if np.any(pab < -1e-12) or abs(pab.sum() - 1.0) > 1e-9:
        raise InvalidDistributionError("not a valid joint distribution")
    mi = -_plogp(pab.sum(axis=1)) - _plogp(pab.sum(axis=0)) + _plogp(pab)
    return _clamp(mi, "mutual information")


def _mi_zx(pzx: np.ndarray, keep: tuple[int, ...]) -> float:
    """``I(X_keep; Z)`` from a ``(*cards, |Z|)`` tensor, via entropies."""
    V = pzx.ndim - 1
    drop = tuple(i for i in range(V) if i not in keep)
    pxz = pzx.sum(axis=drop) if drop else pzx
    px = pxz.sum(axis=-1)
    pz = pxz.reshape(-1, pxz.shape[-1]).sum(axis=0)
    return -_plogp(px) - _plogp(pz) + _plogp(pxz)


def _mi_parts(px: np.ndarray, a: tuple[int, ...], b: tuple[int, ...]) -> float:
    """``I(X_a; X_b)`` for a partition (a, b) of the axes of ``px``."""
    pa = px.sum(axis=b)
    pb = px.sum(axis=a)
    return -_plogp(pa) - _plogp(pb) + _plogp(px)


def _cond_mi_direct(pzx: np.ndarray, s: tuple[int, ...], sc: tuple[int, ...]) -> float:
    """``sum_z p(z) D(p(x_S, x_Sc | z) || p(x_S|z) p(x_Sc|z))`` evaluated pointwise."""
    V = pzx.ndim - 1
    z = pzx.shape[-1]
    cards = pzx.shape[:-1]
    order = list(s) + list(sc) + [V]
    t = np.transpose(pzx, order)
    ns = int(np.prod([cards[i] for i in s]))
    nsc = int(np.prod([cards[i] for i in sc]))
    t = t.reshape(ns, nsc, z)
    ps_z = t.sum(axis=1, keepdims=True)
    psc_z = t.sum(axis=0, keepdims=True)
    pz = t.sum(axis=(0, 1), keepdims=True)
    mask = t > 0
    safe = lambda a: np.log2(np.where(a > 0, a, 1.0))  # noqa: E731
    log_ratio = safe(t) + safe(pz) - safe(ps_z) - safe(psc_z)
    return float(np.sum(np.where(mask, t * log_ratio, 0.0)))


@dataclass(frozen=True)
class InfoReport:
    mi_z_xv: float
    mi_z_parts: dict
    cond_mi: dict
    cond_mi_sum: float
    mi_parts: dict

    def to_dict(self) -> dict:
        out = {"mi_z_xv": self.mi_z_xv, "cond_mi_sum": self.cond_mi_sum}
        for bp, (a, b) in self.mi_z_parts.items():
            lab = bp.label()
            out[f"mi_z_s[{lab}]"] = a
            out[f"mi_z_sc[{lab}]"] = b
            out[f"cond_mi[{lab}]"] = self.cond_mi[bp]
            out[f"mi_s_sc[{lab}]"] = self.mi_parts[bp]
        return out


def info_report(joint: JointDist, enc: Encoder) -> InfoReport:
    """Every term of the bipartition key relation for ``(P(X^V), P(Z|X^V))``.

    The conditional MI is computed pointwise per ``z`` and cross-checked
    against ``I(X^V;Z) - I(X_S;Z) - I(X_Sc;Z) + I(X_S;X_Sc)``; a disagreement
    above 1e-9 bits raises :class:`ConsistencyError`.
    """
    pzx = joint_zx(joint, enc)
    V = joint.spec.num_sources
    mi_all = _clamp(_mi_zx(pzx, tuple(range(V))), "I(X^V;Z)")
    parts, cmis, pair_mis = {}, {}, {}
    for bp in enumerate_bipartitions(V):
        s, sc = bp.sides
        a = _clamp(_mi_zx(pzx, s), "I(X_S;Z)")
        b = _clamp(_mi_zx(pzx, sc), "I(X_Sc;Z)")
        pair = _clamp(_mi_parts(joint.probs, s, sc), "I(X_S;X_Sc)")
        direct = _cond_mi_direct(pzx, s, sc)
        via_identity = mi_all - a - b + pair
        if abs(direct - via_identity) > IDENTITY_TOL:
            raise ConsistencyError(
                f"key relation breached for {bp.label()}: direct={direct!r} "
                f"identity={via_identity!r}")
        parts[bp] = (a, b)
        cmis[bp] = _clamp(direct, "I(X_S;X_Sc|Z)")
        pair_mis[bp] = pair
    return InfoReport(mi_all, parts, cmis, float(sum(cmis.values())), pair_mis)


def cond_mi_identity(joint: JointDist, enc: Encoder, bp: Bipartition) -> tuple[float, float]:
    """(pointwise, identity-assembled) conditional MI for one bipartition, unclamped."""
    pzx = joint_zx(joint, enc)
    V = joint.spec.num_sources
    s, sc = bp.sides
    direct = _cond_mi_direct(pzx, s, sc)
    ident = (_mi_zx(pzx, tuple(range(V))) - _mi_zx(pzx, s) - _mi_zx(pzx, sc)
             + _mi_parts(joint.probs, s, sc))
    return direct, ident
