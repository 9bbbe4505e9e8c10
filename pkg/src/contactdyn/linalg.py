"""Null spaces and rank decisions by singular-value decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_GAP = 1e-8


@dataclass(frozen=True)
class NullSpaces:
    right: np.ndarray  # columns span ker M
    left: np.ndarray  # columns span ker M^T
    singular_values: np.ndarray

    @property
    def corank(self) -> int:
        return self.right.shape[1]


def null_spaces(M: np.ndarray, gap: float = RANK_GAP) -> NullSpaces:
    """Kernel and cokernel of a square matrix.

    A singular value counts as zero when it is below ``gap`` times the
    largest one (or when the matrix itself is zero).
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    thresh = gap * smax if smax > 0 else np.inf
    zero = s <= thresh if smax > 0 else np.ones_like(s, dtype=bool)
    return NullSpaces(right=Vt[zero].T, left=U[:, zero], singular_values=s)


def image_distance(M: np.ndarray, b: np.ndarray, gap: float = RANK_GAP) -> float:
    """Distance from ``b`` to the column space of ``M`` (same rank rule)."""
    ns = null_spaces(M, gap)
    if ns.left.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(ns.left.T @ b))
