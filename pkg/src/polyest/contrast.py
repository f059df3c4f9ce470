from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ELLITOPE_SIDE = "ellitope-side"
POLYTOPE_SIDE = "polytope-side"


@dataclass(frozen=True, eq=False)
class ContrastMatrix:
    """Contrast columns ``h_j`` (as an ``m x mu`` matrix) with per-column provenance.

    ``weights`` are the rank-one weights ``lambda_j`` for ellitope-side columns
    (``nan`` for polytope-side ones).
    """

    H: np.ndarray
    provenance: tuple
    delta: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 2:
            raise ValueError("H must be a matrix")
        if len(self.provenance) != H.shape[1]:
            raise ValueError("one provenance tag per column")
        w = np.full(H.shape[1], np.nan) if self.weights is None else np.asarray(self.weights, float)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "provenance", tuple(self.provenance))
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def mu(self) -> int:
        return self.H.shape[1]

    @classmethod
    def empty(cls, m: int, delta: float) -> "ContrastMatrix":
        return cls(np.zeros((m, 0)), (), delta)

    def __add__(self, other: "ContrastMatrix") -> "ContrastMatrix":
        if self.m != other.m or self.delta != other.delta:
            raise ValueError("cannot concatenate contrasts of different shape or delta")
        return ContrastMatrix(
            np.hstack([self.H, other.H]),
            self.provenance + other.provenance,
            self.delta,
            np.concatenate([self.weights, other.weights]),
        )

    def pruned(self, norm, zero_tol: float = 1e-12, dup_tol: float = 1e-10) -> "ContrastMatrix":
        """Drop near-zero columns and (anti)parallel duplicates.

        Of two parallel columns the longer one is kept: ``|h'Ax| <= 1`` then
        implies the constraint of the shorter one, so no bound is lost.
        """
        if self.mu == 0:
            return self
        pis = np.atleast_1d(norm(self.H))
        norms = np.linalg.norm(self.H, axis=0)
        order = np.argsort(-norms, kind="stable")
        kept: list[int] = []
        for j in order:
            if pis[j] < zero_tol or norms[j] == 0:
                continue
            u = self.H[:, j] / norms[j]
            if any(abs(u @ self.H[:, k]) / norms[k] > 1.0 - dup_tol for k in kept):
                continue
            kept.append(j)
        kept.sort()
        return ContrastMatrix(
            self.H[:, kept], tuple(self.provenance[k] for k in kept), self.delta, self.weights[kept]
        )

    def count(self, tag: str) -> int:
        return sum(1 for p in self.provenance if p == tag)
