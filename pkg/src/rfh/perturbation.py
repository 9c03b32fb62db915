"""Finite-rank symmetric perturbations of the metric on E.

Operators act on E-orthonormal coordinate vectors (see :mod:`rfh.spectral`),
so "symmetric with respect to the inner product of E" is plain matrix
symmetry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .functional import FunctionalContext


class PerturbationConfigError(ValueError):
    """A perturbation violates the norm gate ``sup ||K(w)|| < 1/2``."""


NORM_GATE = 0.5


@dataclass(frozen=True, eq=False)
class FiniteRankOperator:
    """``K w = sum_i (x_i, w) y_i`` with rows ``x_i`` of ``rights``, ``y_i`` of ``lefts``."""

    lefts: np.ndarray
    rights: np.ndarray

    def __post_init__(self):
        lefts = np.atleast_2d(np.asarray(self.lefts, float))
        rights = np.atleast_2d(np.asarray(self.rights, float))
        if lefts.shape != rights.shape:
            raise ValueError("lefts and rights must have the same shape")
        object.__setattr__(self, "lefts", lefts)
        object.__setattr__(self, "rights", rights)

    @classmethod
    def zero(cls, dim: int) -> "FiniteRankOperator":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)))

    @property
    def dim(self) -> int:
        return self.lefts.shape[1]

    @property
    def rank(self) -> int:
        return self.lefts.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.lefts.T @ self.rights

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return self.lefts.T @ (self.rights @ np.asarray(w, float))

    def scaled(self, c: float) -> "FiniteRankOperator":
        return FiniteRankOperator(c * self.lefts, self.rights)

    def symmetry_defect(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m - m.T))) if m.size else 0.0

    @property
    def symmetric(self) -> bool:
        return self.symmetry_defect() <= 1e-12 * max(1.0, self.norm_bound())

    def norm_bound(self) -> float:
        """Sum of factor norms; an upper bound for the operator norm."""
        return float(np.sum(np.linalg.norm(self.lefts, axis=1)
                            * np.linalg.norm(self.rights, axis=1)))

    def to_dict(self) -> dict:
        return {"lefts": self.lefts.tolist(), "rights": self.rights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteRankOperator":
        return cls(np.array(d["lefts"], float), np.array(d["rights"], float))


def make_hitting_operator(x: np.ndarray, y: np.ndarray,
                          xi: np.ndarray | None = None) -> FiniteRankOperator:
    """A symmetric finite-rank K with ``K(x) = y``.

    Uses ``(w, y) y / (x, y)`` when ``(x, y) != 0`` and otherwise the two-term
    operator ``[(w, xi) y + (w, y) xi] / (x, xi)`` for an auxiliary ``xi`` with
    ``(x, xi) != 0`` (``xi = x`` by default).
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if not np.any(x):
        raise ValueError("x must be nonzero")
    xy = float(x @ y)
    if abs(xy) > 1e-14 * np.linalg.norm(x) * np.linalg.norm(y):
        return FiniteRankOperator(y[None, :] / xy, y[None, :])
    xi = x if xi is None else np.asarray(xi, float)
    xxi = float(x @ xi)
    if xxi == 0:
        raise ValueError("auxiliary vector xi must satisfy (x, xi) != 0")
    return FiniteRankOperator(np.stack([y, xi]) / xxi, np.stack([xi, y]))


def bump(t: np.ndarray | float) -> np.ndarray:
    """``exp(-1/(1 - t^2))`` for ``t < 1``, else 0 (t is a distance, so t >= 0)."""
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = t < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


BUMP_MAX = float(np.exp(-1.0))


@dataclass(frozen=True, eq=False)
class BumpTerm:
    k0: FiniteRankOperator
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float))


@dataclass(frozen=True, eq=False)
class PerturbationMap:
    """``K(w) = [exp(-||w||^2)] * sum_i rho(||w - w_i||) k_i``."""

    terms: tuple[BumpTerm, ...]
    gaussian: bool = False

    @property
    def dim(self) -> int:
        return self.terms[0].k0.dim if self.terms else 0

    def operator(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, float)
        out = np.zeros((len(w), len(w)))
        for term in self.terms:
            r = float(bump(np.linalg.norm(w - term.center)))
            if r:
                out += r * term.k0.matrix
        if self.gaussian:
            out *= np.exp(-float(w @ w))
        return out

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return self.operator(w)

    def norm_bound(self) -> float:
        return BUMP_MAX * sum(t.k0.norm_bound() for t in self.terms)

    def check_gate(self):
        b = self.norm_bound()
        if not b < NORM_GATE:
            raise PerturbationConfigError(
                f"perturbation norm bound {b:.6g} violates sup ||K(w)|| < 1/2")

    def scaled_to(self, bound: float) -> "PerturbationMap":
        """Rescale so that :meth:`norm_bound` equals ``bound``."""
        cur = self.norm_bound()
        if cur == 0:
            return self
        c = bound / cur
        return PerturbationMap(tuple(BumpTerm(t.k0.scaled(c), t.center) for t in self.terms),
                               self.gaussian)

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, n_terms: int = 2, rank: int = 2,
               bound: float = 0.4, centers: np.ndarray | None = None,
               spread: float = 0.3, gaussian: bool = False) -> "PerturbationMap":
        """Seeded random element of the span of bump maps with a given norm bound."""
        terms = []
        for i in range(n_terms):
            a = rng.normal(size=(rank, dim))
            k0 = FiniteRankOperator(a, a)  # sum a_i a_i^T: symmetric
            c = rng.normal(size=dim) * spread if centers is None else centers[i % len(centers)]
            terms.append(BumpTerm(k0, c))
        return cls(tuple(terms), gaussian).scaled_to(bound)

    def to_dict(self) -> dict:
        return {"gaussian": self.gaussian,
                "terms": [{"center": t.center.tolist(), "k0": t.k0.to_dict()}
                          for t in self.terms]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationMap":
        return cls(tuple(BumpTerm(FiniteRankOperator.from_dict(t["k0"]), np.array(t["center"]))
                         for t in d["terms"]), bool(d.get("gaussian", False)))


def operator_norm_bound(pert) -> float:
    """Upper bound for ``sup_w ||K(w)||`` from factor norms."""
    if pert is None:
        return 0.0
    return pert.norm_bound()


def perturbed_gradient(ctx: FunctionalContext, pert: PerturbationMap | None,
                       w) -> np.ndarray:
    """``(I + K(w)) grad A(w)`` in coordinates."""
    x = ctx.coords(w)
    g = ctx.grad_vec(x)
    if pert is None or not pert.terms:
        return g
    pert.check_gate()
    return g + pert.operator(x) @ g


def gk_inner(pert: PerturbationMap | None, w: np.ndarray, xi1: np.ndarray,
             xi2: np.ndarray) -> float:
    """Perturbed metric ``g^K_w(xi1, xi2) = (xi1, (I + K(w))^-1 xi2)``."""
    if pert is None or not pert.terms:
        return float(xi1 @ xi2)
    op = np.eye(len(w)) + pert.operator(w)
    return float(xi1 @ np.linalg.solve(op, xi2))
