"""Hamiltonians H(x, u, v), the choice of s, and sampled hypothesis checks.

Fiber values are complex numbers (the circle spinor bundle has rank one).
Derivatives follow the real structure: ``H_u`` is the complex number with
``dH = Re(H_u conj(du))``, and the fiber Hessian is a real 4x4 matrix in the
coordinates ``(Re u, Im u, Re v, Im v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class EvaluationError(RuntimeError):
    """A nonlinearity could not be evaluated."""


class InfeasibleExponentsError(ValueError):
    """No s in (0, 1) satisfies both exponent inequalities."""


# ---------------------------------------------------------------------------
# choice of s


@dataclass(frozen=True)
class ExponentWitness:
    n: int
    p: float
    q: float
    interval: tuple[float, float]
    s: float


def exponent_condition(n: int, p: float, q: float) -> float:
    """``1/(p+1) + 1/(q+1) - (n-1)/n``; positive iff the exponents are admissible."""
    return 1.0 / (p + 1) + 1.0 / (q + 1) - (n - 1) / n


def select_s(n: int, p: float, q: float) -> ExponentWitness:
    """Open interval of admissible s and its midpoint.

    s must satisfy ``p < (n+2s)/(n-2s)`` and ``q < (n+2-2s)/(n+2s-2)``
    (a bound with nonpositive denominator is read as no constraint).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (p > 1 and q > 1):
        raise ValueError("p and q must exceed 1")
    lo = n * (p - 1) / (2 * (p + 1))
    hi = (n + 2 - q * (n - 2)) / (2 * (q + 1))
    lo, hi = max(lo, 0.0), min(hi, 1.0)
    if not lo < hi:
        gap = exponent_condition(n, p, q)
        raise InfeasibleExponentsError(
            f"no admissible s for n={n}, p={p}, q={q}: "
            f"1/(p+1) + 1/(q+1) > (n-1)/n fails (difference {gap:.6g}); "
            f"p < (n+2s)/(n-2s) needs s > {lo:.6g}, "
            f"q < (n+2-2s)/(n+2s-2) needs s < {hi:.6g}")
    return ExponentWitness(n, p, q, (lo, hi), 0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# Hamiltonians


def _profile(value, x: np.ndarray) -> np.ndarray:
    """Evaluate a constant or periodic grid-sampled coefficient at points x."""
    if np.isscalar(value):
        return np.full(np.shape(x), float(value))
    samples = np.asarray(value, dtype=float)
    grid = np.arange(len(samples)) / len(samples)
    return np.interp(np.mod(x, 1.0), grid, samples, period=1.0)


def _power_block(c: np.ndarray, w: np.ndarray, e: float):
    """Value, gradient and 2x2 Hessian of ``c |w|^(e+1) / (e+1)``."""
    r = np.abs(w)
    val = c * r ** (e + 1) / (e + 1)
    grad = c * r ** (e - 1) * w
    xy = np.stack([w.real, w.imag], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rad = np.where(r > 0, r ** (e - 3), 0.0)
    hess = (r ** (e - 1))[..., None, None] * np.eye(2) \
        + ((e - 1) * rad)[..., None, None] * xy[..., :, None] * xy[..., None, :]
    return val, grad, c[..., None, None] * hess


@dataclass(frozen=True)
class NonlinearitySpec:
    """A Hamiltonian on the fiber together with hypothesis constants.

    ``kind`` is ``"quadratic"`` (``H0 = (|u|^2 + |v|^2)/2``), ``"power"``
    (``f |u|^(p+1)/(p+1) + g |v|^(q+1)/(q+1)``) or ``"custom"`` (callbacks).
    ``scale`` multiplies H and all its derivatives.
    """

    kind: str
    p: float = 1.0
    q: float = 1.0
    f: float | tuple = 1.0
    g: float | tuple = 1.0
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    delta: float = 1e-3
    scale: float = 1.0
    h: Callable | None = field(default=None, compare=False)
    h_z: Callable | None = field(default=None, compare=False)
    h_zz: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("quadratic", "power", "custom"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "power":
            if not (self.p > 1 and self.q > 1):
                raise ValueError("power nonlinearity needs p, q > 1")
            for name in ("f", "g"):
                val = getattr(self, name)
                if np.any(np.asarray(val, dtype=float) <= 0):
                    raise ValueError(f"{name} must be strictly positive")
                if not np.isscalar(val):
                    object.__setattr__(self, name, tuple(float(t) for t in val))
        if self.kind == "custom" and (self.h is None or self.h_z is None):
            raise ValueError("custom nonlinearity needs h and h_z callbacks")
        if not 0 < self.c0 < 2:
            raise ValueError("c0 must lie in (0, 2)")
        if self.c1 <= 0 or self.c2 <= 0 or self.delta <= 0:
            raise ValueError("c1, c2 and delta must be positive")

    @classmethod
    def quadratic(cls, scale: float = 1.0, **kw) -> "NonlinearitySpec":
        return cls("quadratic", scale=scale, **kw)

    @classmethod
    def power(cls, p: float, q: float, f=1.0, g=1.0, **kw) -> "NonlinearitySpec":
        return cls("power", p=p, q=q, f=f, g=g, **kw)

    @classmethod
    def custom(cls, h, h_z, h_zz=None, **kw) -> "NonlinearitySpec":
        return cls("custom", h=h, h_z=h_z, h_zz=h_zz, **kw)

    # -- pointwise evaluation -------------------------------------------------

    def evaluate(self, x, u, v) -> np.ndarray:
        x, u, v = np.asarray(x, float), np.asarray(u, complex), np.asarray(v, complex)
        if self.kind == "quadratic":
            val = 0.5 * (np.abs(u) ** 2 + np.abs(v) ** 2)
        elif self.kind == "power":
            val = _power_block(_profile(self.f, x), u, self.p)[0] \
                + _power_block(_profile(self.g, x), v, self.q)[0]
        else:
            val = self._call(self.h, x, u, v)
            val = np.broadcast_to(np.asarray(val, float), np.broadcast(x, u, v).shape)
        return self.scale * val

    def evaluate_z(self, x, u, v) -> tuple[np.ndarray, np.ndarray]:
        x, u, v = np.asarray(x, float), np.asarray(u, complex), np.asarray(v, complex)
        if self.kind == "quadratic":
            hu, hv = u, v
        elif self.kind == "power":
            hu = _power_block(_profile(self.f, x), u, self.p)[1]
            hv = _power_block(_profile(self.g, x), v, self.q)[1]
        else:
            hu, hv = self._call(self.h_z, x, u, v)
            shape = np.broadcast(x, u, v).shape
            hu = np.broadcast_to(np.asarray(hu, complex), shape)
            hv = np.broadcast_to(np.asarray(hv, complex), shape)
        return self.scale * hu, self.scale * hv

    def evaluate_zz(self, x, u, v) -> np.ndarray:
        """Real fiber Hessian, shape ``broadcast(x, u, v).shape + (4, 4)``."""
        x, u, v = np.asarray(x, float), np.asarray(u, complex), np.asarray(v, complex)
        shape = np.broadcast(x, u, v).shape
        out = np.zeros(shape + (4, 4))
        if self.kind == "quadratic":
            out[...] = np.eye(4)
        elif self.kind == "power":
            u, v = np.broadcast_to(u, shape), np.broadcast_to(v, shape)
            out[..., :2, :2] = _power_block(_profile(self.f, x), u, self.p)[2]
            out[..., 2:, 2:] = _power_block(_profile(self.g, x), v, self.q)[2]
        else:
            if self.h_zz is None:
                raise EvaluationError("custom nonlinearity has no h_zz callback")
            out[...] = self._call(self.h_zz, x, u, v)
        return self.scale * out

    @staticmethod
    def _call(fn, x, u, v):
        try:
            return fn(x, u, v)
        except Exception as exc:  # noqa: BLE001 - user callback
            raise EvaluationError(f"custom nonlinearity callback failed: {exc}") from exc

    def is_s1_invariant(self) -> bool:
        return self.kind in ("quadratic", "power")

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ValueError("custom nonlinearities are not serializable")
        d = {"kind": self.kind, "c0": self.c0, "c1": self.c1, "c2": self.c2,
             "delta": self.delta, "scale": self.scale}
        if self.kind == "power":
            d.update(p=self.p, q=self.q,
                     f=self.f if np.isscalar(self.f) else list(self.f),
                     g=self.g if np.isscalar(self.g) else list(self.g))
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "NonlinearitySpec":
        data = dict(data)
        kind = data.pop("kind", None)
        allowed = {"p", "q", "f", "g", "c0", "c1", "c2", "delta", "scale"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown nonlinearity fields: {sorted(unknown)}")
        if kind == "quadratic":
            data.pop("p", None), data.pop("q", None)
        return cls(kind, **data)


@dataclass(frozen=True)
class LinearCombination:
    """``sum_i c_i H_i`` with the same evaluation interface as NonlinearitySpec."""

    terms: tuple[tuple[float, NonlinearitySpec], ...]

    def evaluate(self, x, u, v):
        return sum(c * h.evaluate(x, u, v) for c, h in self.terms)

    def evaluate_z(self, x, u, v):
        parts = [(c, h.evaluate_z(x, u, v)) for c, h in self.terms]
        return (sum(c * hu for c, (hu, _) in parts),
                sum(c * hv for c, (_, hv) in parts))

    def evaluate_zz(self, x, u, v):
        return sum(c * h.evaluate_zz(x, u, v) for c, h in self.terms)

    def is_s1_invariant(self) -> bool:
        return all(h.is_s1_invariant() for _, h in self.terms)


def integral_H(spec, z, num_points: int | None = None) -> float:
    """Grid quadrature of ``int_M H(x, u(x), v(x)) dx`` (volume one)."""
    from .spectral import to_grid

    g = to_grid(z, num_points)
    return float(np.mean(spec.evaluate(g.points, g.u, g.v)))


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    margin: float
    detail: str
    witness: dict | None = None
    heuristic: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "margin": self.margin,
                "detail": self.detail, "witness": self.witness,
                "heuristic": self.heuristic}


@dataclass
class HypothesisReport:
    checks: dict[str, HypothesisCheck]
    samples: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __getitem__(self, name: str) -> HypothesisCheck:
        return self.checks[name]

    def to_dict(self) -> dict:
        return {"samples": self.samples, "passed": self.passed,
                "checks": {k: c.to_dict() for k, c in self.checks.items()}}


def _witness(x, u, v, i) -> dict:
    return {"x": float(x[i]), "u": [float(u[i].real), float(u[i].imag)],
            "v": [float(v[i].real), float(v[i].imag)]}


def sample_fiber(n: int, box: float, rng: np.random.Generator):
    """Random ``(x, u, v)`` with ``|u|, |v|`` spread over ``[0, box]``.

    Radii are drawn log-uniformly so both the small and large field regimes
    are probed.
    """
    x = rng.random(n)
    r = box * np.exp(rng.uniform(np.log(1e-3), 0.0, size=(2, n)))
    ph = np.exp(2j * np.pi * rng.random((2, n)))
    return x, r[0] * ph[0], r[1] * ph[1]


def check_hypotheses(spec: NonlinearitySpec, sample_count: int = 10_000, box: float = 10.0,
                     rng: np.random.Generator | None = None, context=None,
                     level: float = 2.0, field_samples: int = 64) -> HypothesisReport:
    """Sample (H1)-(H3) at random fiber points; (H4) heuristically over fields.

    Margins: (H1) reports ``min(<H_z, z> - 2H)``, passing when it is at least
    ``-c0``; (H2) and (H3) report the smallest constant that would make the
    sampled bound hold, passing when it does not exceed ``c1`` / ``c2``.
    (H4) needs a :class:`~rfh.functional.FunctionalContext` and samples
    random band-limited fields with ``int H <= level``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = rng or np.random.default_rng(0)
    x, u, v = sample_fiber(sample_count, box, rng)
    H = spec.evaluate(x, u, v)
    hu, hv = spec.evaluate_z(x, u, v)
    p, q = (spec.p, spec.q) if spec.kind == "power" else (1.0, 1.0)
    checks = {}

    euler = np.real(hu * np.conj(u) + hv * np.conj(v)) - 2 * H
    i = int(np.argmin(euler))
    checks["H1"] = HypothesisCheck(
        "H1", bool(euler[i] >= -spec.c0), float(euler[i]),
        f"min <H_z,z> - 2H over samples; needs >= -c0 = {-spec.c0}",
        None if euler[i] >= -spec.c0 else _witness(x, u, v, i))

    au, av = np.abs(u), np.abs(v)
    need_u = np.abs(hu) / (1 + au ** p + av ** (p * (q + 1) / (p + 1)))
    need_v = np.abs(hv) / (1 + au ** (q * (p + 1) / (q + 1)) + av ** q)
    need = np.maximum(need_u, need_v)
    i = int(np.argmax(need))
    checks["H2"] = HypothesisCheck(
        "H2", bool(need[i] <= spec.c1), float(need[i]),
        f"smallest c1 fitting the samples; configured c1 = {spec.c1}",
        None if need[i] <= spec.c1 else _witness(x, u, v, i))

    mask = np.sqrt(au ** 2 + av ** 2) > spec.delta
    if mask.any():
        try:
            hzz = spec.evaluate_zz(x[mask], u[mask], v[mask])
        except EvaluationError as exc:
            checks["H3"] = HypothesisCheck("H3", False, math.nan, str(exc))
        else:
            norm = lambda blk: np.linalg.norm(blk, ord=2, axis=(-2, -1))  # noqa: E731
            need3 = np.maximum.reduce([
                norm(hzz[:, :2, :2]) / (1 + au[mask] ** (p - 1)),
                norm(hzz[:, 2:, 2:]) / (1 + av[mask] ** (q - 1)),
                norm(hzz[:, :2, 2:]), norm(hzz[:, 2:, :2])])
            j = int(np.argmax(need3))
            idx = np.flatnonzero(mask)[j]
            checks["H3"] = HypothesisCheck(
                "H3", bool(need3[j] <= spec.c2), float(need3[j]),
                f"smallest c2 fitting samples with |z| > delta; configured c2 = {spec.c2}",
                None if need3[j] <= spec.c2 else _witness(x, u, v, idx))

    if spec.kind == "power":
        C = max(np.max(_profile(spec.f, x)) / (p + 1), np.max(_profile(spec.g, x)) / (q + 1))
        ratio = np.abs(H) / (spec.scale * C * (1 + au ** (p + 1) + av ** (q + 1)))
        checks["growth"] = HypothesisCheck(
            "growth", bool(np.max(ratio) <= 1 + 1e-12), float(np.max(ratio)),
            f"|H| / (C (1 + |u|^(p+1) + |v|^(q+1))) with C = {C:.6g}")

    if context is not None:
        checks["H4"] = _check_h4(spec, context, level, field_samples, rng)
    return HypothesisReport(checks, sample_count)


def _check_h4(spec, ctx, level, count, rng) -> HypothesisCheck:
    from .spectral import PairField, synthesize

    n_dim = 1  # the circle
    s = ctx.s
    ru, rv = 2 * n_dim / (n_dim + 2 * s), 2 * n_dim / (n_dim + 2 * (1 - s))
    worst = 0.0
    nm = ctx.spectrum.num_modes
    for _ in range(count):
        a = rng.normal(size=nm) + 1j * rng.normal(size=nm)
        b = rng.normal(size=nm) + 1j * rng.normal(size=nm)
        z = PairField(ctx.spectrum, a, b, s)
        # rescale into the sublevel set {int H <= level}
        t = 1.0
        for _ in range(60):
            if integral_H(spec, z * t, ctx.num_points) <= level:
                break
            t *= 0.7
        z = z * t
        u = synthesize(ctx.spectrum, z.u, ctx.num_points)
        v = synthesize(ctx.spectrum, z.v, ctx.num_points)
        hu, hv = spec.evaluate_z(ctx.points, u, v)
        val = np.mean(np.abs(hu) ** ru) ** (1 / ru) + np.mean(np.abs(hv) ** rv) ** (1 / rv)
        worst = max(worst, float(val))
    return HypothesisCheck(
        "H4", bool(np.isfinite(worst)), worst,
        f"sampled sup of ||H_u||_L^{ru:.3g} + ||H_v||_L^{rv:.3g} over {count} fields "
        f"with int H <= {level}", heuristic=True)
