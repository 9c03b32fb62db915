"""Graded mod-2 chain complexes, their homology and a connecting-orbit counter."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .critical import (
    CriticalManifold, CriticalPoint, analytic_index_oracle, h0_critical_manifolds,
    newton_solve, relative_index,
)
from .flow import Tolerances, integrate_flow
from .functional import FunctionalContext, hessian_form
from .spectral import ExtendedPoint, LSpectrum, to_coords

log = logging.getLogger(__name__)

PROVENANCES = ("structural-zero", "analytic", "numerical", "unknown")


class InconsistentComplexError(ValueError):
    """The specified boundary entries violate ``d o d = 0`` over Z/2."""


class WindowCoverageError(ValueError):
    """The degree window reaches generators outside the spectral truncation."""


@dataclass(frozen=True)
class Generator:
    label: str
    degree: int
    component: int | None = None


@dataclass
class ChainComplexZ2:
    """Generators with integer degrees and a partial mod-2 boundary operator.

    ``entries[(src, dst)] = (bit, provenance)`` for ``deg(dst) = deg(src) - 1``.
    Adjacent-degree pairs without an entry are unknown.
    """

    generators: list[Generator] = field(default_factory=list)
    entries: dict = field(default_factory=dict)

    def add_generator(self, label: str, degree: int, component: int | None = None):
        if any(g.label == label for g in self.generators):
            raise ValueError(f"duplicate generator {label!r}")
        self.generators.append(Generator(label, int(degree), component))

    def _gen(self, label: str) -> Generator:
        for g in self.generators:
            if g.label == label:
                return g
        raise KeyError(label)

    def set_entry(self, src: str, dst: str, bit: int, provenance: str = "numerical"):
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        if self._gen(dst).degree != self._gen(src).degree - 1:
            raise ValueError(f"{src} -> {dst} does not lower the degree by one")
        self.entries[(src, dst)] = (int(bit) % 2, provenance)

    def entry(self, src: str, dst: str) -> tuple[int, str]:
        return self.entries.get((src, dst), (0, "unknown"))

    @property
    def degrees(self) -> list[int]:
        return sorted({g.degree for g in self.generators})

    def in_degree(self, d: int) -> list[Generator]:
        return [g for g in self.generators if g.degree == d]

    def rank_table(self) -> dict[int, int]:
        return {d: len(self.in_degree(d)) for d in self.degrees}

    def boundary(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """``(bits, unknown_mask)`` of ``d_d : C_d -> C_{d-1}``, rows = C_{d-1}."""
        cols, rows = self.in_degree(d), self.in_degree(d - 1)
        bits = np.zeros((len(rows), len(cols)), dtype=np.uint8)
        unknown = np.zeros_like(bits, dtype=bool)
        for j, c in enumerate(cols):
            for i, r in enumerate(rows):
                b, prov = self.entry(c.label, r.label)
                bits[i, j] = b
                unknown[i, j] = prov == "unknown"
        return bits, unknown

    def permuted(self, rng: np.random.Generator) -> "ChainComplexZ2":
        order = rng.permutation(len(self.generators))
        return ChainComplexZ2([self.generators[i] for i in order], dict(self.entries))

    def to_dict(self) -> dict:
        ents = []
        for c in self.generators:
            for r in self.in_degree(c.degree - 1):
                b, prov = self.entry(c.label, r.label)
                ents.append({"from": c.label, "to": r.label, "bit": b, "provenance": prov})
        return {"generators": [{"label": g.label, "nu": g.degree, "component": g.component}
                               for g in sorted(self.generators, key=lambda g: (g.degree, g.label))],
                "boundary": sorted(ents, key=lambda e: (e["from"], e["to"]))}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ChainComplexZ2":
        cx = cls()
        for g in d["generators"]:
            cx.add_generator(g["label"], g["nu"], g.get("component"))
        for e in d.get("boundary", []):
            if e["provenance"] != "unknown":
                cx.set_entry(e["from"], e["to"], e["bit"], e["provenance"])
        return cx


def rank_gf2(a: np.ndarray) -> int:
    """Rank over Z/2 by row reduction."""
    m = np.array(a, dtype=np.uint8) % 2
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        piv = np.flatnonzero(m[r:, c])
        if piv.size == 0:
            continue
        p = r + piv[0]
        m[[r, p]] = m[[p, r]]
        hit = np.flatnonzero(m[:, c])
        hit = hit[hit != r]
        m[hit] ^= m[r]
        r += 1
        if r == rows:
            break
    return r


@dataclass
class HomologyResult:
    dims: dict[int, int]
    confidence: dict[int, str]

    def dim(self, d: int) -> int:
        return self.dims.get(d, 0)

    def confidence_of(self, d: int) -> str:
        return self.confidence.get(d, "exact")

    @property
    def euler_characteristic(self) -> int:
        return sum((-1) ** (d % 2) * n for d, n in self.dims.items())

    def to_dict(self) -> dict:
        return {"homology": [{"degree": d, "dim": self.dims[d], "confidence": self.confidence[d]}
                             for d in sorted(self.dims)],
                "euler_characteristic": self.euler_characteristic}


def check_d_squared(cx: ChainComplexZ2):
    """Raise if some fully specified entry of ``d_{d-1} d_d`` is odd."""
    for d in cx.degrees:
        hi, lo = cx.in_degree(d), cx.in_degree(d - 2)
        mid = cx.in_degree(d - 1)
        if not lo or not mid:
            continue
        for c in hi:
            for r in lo:
                terms = [(cx.entry(c.label, m.label), cx.entry(m.label, r.label)) for m in mid]
                if any(a[1] == "unknown" or b[1] == "unknown" for a, b in terms):
                    continue
                if sum(a[0] * b[0] for a, b in terms) % 2:
                    raise InconsistentComplexError(
                        f"d o d != 0 over Z/2 on the pair {c.label} -> {r.label}")


def homology(cx: ChainComplexZ2, degrees=None) -> HomologyResult:
    """``dim ker d_d - dim im d_{d+1}`` per degree.

    Unknown entries are taken as 0 in the rank computation and mark every
    degree they touch as ``conditional-on-unknown-entries``.
    """
    check_d_squared(cx)
    degrees = cx.degrees if degrees is None else sorted(degrees)
    dims, conf = {}, {}
    for d in degrees:
        n = len(cx.in_degree(d))
        out_bits, out_unk = cx.boundary(d)
        in_bits, in_unk = cx.boundary(d + 1)
        r_out = rank_gf2(out_bits) if out_bits.size else 0
        r_in = rank_gf2(in_bits) if in_bits.size else 0
        dims[d] = n - r_out - r_in
        conf[d] = "conditional-on-unknown-entries" if out_unk.any() or in_unk.any() else "exact"
    return HomologyResult(dims, conf)


# ---------------------------------------------------------------------------
# assembly


def _add_component_pair(cx: ChainComplexZ2, k: int, nu_plus: int, nu_minus: int,
                        window: tuple[int, int]):
    lo, hi = window
    labels = {}
    for which, nu in (("+", nu_plus), ("-", nu_minus)):
        if lo <= nu <= hi:
            label = f"p{k:+d}{which}"
            cx.add_generator(label, nu, k)
            labels[which] = label
    # two height-function lines on a circle cancel mod 2; for m > 1 the gap
    # nu(p+) - nu(p-) = 2m - 1 >= 3 leaves no adjacent-degree entry
    if len(labels) == 2 and nu_plus - nu_minus == 1:
        cx.set_entry(labels["+"], labels["-"], 0, "analytic")


def assemble_h0_complex(lsp: LSpectrum, window: tuple[int, int],
                        convention: str = "closed-form") -> ChainComplexZ2:
    """Complex of the height-function extrema ``p_k^+-`` on every component.

    Degrees come from :func:`analytic_index_oracle`; cross-component entries
    stay unknown.
    """
    lo, hi = int(window[0]), int(window[1])
    cx = ChainComplexZ2()
    if lo > hi:
        return cx
    ks = lsp.indices()
    kmax, kmin = max(ks), min(ks)
    top = analytic_index_oracle(lsp, kmax, "+", convention)[1]
    bottom = analytic_index_oracle(lsp, kmin, "-", convention)[1]
    if top < hi or bottom > lo:
        raise WindowCoverageError(
            f"window [{lo}, {hi}] exceeds the degrees [{bottom}, {top}] covered by the "
            "truncation; enlarge the spectrum")
    for k in ks:
        nu_p = analytic_index_oracle(lsp, k, "+", convention)[1]
        nu_m = analytic_index_oracle(lsp, k, "-", convention)[1]
        _add_component_pair(cx, k, nu_p, nu_m, (lo, hi))
    return cx


@dataclass
class GradedComponent:
    """Numerically graded critical manifold: index at a point and tangent dimension."""

    k: int
    point: CriticalPoint
    i_rel: int
    kernel_dim: int
    stabilized: bool

    @property
    def nu_minus(self) -> int:
        return self.i_rel

    @property
    def nu_plus(self) -> int:
        return self.i_rel + self.kernel_dim

    def to_dict(self) -> dict:
        return {"k": self.k, "i_rel": self.i_rel, "kernel_dim": self.kernel_dim,
                "nu_plus": self.nu_plus, "nu_minus": self.nu_minus,
                "stabilized": self.stabilized, "lambda": float(self.point.w.lam),
                "residual": self.point.residual}


def assemble_complex(components, window: tuple[int, int]) -> ChainComplexZ2:
    """Complex from numerically graded components (``nu(p-) = i_rel``,
    ``nu(p+) = i_rel + dim ker Hess``)."""
    cx = ChainComplexZ2()
    lo, hi = int(window[0]), int(window[1])
    if lo > hi:
        return cx
    for c in components:
        _add_component_pair(cx, c.k, c.nu_plus, c.nu_minus, (lo, hi))
    return cx


def grade_h0_components(ctx: FunctionalContext, ks, truncations=(8, 12, 16),
                        tol: float = 1e-10, threads: int = 1) -> list[GradedComponent]:
    """Newton-refine ``p_k^-`` of the H0 manifolds under ``ctx.nonlinearity`` and grade them.

    ``ctx`` may carry any nonlinearity close to H0; the H0 points seed Newton.
    """
    comps = {c.k: c for c in h0_critical_manifolds(ctx)}

    def one(k):
        cp = newton_solve(ctx, comps[k].p_minus, tol=tol)
        rep = relative_index(ctx, cp, truncations, residual_tol=max(1e-8, 10 * tol))
        return GradedComponent(k, cp, rep.value, rep.kernel_dim, rep.stabilized)

    ks = list(ks)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, ks))
    return [one(k) for k in ks]


# ---------------------------------------------------------------------------
# connecting orbits (heuristic)


@dataclass
class OrbitCount:
    count: int
    launched: int
    arrived: int
    diverged: int
    reason: str
    isolated: bool
    confidence: str = "heuristic"

    @property
    def mod2(self) -> int:
        return self.count % 2

    def to_dict(self) -> dict:
        return {"count": self.count, "mod2": self.mod2, "launched": self.launched,
                "arrived": self.arrived, "diverged": self.diverged, "reason": self.reason,
                "isolated": self.isolated, "confidence": self.confidence}


def _orbit_distance(a: ExtendedPoint, b: ExtendedPoint, samples: int = 64) -> float:
    """E-distance from ``a`` to the S^1 orbit of ``b``."""
    xa = to_coords(a)
    best = np.inf
    for th in np.linspace(0, 2 * np.pi, samples, endpoint=False):
        best = min(best, float(np.linalg.norm(xa - to_coords(ExtendedPoint(b.z.rotate(th), b.lam)))))
    return best


def _sphere_cascade(comp: CriticalManifold, start: np.ndarray, target: np.ndarray,
                    horizon: float, delta: float) -> bool:
    """Follow ``-grad h`` on the unit sphere of the component's real span."""
    e1 = np.zeros_like(start)
    e1[0] = 1.0

    def rhs(t, c):
        g = e1 - (e1 @ c) * c
        return -g

    sol = solve_ivp(rhs, (0.0, horizon), start, rtol=1e-10, atol=1e-12)
    end = sol.y[:, -1]
    return float(np.linalg.norm(end / np.linalg.norm(end) - target)) < delta


def shoot_connecting_orbits(ctx: FunctionalContext, pert, cp_from, cp_to,
                            bundle_size: int = 16, horizon: float = 20.0,
                            epsilon: float = 1e-4, delta: float = 1e-2,
                            nu_from: int | None = None, nu_to: int | None = None,
                            rng: np.random.Generator | None = None,
                            threads: int = 1) -> OrbitCount:
    """Count flow lines from ``cp_from`` to ``cp_to`` by shooting.

    Same-component pairs (``manifold_tag["k"]`` equal) are joined by lines of
    the height function on the sphere; these are launched from the tangent
    eps-sphere at ``cp_from``.  Other pairs use the negative gradient flow of
    the action launched along the unstable eigenvectors of the Hessian.
    The result is a heuristic count; it never enters a complex automatically.
    """
    rng = rng or np.random.default_rng(0)
    wf = cp_from.w if isinstance(cp_from, CriticalPoint) else cp_from
    wt = cp_to.w if isinstance(cp_to, CriticalPoint) else cp_to
    isolated = nu_from is None or nu_to is None or nu_from - nu_to == 1
    # p+ and p- of an m = 1 component share an S^1 orbit, so compare pointwise
    if np.linalg.norm(to_coords(wf) - to_coords(wt)) < 1e-12:
        return OrbitCount(0, 0, 0, 0, "identical endpoints", isolated)
    a_from, a_to = ctx.action_vec(to_coords(wf)), ctx.action_vec(to_coords(wt))
    tag_f = getattr(cp_from, "manifold_tag", None) or {}
    tag_t = getattr(cp_to, "manifold_tag", None) or {}
    same = "k" in tag_f and tag_f.get("k") == tag_t.get("k")
    if not same and a_to > a_from + 1e-12:
        return OrbitCount(0, 0, 0, 0, "target has higher action", isolated)

    if same:
        comp = next(c for c in h0_critical_manifolds(ctx) if c.k == tag_f["k"])
        m = comp.multiplicity
        # real coordinates on span{z_n, i z_n}: p+ = e1, p- = -e1
        start_c = _sphere_coords(comp, wf)
        target_c = _sphere_coords(comp, wt)
        tangent = np.linalg.svd(np.eye(2 * m) - np.outer(start_c, start_c))[0][:, :2 * m - 1]
        if 2 * m - 1 == 1:
            dirs = [tangent[:, 0], -tangent[:, 0]]
        else:
            dirs = [tangent @ (v / np.linalg.norm(v))
                    for v in rng.normal(size=(bundle_size, 2 * m - 1))]
        starts = [(start_c + epsilon * d) / np.linalg.norm(start_c + epsilon * d) for d in dirs]
        hits = [_sphere_cascade(comp, s, target_c, horizon, delta) for s in starts]
        n = int(sum(hits))
        return OrbitCount(n, len(starts), n, 0, "height-function lines on the component",
                          isolated)

    form = hessian_form(ctx, wf)
    mu, vec = np.linalg.eigh(form.matrix)
    unstable = vec[:, mu <= -form.kernel_tol]
    if unstable.shape[1] == 0:
        return OrbitCount(0, 0, 0, 0, "no unstable directions", isolated)
    coeff = rng.normal(size=(bundle_size, unstable.shape[1]))
    coeff /= np.linalg.norm(coeff, axis=1, keepdims=True)
    x0 = to_coords(wf)
    tol = Tolerances(stationary_tol=1e-8, divergence_bound=1e3)

    def launch(c):
        traj = integrate_flow(ctx, pert, x0 + epsilon * (unstable @ c), horizon, tol)
        return traj, _orbit_distance(traj.final, wt)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            runs = list(ex.map(launch, coeff))
    else:
        runs = [launch(c) for c in coeff]
    arrived = [tr for tr, dist in runs if dist < delta and not tr.diverged]
    diverged = sum(tr.diverged for tr, _ in runs)
    # distinct lines: dedupe by the state at the mid action level
    mid = 0.5 * (a_from + a_to)
    reps = []
    for tr in arrived:
        i = int(np.argmin(np.abs(tr.actions - mid)))
        s = tr.states[i]
        if all(np.linalg.norm(s - r) > delta for r in reps):
            reps.append(s)
    reason = "budget exhausted" if len(arrived) < bundle_size - diverged else "complete"
    return OrbitCount(len(reps), bundle_size, len(arrived), diverged, reason, isolated)


def _sphere_coords(comp: CriticalManifold, w: ExtendedPoint) -> np.ndarray:
    """Coordinates of ``w`` in the real basis ``(z_1, i z_1, ..., z_m, i z_m)`` / sqrt2."""
    basis = []
    for b in comp.basis:
        basis.append(to_coords(ExtendedPoint(b, 0.0))[:-1])
        basis.append(to_coords(ExtendedPoint(b * 1j, 0.0))[:-1])
    B = np.column_stack(basis)
    c = np.linalg.lstsq(B, to_coords(w)[:-1], rcond=None)[0]
    return c / np.linalg.norm(c)
