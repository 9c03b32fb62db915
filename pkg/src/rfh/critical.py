"""Critical points of the action, relative indices and Dirac-system rescaling."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .functional import FunctionalContext, hessian_form, reference_operator
from .spectral import (
    ExtendedPoint, LSpectrum, PairField, l_eigenvectors, l_spectrum, synthesize, to_coords,
)

log = logging.getLogger(__name__)


class NonconvergenceError(RuntimeError):
    """Newton iteration failed; ``diagnostics`` says why."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


class UnsupportedBranchError(ValueError):
    """Rescaling requested for a critical point with lambda <= 0."""


@dataclass
class CriticalPoint:
    w: ExtendedPoint
    residual: float
    kernel_dim: int
    i_rel: int | None = None
    manifold_tag: dict | None = None
    iterations: int = 0

    def to_dict(self) -> dict:
        z = self.w.z
        return {"u": [[float(c.real), float(c.imag)] for c in z.u],
                "v": [[float(c.real), float(c.imag)] for c in z.v],
                "lambda": float(self.w.lam), "residual": self.residual,
                "kernel_dim": self.kernel_dim, "i_rel": self.i_rel,
                "manifold_tag": self.manifold_tag, "iterations": self.iterations}


def newton_solve(ctx: FunctionalContext, w_guess, tol: float = 1e-10, max_iter: int = 50,
                 rcond: float = 1e-9, kernel_tol: float = 1e-8) -> CriticalPoint:
    """Damped Newton on ``grad A = 0`` with minimum-norm least-squares steps.

    Rank-deficient Hessians (the S^1 orbit, tangents of critical manifolds)
    are handled by the pseudo-inverse, so steps never move along the kernel.
    """
    x = ctx.coords(w_guess).copy()
    F = ctx.grad_vec(x)
    r = float(np.linalg.norm(F))
    history = [r]
    for it in range(1, max_iter + 1):
        if r < tol:
            break
        J = ctx.hess_vec(x)
        step = np.linalg.lstsq(J, -F, rcond=rcond)[0]
        predicted = float(np.linalg.norm(J @ step + F))
        if predicted > (1 - 1e-6) * r:
            raise NonconvergenceError(
                "structurally singular: the gradient has no component in the range "
                "of the Hessian (no transverse descent direction)",
                {"iteration": it, "residual": r, "history": history,
                 "predicted_residual": predicted})
        t = 1.0
        while True:
            x_new = x + t * step
            F_new = ctx.grad_vec(x_new)
            r_new = float(np.linalg.norm(F_new))
            if r_new < (1 - 1e-4 * t) * r or t < 1e-6:
                break
            t *= 0.5
        if r_new >= r:
            raise NonconvergenceError(
                "line search failed to reduce the gradient norm",
                {"iteration": it, "residual": r, "history": history})
        x, F, r = x_new, F_new, r_new
        history.append(r)
    else:
        if r >= tol:
            raise NonconvergenceError(
                f"no convergence in {max_iter} iterations",
                {"iteration": max_iter, "residual": r, "history": history})
    kernel = hessian_form(ctx, x, kernel_tol).inertia()[1]
    return CriticalPoint(ctx.point(x), r, kernel, iterations=len(history) - 1)


# ---------------------------------------------------------------------------
# critical manifolds of H0


@dataclass
class CriticalManifold:
    """A component sigma_k: normalized L-eigenvectors at ``eigenvalue``."""

    k: int
    eigenvalue: float
    multiplicity: int
    basis: list = field(repr=False)

    @property
    def sphere_dim(self) -> int:
        return 2 * self.multiplicity - 1

    @property
    def p_plus(self) -> ExtendedPoint:
        """Maximum of the height ``h(z) = Re (z, z_{k,1})_{L2} / 2`` on the sphere."""
        return ExtendedPoint(self.basis[0], self.eigenvalue)

    @property
    def p_minus(self) -> ExtendedPoint:
        return ExtendedPoint(-self.basis[0], self.eigenvalue)

    def critical_point(self, which: str = "-") -> CriticalPoint:
        """``p_k^+`` or ``p_k^-`` as a tagged critical point (exact, residual not evaluated)."""
        w = self.p_plus if which == "+" else self.p_minus
        return CriticalPoint(w, 0.0, self.sphere_dim,
                             manifold_tag={"k": self.k, "sphere_dim": self.sphere_dim,
                                           "extremum": which})

    def point(self, coeffs) -> ExtendedPoint:
        """Point ``sum c_n z_{k,n}`` with ``sum |c_n|^2 = 1``."""
        coeffs = np.asarray(coeffs, complex)
        coeffs = coeffs / np.linalg.norm(coeffs)
        z = sum((c * b for c, b in zip(coeffs, self.basis)), PairField.zeros(
            self.basis[0].spectrum, self.basis[0].s))
        return ExtendedPoint(z, self.eigenvalue)

    def distance(self, w: ExtendedPoint) -> float:
        """E-distance from ``w`` to the component (exact: project onto the span)."""
        x = to_coords(w)
        B = np.column_stack([to_coords(ExtendedPoint(b, 0.0))[:-1] for b in self.basis]
                            + [to_coords(ExtendedPoint(1j * b, 0.0))[:-1] for b in self.basis])
        # the sphere is {sum c_n z_n : |c| = 1} inside the real span of B
        G = B.T @ B
        # express in L2-orthonormal real coordinates of the span
        c = np.linalg.solve(G, B.T @ x[:-1])
        scale = np.sqrt(np.sum(c ** 2))
        c_on = c / scale if scale > 0 else np.eye(len(c))[0]
        y = np.append(B @ c_on, self.eigenvalue)
        return float(np.linalg.norm(x - y))

    def to_dict(self) -> dict:
        return {"k": self.k, "eigenvalue": self.eigenvalue,
                "multiplicity": self.multiplicity, "sphere_dim": self.sphere_dim}


def h0_critical_manifolds(ctx: FunctionalContext) -> list[CriticalManifold]:
    """Components of Crit(A_{H0}) in the window, ordered by k.

    Basis vectors have L2 norm sqrt(2), so ``int H0 = 1`` on the sphere.
    """
    spec = ctx.spectrum
    lsp = l_spectrum(spec)
    out = []
    for k in lsp.indices():
        mu, m = lsp[k]
        basis = [PairField(spec, u, v, ctx.s) for u, v in l_eigenvectors(spec, mu)]
        assert len(basis) == m
        out.append(CriticalManifold(k, mu, m, basis))
    return out


# ---------------------------------------------------------------------------
# relative index


@dataclass
class IndexReport:
    truncations: list[int]
    n_minus_hess: list[int]
    n_minus_ref: list[int]
    i_rel: list[int]
    kernel_dims: list[int]
    spectral_gaps: list[float]
    stabilized: bool
    sphere_dim: int | None = None

    @property
    def value(self) -> int:
        return self.i_rel[-1]

    @property
    def kernel_dim(self) -> int:
        return self.kernel_dims[-1]

    @property
    def nu_plus(self) -> int | None:
        return None if self.sphere_dim is None else self.value + self.sphere_dim

    @property
    def nu_minus(self) -> int:
        return self.value

    def to_dict(self) -> dict:
        return {"truncations": self.truncations, "n_minus_hess": self.n_minus_hess,
                "n_minus_ref": self.n_minus_ref, "i_rel_per_truncation": self.i_rel,
                "i_rel": self.value, "stabilized": self.stabilized,
                "kernel_dim": self.kernel_dim, "spectral_gaps": self.spectral_gaps,
                "nu_plus": self.nu_plus, "nu_minus": self.nu_minus}


def embed(w: ExtendedPoint, spectrum) -> ExtendedPoint:
    """Re-express ``w`` over another window by matching mode labels."""
    src = w.z.spectrum
    pos = {int(l): i for i, l in enumerate(spectrum.labels)}
    u = np.zeros(spectrum.num_modes, complex)
    v = np.zeros(spectrum.num_modes, complex)
    lost = 0.0
    for i, l in enumerate(src.labels):
        j = pos.get(int(l))
        if j is None:
            lost += abs(w.z.u[i]) ** 2 + abs(w.z.v[i]) ** 2
            continue
        if not np.isclose(spectrum.mode_eigenvalues[j], src.mode_eigenvalues[i]):
            raise ValueError("mode label maps to a different eigenvalue")
        u[j], v[j] = w.z.u[i], w.z.v[i]
    if lost > 1e-24 * max(1.0, w.z.l2_norm() ** 2):
        raise ValueError("point has modes outside the requested truncation")
    return ExtendedPoint(PairField(spectrum, u, v, w.z.s), w.lam)


def _count(ctx, w, kernel_tol):
    hess = hessian_form(ctx, w, kernel_tol)
    neg, ker, _ = hess.inertia()
    ref_neg = reference_operator(ctx, kernel_tol).inertia()[0]
    return neg, ref_neg, ker, hess.spectral_gap()


def relative_index(ctx: FunctionalContext, cp, truncations=(8, 12, 16),
                   kernel_tol: float = 1e-8, residual_tol: float = 1e-8,
                   sphere_dim: int | None = None, threads: int = 1) -> IndexReport:
    """Truncated relative index ``n_-(Hess) - n_-(D_s L (+) Id)`` per window size.

    Eigenvalues with ``|mu| < kernel_tol`` are neither negative nor positive.
    ``stabilized`` requires the two largest truncations to agree.
    """
    w = cp.w if isinstance(cp, CriticalPoint) else cp
    truncations = sorted(int(n) for n in truncations)
    base = ctx.spectrum
    jobs = []
    for n in truncations:
        sub = base.truncate(n) if n < base.num_modes else base
        if n > base.num_modes:
            raise ValueError(f"truncation {n} exceeds the {base.num_modes} available modes")
        sub_ctx = ctx.with_spectrum(sub)
        sub_w = embed(w, sub)
        res = float(np.linalg.norm(sub_ctx.grad_vec(to_coords(sub_w))))
        if res > residual_tol:
            raise ValueError(f"point is not critical in truncation {n} (residual {res:.3g})")
        jobs.append((sub_ctx, sub_w))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            counts = list(ex.map(lambda j: _count(*j, kernel_tol), jobs))
    else:
        counts = [_count(c, x, kernel_tol) for c, x in jobs]
    neg = [c[0] for c in counts]
    ref = [c[1] for c in counts]
    irel = [a - b for a, b in zip(neg, ref)]
    stabilized = len(irel) >= 2 and irel[-1] == irel[-2]
    return IndexReport(truncations, neg, ref, irel, [c[2] for c in counts],
                       [c[3] for c in counts], stabilized, sphere_dim)


def analytic_index_oracle(lsp: LSpectrum, k: int, which: str = "-",
                          convention: str = "closed-form") -> tuple[int, int]:
    """Closed-form ``(i_rel, nu)`` at ``p_k^+`` (``which="+"``) or ``p_k^-``.

    ``convention="closed-form"`` uses ``-2 sum_{k<=l<0} m_l`` for k < 0 and
    ``1 + 2 sum_{0<l<k} m_l`` for k > 0.  ``convention="inertia"`` gives the
    negative-k value ``1 - 2 sum_{k<=l<0} m_l`` that a direct inertia count
    of the Hessian produces.
    """
    if k == 0:
        raise ValueError("k must be nonzero")
    if which not in ("+", "-"):
        raise ValueError("which must be '+' or '-'")
    m = lsp.multiplicity
    if k > 0:
        i_rel = 1 + 2 * sum(m(l) for l in range(1, k))
    else:
        i_rel = -2 * sum(m(l) for l in range(k, 0))
        if convention == "inertia":
            i_rel += 1
        elif convention != "closed-form":
            raise ValueError(f"unknown convention {convention!r}")
    nu = i_rel + (2 * m(k) - 1 if which == "+" else 0)
    return i_rel, nu


# ---------------------------------------------------------------------------
# rescaling to solutions of the Dirac system


@dataclass
class DiracSolution:
    u: PairField
    exponents: tuple[float, float]
    residual_u: float
    residual_v: float
    convention: str

    @property
    def residual(self) -> float:
        return max(self.residual_u, self.residual_v)

    def to_dict(self) -> dict:
        z = self.u
        return {"u0": [[float(c.real), float(c.imag)] for c in z.u],
                "v0": [[float(c.real), float(c.imag)] for c in z.v],
                "exponents": list(self.exponents), "residual_Du": self.residual_u,
                "residual_Dv": self.residual_v, "residual": self.residual,
                "max_coefficient_modulus": float(max(np.abs(z.u).max(), np.abs(z.v).max())),
                "convention": self.convention}


def rescaling_exponents(p: float, q: float, convention: str = "derived") -> tuple[float, float]:
    if p * q == 1:
        raise ValueError("pq = 1")
    den = p * q - 1 if convention == "derived" else 1 - p * q
    if convention not in ("derived", "negated"):
        raise ValueError(f"unknown convention {convention!r}")
    return (q + 1) / den, (p + 1) / den


def rescale_to_dirac_solution(ctx: FunctionalContext, cp, convention: str = "derived"
                              ) -> DiracSolution:
    """Map a critical point ``(z*, lam*)`` to ``(lam*^a u*, lam*^b v*)``.

    Residuals are sup norms on the grid of ``Du0 - H_v(z0)`` and
    ``Dv0 - H_u(z0)``.
    """
    h = ctx.nonlinearity
    if getattr(h, "kind", None) != "power":
        raise ValueError("rescaling applies to power nonlinearities")
    w = cp.w if isinstance(cp, CriticalPoint) else cp
    lam = float(w.lam)
    if lam <= 0:
        raise UnsupportedBranchError("rescaling implemented for lambda* > 0 only")
    if w.z.l2_norm() == 0:
        raise ValueError("z* must be nonzero")
    a, b = rescaling_exponents(h.p, h.q, convention)
    z0 = PairField(w.z.spectrum, lam ** a * w.z.u, lam ** b * w.z.v, w.z.s)
    spec, M = ctx.spectrum, ctx.num_points
    eig = spec.mode_eigenvalues
    u = synthesize(spec, z0.u, M)
    v = synthesize(spec, z0.v, M)
    du = synthesize(spec, eig * z0.u, M)
    dv = synthesize(spec, eig * z0.v, M)
    hu, hv = h.evaluate_z(ctx.points, u, v)
    hu, hv = hu / h.scale, hv / h.scale
    return DiracSolution(z0, (a, b), float(np.max(np.abs(du - hv))),
                         float(np.max(np.abs(dv - hu))), convention)


def single_mode_guess(ctx: FunctionalContext, mode: int | None = None, amplitude: float = 1.0,
                      lam: float = 1.0) -> ExtendedPoint:
    """``u = v = amplitude * psi`` on one positive mode (the smallest by default)."""
    eig = ctx.spectrum.mode_eigenvalues
    if mode is None:
        pos = np.flatnonzero(eig > 0)
        mode = int(pos[np.argmin(eig[pos])])
    u = np.zeros(ctx.n, complex)
    u[mode] = amplitude
    return ExtendedPoint(PairField(ctx.spectrum, u, u.copy(), ctx.s), lam)


def index_of_h0_point(ctx: FunctionalContext, k: int, truncations=(8, 12, 16),
                      threads: int = 1) -> IndexReport:
    comp = next(c for c in h0_critical_manifolds(ctx) if c.k == k)
    return relative_index(ctx, comp.p_minus, truncations, sphere_dim=comp.sphere_dim,
                          threads=threads)
