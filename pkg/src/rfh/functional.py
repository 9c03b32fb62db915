"""The Rabinowitz-Floer action, its gradient and Hessian.

All heavy lifting happens on the E-orthonormal coordinate vectors of
:mod:`rfh.spectral`.  In those coordinates the quadratic part of the action
is ``sum_j sign(lam_j) Re(a~_j conj(b~_j))``, so the operator ``D_s L``
becomes a signed swap of the u and v blocks with eigenvalues +-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .nonlinearity import NonlinearitySpec
from .spectral import (
    ExtendedPoint, PairField, Spectrum, analyze, coordinate_weights,
    default_grid_size, from_coords, synthesize, to_coords,
)


@dataclass(frozen=True, eq=False)
class FunctionalContext:
    """Inputs of the action: spectrum window, exponent s, nonlinearity, grid."""

    spectrum: Spectrum
    s: float
    nonlinearity: NonlinearitySpec
    num_points: int | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        if self.num_points is None:
            object.__setattr__(self, "num_points", default_grid_size(self.spectrum))
        if self.num_points < self.spectrum.band:
            raise ValueError("grid does not resolve the truncation band")

    def with_nonlinearity(self, h) -> "FunctionalContext":
        return replace(self, nonlinearity=h)

    def with_spectrum(self, spectrum: Spectrum) -> "FunctionalContext":
        return replace(self, spectrum=spectrum, num_points=None)

    # -- cached geometry ------------------------------------------------------

    @property
    def n(self) -> int:
        return self.spectrum.num_modes

    @property
    def dim(self) -> int:
        return 4 * self.n + 1

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.num_points) / self.num_points

    @property
    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        if "w" not in self._cache:
            self._cache["w"] = coordinate_weights(self.spectrum, self.s)
        return self._cache["w"]

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.spectrum.mode_eigenvalues)

    @property
    def basis_samples(self) -> np.ndarray:
        """Grid samples of the real E-orthonormal basis, shape (M, 4, 4n).

        Column i holds ``(Re u, Im u, Re v, Im v)`` of basis vector i.
        """
        if "phi" not in self._cache:
            n, M = self.n, self.num_points
            wu, wv = self.weights
            psi = synthesize(self.spectrum, np.eye(n), M)  # (n, M)
            phi = np.zeros((M, 4, 4 * n))
            for blk, (w, row) in enumerate([(wu, 0), (wu, 0), (wv, 2), (wv, 2)]):
                vals = (psi if blk % 2 == 0 else 1j * psi) / w[:, None]
                phi[:, row, blk * n:(blk + 1) * n] = vals.real.T
                phi[:, row + 1, blk * n:(blk + 1) * n] = vals.imag.T
            self._cache["phi"] = phi
        return self._cache["phi"]

    def swap(self, xz: np.ndarray) -> np.ndarray:
        """``D_s L`` in coordinates (acts on the 4n field coordinates)."""
        n, sg = self.n, self.signs
        a, b = xz[:2 * n], xz[2 * n:]
        return np.concatenate([np.tile(sg, 2) * b, np.tile(sg, 2) * a])

    # -- conversions -----------------------------------------------------------

    def coords(self, w) -> np.ndarray:
        if isinstance(w, ExtendedPoint):
            return to_coords(w)
        x = np.asarray(w, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a coordinate vector of length {self.dim}")
        return x

    def point(self, x: np.ndarray) -> ExtendedPoint:
        return from_coords(self.spectrum, self.s, x)

    def fields(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        wu, wv = self.weights
        a = (x[:n] + 1j * x[n:2 * n]) / wu
        b = (x[2 * n:3 * n] + 1j * x[3 * n:4 * n]) / wv
        M = self.num_points
        return synthesize(self.spectrum, a, M), synthesize(self.spectrum, b, M)

    # -- evaluations on coordinates -------------------------------------------

    def integral_h(self, x: np.ndarray) -> float:
        u, v = self.fields(x)
        return float(np.mean(self.nonlinearity.evaluate(self.points, u, v)))

    def quadratic(self, x: np.ndarray) -> float:
        """``(1/2) (Lz, z)_{L2}``."""
        xz = x[:-1]
        return 0.5 * float(xz @ self.swap(xz))

    def h_gradient(self, x: np.ndarray) -> np.ndarray:
        """Coordinates of ``D_s H_z(x, z)``: the E_s gradient of ``int H``."""
        n = self.n
        u, v = self.fields(x)
        hu, hv = self.nonlinearity.evaluate_z(self.points, u, v)
        cu, cv = analyze(self.spectrum, hu), analyze(self.spectrum, hv)
        wu, wv = self.weights
        return np.concatenate([cu.real / wu, cu.imag / wu, cv.real / wv, cv.imag / wv])

    def h_hessian(self, x: np.ndarray) -> np.ndarray:
        """Second derivative of ``int H`` in field coordinates, (4n, 4n)."""
        u, v = self.fields(x)
        hzz = self.nonlinearity.evaluate_zz(self.points, u, v)
        phi = self.basis_samples
        t = np.einsum("mab,mbk->mak", hzz, phi)
        return np.einsum("mai,mak->ik", phi, t) / self.num_points

    def action_vec(self, x: np.ndarray) -> float:
        return self.quadratic(x) - x[-1] * (self.integral_h(x) - 1.0)

    def grad_vec(self, x: np.ndarray) -> np.ndarray:
        xz, lam = x[:-1], x[-1]
        u, v = self.fields(x)
        hval = float(np.mean(self.nonlinearity.evaluate(self.points, u, v)))
        gz = self.swap(xz) - lam * self.h_gradient(x)
        return np.append(gz, -(hval - 1.0))

    def hess_vec(self, x: np.ndarray) -> np.ndarray:
        lam = x[-1]
        nz = 4 * self.n
        out = np.zeros((nz + 1, nz + 1))
        out[:nz, :nz] = self._swap_matrix() - lam * self.h_hessian(x)
        g = self.h_gradient(x)
        out[:nz, -1] = -g
        out[-1, :nz] = -g
        return 0.5 * (out + out.T)

    def _swap_matrix(self) -> np.ndarray:
        if "S" not in self._cache:
            nz = 4 * self.n
            self._cache["S"] = np.column_stack([self.swap(e) for e in np.eye(nz)])
        return self._cache["S"]


@dataclass(frozen=True)
class HessianForm:
    """Symmetric matrix of a bilinear form in an E-orthonormal basis."""

    matrix: np.ndarray
    kernel_tol: float = 1e-8

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    def inertia(self) -> tuple[int, int, int]:
        """``(n_negative, n_kernel, n_positive)`` with ``|mu| < kernel_tol`` as kernel."""
        mu = self.eigenvalues()
        neg = int(np.sum(mu <= -self.kernel_tol))
        ker = int(np.sum(np.abs(mu) < self.kernel_tol))
        return neg, ker, len(mu) - neg - ker

    def spectral_gap(self) -> float:
        """Smallest ``|mu|`` outside the kernel."""
        mu = np.abs(self.eigenvalues())
        outside = mu[mu >= self.kernel_tol]
        return float(outside.min()) if outside.size else np.inf

    def __call__(self, xi: np.ndarray, eta: np.ndarray) -> float:
        return float(xi @ self.matrix @ eta)


# ---------------------------------------------------------------------------
# operations


def action(ctx: FunctionalContext, w) -> float:
    """``(1/2)(Lz, z)_{L2} - lam (int H - 1)``."""
    return ctx.action_vec(ctx.coords(w))


def action_unconstrained(ctx: FunctionalContext, z: PairField) -> float:
    """``int <Du, v> - H(x, u, v) dx``."""
    x = to_coords(ExtendedPoint(z, 0.0))
    return ctx.quadratic(x) - ctx.integral_h(x)


def gradient(ctx: FunctionalContext, w) -> ExtendedPoint:
    """E-gradient ``(D_s{Lz - lam H_z}, -int (H - 1))`` as a tangent vector."""
    return ctx.point(ctx.grad_vec(ctx.coords(w)))


def hessian_form(ctx: FunctionalContext, w, kernel_tol: float = 1e-8) -> HessianForm:
    """Hessian of the action at ``w`` as a symmetric form in E-coordinates."""
    return HessianForm(ctx.hess_vec(ctx.coords(w)), kernel_tol)


def reference_operator(ctx: FunctionalContext, kernel_tol: float = 1e-8) -> HessianForm:
    """``D_s L (+) Id_R``: eigenvalues +-1 on E_s and +1 on the lambda axis."""
    nz = 4 * ctx.n
    out = np.zeros((nz + 1, nz + 1))
    out[:nz, :nz] = ctx._swap_matrix()
    out[-1, -1] = 1.0
    return HessianForm(out, kernel_tol)


def grid_action(ctx: FunctionalContext, w: ExtendedPoint) -> float:
    """Action by direct quadrature of ``<Du, v> - lam (H - 1)`` on the grid.

    Independent of the spectral shortcut used by :func:`action`; meant as an
    oracle.
    """
    z = w.z
    lam_d = ctx.spectrum.mode_eigenvalues
    M = ctx.num_points
    du = synthesize(ctx.spectrum, lam_d * z.u, M)
    u = synthesize(ctx.spectrum, z.u, M)
    v = synthesize(ctx.spectrum, z.v, M)
    dens = np.real(du * np.conj(v)) - w.lam * (ctx.nonlinearity.evaluate(ctx.points, u, v) - 1)
    return float(np.mean(dens))


def random_point(ctx: FunctionalContext, rng: np.random.Generator, scale: float = 0.5
                 ) -> np.ndarray:
    """Random coordinate vector with normal entries of size ``scale``."""
    return scale * rng.normal(size=ctx.dim)


def finite_difference_check(ctx: FunctionalContext, rng: np.random.Generator,
                            samples: int = 100, step: float = 1e-5,
                            scale: float = 0.5) -> dict:
    """Central-difference checks of the gradient and the Hessian form.

    For a random point ``x`` and direction ``e``: compares ``(grad A(x), e)``
    with ``(A(x + he) - A(x - he)) / 2h`` and ``Hess(x) e`` with
    ``(grad A(x + he) - grad A(x - he)) / 2h``.  Returns the worst relative
    errors (relative to ``max(1, |reference|)``).
    """
    worst_g = worst_h = 0.0
    for _ in range(samples):
        x = random_point(ctx, rng, scale)
        e = rng.normal(size=ctx.dim)
        e /= np.linalg.norm(e)
        g = ctx.grad_vec(x)
        fd = (ctx.action_vec(x + step * e) - ctx.action_vec(x - step * e)) / (2 * step)
        worst_g = max(worst_g, abs(fd - g @ e) / max(1.0, abs(fd)))
        hv = ctx.hess_vec(x) @ e
        fdh = (ctx.grad_vec(x + step * e) - ctx.grad_vec(x - step * e)) / (2 * step)
        worst_h = max(worst_h, float(np.linalg.norm(fdh - hv) / max(1.0, np.linalg.norm(fdh))))
    return {"samples": samples, "step": step, "gradient_rel_error": float(worst_g),
            "hessian_rel_error": float(worst_h)}
