"""Spectral model of the Dirac operator and the pair space E_s.

Every operator here is diagonal (or 2x2 block-diagonal) in the eigenbasis of
D, so fields are stored as complex coefficient vectors over a finite window
of eigenmodes.  Each mode also carries an integer *label* ``j`` which places
its eigenfunction ``exp(2*pi*i*(j + 1/2)*t)`` on the unit circle; this is what
lets the nonlinear terms be evaluated on a grid, for circle and synthetic
spectra alike.

Real coordinates
----------------
Many consumers (Hessians, flows, perturbations) want E x R as a plain
Euclidean space.  :func:`to_coords` maps an :class:`ExtendedPoint` to the
vector ``[Re a~, Im a~, Re b~, Im b~, lam]`` with ``a~ = |lam_k|^s a`` and
``b~ = |lam_k|^(1-s) b``.  The standard dot product of these vectors is the
inner product of E x R.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class SpectrumError(ValueError):
    """Raised for invalid spectral data."""


class ResolutionError(ValueError):
    """Raised when a grid cannot resolve the band of a field."""


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalue data of D restricted to a finite window.

    Attributes:
        model: ``"circle"`` or ``"synthetic"``.
        eigenvalues: strictly increasing ``(eigenvalue, multiplicity)`` pairs.
        labels: one circle frequency label per mode, in mode order.
    """

    model: str
    eigenvalues: tuple[tuple[float, int], ...]
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.model not in ("circle", "synthetic"):
            raise SpectrumError(f"unknown spectrum model {self.model!r}")
        if not self.eigenvalues:
            raise SpectrumError("spectrum has no eigenvalues")
        prev = -np.inf
        for lam, m in self.eigenvalues:
            if lam == 0:
                raise SpectrumError("0 must not be an eigenvalue of D")
            if not lam > prev:
                raise SpectrumError("eigenvalues must be strictly increasing")
            if int(m) != m or m < 1:
                raise SpectrumError(f"multiplicity of {lam} must be a positive integer")
            prev = lam
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.num_modes,):
            raise SpectrumError("one label per mode required")
        if len(np.unique(labels)) != len(labels):
            raise SpectrumError("mode labels must be distinct")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def synthetic(cls, pairs: Sequence[tuple[float, int]]) -> "Spectrum":
        pairs = sorted((float(lam), int(m)) for lam, m in pairs)
        n = sum(m for _, m in pairs)
        labels = np.arange(n) - n // 2
        return cls("synthetic", tuple(pairs), labels)

    @property
    def mode_eigenvalues(self) -> np.ndarray:
        """Eigenvalue of every mode, repeated by multiplicity."""
        return np.repeat([lam for lam, _ in self.eigenvalues],
                         [m for _, m in self.eigenvalues]).astype(float)

    @property
    def num_modes(self) -> int:
        return sum(m for _, m in self.eigenvalues)

    @property
    def band(self) -> int:
        """Width of the label range, i.e. the minimum grid size."""
        return int(self.labels.max() - self.labels.min() + 1)

    def multiplicity(self, lam: float, rtol: float = 1e-12) -> int:
        for mu, m in self.eigenvalues:
            if abs(mu - lam) <= rtol * max(1.0, abs(lam)):
                return m
        return 0

    def truncate(self, num_modes: int) -> "Spectrum":
        """Keep the ``num_modes`` modes of smallest ``|eigenvalue|``.

        The cut must fall between shells of equal ``|eigenvalue|`` so that no
        eigenspace of D (or of L) is split.
        """
        if num_modes > self.num_modes:
            raise SpectrumError(
                f"cannot truncate {self.num_modes} modes to {num_modes}")
        eigs = self.mode_eigenvalues
        order = np.lexsort((eigs, np.abs(eigs)))
        keep = np.sort(order[:num_modes])
        if num_modes < self.num_modes:
            cut_in = np.abs(eigs[order[num_modes - 1]])
            cut_out = np.abs(eigs[order[num_modes]])
            if np.isclose(cut_in, cut_out, rtol=1e-12, atol=0):
                raise SpectrumError(
                    f"truncation to {num_modes} modes splits the shell |lambda|={cut_in}")
        kept = eigs[keep]
        pairs = []
        for lam in kept:
            if pairs and pairs[-1][0] == lam:
                pairs[-1][1] += 1
            else:
                pairs.append([float(lam), 1])
        return Spectrum(self.model, tuple((l, m) for l, m in pairs), self.labels[keep])

    def to_dict(self) -> dict:
        return {"model": self.model,
                "eigenvalues": [[lam, m] for lam, m in self.eigenvalues]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Spectrum":
        model = data.get("model")
        if model == "circle" and "num_modes" in data:
            return build_circle_spectrum(int(data["num_modes"]))
        try:
            pairs = [(float(lam), int(m)) for lam, m in data["eigenvalues"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise SpectrumError(f"malformed spectrum data: {exc}") from exc
        if model == "circle":
            spec = build_circle_spectrum(len(pairs) // 2)
            if not np.allclose([l for l, _ in spec.eigenvalues], [l for l, _ in pairs]):
                raise SpectrumError("circle eigenvalues do not match 2*pi*(j+1/2)")
            return spec
        if model == "synthetic":
            return cls.synthetic(pairs)
        raise SpectrumError(f"unknown spectrum model {model!r}")

    @classmethod
    def from_json(cls, text: str) -> "Spectrum":
        return cls.from_dict(json.loads(text))


def build_circle_spectrum(num_modes: int) -> Spectrum:
    """Dirac spectrum of the unit-length circle with antiperiodic spin structure.

    Returns the ``2 * num_modes`` eigenvalues ``2*pi*(j + 1/2)`` for
    ``-num_modes <= j < num_modes``, each simple.
    """
    if num_modes < 1:
        raise SpectrumError("num_modes must be >= 1")
    labels = np.arange(-num_modes, num_modes)
    pairs = tuple((TWO_PI * (j + 0.5), 1) for j in labels)
    return Spectrum("circle", pairs, labels)


@dataclass(frozen=True)
class LSpectrum:
    """Spectrum of L(u, v) = (Dv, Du), indexed by k in Z \\ {0}.

    ``positive[k-1]`` is the pair for index ``k`` and ``negative[k-1]`` the
    pair for index ``-k``; both lists are ordered by increasing ``|eigenvalue|``.
    """

    positive: tuple[tuple[float, int], ...]
    negative: tuple[tuple[float, int], ...]

    def __getitem__(self, k: int) -> tuple[float, int]:
        if k == 0:
            raise IndexError("L-spectrum index k must be nonzero")
        side = self.positive if k > 0 else self.negative
        if abs(k) > len(side):
            raise IndexError(f"index {k} outside the truncation window")
        return side[abs(k) - 1]

    def indices(self) -> list[int]:
        return [-k for k in range(len(self.negative), 0, -1)] + \
               list(range(1, len(self.positive) + 1))

    def multiplicity(self, k: int) -> int:
        return self[k][1]


def l_spectrum(spec: Spectrum) -> LSpectrum:
    """Eigenvalues of L with multiplicities ``m_D(mu) + m_D(-mu)``."""
    absvals = sorted({abs(lam) for lam, _ in spec.eigenvalues})
    pos, neg = [], []
    for a in absvals:
        m = spec.multiplicity(a) + spec.multiplicity(-a)
        pos.append((a, m))
        neg.append((-a, m))
    return LSpectrum(tuple(pos), tuple(neg))


def l_eigenvectors(spec: Spectrum, mu: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Coefficient pairs ``(u, v)`` spanning the L-eigenspace at ``mu``.

    ``(phi, phi)`` for each D-mode with eigenvalue ``mu`` and ``(phi, -phi)``
    for each D-mode with eigenvalue ``-mu``; each has unit L2 norm per
    component.
    """
    eigs = spec.mode_eigenvalues
    out = []
    for j, lam in enumerate(eigs):
        for sign in (1.0, -1.0):
            if np.isclose(lam, sign * mu, rtol=1e-12, atol=0):
                u = np.zeros(spec.num_modes, complex)
                u[j] = 1.0
                out.append((u, sign * u))
    return out


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class PairField:
    """Spectral coefficients of ``z = (u, v)`` in E_s = H^s x H^(1-s)."""

    spectrum: Spectrum
    u: np.ndarray
    v: np.ndarray
    s: float

    def __post_init__(self):
        n = self.spectrum.num_modes
        u = np.asarray(self.u, dtype=complex).reshape(-1)
        v = np.asarray(self.v, dtype=complex).reshape(-1)
        if u.shape != (n,) or v.shape != (n,):
            raise SpectrumError(f"coefficient vectors must have length {n}")
        if not 0.0 < self.s < 1.0:
            raise SpectrumError("s must lie in (0, 1)")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, spectrum: Spectrum, s: float) -> "PairField":
        n = spectrum.num_modes
        return cls(spectrum, np.zeros(n, complex), np.zeros(n, complex), s)

    def _with(self, u, v) -> "PairField":
        return PairField(self.spectrum, u, v, self.s)

    def __add__(self, other: "PairField") -> "PairField":
        return self._with(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "PairField") -> "PairField":
        return self._with(self.u - other.u, self.v - other.v)

    def __mul__(self, c) -> "PairField":
        return self._with(c * self.u, c * self.v)

    __rmul__ = __mul__

    def __neg__(self) -> "PairField":
        return self * -1.0

    def es_inner(self, other: "PairField") -> float:
        lam = np.abs(self.spectrum.mode_eigenvalues)
        s = self.s
        return float(np.real(np.sum(lam ** (2 * s) * self.u * np.conj(other.u))
                             + np.sum(lam ** (2 * (1 - s)) * self.v * np.conj(other.v))))

    def l2_inner(self, other: "PairField") -> float:
        return float(np.real(np.vdot(other.u, self.u) + np.vdot(other.v, self.v)))

    def es_norm(self) -> float:
        return float(np.sqrt(self.es_inner(self)))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.l2_inner(self)))

    def rotate(self, theta: float) -> "PairField":
        """The S^1 action ``z -> exp(i theta) z``."""
        ph = np.exp(1j * theta)
        return self._with(ph * self.u, ph * self.v)


@dataclass(frozen=True, eq=False)
class ExtendedPoint:
    """A point ``(z, lam)`` of E = E_s x R, or a tangent vector there."""

    z: PairField
    lam: float

    def inner(self, other: "ExtendedPoint") -> float:
        return self.z.es_inner(other.z) + float(self.lam) * float(other.lam)

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))


def coordinate_weights(spec: Spectrum, s: float) -> tuple[np.ndarray, np.ndarray]:
    lam = np.abs(spec.mode_eigenvalues)
    return lam ** s, lam ** (1.0 - s)


def to_coords(w: ExtendedPoint) -> np.ndarray:
    """E-orthonormal real coordinates of ``w`` (length ``4 * num_modes + 1``)."""
    wu, wv = coordinate_weights(w.z.spectrum, w.z.s)
    a, b = wu * w.z.u, wv * w.z.v
    return np.concatenate([a.real, a.imag, b.real, b.imag, [float(w.lam)]])


def from_coords(spec: Spectrum, s: float, x: np.ndarray) -> ExtendedPoint:
    n = spec.num_modes
    x = np.asarray(x, dtype=float)
    if x.shape != (4 * n + 1,):
        raise SpectrumError(f"coordinate vector must have length {4 * n + 1}")
    wu, wv = coordinate_weights(spec, s)
    u = (x[:n] + 1j * x[n:2 * n]) / wu
    v = (x[2 * n:3 * n] + 1j * x[3 * n:4 * n]) / wv
    return ExtendedPoint(PairField(spec, u, v, s), float(x[-1]))


# ---------------------------------------------------------------------------
# diagonal operators


def fractional_power_apply(spec: Spectrum, coeffs: np.ndarray, r: float) -> np.ndarray:
    """``|D|^r`` on a coefficient vector."""
    return np.abs(spec.mode_eigenvalues) ** r * np.asarray(coeffs)


def ds_apply(z: PairField) -> PairField:
    """``D_s = diag(|D|^(-2s), |D|^(-2(1-s)))``, mapping E_s^* to E_s."""
    spec, s = z.spectrum, z.s
    return z._with(fractional_power_apply(spec, z.u, -2 * s),
                   fractional_power_apply(spec, z.v, -2 * (1 - s)))


def l_apply(z: PairField) -> PairField:
    """``L(u, v) = (Dv, Du)``."""
    lam = z.spectrum.mode_eigenvalues
    return z._with(lam * z.v, lam * z.u)


@dataclass(frozen=True)
class SplitProjection:
    """Projection onto ``E_+`` (sign=+1) or ``E_-`` (sign=-1)."""

    spectrum: Spectrum
    s: float
    sign: int

    def __call__(self, z: PairField) -> PairField:
        lam = self.spectrum.mode_eigenvalues
        a = np.abs(lam)
        s, sg = self.s, self.sign
        u = 0.5 * (z.u + sg * a ** (-2 * s) * lam * z.v)
        v = 0.5 * (sg * a ** (-2 * (1 - s)) * lam * z.u + z.v)
        return z._with(u, v)


def e_split_projections(spec: Spectrum, s: float) -> tuple[SplitProjection, SplitProjection]:
    """``(P_+, P_-)`` for the splitting into the +-1 eigenspaces of D_s L."""
    return SplitProjection(spec, s, +1), SplitProjection(spec, s, -1)


# ---------------------------------------------------------------------------
# grid sampling


@dataclass(frozen=True, eq=False)
class GridSampling:
    """Values of ``(u, v)`` at the points ``t_m = m / num_points``."""

    u: np.ndarray
    v: np.ndarray

    @property
    def num_points(self) -> int:
        return len(self.u)

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.num_points) / self.num_points


def default_grid_size(spec: Spectrum) -> int:
    return 4 * spec.band


def _check_grid(spec: Spectrum, num_points: int):
    if num_points < spec.band:
        raise ResolutionError(
            f"{num_points} grid points cannot resolve a band of {spec.band} modes")


def synthesize(spec: Spectrum, coeffs: np.ndarray, num_points: int) -> np.ndarray:
    """Grid values of ``sum_j c_j exp(2 pi i (label_j + 1/2) t)``.

    ``coeffs`` may carry extra leading axes; modes run along the last axis.
    """
    _check_grid(spec, num_points)
    coeffs = np.asarray(coeffs, dtype=complex)
    buf = np.zeros(coeffs.shape[:-1] + (num_points,), complex)
    buf[..., spec.labels % num_points] = coeffs
    t = np.arange(num_points) / num_points
    return num_points * np.fft.ifft(buf, axis=-1) * np.exp(1j * np.pi * t)


def analyze(spec: Spectrum, values: np.ndarray) -> np.ndarray:
    """L2 projection of grid values onto the modes of ``spec``."""
    values = np.asarray(values, dtype=complex)
    num_points = values.shape[-1]
    _check_grid(spec, num_points)
    t = np.arange(num_points) / num_points
    c = np.fft.fft(values * np.exp(-1j * np.pi * t), axis=-1) / num_points
    return c[..., spec.labels % num_points]


def to_grid(z: PairField, num_points: int | None = None) -> GridSampling:
    n = num_points or default_grid_size(z.spectrum)
    return GridSampling(synthesize(z.spectrum, z.u, n), synthesize(z.spectrum, z.v, n))


def from_grid(spec: Spectrum, samples: GridSampling, s: float) -> PairField:
    return PairField(spec, analyze(spec, samples.u), analyze(spec, samples.v), s)
