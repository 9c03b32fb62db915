import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfh.spectral import (
    ExtendedPoint, PairField, ResolutionError, Spectrum, SpectrumError, analyze,
    build_circle_spectrum, ds_apply, e_split_projections, fractional_power_apply, from_coords,
    from_grid, l_apply, l_eigenvectors, l_spectrum, synthesize, to_coords, to_grid,
)


def random_field(spec, s, rng, scale=1.0):
    n = spec.num_modes
    return PairField(spec, scale * (rng.normal(size=n) + 1j * rng.normal(size=n)),
                     scale * (rng.normal(size=n) + 1j * rng.normal(size=n)), s)


# -- spectra -------------------------------------------------------------------


def test_circle_one_mode_is_plus_minus_pi():
    spec = build_circle_spectrum(1)
    assert [lam for lam, _ in spec.eigenvalues] == pytest.approx([-np.pi, np.pi])


def test_circle_two_modes():
    spec = build_circle_spectrum(2)
    assert [lam for lam, _ in spec.eigenvalues] == pytest.approx(
        [-3 * np.pi, -np.pi, np.pi, 3 * np.pi])
    assert all(m == 1 for _, m in spec.eigenvalues)


@given(st.integers(1, 40))
def test_circle_spectrum_is_symmetric(n):
    eigs = build_circle_spectrum(n).mode_eigenvalues
    assert np.allclose(np.sort(-eigs), eigs)
    assert np.all(eigs != 0)


def test_zero_eigenvalue_rejected():
    with pytest.raises(SpectrumError):
        Spectrum.synthetic([(0.0, 1), (1.0, 1)])


def test_nonincreasing_rejected():
    with pytest.raises(SpectrumError):
        Spectrum("synthetic", ((1.0, 1), (1.0, 1)), np.arange(2))


def test_bad_multiplicity_rejected():
    with pytest.raises(SpectrumError):
        Spectrum.synthetic([(1.0, 0)])


def test_json_round_trip(synthetic_mixed):
    back = Spectrum.from_json(synthetic_mixed.to_json())
    assert back.eigenvalues == synthetic_mixed.eigenvalues
    circ = build_circle_spectrum(3)
    assert np.allclose(Spectrum.from_json(circ.to_json()).eigenvalues, circ.eigenvalues)


def test_truncation_keeps_smallest_modes(circle16):
    t = circle16.truncate(4)
    assert sorted(np.abs(t.mode_eigenvalues)) == pytest.approx([np.pi] * 2 + [3 * np.pi] * 2)
    assert set(t.labels) == {-2, -1, 0, 1}


def test_truncation_refuses_to_split_a_shell(synthetic_mixed):
    with pytest.raises(SpectrumError):
        synthetic_mixed.truncate(3)  # |lam| = 4 has three modes after |lam| = 2


# -- L spectrum ----------------------------------------------------------------


def test_circle_l_spectrum(circle16):
    lsp = l_spectrum(circle16)
    for k in range(1, 9):
        assert lsp[k] == pytest.approx(((2 * k - 1) * np.pi, 2))
        assert lsp[-k] == pytest.approx((-(2 * k - 1) * np.pi, 2))


def test_one_sided_spectrum_doubles_into_both_signs():
    lsp = l_spectrum(Spectrum.synthetic([(1.0, 1), (2.0, 1), (3.0, 1)]))
    assert [lsp[k] for k in (1, 2, 3)] == [(1.0, 1), (2.0, 1), (3.0, 1)]
    assert [lsp[-k] for k in (1, 2, 3)] == [(-1.0, 1), (-2.0, 1), (-3.0, 1)]


def test_l_multiplicity_rule(synthetic_mixed):
    spec = synthetic_mixed
    lsp = l_spectrum(spec)
    for k in lsp.indices():
        mu, m = lsp[k]
        assert m == spec.multiplicity(mu) + spec.multiplicity(-mu)
        vecs = l_eigenvectors(spec, mu)
        assert len(vecs) == m
        for u, v in vecs:
            z = PairField(spec, u, v, 0.3)
            lz = l_apply(z)
            assert np.allclose(lz.u, mu * z.u) and np.allclose(lz.v, mu * z.v)


def test_l_index_zero_rejected(circle16):
    with pytest.raises(IndexError):
        l_spectrum(circle16)[0]


# -- operators -----------------------------------------------------------------


def test_fractional_power_examples(circle16, rng):
    a = rng.normal(size=circle16.num_modes) + 0j
    assert np.array_equal(fractional_power_apply(circle16, a, 0.0), a)
    back = fractional_power_apply(circle16, fractional_power_apply(circle16, a, -0.8), 0.8)
    assert np.allclose(back, a, rtol=1e-14, atol=0)
    j = int(np.argmin(np.abs(circle16.mode_eigenvalues - np.pi)))
    e = np.zeros(circle16.num_modes)
    e[j] = 2.0
    assert fractional_power_apply(circle16, e, 1.0)[j] == pytest.approx(2 * np.pi)


@given(st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_pairing_identity_and_isometry(s, seed):
    rng = np.random.default_rng(seed)
    spec = build_circle_spectrum(6)
    z1, z2 = random_field(spec, s, rng), random_field(spec, s, rng)
    assert ds_apply(z1).es_inner(z2) == pytest.approx(z1.l2_inner(z2), rel=1e-12, abs=1e-12)
    dl = ds_apply(l_apply(z1))
    assert dl.es_norm() == pytest.approx(z1.es_norm(), rel=1e-12)
    twice = ds_apply(l_apply(dl))
    assert np.allclose(twice.u, z1.u, rtol=1e-14, atol=1e-14)
    assert np.allclose(twice.v, z1.v, rtol=1e-14, atol=1e-14)


def test_projections(synthetic_mixed, rng):
    spec, s = synthetic_mixed, 0.35
    pp, pm = e_split_projections(spec, s)
    z = random_field(spec, s, rng)
    tot = pp(z) + pm(z)
    assert np.allclose(tot.u, z.u, atol=1e-14) and np.allclose(tot.v, z.v, atol=1e-14)
    for p in (pp, pm):
        q = p(p(z))
        assert np.allclose(q.u, p(z).u, atol=1e-13) and np.allclose(q.v, p(z).v, atol=1e-13)
    m = pm(z)
    dl = ds_apply(l_apply(m))
    assert np.allclose(dl.u, -m.u, atol=1e-13) and np.allclose(dl.v, -m.v, atol=1e-13)


def test_positive_projection_fixes_positive_mode(circle16):
    s = 0.4
    j = int(np.argmin(np.abs(circle16.mode_eigenvalues - np.pi)))
    u = np.zeros(circle16.num_modes, complex)
    u[j] = 1.0
    # E_s-normalize (phi, phi) so that D_s L fixes it
    z = PairField(circle16, np.pi ** -s * u, np.pi ** -(1 - s) * u, s)
    pz = e_split_projections(circle16, s)[0](z)
    assert np.allclose(pz.u, z.u) and np.allclose(pz.v, z.v)


# -- coordinates and grid ----------------------------------------------------------


def test_coordinates_are_e_orthonormal(synthetic_mixed, rng):
    s = 0.3
    w1 = ExtendedPoint(random_field(synthetic_mixed, s, rng), 0.7)
    w2 = ExtendedPoint(random_field(synthetic_mixed, s, rng), -1.1)
    assert to_coords(w1) @ to_coords(w2) == pytest.approx(w1.inner(w2), rel=1e-12)
    back = from_coords(synthetic_mixed, s, to_coords(w1))
    assert np.allclose(back.z.u, w1.z.u) and back.lam == w1.lam


def test_single_mode_has_constant_modulus(circle16):
    a = np.zeros(circle16.num_modes, complex)
    a[3] = 0.5 - 0.2j
    vals = synthesize(circle16, a, 64)
    assert np.allclose(np.abs(vals), abs(a[3]))
    assert np.mean(np.abs(vals / abs(a[3])) ** 2) == pytest.approx(1.0, rel=1e-14)


@given(st.integers(0, 2**31), st.sampled_from([None, 37, 128]))
def test_grid_round_trip_and_parseval(seed, m):
    rng = np.random.default_rng(seed)
    spec = build_circle_spectrum(5)
    z = random_field(spec, 0.5, rng)
    g = to_grid(z, m)
    back = from_grid(spec, g, 0.5)
    assert np.allclose(back.u, z.u, rtol=0, atol=1e-12 * np.abs(z.u).max())
    assert np.mean(np.abs(g.u) ** 2) == pytest.approx(np.sum(np.abs(z.u) ** 2), rel=1e-10)


def test_synthetic_modes_are_orthonormal_on_grid(synthetic_mixed):
    n = synthetic_mixed.num_modes
    vals = synthesize(synthetic_mixed, np.eye(n), 32)
    gram = vals @ vals.conj().T / 32
    assert np.allclose(gram, np.eye(n), atol=1e-14)
    assert np.allclose(analyze(synthetic_mixed, vals), np.eye(n), atol=1e-14)


def test_coarse_grid_raises(circle16):
    with pytest.raises(ResolutionError):
        synthesize(circle16, np.ones(circle16.num_modes), circle16.num_modes - 1)
