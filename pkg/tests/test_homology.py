import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfh.critical import h0_critical_manifolds
from rfh.functional import FunctionalContext
from rfh.homology import (
    ChainComplexZ2, InconsistentComplexError, WindowCoverageError, assemble_h0_complex,
    homology, rank_gf2, shoot_connecting_orbits,
)
from rfh.nonlinearity import NonlinearitySpec
from rfh.spectral import l_spectrum


@pytest.fixture(scope="module")
def circle_cx(circle16):
    return assemble_h0_complex(l_spectrum(circle16), (-13, 13))


# -- rank over Z/2 ------------------------------------------------------------------


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_rank_gf2_bounds_and_transpose(r, c, seed):
    a = np.random.default_rng(seed).integers(0, 2, size=(r, c))
    k = rank_gf2(a)
    assert 0 <= k <= min(r, c)
    assert k == rank_gf2(a.T)


def test_rank_gf2_differs_from_real_rank():
    a = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]])
    assert np.linalg.matrix_rank(a) == 3 and rank_gf2(a) == 2


# -- gradings ----------------------------------------------------------------------------


def test_circle_grading(circle_cx, golden):
    assert sorted(g.degree for g in circle_cx.generators) == golden["grading_circle_m2"]


def test_simple_spectrum_grading(synthetic_m1, golden):
    cx = assemble_h0_complex(l_spectrum(synthetic_m1), (-5, 5))
    assert sorted(g.degree for g in cx.generators) == golden["grading_m1"]
    # adjacent extrema on a circle carry the analytic zero entry
    assert cx.entry("p+1+", "p+1-") == (0, "analytic")


def test_empty_window(circle16):
    cx = assemble_h0_complex(l_spectrum(circle16), (3, 2))
    assert cx.generators == []
    assert homology(cx).dims == {}


def test_window_beyond_truncation(circle16):
    with pytest.raises(WindowCoverageError, match="enlarge"):
        assemble_h0_complex(l_spectrum(circle16), (-200, 13))


# -- homology -----------------------------------------------------------------------------


def test_degree_minus_one_is_exact(circle_cx):
    res = homology(circle_cx)
    assert res.dim(-1) == 1
    assert res.confidence_of(-1) == "exact"


def test_unknown_entries_mark_degrees_conditional(circle_cx):
    res = homology(circle_cx)
    assert res.confidence_of(-4) == "conditional-on-unknown-entries"
    assert res.confidence_of(1) == "exact"


def test_zero_boundary_gives_chain_groups():
    cx = ChainComplexZ2()
    for i, d in enumerate([0, 0, 1, 2]):
        cx.add_generator(f"g{i}", d)
    cx.set_entry("g2", "g0", 0, "structural-zero")
    cx.set_entry("g2", "g1", 0, "structural-zero")
    res = homology(cx)
    assert res.dims == {0: 2, 1: 1, 2: 1}
    assert res.euler_characteristic == 2
    assert res.confidence_of(0) == "exact"
    assert res.confidence_of(2) == "conditional-on-unknown-entries"


def test_acyclic_pair():
    cx = ChainComplexZ2()
    cx.add_generator("a", 1)
    cx.add_generator("b", 0)
    cx.set_entry("a", "b", 1, "analytic")
    assert homology(cx).dims == {0: 0, 1: 0}


def test_inconsistent_boundary_detected():
    cx = ChainComplexZ2()
    cx.add_generator("a", 2)
    cx.add_generator("b", 1)
    cx.add_generator("c", 0)
    cx.set_entry("a", "b", 1, "numerical")
    cx.set_entry("b", "c", 1, "numerical")
    with pytest.raises(InconsistentComplexError, match="a -> c"):
        homology(cx)


def test_entry_must_lower_degree():
    cx = ChainComplexZ2()
    cx.add_generator("a", 2)
    cx.add_generator("b", 0)
    with pytest.raises(ValueError):
        cx.set_entry("a", "b", 1)
    with pytest.raises(ValueError):
        cx.add_generator("a", 3)


@given(st.integers(0, 2 ** 31 - 1))
def test_homology_invariant_under_relabelling(seed):
    rng = np.random.default_rng(seed)
    cx = ChainComplexZ2()
    degs = rng.integers(0, 4, size=8)
    for i, d in enumerate(degs):
        cx.add_generator(f"g{i}", int(d))
    # d = 0 everywhere except one consistent block between degrees 1 and 0
    for src in cx.in_degree(1):
        for dst in cx.in_degree(0):
            cx.set_entry(src.label, dst.label, int(rng.integers(0, 2)), "numerical")
    for d in (2, 3):
        for src in cx.in_degree(d):
            for dst in cx.in_degree(d - 1):
                cx.set_entry(src.label, dst.label, 0, "structural-zero")
    res = homology(cx)
    perm = homology(cx.permuted(rng))
    assert res.dims == perm.dims and res.confidence == perm.confidence
    assert res.euler_characteristic == sum((-1) ** int(d) for d in degs)


def test_json_round_trip(circle_cx):
    again = ChainComplexZ2.from_dict(circle_cx.to_dict())
    assert again.to_json() == circle_cx.to_json()
    assert homology(again).to_dict() == homology(circle_cx).to_dict()


# -- connecting orbits ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def m1_ctx(synthetic_m1):
    return FunctionalContext(synthetic_m1, 0.4, NonlinearitySpec.quadratic())


def test_height_lines_on_circle_cancel(m1_ctx):
    comp = next(c for c in h0_critical_manifolds(m1_ctx) if c.k == 1)
    res = shoot_connecting_orbits(m1_ctx, None, comp.critical_point("+"),
                                  comp.critical_point("-"), nu_from=2, nu_to=1)
    assert res.count == 2 and res.mod2 == 0
    assert res.isolated and res.confidence == "heuristic"


def test_identical_endpoints(m1_ctx):
    cp = next(c for c in h0_critical_manifolds(m1_ctx) if c.k == 1).critical_point("-")
    assert shoot_connecting_orbits(m1_ctx, None, cp, cp).count == 0


def test_no_line_to_higher_action(m1_ctx):
    comps = {c.k: c for c in h0_critical_manifolds(m1_ctx)}
    res = shoot_connecting_orbits(m1_ctx, None, comps[1].critical_point("-"),
                                  comps[2].critical_point("+"))
    assert res.count == 0
    assert res.reason == "target has higher action"
