import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from isospec.groups import Subgroup, make_example_group
from isospec.hyperbolic import (
    CompletenessError,
    FNAssembly,
    GeometryError,
    Gluing,
    NonHyperbolicError,
    PantsPiece,
    assemble_rep,
    assembly_from_graph,
    certified_cutoff,
    collar_width,
    enumerate_spectrum,
    geodesic_length,
    pants_rep,
    short_census,
    spectrum_oracle,
)
from isospec.schedule import ASINH1, CENSUS_THRESHOLD, ScheduleError, dyadic_value, make_schedule, schedule_for_graph
from isospec.spectrum import Spectrum, compare
from isospec.surface_graph import GluingGraph, build_cover_graph, build_template, quotient_graph


# collars and schedules


def test_collar_examples():
    assert collar_width(2 * ASINH1) == pytest.approx(ASINH1, abs=1e-14)
    assert collar_width(0.3) > collar_width(0.4)
    assert abs(collar_width(1.0) - float(oracles.collar_width_mp(1.0))) < 1e-12
    assert collar_width(1.0) == pytest.approx(1.4068291137, abs=1e-9)
    with pytest.raises(GeometryError):
        collar_width(0.0)


def test_collar_round_trip_grid():
    for l in np.geomspace(0.01, 2 * ASINH1, 100):
        assert abs(math.sinh(collar_width(l)) * math.sinh(l / 2) - 1) < 1e-12


def test_dyadic_values():
    assert dyadic_value(1) == pytest.approx(0.440687, abs=1e-6)
    vals = [dyadic_value(m) for m in range(1, 10)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert all(v < 2 * ASINH1 for v in vals)


def test_strict_schedule_residues():
    ports = [(1, h, k) for h in range(4) for k in (1, 2)]
    s = make_schedule(ports, ["a", "b", "c"], 2, "strict")
    residues = {}
    for (fam, _), m in s.exponents.items():
        residues.setdefault(fam, set()).add(m % 3)
    assert all(len(r) == 1 for r in residues.values())
    assert len({next(iter(r)) for r in residues.values()}) == 3
    assert not (s.Lambda & s.P or s.Lambda & s.M or s.P & s.M)
    with pytest.raises(ScheduleError):
        make_schedule(ports, ["a"], 1, "strict", m_budget=10)


def test_free_schedule_is_injective():
    s = make_schedule([(1, 0, 1), (1, 0, 2)], ["x", "y"], 2)
    vals = s.values()
    assert len(set(vals)) == len(vals)
    assert all(0 < v < CENSUS_THRESHOLD for v in vals)


# pants


def test_symmetric_pants_traces():
    l = 2 * ASINH1
    for g in pants_rep(PantsPiece(l, l, l)):
        assert abs(abs(np.trace(g)) - 2 * math.sqrt(2)) < 1e-12


def test_pants_third_boundary_from_product():
    g1, g2, g3 = pants_rep(PantsPiece(0.7, 1.1, 1.9))
    assert abs(2 * math.acosh(abs(np.trace(g1 @ g2)) / 2) - 1.9) < 1e-9


def test_pants_random_triples():
    rng = np.random.default_rng(7)
    for a, b, c in rng.uniform(0.05, 4.0, size=(1000, 3)):
        g1, g2, g3 = pants_rep(PantsPiece(a, b, c))
        r = g1 @ g2 @ g3
        assert min(np.abs(r - np.eye(2)).max(), np.abs(r + np.eye(2)).max()) < 1e-10
        for g, l in zip((g1, g2, g3), (a, b, c)):
            assert abs(abs(np.trace(g)) - 2 * math.cosh(l / 2)) < 1e-12 * max(1, math.cosh(l / 2))
            assert abs(geodesic_length(g) - l) < 1e-9


def test_pants_rejects_nonpositive():
    with pytest.raises(GeometryError):
        PantsPiece(1.0, 0.0, 1.0)


def test_geodesic_length_basics():
    t = 1.3
    M = np.diag([math.exp(t / 2), math.exp(-t / 2)])
    assert geodesic_length(M) == pytest.approx(t, abs=1e-12)
    C = np.array([[2.0, 1.0], [3.0, 2.0]])
    assert geodesic_length(C @ M @ np.linalg.inv(C)) == pytest.approx(t, abs=1e-9)
    assert geodesic_length(np.linalg.matrix_power(M, 3)) == pytest.approx(3 * t, abs=1e-9)
    with pytest.raises(NonHyperbolicError):
        geodesic_length(np.array([[0.0, -1.0], [1.0, 0.0]]))
    with pytest.raises(NonHyperbolicError):
        geodesic_length(np.array([[1.0, 1.0], [0.0, 1.0]]))


# assembly


def test_single_pants_assembly_matches_pants_rep():
    p = PantsPiece(0.4, 0.9, 1.3)
    rep = assemble_rep(FNAssembly([p], []))
    g1, g2, _ = pants_rep(p)
    assert np.allclose(rep.matrix("g0.0"), g1, atol=1e-14)
    assert np.allclose(rep.matrix("g0.1"), g2, atol=1e-14)


def two_pants(twist=0.0, l=0.9):
    return FNAssembly([PantsPiece(l, 0.6, 1.2), PantsPiece(l, 0.5, 1.0)], [Gluing((0, 0), (1, 0), twist)])


def test_glued_curve_keeps_length():
    rep = assemble_rep(two_pants(0.37))
    for pb in ((0, 0), (1, 0)):
        assert float(geodesic_length(rep.evaluate(rep.boundary[pb]))) == pytest.approx(0.9, abs=1e-12)
    assert rep.relation_residue() < 1e-30


def test_gluing_errors():
    with pytest.raises(GeometryError):
        FNAssembly([PantsPiece(1, 1, 1), PantsPiece(2, 1, 1)], [Gluing((0, 0), (1, 0))])
    with pytest.raises(GeometryError):
        FNAssembly([PantsPiece(1, 1, 1), PantsPiece(1, 1, 1)], [Gluing((0, 0), (1, 0)), Gluing((0, 0), (1, 1))])


def crossing_length(t, word=(("g0.1", 1), ("g1.1", 1))):
    """Length of a curve crossing the glued curve of two_pants(t)."""
    rep = assemble_rep(two_pants(t))
    return float(geodesic_length(rep.evaluate(word)))


def test_twist_continuity():
    ts = np.linspace(0.0, 0.9, 31)
    ls = [crossing_length(t) for t in ts]
    jumps = np.abs(np.diff(ls))
    assert jumps.max() < 0.2
    assert np.ptp(ls) > 1e-3


def test_full_twist_relabels_curves():
    # a twist by the full length acts on the group by conjugating one side by the glued curve
    t, l = 0.2, 0.9
    after = crossing_length(t + l)
    assert abs(after - crossing_length(t)) > 1e-3
    candidates = [crossing_length(t, (("g0.0", e), ("g0.1", 1), ("g0.0", -e), ("g1.1", 1))) for e in (1, -1)]
    assert min(abs(after - c) for c in candidates) < 1e-9


def genus_two(t1=0.1, t2=-0.2, t3=0.35):
    P = PantsPiece(0.5, 0.8, 1.1)
    return FNAssembly([P, P], [Gluing((0, 0), (1, 0), t1), Gluing((0, 1), (1, 1), t2), Gluing((0, 2), (1, 2), t3)])


def test_genus_two_spectrum_matches_oracle():
    rep = assemble_rep(genus_two())
    S = enumerate_spectrum(rep, 2.0)
    assert [m for _, m in S.entries] == [1, 1, 1]
    o = spectrum_oracle(rep, 2.0)
    assert compare(S, o.spectrum).equal and o.extra_classes == 0 and o.missing_curves == 0


def test_spectrum_edge_cases():
    rep = assemble_rep(FNAssembly([PantsPiece(0.5, 1.0, 1.2)], []))
    assert len(enumerate_spectrum(rep, 0.4)) == 0
    S = enumerate_spectrum(rep, 0.6)
    assert S.entries == ((pytest.approx(0.5, abs=1e-12), 1),)
    with pytest.raises(CompletenessError):
        enumerate_spectrum(assemble_rep(genus_two()), 3.0)


def test_certified_bound_uses_collars():
    a = genus_two()
    assert certified_cutoff(a) == pytest.approx(2 * collar_width(1.1))


def _random_assembly(lengths, twists, shape):
    """Up to four pants glued along a chain plus optional extra gluings."""
    a, b, c, d, e = lengths
    if shape == 0:
        pants = [PantsPiece(a, b, c), PantsPiece(a, d, e)]
        gl = [Gluing((0, 0), (1, 0), twists[0])]
    elif shape == 1:
        pants = [PantsPiece(a, b, c), PantsPiece(a, b, d), PantsPiece(d, c, e)]
        gl = [Gluing((0, 0), (1, 0), twists[0]), Gluing((1, 2), (2, 0), twists[1]), Gluing((0, 2), (2, 1), twists[2])]
    elif shape == 2:
        pants = [PantsPiece(a, a, b), PantsPiece(c, d, b)]
        gl = [Gluing((0, 0), (0, 1), twists[0]), Gluing((0, 2), (1, 2), twists[1])]
    else:
        pants = [PantsPiece(a, b, c), PantsPiece(a, d, e), PantsPiece(b, d, c), PantsPiece(e, e, e)]
        gl = [Gluing((0, 0), (1, 0), twists[0]), Gluing((0, 1), (2, 0), twists[1]), Gluing((1, 1), (2, 1), twists[2]),
              Gluing((0, 2), (2, 2), twists[3])]
    return FNAssembly(pants, gl)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0.15, 1.45), min_size=5, max_size=5),
    st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4),
    st.integers(0, 3),
)
def test_spectrum_equals_oracle_small_assemblies(lengths, twists, shape):
    a = _random_assembly(lengths, twists, shape)
    rep = assemble_rep(a)
    L = min(2.0, certified_cutoff(a) - 1e-6)
    S = enumerate_spectrum(rep, L)
    o = spectrum_oracle(rep, L)
    assert compare(S, o.spectrum).equal
    assert o.missing_curves == 0


def test_base_change_invariance():
    rep = assemble_rep(genus_two())
    rng = np.random.default_rng(3)
    C = rng.normal(size=(2, 2))
    if np.linalg.det(C) < 0:
        C[0] *= -1
    moved = rep.conjugated(tuple(C.ravel()))
    assert compare(enumerate_spectrum(rep, 2.0), enumerate_spectrum(moved, 2.0)).equal
    assert compare(enumerate_spectrum(rep, 2.0), spectrum_oracle(moved, 2.0).spectrum).equal


# surfaces from graphs


@pytest.fixture(scope="module")
def base_quotients():
    ex = make_example_group()
    tpl = build_template(ex, ex.h)
    cover = build_cover_graph(ex.group, tpl, ex.h, 1)
    return ex, tpl, cover, quotient_graph(cover, ex.H1), quotient_graph(cover, ex.H2)


def test_census_single_vertex_without_edges(base_quotients):
    ex, tpl, cover, Q1, _ = base_quotients
    lone = GluingGraph(ex.group, tpl, Q1.T, Q1.J, 1, (0,), ())
    sched = schedule_for_graph(Q1)
    S = short_census(lone, sched)
    pants_vals = {sched.pants_of(c) for c in tpl.curves}
    assert sum(1 for l, m in S.entries if any(abs(l - v) < 1e-12 for v in pants_vals)) == len(tpl.curves)


def test_census_counts(base_quotients):
    ex, tpl, cover, Q1, Q2 = base_quotients
    sched = schedule_for_graph(Q1)
    S = short_census(Q1, sched)
    assert S.multiplicity(sched.mu_of(1)) == 2 * Q1.edge_count
    assert S.multiplicity(sched.pants_of("q3,1")) == Q1.vertex_count
    full = short_census(cover, sched)
    lone = GluingGraph(ex.group, tpl, Q1.T, Q1.J, 1, (0,), ())
    per_vertex = short_census(lone, sched)
    for l, m in per_vertex.entries:
        assert full.multiplicity(l) == 32 * m
    assert full.total == 32 * per_vertex.total + 2 * cover.edge_count


def test_census_needs_labels(base_quotients):
    ex, tpl, cover, Q1, _ = base_quotients
    sched = make_schedule(tpl.ports[:-1], tpl.curves, 1)
    with pytest.raises(ScheduleError):
        short_census(Q1, sched)


def test_strict_schedule_refused_for_geometry(base_quotients):
    ex, tpl, cover, Q1, _ = base_quotients
    with pytest.raises(ScheduleError):
        assembly_from_graph(Q1, schedule_for_graph(Q1, "strict"))


def test_quotient_surface_spectrum(base_quotients):
    ex, tpl, cover, Q1, Q2 = base_quotients
    sched = schedule_for_graph(Q1)
    spectra = []
    for Q in (Q1, Q2):
        a = assembly_from_graph(Q, sched)
        assert not a.unglued
        rep = assemble_rep(a)
        S = enumerate_spectrum(rep, 2.0)
        assert compare(S, short_census(Q, sched)).equal
        spectra.append(S)
    assert compare(*spectra).equal


def test_equivariant_twists_keep_isospectrality(base_quotients):
    ex, tpl, cover, Q1, Q2 = base_quotients
    sched = schedule_for_graph(Q1)
    tw = {("curve", "q3,1"): 0.3, ("curve", "q1,1"): -0.2}
    S = [enumerate_spectrum(assemble_rep(assembly_from_graph(Q, sched, tw)), 2.0) for Q in (Q1, Q2)]
    assert compare(*S).equal
