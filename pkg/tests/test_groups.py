import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from isospec.groups import (
    FiniteGroup,
    GroupError,
    NotAlmostConjugateError,
    ProductGroup,
    PsiWindow,
    Subgroup,
    admissible_divisors,
    all_windows,
    check_bijection_compatible,
    conjugacy_classes,
    cyclic_group,
    diagonal_extension,
    fixed_cosets,
    is_almost_conjugate,
    is_conjugate,
    make_example_group,
    product_fixed_cosets,
    product_subgroup,
    product_transplantation_bijection,
    symmetric_group,
    transplantation_bijection,
)


@pytest.fixture(scope="module")
def ex():
    return make_example_group()


def el(ex, a, b):
    return ex.group.index((a, b))


def test_example_group_basics(ex):
    G = ex.group
    assert G.order == 32
    assert G.labels[G.identity] == (1, 0)
    h1 = el(ex, 3, 0)
    assert G.mul(h1, h1) == G.identity
    assert G.check_axioms()


def test_table_matches_product_rule(ex):
    G = ex.group
    for x, y in itertools.product(oracles.ELEMENTS, repeat=2):
        assert G.labels[G.mul(G.index(x), G.index(y))] == oracles.mul(x, y)


def test_bad_tables_rejected():
    with pytest.raises(GroupError):
        FiniteGroup(np.array([[0, 1], [1, 1]]))
    # passes the cheap constructor checks but is not associative
    assert not FiniteGroup(np.array([[0, 1, 2], [1, 0, 2], [2, 2, 0]])).check_axioms()


def test_h_elements_are_involutions(ex):
    G = ex.group
    assert [G.labels[h] for h in ex.h] == oracles.HS
    assert all(G.element_order(h) == 2 for h in ex.h)


def test_class_count_matches_orbit_oracle(ex):
    cls = conjugacy_classes(ex.group)
    assert len(cls) == len(oracles.classes())
    as_labels = sorted(sorted(ex.group.labels[g] for g in c) for c in cls)
    assert as_labels == sorted(sorted(c) for c in oracles.classes())
    assert any(c == (ex.group.identity,) for c in cls)


def test_abelian_classes_are_singletons():
    assert all(len(c) == 1 for c in conjugacy_classes(cyclic_group(6)))


def test_example_almost_conjugate_not_conjugate(ex):
    ac = is_almost_conjugate(ex.group, ex.H1, ex.H2)
    assert ac.almost_conjugate
    for rep, size, a, b in ac.table:
        cls = next(c for c in oracles.classes() if ex.group.labels[rep] in c)
        assert size == len(cls)
        assert a == len(cls & oracles.H1) and b == len(cls & oracles.H2)
    res = is_conjugate(ex.group, ex.H1, ex.H2)
    assert not res.conjugate and res.witness is None and res.candidates_checked == 32


def test_subgroup_with_itself(ex):
    assert is_almost_conjugate(ex.group, ex.H1, ex.H1)
    res = is_conjugate(ex.group, ex.H1, ex.H1)
    assert res.conjugate and res.witness == ex.group.identity


def test_s3_transpositions():
    S3 = symmetric_group(3)
    a = S3.subgroup_by_labels([(0, 1, 2), (1, 0, 2)])
    b = S3.subgroup_by_labels([(0, 1, 2), (2, 1, 0)])
    assert is_almost_conjugate(S3, a, b)
    res = is_conjugate(S3, a, b)
    assert res.conjugate
    assert S3.labels[res.witness] == (0, 2, 1)


def test_foreign_subgroup_rejected(ex):
    S3 = symmetric_group(3)
    with pytest.raises(GroupError):
        is_almost_conjugate(S3, ex.H1, ex.H2)


def test_subgroup_validation(ex):
    with pytest.raises(GroupError):
        Subgroup(ex.group, [el(ex, 3, 0)])
    with pytest.raises(GroupError):
        Subgroup(ex.group, [ex.group.identity, el(ex, 1, 1)])


def test_fixed_cosets_identity_and_whole_group(ex):
    G = ex.group
    assert len(fixed_cosets(ex.H1, G.identity)) == 8
    whole = Subgroup(G, range(G.order))
    for g in range(G.order):
        assert fixed_cosets(whole, g) == frozenset({0})
    with pytest.raises(GroupError):
        fixed_cosets(ex.H1, 99)


def test_fixed_coset_sizes_against_oracle(ex):
    G = ex.group
    for g in range(G.order):
        lab = G.labels[g]
        n1 = len(oracles.fixed(oracles.H1, lab))
        n2 = len(oracles.fixed(oracles.H2, lab))
        assert n1 == n2
        assert len(fixed_cosets(ex.H1, g)) == n1
        assert len(fixed_cosets(ex.H2, g)) == n2


def test_fixed_set_sizes_on_words(ex):
    G = ex.group
    for k in range(1, 5):
        for w in itertools.product(ex.h, repeat=k):
            g = G.prod(w)
            assert len(fixed_cosets(ex.H1, g)) == len(fixed_cosets(ex.H2, g))


def test_product_subgroup_orders(ex):
    P = ProductGroup(ex.group, 1)
    K = product_subgroup(PsiWindow((1,)), ex.H1, ex.H2, P)
    assert set(K.materialize().members) == {P.encode((h,)) for h in ex.H1.members}
    for n in (1, 2):
        for psi in all_windows(n):
            assert len(product_subgroup(psi, ex.H1, ex.H2)) == 4**n


def test_product_subgroups_almost_conjugate(ex):
    P = ProductGroup(ex.group, 2)
    Ks = [product_subgroup(psi, ex.H1, ex.H2, P).materialize() for psi in all_windows(2)]
    for a, b in itertools.combinations(Ks, 2):
        assert is_almost_conjugate(P.materialized, a, b)


def test_product_fixed_cosets_identity_and_injection(ex):
    P = ProductGroup(ex.group, 2)
    K = product_subgroup(PsiWindow((1, 2)), ex.H1, ex.H2, P)
    assert len(product_fixed_cosets(K, [P.identity])) == 64
    h1 = ex.h[0]
    got = product_fixed_cosets(K, [P.inject(1, h1)])
    want = {(c, d) for c in fixed_cosets(ex.H1, h1) for d in range(8)}
    assert got == want


def test_product_fixed_cosets_against_g2_oracle(ex):
    P = ProductGroup(ex.group, 2)
    G = ex.group
    gens = [P.inject(i, h) for i in (1, 2) for h in ex.h]
    Ks = {psi: product_subgroup(psi, ex.H1, ex.H2, P) for psi in all_windows(2)}
    for k in range(1, 5):
        for w in itertools.product(gens, repeat=k):
            if k == 4 and sum(map(sum, w)) % 5:
                continue  # sample a fifth of the length-4 words against the slow oracle
            sizes = {len(product_fixed_cosets(K, w)) for K in Ks.values()}
            assert len(sizes) == 1
            g = P.prod(w)
            lab = tuple(G.labels[x] for x in g)
            K = oracles.k_psi((1, 2))
            assert len(oracles.fixed2(K, lab)) == sizes.pop()


def test_admissible_divisors():
    assert admissible_divisors([1, 2, 1, 2]) == [1, 2]
    assert admissible_divisors([5, 5, 5, 5]) == [1, 2, 4]
    assert admissible_divisors([1, 2, 3]) == [1]


def _fsets(L, G, gammas):
    n = len(gammas)
    return {p: fixed_cosets(L, G.prod(gammas[: n // p])) for p in admissible_divisors(gammas)}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=6))
def test_bijection_divisor_compatible(idx):
    ex = make_example_group()
    G = ex.group
    gammas = [ex.h[i] for i in idx]
    rho = transplantation_bijection(ex.H1, ex.H2, gammas)
    assert check_bijection_compatible(rho, _fsets(ex.H1, G, gammas), _fsets(ex.H2, G, gammas))


def test_bijection_identity_for_equal_subgroups(ex):
    gammas = [ex.h[0], ex.h[1]]
    rho = transplantation_bijection(ex.H1, ex.H1, gammas)
    assert all(k == v for k, v in rho.items())


def test_bijection_refuses_non_gassmann(ex):
    G = ex.group
    T = Subgroup(G, [el(ex, 1, b) for b in (0, 2, 4, 6)])
    with pytest.raises(NotAlmostConjugateError):
        transplantation_bijection(ex.H1, T, [ex.h[0]])


def test_product_bijection_coordinatewise(ex):
    P = ProductGroup(ex.group, 2)
    K1 = product_subgroup(PsiWindow((1, 2)), ex.H1, ex.H2, P)
    K2 = product_subgroup(PsiWindow((2, 2)), ex.H1, ex.H2, P)
    gs = [P.inject(1, ex.h[0]), P.inject(2, ex.h[2]), P.inject(1, ex.h[0]), P.inject(2, ex.h[2])]
    rho = product_transplantation_bijection(K1, K2, gs)
    ps = admissible_divisors(gs)
    f1 = {p: product_fixed_cosets(K1, gs[: len(gs) // p]) for p in ps}
    f2 = {p: product_fixed_cosets(K2, gs[: len(gs) // p]) for p in ps}
    assert check_bijection_compatible(rho, f1, f2)
    assert all(src[1] == dst[1] for src, dst in rho.items())


def test_psi_window_validation():
    with pytest.raises(ValueError):
        PsiWindow((1, 3))
    psi = PsiWindow((1, 1))
    assert psi(1) == 1 and psi(5) == 2 and psi.n == 2


def test_diagonal_extension_examples():
    assert diagonal_extension([], 4) == PsiWindow((1, 1, 1, 1))
    p1 = PsiWindow((1, 1, 1, 1))
    out = diagonal_extension([p1], 4)
    assert [i for i in range(1, 5) if out(i) != p1(i)] == [1, 3]
    a, b = PsiWindow((1,) * 8), PsiWindow((2,) * 8)
    out = diagonal_extension([a, b], 8)
    assert [i for i in range(1, 9) if out(i) != a(i)] == [1, 3, 5, 7]
    assert [i for i in range(1, 9) if out(i) != b(i)] == [2, 4, 6, 8]
    assert {2, 6} <= {i for i in range(1, 9) if out(i) != b(i)}
    with pytest.raises(GroupError):
        diagonal_extension([a, b, a, b, a], 8)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(1, 2), min_size=16, max_size=16), min_size=1, max_size=4))
def test_diagonal_extension_differs_on_every_input(rows):
    psis = [PsiWindow(tuple(r)) for r in rows]
    out = diagonal_extension(psis, 16)
    for k, p in enumerate(psis, start=1):
        assert out(2 ** (k - 1)) != p(2 ** (k - 1))


def test_serialization_round_trip(ex):
    d = ex.group.to_dict()
    G2 = FiniteGroup.from_dict(d)
    assert np.array_equal(G2.table, ex.group.table)
    assert G2.labels == ex.group.labels
