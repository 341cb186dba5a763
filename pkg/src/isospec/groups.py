"""Finite groups as dense multiplication tables, and the coset machinery
used to count transplanted geodesics.

Elements are integer indices ``0..order-1``.  Products of a base group are
handled coordinatewise (:class:`ProductGroup`) and only materialized as a
table when small enough.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

MAX_TABLE_ORDER = 4096


class GroupError(ValueError):
    pass


class NotAlmostConjugateError(GroupError):
    pass


class FiniteGroup:
    """A finite group given by its Cayley table.

    ``labels`` are optional human readable names (tuples for the
    semidirect example) used for serialization and display only.
    """

    def __init__(self, table, labels=None, tag="table"):
        table = np.asarray(table, dtype=np.int64)
        n = table.shape[0]
        if table.shape != (n, n):
            raise GroupError("multiplication table must be square")
        if table.min() < 0 or table.max() >= n:
            raise GroupError("table entries out of range")
        self.table = table
        self.table.setflags(write=False)
        self.order = n
        self.tag = tag
        self.labels = list(labels) if labels is not None else list(range(n))
        if len(self.labels) != n:
            raise GroupError("one label per element required")
        rows = np.flatnonzero((table == np.arange(n)).all(axis=1))
        if len(rows) != 1:
            raise GroupError("no unique left identity")
        self.identity = int(rows[0])
        inv = np.full(n, -1, dtype=np.int64)
        for g in range(n):
            hits = np.flatnonzero(table[g] == self.identity)
            if len(hits) != 1:
                raise GroupError(f"element {g} has no inverse")
            inv[g] = hits[0]
        self.inverse_table = inv
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    def __repr__(self):
        return f"FiniteGroup(order={self.order}, tag={self.tag!r})"

    def mul(self, a: int, b: int) -> int:
        return int(self.table[a, b])

    def inv(self, a: int) -> int:
        return int(self.inverse_table[a])

    def prod(self, elems: Iterable[int]) -> int:
        out = self.identity
        for g in elems:
            out = int(self.table[out, g])
        return out

    def conj(self, x: int, g: int) -> int:
        """x g x^-1"""
        return int(self.table[self.table[x, g], self.inverse_table[x]])

    def index(self, label) -> int:
        return self._index[label]

    def element_order(self, g: int) -> int:
        k, x = 1, g
        while x != self.identity:
            x = int(self.table[x, g])
            k += 1
        return k

    def check_axioms(self, samples: int = 20000, seed: int = 0) -> bool:
        """Associativity, exhaustively for order <= 64 and sampled above."""
        t = self.table
        n = self.order
        if n <= 64:
            lhs = t[t[:, :, None], np.arange(n)[None, None, :]]  # (ab)c
            rhs = t[np.arange(n)[:, None, None], t[None, :, :]]  # a(bc)
            assoc = bool((lhs == rhs).all())
        else:
            rng = np.random.default_rng(seed)
            a, b, c = rng.integers(0, n, size=(3, samples))
            assoc = bool((t[t[a, b], c] == t[a, t[b, c]]).all())
        e = self.identity
        ident = bool((t[e] == np.arange(n)).all() and (t[:, e] == np.arange(n)).all())
        inv = self.inverse_table
        inverses = bool((t[np.arange(n), inv] == e).all() and (t[inv, np.arange(n)] == e).all())
        return assoc and ident and inverses

    def subgroup(self, members: Iterable[int]) -> "Subgroup":
        return Subgroup(self, members)

    def subgroup_by_labels(self, labels) -> "Subgroup":
        return Subgroup(self, [self.index(lab) for lab in labels])

    def to_dict(self) -> dict:
        if self.tag == "z8_semidirect":
            return {"order": self.order, "rule": "z8_semidirect"}
        return {"order": self.order, "rule": "table", "table": self.table.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteGroup":
        rule = d.get("rule", "table")
        if rule == "z8_semidirect":
            G = z8_semidirect()
        elif rule == "table":
            G = cls(d["table"])
        else:
            raise GroupError(f"unknown multiplication rule {rule!r}")
        if "order" in d and d["order"] != G.order:
            raise GroupError("declared order does not match the rule")
        return G


class Subgroup:
    def __init__(self, parent: FiniteGroup, members: Iterable[int]):
        members = sorted(set(int(m) for m in members))
        if not members or members[0] < 0 or members[-1] >= parent.order:
            raise GroupError("subgroup members must be elements of the parent group")
        ms = set(members)
        if parent.identity not in ms:
            raise GroupError("subgroup must contain the identity")
        t = parent.table
        for a in members:
            if parent.inv(a) not in ms:
                raise GroupError("subgroup not closed under inverses")
            for b in members:
                if int(t[a, b]) not in ms:
                    raise GroupError("subgroup not closed under multiplication")
        self.parent = parent
        self.members = tuple(members)
        self._set = frozenset(members)

    def __contains__(self, g):
        return g in self._set

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __eq__(self, other):
        return isinstance(other, Subgroup) and other.parent is self.parent and other._set == self._set

    def __hash__(self):
        return hash(self._set)

    def __repr__(self):
        return f"Subgroup(order={len(self)}, of={self.parent!r})"

    def conjugate_by(self, x: int) -> frozenset:
        return frozenset(self.parent.conj(x, h) for h in self.members)

    @cached_property
    def cosets(self) -> "CosetSpace":
        return CosetSpace(self)


class CosetSpace:
    """Cosets ``Λg`` of a subgroup, the orbits of left multiplication by Λ.  Coset ids are ordered by their smallest
    element, which is also the stored representative."""

    def __init__(self, sub: Subgroup):
        G = sub.parent
        lookup = np.full(G.order, -1, dtype=np.int64)
        reps = []
        members = np.array(sub.members)
        for g in range(G.order):
            if lookup[g] >= 0:
                continue
            orbit = G.table[members, g]
            lookup[orbit] = len(reps)
            reps.append(g)
        self.subgroup = sub
        self.group = G
        self.representatives = tuple(reps)
        self.lookup = lookup
        self.lookup.setflags(write=False)

    def __len__(self):
        return len(self.representatives)

    def coset_of(self, g: int) -> int:
        return int(self.lookup[g])

    def act(self, coset: int, g: int) -> int:
        """Λδ -> Λδg"""
        return int(self.lookup[self.group.table[self.representatives[coset], g]])

    def members(self, coset: int) -> list[int]:
        return [int(g) for g in np.flatnonzero(self.lookup == coset)]


# ---------------------------------------------------------------------------
# concrete groups


def z8_semidirect() -> FiniteGroup:
    """(Z/8)^* ⋉ Z/8 with (a,b)(a',b') = (aa', ab'+b)."""
    units = (1, 3, 5, 7)
    labels = [(a, b) for a in units for b in range(8)]
    idx = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    table = np.empty((n, n), dtype=np.int64)
    for i, (a, b) in enumerate(labels):
        for j, (a2, b2) in enumerate(labels):
            table[i, j] = idx[((a * a2) % 8, (a * b2 + b) % 8)]
    return FiniteGroup(table, labels, tag="z8_semidirect")


@dataclass(frozen=True)
class GassmannExample:
    group: FiniteGroup
    H1: Subgroup
    H2: Subgroup
    h: tuple  # (h1, h2, h3, h4) as element indices


def make_example_group() -> GassmannExample:
    G = z8_semidirect()
    H1 = G.subgroup_by_labels([(1, 0), (3, 0), (5, 0), (7, 0)])
    H2 = G.subgroup_by_labels([(1, 0), (3, 4), (5, 4), (7, 0)])
    h = tuple(G.index(lab) for lab in [(3, 0), (5, 0), (3, 4), (5, 4)])
    return GassmannExample(G, H1, H2, h)


def symmetric_group(n: int) -> FiniteGroup:
    """S_n acting on {0..n-1}; product is composition (pq)(x) = p(q(x))."""
    perms = list(itertools.permutations(range(n)))
    idx = {p: i for i, p in enumerate(perms)}
    m = len(perms)
    table = np.empty((m, m), dtype=np.int64)
    for i, p in enumerate(perms):
        for j, q in enumerate(perms):
            table[i, j] = idx[tuple(p[q[x]] for x in range(n))]
    return FiniteGroup(table, perms, tag=f"S{n}")


def cyclic_group(n: int) -> FiniteGroup:
    a = np.arange(n)
    return FiniteGroup((a[:, None] + a[None, :]) % n, tag=f"C{n}")


# ---------------------------------------------------------------------------
# conjugacy


def conjugacy_classes(G: FiniteGroup) -> list[tuple[int, ...]]:
    """Orbits of g -> x g x^-1, each sorted, listed by smallest member."""
    seen = np.zeros(G.order, dtype=bool)
    classes = []
    xs = np.arange(G.order)
    for g in range(G.order):
        if seen[g]:
            continue
        orbit = np.unique(G.table[G.table[xs, g], G.inverse_table[xs]])
        seen[orbit] = True
        classes.append(tuple(int(x) for x in orbit))
    return classes


@dataclass
class AlmostConjugacyResult:
    almost_conjugate: bool
    # one row per class: (class representative, class size, |C∩H1|, |C∩H2|)
    table: list[tuple[int, int, int, int]]

    def __bool__(self):
        return self.almost_conjugate


def is_almost_conjugate(G: FiniteGroup, H1: Subgroup, H2: Subgroup) -> AlmostConjugacyResult:
    for H in (H1, H2):
        if H.parent is not G:
            raise GroupError("subgroup is not contained in the given group")
    rows = []
    for cls in conjugacy_classes(G):
        c1 = sum(1 for g in cls if g in H1)
        c2 = sum(1 for g in cls if g in H2)
        rows.append((cls[0], len(cls), c1, c2))
    return AlmostConjugacyResult(all(r[2] == r[3] for r in rows), rows)


@dataclass
class ConjugacyResult:
    conjugate: bool
    witness: int | None
    candidates_checked: int

    def __bool__(self):
        return self.conjugate


def is_conjugate(G: FiniteGroup, H1: Subgroup, H2: Subgroup) -> ConjugacyResult:
    """Search x with x H1 x^-1 = H2; a negative answer certifies that all
    |G| candidates were checked."""
    target = H2._set
    if len(H1) != len(H2):
        return ConjugacyResult(False, None, 0)
    for x in range(G.order):
        if H1.conjugate_by(x) == target:
            return ConjugacyResult(True, x, x + 1)
    return ConjugacyResult(False, None, G.order)


# ---------------------------------------------------------------------------
# products of a base group


class ProductGroup:
    """G^n with coordinatewise product; elements are n-tuples of indices."""

    def __init__(self, base: FiniteGroup, arity: int):
        if arity < 1:
            raise GroupError("arity must be >= 1")
        self.base = base
        self.arity = arity
        self.order = base.order**arity
        self.identity = (base.identity,) * arity

    def __repr__(self):
        return f"ProductGroup({self.base!r}^{self.arity})"

    def mul(self, a, b):
        t = self.base.table
        return tuple(int(t[x, y]) for x, y in zip(a, b))

    def inv(self, a):
        return tuple(self.base.inv(x) for x in a)

    def prod(self, elems):
        out = self.identity
        for g in elems:
            out = self.mul(out, g)
        return out

    def inject(self, i: int, g: int) -> tuple:
        """ι_i with 1-based coordinate i."""
        if not 1 <= i <= self.arity:
            raise GroupError(f"coordinate {i} outside 1..{self.arity}")
        out = list(self.identity)
        out[i - 1] = g
        return tuple(out)

    def encode(self, a) -> int:
        k = 0
        for x in a:
            k = k * self.base.order + x
        return k

    def decode(self, k: int) -> tuple:
        out = []
        for _ in range(self.arity):
            k, r = divmod(k, self.base.order)
            out.append(r)
        return tuple(reversed(out))

    def elements(self):
        return itertools.product(range(self.base.order), repeat=self.arity)

    @cached_property
    def materialized(self) -> FiniteGroup:
        if self.order > MAX_TABLE_ORDER:
            raise GroupError(f"refusing to tabulate a group of order {self.order}")
        n = self.base.order
        t = self.base.table
        idx = np.arange(self.order)
        digits = [(idx // n ** (self.arity - 1 - c)) % n for c in range(self.arity)]
        table = np.zeros((self.order, self.order), dtype=np.int64)
        for c in range(self.arity):
            table = table * n + t[digits[c][:, None], digits[c][None, :]]
        labels = [self.decode(k) for k in range(self.order)]
        return FiniteGroup(table, labels, tag=f"{self.base.tag}^{self.arity}")


@dataclass(frozen=True)
class PsiWindow:
    """ψ restricted to 1..n; coordinates past the window read as 2."""

    values: tuple

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        if not vals or any(v not in (1, 2) for v in vals):
            raise GroupError("ψ entries must be 1 or 2 and the window nonempty")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    def __call__(self, i: int) -> int:
        if i < 1:
            raise GroupError("ψ is indexed from 1")
        return self.values[i - 1] if i <= self.n else 2

    def __str__(self):
        return "".join(map(str, self.values))


def all_windows(n: int) -> list[PsiWindow]:
    return [PsiWindow(v) for v in itertools.product((1, 2), repeat=n)]


class ProductSubgroup:
    """K_ψ = Π H_{ψ(i)} inside G^n, kept in coordinate form."""

    def __init__(self, product: ProductGroup, factors: Sequence[Subgroup], psi: PsiWindow | None = None):
        if len(factors) != product.arity:
            raise GroupError("one factor per coordinate")
        for H in factors:
            if H.parent is not product.base:
                raise GroupError("factors must be subgroups of the base group")
        self.product = product
        self.factors = tuple(factors)
        self.psi = psi

    def __len__(self):
        return math.prod(len(H) for H in self.factors)

    def __contains__(self, g):
        return all(x in H for x, H in zip(g, self.factors))

    @property
    def index(self) -> int:
        return math.prod(len(H.cosets) for H in self.factors)

    def coset_of(self, g) -> tuple:
        return tuple(H.cosets.coset_of(x) for x, H in zip(g, self.factors))

    def act(self, coset: tuple, g) -> tuple:
        return tuple(H.cosets.act(c, x) for c, x, H in zip(coset, g, self.factors))

    def coset_ids(self):
        return itertools.product(*(range(len(H.cosets)) for H in self.factors))

    def representative(self, coset: tuple) -> tuple:
        return tuple(H.cosets.representatives[c] for c, H in zip(coset, self.factors))

    def materialize(self) -> Subgroup:
        P = self.product
        members = [P.encode(k) for k in itertools.product(*(H.members for H in self.factors))]
        return Subgroup(P.materialized, members)


def product_subgroup(psi: PsiWindow, H1: Subgroup, H2: Subgroup, product: ProductGroup | None = None) -> ProductSubgroup:
    if H1.parent is not H2.parent:
        raise GroupError("H1 and H2 must live in the same group")
    if product is None:
        product = ProductGroup(H1.parent, psi.n)
    if product.arity != psi.n:
        raise GroupError("window size differs from product arity")
    return ProductSubgroup(product, [H1 if psi(i) == 1 else H2 for i in range(1, psi.n + 1)], psi)


# ---------------------------------------------------------------------------
# fixed cosets and transplantation


def fixed_cosets(Lambda: Subgroup, gamma: int) -> frozenset[int]:
    """F(Λ,γ): ids of cosets Λδ with Λδγ = Λδ."""
    G = Lambda.parent
    if not 0 <= gamma < G.order:
        raise GroupError("γ is not an element of the ambient group")
    cs = Lambda.cosets
    reps = np.array(cs.representatives)
    moved = cs.lookup[G.table[reps, gamma]]
    return frozenset(int(i) for i in np.flatnonzero(moved == np.arange(len(reps))))


def product_fixed_cosets(K: ProductSubgroup, gs: Sequence[tuple]) -> frozenset[tuple]:
    """F(K, g_1...g_n) for K = Π H_i, computed one coordinate at a time."""
    g = K.product.prod(gs)
    per_coord = [sorted(fixed_cosets(H, x)) for H, x in zip(K.factors, g)]
    return frozenset(itertools.product(*per_coord))


def admissible_divisors(gammas: Sequence) -> list[int]:
    """Divisors p of n with γ_i = γ_j whenever i ≡ j mod n/p (p = 1 included)."""
    n = len(gammas)
    out = []
    for p in range(1, n + 1):
        if n % p:
            continue
        d = n // p
        if all(gammas[i] == gammas[i % d] for i in range(n)):
            out.append(p)
    return out


def _divisor_profile(fsets: dict[int, frozenset]) -> dict:
    """Map each coset to the largest admissible p whose F-set contains it."""
    profile = {}
    for p in sorted(fsets):
        for c in fsets[p]:
            profile[c] = p
    return profile


def _match_by_profile(f1: dict, f2: dict, key=lambda c: c) -> dict:
    prof1, prof2 = _divisor_profile(f1), _divisor_profile(f2)
    rho = {}
    for p in sorted(f1):
        a = sorted((c for c, q in prof1.items() if q == p), key=key)
        b = sorted((c for c, q in prof2.items() if q == p), key=key)
        if len(a) != len(b):
            raise NotAlmostConjugateError(f"fixed-coset strata of level p={p} differ in size ({len(a)} vs {len(b)})")
        rho.update(zip(a, b))
    return rho


def transplantation_bijection(Lambda1: Subgroup, Lambda2: Subgroup, gammas: Sequence[int]) -> dict[int, int]:
    """Bijection F(Λ1, γ1..γn) -> F(Λ2, γ1..γn) preserving membership in
    every F(·, γ1..γ_{n/p}) for admissible p.

    Cosets are stratified by the largest admissible p that fixes them
    (the sets are closed under intersection, S_p ∩ S_q = S_lcm(p,q)), and
    each stratum is matched in sorted representative order.
    """
    G = Lambda1.parent
    if not gammas:
        raise GroupError("need at least one γ")
    if not is_almost_conjugate(G, Lambda1, Lambda2):
        raise NotAlmostConjugateError("subgroups are not almost conjugate; no transplantation bijection is guaranteed")
    n = len(gammas)
    ps = admissible_divisors(gammas)
    f1 = {p: fixed_cosets(Lambda1, G.prod(gammas[: n // p])) for p in ps}
    f2 = {p: fixed_cosets(Lambda2, G.prod(gammas[: n // p])) for p in ps}
    return _match_by_profile(f1, f2, key=lambda c: c)


def product_transplantation_bijection(K1: ProductSubgroup, K2: ProductSubgroup, gs: Sequence[tuple]) -> dict[tuple, tuple]:
    """Coordinatewise ρ for product subgroups: each coordinate uses the
    bijection for its own pair (H_{ψ1(i)}, H_{ψ2(i)}); equal pairs map by
    the identity."""
    if K1.product.arity != K2.product.arity or K1.product.base is not K2.product.base:
        raise GroupError("product subgroups live in different groups")
    G = K1.product.base
    coords = []
    for i in range(K1.product.arity):
        A, B = K1.factors[i], K2.factors[i]
        seq = [g[i] for g in gs]
        if A == B:
            fixed = fixed_cosets(A, G.prod(seq))
            coords.append({c: c for c in fixed})
        else:
            coords.append(transplantation_bijection(A, B, seq))
    return {tuple(src): tuple(m[c] for m, c in zip(coords, src)) for src in itertools.product(*(sorted(m) for m in coords))}


def check_bijection_compatible(rho: dict, fsets1: dict, fsets2: dict) -> bool:
    """ρ injective, onto the p=1 target set, and divisor compatible."""
    if len(set(rho.values())) != len(rho):
        return False
    if set(rho) != set(fsets1[1]) or set(rho.values()) != set(fsets2[1]):
        return False
    for p in fsets1:
        for c, img in rho.items():
            if (c in fsets1[p]) != (img in fsets2[p]):
                return False
    return True


# ---------------------------------------------------------------------------
# ψ windows


def diagonal_extension(psis: Sequence[PsiWindow], n: int) -> PsiWindow:
    """ψ with ψ(2^{k-1}(2i-1)) != ψ_k(2^{k-1}(2i-1)) for every listed ψ_k
    and every such index inside 1..n; other entries are 1."""
    out = [1] * n
    for k, pk in enumerate(psis, start=1):
        step = 2 ** (k - 1)
        if step > n:
            raise GroupError(f"window {n} too small for {len(psis)} constraints")
        i = 1
        while (idx := step * (2 * i - 1)) <= n:
            out[idx - 1] = 3 - pk(idx)
            i += 1
    return PsiWindow(tuple(out))
