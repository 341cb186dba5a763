"""Decorated gluing graphs: vertex pieces and edge pieces glued along
labelled ports following a Cayley graph, their quotients by subgroups,
and combinatorial closed walks standing in for closed geodesics.

A port is ``(j, h, k)`` with ``k`` in ``1..2*m_max``.  The edge piece of
class ``(j, h, m)`` joins port ``(j, h, 2m)`` of ``V_g`` to port
``(j, h, 2m-1)`` of ``V_{gh}``.

A closed walk that leaves vertex pieces (Case 5) is a cyclic sequence of
steps ``(vertex, arc, mu)``: an interior arc of a vertex piece from an
entry port to an exit port, followed by a crossing of the edge piece
attached at the exit port, passing through μ-curve ``mu`` (0 or 1).
"""
from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from .groups import (
    FiniteGroup,
    GassmannExample,
    GroupError,
    ProductGroup,
    ProductSubgroup,
    PsiWindow,
    Subgroup,
    fixed_cosets,
    product_fixed_cosets,
    product_subgroup,
)


class TemplateError(ValueError):
    pass


class WalkError(ValueError):
    pass


class TypeCountError(ArithmeticError):
    pass


def partner(port: tuple) -> tuple:
    """The port at the other end of the edge piece attached to ``port``."""
    j, h, k = port
    return (j, h, k - 1) if k % 2 == 0 else (j, h, k + 1)


def edge_class(port: tuple) -> tuple:
    j, h, k = port
    return (j, h, (k + 1) // 2)


# ---------------------------------------------------------------------------
# vertex templates


@dataclass(frozen=True)
class VertexArc:
    entry: tuple
    exit: tuple
    itinerary: tuple  # internal curves crossed, in order


@dataclass
class VertexTemplate:
    """Finite stand-in for a vertex surface.

    ``pants`` lists boundary triples; a boundary is ``("port", (j,h,k))`` or
    ``("curve", name)``.  Every curve name occurs in exactly two pants.
    """

    ports: tuple
    pants: tuple
    curves: tuple
    arcs: tuple
    j0: int = 1
    decorations: dict = field(default_factory=dict)  # (i, a) -> curve name of q_{a,i}
    groupings: dict = field(default_factory=dict)  # curve name -> (role, (curve, curve))
    edge_loops: tuple = ("cross",)
    variant: str = "basic"

    def __post_init__(self):
        seen = Counter()
        port_set = set(self.ports)
        for P in self.pants:
            if len(P) != 3:
                raise TemplateError("pants need three boundaries")
            for kind, name in P:
                if kind == "port" and name not in port_set:
                    raise TemplateError(f"pants references unknown port {name}")
                seen[(kind, name)] += 1
        for p in self.ports:
            if seen[("port", p)] != 1:
                raise TemplateError(f"port {p} must bound exactly one pants")
        for c in self.curves:
            if seen[("curve", c)] != 2:
                raise TemplateError(f"curve {c} must bound exactly two pants")
        for a in self.arcs:
            if a.entry not in port_set or a.exit not in port_set:
                raise TemplateError("arc references a missing port")
            if a.entry == a.exit:
                raise TemplateError("arcs entering and leaving through one port are not modelled")
            for c in a.itinerary:
                if c not in self.curves:
                    raise TemplateError(f"arc crosses unknown curve {c}")
        self._arc_index = {a: i for i, a in enumerate(self.arcs)}
        for a in self.arcs:
            if VertexArc(a.exit, a.entry, tuple(reversed(a.itinerary))) not in self._arc_index:
                raise TemplateError("arc set must be closed under reversal")

    @cached_property
    def reverse_arc(self) -> tuple:
        return tuple(self._arc_index[VertexArc(a.exit, a.entry, tuple(reversed(a.itinerary)))] for a in self.arcs)

    @cached_property
    def arcs_from(self) -> dict:
        out = defaultdict(list)
        for i, a in enumerate(self.arcs):
            out[a.entry].append(i)
        return {p: tuple(v) for p, v in out.items()}

    def arc_id(self, entry, exit_) -> int:
        for i, a in enumerate(self.arcs):
            if a.entry == entry and a.exit == exit_:
                return i
        raise TemplateError(f"no arc from {entry} to {exit_}")

    def to_dict(self, label=str) -> dict:
        return {
            "variant": self.variant,
            "j0": self.j0,
            "ports": [[p[0], label(p[1]), p[2]] for p in self.ports],
            "curves": list(self.curves),
            "pants": [[[k, n if k == "curve" else [n[0], label(n[1]), n[2]]] for k, n in P] for P in self.pants],
            "arc_count": len(self.arcs),
            "decorations": {f"{i},{a}": c for (i, a), c in sorted(self.decorations.items())},
            "edge_loops": list(self.edge_loops),
        }


def _pants_tree_path(pants, src, dst):
    """Internal curves crossed on the path between two pants of a tree."""
    adj = defaultdict(list)
    owners = defaultdict(list)
    for i, P in enumerate(pants):
        for kind, name in P:
            if kind == "curve":
                owners[name].append(i)
    for name, (a, b) in owners.items():
        adj[a].append((b, name))
        adj[b].append((a, name))
    prev = {src: None}
    queue = [src]
    for u in queue:
        for v, name in adj[u]:
            if v not in prev:
                prev[v] = (u, name)
                queue.append(v)
    if dst not in prev:
        raise TemplateError("vertex pants decomposition is disconnected")
    path = []
    v = dst
    while prev[v] is not None:
        u, name = prev[v]
        path.append(name)
        v = u
    return tuple(reversed(path))


def coordinate_elements(ex: GassmannExample, product: ProductGroup | None):
    """(i, a) -> element index of ι_i(h_a) in the tabulated group."""
    if product is None:
        return {(1, a + 1): ex.h[a] for a in range(4)}
    out = {}
    for i in range(1, product.arity + 1):
        for a in range(4):
            out[(i, a + 1)] = product.encode(product.inject(i, ex.h[a]))
    return out


def build_template(
    ex: GassmannExample,
    T: Sequence[int],
    product: ProductGroup | None = None,
    J: Sequence[int] = (1,),
    m_max: int = 1,
    variant: str = "basic",
    j0: int = 1,
    edge_loops: Sequence[str] = ("cross",),
) -> VertexTemplate:
    """Planar vertex template carrying the q-curve decorations.

    ``basic``: for every coordinate i, q_{1,i} and q_{2,i} cut off the port
    pairs of ι_i(h1), ι_i(h2) at m = 1 and q_{3,i} joins them.
    ``extended``: q_{a,i} cuts off the ports (ι_i(h_a), 2i), (ι_i(h_a), 2i-1) for
    a = 1..4, r_i joins q_{1,i}, q_{2,i} and s_i joins q_{3,i}, q_{4,i}.
    Remaining port pairs get their own curve and everything left over is
    joined by a chain of pants.
    """
    if variant not in ("basic", "extended"):
        raise TemplateError(f"unknown template variant {variant!r}")
    if j0 not in J:
        raise TemplateError("distinguished index j0 must belong to J")
    n = 1 if product is None else product.arity
    if variant == "extended" and m_max < n:
        raise TemplateError("extended template needs m_max >= window size")
    elems = coordinate_elements(ex, product)
    Tset = list(dict.fromkeys(int(t) for t in T))
    ports = tuple((j, h, k) for j in J for h in Tset for k in range(1, 2 * m_max + 1))
    port_set = set(ports)

    pants = []
    pair_curve = {}
    decorations = {}
    if variant == "basic":
        wanted = [(i, a, 1) for i in range(1, n + 1) for a in (1, 2)]
    else:
        wanted = [(i, a, i) for i in range(1, n + 1) for a in (1, 2, 3, 4)]
    for i, a, m in wanted:
        h = elems[(i, a)]
        cls = (j0, h, m)
        if (j0, h, 2 * m) not in port_set:
            raise TemplateError(f"T must contain ι_{i}(h{a}) for the {variant} decorations")
        name = f"q{a},{i}"
        pair_curve[cls] = name
        decorations[(i, a)] = name
    for j in J:
        for h in Tset:
            for m in range(1, m_max + 1):
                pair_curve.setdefault((j, h, m), f"c[{j},{h},{m}]")
    for (j, h, m), name in pair_curve.items():
        pants.append((("port", (j, h, 2 * m)), ("port", (j, h, 2 * m - 1)), ("curve", name)))

    groupings = {}
    leftovers = []
    joined = set()
    for i in range(1, n + 1):
        if variant == "basic":
            groups = [(f"q3,{i}", "q3", (1, 2))]
        else:
            groups = [(f"r{i}", "r", (1, 2)), (f"s{i}", "s", (3, 4))]
        for name, role, (a, b) in groups:
            ca, cb = decorations[(i, a)], decorations[(i, b)]
            pants.append((("curve", ca), ("curve", cb), ("curve", name)))
            groupings[name] = (role, (ca, cb))
            joined.update((ca, cb))
            leftovers.append(name)
    for name in pair_curve.values():
        if name not in joined:
            leftovers.append(name)

    if len(leftovers) < 2:
        raise TemplateError("vertex template would keep a free boundary; add ports or generators")
    if len(leftovers) == 2:
        keep, drop = leftovers
        pants = [tuple(("curve", keep) if b == ("curve", drop) else b for b in P) for P in pants]
        groupings.pop(drop, None)
    else:
        spine = leftovers[0]
        for k, nxt in enumerate(leftovers[1:-2], start=1):
            new = f"spine{k}"
            pants.append((("curve", spine), ("curve", nxt), ("curve", new)))
            spine = new
        pants.append((("curve", spine), ("curve", leftovers[-2]), ("curve", leftovers[-1])))

    curves = tuple(sorted({name for P in pants for kind, name in P if kind == "curve"}))

    owner = {}
    for idx, P in enumerate(pants):
        for kind, name in P:
            if kind == "port":
                owner[name] = idx
    arcs = set()

    def add(p, q):
        it = _pants_tree_path(pants, owner[p], owner[q])
        arcs.add(VertexArc(p, q, it))
        arcs.add(VertexArc(q, p, tuple(reversed(it))))

    ring = list(ports)
    if len(ring) >= 2:
        for k in range(len(ring)):
            p, q = ring[k], ring[(k + 1) % len(ring)]
            if p != q:
                add(p, q)
    # witness arcs: (h_a, odd) -> (h_b, even) and (h_b, odd) -> (h_a, even)
    for i in range(1, n + 1):
        pairs = [(1, 2)] if variant == "basic" else [(1, 2), (3, 4)]
        for a, b in pairs:
            m = 1 if variant == "basic" else i
            ha, hb = elems[(i, a)], elems[(i, b)]
            add((j0, ha, 2 * m - 1), (j0, hb, 2 * m))
            add((j0, hb, 2 * m - 1), (j0, ha, 2 * m))
    arcs = tuple(sorted(arcs, key=lambda a: (a.entry, a.exit, a.itinerary)))
    return VertexTemplate(
        ports=ports,
        pants=tuple(pants),
        curves=curves,
        arcs=arcs,
        j0=j0,
        decorations=decorations,
        groupings=groupings,
        edge_loops=tuple(edge_loops),
        variant=variant,
    )


# ---------------------------------------------------------------------------
# gluing graphs


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    cls: tuple  # (j, h, m)

    @property
    def source_port(self):
        j, h, m = self.cls
        return (j, h, 2 * m)

    @property
    def target_port(self):
        j, h, m = self.cls
        return (j, h, 2 * m - 1)


@dataclass
class GluingGraph:
    group: FiniteGroup
    template: VertexTemplate
    T: tuple
    J: tuple
    m_max: int
    vertex_reps: tuple  # group element representing each vertex (coset representative)
    edges: tuple
    subgroup: object = None  # None for the cover, else Subgroup or ProductSubgroup
    product: ProductGroup | None = None

    def __post_init__(self):
        port_edge = {}
        for eid, e in enumerate(self.edges):
            for key in ((e.source, e.source_port), (e.target, e.target_port)):
                if key in port_edge:
                    raise TemplateError(f"port {key} used by two edges")
                port_edge[key] = eid
        self.port_edge = port_edge

    @property
    def vertex_count(self) -> int:
        return len(self.vertex_reps)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def cross(self, vertex: int, port: tuple):
        """Leave ``vertex`` through ``port``; return (edge id, direction, arrival vertex, arrival port)."""
        eid = self.port_edge[(vertex, port)]
        e = self.edges[eid]
        if port[2] % 2 == 0:
            return eid, 1, e.target, e.target_port
        return eid, -1, e.source, e.source_port

    def element_label(self, g: int):
        lab = self.group.labels[g]
        return list(lab) if isinstance(lab, tuple) else lab

    def to_dict(self) -> dict:
        lab = self.element_label
        return {
            "vertices": [lab(g) for g in self.vertex_reps],
            "edges": [
                {
                    "source": e.source,
                    "source_port": [e.cls[0], lab(e.cls[1]), 2 * e.cls[2]],
                    "target": e.target,
                    "target_port": [e.cls[0], lab(e.cls[1]), 2 * e.cls[2] - 1],
                    "class": [e.cls[0], lab(e.cls[1]), e.cls[2]],
                }
                for e in self.edges
            ],
        }

    def stats(self) -> dict:
        return {
            "vertices": self.vertex_count,
            "edges": self.edge_count,
            "ports_per_vertex": len(self.template.ports),
            "pants_per_vertex": len(self.template.pants),
            "internal_curves_per_vertex": len(self.template.curves),
            "arcs_per_vertex": len(self.template.arcs),
        }


def _check_generators(G: FiniteGroup, T):
    T = tuple(dict.fromkeys(int(t) for t in T))
    if not T:
        raise GroupError("generating set must be nonempty")
    if G.identity in T:
        raise GroupError("generating set must avoid the identity")
    return T


def build_cover_graph(G: FiniteGroup, template: VertexTemplate, T, m_max: int, J=(1,), product=None) -> GluingGraph:
    T = _check_generators(G, T)
    ports = set(template.ports)
    for j in J:
        for h in T:
            for k in range(1, 2 * m_max + 1):
                if (j, h, k) not in ports:
                    raise TemplateError(f"template lacks port {(j, h, k)}")
    edges = []
    for g in range(G.order):
        for j in J:
            for h in T:
                for m in range(1, m_max + 1):
                    edges.append(Edge(g, G.mul(g, h), (j, h, m)))
    return GluingGraph(G, template, T, tuple(J), m_max, tuple(range(G.order)), tuple(edges), None, product)


def quotient_graph(cover: GluingGraph, K) -> GluingGraph:
    """Vertices are cosets Kg; the edge of class (j,h,m) joins Kg to Kgh.

    ``K`` may be a Subgroup of the cover's group or a ProductSubgroup
    (which is tabulated for the graph but kept for coordinatewise counting).
    """
    if cover.subgroup is not None:
        raise GroupError("quotients are taken of the cover")
    Ksub = K.materialize() if isinstance(K, ProductSubgroup) else K
    if Ksub.parent is not cover.group:
        raise GroupError("subgroup does not live in the cover's group")
    cs = Ksub.cosets
    rep_set = set(cs.representatives)
    edges = tuple(
        Edge(cs.coset_of(e.source), cs.coset_of(e.target), e.cls) for e in cover.edges if e.source in rep_set
    )
    return GluingGraph(cover.group, cover.template, cover.T, cover.J, cover.m_max, cs.representatives, edges, K, cover.product)


def deck_transform(graph: GluingGraph, h: int, side: str = "left") -> bool:
    """Does V_g -> V_{hg} (left) or V_g -> V_{gh} (right) map the edge set of
    the cover onto itself, tags included?"""
    G = graph.group
    edges = {(e.source, e.target, e.cls) for e in graph.edges}
    f = (lambda g: G.mul(h, g)) if side == "left" else (lambda g: G.mul(g, h))
    return {(f(s), f(t), c) for s, t, c in edges} == edges


def graph_isomorphic_to_cover(quotient: GluingGraph, cover: GluingGraph) -> bool:
    """Label-preserving isomorphism test used for K = {e}."""
    if quotient.vertex_count != cover.vertex_count:
        return False
    relabel = {v: quotient.vertex_reps[v] for v in range(quotient.vertex_count)}
    mapped = {(relabel[e.source], relabel[e.target], e.cls) for e in quotient.edges}
    return mapped == {(e.source, e.target, e.cls) for e in cover.edges}


# ---------------------------------------------------------------------------
# walks and geodesic types


@dataclass(frozen=True)
class Walk:
    """``kind`` is one of ``port``, ``mu``, ``edge_loop``, ``vertex_curve``
    or ``crossing``.  For crossings ``steps`` holds (vertex, arc, mu) triples;
    the other kinds use ``data`` (vertex+port, edge+index, edge+tag, vertex+curve)."""

    kind: str
    data: tuple = ()
    steps: tuple = ()

    def to_dict(self) -> dict:
        if self.kind == "crossing":
            return {"kind": "crossing", "segments": [{"vertex": v, "arc": a, "mu": m} for v, a, m in self.steps]}
        return {"kind": self.kind, "data": [list(x) if isinstance(x, tuple) else x for x in self.data]}


@dataclass(frozen=True)
class GeodesicType:
    case: int
    key: tuple
    word: tuple = ()  # crossing word h_1..h_n (Case 5)
    divisors: tuple = ()  # admissible p >= 2 (Case 5)
    multiplicity: int = 1  # N (Case 5)

    @property
    def crossings(self) -> int:
        return len(self.key) if self.case == 5 else 0

    def label(self, group: FiniteGroup | None = None) -> str:
        if self.case != 5:
            return f"case{self.case}:{self.key}"
        return "case5:" + " ".join(f"{a}/{m}" for a, m in self.key)


def _rotations(seq):
    return [seq[i:] + seq[:i] for i in range(len(seq))]


def reverse_shape(seq: tuple, template: VertexTemplate) -> tuple:
    rev = template.reverse_arc
    n = len(seq)
    return tuple((rev[seq[-l % n][0]], seq[(-l - 1) % n][1]) for l in range(n))


def canonical_shape(seq: tuple, template: VertexTemplate) -> tuple:
    seq = tuple(seq)
    return min(_rotations(seq) + _rotations(reverse_shape(seq, template)))


def minimal_period(seq) -> int:
    n = len(seq)
    for d in range(1, n + 1):
        if n % d == 0 and all(seq[i] == seq[i % d] for i in range(n)):
            return d
    return n


def crossing_word(seq: tuple, graph_or_template, group: FiniteGroup) -> tuple:
    template = getattr(graph_or_template, "template", graph_or_template)
    out = []
    for a, _ in seq:
        j, h, k = template.arcs[a].exit
        out.append(h if k % 2 == 0 else group.inv(h))
    return tuple(out)


def shape_is_consistent(seq: tuple, template: VertexTemplate) -> bool:
    n = len(seq)
    for l in range(n):
        a = template.arcs[seq[l][0]]
        b = template.arcs[seq[(l + 1) % n][0]]
        if partner(a.exit) != b.entry:
            return False
    return True


def make_crossing_type(seq: tuple, template: VertexTemplate, group: FiniteGroup) -> GeodesicType:
    seq = canonical_shape(seq, template)
    n = len(seq)
    d = minimal_period(seq)
    divisors = tuple(p for p in range(2, n + 1) if n % p == 0 and (n // p) % d == 0)
    reversible = reverse_shape(seq, template) in set(_rotations(seq))
    N = (n // d) * (2 if reversible else 1)
    return GeodesicType(5, seq, crossing_word(seq, template, group), divisors, N)


def classify_walk(w: Walk, graph: GluingGraph, schedule=None) -> GeodesicType:
    t = graph.template
    if w.kind == "port":
        v, port = w.data
        if port not in set(t.ports) or not 0 <= v < graph.vertex_count:
            raise WalkError("port curve not present in graph")
        return GeodesicType(1, ("port", port))
    if w.kind == "mu":
        eid, idx = w.data
        m = graph.edges[eid].cls[2]
        if schedule is not None and schedule.mu_of(m) is None:
            raise WalkError("μ-curve without an M length")
        return GeodesicType(2, ("mu", m))
    if w.kind == "edge_loop":
        eid, tag = w.data
        if tag not in t.edge_loops:
            raise WalkError(f"unknown edge loop {tag!r}")
        return GeodesicType(3, ("edge_loop", graph.edges[eid].cls, tag))
    if w.kind == "vertex_curve":
        v, name = w.data
        if name not in t.curves:
            raise WalkError(f"unknown internal curve {name!r}")
        return GeodesicType(4, ("vertex_curve", name))
    if w.kind != "crossing":
        raise WalkError(f"unknown walk kind {w.kind!r}")
    if not w.steps:
        raise WalkError("empty walk")
    n = len(w.steps)
    for l, (v, a, mu) in enumerate(w.steps):
        if mu not in (0, 1):
            raise WalkError("μ index must be 0 or 1")
        arc = t.arcs[a]
        _, _, arr_v, arr_port = graph.cross(v, arc.exit)
        nv, na, _ = w.steps[(l + 1) % n]
        if arr_v != nv or t.arcs[na].entry != arr_port:
            raise WalkError(f"walk breaks alternation/closure after step {l}")
    seq = tuple((a, mu) for _, a, mu in w.steps)
    return make_crossing_type(seq, t, graph.group)


def _coset_tools(graph: GluingGraph):
    """Return (fixed-set function on words, total vertex count) for the graph's subgroup."""
    K = graph.subgroup
    G = graph.group
    if isinstance(K, ProductSubgroup):
        P = K.product

        def fixed(word):
            return product_fixed_cosets(K, [P.decode(g) for g in word])

        return fixed
    if K is None:
        K = Subgroup(G, [G.identity])

    def fixed(word):
        return fixed_cosets(K, G.prod(word))

    return fixed


def count_type(graph: GluingGraph, c: GeodesicType) -> int:
    """Number of primitive unoriented closed geodesics of type ``c``.

    Case 5 uses the fixed-coset count
    (|F(K, w)| - |∪_{p∈𝒩} F(K, w_{n/p})|) / N; Cases 1-4 are read off the
    graph statistics.
    """
    t = graph.template
    if c.case == 1:
        return graph.vertex_count if c.key[1] in set(t.ports) else 0
    if c.case == 2:
        return 2 * sum(1 for e in graph.edges if e.cls[2] == c.key[1])
    if c.case == 3:
        _, cls, tag = c.key
        return sum(1 for e in graph.edges if e.cls == cls) if tag in t.edge_loops else 0
    if c.case == 4:
        return graph.vertex_count if c.key[1] in t.curves else 0
    fixed = _coset_tools(graph)
    n = len(c.word)
    closed = fixed(c.word)
    powers = set()
    for p in c.divisors:
        powers |= fixed(c.word[: n // p])
    diff = len(closed - powers)
    if diff % c.multiplicity:
        raise TypeCountError(f"N={c.multiplicity} does not divide {diff} for type {c.label()}")
    return diff // c.multiplicity


def enumerate_crossing_types(template: VertexTemplate, group: FiniteGroup, budget: int):
    """All Case-5 types with at most ``budget`` crossings, from the template alone."""
    arcs = template.arcs
    out = []
    for n in range(1, budget + 1):
        for a0 in range(len(arcs)):
            start = arcs[a0].entry

            def extend(seq, last_arc):
                if len(seq) == n:
                    if partner(arcs[last_arc].exit) == start:
                        s = tuple(seq)
                        if canonical_shape(s, template) == s:
                            out.append(s)
                    return
                nxt = template.arcs_from.get(partner(arcs[last_arc].exit), ())
                for b in nxt:
                    for mu in (0, 1):
                        seq.append((b, mu))
                        extend(seq, b)
                        seq.pop()

            for mu in (0, 1):
                extend([(a0, mu)], a0)
    return [make_crossing_type(s, template, group) for s in out]


def simple_types(template: VertexTemplate, graph: GluingGraph):
    out = [GeodesicType(1, ("port", p)) for p in template.ports]
    out += [GeodesicType(2, ("mu", m)) for m in range(1, graph.m_max + 1)]
    classes = sorted({e.cls for e in graph.edges})
    out += [GeodesicType(3, ("edge_loop", cls, tag)) for cls in classes for tag in template.edge_loops]
    out += [GeodesicType(4, ("vertex_curve", name)) for name in template.curves]
    return out


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_type_counts(graph: GluingGraph, budget: int) -> Counter:
    """Count primitive closed walks per type by walking the graph itself:
    every closed walk with at most ``budget`` crossings from every vertex,
    deduplicated up to rotation and reversal, proper powers dropped."""
    t = graph.template
    rev = t.reverse_arc
    counts = Counter()
    for v in range(graph.vertex_count):
        for p in t.ports:
            counts[GeodesicType(1, ("port", p)).key] += 1
        for name in t.curves:
            counts[("vertex_curve", name)] += 1
    for e in graph.edges:
        counts[("mu", e.cls[2])] += 2
        for tag in t.edge_loops:
            counts[("edge_loop", e.cls, tag)] += 1

    def full_reverse(steps):
        n = len(steps)
        # (v_1, rev a_1, mu_n), (v_n, rev a_n, mu_{n-1}), ..., (v_2, rev a_2, mu_1)
        return tuple((steps[-l % n][0], rev[steps[-l % n][1]], steps[(-l - 1) % n][2]) for l in range(n))

    # (vertex, arc) -> (arrival vertex, arrival port)
    move = {}
    for v in range(graph.vertex_count):
        for a, arc in enumerate(t.arcs):
            _, _, nv, nport = graph.cross(v, arc.exit)
            move[(v, a)] = (nv, nport)
    seen = set()
    crossing = Counter()
    for v0 in range(graph.vertex_count):
        for a0, arc0 in enumerate(t.arcs):
            stack = [((v0, a0, mu),) for mu in (0, 1)]
            while stack:
                steps = stack.pop()
                v, a, _ = steps[-1]
                nv, nport = move[(v, a)]
                if nv == v0 and nport == arc0.entry:
                    if minimal_period(steps) == len(steps):
                        canon = min(_rotations(steps) + _rotations(full_reverse(steps)))
                        if canon not in seen:
                            seen.add(canon)
                            shape = canonical_shape(tuple((a_, m_) for _, a_, m_ in steps), t)
                            crossing[shape] += 1
                if len(steps) < budget:
                    for b in t.arcs_from.get(nport, ()):
                        for mu in (0, 1):
                            stack.append(steps + ((nv, b, mu),))
    for shape, k in crossing.items():
        counts[shape] += k
    return counts


# ---------------------------------------------------------------------------
# transplantation report


@dataclass
class TransplantationReport:
    budget: int
    rows: list  # (label, case, crossings, count1, count2)
    passed: bool

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "passed": self.passed,
            "types": len(self.rows),
            "mismatches": [r for r in self.rows if r[3] != r[4]],
            "rows": [list(r) for r in self.rows],
        }


def type_counts(graph: GluingGraph, budget: int, types=None) -> dict:
    if types is None:
        types = simple_types(graph.template, graph) + enumerate_crossing_types(graph.template, graph.group, budget)
    return {c: count_type(graph, c) for c in types}


def verify_transplantation(Q1: GluingGraph, Q2: GluingGraph, budget: int) -> TransplantationReport:
    """Compare per-type primitive geodesic counts of two quotients."""
    if Q1.template is not Q2.template and Q1.template.ports != Q2.template.ports:
        return TransplantationReport(budget, [("template", 0, 0, 0, 0)], False)
    types = simple_types(Q1.template, Q1)
    for c in simple_types(Q2.template, Q2):
        if c not in types:
            types.append(c)
    types += enumerate_crossing_types(Q1.template, Q1.group, budget)
    rows = []
    ok = True
    for c in types:
        a, b = count_type(Q1, c), count_type(Q2, c)
        if a or b:
            rows.append((c.label(), c.case, c.crossings, a, b))
        ok &= a == b
    return TransplantationReport(budget, rows, ok)


# ---------------------------------------------------------------------------
# non-isometry obstruction and witness curves


@dataclass
class ObstructionResult:
    obstructed: bool
    coordinate: int
    pair: tuple  # (a, b): indices of h_a, h_b
    cosets_checked: int
    coordinate_elements_checked: int
    witness: tuple | None = None

    def __bool__(self):
        return self.obstructed


def coset_pair_obstruction(H: Subgroup, ha: int, hb: int):
    """True iff no g has {g h_a, g h_b} ⊆ H g, i.e. no coset Hg fixed by both."""
    G = H.parent
    for g in range(G.order):
        hg = H.cosets.coset_of(g)
        if H.cosets.coset_of(G.mul(g, ha)) == hg and H.cosets.coset_of(G.mul(g, hb)) == hg:
            return False, g
    return True, None


def isometry_obstruction(i: int, psi1: PsiWindow, psi2: PsiWindow, ex: GassmannExample) -> ObstructionResult:
    """Exhaustively confirm that no vertex of X/K_{ψ2} carries both loop
    edges the witness curve α_i of X/K_{ψ1} needs."""
    if psi1(i) == psi2(i):
        raise GroupError(f"windows agree at coordinate {i}")
    n = max(psi1.n, psi2.n, i)
    a, b = (1, 2) if psi1(i) == 1 else (3, 4)
    P = ProductGroup(ex.group, n)
    K = product_subgroup(PsiWindow(tuple(psi2(k) for k in range(1, n + 1))), ex.H1, ex.H2, P)
    ia, ib = P.inject(i, ex.h[a - 1]), P.inject(i, ex.h[b - 1])
    witness = None
    checked = 0
    for coset in K.coset_ids():
        checked += 1
        if K.act(coset, ia) == coset and K.act(coset, ib) == coset:
            witness = K.representative(coset)
            break
    coord_ok, _ = coset_pair_obstruction(K.factors[i - 1], ex.h[a - 1], ex.h[b - 1])
    if coord_ok != (witness is None):
        raise AssertionError("coordinate reduction disagrees with the exhaustive coset search")
    return ObstructionResult(witness is None, i, (a, b), checked, ex.group.order, witness)


def witness_curve(i: int, psi: PsiWindow, quotient: GluingGraph, ex: GassmannExample) -> Walk:
    """The curve α_i in the vertex piece of the trivial coset of X/K_ψ."""
    t = quotient.template
    a, b = (1, 2) if psi(i) == 1 else (3, 4)
    if (i, a) not in t.decorations or (i, b) not in t.decorations:
        raise TemplateError(f"template lacks the q-curve decorations for h{a}, h{b} at coordinate {i}")
    elems = coordinate_elements(ex, quotient.product)
    ha, hb = elems[(i, a)], elems[(i, b)]
    m = 1 if t.variant == "basic" else i
    j0 = t.j0
    arc1 = t.arc_id((j0, hb, 2 * m - 1), (j0, ha, 2 * m))
    arc2 = t.arc_id((j0, ha, 2 * m - 1), (j0, hb, 2 * m))
    v0 = 0  # cosets are ordered by least element; the identity's coset comes first
    _, _, v1, _ = quotient.cross(v0, t.arcs[arc1].exit)
    w = Walk("crossing", steps=((v0, arc1, 0), (v1, arc2, 0)))
    classify_walk(w, quotient)
    return w


def walk_profile(w: Walk, graph: GluingGraph) -> dict:
    """Crossing counts of a Case-5 walk with ports, internal curves and ν."""
    t = graph.template
    ports = Counter()
    curves = Counter()
    vertices = set()
    for v, a, mu in w.steps:
        arc = t.arcs[a]
        ports[(v, arc.entry)] += 1
        ports[(v, arc.exit)] += 1
        for c in arc.itinerary:
            curves[c] += 1
        vertices.add(v)
    return {
        "ports": dict(ports),
        "curves": dict(curves),
        "nu_crossings": len(w.steps),
        "single_component": len(vertices) == 1,
    }
