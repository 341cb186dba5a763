"""Hyperbolic kernel: collars, pants groups, Fenchel–Nielsen assembly of
2x2 matrix representations, lengths from traces, and spectra.

Matrices inside the assembly are 4-tuples ``(a, b, c, d)`` of mpmath
numbers so the working precision can grow with the size of the assembly.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .schedule import ASINH1, CENSUS_THRESHOLD, LengthSchedule, ScheduleError
from .spectrum import Spectrum


class GeometryError(ValueError):
    pass


class NonHyperbolicError(GeometryError):
    pass


class CompletenessError(GeometryError):
    pass


def collar_width(l: float) -> float:
    if not l > 0:
        raise GeometryError("collar width needs a positive length")
    return math.asinh(1.0 / math.sinh(l / 2.0))


def geodesic_length(M) -> float:
    """2 arccosh(|tr M| / 2) for a hyperbolic matrix."""
    if isinstance(M, tuple):
        t = abs(M[0] + M[3])
        if t <= 2:
            raise NonHyperbolicError(f"|trace| = {t} is not hyperbolic")
        return 2 * mpmath.acosh(t / 2)
    M = np.asarray(M, dtype=float)
    t = abs(M[0, 0] + M[1, 1])
    if t <= 2.0:
        raise NonHyperbolicError(f"|trace| = {t} is not hyperbolic")
    return 2.0 * math.acosh(t / 2.0)


# ---------------------------------------------------------------------------
# 2x2 helpers on tuples


def mmul(X, Y):
    a, b, c, d = X
    e, f, g, h = Y
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def minv(X):
    a, b, c, d = X
    return (d, -b, -c, a)


def mconj(C, X):
    return mmul(mmul(C, X), minv(C))


def mtrace(X):
    return X[0] + X[3]


def to_array(X) -> np.ndarray:
    return np.array([[float(X[0]), float(X[1])], [float(X[2]), float(X[3])]])


def max_log10(X) -> float:
    return max(float(mpmath.log10(abs(v))) if v else 0.0 for v in X)


# ---------------------------------------------------------------------------
# pants


@dataclass(frozen=True)
class PantsPiece:
    l1: float
    l2: float
    l3: float

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0 and self.l3 > 0):
            raise GeometryError("pants boundary lengths must be positive")

    @property
    def lengths(self):
        return (self.l1, self.l2, self.l3)


def _pants_tuples(l1, l2, l3, exp, cosh, sinh):
    al = l1 / 2
    tB = 2 * cosh(l2 / 2)
    tAB = -2 * cosh(l3 / 2)
    p = (tAB - exp(-al) * tB) / (2 * sinh(al))
    s = tB - p
    g1 = (exp(al), 0 * al, 0 * al, exp(-al))
    # conjugate by a positive diagonal so the off-diagonal entries of g2 balance
    c = p * s - 1
    r2 = abs(c) ** 0.5 if c else 1 + 0 * al
    g2 = (p, r2, c / r2, s)
    g3 = minv(mmul(g1, g2))
    return g1, g2, g3


def pants_rep(p: PantsPiece):
    """Boundary matrices g1, g2, g3 with g1 g2 g3 = I and traces of signs
    (+, +, -); each g_i translates by l_i and the other two boundary axes lie
    to its right."""
    gs = _pants_tuples(p.l1, p.l2, p.l3, math.exp, math.cosh, math.sinh)
    return tuple(np.array([[g[0], g[1]], [g[2], g[3]]], dtype=float) for g in gs)


def pants_rep_mp(p: PantsPiece):
    return _pants_tuples(mpmath.mpf(p.l1), mpmath.mpf(p.l2), mpmath.mpf(p.l3), mpmath.exp, mpmath.cosh, mpmath.sinh)


def _fixed_points(X):
    a, b, c, d = X
    if c == 0:
        raise GeometryError("axis through infinity")
    disc = mpmath.sqrt((a - d) ** 2 + 4 * b * c)
    return ((a - d) + disc) / (2 * c), ((a - d) - disc) / (2 * c)


def boundary_frame(g, other):
    """F with F g F^-1 = ±diag(λ, 1/λ), λ > 1, so the axis of g runs from 0
    up to ∞, and the common perpendicular to the axis of ``other`` has its
    foot at i."""
    a, b, c, d = g
    t = a + d
    if abs(t) <= 2:
        raise NonHyperbolicError("boundary is not hyperbolic")
    D = mpmath.sqrt(t * t - 4)
    lam_a = (t + D) / 2 if t > 0 else (t - D) / 2
    lam_r = 1 / lam_a

    def eigvec(lam):
        v1 = (b, lam - a)
        v2 = (lam - d, c)
        return v1 if abs(v1[0]) + abs(v1[1]) >= abs(v2[0]) + abs(v2[1]) else v2

    va, vr = eigvec(lam_a), eigvec(lam_r)
    det = va[0] * vr[1] - vr[0] * va[1]
    if det < 0:
        vr = (-vr[0], -vr[1])
        det = -det
    r = mpmath.sqrt(det)
    P = (va[0] / r, vr[0] / r, va[1] / r, vr[1] / r)
    F = minv(P)
    u, v = _fixed_points(mconj(F, other))
    if not (u > 0 and v > 0):
        raise GeometryError("neighbouring boundary is not on the expected side")
    sc = mpmath.sqrt(mpmath.sqrt(u * v))
    return mmul((1 / sc, 0 * sc, 0 * sc, sc), F)


ROT = (0, -1, 1, 0)


def translation(t):
    e = mpmath.exp(mpmath.mpf(t) / 2)
    return (e, 0 * e, 0 * e, 1 / e)


# ---------------------------------------------------------------------------
# assemblies


@dataclass(frozen=True)
class Gluing:
    first: tuple  # (pants index, boundary index)
    second: tuple
    twist: float = 0.0
    label: tuple = ()


@dataclass
class FNAssembly:
    pants: list
    gluings: list
    boundary_labels: dict = field(default_factory=dict)  # (pants, b) -> curve label

    def __post_init__(self):
        self.validate()

    def validate(self, tol: float = 1e-12):
        used = set()
        for gl in self.gluings:
            for P, b in (gl.first, gl.second):
                if not (0 <= P < len(self.pants) and 0 <= b < 3):
                    raise GeometryError(f"gluing references missing boundary {(P, b)}")
                if (P, b) in used:
                    raise GeometryError(f"boundary {(P, b)} glued twice")
                used.add((P, b))
            l1 = self.pants[gl.first[0]].lengths[gl.first[1]]
            l2 = self.pants[gl.second[0]].lengths[gl.second[1]]
            if abs(l1 - l2) > tol:
                raise GeometryError(f"length mismatch {l1} vs {l2} at gluing {gl.label}")
        self.unglued = tuple((P, b) for P in range(len(self.pants)) for b in range(3) if (P, b) not in used)

    def curve_ids(self) -> dict:
        """(pants, b) -> physical curve index; glued boundaries share one."""
        ids = {}
        for k, gl in enumerate(self.gluings):
            ids[gl.first] = ids[gl.second] = k
        for k, pb in enumerate(self.unglued):
            ids[pb] = len(self.gluings) + k
        return ids

    def to_dict(self) -> dict:
        return {
            "pants": [list(p.lengths) for p in self.pants],
            "gluings": [
                {"first": list(g.first), "second": list(g.second), "twist": g.twist, "label": [str(x) for x in g.label]}
                for g in self.gluings
            ],
            "unglued": [list(x) for x in self.unglued],
        }


@dataclass
class MatrixRep:
    """Generators ``g{P}.0``, ``g{P}.1`` per pants and ``s{k}`` per non-tree
    gluing.  ``boundary`` maps (pants, b) to a word, ``relations`` lists the
    gluing relations, each equal to ±I."""

    assembly: FNAssembly
    generators: dict
    boundary: dict
    relations: list
    stable: dict  # gluing index -> generator name or None
    dps: int

    def evaluate(self, word):
        with mpmath.workdps(self.dps):
            M = (mpmath.mpf(1), mpmath.mpf(0), mpmath.mpf(0), mpmath.mpf(1))
            for name, e in word:
                g = self.generators[name]
                M = mmul(M, g if e > 0 else minv(g))
            return M

    def matrix(self, name) -> np.ndarray:
        return to_array(self.generators[name])

    def relation_residue(self) -> float:
        worst = 0.0
        with mpmath.workdps(self.dps):
            for w in self.relations:
                M = self.evaluate(w)
                r = min(max(abs(M[0] - s), abs(M[1]), abs(M[2]), abs(M[3] - s)) for s in (1, -1))
                worst = max(worst, float(r))
        return worst

    def conjugated(self, C) -> "MatrixRep":
        with mpmath.workdps(self.dps):
            C = tuple(mpmath.mpf(x) for x in C)
            det = C[0] * C[3] - C[1] * C[2]
            r = mpmath.sqrt(det)
            C = tuple(x / r for x in C)
            gens = {k: mconj(C, g) for k, g in self.generators.items()}
        return MatrixRep(self.assembly, gens, self.boundary, self.relations, self.stable, self.dps)


def _pants_words(P):
    g1, g2 = f"g{P}.0", f"g{P}.1"
    return {(P, 0): ((g1, 1),), (P, 1): ((g2, 1),), (P, 2): ((g2, -1), (g1, -1))}


def _assemble_at(a: FNAssembly, dps: int):
    with mpmath.workdps(dps):
        local = [pants_rep_mp(p) for p in a.pants]
        frames = {}

        def frame(P, b):
            if (P, b) not in frames:
                g = local[P]
                frames[(P, b)] = boundary_frame(g[b], g[(b + 1) % 3])
            return frames[(P, b)]

        def glue_matrix(gl):
            (P, b), (Q, c) = gl.first, gl.second
            return mmul(mmul(minv(frame(P, b)), ROT), mmul(translation(gl.twist), frame(Q, c)))

        adj = [[] for _ in a.pants]
        for k, gl in enumerate(a.gluings):
            adj[gl.first[0]].append((k, 0))
            adj[gl.second[0]].append((k, 1))
        C = {}
        tree = set()
        one = (mpmath.mpf(1), mpmath.mpf(0), mpmath.mpf(0), mpmath.mpf(1))
        for root in range(len(a.pants)):
            if root in C:
                continue
            C[root] = one
            queue = deque([root])
            while queue:
                P = queue.popleft()
                for k, side in adj[P]:
                    gl = a.gluings[k]
                    Q = gl.second[0] if side == 0 else gl.first[0]
                    if Q in C:
                        continue
                    M = glue_matrix(gl)
                    C[Q] = mmul(C[P], M) if side == 0 else mmul(C[P], minv(M))
                    tree.add(k)
                    queue.append(Q)
        gens = {}
        boundary = {}
        for P in range(len(a.pants)):
            gens[f"g{P}.0"] = mconj(C[P], local[P][0])
            gens[f"g{P}.1"] = mconj(C[P], local[P][1])
            boundary.update(_pants_words(P))
        stable = {}
        relations = []
        for k, gl in enumerate(a.gluings):
            X, Y = boundary[gl.first], boundary[gl.second]
            if k in tree:
                stable[k] = None
                relations.append(X + Y)
            else:
                P, Q = gl.first[0], gl.second[0]
                name = f"s{k}"
                gens[name] = mmul(mmul(C[P], glue_matrix(gl)), minv(C[Q]))
                stable[k] = name
                relations.append(((name, 1),) + Y + ((name, -1),) + X)
        size = max(max_log10(c) for c in C.values())
    return gens, boundary, relations, stable, size


def assemble_rep(a: FNAssembly, dps: int | None = None) -> MatrixRep:
    """Glue the pants groups along a spanning tree (amalgamation) and add a
    stable letter for every remaining gluing (HNN extension).

    A gluing of boundary b of P to boundary c of Q with twist t uses
    F_{P,b}^-1 · R · diag(e^{t/2}, e^{-t/2}) · F_{Q,c}: the positive twist
    slides Q forward along the axis of boundary c."""
    a.validate()
    work = dps or 50
    for _ in range(8):
        gens, boundary, relations, stable, size = _assemble_at(a, work)
        rep = MatrixRep(a, gens, boundary, relations, stable, work)
        need = int(4 * size) + 40
        if dps is not None:
            break
        if need > work:
            work = need
            continue
        res = rep.relation_residue()
        if res < 1e-25:
            break
        work *= 2
    res = rep.relation_residue()
    if res > 1e-10:
        raise GeometryError(f"relation residue {res:.3e} too large")
    return rep


# ---------------------------------------------------------------------------
# spectra


def certified_cutoff(a: FNAssembly) -> float:
    """Below this cutoff every primitive closed geodesic is a pants curve:
    non-simple geodesics are longer than 4 arcsinh(1), and a simple one that
    is not a pants curve crosses some interior pants curve α and its whole
    collar, so is longer than 2 w(α)."""
    bound = 4.0 * ASINH1
    for gl in a.gluings:
        l = a.pants[gl.first[0]].lengths[gl.first[1]]
        bound = min(bound, 2.0 * collar_width(l))
    return bound


def enumerate_spectrum(rep: MatrixRep, cutoff: float, tol: float = 1e-9) -> Spectrum:
    """Primitive unoriented closed geodesic lengths <= cutoff."""
    if not cutoff > 0:
        raise GeometryError("cutoff must be positive")
    a = rep.assembly
    bound = certified_cutoff(a)
    if cutoff >= bound:
        raise CompletenessError(f"cutoff {cutoff} is not below the certified bound {bound:.6f}")
    ids = a.curve_ids()
    lengths = {}
    with mpmath.workdps(rep.dps):
        for pb, cid in sorted(ids.items()):
            if cid in lengths:
                continue
            lengths[cid] = float(geodesic_length(rep.evaluate(rep.boundary[pb])))
    vals = [v for v in lengths.values() if v <= cutoff]
    return Spectrum.from_values(vals, tol, cutoff=cutoff, meta={"certified_bound": bound})


# word enumeration oracle


def _cyclic_canonical(w):
    inv = tuple(l ^ 1 for l in reversed(w))
    n = len(w)
    return min(min(w[i:] + w[:i] for i in range(n)), min(inv[i:] + inv[:i] for i in range(n)))


def _is_proper_power(w):
    n = len(w)
    return any(n % d == 0 and w == w[d:] + w[:d] for d in range(1, n))


def short_cyclic_words(mats: np.ndarray, max_len: int, trace_bound: float):
    """Cyclically reduced words (letters 2i, 2i+1 = generator i and its
    inverse) of length <= max_len with |trace| <= trace_bound, as canonical
    primitive classes mapped to |trace|.  Non-hyperbolic traces raise."""
    k = mats.shape[0]
    letters = np.empty((2 * k, 2, 2))
    letters[0::2] = mats
    letters[1::2, 0, 0] = mats[:, 1, 1]
    letters[1::2, 1, 1] = mats[:, 0, 0]
    letters[1::2, 0, 1] = -mats[:, 0, 1]
    letters[1::2, 1, 0] = -mats[:, 1, 0]
    words = np.arange(2 * k)[:, None]
    prods = letters.copy()
    found = {}
    for length in range(1, max_len + 1):
        if length > 1:
            nw = np.repeat(words, 2 * k, axis=0)
            nl = np.tile(np.arange(2 * k), len(words))
            keep = nl != (nw[:, -1] ^ 1)
            prods = np.repeat(prods, 2 * k, axis=0)[keep] @ letters[nl[keep]]
            words = np.concatenate([nw[keep], nl[keep][:, None]], axis=1)
        cyc = words[:, -1] != (words[:, 0] ^ 1)
        tr = np.abs(prods[:, 0, 0] + prods[:, 1, 1])
        bad = cyc & (tr <= 2.0 + 1e-12)
        if bad.any():
            raise NonHyperbolicError(f"word {words[bad][0].tolist()} has |trace| {tr[bad][0]}")
        for idx in np.nonzero(cyc & (tr <= trace_bound))[0]:
            w = tuple(int(x) for x in words[idx])
            if _is_proper_power(w):
                continue
            found.setdefault(_cyclic_canonical(w), float(tr[idx]))
    return found


def _local_floats(rep, names_or_mats, frame_pair):
    with mpmath.workdps(rep.dps):
        F = boundary_frame(*frame_pair)
        return np.array([to_array(mconj(F, M)) for M in names_or_mats])


@dataclass
class OracleReport:
    spectrum: Spectrum
    extra_classes: int
    words_checked: int
    missing_curves: int


def spectrum_oracle(rep: MatrixRep, cutoff: float, tol: float = 1e-9, pants_len: int = 6, xpiece_len: int = 4) -> OracleReport:
    """Word enumeration in the local free groups of every pants and of every
    glued pair of pants, in floating point after local renormalization.
    Peripheral classes are identified with physical curves through the
    gluing table; anything else found below the cutoff is an extra class."""
    a = rep.assembly
    ids = a.curve_ids()
    bound = 2.0 * math.cosh(cutoff / 2.0) + 1e-9
    curve_len = {}
    extras = []
    checked = 0
    periph = {_cyclic_canonical((0,)): 0, _cyclic_canonical((2,)): 1, _cyclic_canonical((3, 1)): 2}
    # in a one-holed torus every basis commutator is the boundary, already seen as a pants curve
    torus_boundary = _cyclic_canonical((0, 2, 1, 3))
    with mpmath.workdps(rep.dps):
        G = {pb: rep.evaluate(w) for pb, w in rep.boundary.items()}
    for P in range(len(a.pants)):
        g = [G[(P, 0)], G[(P, 1)], G[(P, 2)]]
        mats = _local_floats(rep, g[:2], (g[0], g[1]))
        found = short_cyclic_words(mats, pants_len, bound)
        checked += 1
        for w, t in found.items():
            ell = 2.0 * math.acosh(t / 2.0)
            if w in periph:
                curve_len.setdefault(ids[(P, periph[w])], ell)
            else:
                extras.append(ell)
    for k, gl in enumerate(a.gluings):
        (P, b), (Q, c) = gl.first, gl.second
        x = G[(P, b)]
        s = rep.stable[k]
        with mpmath.workdps(rep.dps):
            if P == Q:
                basis = [x, rep.generators[s]]
            else:
                z = G[(Q, (c + 1) % 3)]
                if s is not None:
                    z = mconj(rep.generators[s], z)
                basis = [x, G[(P, (b + 1) % 3)], z]
        mats = _local_floats(rep, basis, (x, G[(P, (b + 1) % 3)]))
        found = short_cyclic_words(mats, xpiece_len, bound)
        checked += 1
        for w, t in found.items():
            used = {l >> 1 for l in w}
            crossing = (1 in used and w != torus_boundary) if P == Q else ({1, 2} <= used)
            if crossing:
                extras.append(2.0 * math.acosh(t / 2.0))
    missing = len(set(ids.values()) - set(curve_len))
    vals = [v for v in curve_len.values() if v <= cutoff] + [v for v in extras if v <= cutoff]
    spec = Spectrum.from_values(vals, tol, cutoff=cutoff, meta={"pants_word_length": pants_len, "xpiece_word_length": xpiece_len})
    return OracleReport(spec, len(extras), checked, missing)


# ---------------------------------------------------------------------------
# surfaces from gluing graphs


def assembly_from_graph(graph, schedule: LengthSchedule, twists: dict | None = None) -> FNAssembly:
    """Pants decomposition of the surface of a gluing graph.

    Vertex v contributes the template's pants; the edge of class (j,h,m)
    contributes two pants with boundary lengths (λ(port), μ(m), μ(m)) glued
    along both μ-curves.  ``twists`` maps a curve label to a twist; labels
    are shared by all copies of a curve, which keeps the twists equivariant.
    """
    if schedule.mode != "free":
        raise ScheduleError("strict dyadic lengths are too small for floating point geometry; use free mode")
    twists = twists or {}
    t = graph.template
    pants = []
    gluings = []
    labels = {}
    at = {}  # (vertex, ("port", p) | ("curve", c)) -> [(pants, b)]

    def length(kind, name):
        return schedule.lambda_of(name) if kind == "port" else schedule.pants_of(name)

    for v in range(graph.vertex_count):
        for P in t.pants:
            idx = len(pants)
            pants.append(PantsPiece(*(length(k, n) for k, n in P)))
            for b, (k, n) in enumerate(P):
                at.setdefault((v, (k, n)), []).append((idx, b))
                labels[(idx, b)] = (k, n)
    for v in range(graph.vertex_count):
        for c in t.curves:
            first, second = at[(v, ("curve", c))]
            lab = ("curve", c)
            gluings.append(Gluing(first, second, twists.get(lab, 0.0), lab))
    for e in graph.edges:
        mu = schedule.mu_of(e.cls[2])
        if mu is None:
            raise ScheduleError(f"no μ length for m={e.cls[2]}")
        halves = []
        for v, port in ((e.source, e.source_port), (e.target, e.target_port)):
            idx = len(pants)
            pants.append(PantsPiece(schedule.lambda_of(port), mu, mu))
            labels[(idx, 0)] = ("port", port)
            labels[(idx, 1)] = labels[(idx, 2)] = ("mu", e.cls[2])
            (vp,) = at[(v, ("port", port))]
            lab = ("port", port)
            gluings.append(Gluing(vp, (idx, 0), twists.get(lab, 0.0), lab))
            halves.append(idx)
        for b in (1, 2):
            lab = ("mu", e.cls, b)
            gluings.append(Gluing((halves[0], b), (halves[1], b), twists.get(lab, 0.0), lab))
    return FNAssembly(pants, gluings, labels)


def short_census(quotient, schedule: LengthSchedule, tol: float = 1e-9) -> Spectrum:
    """Lengths below 2 arcsinh(1) predicted by the schedule: every vertex
    pants curve and port curve once per vertex, both μ-curves of each edge."""
    t = quotient.template
    vals = []
    for _ in range(quotient.vertex_count):
        vals += [schedule.pants_of(c) for c in t.curves]
        vals += [schedule.lambda_of(p) for p in t.ports]
    for e in quotient.edges:
        mu = schedule.mu_of(e.cls[2])
        if mu is None:
            raise ScheduleError(f"no μ length for m={e.cls[2]}")
        vals += [mu, mu]
    vals = [v for v in vals if v < CENSUS_THRESHOLD]
    return Spectrum.from_values(vals, tol, cutoff=CENSUS_THRESHOLD)
