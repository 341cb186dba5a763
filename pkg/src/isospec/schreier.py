"""Schreier coset graphs and exact characteristic polynomials.

Polynomials are lists of Python ints, lowest degree first.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .groups import GroupError, Subgroup


def poly_trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def poly_add(p, q):
    n = max(len(p), len(q))
    return poly_trim([(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)])


def poly_sub(p, q):
    return poly_add(p, [-c for c in q])


def poly_mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return poly_trim(out)


def poly_exact_div(p, q):
    """p / q over Z; raises if the division is not exact."""
    p, q = poly_trim(p), poly_trim(q)
    if q == [0]:
        raise ZeroDivisionError("division by the zero polynomial")
    if p == [0]:
        return [0]
    rem = list(p)
    out = [0] * max(1, len(p) - len(q) + 1)
    lead = q[-1]
    for k in range(len(p) - len(q), -1, -1):
        c = rem[k + len(q) - 1]
        if c % lead:
            raise ArithmeticError("inexact polynomial division")
        c //= lead
        out[k] = c
        if c:
            for j, b in enumerate(q):
                rem[k + j] -= c * b
    if any(rem):
        raise ArithmeticError("inexact polynomial division")
    return poly_trim(out)


def charpoly(A) -> list[int]:
    """det(xI - A) by fraction-free (Bareiss) elimination over Z[x].

    The leading principal minors of xI - A are monic, so no pivoting is
    needed and every division is exact."""
    A = [[int(v) for v in row] for row in np.asarray(A)]
    n = len(A)
    if n == 0:
        return [1]
    M = [[([-A[i][j], 1] if i == j else poly_trim([-A[i][j]])) for j in range(n)] for i in range(n)]
    prev = [1]
    for k in range(n - 1):
        pivot = M[k][k]
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                num = poly_sub(poly_mul(pivot, M[i][j]), poly_mul(M[i][k], M[k][j]))
                M[i][j] = poly_exact_div(num, prev)
        prev = pivot
    return M[n - 1][n - 1]


@dataclass
class SchreierGraph:
    subgroup: Subgroup
    generators: tuple
    adjacency: np.ndarray  # adjacency[i, j] = #{t : Λg_i t = Λg_j}
    charpoly: list

    @property
    def vertex_count(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self):
        return self.adjacency.sum(axis=1)


def schreier_graph(Lambda: Subgroup, T: Sequence[int]) -> SchreierGraph:
    G = Lambda.parent
    T = tuple(int(t) for t in T)
    counts = Counter(T)
    if any(counts[t] != counts[G.inv(t)] for t in counts):
        raise GroupError("generating multiset is not closed under inverses")
    cs = Lambda.cosets
    n = len(cs)
    A = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for t in T:
            A[i, cs.act(i, t)] += 1
    return SchreierGraph(Lambda, T, A, charpoly(A))
