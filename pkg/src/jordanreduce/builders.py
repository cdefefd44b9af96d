"""Problem families: the theta' stable-set bound, the QAP relaxation, polarity
graphs ER(q), and small brute-force oracles."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import ConicProblem


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = np.asarray(self.adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("adjacency must be 0/1")
        if np.any(np.diag(A) != 0):
            raise ValueError("graph must not have loops")
        A = A.astype(np.int64)
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    @classmethod
    def from_edges(cls, n: int, edges, name: str = "") -> "Graph":
        A = np.zeros((n, n), dtype=np.int64)
        for i, j in edges:
            if i == j:
                raise ValueError(f"loop at vertex {i}")
            A[i, j] = A[j, i] = 1
        return cls(A, name)


def complement(g: Graph) -> Graph:
    n = g.n_vertices
    return Graph(1 - np.eye(n, dtype=np.int64) - g.adjacency, f"co-{g.name}" if g.name else "")


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)], f"C{n}")


def clique_join_graph(n: int, m: int) -> Graph:
    """Vertices i, j adjacent iff i >= m or j >= m (0-based): an independent set
    of size m joined to a clique on the rest."""
    if not 0 < m < n:
        raise ValueError("need 0 < m < n")
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n) if j >= m],
                            f"join{n}_{m}")


@dataclass(frozen=True)
class QapInstance:
    A: np.ndarray
    B: np.ndarray
    name: str = ""

    def __post_init__(self):
        A, B = np.asarray(self.A), np.asarray(self.B)
        if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A and B must be square of the same order")
        if not (np.array_equal(A, A.T) and np.array_equal(B, B.T)):
            raise ValueError("this relaxation needs symmetric A and B")

    @property
    def n(self) -> int:
        return self.A.shape[0]


def build_theta_prime(g: Graph) -> ConicProblem:
    """max <J, X> s.t. trace X = 1, <Adj, X> = 0, X doubly nonnegative."""
    n = g.n_vertices
    rows = [sp.csr_matrix(np.eye(n).reshape(1, -1))]
    b = [1.0]
    if g.n_edges:
        rows.append(sp.csr_matrix(g.adjacency.reshape(1, -1).astype(float)))
        b.append(0.0)
    return ConicProblem(n=n, c=np.ones(n * n), A=sp.vstack(rows).tocsr(), b=np.array(b),
                        sense="max", name=f"theta'({g.name})" if g.name else "theta'")


def build_qap_relaxation(inst: QapInstance) -> ConicProblem:
    """min <B (x) A, Y> over the doubly nonnegative Y of order n**2 with the
    assignment, gangster and <J, Y> = n**2 constraints."""
    n = inst.n
    if n < 2:
        raise ValueError("QAP relaxation needs n >= 2")
    I, J = sp.identity(n, format="csr"), sp.csr_matrix(np.ones((n, n)))
    rows, b = [], []

    def add(M, rhs):
        rows.append(sp.csr_matrix(M).reshape(1, -1))
        b.append(rhs)

    for j in range(n):
        E = sp.csr_matrix(([1.0], ([j], [j])), shape=(n, n))
        add(sp.kron(I, E), 1.0)
    for j in range(n):
        E = sp.csr_matrix(([1.0], ([j], [j])), shape=(n, n))
        add(sp.kron(E, I), 1.0)
    add(sp.kron(I, J - I) + sp.kron(J - I, I), 0.0)
    add(np.ones((n * n, n * n)), float(n * n))
    C = np.kron(np.asarray(inst.B, dtype=float), np.asarray(inst.A, dtype=float))
    return ConicProblem(n=n * n, c=C.ravel(), A=sp.vstack(rows).tocsr(), b=np.array(b),
                        sense="min", name=inst.name)


def qap_feasible_point(n: int) -> np.ndarray:
    """vec(I_n) vec(I_n)^T."""
    v = np.eye(n).ravel()
    return np.outer(v, v)


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    return all(q % d for d in range(2, math.isqrt(q) + 1))


def projective_points(q: int) -> np.ndarray:
    """Canonical representatives of the points of PG(2, q)."""
    pts = [(0, 0, 1)] + [(0, 1, b) for b in range(q)] + [(1, a, b) for a in range(q) for b in range(q)]
    return np.array(pts, dtype=np.int64)


def er_graph(q: int) -> Graph:
    """Polarity graph on PG(2, q): distinct points adjacent when orthogonal mod q."""
    if q % 2 == 0 or not is_prime(q):
        raise ValueError(f"q = {q} is not an odd prime")
    X = projective_points(q)
    A = (X @ X.T) % q == 0
    np.fill_diagonal(A, False)
    return Graph(A.astype(np.int64), f"ER({q})")


def ev_bound(q: float) -> float:
    """Closed-form eigenvalue upper bound on the stability number of ER(q)."""
    if q < 3:
        raise ValueError("q must be at least 3")
    r = math.sqrt(q)
    ratio = (q + r + 1) / (q * q + q + 1)
    return (r + math.sqrt(q + 4 * (q + 1) * ratio)) / (2 * ratio)


def qap_objective(A, B, perm) -> float:
    """sum_ij a_ij b_{perm(i) perm(j)}."""
    p = np.asarray(perm)
    return float(np.sum(np.asarray(A) * np.asarray(B)[np.ix_(p, p)]))


def qap_brute_force(inst: QapInstance, max_n: int = 9):
    """Exact QAP optimum by enumerating all permutations."""
    n = inst.n
    if n > max_n:
        raise ValueError(f"n = {n} too large for enumeration (limit {max_n})")
    A, B = np.asarray(inst.A), np.asarray(inst.B)
    best = None
    perms = itertools.permutations(range(n))
    while True:
        chunk = np.array(list(itertools.islice(perms, 40320)), dtype=np.int64)
        if chunk.size == 0:
            break
        Bp = B[chunk[:, :, None], chunk[:, None, :]]
        vals = np.einsum("ij,kij->k", A, Bp)
        v = vals.min()
        best = v if best is None else min(best, v)
    return best.item()
