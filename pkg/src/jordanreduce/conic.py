"""Conic problem data, the row-major vectorization, and projections onto the
constraint nullspace L and its complement (the row span of A).

Matrices of order n are vectorized row-major over the full n x n grid, so
entry (i, j) (0-based) lives at position i * n + j.  Symmetric matrices are
plain numpy arrays or scipy sparse matrices; nothing here needs a wrapper type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

TAU_SYM = 1e-12
TAU_ORTH = 1e-9
TAU_FEAS = 1e-8
RANK_TOL = 1e-10
# singular values below this (relative) are not resolvable through the Gram matrix
GRAM_FLOOR = 1e-7


class InvalidProblem(ValueError):
    pass


class InfeasibleAffineSystem(ValueError):
    """A x = b has no solution."""


def vec(M) -> np.ndarray:
    """Row-major vectorization of a dense or sparse square matrix."""
    if sp.issparse(M):
        M = M.toarray()
    return np.asarray(M, dtype=float).reshape(-1)


def mat(v, n: int) -> np.ndarray:
    v = v.toarray().ravel() if sp.issparse(v) else np.asarray(v, dtype=float)
    return v.reshape(n, n)


def transpose_perm(n: int) -> np.ndarray:
    """Index permutation taking vec(X) to vec(X.T)."""
    return np.arange(n * n).reshape(n, n).T.ravel()


def sym_from_entries(n: int, entries) -> sp.csr_matrix:
    """Build a symmetric sparse matrix from (i, j, value) triples, 1-based, i <= j."""
    rows, cols, vals = [], [], []
    for i, j, v in entries:
        i, j, v = int(i), int(j), float(v)
        if not (1 <= i <= j <= n):
            raise InvalidProblem(f"entry ({i}, {j}) outside upper triangle of order {n}")
        if not np.isfinite(v):
            raise InvalidProblem(f"non-finite value at ({i}, {j})")
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v)
    M = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    M.sum_duplicates()
    return M


def sym_entries(M, tol: float = 0.0) -> list[tuple[int, int, float]]:
    """Upper-triangular (i, j, value) triples, 1-based, dropping |value| <= tol."""
    M = sp.coo_matrix(sp.triu(sp.csr_matrix(M)))
    out = [(int(i) + 1, int(j) + 1, float(v))
           for i, j, v in zip(M.row, M.col, M.data) if abs(v) > tol]
    out.sort()
    return out


@dataclass(frozen=True)
class ConicProblem:
    """optimize <C, X> s.t. <A_k, X> = b_k, X doubly nonnegative.

    ``c`` is a dense vector of length n**2, ``A`` a sparse (m, n**2) matrix.
    ``sense`` is "min" or "max".
    """

    n: int
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    sense: str = "min"
    name: str = ""

    def __post_init__(self):
        n = self.n
        c = np.asarray(self.c.toarray() if sp.issparse(self.c) else self.c, dtype=float).ravel()
        A = sp.csr_matrix(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if n < 1:
            raise InvalidProblem("matrix order must be positive")
        if c.shape != (n * n,):
            raise InvalidProblem(f"objective has length {c.size}, expected {n * n}")
        if A.shape[1] != n * n:
            raise InvalidProblem(f"constraint rows have length {A.shape[1]}, expected {n * n}")
        if A.shape[0] < 1 or A.shape[0] != b.size:
            raise InvalidProblem("need m >= 1 constraint rows matching len(b)")
        if self.sense not in ("min", "max"):
            raise InvalidProblem(f"unknown sense {self.sense!r}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A.data)) and np.all(np.isfinite(b))):
            raise InvalidProblem("non-finite problem data")
        perm = transpose_perm(n)
        scale = max(1.0, abs(A).max()) if A.nnz else 1.0
        asym = abs(A - A[:, perm])
        if asym.nnz and asym.max() > TAU_SYM * scale:
            bad = int(np.flatnonzero(np.asarray(asym.max(axis=1).todense()).ravel() > TAU_SYM * scale)[0])
            raise InvalidProblem(f"constraint row {bad} is not symmetric")
        # only the symmetric part of C is seen by symmetric X
        c = 0.5 * (c + c[perm])
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.n * (self.n + 1) // 2

    def C(self) -> np.ndarray:
        return self.c.reshape(self.n, self.n)

    def constraint(self, k: int) -> np.ndarray:
        return self.A[k].toarray().reshape(self.n, self.n)


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal basis of the row span of A, kept in factored form.

    The basis elements are the rows of ``T.T @ A``; storing the small (m, r)
    coefficient matrix T instead of r dense vectors of length n**2 keeps large
    instances cheap.  ``elements()`` materializes them.
    """

    n: int
    A: sp.csr_matrix
    T: np.ndarray

    @property
    def rank(self) -> int:
        return self.T.shape[1]

    def elements(self) -> np.ndarray:
        """(r, n, n) array of the orthonormal basis matrices."""
        U = np.asarray((self.A.T @ self.T).T)
        return U.reshape(self.rank, self.n, self.n)

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        """Inner products of vec(X) (or a stack of them as columns) with the basis."""
        return self.T.T @ (self.A @ x)

    def combine(self, coef: np.ndarray) -> np.ndarray:
        return self.A.T @ (self.T @ coef)


def orthonormalize_constraints(problem: ConicProblem, tol: float = RANK_TOL) -> OrthoBasis:
    """Orthonormal basis of span{A_1, ..., A_m} with numerical rank cut.

    The rank cut keeps singular values of A above ``tol`` times the largest
    row norm, but never below GRAM_FLOOR: the basis is computed from the
    eigendecomposition of A A^T, which cannot resolve smaller ones.
    """
    A = problem.A
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    top = norms.max() if norms.size else 0.0
    if top == 0.0:
        return OrthoBasis(problem.n, A, np.zeros((A.shape[0], 0)))
    G = (A @ A.T).toarray()
    w, V = np.linalg.eigh(G)
    keep = np.sqrt(np.clip(w, 0.0, None)) > max(tol, GRAM_FLOOR) * top
    T = V[:, keep] / np.sqrt(w[keep])
    # one refinement pass: re-orthonormalize against the computed Gram matrix
    H = T.T @ G @ T
    w2, V2 = np.linalg.eigh(H)
    if w2.size and w2.min() <= 0.5:
        raise FloatingPointError("constraint Gram matrix too ill-conditioned to orthonormalize")
    T = T @ (V2 / np.sqrt(w2))
    return OrthoBasis(problem.n, A, T)


def _as_vec(X, n: int) -> tuple[np.ndarray, bool]:
    if sp.issparse(X):
        X = X.toarray()
    X = np.asarray(X, dtype=float)
    if X.shape == (n, n):
        return X.reshape(-1), True
    if X.shape == (n * n,):
        return X, False
    raise ValueError(f"shape {X.shape} does not match order {n}")


def project_Lperp(X, basis: OrthoBasis) -> np.ndarray:
    """Orthogonal projection onto the row span of A.  Accepts matrix or vec form."""
    x, as_matrix = _as_vec(X, basis.n)
    y = basis.combine(basis.coefficients(x)) if basis.rank else np.zeros_like(x)
    return y.reshape(basis.n, basis.n) if as_matrix else y


def project_L(X, basis: OrthoBasis) -> np.ndarray:
    x, as_matrix = _as_vec(X, basis.n)
    y = x - project_Lperp(x, basis)
    return y.reshape(basis.n, basis.n) if as_matrix else y


def min_norm_feasible(problem: ConicProblem, basis: OrthoBasis | None = None,
                      tol: float = TAU_FEAS) -> np.ndarray:
    """Minimum-norm solution of A vec(X) = b, returned as an n x n matrix.

    It is the projection onto the row span of any particular solution, so it
    does not depend on which feasible point one starts from.
    """
    if basis is None:
        basis = orthonormalize_constraints(problem)
    n = problem.n
    if basis.rank == 0:
        if np.any(np.abs(problem.b) > tol):
            raise InfeasibleAffineSystem("all constraint rows vanish but b is nonzero")
        return np.zeros((n, n))
    # A = W R with W = A T orthonormal-in-span; solve through the Gram factor
    AT = np.asarray((problem.A @ (problem.A.T @ basis.T)))  # A A^T T, shape (m, r)
    coef, *_ = np.linalg.lstsq(AT, problem.b, rcond=None)
    x = basis.combine(coef)
    resid = np.linalg.norm(problem.A @ x - problem.b)
    if resid > tol * (1.0 + np.linalg.norm(problem.b)):
        raise InfeasibleAffineSystem(f"A x = b is inconsistent (residual {resid:.3e})")
    return x.reshape(n, n)
