"""Partition subspaces of symmetric matrices and the randomized Jordan reduction.

A partition of [n] x [n] is stored as an n x n integer label matrix with labels
0 .. n_parts - 1 (JSON files use 1-based labels).  Its span is the set of
matrices that are constant on every part; the characteristic 0/1 matrices of
the parts form a basis with disjoint supports summing to J.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._closure import jordan_closure_mismatch
from .conic import ConicProblem, OrthoBasis, min_norm_feasible, orthonormalize_constraints, project_L

log = logging.getLogger(__name__)

DIGITS = 8
CERT_TOL = 1e-7


class PartitionError(ValueError):
    pass


def canonical_labels(values: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel so parts are numbered by first occurrence in row-major order."""
    flat = np.asarray(values).ravel()
    uniq, first, inv = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inv].reshape(np.shape(values)).astype(np.int64), int(uniq.size)


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.labels)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise PartitionError("labels must be a square matrix")
        if not np.array_equal(L, L.T):
            raise PartitionError("partition of a symmetric matrix space must have symmetric labels")
        L, _ = canonical_labels(L)
        L.setflags(write=False)
        object.__setattr__(self, "labels", L)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def n_parts(self) -> int:
        return int(self.labels.max()) + 1

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n_parts)

    def indicator(self) -> sp.csr_matrix:
        """(n**2, n_parts) one-hot matrix; column i is vec of part i."""
        N2 = self.n * self.n
        return sp.csr_matrix((np.ones(N2), (np.arange(N2), self.labels.ravel())),
                             shape=(N2, self.n_parts))

    def basis_matrix(self, i: int) -> np.ndarray:
        return (self.labels == i).astype(float)

    def element(self, coef) -> np.ndarray:
        """The matrix sum_i coef[i] * B_i."""
        return np.asarray(coef, dtype=float)[self.labels]

    def part_means(self, M) -> np.ndarray:
        """Average of M over each part."""
        w = np.asarray(M, dtype=float).ravel()
        return np.bincount(self.labels.ravel(), weights=w, minlength=self.n_parts) / self.sizes()

    def deviation(self, M) -> float:
        """Largest distance of an entry of M from the mean of its part."""
        M = np.asarray(M, dtype=float).reshape(self.n, self.n)
        return float(np.max(np.abs(M - self.part_means(M)[self.labels]))) if M.size else 0.0

    def contains(self, M, tol: float = 1e-9) -> bool:
        M = np.asarray(M, dtype=float)
        return self.deviation(M) <= tol * max(1.0, float(np.max(np.abs(M))))

    def same_as(self, other: "Partition") -> bool:
        """Equality up to renaming of labels (labels are canonical, so compare directly)."""
        return self.labels.shape == other.labels.shape and np.array_equal(self.labels, other.labels)

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls(np.zeros((n, n), dtype=np.int64))

    @classmethod
    def discrete(cls, n: int) -> "Partition":
        i, j = np.indices((n, n))
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        return cls(lo * n + hi)


def part(M, digits: int = DIGITS) -> Partition:
    """Partition by the distinct entries of M, rounded to ``digits`` significant
    digits relative to the largest absolute entry."""
    M = np.asarray(M, dtype=float)
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    if scale == 0.0:
        return Partition.trivial(M.shape[0])
    q = np.round(M / scale * 10.0 ** digits)
    return Partition(canonical_labels(q)[0])


def meet(P1: Partition, P2: Partition) -> Partition:
    """Coarsest common refinement."""
    if P1.n != P2.n:
        raise PartitionError(f"order mismatch: {P1.n} vs {P2.n}")
    code = P1.labels * P2.n_parts + P2.labels
    return Partition(canonical_labels(code)[0])


def refine(P: Partition, M, digits: int = DIGITS, scale: float | None = None) -> Partition:
    """P meet part(M), splitting each part where sorted values jump by more than
    10**-digits times ``scale`` (default max|M|).

    Values are only compared within a part of P, and clustering by gaps avoids
    splitting equal values that straddle a rounding boundary.  Pass the scale of
    the data M was computed from when M may be numerically zero.
    """
    M = np.asarray(M, dtype=float)
    if not np.array_equal(M, M.T):
        asym = float(np.max(np.abs(M - M.T)))
        if asym > 1e-9 * max(1.0, float(np.max(np.abs(M)))):
            raise PartitionError(f"refining matrix is not symmetric (deviation {asym:.2e})")
        M = 0.5 * (M + M.T)
    top = float(np.max(np.abs(M))) if M.size else 0.0
    scale = top if scale is None else max(scale, top)
    if scale == 0.0:
        return P
    # labels are symmetric, so the upper triangle carries everything
    n = P.n
    iu, ju = np.triu_indices(n)
    lab = P.labels[iu, ju]
    v = M[iu, ju] / scale
    order = np.lexsort((v, lab))
    ls, vs = lab[order], v[order]
    brk = np.empty(ls.size, dtype=bool)
    brk[0] = True
    brk[1:] = (ls[1:] != ls[:-1]) | (np.diff(vs) > 10.0 ** (-digits))
    new = np.empty_like(lab)
    new[order] = np.cumsum(brk) - 1
    if int(new.max()) + 1 == P.n_parts:
        return P
    full = np.empty((n, n), dtype=np.int64)
    full[iu, ju] = new
    full[ju, iu] = new
    return Partition(full)


def random_element(P: Partition, rng: np.random.Generator) -> np.ndarray:
    """sum_i t_i B_i with distinct coefficients t_i in {1, ..., 2**20} / 2**10."""
    t = (rng.choice(1 << 20, size=P.n_parts, replace=False) + 1) / 1024.0
    return P.element(t)


@dataclass(frozen=True)
class CertificateReport:
    contains_CL: bool
    contains_X0: bool
    L_invariant: bool
    square_closed: bool
    contains_identity: bool
    contains_allones: bool
    max_violation: float

    @property
    def admissible(self) -> bool:
        return self.contains_CL and self.contains_X0 and self.L_invariant and self.square_closed

    @property
    def jordan_configuration(self) -> bool:
        return self.square_closed and self.contains_identity

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["admissible"] = self.admissible
        return d


def _problem_vectors(problem: ConicProblem, basis: OrthoBasis):
    CL = project_L(problem.c, basis).reshape(problem.n, problem.n)
    X0 = min_norm_feasible(problem, basis)
    return CL, X0


def l_invariance_violation(P: Partition, basis: OrthoBasis) -> float:
    """Upper bound on max_i of the deviation of P_L(B_i) from being constant on parts.

    P_Lperp(B_i) = A^T u_i; with an orthonormal basis q of span{u_i} the
    deviation of A^T u_i is bounded by sum_q |<q, u_i>| * dev(A^T q).
    """
    if basis.rank == 0:
        return 0.0
    PM = P.indicator()
    U = basis.T @ (basis.T.T @ np.asarray((basis.A @ PM).todense()))  # (m, K)
    Qu, s, _ = np.linalg.svd(U, full_matrices=False)
    keep = s > 1e-12 * max(1.0, s.max(initial=0.0))
    Qu = Qu[:, keep]
    if Qu.shape[1] == 0:
        return 0.0
    devs = np.array([P.deviation(basis.A.T @ Qu[:, q]) for q in range(Qu.shape[1])])
    coeff = np.abs(Qu.T @ U)  # (r', K)
    return float(np.max(devs @ coeff))


def certify_admissible(P: Partition, problem: ConicProblem, tol: float = CERT_TOL,
                       basis: OrthoBasis | None = None) -> CertificateReport:
    """Deterministic check of the admissibility conditions for the span of P.

    (a) C_L and X_{0,Lperp} constant on parts, (b) P_L(B_i) constant on parts for
    every part, (c) B_i B_j + B_j B_i constant on parts for every pair, the last
    one in exact integer arithmetic.  Deviations in (a) and (b) are relative to
    the size of the data.
    """
    if P.n != problem.n:
        raise PartitionError(f"partition order {P.n} does not match problem order {problem.n}")
    if basis is None:
        basis = orthonormalize_constraints(problem)
    CL, X0 = _problem_vectors(problem, basis)
    dev_c = P.deviation(CL) / max(1.0, float(np.max(np.abs(CL))))
    dev_x = P.deviation(X0) / max(1.0, float(np.max(np.abs(X0))))
    dev_l = l_invariance_violation(P, basis)
    closure = jordan_closure_mismatch(P.labels, P.n_parts)
    diag = np.zeros(P.n_parts, dtype=bool)
    diag[np.unique(np.diag(P.labels))] = True
    off = np.zeros(P.n_parts, dtype=bool)
    off[np.unique(P.labels[~np.eye(P.n, dtype=bool)])] = True
    return CertificateReport(
        contains_CL=dev_c <= tol,
        contains_X0=dev_x <= tol,
        L_invariant=dev_l <= tol,
        square_closed=closure == 0,
        contains_identity=not np.any(diag & off),
        contains_allones=True,  # the part matrices always sum to J
        max_violation=float(max(dev_c, dev_x, dev_l, closure)),
    )


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def admissible_subspace(problem: ConicProblem, digits: int = DIGITS, rng=None, repeats: int = 2,
                        basis: OrthoBasis | None = None, max_rounds: int = 10,
                        certify: bool = True) -> Partition:
    """Coarsest admissible partition subspace, by randomized refinement.

    Starts from part(C_L) meet part(X_{0,Lperp}) and repeats
    P <- P meet part(P_L(X)), P <- P meet part(X^2) for random X in span(P),
    stopping after ``repeats`` consecutive passes refine nothing.  The result is
    then certified; on failure the loop resumes with fresh randomness.
    """
    rng = _rng(rng)
    if basis is None:
        basis = orthonormalize_constraints(problem)
    n = problem.n
    CL, X0 = _problem_vectors(problem, basis)
    P = Partition.trivial(n)
    for M, ref in ((CL, problem.c), (X0, X0)):
        P = refine(P, M, digits, scale=float(np.max(np.abs(ref), initial=0.0)))
    log.debug("initial partition: %d parts", P.n_parts)
    for rnd in range(max_rounds):
        clean = 0
        it = 0
        while clean < repeats:
            before = P.n_parts
            X = random_element(P, rng)
            X /= np.max(np.abs(X))
            P = refine(P, project_L(X, basis), digits, scale=1.0)
            P = refine(P, X @ X, digits)
            it += 1
            clean = clean + 1 if P.n_parts == before else 0
            log.debug("round %d iteration %d: %d parts", rnd, it, P.n_parts)
        if not certify:
            return P
        report = certify_admissible(P, problem, basis=basis)
        if report.admissible:
            return P
        log.info("certificate failed (max violation %.3g); resuming", report.max_violation)
    raise PartitionError(f"no certified partition after {max_rounds} rounds")
