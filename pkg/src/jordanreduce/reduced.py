"""The reduced block-diagonal problem over partition coefficients, its solver
front end, evaluation and SDPA export.

With X = sum_i x_i B_i, the doubly nonnegative program becomes

    optimize new_c^T x  s.t.  new_A x = new_b,  sum_i x_i F_i^(k) PSD for every block k,  x >= 0

where F_i^(k) is the image of B_i in block k.  Nonnegativity of x is exactly
entrywise nonnegativity of X because the parts have disjoint 0/1 supports.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from ._ipm import merit, solve_lmi
from .blockdiag import BlockDiagonalization, _real_images
from .conic import ConicProblem
from .partition import Partition

log = logging.getLogger(__name__)

TAU_FEAS = 1e-8
SOLVER_CAP = 20000
ZERO_TOL = 1e-12
# block image entries below this (relative) are rounding noise
IMAGE_ZERO = 1e-12
# relative accuracy accepted when the interior point method stalls short of eps
ACCEPT_TOL = 1e-6


class SolverLimitExceeded(ValueError):
    pass


@dataclass
class ReducedProblem:
    n_vars: int
    new_c: np.ndarray
    new_A: sp.csr_matrix
    new_b: np.ndarray
    blocks: list[np.ndarray]  # each (n_vars, s, s)
    multiplicities: list[int] = field(default_factory=list)
    nonneg_vars: bool = True
    sense: str = "min"
    name: str = ""

    @property
    def block_sizes(self) -> list[int]:
        return [F.shape[1] for F in self.blocks]

    def lp_rows(self) -> np.ndarray:
        """Rows g with g^T x >= 0: x >= 0 followed by the 1x1 blocks."""
        rows = [np.eye(self.n_vars)] if self.nonneg_vars else []
        rows += [F[:, 0, 0][None, :] for F in self.blocks if F.shape[1] == 1]
        return np.vstack(rows) if rows else np.zeros((0, self.n_vars))

    def psd_blocks(self) -> list[np.ndarray]:
        return [F for F in self.blocks if F.shape[1] > 1]


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    status: str  # optimal, infeasible, numerical_limit
    min_block_eig: float
    feas_residual: float
    dual_objective: float = float("nan")
    iterations: int = 0
    message: str = ""

    def to_dict(self) -> dict:
        return {"status": self.status, "objective": self.objective, "dual_objective": self.dual_objective,
                "feas_residual": self.feas_residual, "min_block_eig": self.min_block_eig,
                "iterations": self.iterations, "message": self.message, "x": self.x.tolist()}


def assemble_reduced(problem: ConicProblem, P: Partition, blkd: BlockDiagonalization) -> ReducedProblem:
    if P.n != problem.n:
        raise ValueError(f"partition order {P.n} does not match problem order {problem.n}")
    if blkd.n_parts != P.n_parts:
        raise ValueError(f"decomposition has {blkd.n_parts} parts, partition has {P.n_parts}")
    PM = P.indicator()
    new_A = sp.csr_matrix(problem.A @ PM)
    new_c = np.asarray(PM.T @ problem.c).ravel()
    blocks = []
    for F in _real_images(blkd):
        F = F.copy()
        F[np.abs(F) < IMAGE_ZERO * max(1.0, float(np.max(np.abs(F), initial=0.0)))] = 0.0
        blocks.append(F)
    return ReducedProblem(P.n_parts, new_c, new_A, problem.b.copy(), blocks,
                          list(blkd.multiplicities), True, problem.sense, problem.name)


def evaluate(rp: ReducedProblem, x) -> tuple[float, float, float]:
    """(objective, ||new_A x - new_b||, smallest eigenvalue over all blocks)."""
    x = np.asarray(x, dtype=float)
    obj = float(rp.new_c @ x)
    res = float(np.linalg.norm(rp.new_A @ x - rp.new_b))
    eigs = [float(np.linalg.eigvalsh(np.tensordot(x, F, axes=1))[0]) for F in rp.blocks]
    return obj, res, min(eigs) if eigs else float("inf")


def _independent_rows(A: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    """Drop linearly dependent rows; return None if the system is inconsistent."""
    if A.shape[0] == 0:
        return A, b
    if not np.any(A):
        return (A[:0], b[:0]) if np.all(np.abs(b) <= tol * (1 + np.abs(b).max())) else None
    _, R, piv = la.qr(A.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * d[0]))
    keep = np.sort(piv[:rank])
    A2, b2 = A[keep], b[keep]
    sol, *_ = np.linalg.lstsq(A2, b2, rcond=None)
    if np.linalg.norm(A @ sol - b) > 1e-8 * (1 + np.linalg.norm(b)):
        return None
    return A2, b2


def _forced_zero(A: np.ndarray, b: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Variables that x >= 0 forces to zero through a row with one-signed
    coefficients and zero right-hand side."""
    active = active.copy()
    changed = True
    while changed:
        changed = False
        for row, rhs in zip(A, b):
            r = np.where(active, row, 0.0)
            big = np.abs(r) > ZERO_TOL * max(1.0, np.abs(row).max(initial=0.0))
            if not np.any(big) or abs(rhs) > ZERO_TOL * max(1.0, np.abs(row).max()):
                continue
            if np.all(r[big] > 0) or np.all(r[big] < 0):
                active &= ~big
                changed = True
    return active


@dataclass
class _Prepared:
    active: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    F: list
    G: np.ndarray
    c_scale: float
    b_scale: float


def _prepare(rp: ReducedProblem):
    A = rp.new_A.toarray()
    b = rp.new_b.astype(float)
    active = np.ones(rp.n_vars, dtype=bool)
    if rp.nonneg_vars:
        active = _forced_zero(A, b, active)
    A = A[:, active]
    ind = _independent_rows(A, b)
    if ind is None:
        return None
    A, b = ind
    c = rp.new_c[active].astype(float)
    sgn = -1.0 if rp.sense == "max" else 1.0
    c = sgn * c
    F = []
    for Fk in rp.psd_blocks():
        Fk = Fk[active]
        if np.max(np.abs(Fk), initial=0.0) > ZERO_TOL:
            F.append(Fk)
    G = rp.lp_rows()[:, active]
    G = G[np.max(np.abs(G), axis=1, initial=0.0) > ZERO_TOL]
    # scale rows of A, then b and c to unit max-norm
    rn = np.linalg.norm(A, axis=1)
    A, b = A / rn[:, None], b / rn
    bs = float(np.max(np.abs(b), initial=0.0)) or 1.0
    cs = float(np.max(np.abs(c), initial=0.0)) or 1.0
    return _Prepared(active, c / cs, A, b / bs, F, G, sgn * cs, bs)


def _phase_one(pr: _Prepared, eps: float):
    """min t s.t. A x = b, F(x) + t I PSD, G x + t >= 0, t >= -1 (through u = 1)."""
    K = pr.c.size
    c = np.zeros(K + 2)
    c[K] = 1.0
    m = pr.A.shape[0]
    A = np.zeros((m + 1, K + 2))
    A[:m, :K] = pr.A
    A[m, K + 1] = 1.0
    b = np.append(pr.b, 1.0)
    F = []
    for Fk in pr.F:
        s = Fk.shape[1]
        F.append(np.concatenate([Fk, np.eye(s)[None], np.zeros((1, s, s))]))
    r = pr.G.shape[0]
    G = np.zeros((r + 1, K + 2))
    G[:r, :K] = pr.G
    G[:r, K] = 1.0
    G[r, K] = G[r, K + 1] = 1.0
    return solve_lmi(c, A, b, F, G, eps=eps)


def solve(rp: ReducedProblem, eps: float = 1e-8, cap: int = SOLVER_CAP, max_iter: int = 150,
          accept: float = ACCEPT_TOL, verbose: bool = False) -> Solution:
    """Solve the reduced problem with the built-in interior point method.

    Variables forced to zero by a one-signed row with zero right-hand side are
    removed first (these problems usually have no strictly feasible point
    otherwise).  A run that stalls before ``eps`` but within ``accept`` still
    counts as optimal, with the reached accuracy in the message.  Otherwise a
    phase-one problem decides between "infeasible" and "numerical_limit".
    """
    total = sum(s * s for s in rp.block_sizes)
    if total > cap:
        raise SolverLimitExceeded(f"sum of squared block sizes {total} exceeds the solver cap {cap}")
    pr = _prepare(rp)
    nanv = float("nan")
    if pr is None:
        x = np.zeros(rp.n_vars)
        _, res, lam = evaluate(rp, x)
        return Solution(x, nanv, "infeasible", lam, res, nanv, 0, "linear constraints are inconsistent")
    K = pr.c.size
    if not np.any(pr.c):
        # pure feasibility: the phase-one point is the answer
        ph = _phase_one(pr, eps)
        if ph.status == "optimal" and ph.primal_obj > TAU_FEAS:
            return _finish(rp, pr, ph.x[:K], "infeasible", nanv, ph.iterations,
                           f"phase one optimum {ph.primal_obj:.3e} > 0")
        return _finish(rp, pr, ph.x[:K], "optimal" if ph.status == "optimal" else "numerical_limit",
                       0.0, ph.iterations, "" if ph.status == "optimal" else f"phase one stopped: {ph.status}",
                       eps=eps)
    out = solve_lmi(pr.c, pr.A, pr.b, pr.F, pr.G, eps=eps, max_iter=max_iter, verbose=verbose)
    dual = out.dual_obj * pr.c_scale * pr.b_scale
    if out.status == "optimal":
        return _finish(rp, pr, out.x, "optimal", dual, out.iterations, "", eps=eps)
    if merit(out) <= accept:
        return _finish(rp, pr, out.x, "optimal", dual, out.iterations,
                       f"{out.status} at relative accuracy {merit(out):.1e}", eps=eps)
    ph = _phase_one(pr, eps)
    if ph.status == "optimal" and ph.primal_obj > TAU_FEAS:
        return _finish(rp, pr, out.x, "infeasible", dual, out.iterations,
                       f"phase one optimum {ph.primal_obj:.3e} > 0")
    return _finish(rp, pr, out.x, "numerical_limit", dual, out.iterations,
                   f"interior point method stopped: {out.status}")


def _finish(rp: ReducedProblem, pr: _Prepared, xs, status, dual, iterations, message, eps=None) -> Solution:
    """Undo scaling, evaluate, and demote "optimal" if the point fails the checks."""
    x = np.zeros(rp.n_vars)
    x[pr.active] = xs * pr.b_scale
    obj, res, lam = evaluate(rp, x)
    if status == "optimal":
        scale = 1.0 + np.linalg.norm(rp.new_b)
        xscale = 1.0 + float(np.max(np.abs(x), initial=0.0))
        tol = max(10 * eps, 1e-7)
        if not (res <= tol * scale and lam >= -tol * xscale and x.min(initial=0.0) >= -tol * xscale):
            status, message = "numerical_limit", "solver converged but the point fails the feasibility checks"
    return Solution(x, obj, status, lam, res, dual, iterations, message)


def lift(P: Partition, x) -> np.ndarray:
    """X = sum_i x_i B_i."""
    return P.element(x)


# --- SDPA sparse export ------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(rp: ReducedProblem, path, sidecar: bool = True) -> dict:
    """Write the reduced problem in SDPA sparse format.

    The equalities are eliminated with x = x_p + N w (x_p a particular solution,
    N an orthonormal null-space basis of new_A), giving

        minimize (N^T c')^T w  s.t.  sum_j w_j (N F)_j - F_0 PSD,  F_0 = -sum_i (x_p)_i F_i

    with c' = c (or -c for maximization).  PSD blocks come first, then one
    diagonal block for x >= 0 and the 1x1 blocks.  The original objective is
    sign * (SDPA primal value + offset); both numbers are recorded in comment
    lines and, with ``sidecar``, in a JSON file next to the output holding x_p
    and N as well.
    """
    A = rp.new_A.toarray()
    xp, *_ = np.linalg.lstsq(A, rp.new_b, rcond=None)
    if np.linalg.norm(A @ xp - rp.new_b) > 1e-8 * (1 + np.linalg.norm(rp.new_b)):
        raise ValueError("linear constraints are inconsistent; nothing to export")
    N = la.null_space(A) if A.shape[0] else np.eye(rp.n_vars)
    sgn = -1.0 if rp.sense == "max" else 1.0
    cprime = sgn * rp.new_c
    obj = N.T @ cprime
    offset = float(cprime @ xp)
    psd = rp.psd_blocks()
    G = rp.lp_rows()
    mats = []  # list of (block sizes, per-block coefficient arrays)
    sizes = [F.shape[1] for F in psd] + ([-G.shape[0]] if G.shape[0] else [])

    def block_mats(coef):
        out = [np.tensordot(coef, F, axes=1) for F in psd]
        if G.shape[0]:
            out.append(np.diag(G @ coef))
        return out

    mats.append([-M for M in block_mats(xp)])  # F_0
    for j in range(N.shape[1]):
        mats.append(block_mats(N[:, j]))
    lines = [
        f"* reduced problem {rp.name or ''}".rstrip(),
        "* x = x_p + N w; original objective = sign * (primal objective + offset)",
        f"* sign {int(sgn)} offset {_fmt(offset)}",
        f"{N.shape[1]}",
        f"{len(sizes)}",
        " ".join(str(s) for s in sizes),
        " ".join(_fmt(v) for v in obj),
    ]
    for matno, blocks in enumerate(mats):
        for blkno, M in enumerate(blocks, start=1):
            iu, ju = np.triu_indices(M.shape[0])
            vals = M[iu, ju]
            for i, j, v in zip(iu, ju, vals):
                if abs(v) > 1e-14 and (sizes[blkno - 1] > 0 or i == j):
                    lines.append(f"{matno} {blkno} {i + 1} {j + 1} {_fmt(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {"sign": sgn, "offset": offset, "x_p": xp.tolist(), "N": N.tolist(), "block_sizes": sizes}
    if sidecar:
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh)
    return meta
