"""Infeasible-start primal-dual interior point method for small LMI problems.

    min c^T x  s.t.  A x = b,  F_k(x) = sum_i x_i F_i^(k) >= 0 (PSD),  G x >= 0

The search direction is HKM with a Mehrotra predictor-corrector; the Schur
complement in x is formed densely and solved by Cholesky.  Dual:

    max b^T y  s.t.  c - A^T y - sum_k F_k^*(W_k) - G^T z = 0,  W_k PSD,  z >= 0
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

log = logging.getLogger(__name__)

STEP_FRACTION = 0.9
# stop when the merit has not dropped by 10% in this many iterations
STALL_ITERS = 8


@dataclass
class IpmResult:
    status: str  # "optimal", "stalled", "max_iter", "diverged", "failed"
    x: np.ndarray
    y: np.ndarray
    primal_obj: float
    dual_obj: float
    iterations: int
    primal_infeas: float
    dual_infeas: float
    gap: float


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _lmi(F, x):
    return np.tensordot(x, F, axes=1)


def _adj(F, W):
    return F.reshape(F.shape[0], -1) @ W.ravel()


def _max_step_psd(S, dS) -> float:
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return 0.0
    Li = la.solve_triangular(L, np.eye(S.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dS @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(s, ds) -> float:
    neg = ds < 0
    return np.inf if not np.any(neg) else float(np.min(-s[neg] / ds[neg]))


def solve_lmi(c, A, b, F, G, eps: float = 1e-8, max_iter: int = 150, verbose: bool = False) -> IpmResult:
    """Solve the LMI problem above.  ``F`` is a list of (K, s, s) arrays, ``G`` a dense (r, K) array."""
    c = np.asarray(c, dtype=float)
    K = c.size
    A = np.asarray(A, dtype=float).reshape(-1, K)
    b = np.asarray(b, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, K)
    m, r = A.shape[0], G.shape[0]
    x = np.zeros(K)
    y = np.zeros(m)
    S = [np.eye(Fk.shape[1]) for Fk in F]
    W = [np.eye(Fk.shape[1]) for Fk in F]
    s = np.ones(r)
    z = np.ones(r)
    nu = sum(Fk.shape[1] for Fk in F) + r
    nb, nc = 1.0 + np.linalg.norm(b), 1.0 + np.linalg.norm(c)
    res = best = None
    since_best = 0
    for it in range(max_iter):
        R_S = [_lmi(Fk, x) - Sk for Fk, Sk in zip(F, S)]
        R_s = G @ x - s
        r_p = b - A @ x
        R_d = c - A.T @ y - G.T @ z
        for Fk, Wk in zip(F, W):
            R_d -= _adj(Fk, Wk)
        mu = (sum(np.sum(Sk * Wk) for Sk, Wk in zip(S, W)) + s @ z) / nu
        pobj, dobj = c @ x, b @ y
        pinf = max([np.linalg.norm(r_p) / nb, np.linalg.norm(R_s) / nb]
                   + [np.linalg.norm(R) / nb for R in R_S])
        dinf = np.linalg.norm(R_d) / nc
        gap = max(abs(pobj - dobj), nu * mu) / (1.0 + abs(pobj) + abs(dobj))
        res = IpmResult("max_iter", x, y, pobj, dobj, it, pinf, dinf, gap)
        if best is None or merit(res) < 0.9 * merit(best):
            best, since_best = res, 0
        else:
            since_best += 1
        if verbose:
            log.info("%3d pobj %.9e dobj %.9e pinf %.1e dinf %.1e gap %.1e", it, pobj, dobj, pinf, dinf, gap)
        if pinf < eps and dinf < eps and gap < eps:
            res.status = "optimal"
            return res
        if np.linalg.norm(x) > 1e12 or np.linalg.norm(y) > 1e12:
            res.status = "diverged"
            return res
        if since_best >= STALL_ITERS:
            return _stop(best, "stalled")

        Sinv = []
        Mmat = G.T @ ((z / s)[:, None] * G)
        for Fk, Sk, Wk in zip(F, S, W):
            try:
                Si = la.cho_solve(la.cho_factor(Sk), np.eye(Sk.shape[0]))
            except la.LinAlgError:
                return _stop(best, "failed")
            Sinv.append(Si)
            # M_ij = tr(F_i S^-1 F_j W) = tr((W F_i)(S^-1 F_j))
            P = np.einsum("ab,ibc->iac", Si, Fk)
            Q = np.einsum("ab,ibc->iac", Wk, Fk)
            Mmat += Q.reshape(K, -1) @ P.transpose(0, 2, 1).reshape(K, -1).T
        Mmat = _sym(Mmat)
        try:
            Mf = la.cho_factor(Mmat)
        except la.LinAlgError:
            Mmat[np.diag_indices(K)] += 1e-12 * max(1.0, np.max(np.abs(np.diag(Mmat))))
            try:
                Mf = la.cho_factor(Mmat)
            except la.LinAlgError:
                return _stop(best, "failed")
        if m:
            MiAt = la.cho_solve(Mf, A.T)
            try:
                Sf = la.cho_factor(_sym(A @ MiAt))
            except la.LinAlgError:
                return _stop(best, "failed")

        def direction(sigma, corr_psd, corr_lp):
            T = []
            for Si, Wk, C in zip(Sinv, W, corr_psd):
                Tk = sigma * mu * Si - Wk
                if C is not None:
                    Tk = Tk - _sym(Si @ C)
                T.append(Tk)
            t = (sigma * mu - s * z - (corr_lp if corr_lp is not None else 0.0)) / s
            h = R_d - G.T @ (t - (z / s) * R_s)
            for Fk, Tk, Si, Wk, R in zip(F, T, Sinv, W, R_S):
                h = h - _adj(Fk, Tk - _sym(Si @ R @ Wk))
            Mih = la.cho_solve(Mf, h)
            if m:
                dy = la.cho_solve(Sf, r_p + A @ Mih)
                dx = MiAt @ dy - Mih
            else:
                dy = np.zeros(0)
                dx = -Mih
            dS = [_lmi(Fk, dx) + R for Fk, R in zip(F, R_S)]
            dW = [_sym(Tk - Si @ dSk @ Wk) for Tk, Si, dSk, Wk in zip(T, Sinv, dS, W)]
            ds = G @ dx + R_s
            dz = t - (z / s) * ds
            return dx, dy, dS, dW, ds, dz

        def steps(dS, dW, ds, dz):
            ap = min([_max_step_lp(s, ds)] + [_max_step_psd(Sk, d) for Sk, d in zip(S, dS)])
            ad = min([_max_step_lp(z, dz)] + [_max_step_psd(Wk, d) for Wk, d in zip(W, dW)])
            return ap, ad

        none = [None] * len(F)
        dx, dy, dS, dW, ds, dz = direction(0.0, none, None)
        ap, ad = steps(dS, dW, ds, dz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (sum(np.sum((Sk + ap * a) * (Wk + ad * d)) for Sk, Wk, a, d in zip(S, W, dS, dW))
                  + (s + ap * ds) @ (z + ad * dz)) / nu
        # centre harder after short predictor steps
        expon = max(1.0, 3.0 * min(ap, ad) ** 2)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** expon)) if mu > 0 else 0.0
        corr = [a @ d for a, d in zip(dS, dW)]
        dx, dy, dS, dW, ds, dz = direction(sigma, corr, ds * dz)
        ap, ad = steps(dS, dW, ds, dz)
        frac = STEP_FRACTION + 0.04 * min(ap, ad, 1.0)
        ap, ad = min(1.0, frac * ap), min(1.0, frac * ad)
        if ap < 1e-12 and ad < 1e-12:
            return _stop(best, "failed")
        x = x + ap * dx
        S = [_sym(Sk + ap * d) for Sk, d in zip(S, dS)]
        s = s + ap * ds
        y = y + ad * dy
        W = [_sym(Wk + ad * d) for Wk, d in zip(W, dW)]
        z = z + ad * dz
    return _stop(best, "max_iter")


def merit(r: IpmResult) -> float:
    """Largest of the relative primal and dual infeasibilities and the relative gap."""
    return max(r.primal_infeas, r.dual_infeas, r.gap)


def _stop(best: IpmResult, status: str) -> IpmResult:
    best.status = status
    return best
