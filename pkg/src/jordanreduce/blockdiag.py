"""Numerical block-diagonalization of the matrix algebra spanned by a partition.

The part matrices B_i of a square-closed partition containing I span a Jordan
algebra; we decompose the associative *-algebra they generate.  A generic
symmetric element of that algebra has eigenspaces which each meet every copy of
an irreducible block in a subspace of the same dimension.  Linking eigenspaces
through a second generic element groups them into simple components, and
transporting an orthonormal frame along a spanning tree splits each component
into identical copies.

Components whose compressions are complex numbers are kept as real blocks of
twice the complex size (the default), or returned as complex blocks on request.
Quaternionic components are not supported.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from ._closure import jordan_closure_mismatch
from .partition import Partition

log = logging.getLogger(__name__)

TAU_BLK = 1e-7
CLUSTER_GAP = 1e-6
LINK_TOL = 1e-8
MAX_TRIES = 5


class InvalidInput(ValueError):
    pass


class NoRealDecomposition(RuntimeError):
    pass


@dataclass
class BlockDiagonalization:
    """Distinct irreducible blocks with multiplicities.

    ``images[k]`` has shape (n_parts, s_k, s_k): the image of every part matrix
    in block k.  ``kinds[k]`` is "R" for a real block, or "C" for a complex block
    of complex size s_k which occupies 2 s_k real dimensions.  Columns of Q are
    grouped block by block, copy by copy; a complex block's copy lists the real
    parts u_1..u_s followed by the imaginary directions J u_1..J u_s.
    """

    field: str
    blk_sizes: list[int]
    multiplicities: list[int]
    images: list[np.ndarray]
    Q: np.ndarray
    kinds: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.kinds:
            self.kinds = ["R"] * len(self.blk_sizes)

    @property
    def n_parts(self) -> int:
        return self.images[0].shape[0] if self.images else 0

    def blk(self, i: int, k: int) -> np.ndarray:
        """Image of part i in block k."""
        return self.images[k][i]

    def real_sizes(self) -> list[int]:
        return [2 * s if t == "C" else s for s, t in zip(self.blk_sizes, self.kinds)]

    def structure(self) -> str:
        return structure_string(self.blk_sizes)


def structure_string(blk_sizes) -> str:
    """Sizes in descending order with the number of distinct blocks of each size,
    e.g. [3, 2, 2] -> "3×1, 2×2"."""
    cnt = Counter(int(s) for s in blk_sizes)
    return ", ".join(f"{s}×{cnt[s]}" for s in sorted(cnt, reverse=True))


def _polar(Y: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(Y, full_matrices=False)
    return U @ Vt


def _cluster(w: np.ndarray, gap: float) -> list[np.ndarray]:
    """Index groups of sorted eigenvalues separated by more than gap * spectral radius."""
    rho = max(float(np.max(np.abs(w))), 1e-300)
    cuts = np.flatnonzero(np.diff(w) > gap * rho) + 1
    return np.split(np.arange(w.size), cuts)


def _generators(P: Partition, rng, count: int = 5) -> list[np.ndarray]:
    out = []
    for _ in range(count):
        t = rng.standard_normal(P.n_parts)
        X = P.element(t)
        out.append(X / np.max(np.abs(X).sum(axis=1)))
    return out


def _block_images(P: Partition, Qk: np.ndarray, chunk_entries: int = 1 << 22) -> np.ndarray:
    """Qk^T B_i Qk for every part i, as an (n_parts, s, s) array.

    Sums the outer products Qk[a]^T Qk[b] over the cells (a, b) of each part, a
    few rows of the label matrix at a time.
    """
    n, s = Qk.shape
    K = P.n_parts
    out = np.zeros((K, s * s))
    rows = max(1, chunk_entries // max(1, n * s * s))
    for a0 in range(0, n, rows):
        a1 = min(n, a0 + rows)
        O = np.einsum("ap,bq->abpq", Qk[a0:a1], Qk).reshape((a1 - a0) * n, s * s)
        lab = P.labels[a0:a1].ravel()
        S = sp.csr_matrix((np.ones(lab.size), (lab, np.arange(lab.size))), shape=(K, lab.size))
        out += S @ O
    out = out.reshape(K, s, s)
    return 0.5 * (out + out.transpose(0, 2, 1))


def _complex_frame(S: np.ndarray, rng) -> np.ndarray:
    """Orthonormal basis (f_1, J f_1, ..., f_m, J f_m) of a space with complex structure J."""
    d = S.shape[0]
    W = np.zeros((d, 0))
    while W.shape[1] < d:
        v = rng.standard_normal(d)
        v -= W @ (W.T @ v)
        v -= W @ (W.T @ v)
        v /= np.linalg.norm(v)
        W = np.column_stack([W, v, S @ v])
    return W


def _decompose_once(P: Partition, rng, gap: float):
    n = P.n
    X = _generators(P, rng)
    X1, X2, X3, X4, X5 = X
    K2 = np.hstack([X2, X3])
    W4 = X2 @ X3 @ X4 @ X5
    Z = X1 + 0.5 * (W4 + W4.T) + 0.1 * (K2 @ K2.T)
    w, V = np.linalg.eigh(Z)
    groups = _cluster(w, gap)
    g = len(groups)
    # link eigenspaces through a second generic element
    M = V.T @ X2 @ V
    gid = np.empty(n, dtype=np.int64)
    for j, gj in enumerate(groups):
        gid[gj] = j
    G = sp.csr_matrix((np.ones(n), (np.arange(n), gid)), shape=(n, g))
    wt = np.sqrt(np.asarray((G.T @ sp.csr_matrix(M * M) @ G).todense()))
    wt = np.triu(wt, 1)
    adj = np.where(wt > LINK_TOL, 1.0 / np.maximum(wt, 1e-300), 0.0)
    ncomp, comp = csgraph.connected_components(sp.csr_matrix(adj), directed=False)
    tree = csgraph.minimum_spanning_tree(sp.csr_matrix(adj))
    comm = X2 @ X3 - X3 @ X2
    comm2 = X4 @ X5 - X5 @ X4
    blocks = []
    for c in range(ncomp):
        members = np.flatnonzero(comp == c)
        dims = {groups[j].size for j in members}
        if len(dims) != 1:
            raise _Retry(f"eigenspaces of unequal dimension {sorted(dims)} in one component")
        d = dims.pop()
        root = int(members[0])
        V0 = V[:, groups[root]]
        S = V0.T @ comm @ V0
        S = 0.5 * (S - S.T)
        kind = "R"
        frame0 = np.eye(d)
        if np.linalg.norm(S) > LINK_TOL * math.sqrt(d):
            kind = "C"
            if d % 2:
                raise _Retry("odd eigenspace dimension for a complex component")
            scale = math.sqrt(max(-np.trace(S @ S) / d, 0.0))
            J0 = S / scale
            if np.max(np.abs(J0 @ J0 + np.eye(d))) > 1e-6:
                raise _Retry("compressed commutator is not a complex structure")
            S2 = V0.T @ comm2 @ V0
            S2 = 0.5 * (S2 - S2.T)
            resid = S2 - (np.sum(S2 * J0) / d) * J0
            if np.linalg.norm(resid) > 1e-6 * max(1.0, np.linalg.norm(S2)):
                raise NoRealDecomposition("quaternionic component; not supported")
            frame0 = _complex_frame(J0, rng)
        # propagate frames along a maximum-weight spanning tree
        order, pred = csgraph.breadth_first_order(tree, root, directed=False, return_predecessors=True)
        frames = {root: V0 @ frame0}
        for j in order[1:]:
            p = int(pred[j])
            Vj = V[:, groups[j]]
            Y = Vj.T @ X2 @ frames[p]
            sv = np.linalg.svd(Y, compute_uv=False)
            if sv[-1] < 1e-3 * sv[0]:
                raise _Retry("transport map between eigenspaces is not a scaled isometry")
            frames[int(j)] = Vj @ _polar(Y)
        cols = [frames[int(j)] for j in order]
        blocks.append((kind, len(members), d, np.stack(cols, axis=1)))  # (n, s, d)
    return blocks


class _Retry(RuntimeError):
    pass


def _copy_columns(kind: str, F: np.ndarray, r: int) -> np.ndarray:
    if kind == "R":
        return F[:, :, r]
    return np.hstack([F[:, :, 2 * r], F[:, :, 2 * r + 1]])


def _to_complex(M: np.ndarray) -> np.ndarray:
    s = M.shape[-1] // 2
    return M[..., :s, :s] + 1j * M[..., s:, :s]


def _assemble(P: Partition, blocks, allow_complex: bool) -> BlockDiagonalization:
    entries = []
    for kind, s, d, F in blocks:
        m = d if kind == "R" else d // 2
        Qcols = np.hstack([_copy_columns(kind, F, r) for r in range(m)])
        img = _block_images(P, _copy_columns(kind, F, 0))
        entries.append((kind, s, m, img, Qcols))
    # deterministic generic element for ordering blocks of equal size
    t = 1.0 / (np.arange(P.n_parts) + math.pi)
    keys = []
    for kind, s, m, img, _ in entries:
        ev = np.linalg.eigvalsh(np.tensordot(t, img, axes=1))
        keys.append((-img.shape[1], tuple(np.round(ev, 6))))
    order = sorted(range(len(entries)), key=lambda k: keys[k])
    entries = [entries[k] for k in order]
    use_complex = allow_complex and any(e[0] == "C" for e in entries)
    sizes, mults, images, kinds = [], [], [], []
    for kind, s, m, img, _ in entries:
        if use_complex:
            if kind == "C":
                img = _to_complex(img)
            else:
                img = img.astype(complex)
        sizes.append(s if (use_complex or kind == "R") else 2 * s)
        mults.append(m)
        images.append(img)
        kinds.append(kind if use_complex else "R")
    Q = np.hstack([e[4] for e in entries])
    return BlockDiagonalization("complex" if use_complex else "real", sizes, mults, images, Q, kinds)


def _real_images(blkd: BlockDiagonalization) -> list[np.ndarray]:
    out = []
    for img, kind in zip(blkd.images, blkd.kinds):
        if kind == "C":
            re, im = img.real, img.imag
            out.append(np.block([[re, -im], [im, re]]))
        else:
            out.append(np.real(img))
    return out


def _reconstruction_error(P: Partition, blkd: BlockDiagonalization, t: np.ndarray) -> float:
    X = P.element(t)
    Y = blkd.Q.T @ X @ blkd.Q
    D = np.zeros_like(Y)
    pos = 0
    for img, m in zip(_real_images(blkd), blkd.multiplicities):
        B = np.tensordot(t, img, axes=1)
        s = B.shape[0]
        for _ in range(m):
            D[pos:pos + s, pos:pos + s] = B
            pos += s
    return float(np.max(np.abs(Y - D)))


def _verify(P: Partition, blkd: BlockDiagonalization, rng, tol: float, samples: int = 3) -> float:
    n = P.n
    if sum(blkd.real_sizes()[k] * blkd.multiplicities[k] for k in range(len(blkd.blk_sizes))) != n:
        return math.inf
    err = float(np.max(np.abs(blkd.Q.T @ blkd.Q - np.eye(n))))
    for _ in range(samples):
        t = rng.standard_normal(P.n_parts)
        t /= _spectral_norm(P.element(t))
        err = max(err, _reconstruction_error(P, blkd, t))
    return err


def block_diagonalize(P: Partition, tol: float = TAU_BLK, rng=None, allow_complex: bool = False,
                      gap: float = CLUSTER_GAP, closure_checked: bool = False) -> BlockDiagonalization:
    """Block-diagonalize the algebra generated by the part matrices of P.

    Retries with fresh random elements (up to MAX_TRIES) when the eigenvalue
    clustering or the verification fails.  Pass ``closure_checked`` when P comes
    from a certificate that already ran the Jordan closure check.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if not closure_checked and jordan_closure_mismatch(P.labels, P.n_parts) != 0:
        raise InvalidInput("partition is not closed under the Jordan product")
    diag = set(np.unique(np.diag(P.labels)).tolist())
    off = set(np.unique(P.labels[~np.eye(P.n, dtype=bool)]).tolist())
    if diag & off:
        raise InvalidInput("span of the partition does not contain the identity")
    last = "no attempt"
    for attempt in range(MAX_TRIES):
        try:
            blocks = _decompose_once(P, rng, gap)
        except _Retry as exc:
            last = str(exc)
            log.info("attempt %d: %s", attempt, last)
            continue
        blkd = _assemble(P, blocks, allow_complex)
        err = _verify(P, blkd, rng, tol)
        if err <= tol:
            real = sum(s * (s + 1) // 2 for s in blkd.real_sizes())
            if blkd.field == "real" and P.n_parts > real:
                raise NoRealDecomposition(
                    f"{P.n_parts} parts cannot fit in blocks of total symmetric dimension {real}")
            return blkd
        last = f"verification error {err:.3e}"
        log.info("attempt %d: %s", attempt, last)
    raise NoRealDecomposition(f"block-diagonalization failed after {MAX_TRIES} attempts: {last}")


@dataclass(frozen=True)
class BlockCheckReport:
    samples: int
    max_deviation: float
    reconstruction_error: float
    orthogonality_error: float
    tol: float

    @property
    def ok(self) -> bool:
        return max(self.max_deviation, self.reconstruction_error, self.orthogonality_error) <= self.tol


def _min_block_eig(blkd_images, t) -> float:
    return min(float(np.linalg.eigvalsh(np.tensordot(t, img, axes=1))[0]) for img in blkd_images)


def _spectral_norm(X) -> float:
    ev = np.linalg.eigvalsh(X)
    return float(max(abs(ev[0]), abs(ev[-1])))


def check_block_diagonalization(P: Partition, blkd: BlockDiagonalization, samples: int = 200,
                                tol: float = TAU_BLK, rng=None) -> BlockCheckReport:
    """Compare the smallest eigenvalue of sum_i t_i B_i with the smallest block
    eigenvalue for random coefficients.

    Half the samples are plain Gaussian coefficients (mostly indefinite); the
    other half are squares of random elements shifted slightly, so positive
    definite points are exercised too.  Elements are scaled to unit spectral norm.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    imgs = blkd.images
    dev = rec = 0.0
    eye = P.part_means(np.eye(P.n))
    for k in range(samples):
        t = rng.standard_normal(P.n_parts)
        if k % 2:
            X = P.element(t)
            t = P.part_means(X @ X) + rng.uniform(-0.05, 0.2) * _spectral_norm(X) ** 2 * eye
        ev = np.linalg.eigvalsh(P.element(t))
        scale = max(abs(ev[0]), abs(ev[-1]))
        t = t / scale
        lam_full = float(ev[0] / scale)
        dev = max(dev, abs(lam_full - _min_block_eig(imgs, t)))
        if k < 5:
            rec = max(rec, _reconstruction_error(P, blkd, t))
    orth = float(np.max(np.abs(blkd.Q.T @ blkd.Q - np.eye(P.n))))
    return BlockCheckReport(samples, dev, rec, orth, tol)


def complex_embed(blkd: BlockDiagonalization) -> BlockDiagonalization:
    """Real form of a complex decomposition: each complex block C becomes
    [[Re C, -Im C], [Im C, Re C]] and its size doubles."""
    if blkd.field != "complex":
        raise ValueError("decomposition is already real")
    images = _real_images(blkd)
    sizes = [img.shape[1] for img in images]
    return BlockDiagonalization("real", sizes, list(blkd.multiplicities), images, blkd.Q.copy())


def identity_decomposition(P: Partition) -> BlockDiagonalization:
    """The trivial decomposition: a single block holding the part matrices
    themselves, with Q = I."""
    n = P.n
    images = np.zeros((P.n_parts, n, n))
    images[P.labels, np.arange(n)[:, None], np.arange(n)[None, :]] = 1.0
    return BlockDiagonalization("real", [n], [1], [images], np.eye(n))
