"""File formats: problem, partition and decomposition JSON, QAPLib instances and
DIMACS edge lists."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .blockdiag import BlockDiagonalization
from .builders import Graph, QapInstance
from .conic import ConicProblem, InvalidProblem, sym_entries, sym_from_entries
from .partition import Partition, PartitionError


class FormatError(ValueError):
    pass


# --- problems ----------------------------------------------------------------

def problem_to_json(problem: ConicProblem) -> dict:
    n = problem.n
    cons = []
    for k in range(problem.m):
        cons.append({"entries": [list(e) for e in sym_entries(problem.A[k].toarray().reshape(n, n))],
                     "b": float(problem.b[k])})
    doc = {"n": n, "sense": problem.sense,
           "c": [list(e) for e in sym_entries(problem.C())], "constraints": cons}
    if problem.name:
        doc["name"] = problem.name
    return doc


def problem_from_json(doc: dict) -> ConicProblem:
    try:
        n = int(doc["n"])
        sense = doc.get("sense", "min")
        C = sym_from_entries(n, doc.get("c", []))
        rows, b = [], []
        for con in doc["constraints"]:
            rows.append(sp.csr_matrix(sym_from_entries(n, con["entries"]).reshape(1, n * n)))
            b.append(float(con["b"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed problem document: {exc!r}") from exc
    if not rows:
        raise FormatError("problem has no constraints")
    return ConicProblem(n, C.toarray().ravel(), sp.vstack(rows).tocsr(), np.array(b), sense,
                        str(doc.get("name", "")))


def read_problem(path) -> ConicProblem:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return problem_from_json(doc)


def write_problem(problem: ConicProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_json(problem), fh)


# --- partitions --------------------------------------------------------------

def partition_to_json(P: Partition) -> dict:
    return {"n": P.n, "n_parts": P.n_parts, "labels": (P.labels.ravel() + 1).tolist()}


def partition_from_json(doc: dict) -> Partition:
    try:
        n = int(doc["n"])
        lab = np.asarray(doc["labels"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed partition document: {exc!r}") from exc
    if lab.size != n * n:
        raise FormatError(f"expected {n * n} labels, got {lab.size}")
    if lab.size and lab.min() < 1:
        raise FormatError("labels are 1-based")
    try:
        P = Partition(lab.reshape(n, n) - 1)
    except PartitionError as exc:
        raise FormatError(str(exc)) from exc
    if "n_parts" in doc and int(doc["n_parts"]) != P.n_parts:
        raise FormatError(f"n_parts {doc['n_parts']} does not match the labels ({P.n_parts})")
    return P


def read_partition(path) -> Partition:
    with open(path) as fh:
        return partition_from_json(json.load(fh))


# --- block diagonalizations --------------------------------------------------

def blockdiag_to_json(blkd: BlockDiagonalization, include_q: bool = True) -> dict:
    blks = []
    for img in blkd.images:
        if np.iscomplexobj(img):
            blks.append({"re": img.real.tolist(), "im": img.imag.tolist()})
        else:
            blks.append({"re": img.tolist()})
    doc = {"field": blkd.field, "blk_sizes": list(map(int, blkd.blk_sizes)),
           "multiplicities": list(map(int, blkd.multiplicities)), "kinds": list(blkd.kinds),
           "structure": blkd.structure(), "blks": blks}
    if include_q:
        doc["Q"] = blkd.Q.tolist()
    return doc


def blockdiag_from_json(doc: dict) -> BlockDiagonalization:
    try:
        images = []
        for b in doc["blks"]:
            re = np.asarray(b["re"], dtype=float)
            images.append(re + 1j * np.asarray(b["im"], dtype=float) if "im" in b else re)
        Q = np.asarray(doc["Q"], dtype=float) if "Q" in doc else None
        return BlockDiagonalization(doc["field"], list(doc["blk_sizes"]), list(doc["multiplicities"]),
                                    images, Q, list(doc.get("kinds", [])))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed decomposition document: {exc!r}") from exc


# --- QAPLib ------------------------------------------------------------------

def _int_tokens(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split()]
    except ValueError as exc:
        raise FormatError(f"non-integer token in QAPLib data: {exc}") from exc


def qaplib_hash(text: str) -> str:
    """sha256 of the whitespace-normalized token stream; independent of line layout."""
    return hashlib.sha256(" ".join(text.split()).encode()).hexdigest()


def parse_qaplib(text: str, name: str = "") -> QapInstance:
    """First token n, then the n x n matrices A and B.  Only symmetric data is accepted."""
    tok = _int_tokens(text)
    if not tok:
        raise FormatError("empty QAPLib file")
    n = tok[0]
    if n < 1 or len(tok) != 1 + 2 * n * n:
        raise FormatError(f"expected {1 + 2 * n * n} tokens for n = {n}, got {len(tok)}")
    A = np.array(tok[1:1 + n * n], dtype=np.int64).reshape(n, n)
    B = np.array(tok[1 + n * n:], dtype=np.int64).reshape(n, n)
    for lbl, M in (("A", A), ("B", B)):
        if not np.array_equal(M, M.T):
            raise FormatError(f"matrix {lbl} is not symmetric; only symmetric instances are supported")
    return QapInstance(A, B, name)


def write_qaplib(inst: QapInstance) -> str:
    n = inst.n
    width = max(len(str(int(v))) for v in np.concatenate([np.ravel(inst.A), np.ravel(inst.B)])) + 1

    def block(M):
        return "\n".join("".join(f"{int(v):>{width}}" for v in row) for row in np.asarray(M))

    return f"{n}\n\n{block(inst.A)}\n\n{block(inst.B)}\n"


def read_qaplib(path) -> QapInstance:
    p = Path(path)
    return parse_qaplib(p.read_text(), p.stem)


def vendored_qaplib(name: str) -> Path | None:
    res = resources.files("jordanreduce") / "data" / "qaplib" / f"{name}.dat"
    return Path(str(res)) if res.is_file() else None


def qaplib_manifest() -> dict:
    res = resources.files("jordanreduce") / "data" / "qaplib" / "manifest.json"
    return json.loads(res.read_text())


# --- DIMACS graphs -----------------------------------------------------------

def parse_dimacs_graph(text: str, name: str = "") -> Graph:
    """"p edge n m" header, then "e i j" lines (1-based); "c" lines are comments."""
    n = None
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0] == "c":
            continue
        if parts[0] == "p":
            if n is not None or len(parts) != 4 or parts[1] not in ("edge", "col"):
                raise FormatError(f"line {lineno}: bad problem line {line!r}")
            try:
                n = int(parts[2])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: bad vertex count") from exc
        elif parts[0] == "e":
            if n is None:
                raise FormatError(f"line {lineno}: edge before the problem line")
            if len(parts) != 3:
                raise FormatError(f"line {lineno}: bad edge line {line!r}")
            try:
                i, j = int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: bad edge line {line!r}") from exc
            if not (1 <= i <= n and 1 <= j <= n):
                raise FormatError(f"line {lineno}: vertex out of range 1..{n}")
            if i == j:
                raise FormatError(f"line {lineno}: loop at vertex {i}")
            edges.append((i - 1, j - 1))
        else:
            raise FormatError(f"line {lineno}: unknown line type {parts[0]!r}")
    if n is None:
        raise FormatError("missing 'p edge n m' line")
    return Graph.from_edges(n, edges, name)


def write_dimacs_graph(g: Graph) -> str:
    lines = [f"p edge {g.n_vertices} {g.n_edges}"]
    lines += [f"e {i + 1} {j + 1}" for i, j in g.edges()]
    return "\n".join(lines) + "\n"


def read_dimacs_graph(path) -> Graph:
    p = Path(path)
    return parse_dimacs_graph(p.read_text(), p.stem)


__all__ = [
    "FormatError", "InvalidProblem", "problem_to_json", "problem_from_json", "read_problem", "write_problem",
    "partition_to_json", "partition_from_json", "read_partition", "blockdiag_to_json", "blockdiag_from_json",
    "qaplib_hash", "parse_qaplib", "write_qaplib", "read_qaplib", "vendored_qaplib", "qaplib_manifest",
    "parse_dimacs_graph", "write_dimacs_graph", "read_dimacs_graph",
]
