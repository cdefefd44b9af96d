"""Command-line pipeline: reduce, blockdiag, solve and the builder front ends.

Exit codes: 0 success, 2 bad input, 3 reduction or certificate failure,
4 block-diagonalization failure, 5 infeasible, 6 numerical limit, 7 fetch
error, 8 problem too large for the built-in solver.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .blockdiag import (InvalidInput, NoRealDecomposition, block_diagonalize,
                        check_block_diagonalization)
from .builders import (build_qap_relaxation, build_theta_prime, cycle_graph, er_graph, ev_bound)
from .conic import InfeasibleAffineSystem, InvalidProblem, orthonormalize_constraints
from .fetch import FetchError, fetch_qaplib
from .io import (FormatError, blockdiag_to_json, parse_dimacs_graph, partition_to_json, qaplib_manifest,
                 read_partition, read_problem, read_qaplib, write_problem)
from .partition import PartitionError, admissible_subspace, certify_admissible
from .reduced import SolverLimitExceeded, assemble_reduced, export_sdpa, solve

log = logging.getLogger("jordanreduce")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_REDUCE = 3
EXIT_BLOCKDIAG = 4
EXIT_INFEASIBLE = 5
EXIT_NUMERICAL = 6
EXIT_FETCH = 7
EXIT_CAP = 8


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --- problem sources ---------------------------------------------------------

def _fetch(name, args):
    try:
        return fetch_qaplib(name, url_base=args.url_base, cache_dir=args.cache_dir, offline=args.offline)
    except FetchError as exc:
        raise CliError(EXIT_FETCH, str(exc)) from exc


def load_problem(args):
    """Resolve the problem argument: --er/--cycle, a .json problem file, a
    QAPLib .dat file, a DIMACS graph, or a known QAPLib instance name."""
    if getattr(args, "er", None) is not None:
        return build_theta_prime(er_graph(args.er))
    if getattr(args, "cycle", None) is not None:
        return build_theta_prime(cycle_graph(args.cycle))
    spec = getattr(args, "problem", None)
    if spec is None:
        raise CliError(EXIT_INPUT, "no problem given")
    path = Path(spec)
    try:
        if path.is_file():
            if path.suffix == ".json":
                return read_problem(path)
            text = path.read_text()
            if path.suffix == ".dat":
                return build_qap_relaxation(read_qaplib(path))
            return build_theta_prime(parse_dimacs_graph(text, path.stem))
        if spec in qaplib_manifest()["instances"]:
            return build_qap_relaxation(read_qaplib(_fetch(spec, args)))
    except (FormatError, InvalidProblem, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"{spec}: {exc}") from exc
    raise CliError(EXIT_INPUT, f"{spec}: no such file or known instance")


# --- pipeline stages ---------------------------------------------------------

def run_reduce(problem, args):
    t0 = time.perf_counter()
    basis = orthonormalize_constraints(problem)
    try:
        P = admissible_subspace(problem, digits=args.digits, rng=args.seed, repeats=args.repeats, basis=basis)
    except (PartitionError, InfeasibleAffineSystem) as exc:
        raise CliError(EXIT_REDUCE, f"reduction failed: {exc}") from exc
    report = certify_admissible(P, problem, basis=basis)
    elapsed = time.perf_counter() - t0
    if not report.admissible:
        raise CliError(EXIT_REDUCE, f"certificate failed: {report.to_dict()}")
    return P, report, elapsed


def run_blockdiag(P, args, closure_checked=False):
    t0 = time.perf_counter()
    try:
        blkd = block_diagonalize(P, rng=args.seed, allow_complex=getattr(args, "complex", False),
                                 closure_checked=closure_checked)
    except (InvalidInput, NoRealDecomposition) as exc:
        raise CliError(EXIT_BLOCKDIAG, f"block-diagonalization failed: {exc}") from exc
    check = check_block_diagonalization(P, blkd, samples=args.samples, rng=args.seed)
    elapsed = time.perf_counter() - t0
    if not check.ok:
        raise CliError(EXIT_BLOCKDIAG, f"decomposition check failed: deviation {check.max_deviation:.3e}")
    return blkd, check, elapsed


def _table_row(problem, P) -> str:
    return f"{problem.name or 'problem'} & {problem.ambient_dim} & {P.n_parts}"


def _emit(args, doc, lines):
    if args.json:
        print(json.dumps(doc))
    else:
        print("\n".join(lines))


def _write_json(path, doc):
    if path:
        with open(path, "w") as fh:
            json.dump(doc, fh)


# --- commands ----------------------------------------------------------------

def cmd_reduce(args) -> int:
    problem = load_problem(args)
    P, report, elapsed = run_reduce(problem, args)
    pdoc = partition_to_json(P)
    _write_json(args.out, pdoc)
    rep = report.to_dict()
    doc = {"name": problem.name, "ambient_dim": problem.ambient_dim, "reduced_dim": P.n_parts,
           "certificate": rep, "seconds": elapsed, "partition": pdoc, "table_row": _table_row(problem, P)}
    lines = [f"partition: {P.n_parts} parts (ambient dimension {problem.ambient_dim}), {elapsed:.2f} s",
             "certificate: " + ", ".join(f"{k}={v}" for k, v in rep.items()),
             _table_row(problem, P)]
    if args.print_partition:
        lines.insert(0, json.dumps(pdoc))
    _emit(args, doc, lines)
    return EXIT_OK


def cmd_blockdiag(args) -> int:
    problem = load_problem(args)
    if args.partition:
        try:
            P = read_partition(args.partition)
        except (FormatError, OSError, ValueError) as exc:
            raise CliError(EXIT_INPUT, f"{args.partition}: {exc}") from exc
        if P.n != problem.n:
            raise CliError(EXIT_INPUT, f"partition order {P.n} does not match problem order {problem.n}")
        report = certify_admissible(P, problem)
        if not report.admissible:
            raise CliError(EXIT_REDUCE, f"partition is not admissible: {report.to_dict()}")
    else:
        P, report, _ = run_reduce(problem, args)
    blkd, check, elapsed = run_blockdiag(P, args, closure_checked=True)
    bdoc = blockdiag_to_json(blkd, include_q=not args.no_q)
    _write_json(args.out, bdoc)
    doc = {"name": problem.name, "n_parts": P.n_parts, "structure": blkd.structure(), "field": blkd.field,
           "blk_sizes": blkd.blk_sizes, "multiplicities": blkd.multiplicities,
           "check": {"max_deviation": check.max_deviation, "reconstruction_error": check.reconstruction_error,
                     "orthogonality_error": check.orthogonality_error, "samples": check.samples},
           "seconds": elapsed}
    if args.json and args.print_decomposition:
        doc["decomposition"] = bdoc
    lines = [blkd.structure(),
             f"field {blkd.field}; sizes {blkd.blk_sizes}; multiplicities {blkd.multiplicities}",
             f"check: max eigenvalue deviation {check.max_deviation:.2e} over {check.samples} samples, "
             f"reconstruction {check.reconstruction_error:.2e}"]
    _emit(args, doc, lines)
    return EXIT_OK


def _pipeline(problem, args, extra=None) -> int:
    P, report, t_red = run_reduce(problem, args)
    blkd, check, t_bd = run_blockdiag(P, args, closure_checked=True)
    rp = assemble_reduced(problem, P, blkd)
    doc = {"name": problem.name, "sense": problem.sense, "ambient_dim": problem.ambient_dim,
           "reduced_dim": P.n_parts, "structure": blkd.structure()}
    doc.update(extra or {})
    lines = [f"{problem.name or 'problem'}: {P.n_parts} parts, blocks {blkd.structure()}"]
    lines += [f"{k}: {v}" for k, v in (extra or {}).items()]
    if args.export_sdpa:
        meta = export_sdpa(rp, args.export_sdpa)
        doc["sdpa"] = {"path": str(args.export_sdpa), "sign": meta["sign"], "offset": meta["offset"]}
        lines.append(f"exported SDPA file {args.export_sdpa} (objective sign {meta['sign']:+.0f}, "
                     f"offset {meta['offset']:.12g})")
    try:
        sol = solve(rp, eps=args.eps)
    except SolverLimitExceeded as exc:
        doc["status"] = "not_solved"
        doc["message"] = str(exc)
        lines.append(f"not solved: {exc}")
        _emit(args, doc, lines)
        return EXIT_OK if args.export_sdpa else EXIT_CAP
    doc.update({k: v for k, v in sol.to_dict().items() if k != "x"})
    if args.json and args.print_solution:
        doc["x"] = sol.x.tolist()
    lines += [f"status: {sol.status}", f"objective: {sol.objective:.10g}",
              f"dual objective: {sol.dual_objective:.10g}",
              f"feasibility residual: {sol.feas_residual:.2e}", f"min block eigenvalue: {sol.min_block_eig:.2e}"]
    if sol.message:
        lines.append(f"note: {sol.message}")
    _emit(args, doc, lines)
    return {"optimal": EXIT_OK, "infeasible": EXIT_INFEASIBLE}.get(sol.status, EXIT_NUMERICAL)


def cmd_solve(args) -> int:
    return _pipeline(load_problem(args), args)


def cmd_theta_prime(args) -> int:
    if args.er is None and args.cycle is None and args.graph is None:
        raise CliError(EXIT_INPUT, "give a DIMACS graph file, --er q or --cycle n")
    if args.graph is not None:
        try:
            g = parse_dimacs_graph(Path(args.graph).read_text(), Path(args.graph).stem)
        except (FormatError, OSError, ValueError) as exc:
            raise CliError(EXIT_INPUT, f"{args.graph}: {exc}") from exc
        problem = build_theta_prime(g)
    else:
        problem = load_problem(args)
    extra = {"vertices": problem.n}
    if args.er is not None:
        extra["ev_bound"] = ev_bound(args.er)
    if args.out:
        write_problem(problem, args.out)
    if args.build_only:
        _emit(args, {"name": problem.name, **extra}, [f"{problem.name}: {problem.n} vertices"])
        return EXIT_OK
    return _pipeline(problem, args, extra)


def cmd_qap(args) -> int:
    problem = load_problem(args)
    if args.out:
        write_problem(problem, args.out)
    if args.build_only:
        _emit(args, {"name": problem.name, "order": problem.n, "constraints": problem.m},
              [f"{problem.name}: matrix order {problem.n}, {problem.m} constraints"])
        return EXIT_OK
    return _pipeline(problem, args)


# --- argument parsing --------------------------------------------------------

def _common(p, problem_arg=True):
    if problem_arg:
        p.add_argument("problem", nargs="?", help="problem .json, QAPLib .dat, DIMACS graph or instance name")
    p.add_argument("--er", type=int, metavar="Q", help="theta' problem of the polarity graph ER(Q)")
    p.add_argument("--cycle", type=int, metavar="N", help="theta' problem of the cycle C_N")
    p.add_argument("--digits", type=int, default=8, help="significant digits when comparing entries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=2, help="clean refinement passes before certifying")
    p.add_argument("--samples", type=int, default=20, help="random samples for the decomposition check")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--offline", action="store_true", help="never download instances")
    p.add_argument("--cache-dir", default=None, help="QAPLib cache (default $JORDANREDUCE_CACHE)")
    p.add_argument("--url-base", default=None, help="download instances from this URL prefix")
    p.add_argument("-v", "--verbose", action="store_true")


def _solver_opts(p):
    p.add_argument("--eps", type=float, default=1e-8, help="relative accuracy of the solver")
    p.add_argument("--export-sdpa", metavar="PATH", default=None, help="write the reduced problem in SDPA format")
    p.add_argument("--print-solution", action="store_true", help="include x in --json output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jordanreduce", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="find and certify the admissible partition")
    _common(p)
    p.add_argument("--out", help="write the partition JSON here")
    p.add_argument("--print-partition", action="store_true", help="print the partition JSON")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("blockdiag", help="block-diagonalize the algebra of the partition")
    _common(p)
    p.add_argument("partition", nargs="?", help="partition JSON (computed when omitted)")
    p.add_argument("--complex", action="store_true", help="report complex blocks as complex matrices")
    p.add_argument("--out", help="write the decomposition JSON here")
    p.add_argument("--no-q", action="store_true", help="leave Q out of the decomposition JSON")
    p.add_argument("--print-decomposition", action="store_true", help="include the decomposition in --json output")
    p.set_defaults(func=cmd_blockdiag)

    p = sub.add_parser("solve", help="reduce, block-diagonalize and solve")
    _common(p)
    _solver_opts(p)
    p.set_defaults(func=cmd_solve, complex=False)

    p = sub.add_parser("theta-prime", help="theta' bound of a graph")
    _common(p, problem_arg=False)
    p.add_argument("graph", nargs="?", help="DIMACS edge list")
    _solver_opts(p)
    p.add_argument("--out", help="write the problem JSON here")
    p.add_argument("--build-only", action="store_true")
    p.set_defaults(func=cmd_theta_prime, complex=False)

    p = sub.add_parser("qap", help="QAP relaxation of a QAPLib instance")
    _common(p)
    _solver_opts(p)
    p.add_argument("--out", help="write the problem JSON here")
    p.add_argument("--build-only", action="store_true")
    p.set_defaults(func=cmd_qap, complex=False)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InvalidProblem, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
