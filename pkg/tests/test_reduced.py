import json

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from jordanreduce.blockdiag import block_diagonalize, identity_decomposition
from jordanreduce.builders import build_theta_prime, clique_join_graph, cycle_graph, er_graph
from jordanreduce.conic import ConicProblem
from jordanreduce.partition import Partition, admissible_subspace
from jordanreduce.reduced import (SolverLimitExceeded, assemble_reduced, evaluate, export_sdpa, lift, solve)

from _helpers import cvxpy_value, random_problem, read_sdpa, solve_sdpa_cvxpy


def pipeline(prob, seed=0):
    P = admissible_subspace(prob, rng=seed)
    B = block_diagonalize(P, rng=seed)
    return P, B, assemble_reduced(prob, P, B)


def test_c5_value_matches_lp_oracle(c5_pipeline):
    prob, P, B = c5_pipeline
    rp = assemble_reduced(prob, P, B)
    assert all(s == 1 for s in rp.block_sizes)
    # every block is 1x1, so the reduced problem is an LP
    G = np.vstack([np.eye(rp.n_vars)] + [F[:, 0, 0][None] for F in rp.blocks])
    lp = linprog(-rp.new_c, A_ub=-G, b_ub=np.zeros(G.shape[0]), A_eq=rp.new_A.toarray(), b_eq=rp.new_b,
                 bounds=[(None, None)] * rp.n_vars, method="highs")
    assert lp.status == 0
    sol = solve(rp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-lp.fun, abs=1e-7)
    assert sol.objective == pytest.approx(np.sqrt(5), abs=1e-7)


def test_lift_is_feasible_for_original(c5_pipeline):
    prob, P, B = c5_pipeline
    sol = solve(assemble_reduced(prob, P, B))
    X = lift(P, sol.x)
    np.testing.assert_allclose(prob.A @ X.ravel(), prob.b, atol=1e-8)
    assert np.linalg.eigvalsh(X)[0] > -1e-8 and X.min() > -1e-8
    assert float(prob.c @ X.ravel()) == pytest.approx(sol.objective, abs=1e-10)


def test_evaluate_reports_objective_residual_eigenvalue(c5_pipeline):
    prob, P, B = c5_pipeline
    rp = assemble_reduced(prob, P, B)
    x = np.array([0.2, 0.0, 0.0])  # X = I / 5
    obj, res, lam = evaluate(rp, x)
    assert obj == pytest.approx(1.0)
    assert res == pytest.approx(0.0, abs=1e-14)
    assert lam == pytest.approx(0.2)


@pytest.mark.parametrize("seed", range(8))
def test_random_problems_match_full_cvxpy(seed):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng)
    _, _, rp = pipeline(prob, seed)
    sol = solve(rp)
    assert sol.status == "optimal", sol.message
    ref = cvxpy_value(prob)
    assert sol.objective == pytest.approx(ref, abs=1e-5 * (1 + abs(ref)))


def test_reduced_matches_trivial_reduction(rng):
    for t in range(5):
        prob = random_problem(rng)
        _, _, rp = pipeline(prob, t)
        D = Partition.discrete(prob.n)
        full = assemble_reduced(prob, D, identity_decomposition(D))
        a, b = solve(rp), solve(full)
        assert a.status == b.status == "optimal"
        assert a.objective == pytest.approx(b.objective, abs=1e-6 * (1 + abs(b.objective)))


@pytest.mark.parametrize("n,m", [(5, 2), (6, 3), (7, 4)])
def test_clique_join_theta_prime_is_m(n, m):
    _, _, rp = pipeline(build_theta_prime(clique_join_graph(n, m)))
    sol = solve(rp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(m, abs=1e-6)


def test_zero_objective_is_feasibility_problem(rng):
    prob = random_problem(rng)
    prob = ConicProblem(prob.n, np.zeros(prob.n ** 2), prob.A, prob.b, "min")
    _, _, rp = pipeline(prob)
    sol = solve(rp)
    assert sol.status == "optimal" and sol.objective == 0.0
    assert sol.feas_residual < 1e-7 and sol.min_block_eig > -1e-7


def test_cone_infeasible_problem():
    # trace X = 1 and <J, X> = -1 cannot hold for nonnegative X
    n = 3
    A = sp.csr_matrix(np.array([np.eye(n).ravel(), np.ones(n * n)]))
    prob = ConicProblem(n, np.ones(n * n), A, np.array([1.0, -1.0]))
    _, _, rp = pipeline(prob)
    assert solve(rp).status == "infeasible"


def test_solver_cap():
    _, _, rp = pipeline(build_theta_prime(er_graph(5)))
    with pytest.raises(SolverLimitExceeded):
        solve(rp, cap=5)


def test_sdpa_export_roundtrip(tmp_path):
    _, _, rp = pipeline(build_theta_prime(er_graph(3)))
    path = tmp_path / "er3.dat-s"
    meta = export_sdpa(rp, path)
    side = json.loads((tmp_path / "er3.dat-s.json").read_text())
    assert side["sign"] == meta["sign"] == -1.0
    c, sizes, mats = read_sdpa(path)
    assert sizes == meta["block_sizes"]
    assert sizes[-1] < 0  # the diagonal block holding x >= 0
    value = meta["sign"] * (solve_sdpa_cvxpy(path) + meta["offset"])
    assert value == pytest.approx(solve(rp).objective, abs=1e-6)
    assert value == pytest.approx(5.0, abs=1e-6)


def test_sdpa_export_minimization(tmp_path):
    rng = np.random.default_rng(3)
    prob = random_problem(rng)
    prob = ConicProblem(prob.n, prob.c, prob.A, prob.b, "min")
    _, _, rp = pipeline(prob)
    meta = export_sdpa(rp, tmp_path / "p.dat-s", sidecar=False)
    assert not (tmp_path / "p.dat-s.json").exists()
    value = meta["sign"] * (solve_sdpa_cvxpy(tmp_path / "p.dat-s") + meta["offset"])
    assert value == pytest.approx(cvxpy_value(prob), abs=1e-5)


def test_assemble_checks_sizes(c5_pipeline):
    prob, P, B = c5_pipeline
    with pytest.raises(ValueError):
        assemble_reduced(build_theta_prime(cycle_graph(6)), P, B)


def test_c5_reduced_shape(c5_pipeline):
    prob, P, B = c5_pipeline
    rp = assemble_reduced(prob, P, B)
    assert rp.n_vars == 3 and rp.new_A.shape == (2, 3) and rp.block_sizes == [1, 1, 1]
    assert rp.nonneg_vars and rp.sense == "max"


def test_objective_invariant_under_vertex_relabelling():
    g = er_graph(3)
    perm = np.random.default_rng(1).permutation(g.n_vertices)
    from jordanreduce.builders import Graph
    h = Graph(g.adjacency[np.ix_(perm, perm)], "ER3 permuted")
    a = solve(pipeline(build_theta_prime(g))[2])
    b = solve(pipeline(build_theta_prime(h))[2])
    assert a.objective == pytest.approx(b.objective, abs=1e-8)


def test_clique_join_forced_zero_parts():
    # the cross and clique off-diagonal parts vanish; three variables remain
    from jordanreduce.reduced import _prepare
    P, _, rp = pipeline(build_theta_prime(clique_join_graph(7, 3)))
    assert P.n_parts == 5
    pr = _prepare(rp)
    assert int(np.count_nonzero(pr.active)) == 3
    sol = solve(rp)
    X = lift(P, sol.x)
    assert np.abs(X[:3, 3:]).max() < 1e-12 and np.abs(X[3:, 3:] - np.diag(np.diag(X[3:, 3:]))).max() < 1e-12
