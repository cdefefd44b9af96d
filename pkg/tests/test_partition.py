import numpy as np
import pytest
import scipy.sparse as sp

from jordanreduce.builders import build_theta_prime, cycle_graph, er_graph
from jordanreduce.conic import ConicProblem, orthonormalize_constraints
from jordanreduce.partition import (Partition, PartitionError, admissible_subspace, canonical_labels,
                                    certify_admissible, meet, part, refine)

from _helpers import random_problem


def dense_admissible(P: Partition, problem: ConicProblem, tol=1e-7) -> bool:
    """Oracle using dense linear algebra only: pinv projections and explicit products."""
    n = problem.n
    A = problem.A.toarray()
    Pperp = np.linalg.pinv(A) @ A
    PL = np.eye(n * n) - Pperp
    CL = PL @ problem.c
    X0 = np.linalg.pinv(A) @ problem.b
    ok = P.deviation(CL) <= tol * max(1, abs(CL).max()) and P.deviation(X0) <= tol * max(1, abs(X0).max())
    B = [P.basis_matrix(i) for i in range(P.n_parts)]
    for Bi in B:
        ok &= P.deviation(PL @ Bi.ravel()) <= tol
    for i in range(P.n_parts):
        for j in range(i, P.n_parts):
            ok &= P.deviation(B[i] @ B[j] + B[j] @ B[i]) <= tol
    return bool(ok)


def test_canonical_labels_first_occurrence():
    lab, k = canonical_labels(np.array([[7, 3], [3, 9]]))
    assert k == 3
    np.testing.assert_array_equal(lab, [[0, 1], [1, 2]])


def test_partition_rejects_asymmetric_labels():
    with pytest.raises(PartitionError):
        Partition(np.array([[0, 1], [2, 0]]))


def test_refine_keeps_nearly_equal_values_together():
    P = Partition.trivial(2)
    M = np.array([[1.0, 0.5], [0.5, 1.0 + 1e-13]])
    Q = refine(P, M)
    assert Q.n_parts == 2
    assert Q.labels[0, 0] == Q.labels[1, 1]


def test_refine_with_scale_ignores_noise():
    P = Partition.trivial(3)
    noise = 1e-14 * np.array([[1.0, -2, 3], [-2, 5, 1], [3, 1, -4]])
    assert refine(P, noise, scale=1.0).n_parts == 1
    assert refine(P, noise).n_parts > 1


def test_part_and_meet():
    M1 = np.array([[1.0, 2, 2], [2, 1, 3], [2, 3, 1]])
    M2 = np.array([[0.0, 1, 1], [1, 5, 1], [1, 1, 5]])
    P1, P2 = part(M1), part(M2)
    assert P1.n_parts == 3 and P2.n_parts == 3
    assert meet(P1, P2).same_as(meet(P2, P1))
    assert meet(P1, P2).n_parts == 4


def test_c5_partition_is_distance_partition():
    P = admissible_subspace(build_theta_prime(cycle_graph(5)), rng=0)
    assert P.n_parts == 3
    i, j = np.indices((5, 5))
    dist = np.minimum((i - j) % 5, (j - i) % 5)
    assert P.same_as(Partition(dist))


@pytest.mark.parametrize("seed", range(4))
def test_result_is_seed_independent(seed):
    prob = build_theta_prime(er_graph(5))
    ref = admissible_subspace(prob, rng=100)
    assert admissible_subspace(prob, rng=seed).same_as(ref)


def test_random_problems_against_dense_oracle(rng):
    for t in range(15):
        prob = random_problem(rng)
        P = admissible_subspace(prob, rng=t)
        rep = certify_admissible(P, prob)
        assert rep.admissible and rep.jordan_configuration
        assert rep.max_violation < 1e-7
        assert dense_admissible(P, prob)


def test_result_is_coarser_than_symmetry_orbits():
    # C_7 is invariant under the dihedral group; its orbits on pairs are
    # distance classes, and the coarsest admissible partition cannot be finer
    n = 7
    P = admissible_subspace(build_theta_prime(cycle_graph(n)), rng=0)
    i, j = np.indices((n, n))
    orbits = Partition(np.minimum((i - j) % n, (j - i) % n))
    assert meet(P, orbits).same_as(orbits)


def test_certificate_flags_non_closed_partition():
    # merging two parts of the C5 partition breaks square closure
    prob = build_theta_prime(cycle_graph(5))
    P = admissible_subspace(prob, rng=0)
    bad = Partition(np.minimum(P.labels, 1))
    rep = certify_admissible(bad, prob)
    assert not rep.admissible
    assert not dense_admissible(bad, prob)


def test_certificate_flags_missing_objective():
    # discrete partition passes; a partition that averages away C_L fails
    n = 3
    C = np.array([[1.0, 2, 0], [2, 0, 0], [0, 0, 0]])
    prob = ConicProblem(n, C.ravel(), sp.csr_matrix(np.eye(n).reshape(1, -1)), np.ones(1))
    assert certify_admissible(Partition.discrete(n), prob).admissible
    i, j = np.indices((n, n))
    rep = certify_admissible(Partition((i != j).astype(int)), prob)
    assert not rep.contains_CL and not rep.admissible


def test_certificate_order_mismatch():
    prob = build_theta_prime(cycle_graph(5))
    with pytest.raises(PartitionError):
        certify_admissible(Partition.trivial(4), prob)


def test_explicit_basis_gives_same_result():
    prob = build_theta_prime(cycle_graph(6))
    basis = orthonormalize_constraints(prob)
    assert admissible_subspace(prob, rng=1, basis=basis).same_as(admissible_subspace(prob, rng=1))


def test_part_of_three_value_pattern():
    a, b, c = 1.5, -2.0, 7.0
    M = np.array([[a, a, b], [a, a, b], [b, b, c]])
    assert part(M).n_parts == 3


def test_random_element_has_one_value_per_part(rng):
    from jordanreduce.partition import random_element
    P = distance = admissible_subspace(build_theta_prime(er_graph(5)), rng=0)
    X = random_element(P, rng)
    assert len(np.unique(X)) == P.n_parts
    assert part(X).same_as(distance)


def test_one_part_partition_misses_x0():
    prob = build_theta_prime(cycle_graph(5))
    rep = certify_admissible(Partition.trivial(5), prob)
    assert not rep.contains_X0 and not rep.admissible


@pytest.mark.parametrize("prob", [build_theta_prime(cycle_graph(6)), build_theta_prime(er_graph(3))],
                         ids=["C6", "ER3"])
def test_ten_seeds_agree(prob):
    ref = admissible_subspace(prob, rng=0)
    assert all(admissible_subspace(prob, rng=s).same_as(ref) for s in range(1, 10))


def test_certified_partition_is_a_fixed_point():
    prob = build_theta_prime(er_graph(5))
    basis = orthonormalize_constraints(prob)
    P = admissible_subspace(prob, rng=0, basis=basis)
    from jordanreduce.conic import project_L
    from jordanreduce.partition import random_element
    for seed in range(20):
        X = random_element(P, np.random.default_rng(seed))
        X /= np.abs(X).max()
        assert refine(refine(P, project_L(X, basis), scale=1.0), X @ X).same_as(P)


def test_basis_matrices_partition_the_all_ones_matrix():
    P = admissible_subspace(build_theta_prime(er_graph(3)), rng=0)
    B = np.array([P.basis_matrix(i) for i in range(P.n_parts)])
    assert B.min() == 0.0
    np.testing.assert_array_equal(B.sum(axis=0), np.ones((P.n, P.n)))
    assert P.n_parts <= P.n * (P.n + 1) // 2
