import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from maxqnorm.norms import m_norm_upper_bound
from maxqnorm.oracle import (
    EnumerationLimitError, enumerate_atoms, inf_one_norm_bruteforce,
    m_ball_membership, m_norm_exact, max_atom_inner, simplex)
from maxqnorm.tensor_core import cp_compose, infinity_norm

ATOMS_222 = enumerate_atoms((2, 2, 2))


def dual_m_norm(T, atoms):
    """max <T, Y> s.t. |<Y, U>| <= 1 for every atom U (scipy HiGHS)."""
    A = atoms.matrix.T
    res = linprog(-T.ravel(), A_ub=np.vstack([A, -A]), b_ub=np.ones(2 * A.shape[0]),
                  bounds=[(None, None)] * T.size, method="highs")
    assert res.status == 0
    return -res.fun


def brute_force_atoms(shape):
    """Every rank-1 sign tensor, deduplicated by value."""
    seen = set()
    for combo in itertools.product(*(itertools.product([1, -1], repeat=n) for n in shape)):
        atom = np.array(combo[0], dtype=float)
        for v in combo[1:]:
            atom = np.multiply.outer(atom, np.array(v, dtype=float))
        seen.add(tuple(atom.ravel()))
    return seen


@pytest.mark.parametrize("shape, count", [((2, 2), 8), ((2, 2, 2), 16), ((3, 2), 16), ((2, 3, 2), 32)])
def test_atom_count_matches_brute_force(shape, count):
    atoms = enumerate_atoms(shape)
    assert len(atoms) == count == 2 ** (sum(shape) - len(shape) + 1)
    columns = {tuple(c) for c in atoms.matrix.T}
    assert columns == brute_force_atoms(shape)


def test_atoms_are_rank_one_signs():
    for i, atom in enumerate(ATOMS_222):
        np.testing.assert_array_equal(np.abs(atom), 1)
        vecs = ATOMS_222.vectors[i]
        np.testing.assert_array_equal(cp_compose([v[:, None] for v in vecs]), atom)
    assert any(np.array_equal(ATOMS_222.atom(0), -a) for a in ATOMS_222)


def test_enumeration_guard():
    with pytest.raises(EnumerationLimitError):
        enumerate_atoms((7, 7, 7))
    with pytest.raises(EnumerationLimitError):
        inf_one_norm_bruteforce(np.ones((11, 10)))


def test_simplex_small_lp():
    # min -x - y  s.t.  x + y + s = 4, x + 3y + t = 6
    A = np.array([[1.0, 1, 1, 0], [1, 3, 0, 1]])
    x, status = simplex(np.array([-1.0, -2, 0, 0]), A, np.array([4.0, 6]))
    assert status == "optimal"
    np.testing.assert_allclose(x[:2], [3.0, 1.0], atol=1e-12)


def test_simplex_infeasible():
    x, status = simplex(np.ones(2), np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert x is None and status == "infeasible"


def test_simplex_redundant_rows():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    x, status = simplex(np.array([1.0, 2.0, 1.0]), A, np.array([1.0, 2.0, 1.0]))
    assert status == "optimal"
    np.testing.assert_allclose(A @ x, [1, 2, 1], atol=1e-12)
    # every feasible point costs (1-t) + 2t + (1-t) = 2
    assert x @ [1.0, 2.0, 1.0] == pytest.approx(2.0)


def test_m_norm_of_atom():
    for atom in list(ATOMS_222)[:5]:
        sol = m_norm_exact(atom, ATOMS_222)
        assert sol.value == pytest.approx(1.0, abs=1e-8)
        assert sol.status == "optimal"


def test_m_norm_of_zero():
    assert m_norm_exact(np.zeros((2, 2, 2))).value == 0.0


def test_m_norm_counterexample(counterexample):
    sol = m_norm_exact(counterexample, ATOMS_222)
    np.testing.assert_allclose(ATOMS_222.matrix @ sol.coefficients, counterexample.ravel(), atol=1e-8)
    assert sol.value == pytest.approx(sol.coefficients.sum(), abs=1e-10)
    assert sol.value == pytest.approx(dual_m_norm(counterexample, ATOMS_222), abs=1e-8)
    # recorded ground truth for this fixture, confirmed by the dual LP above
    assert sol.value == pytest.approx(2.0, abs=1e-8)
    assert 2.0 - 1e-8 <= sol.value <= 2 * math.sqrt(2)


def test_m_norm_matches_dual_on_random(rng):
    for shape in [(2, 2, 2), (2, 3, 2), (3, 3)]:
        atoms = enumerate_atoms(shape)
        for _ in range(5):
            T = rng.standard_normal(shape)
            assert m_norm_exact(T, atoms).value == pytest.approx(dual_m_norm(T, atoms), rel=1e-8)


def test_ball_membership():
    atom = ATOMS_222.atom(3)
    assert m_ball_membership(atom, 1.0, ATOMS_222)
    assert not m_ball_membership(1.5 * atom, 1.0, ATOMS_222)
    assert m_ball_membership(0.5 * (atom + ATOMS_222.atom(7)), 1.0, ATOMS_222)


def test_inf_one_examples(counterexample):
    for shape in [(2, 2, 2), (3, 2), (2, 3, 2, 2)]:
        assert inf_one_norm_bruteforce(np.ones(shape)) == pytest.approx(math.prod(shape))
    for atom in list(ATOMS_222)[::3]:
        assert inf_one_norm_bruteforce(atom) == pytest.approx(8)
    assert inf_one_norm_bruteforce(counterexample) == pytest.approx(9)


def test_inf_one_all_sign_tuples(rng):
    """Literal enumeration over every sign tuple, including redundant ones."""
    T = rng.standard_normal((2, 3, 2))
    best = 0.0
    for x1 in itertools.product([1, -1], repeat=2):
        for x2 in itertools.product([1, -1], repeat=3):
            for x3 in itertools.product([1, -1], repeat=2):
                best = max(best, abs(np.einsum("ijk,i,j,k->", T, x1, x2, x3)))
    assert inf_one_norm_bruteforce(T) == pytest.approx(best, abs=1e-12)


tensors_222 = st.integers(0, 2**31).map(lambda s: np.random.default_rng(s).standard_normal((2, 2, 2)))


@settings(max_examples=30, deadline=None)
@given(T=tensors_222, c=st.floats(-4, 4, allow_nan=False).filter(lambda c: abs(c) > 1e-3))
def test_m_norm_homogeneous(T, c):
    a = m_norm_exact(T, ATOMS_222).value
    assert m_norm_exact(c * T, ATOMS_222).value == pytest.approx(abs(c) * a, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(X=tensors_222, T=tensors_222)
def test_m_norm_triangle(X, T):
    lhs = m_norm_exact(X + T, ATOMS_222).value
    assert lhs <= m_norm_exact(X, ATOMS_222).value + m_norm_exact(T, ATOMS_222).value + 1e-8


@settings(max_examples=30, deadline=None)
@given(T=tensors_222)
def test_m_norm_lower_bound_and_duality(T):
    assert m_norm_exact(T, ATOMS_222).value >= infinity_norm(T) - 1e-8
    assert max_atom_inner(T, ATOMS_222) == pytest.approx(inf_one_norm_bruteforce(T), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(r=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_m_norm_rank_upper_bound(r, seed):
    rng = np.random.default_rng(seed)
    T = cp_compose([rng.standard_normal((2, r)) for _ in range(3)])
    T /= infinity_norm(T)
    assert m_norm_exact(T, ATOMS_222).value <= m_norm_upper_bound(r, 3, 1.0) + 1e-6
