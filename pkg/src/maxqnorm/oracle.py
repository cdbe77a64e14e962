"""Exact small-scale oracles: sign atoms, atomic M-norm by LP, inf-1 norm.

Everything here enumerates sign vectors, so shapes are limited to
``sum(shape) <= MAX_ENUMERATION_DIMS``. These routines are the ground truth
for property tests, not tools for realistic sizes.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import check_shape, check_tensor

MAX_ENUMERATION_DIMS = 20

RECONSTRUCTION_TOL = 1e-8


class EnumerationLimitError(ValueError):
    """Raised when a shape is too large to enumerate sign vectors."""


class SimplexError(RuntimeError):
    """Raised when the simplex method fails to terminate."""


def _guard(shape):
    dims = check_shape(shape)
    if sum(dims) > MAX_ENUMERATION_DIMS:
        raise EnumerationLimitError(
            f"shape {dims} needs 2**{sum(dims)} sign patterns; limit is 2**{MAX_ENUMERATION_DIMS}")
    return dims


def sign_vectors(n, leading_positive=False):
    """All vectors in {-1, +1}^n as rows, optionally with first entry +1."""
    rows = np.array(list(itertools.product([1.0, -1.0], repeat=n)))
    if leading_positive:
        rows = rows[rows[:, 0] > 0]
    return rows


@dataclass(frozen=True)
class AtomBasis:
    """Rank-1 sign tensors of a shape, one per column of ``matrix``.

    ``matrix`` is ``prod(shape) x n_atoms`` with C-order rows. Each sign-flip
    orbit appears once up to global sign, and both signs are present.
    """

    shape: tuple
    matrix: np.ndarray
    vectors: tuple

    def __len__(self):
        return self.matrix.shape[1]

    def atom(self, i):
        return self.matrix[:, i].reshape(self.shape)

    def __iter__(self):
        return (self.atom(i) for i in range(len(self)))


def enumerate_atoms(shape):
    """Enumerate the deduplicated set of rank-1 sign tensors of ``shape``.

    Representatives fix the first entry of modes 2..d to +1; mode 1 stays
    free, which supplies both ``X`` and ``-X``. The count is
    ``2**(sum(shape) - d + 1)``.
    """
    dims = _guard(shape)
    per_mode = [sign_vectors(dims[0])] + [sign_vectors(n, leading_positive=True) for n in dims[1:]]
    columns = []
    vectors = []
    for combo in itertools.product(*per_mode):
        atom = combo[0]
        for v in combo[1:]:
            atom = np.multiply.outer(atom, v)
        columns.append(atom.ravel())
        vectors.append(tuple(combo))
    return AtomBasis(dims, np.array(columns).T, tuple(vectors))


def simplex(c, A, b, tol=1e-10, max_iter=50000):
    """Minimize ``c @ x`` subject to ``A @ x = b``, ``x >= 0``.

    Dense two-phase tableau simplex with Bland's anti-cycling rule.

    Returns
    -------
    x : ndarray or None
        Optimal point, or ``None`` when infeasible.
    status : str
        ``"optimal"`` or ``"infeasible"``.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # columns: n structural, m artificial, rhs
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    basis = list(range(n, n + m))

    def pivot(row, col):
        tab[row] /= tab[row, col]
        for r in range(m + 1):
            if r != row and tab[r, col] != 0.0:
                tab[r] -= tab[r, col] * tab[row]
        basis[row] = col

    def run(allowed):
        for _ in range(max_iter):
            reduced = tab[-1, :-1]
            enter = next((j for j in allowed if reduced[j] < -tol), None)
            if enter is None:
                return
            col = tab[:-1, enter]
            best, leave = math.inf, None
            for r in range(m):
                if col[r] > tol:
                    ratio = tab[r, -1] / col[r]
                    if ratio < best - tol or (abs(ratio - best) <= tol and basis[r] < basis[leave]):
                        best, leave = ratio, r
            if leave is None:
                raise SimplexError("linear program is unbounded")
            pivot(leave, enter)
        raise SimplexError(f"simplex did not terminate in {max_iter} pivots")

    # phase 1: minimize the sum of artificials
    tab[-1, :n] = -tab[:m, :n].sum(axis=0)
    tab[-1, -1] = -b.sum()
    run(range(n + m))
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -tab[-1, -1] > 1e-9 * scale:
        return None, "infeasible"

    # drive zero-level artificials out; drop rows that are redundant
    keep = []
    for r in range(m):
        if basis[r] >= n:
            candidates = [j for j in range(n) if abs(tab[r, j]) > tol]
            if not candidates:
                continue
            pivot(r, candidates[0])
        keep.append(r)
    tab = np.vstack([tab[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[r] for r in keep]
    m = len(keep)

    # phase 2
    tab[-1, :n] = c
    for r, j in enumerate(basis):
        if tab[-1, j] != 0.0:
            tab[-1] -= tab[-1, j] * tab[r]
    run(range(n))

    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = tab[r, -1]
    return x, "optimal"


@dataclass(frozen=True)
class LPSolution:
    value: float
    coefficients: np.ndarray
    status: str


def m_norm_exact(T, atoms=None):
    """Exact atomic M-norm: ``min sum(c)`` s.t. ``sum c_X X = T``, ``c >= 0``."""
    T = check_tensor(T)
    if atoms is None:
        atoms = enumerate_atoms(T.shape)
    elif atoms.shape != T.shape:
        raise ValueError(f"atom basis shape {atoms.shape} does not match {T.shape}")
    target = T.ravel()
    if not np.any(target):
        return LPSolution(0.0, np.zeros(len(atoms)), "optimal")
    x, status = simplex(np.ones(len(atoms)), atoms.matrix, target)
    if x is None:
        # the atoms span the whole space, so this indicates numerical failure
        raise SimplexError("M-norm LP reported infeasible")
    x[x < 0] = 0.0
    residual = np.abs(atoms.matrix @ x - target).max()
    if residual > RECONSTRUCTION_TOL:
        raise SimplexError(f"M-norm LP reconstruction error {residual:.3g}")
    return LPSolution(float(x.sum()), x, status)


def m_ball_membership(T, radius=1.0, atoms=None):
    return m_norm_exact(T, atoms).value <= radius + 1e-8


def inf_one_norm_bruteforce(T):
    """``sup |sum T(i) x_1(i_1)...x_d(i_d)|`` over sign vectors, by enumeration.

    The first d-1 modes are enumerated exhaustively; for the last mode the
    best sign vector is taken in closed form (sum of absolute values).
    """
    T = check_tensor(T)
    _guard(T.shape)
    W = T
    # contract mode 0 repeatedly; enumerated sign axes accumulate at the end
    for n in T.shape[:-1]:
        W = np.tensordot(W, sign_vectors(n), axes=([0], [1]))
    W = np.moveaxis(W, 0, -1).reshape(-1, T.shape[-1])
    return float(np.abs(W).sum(axis=1).max())


def max_atom_inner(T, atoms=None):
    """``max |<T, U>|`` over the atom set."""
    T = check_tensor(T)
    if atoms is None:
        atoms = enumerate_atoms(T.shape)
    return float(np.abs(T.ravel() @ atoms.matrix).max())
