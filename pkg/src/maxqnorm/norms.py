"""Max-qnorm machinery on CP factorizations.

:func:`max_qnorm_value` evaluates the product of factor 2,inf norms of a
*given* factorization. That is an upper bound on the max-qnorm of the
composed tensor, never the norm itself; use
:func:`maxqnorm.completion.estimate_max_qnorm` to approximate the norm.
"""

import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import check_factors

#: Grothendieck's constant lies in (1.67, 1.79); the midpoint is reported for
#: diagnostics only.
GROTHENDIECK_RANGE = (1.67, 1.79)
GROTHENDIECK_CONSTANT = 1.73

#: Documented upper limits on the constants of the generalized Grothendieck
#: theorem (c1 <= K_G / 5, c2 <= 2.83). No runtime role.
GROTHENDIECK_C1_MAX = GROTHENDIECK_CONSTANT / 5
GROTHENDIECK_C2_MAX = 2.83


@dataclass(frozen=True)
class QnormBound:
    """Budget ``R`` on the max-qnorm together with the entrywise bound ``alpha``."""

    R: float
    alpha: float
    order: int

    def __post_init__(self):
        if self.R <= 0 or self.alpha <= 0:
            raise ValueError("R and alpha must be positive")
        if self.R < self.alpha:
            raise ValueError(f"R={self.R} must be at least alpha={self.alpha}")
        if self.order < 1:
            raise ValueError("order must be positive")

    @property
    def per_factor_bound(self):
        return self.R ** (1.0 / self.order)


def two_inf_norm(U):
    """Largest row l2-norm of ``U``."""
    U = np.asarray(U, dtype=float)
    if U.size == 0:
        raise ValueError("two_inf_norm of an empty matrix")
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", U, U))))


def max_qnorm_value(factors):
    """Product of the factors' 2,inf norms (an upper bound on the max-qnorm)."""
    return math.prod(two_inf_norm(U) for U in check_factors(factors))


def project_rows(U, bound):
    """Scale every row of ``U`` whose l2-norm exceeds ``bound`` back onto the ball."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    U = np.asarray(U, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->i", U, U))
    over = norms > bound
    if not np.any(over):
        return U.copy()
    out = U.copy()
    out[over] *= (bound / norms[over])[:, None]
    return out


def balance_factors(factors):
    """Rescale factors so that all 2,inf norms equal their geometric mean.

    The composed tensor is unchanged. Factorizations containing a zero factor
    compose to zero and are returned as zeros.
    """
    factors = check_factors(factors)
    norms = [two_inf_norm(U) for U in factors]
    if min(norms) == 0.0:
        return [np.zeros_like(U) for U in factors]
    target = math.prod(norms) ** (1.0 / len(factors))
    return [U * (target / n) for U, n in zip(factors, norms)]


def concat_factorizations(F1, F2):
    """Factorization of the sum tensor by side-by-side concatenation.

    Both inputs are balanced first, which gives
    ``max_qnorm_value(out) <= (v1**(2/d) + v2**(2/d))**(d/2)``.
    """
    F1 = check_factors(F1)
    F2 = check_factors(F2)
    if len(F1) != len(F2) or any(A.shape[0] != B.shape[0] for A, B in zip(F1, F2)):
        raise ValueError("factorizations describe tensors of different shapes")
    return [np.hstack([A, B]) for A, B in zip(balance_factors(F1), balance_factors(F2))]


def quasi_triangle_constant(d):
    return 2.0 ** (d / 2.0 - 1.0)


def _check_rank_args(r, d, alpha):
    if r < 1 or d < 2 or alpha <= 0:
        raise ValueError("need r >= 1, d >= 2 and alpha > 0")


def m_norm_upper_bound(r, d, alpha=1.0):
    """``(r * sqrt(r))**(d - 1) * alpha``: M-norm bound for rank-r tensors."""
    _check_rank_args(r, d, alpha)
    return (r * math.sqrt(r)) ** (d - 1) * alpha


def max_qnorm_upper_bound(r, d, alpha=1.0):
    """``sqrt(r**(d*d - d)) * alpha``: max-qnorm bound for rank-r tensors."""
    _check_rank_args(r, d, alpha)
    return r ** ((d * d - d) / 2.0) * alpha
