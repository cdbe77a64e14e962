"""Bisection estimation of the max-qnorm and cross-validated completion.

:func:`estimate_max_qnorm` finds the smallest max-qnorm budget under which
a fully observed tensor is reproduced to RMSE <= 1e-3.
:func:`complete_with_cv` completes a partially observed tensor, choosing the
budget by a five-point search scored on held-out observations.
:class:`MaxQNormCompleter` wraps the latter as a scikit-learn estimator.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .norms import max_qnorm_upper_bound
from .observation import ObservationSet, full_observation, split_train_validate
from .solvers import SolverParams, solve
from .tensor_core import (balanced_index_map, check_shape, check_tensor,
                          cp_compose, entries_at, fold_balanced, frobenius,
                          infinity_norm)

logger = logging.getLogger(__name__)

#: Algorithm 1 declares recovery once RMSE drops to this value.
RECOVERY_RMSE = 1e-3

#: Candidate solves in the budget search stop once the training loss falls
#: below this fraction of the mean squared training value.
FIT_FLOOR = 1e-12


def rmse(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("rmse of empty inputs")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def n_search_iters(lower, upper):
    """``ceil(log2(upper - lower)) + 6``, at least one."""
    return max(1, math.ceil(math.log2(upper - lower)) + 6)


def default_width(shape):
    return 2 * max(shape)


def estimate_max_qnorm(T, lower, upper, solver=None, k=None, full_output=False):
    """Estimate ``||T||_max`` by bisection over fully observed completions.

    Each midpoint is tested by solving the max-qnorm constrained least
    squares problem on every entry of ``T``; recovery to RMSE <= 1e-3 lowers
    the upper end, anything else raises the lower end. Each solve starts
    from the previous solve's factors. The tensor is normalized to unit
    infinity norm first (the RMSE threshold assumes that scale) and the
    answer is scaled back.

    Parameters
    ----------
    T : ndarray
    lower, upper : float
        Initial bracket, ``0 < lower < upper``.
    solver : SolverParams, optional
    k : int, optional
        Factor width, default ``2 * max(T.shape)``.
    full_output : bool
        Also return a dict with the bisection trace and resolution.

    Returns
    -------
    estimate : float
    info : dict, only when ``full_output`` is true
    """
    T = check_tensor(T)
    if not 0 < lower < upper:
        raise ValueError(f"need 0 < lower < upper, got ({lower}, {upper})")
    solver = solver or SolverParams()
    k = k or default_width(T.shape)
    alpha = infinity_norm(T)
    if alpha == 0.0:
        raise ValueError("the zero tensor has max-qnorm 0; nothing to bisect")
    obs = full_observation(T / alpha)
    lo, hi = lower / alpha, upper / alpha
    # stop solves once recovery is certain: RMSE**2 == loss on full observation
    params = solver.with_(target_loss=max(solver.target_loss, RECOVERY_RMSE ** 2))
    iters = n_search_iters(lo, hi)
    init = None
    trace = []
    worst_gap = -np.inf
    for _ in range(iters):
        mid = (lo + hi) / 2.0
        try:
            state = solve(obs, mid, k, params, init)
            init = state.factors
            worst_gap = max(worst_gap, state.feasibility_gap())
            success = math.sqrt(state.loss) <= RECOVERY_RMSE
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.warning("solver failed at bound %g: %s", mid, exc)
            success = False
        trace.append((mid * alpha, success))
        if success:
            hi = mid
        else:
            lo = mid
    estimate = (lo + hi) / 2.0 * alpha
    if not full_output:
        return estimate
    info = {
        "iterations": iters,
        "resolution": (hi - lo) * alpha,
        "trace": trace,
        "lower": lo * alpha,
        "upper": hi * alpha,
        "max_feasibility_gap": worst_gap,
    }
    return estimate, info


@dataclass
class CompletionResult:
    recovered: np.ndarray
    factors: list
    chosen_R: float
    validation_rmse: float
    relative_error: float = None
    solver_diag: dict = field(default_factory=dict)
    bounds_trace: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    train_slots: np.ndarray = None
    validation_slots: np.ndarray = None


def _five_points(lower, upper):
    return [(i / 4.0) * upper + ((4 - i) / 4.0) * lower for i in range(5)]


def complete_with_cv(obs, shape, lower, upper, solver=None, alpha=1.0, k=None,
                     seed=0, fraction=0.8, truth=None):
    """Complete a tensor from ``obs`` choosing the max-qnorm budget by validation.

    The slots are split into train/validation parts. Each outer iteration
    solves the constrained problem on the training part at five equispaced
    budgets and keeps the one with the smallest validation RMSE (ties go to
    the smaller budget); the next interval spans that budget's neighbours,
    or the two end points nearest it when it is itself an end point.
    Candidates are solved from the largest budget down, each warm-started
    from the previous one; budgets already solved are reused. Values are
    divided by ``alpha`` internally and predictions are clipped to
    ``[-alpha, alpha]``.

    Parameters
    ----------
    obs : ObservationSet
    shape : sequence of int
    lower, upper : float
        Initial budget interval, ``0 < lower <= upper``.
    solver : SolverParams, optional
    alpha : float
        Bound on the magnitude of the entries.
    k : int, optional
        Factor width, default ``2 * max(shape)``.
    seed : int
        Seeds the split and the first solver start.
    truth : ndarray, optional
        If given, ``relative_error`` is filled with the squared relative
        Frobenius error of the recovery.

    Returns
    -------
    CompletionResult
    """
    shape = check_shape(shape)
    if tuple(obs.shape) != shape:
        raise ValueError(f"observations are for shape {obs.shape}, not {shape}")
    if not 0 < lower <= upper:
        raise ValueError(f"need 0 < lower <= upper, got ({lower}, {upper})")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if obs.m < 5:
        raise ValueError(f"need at least 5 observations, got {obs.m}")
    solver = solver or SolverParams()
    k = k or default_width(shape)

    scaled = ObservationSet(shape, obs.indices, obs.values / alpha, obs.sigma / alpha, obs.slots)
    train, valid = split_train_validate(scaled, fraction, seed)
    floor = FIT_FLOOR * float(np.mean(train.values ** 2))
    params = solver.with_(seed=int(np.random.SeedSequence([seed, 7]).generate_state(1)[0]),
                          target_loss=max(solver.target_loss, floor))
    lo, hi = lower / alpha, upper / alpha

    solved = {}
    worst_gap = -np.inf

    def evaluate(R, init):
        nonlocal worst_gap
        if R not in solved:
            state = solve(train, R, k, params, init)
            worst_gap = max(worst_gap, state.feasibility_gap())
            pred = np.clip(entries_at(state.factors, valid.indices), -1.0, 1.0)
            solved[R] = (rmse(pred, valid.values), state)
        return solved[R]

    if hi == lo:
        iters = 0
        best_R = lo
        best_err, best_state = evaluate(lo, None)
        bounds_trace = [(lower, upper)]
    else:
        iters = n_search_iters(lo, hi)
        bounds_trace = []
        for _ in range(iters):
            bounds = _five_points(lo, hi)
            # largest budget first: each smaller one starts from the projection
            # of the previous solution, which keeps the search out of the
            # collapsed stationary points that small-budget solutions sit in
            init = None
            scores = [0.0] * 5
            for i in range(4, -1, -1):
                err, state = evaluate(bounds[i], init)
                scores[i] = err
                init = state.factors
            i = int(np.argmin(scores))  # first minimum, i.e. smallest budget
            best_R = bounds[i]
            best_err, best_state = solved[best_R]
            lo, hi = bounds[max(i - 1, 0)], bounds[min(i + 1, 4)]
            if i == 0:
                hi = bounds[1]
            elif i == 4:
                lo = bounds[3]
            bounds_trace.append((lo * alpha, hi * alpha))

    factors = [U * alpha ** (1.0 / len(shape)) for U in best_state.factors]
    recovered = np.clip(cp_compose(factors), -alpha, alpha)
    rel = None
    if truth is not None:
        truth = check_tensor(truth, shape)
        rel = frobenius(recovered - truth) ** 2 / frobenius(truth) ** 2
    diag = {
        "method": best_state.method,
        "iterations": best_state.iter,
        "train_loss": best_state.loss * alpha ** 2,
        "converged": best_state.converged,
        "outer_iterations": iters,
        "solves": len(solved),
        "feasibility_gap": best_state.feasibility_gap(),
        "max_feasibility_gap": worst_gap,
    }
    candidates = sorted((R * alpha, err * alpha) for R, (err, _) in solved.items())
    return CompletionResult(
        recovered=recovered,
        factors=factors,
        chosen_R=best_R * alpha,
        validation_rmse=best_err * alpha,
        relative_error=rel,
        solver_diag=diag,
        bounds_trace=bounds_trace,
        candidates=candidates,
        train_slots=train.slots,
        validation_slots=valid.slots,
    )


def matricized_baseline(obs, shape, split, lower, upper, solver=None, alpha=1.0,
                        k=None, seed=0, fraction=0.8, truth=None):
    """Complete the balanced unfolding ``X_[split]`` as a matrix, then fold back.

    The matrix problem runs through :func:`complete_with_cv` with ``d = 2``.
    The default factor width is ``2 * min`` of the unfolded dimensions,
    which already spans every matrix of that size.
    """
    shape = check_shape(shape)
    if len(shape) == 2:
        return complete_with_cv(obs, shape, lower, upper, solver, alpha, k, seed, fraction, truth)
    if not 1 <= split <= len(shape) - 1:
        raise ValueError(f"split must lie in [1, {len(shape) - 1}]")
    mshape = (math.prod(shape[:split]), math.prod(shape[split:]))
    mobs = ObservationSet(mshape, balanced_index_map(obs.indices, shape, split),
                          obs.values, obs.sigma, obs.slots)
    k = k or 2 * min(mshape)
    res = complete_with_cv(mobs, mshape, lower, upper, solver, alpha, k, seed, fraction)
    res.recovered = fold_balanced(res.recovered, shape, split)
    if truth is not None:
        truth = check_tensor(truth, shape)
        res.relative_error = frobenius(res.recovered - truth) ** 2 / frobenius(truth) ** 2
    return res


class MaxQNormCompleter(RegressorMixin, BaseEstimator):
    """Max-qnorm constrained tensor completion as a scikit-learn regressor.

    Samples are tensor entries: ``X`` holds 0-based integer indices
    (``n_samples x d``) and ``y`` the observed values. ``predict`` returns the
    completed tensor at arbitrary indices.

    Parameters
    ----------
    shape : tuple of int
        Shape of the tensor being completed.
    lower, upper : float or None
        Budget search interval. ``None`` means ``alpha`` for ``lower`` and
        the rank-``rank_hint`` theoretical bound for ``upper``.
    alpha : float
        Bound on entry magnitude.
    rank_hint : int
        Only used to derive the default ``upper``.
    method : {"pqn", "pgd", "sgd"}
    width : int or None
        Factor width, default ``2 * max(shape)``.
    max_iters : int
    matricize_split : int or None
        If set, complete the balanced unfolding at this split instead.
    validation_fraction : float
        Fraction of samples used for training in the budget search.
    random_state : int
    """

    def __init__(self, shape=None, lower=None, upper=None, alpha=1.0, rank_hint=2,
                 method="pqn", width=None, max_iters=2000, matricize_split=None,
                 validation_fraction=0.8, random_state=0):
        self.shape = shape
        self.lower = lower
        self.upper = upper
        self.alpha = alpha
        self.rank_hint = rank_hint
        self.method = method
        self.width = width
        self.max_iters = max_iters
        self.matricize_split = matricize_split
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _bounds(self, d):
        lower = self.alpha if self.lower is None else self.lower
        if self.upper is not None:
            upper = self.upper
        elif self.matricize_split is not None:
            upper = max_qnorm_upper_bound(self.rank_hint, 2, self.alpha)
        else:
            upper = max_qnorm_upper_bound(self.rank_hint, d, self.alpha)
        return lower, max(upper, lower)

    def fit(self, X, y):
        if self.shape is None:
            raise ValueError("shape must be set before fitting")
        shape = check_shape(self.shape)
        X, y = check_X_y(X, y, dtype=None, y_numeric=True)
        if X.shape[1] != len(shape):
            raise ValueError(f"X has {X.shape[1]} columns, expected {len(shape)}")
        if not np.issubdtype(X.dtype, np.integer) and not np.all(X == np.round(X)):
            raise ValueError("X must hold integer indices")
        obs = ObservationSet(shape, X.astype(np.intp), y)
        params = SolverParams(method=self.method, max_iters=self.max_iters)
        lower, upper = self._bounds(len(shape))
        seed = 0 if self.random_state is None else int(self.random_state)
        if self.matricize_split is None:
            res = complete_with_cv(obs, shape, lower, upper, params, self.alpha, self.width,
                                   seed, self.validation_fraction)
        else:
            res = matricized_baseline(obs, shape, self.matricize_split, lower, upper, params,
                                      self.alpha, self.width, seed, self.validation_fraction)
        self.tensor_ = res.recovered
        self.chosen_R_ = res.chosen_R
        self.validation_rmse_ = res.validation_rmse
        self.bounds_trace_ = res.bounds_trace
        self.result_ = res
        self.n_features_in_ = len(shape)
        return self

    def predict(self, X):
        check_is_fitted(self, "tensor_")
        X = check_array(X, dtype=None)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        idx = X.astype(np.intp)
        if np.any(idx < 0) or np.any(idx >= np.array(self.tensor_.shape)):
            raise ValueError("index out of range")
        return self.tensor_[tuple(idx.T)]
