"""First-order solvers for max-qnorm constrained least squares.

All three minimize the mean squared residual over the observed slots,

    L(V_1, ..., V_d) = (1/m) sum_t ((V_1 o ... o V_d)[w_t] - y_t)**2,

subject to ``two_inf_norm(V_j) <= R**(1/d)`` for every factor. Only the
``m`` observed entries are ever composed.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .norms import QnormBound, project_rows, two_inf_norm
from .tensor_core import check_factors

logger = logging.getLogger(__name__)

METHODS = ("pgd", "pqn", "sgd")


@dataclass(frozen=True)
class SolverParams:
    method: str = "pqn"
    max_iters: int = 2000
    step_init: float = 1.0
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    tol_rel_loss: float = 1e-9
    patience: int = 5
    batch_size: int = 64
    lbfgs_memory: int = 10
    spg_iters: int = 10
    nonmonotone_window: int = 10
    target_loss: float = 1e-30
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.max_iters < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("max_iters, batch_size and patience must be positive")
        if self.lbfgs_memory < 0 or self.spg_iters < 1 or self.nonmonotone_window < 1:
            raise ValueError("invalid quasi-Newton settings")
        if self.step_init <= 0 or self.tol_rel_loss <= 0 or self.target_loss < 0:
            raise ValueError("step_init and tol_rel_loss must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise ValueError("armijo_c and armijo_shrink must lie in (0, 1)")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class SolverState:
    """Final iterate of a solver run with its diagnostics."""

    factors: list
    loss: float
    iter: int
    loss_trace: list = field(default_factory=list)
    bound: float = np.inf
    converged: bool = False
    method: str = ""

    def feasibility_gap(self):
        """How far the worst factor exceeds the per-factor bound (<= 0 if feasible)."""
        return max(two_inf_norm(U) for U in self.factors) - self.bound


class _Objective:
    """Loss and gradients on the stacked factor matrix ``X = [V_1; ...; V_d]``.

    All factors share the column count, so the stack is a single
    ``sum(shape) x k`` array and the feasible set is a row-norm ball on it.
    """

    def __init__(self, obs, shape=None):
        self.shape = tuple(obs.shape) if shape is None else tuple(shape)
        if tuple(obs.shape) != self.shape:
            raise ValueError(f"observations are for shape {obs.shape}, not {self.shape}")
        if obs.m < 1:
            raise ValueError("need at least one observation")
        self.m = obs.m
        self.y = obs.values
        self.offsets = np.concatenate([[0], np.cumsum(self.shape)])
        self.rows = obs.indices + self.offsets[:-1]
        d = len(self.shape)
        # maps the (mode, slot) pairs of a stacked (d*m x k) array onto factor rows
        self.scatter = sp.csr_matrix(
            (np.ones(d * self.m), (self.rows.T.ravel(), np.arange(d * self.m))),
            shape=(self.offsets[-1], d * self.m))

    def stack(self, factors):
        return np.vstack(factors)

    def unstack(self, X):
        return [X[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def _gather(self, X):
        return [X[self.rows[:, j]] for j in range(self.rows.shape[1])]

    def loss(self, X):
        P = self._gather(X)
        acc = P[0].copy()
        for Pj in P[1:]:
            acc *= Pj
        r = acc.sum(axis=1) - self.y
        return float(r @ r) / self.m

    def loss_and_grad(self, X):
        P = self._gather(X)  # d arrays of shape m x k
        d = len(P)
        # leave-one-out products avoid dividing by possibly-zero entries
        loo = np.empty((d,) + P[0].shape)
        loo[0] = 1.0
        for j in range(1, d):
            np.multiply(loo[j - 1], P[j - 1], out=loo[j])
        r = (loo[d - 1] * P[d - 1]).sum(axis=1) - self.y
        acc = P[d - 1].copy()
        for j in range(d - 2, -1, -1):
            loo[j] *= acc
            acc *= P[j]
        loo *= (2.0 / self.m) * r[:, None]
        grad = self.scatter @ loo.reshape(d * self.m, -1)
        return float(r @ r) / self.m, grad


def loss(factors, obs):
    """Mean squared residual of the composed factors on the observed slots."""
    factors = check_factors(factors, obs.shape)
    obj = _Objective(obs)
    return obj.loss(obj.stack(factors))


def loss_gradient(factors, obs, mode):
    """Gradient of :func:`loss` with respect to factor ``mode`` (0-based)."""
    factors = check_factors(factors, obs.shape)
    if not 0 <= mode < len(factors):
        raise ValueError(f"mode {mode} out of range")
    obj = _Objective(obs)
    return obj.unstack(obj.loss_and_grad(obj.stack(factors))[1])[mode]


def _resolve_bound(bound, d):
    if isinstance(bound, QnormBound):
        return bound.R ** (1.0 / d)
    R = float(bound)
    if R <= 0:
        raise ValueError("max-qnorm bound must be positive")
    return R ** (1.0 / d)


def initial_factors(shape, k, R, seed=None):
    """Random feasible start whose 2,inf-norm product is ``R / 2``."""
    rng = np.random.default_rng(seed)
    target = (R / 2.0) ** (1.0 / len(shape))
    out = []
    for n in shape:
        U = rng.standard_normal((n, k))
        out.append(U * (target / two_inf_norm(U)))
    return out


def _start(obj, R, k, params, init):
    d = len(obj.shape)
    b = _resolve_bound(R, d)
    if init is None:
        factors = initial_factors(obj.shape, k, b ** d, params.seed)
    else:
        factors = check_factors(init, obj.shape)
    return project_rows(obj.stack(factors), b), b


class _Stopper:
    def __init__(self, params):
        self.tol = params.tol_rel_loss
        self.patience = params.patience
        self.target = params.target_loss
        self.quiet = 0

    def update(self, prev, cur):
        if cur <= self.target:
            return True
        rel = (prev - cur) / max(prev, 1e-300)
        self.quiet = self.quiet + 1 if rel < self.tol else 0
        return self.quiet >= self.patience


def _state(obj, X, f, it, trace, b, converged, method):
    return SolverState(obj.unstack(X.copy()), f, it, trace, b, converged, method)


def solve_pgd(obs, R, k, params=None, init=None):
    """Projected gradient with simultaneous factor updates and Armijo backtracking.

    Each iteration moves every factor along its own gradient with a common
    step, projects the rows onto the 2,inf ball and backtracks until the
    Armijo condition along the projection arc holds. After an accepted step
    the next trial step is enlarged by ``1/armijo_shrink``.
    """
    params = params or SolverParams(method="pgd")
    obj = _Objective(obs)
    X, b = _start(obj, R, k, params, init)
    f, G = obj.loss_and_grad(X)
    trace = [f]
    gamma = params.step_init
    stop = _Stopper(params)
    converged = f <= params.target_loss
    it = 0
    while not converged and it < params.max_iters:
        it += 1
        while True:
            Xn = project_rows(X - gamma * G, b)
            fn = obj.loss(Xn)
            if fn <= f + params.armijo_c * float(np.vdot(G, Xn - X)):
                break
            gamma *= params.armijo_shrink
            if gamma < 1e-20:
                Xn = None
                break
        if Xn is None:
            converged = True
            break
        prev = f
        X = Xn
        f, G = obj.loss_and_grad(X)
        trace.append(f)
        gamma /= params.armijo_shrink
        converged = stop.update(prev, f)
    return _state(obj, X, f, it, trace, b, converged, "pgd")


class _LBFGS:
    """Compact limited-memory BFGS Hessian approximation ``B = theta*I - W M W^T``."""

    def __init__(self, memory, theta=1.0):
        self.memory = memory
        self.S = []
        self.Y = []
        self.theta = theta
        self._W = None
        self._M = None

    def update(self, s, y):
        if self.memory == 0:
            return
        sy = float(np.vdot(s, y))
        if sy <= 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            return
        self.S.append(s.ravel())
        self.Y.append(y.ravel())
        if len(self.S) > self.memory:
            self.S.pop(0)
            self.Y.pop(0)
        self.theta = float(np.vdot(y, y)) / sy
        S = np.array(self.S).T
        Y = np.array(self.Y).T
        SY = S.T @ Y
        L = np.tril(SY, -1)
        D = np.diag(np.diag(SY))
        middle = np.block([[self.theta * (S.T @ S), L], [L.T, -D]])
        self._W = np.hstack([self.theta * S, Y])
        self._M = np.linalg.inv(middle)

    def matvec(self, v):
        out = self.theta * v
        if self._W is not None:
            out -= (self._W @ (self._M @ (self._W.T @ v.ravel()))).reshape(v.shape)
        return out


def _spg_quadratic(x, g, hess, project, iters, tol=1e-12):
    """Minimize ``<g, p-x> + 0.5 <p-x, B(p-x)>`` over the feasible set by SPG.

    Uses exact line search along each feasible segment and Barzilai-Borwein
    step lengths; with ``B = I`` the first iterate is ``project(x - g)``.
    """
    p = x
    alpha = 1.0 / hess.theta
    for _ in range(iters):
        gq = g + hess.matvec(p - x)
        dp = project(p - alpha * gq) - p
        if np.max(np.abs(dp)) <= tol:
            break
        Bdp = hess.matvec(dp)
        curv = float(np.vdot(dp, Bdp))
        slope = float(np.vdot(gq, dp))
        t = 1.0 if curv <= 0 else min(1.0, -slope / curv)
        if t <= 0:
            break
        p = p + t * dp
        alpha = float(np.vdot(dp, dp)) / curv if curv > 0 else 1.0 / hess.theta
    return p


def solve_pqn(obs, R, k, params=None, init=None):
    """Projected quasi-Newton on the stacked factor matrix.

    A limited-memory BFGS model of the loss is minimized over the feasible
    set by an inner spectral projected gradient loop; the outer step
    backtracks along the resulting feasible direction under a non-monotone
    Armijo rule. The returned iterate and ``loss_trace`` track the best loss
    seen, so the trace is nonincreasing.
    """
    params = params or SolverParams(method="pqn")
    obj = _Objective(obs)
    X, b = _start(obj, R, k, params, init)

    def project(Z):
        return project_rows(Z, b)

    f, G = obj.loss_and_grad(X)
    hess = _LBFGS(params.lbfgs_memory, theta=1.0 / params.step_init)
    history = [f]
    best_X, best_f = X, f
    trace = [f]
    stop = _Stopper(params)
    converged = f <= params.target_loss
    it = 0
    while not converged and it < params.max_iters:
        it += 1
        direction = _spg_quadratic(X, G, hess, project, params.spg_iters) - X
        slope = float(np.vdot(G, direction))
        if slope >= 0:
            # model step is not a descent direction; restart from a gradient step
            hess = _LBFGS(params.lbfgs_memory, theta=hess.theta)
            direction = project(X - G / hess.theta) - X
            slope = float(np.vdot(G, direction))
            if slope >= 0:
                converged = True
                break
        f_ref = max(history[-params.nonmonotone_window:])
        t = 1.0
        while True:
            Xn = X + t * direction
            fn = obj.loss(Xn)
            if fn <= f_ref + params.armijo_c * t * slope:
                break
            t *= params.armijo_shrink
            if t < 1e-20:
                Xn = None
                break
        if Xn is None:
            converged = True
            break
        fn, Gn = obj.loss_and_grad(Xn)
        hess.update(Xn - X, Gn - G)
        X, f, G = Xn, fn, Gn
        history.append(f)
        prev = best_f
        if f < best_f:
            best_X, best_f = X, f
        trace.append(best_f)
        converged = stop.update(prev, best_f)
    return _state(obj, best_X, best_f, it, trace, b, converged, "pqn")


def solve_sgd(obs, R, k, params=None, init=None):
    """Stochastic projected gradient over mini-batches of observation slots.

    Each epoch visits the slots in a fresh random order in batches of
    ``batch_size``; step ``t`` uses ``step_init / sqrt(t)`` and only rows
    touched by the batch are projected. ``loss_trace`` holds the full loss
    after every epoch.
    """
    params = params or SolverParams(method="sgd")
    obj = _Objective(obs)
    if params.batch_size > obj.m:
        raise ValueError(f"batch_size {params.batch_size} exceeds m={obj.m}")
    X, b = _start(obj, R, k, params, init)
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, 1]))
    f = obj.loss(X)
    trace = [f]
    stop = _Stopper(params)
    step = 0
    converged = f <= params.target_loss
    epoch = 0
    d = len(obj.shape)
    while not converged and epoch < params.max_iters:
        epoch += 1
        order = rng.permutation(obj.m)
        for start in range(0, obj.m, params.batch_size):
            batch = order[start:start + params.batch_size]
            step += 1
            gamma = params.step_init / np.sqrt(step)
            rows = obj.rows[batch]
            P = X[rows]
            prod = P.prod(axis=1)
            weights = (2.0 / batch.size) * (prod.sum(axis=1) - obj.y[batch])
            grads = np.empty_like(P)
            for j in range(d):
                grads[:, j] = weights[:, None] * np.delete(P, j, axis=1).prod(axis=1)
            touched, inverse = np.unique(rows.ravel(), return_inverse=True)
            step_rows = np.zeros((touched.size, X.shape[1]))
            np.add.at(step_rows, inverse, grads.reshape(-1, X.shape[1]))
            X[touched] = project_rows(X[touched] - gamma * step_rows, b)
        prev = f
        f = obj.loss(X)
        trace.append(f)
        if not np.isfinite(f):
            logger.warning("sgd diverged at epoch %d", epoch)
            break
        converged = stop.update(prev, f) and f <= prev
    return _state(obj, X, f, epoch, trace, b, converged, "sgd")


_DISPATCH = {"pgd": solve_pgd, "pqn": solve_pqn, "sgd": solve_sgd}


def solve(obs, R, k, params=None, init=None):
    """Run the solver named by ``params.method``."""
    params = params or SolverParams()
    return _DISPATCH[params.method](obs, R, k, params, init)
