"""Dense tensors, CP factor composition and unfoldings.

Dense tensors are plain ``numpy.ndarray`` objects in C order, so the last
index varies fastest in the flat storage. CP factorizations are sequences of
2-d arrays sharing a column count ``k``; factor ``j`` has ``shape[j]`` rows.
Modes and entry indices are 0-based throughout the library API; the text
file formats use 1-based indices where indices appear at all.
"""

import math

import numpy as np

INDEX_MAX = np.iinfo(np.intp).max


def check_shape(shape):
    """Validate a tensor shape and return it as a tuple of ints."""
    try:
        dims = tuple(int(n) for n in shape)
    except TypeError:
        raise ValueError(f"shape must be a sequence of integers, got {shape!r}")
    if len(dims) < 1:
        raise ValueError("shape must have at least one dimension")
    if any(n < 1 for n in dims):
        raise ValueError(f"all dimensions must be positive, got {dims}")
    if math.prod(dims) > INDEX_MAX:
        raise ValueError(f"shape {dims} has more entries than the index type can hold")
    return dims


def check_tensor(T, shape=None):
    """Return ``T`` as a finite float ndarray, optionally checking its shape."""
    T = np.asarray(T, dtype=float)
    if T.ndim < 1:
        raise ValueError("a tensor needs at least one dimension")
    if shape is not None and T.shape != check_shape(shape):
        raise ValueError(f"tensor shape {T.shape} does not match {tuple(shape)}")
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor contains NaN or Inf")
    return T


def check_factors(factors, shape=None):
    """Validate a CP factorization and return it as a list of float arrays.

    Raises ``ValueError`` when the factors disagree on width or do not match
    ``shape`` row-wise.
    """
    factors = [np.asarray(U, dtype=float) for U in factors]
    if not factors:
        raise ValueError("a factorization needs at least one factor")
    for U in factors:
        if U.ndim != 2:
            raise ValueError(f"factors must be 2-d, got ndim={U.ndim}")
    widths = {U.shape[1] for U in factors}
    if len(widths) != 1:
        raise ValueError(f"factors have inconsistent widths {sorted(widths)}")
    if widths.pop() < 1:
        raise ValueError("factor width must be positive")
    if shape is not None:
        dims = check_shape(shape)
        rows = tuple(U.shape[0] for U in factors)
        if rows != dims:
            raise ValueError(f"factor row counts {rows} do not match shape {dims}")
    return factors


def factors_shape(factors):
    return tuple(U.shape[0] for U in factors)


def cp_compose(factors, shape=None):
    """Compose ``U1 o U2 o ... o Ud`` into a dense tensor.

    Entry ``(i1, ..., id)`` is ``sum_c prod_j U_j[i_j, c]``.

    Examples
    --------
    >>> ones = np.ones((2, 1))
    >>> cp_compose([ones, ones, ones]).shape
    (2, 2, 2)
    """
    factors = check_factors(factors, shape)
    k = factors[0].shape[1]
    out = np.ones((1, k))
    for U in factors:
        # Khatri-Rao accumulation with the newest mode varying fastest
        out = (out[:, None, :] * U[None, :, :]).reshape(-1, k)
    return out.sum(axis=1).reshape(factors_shape(factors))


def entries_at(factors, indices):
    """Evaluate the composed tensor at selected 0-based ``indices`` (m x d)."""
    indices = np.asarray(indices, dtype=np.intp)
    prod = factors[0][indices[:, 0]].copy()
    for j in range(1, len(factors)):
        prod *= factors[j][indices[:, j]]
    return prod.sum(axis=1)


def matricize_mode(T, mode):
    """Mode-``mode`` matricization ``X_(mode)`` (0-based mode).

    Column ordering follows the Kolda-Bader convention: among the remaining
    modes the lowest-numbered one varies fastest.
    """
    T = np.asarray(T, dtype=float)
    if not 0 <= mode < T.ndim:
        raise ValueError(f"mode {mode} out of range for order-{T.ndim} tensor")
    return np.reshape(np.moveaxis(T, mode, 0), (T.shape[mode], -1), order="F")


def unfold_balanced(T, j):
    """Balanced unfolding ``X_[j]``: the first ``j`` modes index the rows.

    Consistent with :func:`matricize_mode` so that ``unfold_balanced(T, 1)``
    equals ``matricize_mode(T, 0)``.
    """
    T = np.asarray(T, dtype=float)
    if not 1 <= j <= T.ndim - 1:
        raise ValueError(f"split {j} must lie in [1, {T.ndim - 1}]")
    rows = math.prod(T.shape[:j])
    return np.reshape(T, (rows, -1), order="F")


def fold_balanced(M, shape, j):
    """Inverse of :func:`unfold_balanced`."""
    dims = check_shape(shape)
    return np.reshape(np.asarray(M, dtype=float), dims, order="F")


def balanced_index_map(indices, shape, j):
    """Map tensor indices (m x d, 0-based) to ``X_[j]`` (row, column) pairs."""
    dims = check_shape(shape)
    indices = np.asarray(indices, dtype=np.intp)
    rows = np.ravel_multi_index(indices[:, :j].T, dims[:j], order="F")
    cols = np.ravel_multi_index(indices[:, j:].T, dims[j:], order="F")
    return np.stack([rows, cols], axis=1)


def balanced_index_unmap(pairs, shape, j):
    """Inverse of :func:`balanced_index_map`."""
    dims = check_shape(shape)
    pairs = np.asarray(pairs, dtype=np.intp)
    head = np.unravel_index(pairs[:, 0], dims[:j], order="F")
    tail = np.unravel_index(pairs[:, 1], dims[j:], order="F")
    return np.stack(head + tail, axis=1)


def inner(X, T):
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    if X.shape != T.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {T.shape}")
    return float(np.dot(X.ravel(), T.ravel()))


def frobenius(T):
    return math.sqrt(inner(T, T))


def infinity_norm(T):
    return float(np.max(np.abs(T)))


def random_low_rank(shape, r, factor_kind="gaussian", seed=None):
    """Draw a random rank-``r`` CP tensor rescaled to unit infinity norm.

    Factor entries are i.i.d. standard normal (``"gaussian"``) or uniform
    signs (``"sign"``). The rescaling is spread evenly over the factors, so
    the returned factors compose exactly to the returned tensor.

    Returns
    -------
    factors : list of ndarray
    T : ndarray
    """
    dims = check_shape(shape)
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    rng = np.random.default_rng(seed)
    if factor_kind == "gaussian":
        factors = [rng.standard_normal((n, r)) for n in dims]
    elif factor_kind == "sign":
        factors = [rng.choice([-1.0, 1.0], size=(n, r)) for n in dims]
    else:
        raise ValueError(f"unknown factor_kind {factor_kind!r}")
    T = cp_compose(factors)
    peak = infinity_norm(T)
    if peak == 0.0:
        # only reachable for sign factors whose columns cancel everywhere
        return random_low_rank(dims, r, factor_kind, rng.integers(2**63))
    scale = peak ** (-1.0 / len(dims))
    factors = [U * scale for U in factors]
    return factors, T / peak


def write_tns(path, T):
    """Write ``T`` in the ``.tns`` text format (order, dims, values)."""
    T = check_tensor(T)
    with open(path, "w") as fh:
        fh.write(f"{T.ndim}\n")
        fh.write(" ".join(str(n) for n in T.shape) + "\n")
        for v in T.ravel():
            fh.write(f"{v:.17g}\n")


def read_tns(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: truncated .tns header")
    d = int(lines[0])
    dims = check_shape(lines[1].split())
    if len(dims) != d:
        raise ValueError(f"{path}: header declares order {d} but lists {len(dims)} dims")
    values = np.array([float(v) for v in lines[2:]])
    if values.size != math.prod(dims):
        raise ValueError(f"{path}: expected {math.prod(dims)} values, found {values.size}")
    return check_tensor(values.reshape(dims))
