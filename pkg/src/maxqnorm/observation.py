"""Noisy entry sampling: index distributions, noise, train/validation splits."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import check_shape, check_tensor, frobenius


@dataclass(frozen=True)
class SamplingDistribution:
    """Distribution over tensor entries from which indices are drawn.

    ``weights`` is a flat vector in C order (last index fastest) and is only
    used for ``kind="explicit"``. ``mu`` is carried as metadata for the lower
    bound ``pi_w >= 1 / (mu * prod(shape))``; it does not affect sampling.
    """

    shape: tuple
    kind: str = "uniform"
    weights: np.ndarray = None
    mu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "shape", check_shape(self.shape))
        if self.kind == "uniform":
            return
        if self.kind != "explicit":
            raise ValueError(f"unknown sampling kind {self.kind!r}")
        if self.weights is None:
            raise ValueError("explicit sampling needs weights")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size != math.prod(self.shape):
            raise ValueError(f"expected {math.prod(self.shape)} weights, got {w.size}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)

    def probabilities(self):
        if self.kind == "uniform":
            return np.full(math.prod(self.shape), 1.0 / math.prod(self.shape))
        return self.weights

    def max_weight(self):
        return float(self.probabilities().max())


@dataclass(frozen=True)
class ObservationSet:
    """``m`` observation slots: 0-based indices (m x d) and their values.

    Indices may repeat; each slot is a separate noisy measurement.
    """

    shape: tuple
    indices: np.ndarray
    values: np.ndarray
    sigma: float = 0.0
    slots: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        shape = check_shape(self.shape)
        idx = np.asarray(self.indices, dtype=np.intp).reshape(-1, len(shape))
        vals = np.asarray(self.values, dtype=float).ravel()
        if idx.shape[0] != vals.size:
            raise ValueError(f"{idx.shape[0]} indices but {vals.size} values")
        if idx.size and (np.any(idx < 0) or np.any(idx >= np.array(shape))):
            raise ValueError("observation index out of range for shape")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        slots = np.arange(vals.size) if self.slots is None else np.asarray(self.slots)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "slots", slots)

    def __len__(self):
        return self.values.size

    @property
    def m(self):
        return self.values.size

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        return ObservationSet(self.shape, self.indices[rows], self.values[rows],
                              self.sigma, self.slots[rows])


def draw_indices(dist, m, seed=None):
    """Draw ``m`` indices i.i.d. from ``dist`` (with replacement)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = np.random.default_rng(seed)
    n = math.prod(dist.shape)
    if dist.kind == "uniform":
        flat = rng.integers(0, n, size=m)
    else:
        flat = rng.choice(n, size=m, p=dist.probabilities())
    return np.stack(np.unravel_index(flat, dist.shape), axis=1).astype(np.intp).reshape(m, len(dist.shape))


def observe(T, indices, sigma=0.0, seed=None):
    """Noisy readings ``T[w_t] + sigma * xi_t`` with ``xi_t ~ N(0, 1)``."""
    T = check_tensor(T)
    idx = np.asarray(indices, dtype=np.intp).reshape(-1, T.ndim)
    clean = T[tuple(idx.T)]
    if sigma > 0:
        noise = np.random.default_rng(seed).standard_normal(clean.size)
        clean = clean + sigma * noise
    return ObservationSet(T.shape, idx, clean, sigma)


def full_observation(T):
    """Every entry of ``T`` observed once, noiselessly."""
    T = check_tensor(T)
    idx = np.stack(np.unravel_index(np.arange(T.size), T.shape), axis=1)
    return ObservationSet(T.shape, idx, T.ravel().copy(), 0.0)


def split_train_validate(obs, fraction=0.8, seed=None):
    """Randomly partition the observation slots; train gets ``round(fraction*m)``."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if obs.m < 2:
        raise ValueError(f"cannot split {obs.m} observations")
    n_train = min(max(int(round(fraction * obs.m)), 1), obs.m - 1)
    perm = np.random.default_rng(seed).permutation(obs.m)
    return obs.subset(np.sort(perm[:n_train])), obs.subset(np.sort(perm[n_train:]))


def noise_level_from_db(T, snr_db):
    """Noise standard deviation giving ``snr_db`` against the mean-square of ``T``."""
    T = check_tensor(T)
    power = frobenius(T) ** 2 / T.size
    if power == 0.0:
        raise ValueError("signal-to-noise ratio is undefined for the zero tensor")
    return math.sqrt(power / 10.0 ** (snr_db / 10.0))


def write_observations_csv(path, obs):
    d = len(obs.shape)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{j + 1}" for j in range(d)] + ["value"])
        for row, v in zip(obs.indices, obs.values):
            writer.writerow([int(i) + 1 for i in row] + [f"{v:.17g}"])


def read_observations_csv(path, shape):
    """Read an observation CSV (1-based indices) into an :class:`ObservationSet`."""
    shape = check_shape(shape)
    d = len(shape)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        expected = [f"i{j + 1}" for j in range(d)] + ["value"]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: header {header} does not match {expected}")
        idx, vals = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields")
            try:
                idx.append([int(x) - 1 for x in row[:d]])
                vals.append(float(row[d]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unparsable row {row}")
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{path}: non-finite observation value")
    return ObservationSet(shape, np.array(idx, dtype=np.intp).reshape(-1, d), np.array(vals))
