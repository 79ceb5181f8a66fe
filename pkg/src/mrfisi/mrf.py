"""First-order binary Ising model on a torus and exchange-dynamics sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np


def alpha_from_priors(p0: float, beta: float) -> float:
    """External-field coefficient for a source with Pr{pixel = 0} = p0.

    Returns ``0.25 * ln(p0 / p1) - 2 * beta``; equiprobable sources give
    exactly ``-2 * beta``.
    """
    if not 0.0 < p0 < 1.0:
        raise ValueError(f"p0 must lie in (0, 1), got {p0}")
    return 0.25 * math.log(p0 / (1.0 - p0)) - 2.0 * beta


@dataclass(frozen=True)
class IsingParams:
    alpha: float
    beta: float
    p0: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")

    @property
    def p1(self) -> float:
        return 1.0 - self.p0

    @classmethod
    def from_priors(cls, beta: float, p0: float = 0.5) -> "IsingParams":
        return cls(alpha=alpha_from_priors(p0, beta), beta=beta, p0=p0)


def _check_site(image: np.ndarray, m: int, n: int) -> None:
    M, N = image.shape
    if not (0 <= m < M and 0 <= n < N):
        raise IndexError(f"site ({m}, {n}) outside {M}x{N} image")


@numba.njit(cache=True)
def _nsum(f, m, n):
    M, N = f.shape
    return (f[m, (n - 1) % N] + f[m, (n + 1) % N]
            + f[(m - 1) % M, n] + f[(m + 1) % M, n])


def neighbor_sum(image: np.ndarray, m: int, n: int) -> int:
    """Sum of the four first-order neighbours with toroidal wrap."""
    _check_site(image, m, n)
    return int(_nsum(np.asarray(image, dtype=np.int8), m, n))


def neighbor_sums(image: np.ndarray) -> np.ndarray:
    f = np.asarray(image, dtype=np.int64)
    return (np.roll(f, 1, 0) + np.roll(f, -1, 0)
            + np.roll(f, 1, 1) + np.roll(f, -1, 1))


def ising_energy(f: int, v: int, params: IsingParams) -> float:
    return f * (params.alpha + params.beta * v)


def total_energy(image: np.ndarray, alpha, beta: float) -> float:
    """Global Ising energy, each nearest-neighbour bond counted once.

    ``alpha`` may be a scalar or a per-pixel plane. Flipping one pixel
    changes this quantity by ``(1 - 2f) * (alpha + beta * v)``, which is
    the local conditional energy difference used by the samplers.
    """
    f = np.asarray(image, dtype=np.float64)
    bonds = f * np.roll(f, -1, 0) + f * np.roll(f, -1, 1)
    return float(np.sum(alpha * f) + beta * bonds.sum())


def conditional_prob_one(v, alpha_eff, beta, T):
    """Gibbs conditional Pr{f = 1 | neighbours}; vectorises over arrays."""
    if np.any(np.asarray(T) <= 0):
        raise ValueError("temperature must be positive")
    x = -(np.asarray(alpha_eff) + np.asarray(beta) * np.asarray(v)) / np.asarray(T)
    # logistic without overflow for large |x|
    out = np.exp(-np.logaddexp(0.0, -x))
    return float(out) if np.ndim(out) == 0 else out


def flip_energy_delta(image: np.ndarray, site, alpha_eff: float, beta: float) -> float:
    m, n = site
    _check_site(image, m, n)
    f = int(image[m, n])
    v = neighbor_sum(image, m, n)
    return (1 - 2 * f) * (alpha_eff + beta * v)


@numba.njit(cache=True)
def _swap_delta(f, ma, na, mb, nb, alpha, beta):
    a = f[ma, na]
    b = f[mb, nb]
    if a == b:
        return 0.0
    # two sequential single-pixel flips; the second sees the first, which
    # takes care of adjacent (overlapping-neighbourhood) pairs
    d = (1 - 2 * a) * (alpha + beta * _nsum(f, ma, na))
    f[ma, na] = b
    d += (1 - 2 * b) * (alpha + beta * _nsum(f, mb, nb))
    f[ma, na] = a
    return d


def swap_energy_delta(image: np.ndarray, site_a, site_b, params: IsingParams) -> float:
    """Energy change from exchanging the values at two distinct pixels."""
    (ma, na), (mb, nb) = site_a, site_b
    _check_site(image, ma, na)
    _check_site(image, mb, nb)
    if (ma, na) == (mb, nb):
        raise ValueError("swap requires two distinct sites")
    f = np.array(image, dtype=np.int8)
    return float(_swap_delta(f, ma, na, mb, nb, params.alpha, params.beta))


@numba.njit(cache=True)
def _exchange_sweeps(f, alpha, beta, n_proposals, rng):
    M, N = f.shape
    size = M * N
    for _ in range(n_proposals):
        i = int(rng.random() * size)
        j = int(rng.random() * (size - 1))
        if j >= i:
            j += 1
        ma, na = i // N, i % N
        mb, nb = j // N, j % N
        if f[ma, na] == f[mb, nb]:
            continue
        d = _swap_delta(f, ma, na, mb, nb, alpha, beta)
        if d < 0.0 or rng.random() < math.exp(-d):
            t = f[ma, na]
            f[ma, na] = f[mb, nb]
            f[mb, nb] = t


def generate_mrf(M: int, N: int, params: IsingParams, sweeps: int = 200,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Sample a binary MRF by Metropolis pixel exchanges at unit temperature.

    Starts from exactly ``round(p1 * M * N)`` ones at random positions; the
    exchange moves keep that count fixed.
    """
    if M < 2 or N < 2:
        raise ValueError("image must be at least 2x2")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    size = M * N
    ones = int(round(params.p1 * size))
    flat = np.zeros(size, dtype=np.int8)
    flat[rng.permutation(size)[:ones]] = 1
    f = flat.reshape(M, N)
    _exchange_sweeps(f, float(params.alpha), float(params.beta), sweeps * size, rng)
    return f


def agreement_fraction(image: np.ndarray) -> float:
    """Fraction of toroidal nearest-neighbour bonds joining equal pixels."""
    f = np.asarray(image)
    same = (f == np.roll(f, -1, 0)).sum() + (f == np.roll(f, -1, 1)).sum()
    return same / (2 * f.size)
