"""2D ISI storage channel: interleaver, level shift, blur mask, noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Mask2D:
    """Finite-support blurring mask; ``coefficients[k, l]`` is h(k, l)."""

    coefficients: np.ndarray = field(
        default_factory=lambda: np.full((2, 2), 0.25))

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.coefficients, dtype=np.float64))
        if h.ndim != 2 or not np.any(h != 0):
            raise ValueError("mask must be a 2D array with nonempty support")
        object.__setattr__(self, "coefficients", h)

    @property
    def support(self) -> list[tuple[int, int]]:
        return [tuple(int(i) for i in kl) for kl in np.argwhere(self.coefficients != 0)]

    @property
    def energy(self) -> float:
        return float(np.sum(self.coefficients ** 2))

    def padded(self, shape=(2, 2)) -> np.ndarray:
        h = self.coefficients
        if h.shape[0] > shape[0] or h.shape[1] > shape[1]:
            raise ValueError(f"mask {h.shape} exceeds {shape}")
        out = np.zeros(shape)
        out[:h.shape[0], :h.shape[1]] = h
        return out

    def transposed(self) -> "Mask2D":
        return Mask2D(self.coefficients.T.copy())


AVERAGING_MASK = Mask2D()


@dataclass(frozen=True)
class Permutation:
    """Pixel interleaver; output pixel i takes input pixel ``forward[i]``."""

    forward: np.ndarray
    seed: int | None = None

    @property
    def size(self) -> int:
        return len(self.forward)

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.forward)
        inv[self.forward] = np.arange(self.size)
        return inv


def make_interleaver(M: int, N: int, seed: int | np.random.Generator) -> Permutation:
    if M * N < 1:
        raise ValueError("empty image")
    rng = np.random.default_rng(seed)
    return Permutation(rng.permutation(M * N),
                       seed if isinstance(seed, (int, np.integer)) else None)


def _check_perm(plane: np.ndarray, perm: Permutation) -> None:
    if plane.size != perm.size:
        raise ValueError(f"plane has {plane.size} pixels, interleaver {perm.size}")


def interleave(plane: np.ndarray, perm: Permutation) -> np.ndarray:
    plane = np.asarray(plane)
    _check_perm(plane, perm)
    return plane.ravel()[perm.forward].reshape(plane.shape)


def deinterleave(plane: np.ndarray, perm: Permutation) -> np.ndarray:
    plane = np.asarray(plane)
    _check_perm(plane, perm)
    out = np.empty(plane.size, dtype=plane.dtype)
    out[perm.forward] = plane.ravel()
    return out.reshape(plane.shape)


def level_shift(bits: np.ndarray) -> np.ndarray:
    """{0, 1} -> {-1, +1}."""
    return 2.0 * np.asarray(bits, dtype=np.float64) - 1.0


def hard_bits(bipolar: np.ndarray) -> np.ndarray:
    """Inverse of :func:`level_shift`: sign to bit, ties go to 0."""
    return (np.asarray(bipolar) > 0).astype(np.int8)


def convolve2d(x: np.ndarray, mask: Mask2D = AVERAGING_MASK) -> np.ndarray:
    """r(m, n) = sum h(k, l) x(m-k, n-l) over the support, zero padded.

    The output keeps the input's M x N footprint.
    """
    x = np.asarray(x, dtype=np.float64)
    h = mask.coefficients
    M, N = x.shape
    if M < h.shape[0] or N < h.shape[1]:
        raise ValueError("image smaller than mask")
    out = np.zeros((M, N))
    for k, l in mask.support:
        out[k:, l:] += h[k, l] * x[:M - k, :N - l]
    return out


def sigma_for_snr(snr_db: float, filtered: np.ndarray) -> float:
    """Noise standard deviation giving ``10 log10(var[filtered] / sigma^2) = snr_db``."""
    var = float(np.var(filtered))
    if var <= 0.0:
        raise ValueError("filtered plane has zero variance; SNR undefined")
    return float(np.sqrt(var * 10.0 ** (-snr_db / 10.0)))


def add_awgn(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + rng.normal(0.0, sigma, size=x.shape)


def bsc_corrupt(bits: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= p <= 1.0:
        raise ValueError("crossover probability must lie in [0, 1]")
    bits = np.asarray(bits, dtype=np.int8)
    flips = rng.random(bits.shape) < p
    return bits ^ flips.astype(np.int8)
