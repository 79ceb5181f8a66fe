"""Soft-input/soft-output MRF detector built on annealed stochastic relaxation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .mrf import IsingParams, _nsum, flip_energy_delta, neighbor_sums


@dataclass(frozen=True)
class ConditionalStats:
    mu_plus: float
    mu_minus: float
    var_plus: float
    var_minus: float
    n_plus: int
    n_minus: int


def conditional_stats(L_in: np.ndarray) -> ConditionalStats:
    """Per-class sample mean and population variance, classes split by sign.

    When every pixel falls into one class the other class mirrors it
    (``mu = -mu`` with the same variance).
    """
    L = np.asarray(L_in, dtype=np.float64).ravel()
    if L.size == 0:
        raise ValueError("empty plane")
    pos = L[L > 0]
    neg = L[L <= 0]
    if pos.size == 0:
        mu_m, var_m = float(neg.mean()), float(neg.var())
        mu_p, var_p = -mu_m, var_m
    elif neg.size == 0:
        mu_p, var_p = float(pos.mean()), float(pos.var())
        mu_m, var_m = -mu_p, var_p
    else:
        mu_p, var_p = float(pos.mean()), float(pos.var())
        mu_m, var_m = float(neg.mean()), float(neg.var())
    return ConditionalStats(mu_p, mu_m, var_p, var_m, int(pos.size), int(neg.size))


def scale_to_noisy_image(L_in: np.ndarray, stats: ConditionalStats):
    """Affine map of the LLR plane onto a 'noisy image' with class means 0 and 1.

    Returns ``(G, sigma_G2)``.
    """
    spread = stats.mu_plus - stats.mu_minus
    if spread == 0:
        raise ValueError("degenerate input: class means coincide")
    G = (np.asarray(L_in, dtype=np.float64) - stats.mu_minus) / spread
    n = stats.n_plus + stats.n_minus
    sigma_G2 = ((stats.n_plus * stats.var_plus + stats.n_minus * stats.var_minus)
                / (n * spread ** 2))
    return G, sigma_G2


@dataclass(frozen=True)
class AnnealSchedule:
    """Logarithmic cooling T(t) = C / ln(1 + t), 1 <= t <= t_max."""

    C: float = 3.0
    t_max: int = 300

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")

    def temperature(self, t: int) -> float:
        return anneal_temperature(t, self)

    @property
    def final_temperature(self) -> float:
        # with t_max == 0 there is no sweep; fall back to T(1)
        return anneal_temperature(max(self.t_max, 1), self)


def anneal_temperature(t: int, schedule: AnnealSchedule) -> float:
    if t < 1:
        raise ValueError("annealing time starts at t = 1")
    return schedule.C / math.log1p(t)


def posterior_flip_delta(F_hat: np.ndarray, G: np.ndarray, site, alpha_eff: float,
                         beta: float, sigma_G2: float) -> float:
    """Change of the posterior energy when the pixel at ``site`` is inverted.

    ``alpha_eff`` is the site's external field after folding in its input
    LLR, i.e. ``alpha - L_in(site)``.
    """
    if not sigma_G2 > 0:
        raise ValueError("sigma_G2 must be positive")
    m, n = site
    f = int(F_hat[m, n])
    g = float(G[m, n])
    data = ((g - (1 - f)) ** 2 - (g - f) ** 2) / (2.0 * sigma_G2)
    return flip_energy_delta(F_hat, site, alpha_eff, beta) + data


@numba.njit(cache=True)
def _relax(f, G, alpha_eff, beta, inv2s2, C, t_max, rng):
    M, N = f.shape
    size = M * N
    two_size = 2 * size
    for t in range(t_max):
        T = C / math.log(t + 2.0)
        for _ in range(size):
            # one draw gives both the site and the fair-coin proposal
            k = int(rng.random() * two_size)
            proposal = k & 1
            m = (k >> 1) // N
            n = (k >> 1) % N
            cur = f[m, n]
            if proposal == cur:
                continue
            g = G[m, n]
            d = (1 - 2 * cur) * (alpha_eff[m, n] + beta * _nsum(f, m, n))
            d += ((g - proposal) ** 2 - (g - cur) ** 2) * inv2s2
            if d < 0.0 or rng.random() < math.exp(-d / T):
                f[m, n] = proposal


@numba.njit(cache=True)
def _relax_blurred(f, resid, h, alpha_eff, beta, inv2s2, C, t_max, rng):
    """Relaxation whose data term is ||r - h * (2f - 1)||^2 / 2 sigma^2.

    ``resid`` holds r - h * (2f - 1) for the current ``f`` and is updated
    in place on every accepted flip.
    """
    M, N = f.shape
    K, L = h.shape
    size = M * N
    two_size = 2 * size
    for t in range(t_max):
        T = C / math.log(t + 2.0)
        for _ in range(size):
            k = int(rng.random() * two_size)
            proposal = k & 1
            m = (k >> 1) // N
            n = (k >> 1) % N
            cur = f[m, n]
            if proposal == cur:
                continue
            delta = 2.0 * (proposal - cur)
            d = (1 - 2 * cur) * (alpha_eff[m, n] + beta * _nsum(f, m, n))
            data = 0.0
            for a in range(K):
                for b in range(L):
                    if m + a < M and n + b < N and h[a, b] != 0.0:
                        hd = h[a, b] * delta
                        data += hd * (hd - 2.0 * resid[m + a, n + b])
            d += data * inv2s2
            if d < 0.0 or rng.random() < math.exp(-d / T):
                f[m, n] = proposal
                for a in range(K):
                    for b in range(L):
                        if m + a < M and n + b < N:
                            resid[m + a, n + b] -= h[a, b] * delta


def blurred_relaxation(received: np.ndarray, mask, sigma_w: float, params: IsingParams,
                       schedule: AnnealSchedule, rng: np.random.Generator) -> np.ndarray:
    """Stochastic relaxation for a blurred bipolar observation.

    Minimises E_I(f) + ||r - h * (2f - 1)||^2 / (2 sigma_w^2), i.e. the
    restoration model with the blur operator inside the data term. Starts
    from the sign of ``received``.
    """
    from .channel import convolve2d

    r = np.asarray(received, dtype=np.float64)
    f = (r > 0).astype(np.int8)
    resid = r - convolve2d(2.0 * f - 1.0, mask)
    inv2s2 = 0.5 / max(sigma_w, 1e-150) ** 2
    alpha_eff = np.full(r.shape, float(params.alpha))
    _relax_blurred(f, resid, mask.coefficients, alpha_eff, float(params.beta), inv2s2,
                   float(schedule.C), int(schedule.t_max), rng)
    return f


def stochastic_relaxation(G: np.ndarray, sigma_G2: float, L_in: np.ndarray | None,
                          params: IsingParams, schedule: AnnealSchedule,
                          rng: np.random.Generator) -> np.ndarray:
    """Annealed Metropolis search for the MAP image under the posterior energy.

    Starts from ``G > 1/2``. Each sweep visits M*N sites drawn with
    replacement and proposes a fair-coin value; a differing proposal is
    accepted by the Metropolis rule at temperature T(t + 1). ``sigma_G2``
    may be ``inf`` to drop the quadratic data term.
    """
    G = np.asarray(G, dtype=np.float64)
    if L_in is None:
        L_in = np.zeros_like(G)
    L_in = np.asarray(L_in, dtype=np.float64)
    if L_in.shape != G.shape:
        raise ValueError("G and L_in differ in shape")
    if not sigma_G2 > 0:
        raise ValueError("sigma_G2 must be positive")
    f = (G > 0.5).astype(np.int8)
    alpha_eff = params.alpha - L_in
    inv2s2 = 0.0 if math.isinf(sigma_G2) else 0.5 / sigma_G2
    _relax(f, G, alpha_eff, float(params.beta), inv2s2, float(schedule.C),
           int(schedule.t_max), rng)
    return f


def mrf_soft_output(F_hat: np.ndarray, L_in: np.ndarray | None, params: IsingParams,
                    T_out: float) -> np.ndarray:
    """Extrinsic LLRs -(alpha + beta v) / T from the neighbourhoods of ``F_hat``.

    ``L_in`` is accepted for interface symmetry; the extrinsic output does
    not depend on it.
    """
    if not T_out > 0:
        raise ValueError("T_out must be positive")
    v = neighbor_sums(F_hat)
    if math.isinf(T_out):
        return np.zeros(v.shape)
    return -(params.alpha + params.beta * v) / T_out


@dataclass
class MrfOutput:
    estimate: np.ndarray
    extrinsic: np.ndarray
    G: np.ndarray
    sigma_G2: float


def mrf_detect(L_in: np.ndarray, params: IsingParams, schedule: AnnealSchedule,
               rng: np.random.Generator, T_out: float | None = None) -> MrfOutput:
    """One activation of the MRF SISO: stats, noisy image, relaxation, soft output."""
    stats = conditional_stats(L_in)
    G, s2 = scale_to_noisy_image(L_in, stats)
    if s2 <= 0:
        # perfectly separated classes; keep the data term finite but dominant
        s2 = 1e-12
    F_hat = stochastic_relaxation(G, s2, L_in, params, schedule, rng)
    T = schedule.final_temperature if T_out is None else T_out
    return MrfOutput(F_hat, mrf_soft_output(F_hat, L_in, params, T), G, s2)


def bsc_awgn_llr(g: np.ndarray, p: float, sigma_w: float) -> np.ndarray:
    """Exact channel LLR of a {0, 1} pixel seen through BSC(p) then AWGN.

    The observation density given the pixel is a two-component Gaussian
    mixture centred on the pixel value and its complement.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if not sigma_w > 0:
        raise ValueError("sigma_w must be positive")
    g = np.asarray(g, dtype=np.float64)
    q0 = -g ** 2 / (2.0 * sigma_w ** 2)
    q1 = -(g - 1.0) ** 2 / (2.0 * sigma_w ** 2)
    with np.errstate(divide="ignore"):
        keep, flip = math.log1p(-p) if p < 1 else -np.inf, math.log(p) if p > 0 else -np.inf
    l1 = np.logaddexp(keep + q1, flip + q0)
    l0 = np.logaddexp(keep + q0, flip + q1)
    return l1 - l0
