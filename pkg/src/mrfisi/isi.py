"""Iterative row-column soft-decision-feedback (IRCSDF) detector for 2x2 ISI.

Each row SISO runs an 8-state BCJR over a 3-row window (rows m, m+1, m+2).
The trellis state is column n-1 of the window, the input is column n, and
only row m is decided. The two pixels of row m-1 that touch r(m, n) enter
the branch metric softly, weighted by probabilities from the previously
decided row's LLRs. Column SISOs are row SISOs on the transposed problem.

LLRs are ln(Pr{+1} / Pr{-1}) throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .channel import AVERAGING_MASK, Mask2D

LLR_CLAMP = 50.0
NEG_INF = -np.inf


@dataclass(frozen=True)
class SisoConfig:
    sigma_w: float
    weight: float = 0.5
    p0: float = 0.5
    inner_iterations: int = 1
    mask: Mask2D = field(default=AVERAGING_MASK)

    def __post_init__(self):
        if not self.sigma_w > 0:
            raise ValueError("sigma_w must be positive")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("weight must lie in (0, 1]")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")

    @property
    def p1(self) -> float:
        return 1.0 - self.p0

    @property
    def prior_llr(self) -> float:
        return math.log(self.p1 / self.p0)


# --------------------------------------------------------------------------
# numba kernels

@numba.njit(cache=True, inline="always")
def _lse2(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@numba.njit(cache=True, inline="always")
def _log_sigmoid(x):
    if x > LLR_CLAMP:
        x = LLR_CLAMP
    elif x < -LLR_CLAMP:
        x = -LLR_CLAMP
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@numba.njit(cache=True)
def _log_metric(r0, r1, r2, obs1, obs2, p0, p1, p2, c0, c1, c2,
                fa_lp, fa_v, fb_lp, fb_v, h, inv2s2):
    """Log of p'(r | state, input, feedback) up to a branch-independent constant.

    p* are state (column n-1) values, c* input (column n) values for rows
    m, m+1, m+2. fa_* describe pixel (m-1, n) and fb_* pixel (m-1, n-1) as
    two-point distributions (log-probabilities and values).
    """
    base = r0 - h[0, 0] * c0 - h[0, 1] * p0
    t1 = -np.inf
    for ia in range(2):
        if fa_lp[ia] == -np.inf:
            continue
        for ib in range(2):
            if fb_lp[ib] == -np.inf:
                continue
            e = base - h[1, 0] * fa_v[ia] - h[1, 1] * fb_v[ib]
            t1 = _lse2(t1, fa_lp[ia] + fb_lp[ib] - e * e * inv2s2)
    out = t1
    if obs1:
        e = r1 - h[0, 0] * c1 - h[0, 1] * p1 - h[1, 0] * c0 - h[1, 1] * p0
        out -= e * e * inv2s2
    if obs2:
        e = r2 - h[0, 0] * c2 - h[0, 1] * p2 - h[1, 0] * c1 - h[1, 1] * p1
        out -= e * e * inv2s2
    return out


@numba.njit(cache=True)
def _lse_shifted(x, n):
    mx = -np.inf
    for i in range(n):
        if x[i] > mx:
            mx = x[i]
    if mx == -np.inf:
        return mx
    acc = 0.0
    for i in range(n):
        acc += math.exp(x[i] - mx)
    return mx + math.log(acc)


@numba.njit(cache=True)
def _line_bcjr(r3, obs, lprior, la, fb_lp, fb_v, h, inv2s2, alpha, beta):
    """BCJR over one 3-row window; returns the APP LLRs of the top row.

    r3: (3, N) received rows; obs: (3,) which window rows lie in the image
    (rows outside are pinned to the padding value 0). lprior: (3, 2) log
    prior of codes 0/1 per row. la: (3, N) a-priori LLRs. fb_lp, fb_v:
    (N+1, 2) feedback distributions for row m-1 at columns -1..N-1.
    alpha, beta: (N+1, 8) work arrays for the log state metrics; on return
    they hold normalised forward / backward metrics.
    """
    N = r3.shape[1]
    vals = np.zeros((3, 2))
    for j in range(3):
        if obs[j]:
            vals[j, 0] = -1.0
            vals[j, 1] = 1.0
    zero = np.zeros(2)
    lg = np.empty((N, 8, 8))
    lp = np.empty(8)
    # each inner product touches at most four window pixels, so the branch
    # metric is assembled from small per-column tables
    t1 = np.empty((2, 2))
    t2 = np.empty((2, 2, 2, 2))
    t3 = np.empty((2, 2, 2, 2))
    for n in range(N):
        pv = zero if n == 0 else vals[0]
        pv1 = zero if n == 0 else vals[1]
        pv2 = zero if n == 0 else vals[2]
        ext0 = np.zeros((3, 2))
        for j in range(3):
            if obs[j]:
                ext0[j, 0] = lprior[j, 0] + _log_sigmoid(-la[j, n])
                ext0[j, 1] = lprior[j, 1] + _log_sigmoid(la[j, n])
            else:
                ext0[j, 0] = lprior[j, 0]
                ext0[j, 1] = lprior[j, 1]
        for s in range(8):
            lp[s] = ext0[0, s & 1] + ext0[1, (s >> 1) & 1] + ext0[2, (s >> 2) & 1]
        for a in range(2):
            for b in range(2):
                t1[a, b] = _log_metric(r3[0, n], 0.0, 0.0, False, False,
                                       pv[a], 0.0, 0.0, vals[0, b], 0.0, 0.0,
                                       fb_lp[n + 1], fb_v[n + 1], fb_lp[n], fb_v[n],
                                       h, inv2s2)
        for a in range(2):
            for b in range(2):
                for c in range(2):
                    for d in range(2):
                        # (prev upper, cur upper, prev lower, cur lower)
                        if obs[1]:
                            e = (r3[1, n] - h[0, 0] * vals[1, d] - h[0, 1] * pv1[c]
                                 - h[1, 0] * vals[0, b] - h[1, 1] * pv[a])
                            t2[a, b, c, d] = -e * e * inv2s2
                        else:
                            t2[a, b, c, d] = 0.0
                        if obs[2]:
                            e = (r3[2, n] - h[0, 0] * vals[2, d] - h[0, 1] * pv2[c]
                                 - h[1, 0] * vals[1, b] - h[1, 1] * pv1[a])
                            t3[a, b, c, d] = -e * e * inv2s2
                        else:
                            t3[a, b, c, d] = 0.0
        for sp in range(8):
            q0 = sp & 1
            q1 = (sp >> 1) & 1
            q2 = (sp >> 2) & 1
            for s in range(8):
                if lp[s] == -np.inf or (n == 0 and sp != 0):
                    lg[n, sp, s] = -np.inf
                    continue
                c0 = s & 1
                c1 = (s >> 1) & 1
                c2 = (s >> 2) & 1
                lg[n, sp, s] = (lp[s] + t1[q0, c0] + t2[q0, c0, q1, c1]
                                + t3[q1, c1, q2, c2])

    # alpha[n+1] is the state after column n; alpha[0] the left padding
    tmp = np.empty(8)
    for s in range(8):
        alpha[0, s] = -np.inf
        beta[N, s] = -math.log(8.0)
    alpha[0, 0] = 0.0
    for n in range(N):
        for s in range(8):
            for sp in range(8):
                tmp[sp] = alpha[n, sp] + lg[n, sp, s]
            alpha[n + 1, s] = _lse_shifted(tmp, 8)
        tot = _lse_shifted(alpha[n + 1], 8)
        for s in range(8):
            alpha[n + 1, s] -= tot
    for n in range(N - 1, -1, -1):
        for sp in range(8):
            for s in range(8):
                tmp[s] = lg[n, sp, s] + beta[n + 1, s]
            beta[n, sp] = _lse_shifted(tmp, 8)
        tot = _lse_shifted(beta[n], 8)
        for sp in range(8):
            beta[n, sp] -= tot

    out = np.empty(N)
    one = np.empty(32)
    nil = np.empty(32)
    for n in range(N):
        k1 = 0
        k0 = 0
        for sp in range(8):
            for s in range(8):
                v = alpha[n, sp] + lg[n, sp, s] + beta[n + 1, s]
                if s & 1:
                    one[k1] = v
                    k1 += 1
                else:
                    nil[k0] = v
                    k0 += 1
        out[n] = _lse_shifted(one, 32) - _lse_shifted(nil, 32)
    return out


@numba.njit(cache=True)
def _feedback_dist(llr_row, have_row, fb_lp, fb_v):
    """Fill the (N+1, 2) feedback arrays from the previous row's LLRs."""
    N = llr_row.shape[0]
    fb_lp[0, 0] = 0.0
    fb_lp[0, 1] = -np.inf
    fb_v[0, 0] = 0.0
    fb_v[0, 1] = 0.0
    for n in range(N):
        if have_row:
            fb_lp[n + 1, 0] = _log_sigmoid(-llr_row[n])
            fb_lp[n + 1, 1] = _log_sigmoid(llr_row[n])
            fb_v[n + 1, 0] = -1.0
            fb_v[n + 1, 1] = 1.0
        else:
            fb_lp[n + 1, 0] = 0.0
            fb_lp[n + 1, 1] = -np.inf
            fb_v[n + 1, 0] = 0.0
            fb_v[n + 1, 1] = 0.0


@numba.njit(cache=True)
def _window(r, la, m, lp0, lp1):
    M, N = r.shape
    r3 = np.zeros((3, N))
    la3 = np.zeros((3, N))
    obs = np.zeros(3, dtype=np.bool_)
    lprior = np.empty((3, 2))
    for j in range(3):
        if m + j < M:
            obs[j] = True
            r3[j] = r[m + j]
            la3[j] = la[m + j]
            lprior[j, 0] = lp0
            lprior[j, 1] = lp1
        else:
            lprior[j, 0] = 0.0
            lprior[j, 1] = -np.inf
    return r3, la3, obs, lprior


@numba.njit(cache=True)
def _row_pass(r, la, lp0, lp1, h, inv2s2):
    """Top-to-bottom sweep; row m uses row m-1's fresh LLRs as feedback."""
    M, N = r.shape
    out = np.empty((M, N))
    fb_lp = np.empty((N + 1, 2))
    fb_v = np.empty((N + 1, 2))
    alpha = np.empty((N + 1, 8))
    beta = np.empty((N + 1, 8))
    for m in range(M):
        r3, la3, obs, lprior = _window(r, la, m, lp0, lp1)
        if m == 0:
            _feedback_dist(out[0], False, fb_lp, fb_v)
        else:
            _feedback_dist(out[m - 1], True, fb_lp, fb_v)
        out[m] = _line_bcjr(r3, obs, lprior, la3, fb_lp, fb_v, h, inv2s2,
                            alpha, beta)
    return out


# --------------------------------------------------------------------------
# Python-level API

def _prior_logs(p0: float) -> tuple[float, float]:
    return math.log(p0), math.log(1.0 - p0)


def _oriented(received, extrinsic, mask: Mask2D, direction: str):
    if direction == "row":
        return received, extrinsic, mask.padded()
    if direction == "column":
        return received.T, extrinsic.T, mask.transposed().padded()
    raise ValueError(f"direction must be 'row' or 'column', not {direction!r}")


def _check_finite(*planes):
    for p in planes:
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite values in detector input")


def branch_metric(r_vec, state, inputs, feedback, mask: Mask2D, sigma_w: float,
                  observed=(True, True)) -> float:
    """Channel likelihood factor p' of one trellis branch.

    ``r_vec`` = (r(m,n), r(m+1,n), r(m+2,n)); ``state`` and ``inputs`` are
    the bipolar pixels of columns n-1 and n for rows m..m+2; ``feedback`` =
    (LLR of pixel (m-1, n-1), LLR of pixel (m-1, n)). ``observed`` flags
    whether r(m+1, n) and r(m+2, n) exist.
    """
    if not sigma_w > 0:
        raise ValueError("sigma_w must be positive")
    h = mask.padded()
    fb_prev, fb_cur = (min(max(float(x), -LLR_CLAMP), LLR_CLAMP) for x in feedback)

    def dist(llr):
        return (np.array([_log_sigmoid(-llr), _log_sigmoid(llr)]),
                np.array([-1.0, 1.0]))

    fa_lp, fa_v = dist(fb_cur)
    fb_lp, fb_v = dist(fb_prev)
    lm = _log_metric(float(r_vec[0]), float(r_vec[1]), float(r_vec[2]),
                     bool(observed[0]), bool(observed[1]),
                     *map(float, state), *map(float, inputs),
                     fa_lp, fa_v, fb_lp, fb_v, h, 0.5 / sigma_w ** 2)
    return math.exp(lm)


def modified_gamma(metric: float, consistent: bool, inputs, extrinsic,
                   p0: float = 0.5) -> float:
    """gamma = p' * 1[s -> s' consistent] * prod P(u_j) * prod P(u_j | L~_j)."""
    if not consistent:
        return 0.0
    g = metric
    for i, L in zip(inputs, extrinsic):
        up = i > 0
        g *= (1.0 - p0) if up else p0
        g *= math.exp(_log_sigmoid(L if up else -L))
    return g


def siso_line_pass(received: np.ndarray, m: int, direction: str,
                   extrinsic_in: np.ndarray, feedback, cfg: SisoConfig,
                   return_metrics: bool = False):
    """APP LLRs of line ``m`` from one BCJR pass over lines m..m+2.

    ``feedback`` holds the LLRs of line m-1 (ignored for m == 0, where the
    line above is zero padding). ``extrinsic_in`` is the full a-priori LLR
    plane. With ``return_metrics`` the normalised forward and backward
    state probabilities, each of shape (N+1, 8), are returned as well.
    """
    received = np.asarray(received, dtype=np.float64)
    extrinsic_in = np.asarray(extrinsic_in, dtype=np.float64)
    if received.shape != extrinsic_in.shape:
        raise ValueError("received and extrinsic planes differ in shape")
    r, la, h = _oriented(received, extrinsic_in, cfg.mask, direction)
    M, N = r.shape
    if not 0 <= m < M:
        raise IndexError(f"line {m} outside 0..{M - 1}")
    fb = np.zeros(N) if feedback is None else np.asarray(feedback, dtype=np.float64)
    _check_finite(r, la)
    # infinite feedback LLRs are allowed: they encode known pixels
    if np.any(np.isnan(fb)) or fb.shape != (N,):
        raise ValueError("feedback must be N LLRs without NaN")
    fb = np.clip(fb, -LLR_CLAMP, LLR_CLAMP)
    r = np.ascontiguousarray(r)
    la = np.ascontiguousarray(la)
    lp0, lp1 = _prior_logs(cfg.p0)
    r3, la3, obs, lprior = _window(r, la, m, lp0, lp1)
    fb_lp = np.empty((N + 1, 2))
    fb_v = np.empty((N + 1, 2))
    _feedback_dist(fb, m > 0, fb_lp, fb_v)
    alpha = np.empty((N + 1, 8))
    beta = np.empty((N + 1, 8))
    out = _line_bcjr(r3, obs, lprior, la3, fb_lp, fb_v, h,
                     0.5 / cfg.sigma_w ** 2, alpha, beta)
    if return_metrics:
        return out, np.exp(alpha), np.exp(beta)
    return out


def siso_pass(received: np.ndarray, apriori: np.ndarray, cfg: SisoConfig,
              direction: str = "row") -> np.ndarray:
    """Full row (or column) sweep with soft-decision feedback; APP LLR plane."""
    r, la, h = _oriented(np.asarray(received, dtype=np.float64),
                         np.asarray(apriori, dtype=np.float64), cfg.mask, direction)
    lp0, lp1 = _prior_logs(cfg.p0)
    out = _row_pass(np.ascontiguousarray(r), np.ascontiguousarray(la),
                    lp0, lp1, h, 0.5 / cfg.sigma_w ** 2)
    return out.T if direction == "column" else out


@dataclass
class IsiState:
    """Column-to-row message carried between calls of :func:`run_ircsdfa`."""

    column_extrinsic: np.ndarray
    total: np.ndarray | None = None


def run_ircsdfa(received: np.ndarray, extrinsic_in: np.ndarray, cfg: SisoConfig,
                state: IsiState | None = None) -> tuple[np.ndarray, IsiState]:
    """Run ``cfg.inner_iterations`` row+column iterations.

    ``extrinsic_in`` is the a-priori LLR plane from the peer detector, in
    interleaved (channel) order. Messages between the row and column SISOs
    are their extrinsic LLRs with the source prior removed, scaled by
    ``cfg.weight``. Returns ``(total - extrinsic_in, state)``; passing the
    returned state back in continues the row/column exchange where it
    stopped.
    """
    received = np.asarray(received, dtype=np.float64)
    extrinsic_in = np.asarray(extrinsic_in, dtype=np.float64)
    if received.shape != extrinsic_in.shape:
        raise ValueError("received and extrinsic planes differ in shape")
    _check_finite(received, extrinsic_in)
    ext_in = np.clip(extrinsic_in, -LLR_CLAMP, LLR_CLAMP)
    w = cfg.weight
    prior = cfg.prior_llr
    e_col = np.zeros_like(received) if state is None else state.column_extrinsic
    total = None
    for _ in range(cfg.inner_iterations):
        # clamp before both the pass and the subtraction so the extrinsic
        # part is exactly what the pass added
        a_row = np.clip(ext_in + w * e_col, -LLR_CLAMP, LLR_CLAMP)
        l_row = siso_pass(received, a_row, cfg, "row")
        e_row = l_row - a_row - prior
        a_col = np.clip(ext_in + w * e_row, -LLR_CLAMP, LLR_CLAMP)
        total = siso_pass(received, a_col, cfg, "column")
        e_col = total - a_col - prior
    return total - ext_in, IsiState(e_col, total)
