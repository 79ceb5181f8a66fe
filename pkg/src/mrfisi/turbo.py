"""Concatenated ISI/MRF detector with extrinsic LLR exchange."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import deinterleave, interleave, make_interleaver
from .detector import (AnnealSchedule, blurred_relaxation, conditional_stats, mrf_detect,
                       scale_to_noisy_image, stochastic_relaxation)
from .isi import IsiState, SisoConfig, run_ircsdfa
from .mrf import IsingParams

STREAMS = {"source": 0, "interleaver": 1, "noise": 2, "relaxation": 3}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named purpose under one master seed."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(STREAMS[name], *extra))
    return np.random.default_rng(ss)


def interleaver_seed(seed: int) -> int:
    return int(stream(seed, "interleaver").integers(2 ** 63))


@dataclass(frozen=True)
class SystemConfig:
    siso: SisoConfig
    ising: IsingParams
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    outer_iterations: int = 5
    seed: int = 0
    interleaver_seed: int | None = None

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if self.interleaver_seed is None:
            object.__setattr__(self, "interleaver_seed", interleaver_seed(self.seed))

    @property
    def inner_isi_iterations(self) -> int:
        return self.siso.inner_iterations

    def with_sigma(self, sigma_w: float) -> "SystemConfig":
        return replace(self, siso=replace(self.siso, sigma_w=sigma_w))


@dataclass
class IterationRecord:
    isi_extrinsic: np.ndarray   # deinterleaved, i.e. the MRF detector's input
    mrf_extrinsic: np.ndarray   # source order
    estimate: np.ndarray
    ber: float | None = None
    isi_ber: float | None = None


@dataclass
class DetectionTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    # resumption state
    isi_state: IsiState | None = None
    rng_state: dict | None = None

    @property
    def estimate(self) -> np.ndarray:
        return self.iterations[-1].estimate

    @property
    def bers(self) -> list[float | None]:
        return [it.ber for it in self.iterations]

    def __len__(self):
        return len(self.iterations)


def _ber(est, truth):
    return None if truth is None else float(np.mean(est != truth))


def _check(received, truth):
    received = np.asarray(received, dtype=np.float64)
    if received.ndim != 2:
        raise ValueError("received plane must be 2D")
    if truth is not None and np.shape(truth) != received.shape:
        raise ValueError("truth and received planes differ in shape")
    return received


def detect(received: np.ndarray, cfg: SystemConfig, truth: np.ndarray | None = None,
           resume: DetectionTrace | None = None, iterations: int | None = None,
           ) -> DetectionTrace:
    """Run the concatenated detector on an interleaved received plane.

    Passing a previous trace as ``resume`` continues it for ``iterations``
    more outer iterations (default ``cfg.outer_iterations``), producing the
    same planes as one uninterrupted run.
    """
    received = _check(received, truth)
    M, N = received.shape
    perm = make_interleaver(M, N, cfg.interleaver_seed)
    rng = stream(cfg.seed, "relaxation")
    trace = DetectionTrace()
    mrf_ext = np.zeros((M, N))
    if resume is not None:
        trace.iterations = list(resume.iterations)
        trace.isi_state = resume.isi_state
        rng.bit_generator.state = resume.rng_state
        mrf_ext = resume.iterations[-1].mrf_extrinsic
    count = cfg.outer_iterations if iterations is None else iterations
    for _ in range(count):
        isi_out, trace.isi_state = run_ircsdfa(
            received, interleave(mrf_ext, perm), cfg.siso, trace.isi_state)
        L_in = deinterleave(isi_out, perm)
        out = mrf_detect(L_in, cfg.ising, cfg.schedule, rng)
        mrf_ext = out.extrinsic
        isi_hard = deinterleave((trace.isi_state.total > 0).astype(np.int8), perm)
        trace.iterations.append(IterationRecord(
            L_in, mrf_ext, out.estimate, _ber(out.estimate, truth), _ber(isi_hard, truth)))
    trace.rng_state = rng.bit_generator.state
    return trace


def detect_isi_only(received: np.ndarray, cfg: SystemConfig,
                    truth: np.ndarray | None = None) -> DetectionTrace:
    """The same outer loop with the MRF stage replaced by zero feedback.

    The row/column exchange inside the ISI detector still carries over
    between outer iterations; decisions are LLR signs, deinterleaved.
    """
    received = _check(received, truth)
    M, N = received.shape
    perm = make_interleaver(M, N, cfg.interleaver_seed)
    trace = DetectionTrace()
    zeros = np.zeros((M, N))
    for _ in range(cfg.outer_iterations):
        isi_out, trace.isi_state = run_ircsdfa(received, zeros, cfg.siso, trace.isi_state)
        est = deinterleave((trace.isi_state.total > 0).astype(np.int8), perm)
        ber = _ber(est, truth)
        trace.iterations.append(IterationRecord(
            deinterleave(isi_out, perm), zeros, est, ber, ber))
    return trace


def gg_alone(received: np.ndarray, cfg: SystemConfig, truth: np.ndarray | None = None,
             blur_aware: bool = True) -> np.ndarray:
    """Plain stochastic relaxation on a non-interleaved received plane.

    By default the blur mask sits inside the data term of the relaxation
    (restoration of a blurred image with known mask and noise level).
    With ``blur_aware=False`` the bipolar plane is instead mapped affinely
    onto {0, 1} class means using the sign-split statistics of the MRF
    detector and treated as a blur-free noisy image.
    """
    received = _check(received, truth)
    rng = stream(cfg.seed, "relaxation")
    if blur_aware:
        return blurred_relaxation(received, cfg.siso.mask, cfg.siso.sigma_w, cfg.ising,
                                  cfg.schedule, rng)
    G, s2 = scale_to_noisy_image(received, conditional_stats(received))
    s2 = max(s2, 1e-12)
    return stochastic_relaxation(G, s2, None, cfg.ising, cfg.schedule, rng)
