"""Monte-Carlo BER experiments and CSV output."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import (add_awgn, bsc_corrupt, convolve2d, interleave, level_shift,
                      make_interleaver, sigma_for_snr)
from .detector import AnnealSchedule, bsc_awgn_llr, conditional_stats, \
    scale_to_noisy_image, stochastic_relaxation
from .isi import SisoConfig
from .mrf import IsingParams, generate_mrf
from .turbo import SystemConfig, detect, detect_isi_only, gg_alone, stream

MODES = ("concatenated", "isi-only", "gg-alone", "mrf-bsc-awgn")
SOURCES = ("mrf", "iid", "pbm")
CSV_HEADER = ["snr_db", "mode", "beta_true", "beta_assumed", "p0", "iter", "bits",
              "errors", "ber", "seconds"]


@dataclass(frozen=True)
class Scenario:
    """One BER experiment: a source, a channel, a detector and an SNR grid.

    ``snr_reference`` selects the signal whose variance defines the SNR:
    ``"bipolar"`` uses the blurred level-shifted image, ``"binary"`` the
    blurred {0, 1} image, and ``"auto"`` picks ``"binary"`` for gg-alone
    and ``"bipolar"`` otherwise. In mrf-bsc-awgn mode the SNR is always
    var[F] / sigma^2 on the {0, 1} image.
    """

    snr_db: tuple[float, ...] = (6.0, 8.0, 10.0)
    mode: str = "concatenated"
    source: str = "mrf"
    beta_true: float = -3.0
    beta_assumed: float | None = None
    p0: float = 0.5
    shape: tuple[int, int] = (64, 64)
    trials: int = 100
    min_errors: int = 100
    outer_iterations: int = 5
    inner_iterations: int = 1
    weight: float = 0.5
    C: float = 3.0
    t_max: int = 300
    gen_sweeps: int = 200
    bsc_p: float = 0.0
    bsc_likelihood: str = "exact"
    gg_blur_aware: bool = True
    snr_reference: str = "auto"
    pbm_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if not self.snr_db:
            raise ValueError("SNR grid is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.min_errors < 0:
            raise ValueError("min_errors must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "pbm" and not self.pbm_path:
            raise ValueError("pbm source needs pbm_path")
        if self.bsc_likelihood not in ("exact", "gaussian"):
            raise ValueError("bsc_likelihood must be 'exact' or 'gaussian'")
        if self.snr_reference not in ("auto", "bipolar", "binary"):
            raise ValueError("snr_reference must be auto, bipolar or binary")
        if not 0.0 <= self.bsc_p <= 1.0:
            raise ValueError("bsc_p must lie in [0, 1]")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if min(self.shape) < 2:
            raise ValueError("image must be at least 2x2")

    @property
    def true_params(self) -> IsingParams:
        return IsingParams.from_priors(self.beta_true, self.p0)

    @property
    def assumed_params(self) -> IsingParams:
        beta = self.beta_true if self.beta_assumed is None else self.beta_assumed
        return IsingParams.from_priors(beta, self.p0)

    @property
    def iterations_reported(self) -> int:
        return self.outer_iterations if self.mode in ("concatenated", "isi-only") else 1

    @property
    def reference(self) -> str:
        if self.snr_reference != "auto":
            return self.snr_reference
        return "binary" if self.mode == "gg-alone" else "bipolar"


@dataclass
class BerRecord:
    snr_db: float
    mode: str
    bits: int
    errors: int
    trials: int
    iteration_errors: list[int] = field(default_factory=list)
    seconds: float = 0.0
    beta_true: float = 0.0
    beta_assumed: float = 0.0
    p0: float = 0.5

    @property
    def ber(self) -> float:
        return self.errors / self.bits

    @property
    def iteration_bers(self) -> list[float]:
        return [e / self.bits for e in self.iteration_errors]


def count_bit_errors(a: np.ndarray, b: np.ndarray) -> int:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def trial_seed(seed: int, trial: int) -> int:
    """Master seed of one trial; shared across SNR points and modes."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def make_source(s: Scenario, seed: int) -> np.ndarray:
    rng = stream(seed, "source")
    if s.source == "pbm":
        from .pbm import load_pbm
        return load_pbm(s.pbm_path)
    if s.source == "iid":
        return (rng.random(s.shape) < 1.0 - s.p0).astype(np.int8)
    return generate_mrf(*s.shape, s.true_params, s.gen_sweeps, rng)


def system_config(s: Scenario, sigma_w: float, seed: int) -> SystemConfig:
    siso = SisoConfig(sigma_w=max(sigma_w, 1e-12), weight=s.weight, p0=s.p0,
                      inner_iterations=s.inner_iterations)
    return SystemConfig(siso=siso, ising=s.assumed_params,
                        schedule=AnnealSchedule(s.C, s.t_max),
                        outer_iterations=s.outer_iterations, seed=seed)


def _bsc_trial(s: Scenario, F: np.ndarray, snr_db: float, seed: int) -> list[int]:
    corrupted = bsc_corrupt(F, s.bsc_p, stream(seed, "noise", 1))
    sigma = sigma_for_snr(snr_db, F.astype(np.float64))
    G = add_awgn(corrupted.astype(np.float64), sigma, stream(seed, "noise"))
    sched = AnnealSchedule(s.C, s.t_max)
    rng = stream(seed, "relaxation")
    if s.bsc_likelihood == "exact":
        L = bsc_awgn_llr(G, s.bsc_p, max(sigma, 1e-12))
        est = stochastic_relaxation(G, np.inf, L, s.assumed_params, sched, rng)
    else:
        # sign-split statistics around the 1/2 threshold, no channel LLR
        Gs, s2 = scale_to_noisy_image(G - 0.5, conditional_stats(G - 0.5))
        est = stochastic_relaxation(Gs, max(s2, 1e-12), None, s.assumed_params, sched, rng)
    return [count_bit_errors(est, F)]


def run_trial(s: Scenario, snr_db: float, trial: int) -> list[int]:
    """Bit errors of one trial, one entry per reported iteration."""
    seed = trial_seed(s.seed, trial)
    F = make_source(s, seed)
    if s.mode == "mrf-bsc-awgn":
        return _bsc_trial(s, F, snr_db, seed)
    M, N = F.shape
    noise = stream(seed, "noise").standard_normal((M, N))
    if s.mode == "gg-alone":
        y = convolve2d(level_shift(F))
        ref = y if s.reference == "bipolar" else convolve2d(F.astype(np.float64))
        sigma = sigma_for_snr(snr_db, ref)
        cfg = system_config(s, sigma, seed)
        est = gg_alone(y + sigma * noise, cfg, F, blur_aware=s.gg_blur_aware)
        return [count_bit_errors(est, F)]
    probe = system_config(s, 1.0, seed)
    perm = make_interleaver(M, N, probe.interleaver_seed)
    x = interleave(F, perm)
    y = convolve2d(level_shift(x))
    ref = y if s.reference == "bipolar" else convolve2d(x.astype(np.float64))
    sigma = sigma_for_snr(snr_db, ref)
    cfg = system_config(s, sigma, seed)
    run = detect if s.mode == "concatenated" else detect_isi_only
    trace = run(y + sigma * noise, cfg, F)
    return [count_bit_errors(it.estimate, F) for it in trace.iterations]


def _trial_job(args):
    return run_trial(*args)


def _run_point(s: Scenario, snr_db: float, pool) -> BerRecord:
    t0 = time.perf_counter()
    totals = np.zeros(s.iterations_reported, dtype=np.int64)
    done = 0
    batch = 1 if pool is None else 4 * pool._max_workers
    while done < s.trials:
        idx = range(done, min(done + batch, s.trials))
        jobs = [(s, snr_db, k) for k in idx]
        results = map(_trial_job, jobs) if pool is None else pool.map(_trial_job, jobs)
        stop = False
        # merge in trial order so the stopping point is independent of the pool
        for errs in results:
            totals += np.asarray(errs, dtype=np.int64)
            done += 1
            if s.min_errors and totals[-1] >= s.min_errors:
                stop = True
                break
        if stop:
            break
    bits = done * s.shape[0] * s.shape[1]
    if s.source == "pbm":
        from .pbm import load_pbm
        bits = done * load_pbm(s.pbm_path).size
    beta_a = s.beta_true if s.beta_assumed is None else s.beta_assumed
    return BerRecord(snr_db, s.mode, bits, int(totals[-1]), done,
                     [int(e) for e in totals], time.perf_counter() - t0,
                     s.beta_true, beta_a, s.p0)


def run_ber_sweep(s: Scenario, workers: int = 1, csv_path: str | Path | None = None,
                  timing: bool = True) -> list[BerRecord]:
    """Run every SNR point of ``s``; optionally write the CSV.

    Each point stops after ``trials`` trials or once the final-iteration
    error count reaches ``min_errors`` (0 disables early stopping).
    Results do not depend on ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1:
        records = [_run_point(s, snr, None) for snr in s.snr_db]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [_run_point(s, snr, pool) for snr in s.snr_db]
    if csv_path is not None:
        write_csv(records, csv_path, timing=timing)
    return records


def run_bsc_awgn(s: Scenario, workers: int = 1, csv_path: str | Path | None = None,
                 timing: bool = True) -> list[BerRecord]:
    if s.mode != "mrf-bsc-awgn":
        raise ValueError("run_bsc_awgn needs mode 'mrf-bsc-awgn'")
    return run_ber_sweep(s, workers, csv_path, timing)


def _fmt(x: float) -> str:
    return repr(float(x))


def csv_rows(records: list[BerRecord], timing: bool = True) -> list[list[str]]:
    rows = []
    for r in records:
        secs = f"{r.seconds:.3f}" if timing else ""
        for k, e in enumerate(r.iteration_errors, start=1):
            rows.append([_fmt(r.snr_db), r.mode, _fmt(r.beta_true), _fmt(r.beta_assumed),
                         _fmt(r.p0), str(k), str(r.bits), str(e), _fmt(e / r.bits), secs])
    return rows


def format_csv(records: list[BerRecord], timing: bool = True, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    w.writerows(csv_rows(records, timing))
    return buf.getvalue()


def write_csv(records: list[BerRecord], path: str | Path, timing: bool = True) -> None:
    """Append rows to ``path``, writing the header only for a new file."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(records, timing, header=new))


def ber_crossing(snrs, bers, target: float) -> float:
    """SNR where a decreasing BER curve crosses ``target`` (log-linear interpolation).

    Returns ``inf`` if the curve never reaches the target and the first SNR
    if it starts below it.
    """
    snrs = np.asarray(snrs, dtype=float)
    bers = np.asarray(bers, dtype=float)
    order = np.argsort(snrs)
    snrs, bers = snrs[order], bers[order]
    if bers[0] <= target:
        return float(snrs[0])
    for k in range(1, len(snrs)):
        if bers[k] <= target:
            hi, lo = bers[k - 1], bers[k]
            if lo <= 0:
                return float(snrs[k])
            frac = (math.log(hi) - math.log(target)) / (math.log(hi) - math.log(lo))
            return float(snrs[k - 1] + frac * (snrs[k] - snrs[k - 1]))
    return math.inf


def with_mode(s: Scenario, mode: str, **kw) -> Scenario:
    return replace(s, mode=mode, **kw)
