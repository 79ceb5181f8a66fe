"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``CRITERION n: PASS|FAIL`` line with the measured
quantities. The Monte-Carlo criteria take tens of minutes in total on one
core; deselect them with ``-m "not acceptance"``.
"""

import numpy as np
import pytest

from mrfisi.channel import AVERAGING_MASK, add_awgn, convolve2d, level_shift
from mrfisi.detector import AnnealSchedule, posterior_flip_delta, stochastic_relaxation
from mrfisi.harness import Scenario, ber_crossing, format_csv, run_ber_sweep, run_bsc_awgn
from mrfisi.isi import SisoConfig, siso_line_pass
from mrfisi.mrf import (IsingParams, flip_energy_delta, generate_mrf, swap_energy_delta)
from oracles import (exhaustive_map, ising_energy_loops, row_siso_marginals,
                     sample_ising_exact, total_posterior_energy)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return emit


def _bers(records):
    return {r.snr_db: r.ber for r in records}


def _fmt(d):
    return ", ".join(f"{k:g} dB: {v:.3g}" for k, v in sorted(d.items()))


def test_c01_row_siso_oracle(report):
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        x = rng.integers(0, 2, (4, 4))
        sigma = rng.uniform(0.3, 1.2)
        p0 = rng.uniform(0.2, 0.8)
        r = add_awgn(convolve2d(level_shift(x)), sigma, rng)
        la = rng.normal(0, 1.5, (4, 4))
        cfg = SisoConfig(sigma_w=sigma, p0=p0)
        for m in range(4):
            fb = np.where(x[m - 1] == 1, np.inf, -np.inf) if m > 0 else None
            got = siso_line_pass(r, m, "row", la, fb, cfg)
            ref = row_siso_marginals(r, x, m, sigma, AVERAGING_MASK.coefficients, p0, la)
            worst = max(worst, float(np.max(np.abs(got - ref))))
    ok = worst <= 1e-6
    report(1, ok, f"max |LLR - enumeration| = {worst:.2e} over 50 realisations (<= 1e-6)")
    assert ok


def test_c02_energy_deltas(report):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(1000):
        f = rng.integers(0, 2, (8, 8)).astype(np.int8)
        p = IsingParams(rng.normal(0, 4), rng.normal(0, 3))
        G = rng.normal(0.5, 0.7, (8, 8))
        L = rng.normal(0, 2, (8, 8))
        s2 = rng.uniform(0.05, 2.0)
        a = (int(rng.integers(8)), int(rng.integers(8)))
        b = (int(rng.integers(8)), int(rng.integers(8)))
        while b == a:
            b = (int(rng.integers(8)), int(rng.integers(8)))
        e0 = ising_energy_loops(f, p.alpha, p.beta)
        flipped = f.copy()
        flipped[a] ^= 1
        swapped = f.copy()
        swapped[a], swapped[b] = f[b], f[a]
        ae = p.alpha - L
        errs = [
            flip_energy_delta(f, a, p.alpha, p.beta)
            - (ising_energy_loops(flipped, p.alpha, p.beta) - e0),
            swap_energy_delta(f, a, b, p) - (ising_energy_loops(swapped, p.alpha, p.beta) - e0),
            posterior_flip_delta(f, G, a, ae[a], p.beta, s2)
            - (total_posterior_energy(flipped, ae, p.beta, G, s2)
               - total_posterior_energy(f, ae, p.beta, G, s2)),
        ]
        worst = max(worst, max(abs(e) for e in errs))
    ok = worst <= 1e-10
    report(2, ok, f"max delta mismatch = {worst:.2e} over 1000 instances (<= 1e-10)")
    assert ok


def test_c03_toy_map(report):
    p = IsingParams.from_priors(-3.0)
    sched = AnnealSchedule(C=3.0, t_max=300)
    sigma_g2 = 0.25
    hits = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        F = sample_ising_exact(3, 3, p.alpha, p.beta, rng)
        G = F + rng.normal(0.0, np.sqrt(sigma_g2), (3, 3))
        best, _ = exhaustive_map(np.full((3, 3), p.alpha), p.beta, G, sigma_g2)
        est = stochastic_relaxation(G, sigma_g2, None, p, sched, rng)
        hits += bool(np.array_equal(est, best))
    ok = hits >= 190
    report(3, ok, f"relaxation found the exhaustive MAP in {hits}/200 runs (>= 95%)")
    assert ok


def test_c04_bsc_awgn_floor(report):
    res = {}
    for p in (0.01, 0.05):
        s = Scenario(snr_db=(12.0,), mode="mrf-bsc-awgn", bsc_p=p, beta_true=-3.0,
                     trials=50, min_errors=0, seed=404)
        res[p] = run_bsc_awgn(s)[0].ber
    ok = res[0.01] < 0.01 and res[0.05] < 0.05 / 2
    report(4, ok, f"BER p=0.01: {res[0.01]:.3g} (< 0.01); p=0.05: {res[0.05]:.3g} (< 0.025)")
    assert ok


def test_c05_concatenated_gain(report):
    target = 4e-3
    base = Scenario(beta_true=-3.0, trials=200, min_errors=0, seed=505)
    conc = _bers(run_ber_sweep(Scenario(**{**base.__dict__, "snr_db": (6.0, 7.0, 8.0)})))
    isi = _bers(run_ber_sweep(Scenario(**{**base.__dict__, "snr_db": (10.0, 11.0, 12.0),
                                          "mode": "isi-only"})))
    s_conc = ber_crossing(list(conc), list(conc.values()), target)
    s_isi = ber_crossing(list(isi), list(isi.values()), target)
    gap = s_isi - s_conc
    ok = gap >= 1.5
    report(5, ok, f"SNR at BER 4e-3: concatenated {s_conc:.2f} dB, isi-only {s_isi:.2f} dB, "
                  f"gain {gap:.2f} dB (>= 1.5) | conc {_fmt(conc)} | isi {_fmt(isi)}")
    assert ok


def test_c06_correlation_ordering(report):
    grid = (4.0, 6.0, 8.0, 10.0)
    kw = dict(snr_db=grid, trials=500, min_errors=100, seed=606)
    strong = run_ber_sweep(Scenario(beta_true=-3.0, **kw))
    weak = run_ber_sweep(Scenario(beta_true=-1.5, **kw))
    isi = run_ber_sweep(Scenario(beta_true=-1.5, mode="isi-only", **kw))
    ok = all(a.ber <= b.ber <= c.ber for a, b, c in zip(strong, weak, isi))
    enough = all(r.errors >= 100 or r.trials >= 500 for r in strong + weak + isi)
    report(6, ok and enough,
           f"beta=-3 {_fmt(_bers(strong))} | beta=-1.5 {_fmt(_bers(weak))} | "
           f"isi-only {_fmt(_bers(isi))}")
    assert enough and ok


def test_c07_gg_alone_floor(report):
    s = Scenario(snr_db=(0.0, 2.0, 4.0, 6.0, 8.0, 10.0), mode="gg-alone", beta_true=-3.0,
                 trials=100, min_errors=100, seed=707)
    bers = _bers(run_ber_sweep(s))
    hi, second = bers[10.0], bers[8.0]
    ok = 3e-4 <= hi <= 1e-2 and 3e-4 <= second <= 1e-2 and hi / second > 0.33
    report(7, ok, f"{_fmt(bers)} | ratio highest/second = {hi / second:.2f} (> 0.33)")
    assert ok


def test_c08_mismatch(report):
    kw = dict(snr_db=(12.0,), beta_true=-3.0, trials=400, min_errors=100, seed=808)
    known = run_ber_sweep(Scenario(**kw))[0].ber
    isi = run_ber_sweep(Scenario(mode="isi-only", **kw))[0].ber
    res = {b: run_ber_sweep(Scenario(beta_assumed=b, **kw))[0].ber for b in (-4.5, -6.0)}
    ok = all(v <= 2 * known and v < isi for v in res.values())
    report(8, ok, f"12 dB: known {known:.3g}, assumed -4.5 {res[-4.5]:.3g}, "
                  f"assumed -6.0 {res[-6.0]:.3g}, isi-only {isi:.3g}")
    assert ok


def test_c09_non_equiprobable(report):
    p = IsingParams.from_priors(-3.0, 0.1)
    exact = generate_mrf(50, 60, p, 50, np.random.default_rng(9))
    frac_exact = exact.sum() / exact.size
    img = generate_mrf(64, 64, p, 200, np.random.default_rng(9))
    count_ok = img.sum() == round(0.9 * 4096) and frac_exact == 0.9
    kw = dict(snr_db=(2.0, 4.0, 6.0, 8.0), beta_true=-3.0, p0=0.1, trials=200,
              min_errors=100, seed=909)
    conc = _bers(run_ber_sweep(Scenario(**kw)))
    isi = _bers(run_ber_sweep(Scenario(mode="isi-only", **kw)))
    ok = count_ok and all(conc[s] <= isi[s] for s in conc)
    report(9, ok, f"ones fraction 50x60: {frac_exact}, 64x64: {img.sum()}/4096 | "
                  f"conc {_fmt(conc)} | isi {_fmt(isi)}")
    assert ok


def test_c10_worker_independence(report):
    s = Scenario(snr_db=(5.0, 9.0), trials=6, min_errors=40, shape=(24, 24), t_max=60,
                 gen_sweeps=50, seed=1010)
    bodies = [format_csv(run_ber_sweep(s, workers=w), timing=False, header=False)
              for w in (1, 2, 3)]
    ok = bodies[0] == bodies[1] == bodies[2] and bodies[0]
    report(10, bool(ok), f"{len(bodies[0].splitlines())} CSV rows identical for 1, 2 and 3 "
                         "workers")
    assert ok
