import numpy as np
import pytest

from mrfisi.channel import (AVERAGING_MASK, Mask2D, convolve2d, deinterleave, interleave,
                            level_shift, make_interleaver, sigma_for_snr)
from mrfisi.detector import AnnealSchedule
from mrfisi.isi import SisoConfig, run_ircsdfa
from mrfisi.mrf import IsingParams, generate_mrf
from mrfisi.turbo import SystemConfig, detect, detect_isi_only, gg_alone, stream


def _setup(seed=0, snr=8.0, shape=(32, 32), beta=-3.0, **kw):
    F = generate_mrf(*shape, IsingParams.from_priors(beta), 100, stream(seed, "source"))
    probe = SystemConfig(SisoConfig(1.0), IsingParams.from_priors(beta), seed=seed)
    perm = make_interleaver(*shape, probe.interleaver_seed)
    y = convolve2d(level_shift(interleave(F, perm)))
    sigma = sigma_for_snr(snr, y)
    r = y + sigma * stream(seed, "noise").standard_normal(shape)
    cfg = SystemConfig(SisoConfig(sigma), IsingParams.from_priors(beta), seed=seed, **kw)
    return F, r, cfg, perm


class TestStreams:
    def test_independent_names(self):
        a = stream(1, "source").random(4)
        b = stream(1, "noise").random(4)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, stream(1, "source").random(4))

    def test_interleaver_seed_derived(self):
        a = SystemConfig(SisoConfig(1.0), IsingParams(0, 0), seed=3)
        b = SystemConfig(SisoConfig(1.0), IsingParams(0, 0), seed=4)
        assert a.interleaver_seed != b.interleaver_seed
        assert SystemConfig(SisoConfig(1.0), IsingParams(0, 0), seed=3,
                            interleaver_seed=7).interleaver_seed == 7

    def test_defaults(self):
        cfg = SystemConfig(SisoConfig(1.0), IsingParams(0, 0))
        assert cfg.outer_iterations == 5 and cfg.inner_isi_iterations == 1
        with pytest.raises(ValueError):
            SystemConfig(SisoConfig(1.0), IsingParams(0, 0), outer_iterations=0)


class TestDetect:
    def test_trace_length_and_determinism(self):
        F, r, cfg, _ = _setup()
        a = detect(r, cfg, F)
        b = detect(r, cfg, F)
        assert len(a) == 5
        for x, y in zip(a.iterations, b.iterations):
            assert np.array_equal(x.estimate, y.estimate)
            assert np.array_equal(x.mrf_extrinsic, y.mrf_extrinsic)
            assert np.array_equal(x.isi_extrinsic, y.isi_extrinsic)
        assert a.bers == b.bers

    def test_resume_matches_single_run(self):
        F, r, cfg, _ = _setup(seed=1)
        full = detect(r, cfg, F)
        part = detect(r, cfg, F, iterations=2)
        rest = detect(r, cfg, F, resume=part, iterations=3)
        assert len(rest) == 5
        for x, y in zip(full.iterations, rest.iterations):
            assert np.array_equal(x.estimate, y.estimate)
            assert np.array_equal(x.isi_extrinsic, y.isi_extrinsic)

    def test_dataflow_is_extrinsic_only(self):
        F, r, cfg, perm = _setup(seed=2)
        trace = detect(r, cfg, F, iterations=2)
        first, second = trace.iterations
        out1, state = run_ircsdfa(r, np.zeros_like(r), cfg.siso)
        assert np.array_equal(first.isi_extrinsic, deinterleave(out1, perm))
        out2, _ = run_ircsdfa(r, interleave(first.mrf_extrinsic, perm), cfg.siso, state)
        assert np.array_equal(second.isi_extrinsic, deinterleave(out2, perm))

    def test_degenerate_mrf_equals_isi_only(self):
        F, r, cfg, _ = _setup(seed=3)
        cfg = SystemConfig(cfg.siso, IsingParams(0.0, 0.0), AnnealSchedule(t_max=0),
                           outer_iterations=3, seed=3)
        a = detect(r, cfg, F)
        b = detect_isi_only(r, cfg, F)
        for x, y in zip(a.iterations, b.iterations):
            assert np.array_equal(x.isi_extrinsic, y.isi_extrinsic)
            assert np.all(x.mrf_extrinsic == 0)
            assert x.isi_ber == y.isi_ber

    def test_iterations_help(self):
        # after convergence the relaxation output wanders by a few pixels
        slack = 6 / 4096
        improved = 0
        for seed in range(10):
            F, r, cfg, _ = _setup(seed=10 + seed, snr=7.0, shape=(64, 64))
            bers = detect(r, cfg, F).bers
            improved += all(b <= a + slack for a, b in zip(bers, bers[1:]))
            assert bers[-1] < bers[0]
        assert improved >= 8

    def test_shape_mismatch(self):
        F, r, cfg, _ = _setup()
        with pytest.raises(ValueError):
            detect(r, cfg, F[:-1])
        with pytest.raises(ValueError):
            detect(r[0], cfg)


class TestIsiOnly:
    def test_noiseless(self):
        rng = np.random.default_rng(0)
        F = rng.integers(0, 2, (24, 24)).astype(np.int8)
        cfg = SystemConfig(SisoConfig(1e-3), IsingParams(0, 0), outer_iterations=2, seed=5)
        perm = make_interleaver(24, 24, cfg.interleaver_seed)
        r = convolve2d(level_shift(interleave(F, perm)))
        trace = detect_isi_only(r, cfg, F)
        assert trace.bers == [0.0, 0.0]

    def test_snr_monotone(self):
        bers = []
        for snr in (4.0, 8.0, 12.0):
            F, r, cfg, _ = _setup(seed=4, snr=snr, shape=(48, 48), beta=0.0)
            bers.append(detect_isi_only(r, cfg, F).bers[-1])
        assert bers[0] > bers[1] > bers[2]


class TestGgAlone:
    def test_identity_mask_noiseless(self):
        F = generate_mrf(24, 24, IsingParams.from_priors(-3.0), 50, np.random.default_rng(0))
        ident = Mask2D(np.array([[1.0, 0.0], [0.0, 0.0]]))
        cfg = SystemConfig(SisoConfig(1e-3, mask=ident), IsingParams.from_priors(-3.0))
        r = convolve2d(level_shift(F), ident)
        assert np.array_equal(gg_alone(r, cfg, F), F)
        assert np.array_equal(gg_alone(r, cfg, F, blur_aware=False), F)

    def test_blurred_noiseless_mostly_right(self):
        F = generate_mrf(32, 32, IsingParams.from_priors(-3.0), 100, np.random.default_rng(1))
        cfg = SystemConfig(SisoConfig(1e-3), IsingParams.from_priors(-3.0))
        r = convolve2d(level_shift(F), AVERAGING_MASK)
        assert np.mean(gg_alone(r, cfg, F) == F) > 0.99
