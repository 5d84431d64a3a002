"""Tests for the path simulator and least-squares Monte Carlo pricers.

Constant-coefficient dynamics make the Euler step exact in distribution,
so terminal moments, martingale identities and survival weights all have
closed-form targets; statistical assertions use z-scores against exact
standard errors with generous multipliers, under fixed seeds.
"""

import math
import struct

import numpy as np
import pytest
from numpy.testing import assert_allclose

import levyxva as lx
from levyxva import bermudan, bsde, charfunc, mc, model

from conftest import make_benchmark_model, make_constant_model

from test_charfunc import exact_const_cf
from test_cos import put_expectation_lognormal


def _discounting_driver(r):
    return bsde.DriverSpec(mode="simplified", rate_r=r, simplified_rate=r)


class TestSimulate:
    def test_batch_layout(self):
        mdl = make_constant_model(0.2, 0.0, 0.0, 0.0, 0.05, 0.0, x0=0.1)
        b = mc.simulate(mdl, 0.5, 4, 60, seed=9)
        assert b.x.shape == (60, 5)
        assert_allclose(b.times, [0.0, 0.125, 0.25, 0.375, 0.5])
        assert b.dt == pytest.approx(0.125)
        assert b.seed == 9 and b.rate_r == pytest.approx(0.05)
        assert_allclose(b.x[:, 0], 0.1)
        assert_allclose(b.survival, 1.0)
        assert b.default_time is None

    def test_seed_reproducibility(self):
        mdl = make_constant_model(0.2, 0.3, -0.1, 0.2, 0.05, 0.0)
        a = mc.simulate(mdl, 0.5, 8, 500, seed=11)
        b = mc.simulate(mdl, 0.5, 8, 500, seed=11)
        c = mc.simulate(mdl, 0.5, 8, 500, seed=12)
        assert np.array_equal(a.x, b.x)
        assert not np.array_equal(a.x, c.x)

    def test_terminal_moments_match_cumulants(self):
        # Constant coefficients: the step is exact, so terminal mean and
        # variance equal the analytic cumulants of the increment.
        mdl = make_constant_model(0.2, 0.3, -0.1, 0.2, 0.05, 0.0, x0=-0.2)
        T, n = 0.75, 400_000
        b = mc.simulate(mdl, T, 3, n, seed=21)
        tay = model.taylor_expand(mdl, 0.0, 0.0, 0)
        c1, c2, c4 = charfunc.cumulants(tay, 0.0, T)
        xt = b.x[:, -1]
        se_mean = math.sqrt(c2 / n)
        assert abs(xt.mean() - (-0.2 + c1)) < 4.0 * se_mean
        se_var = math.sqrt((c4 + 2.0 * c2**2) / n)
        assert abs(xt.var() - c2) < 4.0 * se_var

    def test_exponential_martingale(self):
        mdl = make_constant_model(0.2, 0.3, -0.1, 0.2, 0.05, 0.0, x0=-0.2)
        T, n = 0.75, 400_000
        b = mc.simulate(mdl, T, 3, n, seed=22)
        disc = math.exp(-0.05 * T) * np.exp(b.x[:, -1])
        se = disc.std() / math.sqrt(n)
        assert abs(disc.mean() - math.exp(-0.2)) < 4.0 * se

    def test_survival_weights_exact_for_constant_intensity(self):
        g0 = 0.08
        mdl = make_constant_model(0.2, 0.0, 0.0, 0.0, 0.05, g0)
        b = mc.simulate(mdl, 0.5, 4, 200, seed=5)
        want = np.exp(-g0 * b.times)
        assert_allclose(b.survival, np.broadcast_to(want, b.survival.shape),
                        rtol=1e-12)

    def test_killed_martingale_keeps_the_short_rate(self):
        # survival * e^{X} discounted at r is a martingale even with
        # default switched on, because the intensity feeds the drift.
        g0 = 0.08
        mdl = make_constant_model(0.2, 0.0, 0.0, 0.0, 0.05, g0, x0=-0.2)
        T, n = 0.75, 400_000
        b = mc.simulate(mdl, T, 3, n, seed=23)
        disc = math.exp(-0.05 * T) * b.survival[:, -1] * np.exp(b.x[:, -1])
        se = disc.std() / math.sqrt(n)
        assert abs(disc.mean() - math.exp(-0.2)) < 4.0 * se

    def test_thinning_mode_samples_default_times(self):
        g0 = 0.1
        mdl = make_constant_model(0.2, 0.0, 0.0, 0.0, 0.05, g0)
        T, n = 1.0, 200_000
        b = mc.simulate(mdl, T, 8, n, seed=31, default_mode="thin")
        assert b.default_time is not None
        frac = np.mean(b.default_time <= T)
        p = 1.0 - math.exp(-g0 * T)
        se = math.sqrt(p * (1.0 - p) / n)
        assert abs(frac - p) < 4.0 * se
        # Undefaulted paths are flagged with an infinite time.
        assert np.all(np.isinf(b.default_time[b.default_time > T]))

    def test_block_splitting_changes_stream_not_statistics(self):
        mdl = make_constant_model(0.2, 0.0, 0.0, 0.0, 0.05, 0.0)
        one = mc.simulate(mdl, 0.5, 2, 100_000, seed=7, n_blocks=1)
        four = mc.simulate(mdl, 0.5, 2, 100_000, seed=7, n_blocks=4)
        assert one.x.shape == four.x.shape
        se = one.x[:, -1].std() / math.sqrt(one.x.shape[0])
        assert abs(one.x[:, -1].mean() - four.x[:, -1].mean()) < 6.0 * se


class TestEstimateCharfunc:
    params = dict(sig=0.2, lam=0.3, m=-0.1, delta=0.15, rate_r=0.05)

    def test_unweighted_unit_mass_at_zero(self):
        mdl = make_constant_model(gamma0=0.07, **self.params)
        b = mc.simulate(mdl, 0.5, 2, 10_000, seed=41)
        est, se = mc.estimate_charfunc(b, np.array([0.0]), weighted=False)
        assert est[0] == pytest.approx(1.0, abs=1e-14)

    def test_matches_exact_factor(self):
        mdl = make_constant_model(gamma0=0.0, x0=0.15, **self.params)
        T, n = 0.5, 300_000
        b = mc.simulate(mdl, T, 2, n, seed=42)
        xi = np.linspace(0.0, 10.0, 9)
        est, se = mc.estimate_charfunc(b, xi)
        want = exact_const_cf(gamma0=0.0, tau=T, xi=xi, **self.params)
        want = want * np.exp(1j * xi * 0.15)
        assert np.all(np.abs(est - want) < 5.0 * np.maximum(se, 1e-12))

    def test_survival_weighting_discounts_the_factor(self):
        g0 = 0.08
        kw = dict(x0=0.15, **self.params)
        risky = make_constant_model(gamma0=g0, **kw)
        T, n = 0.5, 300_000
        b = mc.simulate(risky, T, 2, n, seed=43)
        xi = np.linspace(0.0, 6.0, 5)
        est, se = mc.estimate_charfunc(b, xi, weighted=True)
        # Constant intensity: weighting = e^{-gamma T} x default-free
        # factor of the *intensity-shifted* drift.
        tay = model.taylor_expand(risky, 0.0, 0.15, 0)
        want = np.exp(T * charfunc.levy_symbol_psi(tay, xi)) * np.exp(1j * xi * 0.15)
        assert np.all(np.abs(est - want) < 5.0 * np.maximum(se, 1e-12))


class TestCrnPair:
    def test_same_model_gives_identical_paths(self):
        mdl = make_constant_model(0.2, 0.3, -0.1, 0.2, 0.05, 0.0)
        a, b = mc.simulate_crn_pair(mdl, mdl, 0.5, 4, 200, seed=3)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.survival, b.survival)

    def test_common_noise_couples_the_legs(self, model_put_riskfree):
        risky = model_put_riskfree.with_default(
            lx.CoeffFamily.exponential(0.1, -2.0)
        )
        d, r = mc.simulate_crn_pair(risky, model_put_riskfree, 1.0, 50, 20_000, seed=8)
        xd, xr = d.x[:, -1], r.x[:, -1]
        # The intensity shifts the drift and the state feeds back into the
        # coefficients, so the legs decorrelate somewhat over a year; an
        # independent pair would sit near zero.
        corr = np.corrcoef(xd, xr)[0, 1]
        assert corr > 0.5
        indep = mc.simulate(risky, 1.0, 50, 20_000, seed=9)
        corr_indep = np.corrcoef(indep.x[:, -1], xr)[0, 1]
        assert abs(corr_indep) < 0.05
        assert np.var(xd - xr) < 2.0 * (1.0 - corr) * 1.1 * np.var(xr)


class TestLsm:
    params = dict(sig=0.25, rate_r=0.04)

    def _european_setup(self, n=200_000):
        mdl = make_constant_model(
            self.params["sig"], 0.0, 0.0, 0.0, self.params["rate_r"], 0.0
        )
        T = 0.75
        batch = mc.simulate(mdl, T, 3, n, seed=77)
        return mdl, batch, T

    def test_single_date_put_hits_closed_form(self):
        mdl, batch, T = self._european_setup()
        K = 1.05
        pay = bermudan.PayoffSpec(kind="put", strike=K)
        sched = bermudan.ExerciseSchedule(T, 1, 3)
        est, (lo, hi) = mc.lsm_price(
            batch, pay, sched, _discounting_driver(self.params["rate_r"])
        )
        sig, r = self.params["sig"], self.params["rate_r"]
        want = math.exp(-r * T) * put_expectation_lognormal(
            K, (r - 0.5 * sig**2) * T, sig * math.sqrt(T)
        )
        assert lo < want < hi
        assert abs(est - want) < 1.2 * (hi - lo)

    def test_exercise_opportunities_add_value(self):
        mdl = make_constant_model(
            self.params["sig"], 0.0, 0.0, 0.0, self.params["rate_r"], 0.0
        )
        T, K = 1.0, 1.1
        batch = mc.simulate(mdl, T, 8, 100_000, seed=78)
        pay = bermudan.PayoffSpec(kind="put", strike=K)
        drv = _discounting_driver(self.params["rate_r"])
        eur, (lo1, hi1) = mc.lsm_price(
            batch, pay, bermudan.ExerciseSchedule(T, 1, 8), drv
        )
        berm, (lo4, hi4) = mc.lsm_price(
            batch, pay, bermudan.ExerciseSchedule(T, 4, 2), drv
        )
        width = hi1 - lo1
        assert berm > eur - 0.5 * width

    def test_cva_legs_cancel_without_default(self):
        mdl = make_constant_model(0.2, 0.0, 0.0, 0.0, 0.05, 0.0)
        a, b = mc.simulate_crn_pair(mdl, mdl, 0.5, 4, 5_000, seed=3)
        pay = bermudan.PayoffSpec(kind="put", strike=1.1)
        sched = bermudan.ExerciseSchedule(0.5, 2, 2)
        est, (lo, hi) = mc.lsm_cva(a, b, pay, sched)
        assert est == 0.0 and lo == 0.0 and hi == 0.0

    def test_cva_estimate_brackets_fast_path(self, model_put_riskfree):
        from levyxva import cva as cvamod

        spec = cvamod.DefaultSpec(intensity=lx.CoeffFamily.exponential(0.1, -2.0))
        risky = model_put_riskfree.with_default(spec.intensity)
        pay = bermudan.PayoffSpec(kind="put", strike=1.0)
        sched = bermudan.ExerciseSchedule(1.0, 10, 10)
        d, r = mc.simulate_crn_pair(
            risky, model_put_riskfree, 1.0, 100, 40_000, seed=42
        )
        est, (lo, hi) = mc.lsm_cva(d, r, pay, sched)
        assert 0.0 < lo < est < hi
        fast = cvamod.cva(model_put_riskfree, spec, pay, sched, J=100)
        # Loose two-width bracket: the estimator is biased low by the
        # regression exercise rule, but must sit in the same ballpark.
        width = hi - lo
        assert abs(est - fast) < max(4.0 * width, 0.2 * fast)


class TestDumpLoad:
    def test_roundtrip_and_binary_layout(self, tmp_path):
        mdl = make_constant_model(0.2, 0.0, 0.0, 0.0, 0.05, 0.0, x0=0.1)
        b = mc.simulate(mdl, 0.5, 4, 50, seed=9)
        path = tmp_path / "paths.bin"
        mc.dump_paths(b, path)
        out = mc.load_paths(path)
        assert out["seed"] == 9
        assert out["steps"] == 4
        assert out["n_paths"] == 50
        assert_allclose(out["x"], b.x, rtol=0.0, atol=0.0)
        # Independent parse: three little-endian uint64, then row-major
        # little-endian float64 paths.
        raw = path.read_bytes()
        seed, steps, n_paths = struct.unpack("<3Q", raw[:24])
        assert (seed, steps, n_paths) == (9, 4, 50)
        body = np.frombuffer(raw[24:], dtype="<f8").reshape(50, 5)
        assert_allclose(body, b.x, rtol=0.0, atol=0.0)
        assert len(raw) == 24 + 50 * 5 * 8
