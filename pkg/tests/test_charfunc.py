"""Tests for the approximate characteristic-function builder.

The expansion is exact when every model coefficient is constant in the
state (the frozen-coefficient limit), so a closed-form jump-diffusion
characteristic function written out independently here serves as the
primary oracle.  State-dependent behaviour is checked against a seeded
Monte Carlo estimate of the true conditional characteristic function:
the order-0/1/2 approximations must improve in that order.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import levyxva as lx
from levyxva import charfunc, mc, model

from conftest import make_benchmark_model, make_constant_model, replace_spot


def exact_const_cf(sig, lam, m, delta, rate_r, gamma0, tau, xi):
    """Closed-form E[e^{i xi X_tau}] factor for constant coefficients.

    Written out from scratch (drift restriction included) so that it is
    independent of the implementation under test.
    """
    xi = np.asarray(xi, dtype=complex)
    kappa = math.exp(m + 0.5 * delta**2) - 1.0 - m
    mu = gamma0 + rate_r - 0.5 * sig**2 - lam * kappa
    nuhat = np.exp(1j * m * xi - 0.5 * delta**2 * xi**2)
    psi = (
        1j * xi * mu
        - 0.5 * sig**2 * xi**2
        - gamma0
        + lam * (nuhat - 1.0 - 1j * m * xi)
    )
    return np.exp(tau * psi)


class TestFrozenCoefficientLimit:
    """Constant coefficients: every order reproduces the exact factor."""

    params = dict(sig=0.2, lam=0.3, m=-0.1, delta=0.15, rate_r=0.05)

    @pytest.mark.parametrize("order", [0, 1, 2])
    @pytest.mark.parametrize("gamma0", [0.0, 0.07])
    def test_matches_closed_form(self, order, gamma0):
        mdl = make_constant_model(gamma0=gamma0, **self.params)
        tay = model.taylor_expand(mdl, 0.0, 0.0, order)
        tau = 0.75
        xi = np.linspace(0.0, 40.0, 101)
        cf = charfunc.build_order_n(tay, 0.0, tau, xi, order)
        want = exact_const_cf(gamma0=gamma0, tau=tau, xi=xi, **self.params)
        assert_allclose(cf.g[0], want, atol=1e-12, rtol=0.0)
        # The state-correction rows vanish identically: the factor cannot
        # depend on the evaluation point when nothing varies with x.
        for k in range(1, order + 1):
            assert_allclose(cf.g[k], 0.0, atol=1e-14)
        # eval(x) is the full conditional factor, translation included.
        assert_allclose(
            cf.eval(1.3), want * np.exp(1.3j * xi), atol=1e-12, rtol=0.0
        )

    def test_order0_and_ordern_agree(self):
        mdl = make_constant_model(gamma0=0.0, **self.params)
        tay = model.taylor_expand(mdl, 0.0, 0.0, 2)
        xi = np.linspace(0.0, 25.0, 50)
        lo = charfunc.build_order0(tay, 0.0, 0.5, xi)
        hi = charfunc.build_order_n(tay, 0.0, 0.5, xi, 2)
        assert lo.order == 0 and hi.order == 2
        assert_allclose(hi.g[0], lo.g[0], atol=1e-15)

    def test_metadata_carried(self):
        mdl = make_constant_model(gamma0=0.0, **self.params)
        tay = model.taylor_expand(mdl, 0.2, 0.4, 1)
        xi = np.array([0.0, 2.0])
        cf = charfunc.build_order_n(tay, 0.2, 1.0, xi, 1)
        assert cf.order == 1
        assert cf.basepoint == pytest.approx(0.4)
        assert cf.t == pytest.approx(0.2) and cf.T == pytest.approx(1.0)
        assert_allclose(cf.freqs, xi)


class TestSymbolProperties:
    """Structural identities of the frozen symbol and its exponential."""

    @settings(max_examples=60, deadline=None)
    @given(
        sig=st.floats(0.05, 0.6),
        lam=st.floats(0.0, 1.0),
        m=st.floats(-0.5, 0.3),
        delta=st.floats(0.01, 0.5),
        gamma0=st.floats(0.0, 0.3),
        tau=st.floats(0.05, 2.0),
    )
    def test_hermitian_symmetry_and_modulus_bound(
        self, sig, lam, m, delta, gamma0, tau
    ):
        mdl = make_constant_model(sig, lam, m, delta, 0.04, gamma0)
        tay = model.taylor_expand(mdl, 0.0, 0.0, 0)
        xi = np.linspace(0.25, 30.0, 17)
        pos = charfunc.build_order0(tay, 0.0, tau, xi).g[0]
        neg = charfunc.build_order0(tay, 0.0, tau, -xi).g[0]
        # Real-valued increments force a Hermitian factor ...
        assert_allclose(neg, np.conj(pos), rtol=0.0, atol=1e-12)
        # ... whose modulus is capped by pure killing at rate gamma0.
        assert np.all(np.abs(pos) <= math.exp(-tau * gamma0) + 1e-12)

    def test_martingale_value_at_minus_i(self, model_linear):
        # gamma == 0: the symbol at xi = -i must equal the short rate, so
        # that e^{-r tau} E[e^{X_tau}] = e^{x}.
        tay = model.taylor_expand(model_linear, 0.0, 0.4, 0)
        val = charfunc.levy_symbol_psi(tay, np.array(-1.0j))
        assert_allclose(complex(val), 0.1 + 0.0j, atol=1e-14)


class TestCumulants:
    """Truncation cumulants against finite differences of the symbol."""

    def _fd_cumulants(self, tay, tau):
        # Small step for the low derivatives; a wider one for the 4th,
        # where h**4 in the denominator would otherwise amplify rounding
        # noise past the size of the cumulant itself.
        h = 1e-3
        vals = tau * charfunc.levy_symbol_psi(tay, np.arange(-1, 2) * h)
        d1 = (vals[2] - vals[0]) / (2 * h)
        d2 = (vals[2] - 2 * vals[1] + vals[0]) / h**2
        h = 2e-2
        vals = tau * charfunc.levy_symbol_psi(tay, np.arange(-3, 4) * h)
        d4 = (
            -vals[0] / 6
            + 2 * vals[1]
            - 6.5 * vals[2]
            + 28 / 3 * vals[3]
            - 6.5 * vals[4]
            + 2 * vals[5]
            - vals[6] / 6
        ) / h**4
        # cumulant_n = i^{-n} d^n/dxi^n of the exponent at xi = 0.
        return (d1 / 1j).real, (d2 / 1j**2).real, (d4 / 1j**4).real

    @pytest.mark.parametrize("tau", [0.25, 1.0])
    def test_matches_derivatives(self, model_put, tau):
        tay = model.taylor_expand(model_put, 0.0, 0.0, 2)
        c1, c2, c4 = charfunc.cumulants(tay, 0.0, tau)
        f1, f2, f4 = self._fd_cumulants(tay, tau)
        assert_allclose(c1, f1, rtol=1e-6)
        assert_allclose(c2, f2, rtol=1e-6)
        assert_allclose(c4, f4, rtol=1e-3)
        assert c2 > 0.0 and c4 > 0.0

    def test_linear_in_horizon(self, model_put):
        tay = model.taylor_expand(model_put, 0.0, 0.0, 0)
        one = np.array(charfunc.cumulants(tay, 0.0, 0.5))
        two = np.array(charfunc.cumulants(tay, 0.0, 1.0))
        assert_allclose(two, 2.0 * one, rtol=1e-13)


class TestMassAtZeroFrequency:
    """xi = 0 carries total mass: 1 without killing, e^{-tau gamma} with."""

    def test_no_default_rows(self, model_linear):
        tay = model.taylor_expand(model_linear, 0.0, 0.4, 2)
        xi = np.array([0.0, 1.0])
        cf = charfunc.build_order_n(tay, 0.0, 0.8, xi, 2)
        assert_allclose(cf.g[0][0], 1.0, atol=1e-14)
        assert_allclose(cf.g[1][0], 0.0, atol=1e-14)
        assert_allclose(cf.g[2][0], 0.0, atol=1e-14)

    def test_killed_leading_row(self, model_put):
        tay = model.taylor_expand(model_put, 0.0, 0.0, 0)
        tau = 0.6
        cf = charfunc.build_order0(tay, 0.0, tau, np.array([0.0]))
        # gamma(0) = 0.1 for the defaultable benchmark model.
        assert_allclose(cf.g[0][0], math.exp(-tau * 0.1), rtol=1e-14)


class TestTrustRegion:
    """Out-of-regime correction factors fall back to the order-0 value."""

    def _texas_grid(self, model_linear):
        tay = model.taylor_expand(model_linear, 0.0, 0.4, 2)
        xi = np.linspace(0.0, 120.0, 241)
        return tay, xi

    def test_span_reverts_everything(self, model_linear):
        tay, xi = self._texas_grid(model_linear)
        base = charfunc.build_order0(tay, 0.0, 0.5, xi)
        capped = charfunc.build_order_n(tay, 0.0, 0.5, xi, 2, span=1e9)
        assert_allclose(capped.g[0], base.g[0], atol=0.0, rtol=0.0)
        assert_allclose(capped.g[1], 0.0, atol=0.0)
        assert_allclose(capped.g[2], 0.0, atol=0.0)

    def test_default_span_keeps_low_frequency_corrections(self, model_linear):
        tay, xi = self._texas_grid(model_linear)
        cf = charfunc.build_order_n(tay, 0.0, 0.5, xi, 2)
        low = xi <= 5.0
        assert np.any(np.abs(cf.g[1][low]) > 1e-3)
        assert np.any(np.abs(cf.g[2][low]) > 1e-4)

    def test_high_frequency_tail_is_order0(self, model_linear):
        # At tau = 2 the quadratic-in-tau correction factors leave the
        # trust region well before the top of this frequency grid.
        tay, xi = self._texas_grid(model_linear)
        base = charfunc.build_order0(tay, 0.0, 2.0, xi)
        cf = charfunc.build_order_n(tay, 0.0, 2.0, xi, 2)
        tail = xi >= 100.0
        assert np.all(cf.g[1][tail] == 0.0)
        assert np.all(cf.g[2][tail] == 0.0)
        assert_allclose(cf.g[0][tail], base.g[0][tail], rtol=0.0, atol=0.0)


@pytest.fixture(scope="module")
def mc_estimate():
    mdl = replace_spot(make_benchmark_model(0.1, 0.0), 0.3)
    batch = mc.simulate(mdl, 0.5, 300, 300_000, seed=1234)
    xi = np.linspace(0.5, 8.0, 12)
    est, _ = mc.estimate_charfunc(batch, xi)
    return mdl, xi, est


class TestStateCorrectionsImprove:
    """Seeded Monte Carlo oracle for the conditional factor.

    Simulating the state-dependent dynamics from a spot displaced from
    the expansion basepoint gives an unbiased estimate (up to the Euler
    step) of the true conditional characteristic function.  Successive
    expansion orders must move the approximation toward it.
    """

    def test_error_drops_with_order(self, mc_estimate):
        mdl, xi, est = mc_estimate
        errs = []
        for order in range(3):
            tay = model.taylor_expand(mdl, 0.0, 0.0, order)
            cf = charfunc.build_order_n(tay, 0.0, 0.5, xi, order)
            errs.append(np.max(np.abs(cf.eval(0.3) - est)))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 0.4 * errs[0]


class TestValidation:
    def test_rejects_unsupported_order(self, model_linear):
        tay = model.taylor_expand(model_linear, 0.0, 0.0, 2)
        with pytest.raises(ValueError):
            charfunc.build_order_n(tay, 0.0, 0.5, np.array([1.0]), 3)

    def test_rejects_underresolved_taylor_rows(self, model_linear):
        tay = model.taylor_expand(model_linear, 0.0, 0.0, 0)
        with pytest.raises(ValueError):
            charfunc.build_order_n(tay, 0.0, 0.5, np.array([1.0]), 2)
