"""Shared fixtures: the two benchmark model configurations.

``model_linear`` is the XVA benchmark (linear portfolio payoff, r = 0.1,
no default intensity); ``model_put`` is the CVA benchmark (Bermudan put,
r = 0.05, exponential default intensity c = 0.1).  Both use the same
exponential coefficient families sigma(x) = 0.15 e^{-2x},
a(x) = 0.2 e^{-2x} with N(-0.2, 0.2^2) jumps.
"""

import dataclasses

import pytest

import levyxva as lx


def make_benchmark_model(rate_r, c_default, x0=0.0):
    fam = (
        lx.CoeffFamily.exponential(c_default, -2.0)
        if c_default > 0.0
        else lx.CoeffFamily.zero()
    )
    return lx.ModelSpec(
        vol=lx.CoeffFamily.exponential(0.15, -2.0),
        jump_intensity=lx.CoeffFamily.exponential(0.2, -2.0),
        jump_law=lx.JumpLaw(-0.2, 0.2),
        rate_r=rate_r,
        default_intensity=fam,
        spot_x0=x0,
    )


def make_constant_model(sig, lam, m, delta, rate_r, gamma0, x0=0.0):
    return lx.ModelSpec(
        vol=lx.CoeffFamily.const(sig),
        jump_intensity=lx.CoeffFamily.const(lam) if lam > 0 else lx.CoeffFamily.zero(),
        jump_law=lx.JumpLaw(m, delta),
        rate_r=rate_r,
        default_intensity=(
            lx.CoeffFamily.const(gamma0) if gamma0 > 0 else lx.CoeffFamily.zero()
        ),
        spot_x0=x0,
    )


@pytest.fixture(scope="session")
def model_linear():
    return make_benchmark_model(rate_r=0.1, c_default=0.0, x0=0.4)


@pytest.fixture(scope="session")
def model_put():
    return make_benchmark_model(rate_r=0.05, c_default=0.1, x0=0.0)


@pytest.fixture(scope="session")
def model_put_riskfree():
    return make_benchmark_model(rate_r=0.05, c_default=0.0, x0=0.0)


def replace_spot(mdl, x0):
    return dataclasses.replace(mdl, spot_x0=x0)
