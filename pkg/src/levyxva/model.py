"""Defaultable local Levy model: coefficients, drift restriction, Taylor data.

The state is the log-asset X with dynamics

    dX_t = mu(X_t) dt + sigma(X_t) dW_t + integral q dN~(dt, dq),

where N~ is the compensated jump measure of a compound Poisson process with
state-dependent intensity a(x) and Gaussian jump sizes N(jump_mean,
jump_std^2), and gamma(x) >= 0 is the default (killing) intensity.  The
drift mu is not free: it is pinned by the martingale restriction so that the
defaultable asset grows at rate r + gamma(x) under the pricing measure,

    mu(x) = gamma(x) + r - sigma(x)^2 / 2 - a(x) * kappa,
    kappa = E[e^q - 1 - q] = exp(m + d^2/2) - 1 - m.

All state-dependent coefficients live in a small closed family (zero,
constant, exponential level*exp(slope*x)) so that Taylor coefficients about
a basepoint, and hence the frozen-coefficient cumulants, stay in closed
form.  ``taylor_expand`` packages the per-order coefficients; callers that
need a coefficient set outside the family can build a ``TaylorData``
directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_FAMILY_KINDS = ("zero", "const", "exp")


@dataclass(frozen=True)
class CoeffFamily:
    """State-dependent coefficient g(x) = level * exp(slope * x).

    kind "zero" is the constant 0, "const" ignores slope, "exp" is the
    general member.  Constant members produce exactly-zero higher Taylor
    coefficients, which downstream code relies on for the constant
    coefficient (Merton) collapse.
    """

    kind: str
    level: float = 0.0
    slope: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _FAMILY_KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")

    @staticmethod
    def zero() -> "CoeffFamily":
        return CoeffFamily("zero")

    @staticmethod
    def const(level: float) -> "CoeffFamily":
        return CoeffFamily("const", float(level))

    @staticmethod
    def exponential(level: float, slope: float) -> "CoeffFamily":
        return CoeffFamily("exp", float(level), float(slope))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.level == 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "const":
            return np.full_like(x, self.level)
        return self.level * np.exp(self.slope * x)

    def taylor_coeffs(self, xbar, order: int) -> np.ndarray:
        """Coefficients g_k = g^(k)(xbar) / k! for k = 0..order.

        Shape (order+1,) for scalar xbar, (order+1, len(xbar)) for arrays.
        """
        xbar = np.asarray(xbar, dtype=float)
        out = np.zeros((order + 1,) + xbar.shape)
        base = self(xbar)
        slope = self.slope if self.kind == "exp" else 0.0
        fact = 1.0
        for k in range(order + 1):
            if k > 0:
                fact *= k
            out[k] = base * slope**k / fact
        return out

    def scaled(self, factor: float) -> "CoeffFamily":
        if self.kind == "zero":
            return self
        return CoeffFamily(self.kind, self.level * factor, self.slope)


@dataclass(frozen=True)
class JumpLaw:
    """Gaussian jump-size law N(mean, std^2); std >= 0."""

    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self) -> None:
        if self.std < 0.0:
            raise ValueError("jump std must be nonnegative")

    def raw_moment4(self) -> float:
        m, d = self.mean, self.std
        return m**4 + 6.0 * m**2 * d**2 + 3.0 * d**4


def jump_compensator_kappa(law: JumpLaw) -> float:
    """kappa = E[e^q - 1 - q] for q ~ N(mean, std^2)."""
    return math.exp(law.mean + 0.5 * law.std**2) - 1.0 - law.mean


@dataclass(frozen=True)
class ModelSpec:
    """Full model: vol/jump/default coefficient families plus rate and spot."""

    vol: CoeffFamily
    jump_intensity: CoeffFamily
    jump_law: JumpLaw
    default_intensity: CoeffFamily
    rate_r: float
    spot_x0: float = 0.0

    def __post_init__(self) -> None:
        for name in ("vol", "jump_intensity", "default_intensity"):
            fam = getattr(self, name)
            if fam.level < 0.0 and name != "vol":
                raise ValueError(f"{name} level must be nonnegative")

    def sigma(self, t, x):
        return self.vol(x)

    def intensity_a(self, t, x):
        return self.jump_intensity(x)

    def gamma(self, t, x):
        return self.default_intensity(x)

    @property
    def kappa(self) -> float:
        return jump_compensator_kappa(self.jump_law)

    def without_default(self) -> "ModelSpec":
        """Default-free companion: gamma removed everywhere, including from
        the drift restriction."""
        if self.default_intensity.is_zero:
            return self
        return ModelSpec(
            vol=self.vol,
            jump_intensity=self.jump_intensity,
            jump_law=self.jump_law,
            default_intensity=CoeffFamily.zero(),
            rate_r=self.rate_r,
            spot_x0=self.spot_x0,
        )

    def with_default(self, intensity: CoeffFamily) -> "ModelSpec":
        return ModelSpec(
            vol=self.vol,
            jump_intensity=self.jump_intensity,
            jump_law=self.jump_law,
            default_intensity=intensity,
            rate_r=self.rate_r,
            spot_x0=self.spot_x0,
        )


def martingale_drift(model: ModelSpec, t, x):
    """mu(x) = gamma + r - sigma^2/2 - a*kappa (martingale restriction)."""
    x = np.asarray(x, dtype=float)
    sig = model.sigma(t, x)
    return (
        model.gamma(t, x)
        + model.rate_r
        - 0.5 * sig * sig
        - model.intensity_a(t, x) * model.kappa
    )


@dataclass(frozen=True)
class TaylorData:
    """Taylor coefficients of the model coefficients about a basepoint.

    Row k of each array holds the k-th derivative over k!, evaluated at the
    basepoint (scalar basepoint: shape (order+1,); vector basepoint: shape
    (order+1, n)).  ``s`` expands sigma^2/2, not sigma.  ``mu`` already
    contains the drift restriction, so mu_0 = gamma_0 + r - s_0 - a_0*kappa
    and mu_k = gamma_k - s_k - a_k*kappa for k >= 1.

    Instances are normally produced by ``taylor_expand`` but can be built by
    hand for coefficient sets outside the closed families.
    """

    basepoint: np.ndarray
    order: int
    s: np.ndarray
    mu: np.ndarray
    a: np.ndarray
    gamma: np.ndarray
    jump_mean: float
    jump_std: float

    def __post_init__(self) -> None:
        for name in ("s", "mu", "a", "gamma"):
            arr = getattr(self, name)
            if arr.shape[0] != self.order + 1:
                raise ValueError(f"{name} must have order+1 coefficient rows")


def taylor_expand(model: ModelSpec, t, xbar, order: int) -> TaylorData:
    """Expand s = sigma^2/2, mu, a, gamma about xbar to the given order.

    The squared-vol family of sigma(x) = level*exp(slope*x) is
    (level^2/2)*exp(2*slope*x), still inside the family, so every
    coefficient is closed-form.  Constant families yield exactly zero
    higher-order rows.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    xbar = np.asarray(xbar, dtype=float)
    s_fam = CoeffFamily(
        "zero" if model.vol.is_zero else "exp",
        0.5 * model.vol.level**2,
        2.0 * model.vol.slope if model.vol.kind == "exp" else 0.0,
    )
    s = s_fam.taylor_coeffs(xbar, order)
    a = model.jump_intensity.taylor_coeffs(xbar, order)
    gamma = model.default_intensity.taylor_coeffs(xbar, order)
    mu = gamma - s - a * model.kappa
    mu[0] = mu[0] + model.rate_r
    return TaylorData(
        basepoint=xbar,
        order=order,
        s=s,
        mu=mu,
        a=a,
        gamma=gamma,
        jump_mean=model.jump_law.mean,
        jump_std=model.jump_law.std,
    )
