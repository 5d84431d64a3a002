"""Theta-scheme discretization of the pricing BSDE with Picard iterations.

One backward step on the cosine grid reads

    z_n = -((1-t2)/t2) E_n[z_{n+1}] + (1/(dt t2)) E_n[y_{n+1} dW]
          + ((1-t2)/t2) E_n[f_{n+1} dW],
    y_n = E_n[y_{n+1}] + dt t1 f(t_n, x, y_n, z_n) + dt (1-t1) E_n[f_{n+1}],

with the implicit y_n resolved by P Picard iterations started at
E_n[y_{n+1}].  All conditional expectations are cosine sums against the
approximated characteristic function; the coefficient vectors of y, z and f
are refreshed by a DCT at every step.

Driver sign conventions: ``driver_eval`` returns each mode's textbook
display, in which full-XVA mode is written against the PDE convention
"parabolic operator applied to u equals f" (its adjustment-free limit is
+r*y).  The scheme above consumes the BSDE-convention driver, which is the
*negative* of the PDE-convention one; ``scheme_driver`` performs that flip.
Simplified (-r_u*max(y,0)) and zero modes are already BSDE-convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import cos as cosmod
from . import charfunc, model as modelmod
from .errors import NumericalError

_MODES = ("zero", "simplified", "full")
_CLOSEOUTS = ("risky", "risk-free")


@dataclass(frozen=True)
class DriverSpec:
    """XVA rate set, margin/capital proportions and close-out rule.

    Spreads are always recomputed from their defining differences
    (lambda_B = r_B - r etc.), never stored.  ``margin_tc`` and
    ``margin_fc`` are the constant initial margins; the variation margin
    and capital are proportional to the live value, I_V = c2*y, K = c1*y.
    """

    mode: str = "simplified"
    rate_r: float = 0.0
    rate_b: float = 0.0
    rate_c: float = 0.0
    rate_f: float = 0.0
    rate_d: float = 0.0
    rate_i: float = 0.0
    rate_k: float = 0.0
    rate_tc: float = 0.0
    rate_fc: float = 0.0
    recovery_b: float = 1.0
    recovery_c: float = 1.0
    margin_tc: float = 0.0
    margin_fc: float = 0.0
    capital_c1: float = 0.0
    margin_c2: float = 0.0
    closeout: str = "risky"
    simplified_rate: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"unknown driver mode {self.mode!r}")
        if self.closeout not in _CLOSEOUTS:
            raise ValueError(f"unknown close-out rule {self.closeout!r}")
        for name in ("recovery_b", "recovery_c"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def lambda_b(self) -> float:
        return self.rate_b - self.rate_r

    @property
    def lambda_c(self) -> float:
        return self.rate_c - self.rate_r

    @property
    def lambda_f(self) -> float:
        return self.rate_f - self.rate_r

    @property
    def r_u(self) -> float:
        """Simplified-mode discount rate, defaulting to r."""
        return self.rate_r if self.simplified_rate is None else self.simplified_rate

    @property
    def needs_mtm(self) -> bool:
        return self.mode == "full" and self.closeout == "risk-free"

    def lipschitz_bound(self) -> float:
        """Upper bound on |df/dy|, used by the contraction check."""
        if self.mode == "zero":
            return 0.0
        if self.mode == "simplified":
            return abs(self.r_u)
        c1, c2 = self.capital_c1, self.margin_c2
        if self.closeout == "risky":
            slope_b = max(1.0, abs(c2 + (1.0 - c2) * self.recovery_b))
            slope_c = max(1.0, abs(c2 + (1.0 - c2) * self.recovery_c))
        else:
            slope_b = abs(c2) * max(abs(1.0 - self.recovery_b), 0.0)
            slope_c = abs(c2) * max(abs(1.0 - self.recovery_c), 0.0)
        return (
            abs(self.lambda_b) * (slope_b + 1.0)
            + abs(self.lambda_c) * (slope_c + 1.0)
            + abs(self.rate_r)
            + abs(self.rate_k) * abs(c1)
            + abs(self.rate_i + self.rate_r) * abs(c2)
            + abs(self.lambda_f) * (slope_b + abs(c2))
        )


def driver_eval(spec: DriverSpec, t, x, y, z, mtm=None):
    """Driver in each mode's documented convention (see module docstring).

    ``mtm`` supplies the external mark-to-market for the risk-free
    close-out; risky close-out uses y itself.
    """
    y = np.asarray(y, dtype=float)
    if spec.mode == "zero":
        return np.zeros_like(y)
    if spec.mode == "simplified":
        return -spec.r_u * np.maximum(y, 0.0)
    if spec.closeout == "risky":
        m_val = y
    else:
        if mtm is None:
            raise ValueError("risk-free close-out needs a mark-to-market input")
        m_val = np.asarray(mtm, dtype=float)
    iv = spec.margin_c2 * y
    cap = spec.capital_c1 * y
    wb = m_val - iv + spec.margin_tc
    wc = m_val - iv - spec.margin_fc
    theta_b = iv - spec.margin_tc + np.maximum(wb, 0.0) + spec.recovery_b * np.minimum(wb, 0.0)
    theta_c = iv + spec.margin_fc + spec.recovery_c * np.maximum(wc, 0.0) + np.minimum(wc, 0.0)
    return (
        -(theta_b - y) * spec.lambda_b
        - (theta_c - y) * spec.lambda_c
        + (spec.rate_tc + spec.rate_r) * spec.margin_tc
        - spec.rate_fc * spec.margin_fc
        - (spec.rate_i + spec.rate_r) * iv
        - spec.rate_k * cap
        + spec.rate_r * y
        + spec.lambda_f * np.minimum(theta_b - iv + spec.margin_tc, 0.0)
    )


def scheme_driver(spec: DriverSpec, t, x, y, z, mtm=None):
    """BSDE-convention driver consumed by the theta-scheme."""
    f = driver_eval(spec, t, x, y, z, mtm)
    return -f if spec.mode == "full" else f


@dataclass(frozen=True)
class BsdeGrid:
    """Time discretization: N steps of width dt, theta weights, Picard count."""

    n_steps: int
    dt: float
    theta1: float = 0.5
    theta2: float = 0.5
    picard: int = 5

    def __post_init__(self) -> None:
        if self.n_steps < 1 or self.dt <= 0.0:
            raise ValueError("need n_steps >= 1 and dt > 0")
        if not 0.0 <= self.theta1 <= 1.0:
            raise ValueError("theta1 must lie in [0, 1]")
        if not 0.0 < self.theta2 <= 1.0:
            raise ValueError("theta2 must lie in (0, 1]")
        if self.picard < 1:
            raise ValueError("need at least one Picard iteration")


def check_contraction(grid: BsdeGrid, spec: DriverSpec) -> None:
    """The implicit part is a contraction iff dt * theta1 * L_Lipschitz < 1."""
    lip = spec.lipschitz_bound()
    if grid.dt * grid.theta1 * lip >= 1.0:
        raise NumericalError(
            f"Picard contraction violated: dt*theta1*L = "
            f"{grid.dt * grid.theta1 * lip:.3g} >= 1"
        )


def theta_step(
    y_next: np.ndarray,
    z_next: np.ndarray,
    f_next: np.ndarray,
    kernel: cosmod.StepKernel,
    grid: cosmod.CosGrid,
    bgrid: BsdeGrid,
    spec: DriverSpec,
    t_now: float,
    sigma_now: np.ndarray,
    mtm_now=None,
    x_eval: np.ndarray | None = None,
):
    """One backward theta step.

    The next-level grids are DCT'd on the full node set; the kernel rows
    decide where the step is evaluated (grid nodes by default, arbitrary
    points via ``x_eval`` matching the kernel built by ``point_kernel``).
    f_next holds scheme-convention driver values at the later time level;
    the returned triple (y_now, z_now, f_now) keeps that invariant so steps
    chain without re-evaluating the driver.
    """
    dt, t1, t2 = bgrid.dt, bgrid.theta1, bgrid.theta2
    hy = cosmod.halve_first(cosmod.dct_coeffs(y_next, grid).values)
    hz = cosmod.halve_first(cosmod.dct_coeffs(z_next, grid).values)
    hf = cosmod.halve_first(cosmod.dct_coeffs(f_next, grid).values)
    ey = kernel.psi @ hy
    ez = kernel.psi @ hz
    ef = kernel.psi @ hf
    ey_dw = dt * sigma_now * (kernel.psi_dw @ hy)
    ef_dw = dt * sigma_now * (kernel.psi_dw @ hf)

    z_now = -((1.0 - t2) / t2) * ez + ey_dw / (dt * t2) + ((1.0 - t2) / t2) * ef_dw

    x = grid.nodes if x_eval is None else x_eval
    explicit = ey + dt * (1.0 - t1) * ef
    y_now = ey
    if t1 > 0.0:
        for _ in range(bgrid.picard):
            y_now = explicit + dt * t1 * scheme_driver(spec, t_now, x, y_now, z_now, mtm_now)
    else:
        y_now = explicit
    f_now = scheme_driver(spec, t_now, x, y_now, z_now, mtm_now)
    return y_now, z_now, f_now


@dataclass(frozen=True)
class BsdeSolution:
    """Backward solve output: value at the spot plus t_0 grids."""

    value: float
    y0: np.ndarray
    z0: np.ndarray
    grid: cosmod.CosGrid
    spot: float


def make_cos_grid(
    mdl: modelmod.ModelSpec, T: float, J: int, L: float = 10.0, center: float | None = None
) -> cosmod.CosGrid:
    """Truncation interval from the order-0 increment cumulants at the spot."""
    x0 = mdl.spot_x0 if center is None else center
    tay = modelmod.taylor_expand(mdl, 0.0, x0, 0)
    c1, c2, c4 = charfunc.cumulants(tay, 0.0, T)
    a, b = cosmod.truncation_range(x0 + c1, c2, c4, L)
    return cosmod.CosGrid(a, b, J)


def _node_kernel(
    mdl: modelmod.ModelSpec, grid: cosmod.CosGrid, t: float, t_next: float, order: int
) -> cosmod.StepKernel:
    tay = modelmod.taylor_expand(mdl, t, grid.nodes, order)
    cf = charfunc.build_order_n(tay, t, t_next, grid.freqs, order)
    return cosmod.step_kernel(cf, grid)


def solve_bsde(
    mdl: modelmod.ModelSpec,
    terminal: Callable[[np.ndarray], np.ndarray],
    terminal_dx: Callable[[np.ndarray], np.ndarray],
    T: float,
    bgrid: BsdeGrid,
    spec: DriverSpec,
    J: int = 256,
    L: float = 10.0,
    order: int = 2,
    grid: cosmod.CosGrid | None = None,
    mtm_grid: np.ndarray | None = None,
) -> BsdeSolution:
    """Solve the BSDE on [0, T] with terminal condition y_T = terminal(X_T).

    The expectation kernel is built once: the model coefficients are
    time-homogeneous and every step spans the same dt.  z at the terminal
    time is terminal_dx * sigma.  ``mtm_grid`` (n_steps+1, J) feeds the
    risk-free close-out when the full driver requires it.
    """
    if not math.isclose(bgrid.n_steps * bgrid.dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("bgrid must tile [0, T]")
    check_contraction(bgrid, spec)
    if spec.needs_mtm and mtm_grid is None:
        raise ValueError("risk-free close-out needs an mtm grid; run a zero-driver pass first")
    if grid is None:
        grid = make_cos_grid(mdl, T, J, L)
    x = grid.nodes
    kernel = _node_kernel(mdl, grid, 0.0, bgrid.dt, order)

    y = np.asarray(terminal(x), dtype=float)
    z = np.asarray(terminal_dx(x), dtype=float) * mdl.sigma(T, x)
    mtm_T = mtm_grid[bgrid.n_steps] if mtm_grid is not None else None
    f = scheme_driver(spec, T, x, y, z, mtm_T)
    for n in range(bgrid.n_steps - 1, 0, -1):
        t_now = n * bgrid.dt
        mtm_now = mtm_grid[n] if mtm_grid is not None else None
        y, z, f = theta_step(
            y, z, f, kernel, grid, bgrid, spec, t_now, mdl.sigma(t_now, x), mtm_now
        )

    # Final step twice: once on the nodes for the t_0 grids, once as a
    # scalar evaluation at the spot with the expansion re-based at X0.
    mtm0 = mtm_grid[0] if mtm_grid is not None else None
    y0, z0, _ = theta_step(y, z, f, kernel, grid, bgrid, spec, 0.0, mdl.sigma(0.0, x), mtm0)
    value = spot_step(mdl, y, z, f, grid, bgrid, spec, 0.0, order, mtm0)
    return BsdeSolution(value=value, y0=y0, z0=z0, grid=grid, spot=mdl.spot_x0)


def spot_step(
    mdl: modelmod.ModelSpec,
    y_next: np.ndarray,
    z_next: np.ndarray,
    f_next: np.ndarray,
    grid: cosmod.CosGrid,
    bgrid: BsdeGrid,
    spec: DriverSpec,
    t_now: float,
    order: int,
    mtm_now=None,
) -> float:
    """Evaluate one backward step at the spot only, basepoint X0."""
    x0 = mdl.spot_x0
    tay = modelmod.taylor_expand(mdl, t_now, x0, order)
    cf = charfunc.build_order_n(tay, t_now, t_now + bgrid.dt, grid.freqs, order)
    kern = cosmod.point_kernel(cf, grid, [x0])
    if mtm_now is not None:
        mtm_now = np.atleast_1d(np.asarray(mtm_now, dtype=float))
        if mtm_now.shape[0] != 1:
            # interpolate a node-grid mtm onto the spot
            mtm_now = np.atleast_1d(np.interp(x0, grid.nodes, mtm_now))
    y_spot, _, _ = theta_step(
        y_next,
        z_next,
        f_next,
        kern,
        grid,
        bgrid,
        spec,
        t_now,
        np.atleast_1d(mdl.sigma(t_now, np.array([x0]))),
        mtm_now,
        x_eval=np.array([x0]),
    )
    return float(y_spot[0])
