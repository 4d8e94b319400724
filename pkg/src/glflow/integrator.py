"""Time stepping for  u_t = Lap u + u (1 - |u|^2) / eps^2  on the periodic box.

Two schemes:

* ``spectral_if``: integrating factor on the exact Fourier Laplacian.
  Order 1 is  u+ = E (u + dt f(u)),  E = exp(-k^2 dt); order 2 is the
  Heun variant  u* = E(u + dt f(u)),  u+ = E(u + dt/2 f(u)) + dt/2 f(u*).
* ``explicit_fd``: forward Euler with the central-difference Laplacian,
  kept as an independent oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import ComplexField, GridSpec, fftn, gradient, ifftn, laplacian

log = logging.getLogger(__name__)

SCHEMES = ("spectral_if", "explicit_fd")


class StepError(FloatingPointError):
    """Non-finite values produced by a step."""


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "spectral_if"
    order: int = 1
    t_end: float | None = None
    cadence: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.order == 2 and self.scheme != "spectral_if":
            raise ValueError("second order is only available for spectral_if")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")

    def max_dt(self, grid: GridSpec, sup: float = 1.0) -> float:
        """Stability bound. ``sup`` is sup|u|: an explicit reaction step from
        modulus a > 1 stays above the unit circle only for dt <= eps^2 / (a(a+1))."""
        limit = min(grid.epsilon**2 / 4, grid.epsilon**2 / (sup * (sup + 1)))
        if self.scheme == "explicit_fd":
            limit = min(limit, grid.h**2 / (2 * grid.dim))
        return limit

    def validate(self, grid: GridSpec, sup: float = 1.0) -> None:
        limit = self.max_dt(grid, sup)
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:g} violates the {self.scheme} stability bound dt <= {limit:g}"
                             + (f" (sup|u| = {sup:.4g})" if sup > 1 else ""))


def reaction(values: np.ndarray, epsilon: float) -> np.ndarray:
    return values * (1.0 - (values.real**2 + values.imag**2)) / epsilon**2


def rhs(grid: GridSpec, values: np.ndarray, scheme: str = "spectral_if") -> np.ndarray:
    """Right side of the equation: Lap u + f(u)."""
    lap = laplacian(grid, values, spectral=(scheme != "explicit_fd"))
    return lap + reaction(values, grid.epsilon)


def dudt(field: ComplexField, scheme: str = "spectral_if") -> np.ndarray:
    """Time derivative taken from the equation itself, not from a time difference."""
    return rhs(field.grid, field.values, scheme)


@lru_cache(maxsize=16)
def _propagator(grid: GridSpec, dt: float) -> np.ndarray:
    return np.exp(-grid.k2 * dt)


def _advance(grid: GridSpec, u: np.ndarray, dt: float, scheme: str, order: int) -> np.ndarray:
    eps = grid.epsilon
    if scheme == "explicit_fd":
        return u + dt * (laplacian(grid, u, spectral=False) + reaction(u, eps))
    E = _propagator(grid, dt)
    f0 = reaction(u, eps)
    if order == 1:
        return ifftn(E * fftn(u + dt * f0))
    pred = ifftn(E * fftn(u + dt * f0))
    half = ifftn(E * fftn(u + 0.5 * dt * f0))
    return half + 0.5 * dt * reaction(pred, eps)


def step(field: ComplexField, cfg: StepperConfig, dt: float | None = None) -> ComplexField:
    """One step of size ``dt`` (default ``cfg.dt``; shorter steps are allowed)."""
    grid = field.grid
    cfg.validate(grid)
    dt = cfg.dt if dt is None else dt
    if dt > cfg.dt * (1 + 1e-8):
        raise ValueError("step longer than the configured dt")
    sup = field.sup()
    if dt * sup * (sup + 1) > grid.epsilon**2 * (1 + 1e-9):
        raise ValueError(f"dt={dt:g} too large for sup|u| = {sup:.4g}: the reaction term needs "
                         f"dt <= eps^2/(sup|u|(sup|u| + 1)) = {grid.epsilon**2 / (sup * (sup + 1)):g}")
    out = _advance(grid, field.values, dt, cfg.scheme, cfg.order)
    if not np.all(np.isfinite(out)):
        resid = float(np.max(np.abs(rhs(grid, field.values, cfg.scheme))))
        raise StepError(f"non-finite field after step at t={field.t + dt:.6g} (max |rhs| before step {resid:.3g})")
    return ComplexField(grid, out, field.t + dt, field.meta)


@dataclass
class History:
    """Sup norms recorded along an evolution."""

    t: list = dc_field(default_factory=list)
    sup_u: list = dc_field(default_factory=list)
    sup_grad: list = dc_field(default_factory=list)
    sup_dudt: list = dc_field(default_factory=list)
    u0_sup: float | None = None

    def record(self, field: ComplexField, du: np.ndarray) -> None:
        if self.u0_sup is None:
            self.u0_sup = field.sup()
        self.t.append(field.t)
        self.sup_u.append(field.sup())
        g = gradient(field.grid, field.values)
        self.sup_grad.append(float(np.sqrt(np.max(sum(np.abs(c) ** 2 for c in g)))))
        self.sup_dudt.append(float(np.max(np.abs(du))))

    def pointwise_constants(self, epsilon: float) -> dict:
        """Measured K in  sup|grad u| <= K/eps,  sup|u_t| <= K/eps^2  for t >= eps^2."""
        t = np.asarray(self.t)
        late = t >= epsilon**2 * (1 - 1e-9)
        if not np.any(late):
            return {"K_grad": float("nan"), "K_dt": float("nan"), "sup_u": float("nan")}
        return {
            "K_grad": float(np.max(np.asarray(self.sup_grad)[late]) * epsilon),
            "K_dt": float(np.max(np.asarray(self.sup_dudt)[late]) * epsilon**2),
            "sup_u": float(np.max(np.asarray(self.sup_u)[late])),
        }


Callback = Callable[[float, ComplexField, np.ndarray], None]


def evolve_to(field: ComplexField, t_target: float, cfg: StepperConfig,
              callbacks: Iterable[Callback] = (), stops: Sequence[float] = (),
              history: History | None = None, emit_start: bool = True) -> ComplexField:
    """Step until ``t_target``.

    Callbacks get (t, field, du/dt) at the start, every ``cfg.cadence`` steps,
    at every time in ``stops`` (landed on exactly by shortening a step) and at
    the end. ``emit_start=False`` skips the first sample, for continuing a
    run whose previous segment already reported it.
    """
    if t_target < field.t - 1e-12:
        raise ValueError(f"t_target={t_target:g} is before field time {field.t:g}")
    callbacks = list(callbacks)
    stops = sorted(s for s in stops if field.t + 1e-12 < s < t_target - 1e-12)
    tol = 1e-9 * cfg.dt

    def emit(f):
        if callbacks or history is not None:
            du = dudt(f, cfg.scheme)
            if history is not None:
                history.record(f, du)
            for cb in callbacks:
                cb(f.t, f, du)

    if abs(t_target - field.t) <= tol:
        if emit_start:
            emit(field)
        return field
    if emit_start:
        emit(field)
    n = 0
    while t_target - field.t > tol:
        nxt = stops[0] if stops else t_target
        dt = min(cfg.dt, nxt - field.t)
        # avoid a sliver step right before a stop
        if nxt - field.t - dt < tol:
            dt = nxt - field.t
        field = step(field, cfg, dt)
        landed = stops and abs(field.t - stops[0]) <= tol
        if landed or abs(field.t - t_target) <= tol:
            field = ComplexField(field.grid, field.values, nxt, field.meta)
        n += 1
        if landed:
            stops.pop(0)
            emit(field)
        elif n % cfg.cadence == 0 or abs(field.t - t_target) <= tol:
            emit(field)
    return field


# Maximum principle ---------------------------------------------------------


def supersolution(s, u0_sup: float):
    """Comparison function for  sup(|u|^2 - 1)  in the fast time s = t/eps^2.

    y(s) = q/(1-q), q = exp(-(s - t0)/2), t0 = 2 ln(1 - 1/M^2), M = max(1, sup|u0|).
    It decays more slowly than the solution of  y' = -2y(y+1)  with the same
    initial value, so it is a supersolution of that equation.
    """
    M = max(1.0, u0_sup)
    s = np.asarray(s, dtype=float)
    if M == 1.0:
        return np.zeros_like(s)
    t0 = 2 * math.log(1 - 1 / M**2)
    q = np.exp(-(s - t0) / 2)
    return q / (1 - q)


def ode_excess(s, u0_sup: float):
    """Exact solution of  y' = -2y(y+1),  y(0) = M^2 - 1  (spatially constant data)."""
    M = max(1.0, u0_sup)
    s = np.asarray(s, dtype=float)
    y0 = M**2 - 1
    if y0 == 0:
        return np.zeros_like(s)
    q0 = y0 / (1 + y0)
    q = q0 * np.exp(-2 * s)
    return q / (1 - q)


@dataclass
class SupersolutionReport:
    t: np.ndarray
    excess: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    tol: float
    passed: bool

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margin)) if self.margin.size else 0.0


def supersolution_check(history: History, epsilon: float, tol: float = 1e-3) -> SupersolutionReport:
    """Check sup(|u|^2 - 1) <= y(t/eps^2) at every recorded time."""
    if history.u0_sup is None:
        raise ValueError("empty history")
    t = np.asarray(history.t, dtype=float)
    excess = np.asarray(history.sup_u) ** 2 - 1.0
    bound = supersolution(t / epsilon**2, history.u0_sup)
    margin = bound - excess
    passed = bool(np.all(margin >= -tol))
    if not passed:
        log.warning("supersolution bound violated by %.3g", -float(np.min(margin)))
    return SupersolutionReport(t, excess, bound, margin, tol, passed)
