"""Periodic grid geometry, the complex order-parameter field and spectral operators."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
import math

import numpy as np
import scipy.fft as sfft

_workers: int | None = None


def set_workers(n: int | None) -> None:
    """Worker count handed to scipy.fft. Results do not depend on it."""
    global _workers
    _workers = n


def fftn(a, axes=None):
    return sfft.fftn(a, axes=axes, workers=_workers)


def ifftn(a, axes=None):
    return sfft.ifftn(a, axes=axes, workers=_workers)


def grid_sum(a: np.ndarray) -> float:
    """Deterministic sum over all nodes.

    numpy reduces contiguous 1-d arrays with fixed-order pairwise summation,
    so the result is independent of thread count and platform.
    """
    return float(np.sum(np.ascontiguousarray(a).ravel()))


@dataclass(frozen=True)
class GridSpec:
    """Periodic box of ``dim`` axes with ``n`` nodes each, spacing ``h``.

    ``epsilon`` is the coherence length of the equation and is part of the
    grid because it fixes every resolution requirement.
    """

    dim: int
    n: tuple[int, ...]
    h: float
    epsilon: float

    def __post_init__(self):
        n = tuple(int(v) for v in np.broadcast_to(np.asarray(self.n), (self.dim,)))
        object.__setattr__(self, "n", n)
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        for ni in n:
            if ni < 8 or ni % 2:
                raise ValueError(f"cells per axis must be even and >= 8, got {n}")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        if self.epsilon < 3 * self.h * (1 - 1e-12):
            raise ValueError(
                f"epsilon={self.epsilon:g} under-resolved: need epsilon >= 3h = {3 * self.h:g}"
            )
        if min(self.lengths) < 16 * self.epsilon * (1 - 1e-12):
            raise ValueError(
                f"box length {min(self.lengths):g} must be >= 16*epsilon = {16 * self.epsilon:g}"
            )

    @classmethod
    def from_length(cls, dim: int, n: int | tuple[int, ...], length: float, epsilon: float) -> GridSpec:
        n0 = n if isinstance(n, int) else n[0]
        return cls(dim=dim, n=n, h=length / n0, epsilon=epsilon)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(ni * self.h for ni in self.n)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def log_eps(self) -> float:
        """|ln epsilon|, the natural log of 1/epsilon."""
        return abs(math.log(self.epsilon))

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [self.h * np.arange(ni) for ni in self.n]

    def coords(self) -> list[np.ndarray]:
        """Broadcastable node coordinates, one array per axis."""
        out = []
        for i, x in enumerate(self.axes):
            shape = [1] * self.dim
            shape[i] = x.size
            out.append(x.reshape(shape))
        return out

    @cached_property
    def wavenumbers(self) -> list[np.ndarray]:
        """Broadcastable angular wavenumbers, Nyquist included."""
        out = []
        for i, ni in enumerate(self.n):
            k = 2 * np.pi * np.fft.fftfreq(ni, d=self.h)
            shape = [1] * self.dim
            shape[i] = ni
            out.append(k.reshape(shape))
        return out

    @cached_property
    def derivative_symbols(self) -> list[np.ndarray]:
        """i*k per axis with the Nyquist mode zeroed (keeps real fields real)."""
        out = []
        for i, k in enumerate(self.wavenumbers):
            kk = k.copy()
            flat = kk.reshape(-1)
            flat[self.n[i] // 2] = 0.0
            out.append(1j * kk)
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the full spectral grid (Laplacian symbol is -k2)."""
        total = np.zeros(self.n)
        for k in self.wavenumbers:
            total = total + k**2
        return total

    def min_image(self, x: np.ndarray, axis: int) -> np.ndarray:
        L = self.lengths[axis]
        return x - L * np.round(x / L)

    def displacement(self, center) -> list[np.ndarray]:
        """Minimum-image displacement x - center per axis (broadcastable)."""
        center = np.asarray(center, dtype=float)
        return [self.min_image(x - center[i], i) for i, x in enumerate(self.coords())]

    def distance(self, center) -> np.ndarray:
        d = self.displacement(center)
        r2 = sum(di**2 for di in d)
        return np.sqrt(np.broadcast_to(r2, self.shape))

    def separation(self, a, b) -> float:
        """Minimum-image distance between two points."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        return float(np.sqrt(sum(self.min_image(d[i], i) ** 2 for i in range(self.dim))))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": list(self.n), "h": self.h, "epsilon": self.epsilon}


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Order parameter sampled at every node of ``grid`` at time ``t``.

    The values array is made read-only; builders and the stepper always
    return fresh instances.
    """

    grid: GridSpec
    values: np.ndarray
    t: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        if v is self.values:
            v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray, t: float | None = None) -> ComplexField:
        return ComplexField(self.grid, values, self.t if t is None else t, dict(self.meta))

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


# Spectral calculus ---------------------------------------------------------


def gradient(grid: GridSpec, values: np.ndarray, spectral: bool = True) -> list[np.ndarray]:
    """Gradient of a (complex or real) nodal array.

    Spectral differentiation by default; ``spectral=False`` gives second-order
    central differences, used as an independent oracle.
    """
    if not spectral:
        return [
            (np.roll(values, -1, axis=i) - np.roll(values, 1, axis=i)) / (2 * grid.h)
            for i in range(grid.dim)
        ]
    vhat = fftn(values)
    out = [ifftn(D * vhat) for D in grid.derivative_symbols]
    if not np.iscomplexobj(values):
        out = [o.real for o in out]
    return out


def laplacian(grid: GridSpec, values: np.ndarray, spectral: bool = True) -> np.ndarray:
    if not spectral:
        out = -2 * grid.dim * values
        for i in range(grid.dim):
            out = out + np.roll(values, -1, axis=i) + np.roll(values, 1, axis=i)
        return out / grid.h**2
    out = ifftn(-grid.k2 * fftn(values))
    return out if np.iscomplexobj(values) else out.real


def divergence(grid: GridSpec, vec: list[np.ndarray], spectral: bool = True) -> np.ndarray:
    if not spectral:
        return sum(gradient(grid, v, spectral=False)[i] for i, v in enumerate(vec))
    total = 0
    for D, v in zip(grid.derivative_symbols, vec):
        total = total + D * fftn(v)
    out = ifftn(total)
    return out.real if not any(np.iscomplexobj(v) for v in vec) else out
