"""Seeded Brownian paths with exact dyadic coarsening, and noise coefficients G."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

K0_DEFAULT = 2.0 ** -12


def _dyadic_ratio(num: float, den: float, what: str) -> int:
    ratio = num / den
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio) or m & (m - 1):
        raise ValueError(f"{what} must be a power-of-two integer, got {ratio!r}")
    return m


def standard_normals(seed: int, sample_id: int, n: int) -> np.ndarray:
    """``n`` standard normals keyed by ``(seed, sample_id)``.

    Philox is counter based, so the stream depends only on the key. Uniforms are
    built from the top 53 bits of each raw word, shifted into the open interval,
    then pushed through the inverse normal CDF.
    """
    key = np.array([seed, sample_id], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(n)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


@dataclass(frozen=True)
class WienerPath:
    seed: int
    sample_id: int
    T: float
    k0: float
    increments: np.ndarray = field(repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]


def generate_path(seed: int, sample_id: int, T: float = 1.0, k0: float = K0_DEFAULT) -> WienerPath:
    n = _dyadic_ratio(T, k0, "T/k0")
    increments = math.sqrt(k0) * standard_normals(seed, sample_id, n)
    return WienerPath(int(seed), int(sample_id), float(T), float(k0), increments)


def coarsen(path: WienerPath, k: float) -> np.ndarray:
    """Increments of the same path on the grid of step ``k`` (block sums)."""
    m = _dyadic_ratio(k, path.k0, "k/k0")
    return coarsen_increments(path.increments, m)


def coarsen_increments(increments: np.ndarray, m: int) -> np.ndarray:
    """Sum consecutive blocks of ``m`` (a power of two) increments.

    Done as repeated pair sums so that coarsening by 2 then 2 is bitwise equal
    to coarsening by 4.
    """
    out = np.asarray(increments, dtype=float)
    n = out.shape[-1]
    if m < 1 or m & (m - 1) or n % m:
        raise ValueError(f"cannot coarsen {n} increments by a factor {m}")
    while m > 1:
        out = out[..., 0::2] + out[..., 1::2]
        m //= 2
    return out


def brownian_values(increments) -> np.ndarray:
    """``W(t_n)`` for n = 1..N from increments, by compensated (Neumaier) summation.

    Rounding stays at a few ulp however many increments are summed, so the
    values seen by differently coarsened grids agree at shared times.
    """
    out = np.empty(len(increments))
    total = comp = 0.0
    for i, x in enumerate(np.asarray(increments, dtype=float).tolist()):
        t = total + x
        if abs(total) >= abs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        total = t
        out[i] = total + comp
    return out


def increment_matrix(seed: int, sample_ids, T: float, k0: float, k: float) -> np.ndarray:
    """``(len(sample_ids), T/k)`` array of coarsened increments, one row per sample."""
    return np.stack([coarsen(generate_path(seed, j, T, k0), k) for j in sample_ids])


LINEAR = "linear"
SIN_SHIFT = "sin_shift"
ZERO = "zero"
CUSTOM = "custom"
NOISE_KINDS = (LINEAR, SIN_SHIFT, ZERO, CUSTOM)


@dataclass(frozen=True)
class NoiseCoefficient:
    """Pointwise diffusion map G with its Lipschitz constant and optional bound.

    Built-ins: ``linear`` is ``alpha*u``, ``sin_shift`` is ``alpha*sin(1+u)``.
    """

    kind: str = ZERO
    alpha: float = 0.0
    func: Callable | None = field(default=None, compare=False)
    C_G: float | None = None
    L0: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == CUSTOM and self.func is None:
            raise ValueError("custom noise needs a pointwise function")
        a = abs(self.alpha)
        if self.C_G is None:
            object.__setattr__(self, "C_G", {ZERO: 0.0, LINEAR: a, SIN_SHIFT: a}.get(self.kind))
        if self.L0 is None and self.kind in (SIN_SHIFT, ZERO):
            object.__setattr__(self, "L0", a if self.kind == SIN_SHIFT else 0.0)

    @classmethod
    def linear(cls, alpha: float) -> "NoiseCoefficient":
        return cls(LINEAR, alpha)

    @classmethod
    def sin_shift(cls, alpha: float) -> "NoiseCoefficient":
        return cls(SIN_SHIFT, alpha)

    @classmethod
    def zero(cls) -> "NoiseCoefficient":
        return cls(ZERO, 0.0)

    @property
    def is_zero(self) -> bool:
        return self.kind == ZERO or (self.kind != CUSTOM and self.alpha == 0.0)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == LINEAR:
            return self.alpha * u
        if self.kind == SIN_SHIFT:
            return self.alpha * np.sin(1.0 + u)
        if self.kind == ZERO:
            return np.zeros_like(u)
        return np.asarray(self.func(u), dtype=float)

    def describe(self) -> str:
        return f"{self.kind}(alpha={self.alpha:g})"


def make_noise(kind: str, alpha: float = 0.0) -> NoiseCoefficient:
    if kind == ZERO:
        return NoiseCoefficient.zero()
    return NoiseCoefficient(kind, float(alpha))


def apply_noise(g: NoiseCoefficient, u) -> np.ndarray:
    """Nodal values ``G(u_i)``.

    ``u`` is a nodal vector, so Dirichlet boundary entries are 0 and carry
    ``G(0)``; the load built from these values is only tested against the free
    basis functions, which is what keeps it consistent with the boundary condition.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("noise coefficient applied to non-finite values")
    return g(u)
