"""Delay-system types, the two-mode switched split and closed-loop assembly.

State histories are stored newest first: ``history[0] = x(k)``,
``history[i] = x(k - i)``.  Every selector matrix in the package uses the
same convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Invalid system data (shapes, delay bounds, out-of-range delays)."""


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise ModelError(f"{name} contains non-finite entries")
    return m


def _square(a, name: str, n: int | None = None) -> np.ndarray:
    m = _as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ModelError(f"{name} must be square, got {m.shape}")
    if n is not None and m.shape[0] != n:
        raise ModelError(f"{name} must be {n}x{n}, got {m.shape}")
    return m


@dataclass(frozen=True)
class DelaySystem:
    """x(k+1) = A x(k) + A_n x(k - d_n) + A_d x(k - d(k)), d_m <= d(k) <= d_M."""

    A: np.ndarray
    A_n: np.ndarray
    A_d: np.ndarray
    d_m: int
    d_n: int
    d_M: int

    def __post_init__(self):
        A = _square(self.A, "A")
        n = A.shape[0]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "A_n", _square(self.A_n, "A_n", n))
        object.__setattr__(self, "A_d", _square(self.A_d, "A_d", n))
        for name in ("d_m", "d_n", "d_M"):
            v = getattr(self, name)
            if int(v) != v:
                raise ModelError(f"{name} must be an integer")
            object.__setattr__(self, name, int(v))
        if not 1 <= self.d_m <= self.d_n <= self.d_M:
            raise ModelError(
                f"need 1 <= d_m <= d_n <= d_M, got {self.d_m}, {self.d_n}, {self.d_M}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def step(self, history: np.ndarray, d_k: int) -> np.ndarray:
        """One step of the recursion from a newest-first history array."""
        return (self.A @ history[0] + self.A_n @ history[self.d_n]
                + self.A_d @ history[d_k])


@dataclass(frozen=True)
class BoundedDelaySubsystem:
    """x(k+1) = A x(k) + A_m x(k-d_m) + A_M x(k-d_M) + A_d x(k-d(k))."""

    A: np.ndarray
    A_m: np.ndarray
    A_M: np.ndarray
    A_d: np.ndarray
    d_m: int
    d_M: int

    def __post_init__(self):
        A = _square(self.A, "A")
        n = A.shape[0]
        object.__setattr__(self, "A", A)
        for name in ("A_m", "A_M", "A_d"):
            object.__setattr__(self, name, _square(getattr(self, name), name, n))
        object.__setattr__(self, "d_m", int(self.d_m))
        object.__setattr__(self, "d_M", int(self.d_M))
        if not 1 <= self.d_m <= self.d_M:
            raise ModelError(f"need 1 <= d_m <= d_M, got {self.d_m}, {self.d_M}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d_delta(self) -> int:
        return self.d_M - self.d_m

    def step(self, history: np.ndarray, d_k: int) -> np.ndarray:
        if not self.d_m <= d_k <= self.d_M:
            raise ModelError(f"delay {d_k} outside [{self.d_m}, {self.d_M}]")
        return (self.A @ history[0] + self.A_m @ history[self.d_m]
                + self.A_M @ history[self.d_M] + self.A_d @ history[d_k])


@dataclass(frozen=True)
class PlantModel:
    """x_p(k+1) = A_p x_p(k) + B_p u(k), y(k) = x_p(k - d(k))."""

    A_p: np.ndarray
    B_p: np.ndarray

    def __post_init__(self):
        A_p = _square(self.A_p, "A_p")
        B_p = np.asarray(self.B_p, dtype=float)
        if B_p.ndim == 1:
            B_p = B_p.reshape(-1, 1)
        B_p = _as_matrix(B_p, "B_p")
        if B_p.shape[0] != A_p.shape[0]:
            raise ModelError(f"B_p must have {A_p.shape[0]} rows, got {B_p.shape}")
        object.__setattr__(self, "A_p", A_p)
        object.__setattr__(self, "B_p", B_p)

    @property
    def n_p(self) -> int:
        return self.A_p.shape[0]

    @property
    def m(self) -> int:
        return self.B_p.shape[1]


@dataclass(frozen=True)
class ControllerGains:
    """u = K xhat + F e_y,  xhat(k+1) = A_p xhat + B_p u + L e_y."""

    K: np.ndarray
    F: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _as_matrix(self.K, "K"))
        object.__setattr__(self, "F", _as_matrix(self.F, "F"))
        object.__setattr__(self, "L", _square(self.L, "L"))
        if self.K.shape != self.F.shape:
            raise ModelError(f"K and F shapes differ: {self.K.shape} vs {self.F.shape}")
        if self.K.shape[1] != self.L.shape[0]:
            raise ModelError("K columns must match the plant order")

    def check_plant(self, plant: PlantModel) -> None:
        if self.K.shape != (plant.m, plant.n_p):
            raise ModelError(
                f"K must be {plant.m}x{plant.n_p}, got {self.K.shape}")
        if self.L.shape != (plant.n_p, plant.n_p):
            raise ModelError(f"L must be {plant.n_p}x{plant.n_p}, got {self.L.shape}")


@dataclass(frozen=True)
class HistoryVector:
    """x_bar(k) = [x(k); x(k-1); ...; x(k-d_M)] stored as a (d_M+1, n) array."""

    samples: np.ndarray = field()

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        if s.ndim != 2 or s.shape[0] < 1:
            raise ModelError("history must be a (d_M+1, n) array")
        object.__setattr__(self, "samples", s)

    @property
    def d_M(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def stacked(self) -> np.ndarray:
        return self.samples.reshape(-1)

    def eta(self, i: int) -> np.ndarray:
        """x(k-i) - x(k-i-1)."""
        return self.samples[i] - self.samples[i + 1]

    @classmethod
    def constant(cls, value, d_M: int) -> "HistoryVector":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.tile(v, (d_M + 1, 1)))


def split_switched(sys: DelaySystem) -> tuple[BoundedDelaySubsystem, BoundedDelaySubsystem]:
    """Two bounded-delay subsystems selected by d(k) <= d_n (mode 1) or > d_n (mode 2)."""
    zero = np.zeros_like(sys.A)
    first = BoundedDelaySubsystem(sys.A, zero, sys.A_n, sys.A_d, sys.d_m, sys.d_n)
    second = BoundedDelaySubsystem(sys.A, sys.A_n, zero.copy(), sys.A_d, sys.d_n, sys.d_M)
    return first, second


def sigma(d_k: int, sys: DelaySystem) -> int:
    if not sys.d_m <= d_k <= sys.d_M:
        raise ModelError(f"delay {d_k} outside [{sys.d_m}, {sys.d_M}]")
    return 1 if d_k <= sys.d_n else 2


def closed_loop_matrices(A_p, B_p, K, F, L):
    """(A, A_d, A_n) of the (x_p, e) closed loop, e = x_p - xhat."""
    n_p = A_p.shape[0]
    Z = np.zeros((n_p, n_p))
    A = _block2(A_p + B_p @ K, -(B_p @ K), Z, A_p)
    A_d = _block2(B_p @ F, Z, -L, Z)
    A_n = _block2(-(B_p @ F), B_p @ F, L, -L)
    return A, A_d, A_n


def _block2(a, b, c, d):
    return np.block([[a, b], [c, d]])


def build_closed_loop(plant: PlantModel, gains: ControllerGains,
                      d_m: int, d_n: int, d_M: int) -> DelaySystem:
    gains.check_plant(plant)
    A, A_d, A_n = closed_loop_matrices(plant.A_p, plant.B_p, gains.K, gains.F, gains.L)
    return DelaySystem(A, A_n, A_d, d_m, d_n, d_M)
