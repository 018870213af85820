"""Price, dividend, return and rate trajectories on finite time grids.

Every trajectory is a step function on a :class:`TimeGrid`.  Prices, dividends
and returns are right-continuous: ``values[k]`` holds on ``[t_k, t_{k+1})``.
Rates are one per interval: ``rates[k]`` holds on ``[t_k, t_{k+1})``.

Random generators draw from numpy's PCG64 bit generator.  A Monte Carlo path is
identified by ``(seed, path_index)``; both are mixed through ``SeedSequence`` so
that every path owns an independent, reproducible stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def path_rng(seed: int, path_index: int = 0) -> np.random.Generator:
    """PCG64 generator for Monte Carlo path ``path_index`` of a seeded batch."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(path_index)])))


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a time grid needs at least two points")
        if times[0] != 0.0:
            raise ValueError(f"a time grid starts at 0, got {times[0]}")
        if not np.all(np.diff(times) > 0):
            raise ValueError("grid times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, steps: int, T: float = 1.0) -> "TimeGrid":
        if steps < 1:
            raise ValueError("steps must be positive")
        if T <= 0:
            raise ValueError("T must be positive")
        return cls(np.linspace(0.0, T, steps + 1))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self) -> int:
        return hash(self.times.tobytes())

    def index_of(self, t: float) -> int:
        """Index of the grid interval ``[t_k, t_{k+1})`` containing ``t``."""
        return int(np.searchsorted(self.times, t, side="right") - 1)


@dataclass(frozen=True)
class PricePath:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} prices, got {values.shape}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("prices must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(self.values)


@dataclass(frozen=True)
class DividendPath:
    """Cumulative dividends per share; ``jumps[0]`` is the dividend paid at time 0."""

    grid: TimeGrid
    cumulative: np.ndarray

    def __post_init__(self):
        cum = _frozen(self.cumulative)
        if cum.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} cumulative dividends, got {cum.shape}")
        if cum[0] < 0 or np.any(np.diff(cum) < 0):
            raise ValueError("cumulative dividends must be nonnegative and nondecreasing")
        object.__setattr__(self, "cumulative", cum)

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "DividendPath":
        return cls(grid, np.zeros(len(grid)))

    @classmethod
    def from_jumps(cls, grid: TimeGrid, jumps: Sequence[float]) -> "DividendPath":
        return cls(grid, np.cumsum(np.asarray(jumps, dtype=float)))

    @property
    def jumps(self) -> np.ndarray:
        return np.concatenate(([self.cumulative[0]], np.diff(self.cumulative)))


@dataclass(frozen=True)
class ReturnPath:
    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = _frozen(self.increments)
        if inc.shape != (self.grid.n_steps,):
            raise ValueError(f"expected {self.grid.n_steps} return increments, got {inc.shape}")
        if np.any(inc < -1):
            raise ValueError("return increments must be >= -1")
        object.__setattr__(self, "increments", inc)


@dataclass(frozen=True)
class RatePath:
    grid: TimeGrid
    rates: np.ndarray

    def __post_init__(self):
        rates = _frozen(self.rates)
        if rates.shape != (self.grid.n_steps,):
            raise ValueError(f"expected {self.grid.n_steps} rates, got {rates.shape}")
        object.__setattr__(self, "rates", rates)

    @classmethod
    def constant(cls, grid: TimeGrid, r: float) -> "RatePath":
        return cls(grid, np.full(grid.n_steps, float(r)))

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.rates >= 0))

    def accumulated(self) -> np.ndarray:
        """``B_{t_k}``, the running sum of ``r * dt``."""
        return np.concatenate(([0.0], np.cumsum(self.rates * self.grid.dt)))


def gen_crr(s0: float, sigma: float, steps: int, T: float = 1.0, seed: int = 0,
            path_index: int = 0) -> PricePath:
    """Symmetric binomial walk with increments ``+-sigma*sqrt(dt)``, absorbed at 0.

    Prices are built as ``s0 + m_k * h`` from an integer level ``m_k`` so that
    revisiting a level reproduces the identical float.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if steps < 1:
        raise ValueError("steps must be positive")
    grid = TimeGrid.uniform(steps, T)
    h = sigma * np.sqrt(T / steps)
    rng = path_rng(seed, path_index)
    moves = np.where(rng.random(steps) < 0.5, 1, -1)
    levels = np.concatenate(([0], np.cumsum(moves)))
    values = s0 + levels * h
    hit = np.flatnonzero(values <= 0)
    if hit.size:
        values[hit[0]:] = 0.0
    return PricePath(grid, values)


def gen_gbm(s0: float, mu: float, sigma: float, steps: int, T: float = 1.0, seed: int = 0,
            path_index: int = 0) -> PricePath:
    """Exact log-normal stepping of geometric Brownian motion."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    grid = TimeGrid.uniform(steps, T)
    z = path_rng(seed, path_index).standard_normal(steps)
    return PricePath(grid, _gbm_values(s0, mu, sigma, grid.dt, z))


def _gbm_values(s0, mu, sigma, dt, z):
    log_steps = (mu - 0.5 * sigma**2) * dt + sigma * np.sqrt(dt) * z
    return s0 * np.exp(np.concatenate(([0.0], np.cumsum(log_steps))))


@dataclass(frozen=True)
class JumpLaw:
    """Relative jump sizes ``J`` (price multiplies by ``1 + J``).

    kind ``"fixed"`` uses ``size``; ``"two_point"`` draws ``+size``/``-size``
    with probability 1/2; ``"uniform"`` draws from ``[low, high]``.
    """

    kind: str = "fixed"
    size: float = 0.0
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "two_point", "uniform"):
            raise ValueError(f"unknown jump law {self.kind!r}")
        if self.min_size < -1:
            raise ValueError("jump sizes below -100% would make prices negative")
        if self.kind == "uniform" and self.high < self.low:
            raise ValueError("uniform jump law needs low <= high")

    @property
    def min_size(self) -> float:
        if self.kind == "fixed":
            return self.size
        if self.kind == "two_point":
            return -abs(self.size)
        return self.low

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(count, self.size)
        if self.kind == "two_point":
            return np.where(rng.random(count) < 0.5, abs(self.size), -abs(self.size))
        return rng.uniform(self.low, self.high, count)


def gen_jump_diffusion(s0: float, mu: float, sigma: float, jump_intensity: float,
                       jump_law: JumpLaw, steps: int, T: float = 1.0, seed: int = 0,
                       path_index: int = 0, return_jumps: bool = False):
    """GBM stepping with multiplicative compound-Poisson jumps.

    The diffusion normals are drawn first, exactly as in :func:`gen_gbm`, so a
    zero intensity reproduces the GBM path of the same seed.  With
    ``return_jumps`` the per-step jump counts are returned alongside the path.
    """
    if jump_intensity < 0:
        raise ValueError("jump intensity must be nonnegative")
    if not isinstance(jump_law, JumpLaw):
        jump_law = JumpLaw(**jump_law)
    grid = TimeGrid.uniform(steps, T)
    rng = path_rng(seed, path_index)
    z = rng.standard_normal(steps)
    values = _gbm_values(s0, mu, sigma, grid.dt, z)
    counts = np.zeros(steps, dtype=int)
    if jump_intensity > 0:
        counts = rng.poisson(jump_intensity * grid.dt)
        factors = np.ones(steps)
        for k in np.flatnonzero(counts):
            factors[k] = np.prod(1.0 + jump_law.sample(rng, counts[k]))
        values = values * np.concatenate(([1.0], np.cumprod(factors)))
    path = PricePath(grid, np.maximum(values, 0.0))
    return (path, counts) if return_jumps else path


def refine_grid(path: PricePath, factor: int) -> PricePath:
    """Insert ``factor - 1`` equally spaced points per interval, carrying values forward."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    grid = refined_grid(path.grid, factor)
    return PricePath(grid, np.repeat(path.values, factor)[: len(grid)])


def refined_grid(grid: TimeGrid, factor: int) -> TimeGrid:
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return grid
    t = grid.times
    frac = np.arange(factor) / factor
    inner = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
    return TimeGrid(np.append(inner, t[-1]))


def resample(path: PricePath, grid: TimeGrid) -> PricePath:
    """Evaluate the step function of ``path`` on another grid over the same horizon."""
    if grid.T != path.grid.T:
        raise ValueError("grids must share the horizon")
    idx = np.searchsorted(path.grid.times, grid.times, side="right") - 1
    return PricePath(grid, path.values[idx])


def returns_from_path(S: PricePath) -> ReturnPath:
    """Invert ``S = s0 + S_- . R`` on the grid; returns vanish after absorption at 0."""
    prev, nxt = S.values[:-1], S.values[1:]
    inc = np.zeros_like(prev)
    alive = prev > 0
    inc[alive] = (nxt[alive] - prev[alive]) / prev[alive]
    return ReturnPath(S.grid, inc)
