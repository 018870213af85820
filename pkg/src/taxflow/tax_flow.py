"""Tax payment flows of elementary strategies on a time grid.

Conventions: the price ``S.values[k]`` holds on ``[t_k, t_{k+1})`` and the
strategy value ``phi[k]`` holds on ``(t_{k-1}, t_k]`` with ``phi[0] == 0``.  The
position right after trading at ``t_k`` is ``phi.right[k]`` (``phi[k+1]`` for
``k < n`` and ``phi.terminal`` at the horizon).

Every grid quantity therefore has three values: just before ``t_k`` (left),
at ``t_k`` after the price move but before trading (at), and after trading
(right).  Book profit functions are evaluated at ``side="at"`` or
``side="right"``; ``side="left"`` at ``t_k`` is the right value at ``t_{k-1}``
seen with the position held over ``(t_{k-1}, t_k]``.  Pointwise purchase times
and book profits default to the at side, whole book profit functions to the
right side (the state a discrete-time ledger reports after trading).

Shares are labelled by ``x`` from the shortest to the longest residence time,
shares bought most recently are sold first, and every share whose price falls
below its (running minimum) purchase price is wash-sold on the spot.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lot_ledger import BookProfitFunction, DiscreteStrategy
from .market_paths import (DividendPath, PricePath, TimeGrid, gen_gbm,
                           resample)

SIDES = ("left", "at", "right")


@dataclass(frozen=True)
class ElementaryStrategy:
    grid: TimeGrid
    phi: np.ndarray
    terminal: float | None = None

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} strategy values, got {phi.shape}")
        if phi[0] != 0:
            raise ValueError("a strategy starts flat: phi[0] must be 0")
        terminal = float(phi[-1] if self.terminal is None else self.terminal)
        if np.any(phi < 0) or terminal < 0:
            raise ValueError("short selling is not allowed")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "terminal", terminal)

    @classmethod
    def from_positions(cls, grid: TimeGrid, positions: Sequence[float]) -> "ElementaryStrategy":
        """Build from the positions held after trading at each grid time."""
        positions = np.asarray(positions, dtype=float)
        if positions.shape != (len(grid),):
            raise ValueError(f"expected {len(grid)} positions, got {positions.shape}")
        return cls(grid, np.concatenate(([0.0], positions[:-1])), float(positions[-1]))

    @property
    def right(self) -> np.ndarray:
        """Positions after trading at each grid time."""
        return np.append(self.phi[1:], self.terminal)

    @property
    def trades(self) -> np.ndarray:
        """``phi_{t+} - phi_t`` at each grid time."""
        return self.right - self.phi

    def to_discrete(self) -> DiscreteStrategy:
        return DiscreteStrategy(self.right)

    def on_grid(self, grid: TimeGrid) -> "ElementaryStrategy":
        """The same left-continuous step function sampled on a finer grid."""
        if grid.T != self.grid.T or not np.all(np.isin(self.grid.times, grid.times)):
            raise ValueError("target grid must contain the strategy's grid")
        idx = np.searchsorted(self.grid.times, grid.times, side="left")
        return ElementaryStrategy(grid, self.phi[idx], self.terminal)

    def __add__(self, other: "ElementaryStrategy") -> "ElementaryStrategy":
        if self.grid != other.grid:
            raise ValueError("strategies live on different grids")
        return ElementaryStrategy(self.grid, self.phi + other.phi, self.terminal + other.terminal)

    def __mul__(self, lam: float) -> "ElementaryStrategy":
        if lam < 0:
            raise ValueError("only nonnegative scaling keeps the strategy long")
        return ElementaryStrategy(self.grid, self.phi * lam, self.terminal * lam)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TaxFlow:
    """Accumulated taxes just before, at, and just after each grid time."""

    grid: TimeGrid
    left: np.ndarray
    at: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        for name in SIDES:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (len(self.grid),):
                raise ValueError(f"{name} values must match the grid")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def jumps(self) -> np.ndarray:
        """``Pi_t - Pi_{t-}``."""
        return self.at - self.left

    @property
    def right_jumps(self) -> np.ndarray:
        """``Pi_{t+} - Pi_t``."""
        return self.right - self.at

    def shifted(self, c: float) -> "TaxFlow":
        return TaxFlow(self.grid, self.left + c, self.at + c, self.right + c)

    def to_csv(self, S: PricePath, phi: ElementaryStrategy) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "S", "phi", "Pi_left", "Pi", "Pi_right"])
        for row in zip(self.grid.times, S.values, phi.phi, self.left, self.at, self.right):
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# purchase times and book profits


def purchase_time(phi: ElementaryStrategy, t: int, x: float, side: str = "at") -> int:
    """Grid index at which share ``x`` of the time-``t`` position was bought.

    Evaluates ``sup M_{t,x}`` literally: ``u`` qualifies when the position at
    ``u`` or right after ``u`` (for ``u`` before the evaluation time) is at most
    ``phi_t - x``.  Returns ``t`` when ``x`` exceeds the position.
    """
    pos, right = phi.phi, phi.right
    if side == "at":
        held = pos[t]
        at_candidates, right_candidates = range(t + 1), range(t)
    elif side == "right":
        held = right[t]
        at_candidates, right_candidates = range(t + 1), range(t + 1)
    else:
        raise ValueError(f"side must be 'at' or 'right', got {side!r}")
    if x <= 0 or x > held:
        return t
    target = held - x
    best = -1
    for u in at_candidates:
        if pos[u] <= target:
            best = max(best, u)
    for u in right_candidates:
        if u == t and side == "right":
            continue  # the right limit at t itself is the held position
        if right[u] <= target:
            best = max(best, u)
    return best


def book_profit(phi: ElementaryStrategy, S: PricePath, t: int, x: float, side: str = "at") -> float:
    """``S_t`` minus the lowest price since share ``x`` was bought."""
    held = phi.phi[t] if side == "at" else phi.right[t]
    if x <= 0 or x > held:
        return 0.0
    tau = purchase_time(phi, t, x, side)
    return float(S.values[t] - S.values[tau:t + 1].min())


class _RangeMin:
    """Sparse table for ``min(S[j..k])`` queries."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        rows = [values]
        span = 1
        while 2 * span <= values.size:
            prev = rows[-1]
            rows.append(np.concatenate((np.minimum(prev[:-span], prev[span:]), np.full(span, np.inf))))
            span *= 2
        self.table = np.stack(rows)

    def query(self, starts: np.ndarray, k: int) -> np.ndarray:
        levels = np.log2(k - starts + 1).astype(int)
        return np.minimum(self.table[levels, starts], self.table[levels, k + 1 - (1 << levels)])


class _Profile:
    """Purchase history of a position, kept as a stack of backward record lows.

    After pushing ``phi[0..m]`` the stack holds the indices ``j`` with
    ``phi[j] < phi[i]`` for every ``j < i <= m``; the shares of a position
    ``held`` were bought at the stacked indices whose value is below ``held``.
    """

    def __init__(self, S: np.ndarray):
        self.S = S
        self.rmq = _RangeMin(S)
        self.idx: list[int] = []
        self.val: list[float] = []

    def push(self, j: int, v: float) -> None:
        while self.val and self.val[-1] >= v:
            self.val.pop()
            self.idx.pop()
        self.idx.append(j)
        self.val.append(v)

    def function(self, held: float, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Purchase indices, widths and profits of ``F(t_k, .)``, lowest ``x`` first."""
        p = bisect.bisect_left(self.val, held)
        if p == 0:
            empty = np.empty(0)
            return empty.astype(int), empty, empty
        levels = np.array(self.val[:p] + [held])
        widths = (levels[1:] - levels[:-1])[::-1]
        starts = np.array(self.idx[:p][::-1])
        profits = self.S[k] - self.rmq.query(starts, k)
        return starts, widths, profits


def _partial(widths: np.ndarray, profits: np.ndarray, upto: float) -> float:
    if upto <= 0 or widths.size == 0:
        return 0.0
    starts = np.cumsum(widths) - widths
    return float(np.dot(np.clip(upto - starts, 0.0, widths), profits))


def _wash(widths: np.ndarray, profits: np.ndarray, drop: float) -> float:
    """``int (F(x) + drop) ^ 0 dx`` for a nonpositive price move ``drop``."""
    if widths.size == 0:
        return 0.0
    return float(np.dot(widths, np.minimum(profits + drop, 0.0)))


def _as_bpf(widths, profits) -> BookProfitFunction:
    return BookProfitFunction.from_pairs(zip(widths, profits))


def book_profit_function(phi: ElementaryStrategy, S: PricePath, t: int,
                         side: str = "right") -> BookProfitFunction:
    """The step function ``x -> F(t, x)`` as segments ordered by ``x``."""
    if side not in SIDES:
        raise ValueError(f"unknown side {side!r}")
    if side == "left":
        if t == 0:
            return BookProfitFunction.from_pairs([])
        t -= 1
        side = "right"
    prof = _Profile(S.values)
    for j in range(t):
        prof.push(j, phi.phi[j])
    if side == "at":
        _, w, p = prof.function(phi.phi[t], t)
    else:
        prof.push(t, phi.phi[t])
        _, w, p = prof.function(phi.right[t], t)
    return _as_bpf(w, p)


def book_profit_integral(phi: ElementaryStrategy, S: PricePath, t: int, side: str = "right") -> float:
    return book_profit_function(phi, S, t, side).integral()


# ---------------------------------------------------------------------------
# tax processes


def _dividend_jumps(D: DividendPath | None, grid: TimeGrid) -> np.ndarray:
    if D is None:
        return np.zeros(len(grid))
    if D.grid != grid:
        raise ValueError("dividends live on a different grid")
    return D.jumps


def _check_inputs(phi: ElementaryStrategy, S: PricePath) -> None:
    if phi.grid != S.grid:
        raise ValueError("strategy and prices live on different grids")


def tax_process_elementary(phi: ElementaryStrategy, S: PricePath, D: DividendPath | None = None,
                           alpha: float = 0.25, trading_times: Sequence[int] | str | None = None) -> TaxFlow:
    """Taxes from sales, automatic wash sales and dividends.

    ``trading_times`` are the grid indices at which the position may change
    (every change point must be included); by default the change points plus
    the endpoints are used, ``"grid"`` uses every grid index.  The result does
    not depend on the choice.  Between two trading times the wash-sale credit
    of each share is its book profit at the last trade plus the largest price
    drop since, floored at zero.
    """
    _check_inputs(phi, S)
    s = S.values
    n = s.size - 1
    pos, right = phi.phi, phi.right
    dD = _dividend_jumps(D, S.grid)
    change = np.flatnonzero(right != pos)
    if trading_times is None:
        kappa = set(change.tolist()) | {0, n}
    elif isinstance(trading_times, str):
        if trading_times != "grid":
            raise ValueError(f"unknown trading times {trading_times!r}")
        kappa = set(range(n + 1))
    else:
        kappa = set(int(k) for k in trading_times) | {0, n}
        missing = set(change.tolist()) - kappa
        if missing:
            raise ValueError(f"position changes at {sorted(missing)} are not trading times")

    prof = _Profile(s)
    at = np.zeros(n + 1)
    rt = np.zeros(n + 1)
    sales = closed_wash = open_wash = dividends = 0.0
    w_open = p_open = np.empty(0)
    start = 0
    drop = 0.0
    for k in range(n + 1):
        if k > 0:
            dividends += pos[k] * dD[k]
            drop = min(drop, s[k] - s[start])
            open_wash = _wash(w_open, p_open, drop)
            at[k] = alpha * (sales + closed_wash + open_wash + dividends)
        if k in kappa:
            sell = max(-(right[k] - pos[k]), 0.0)
            if sell > 0:
                _, w, p = prof.function(pos[k], k)
                sales += _partial(w, p, sell)
            closed_wash += open_wash
            open_wash, drop, start = 0.0, 0.0, k
            prof.push(k, pos[k])
            _, w_open, p_open = prof.function(right[k], k)
            rt[k] = alpha * (sales + closed_wash + dividends)
        else:
            prof.push(k, pos[k])
            rt[k] = at[k]
    left = np.concatenate(([0.0], rt[:-1]))
    return TaxFlow(S.grid, left, at, rt)


def jump_components(phi: ElementaryStrategy, S: PricePath, D: DividendPath | None = None,
                    alpha: float = 0.25) -> dict[str, np.ndarray]:
    """Per-index jumps of the tax process, split by cause.

    ``wash`` and ``dividend`` make up ``Pi_t - Pi_{t-}`` (the price move and the
    dividend hit the position held into ``t``); ``sale`` is ``Pi_{t+} - Pi_t``,
    the cost of selling the ``(phi_{t+} - phi_t)^-`` lowest-profit shares.
    """
    _check_inputs(phi, S)
    s = S.values
    n = s.size - 1
    pos, right = phi.phi, phi.right
    dD = _dividend_jumps(D, S.grid)
    wash, div, sale = np.zeros(n + 1), np.zeros(n + 1), np.zeros(n + 1)
    prof = _Profile(s)
    w_prev = p_prev = np.empty(0)
    for k in range(n + 1):
        if k > 0:
            wash[k] = alpha * _wash(w_prev, p_prev, s[k] - s[k - 1])
            div[k] = alpha * pos[k] * dD[k]
        sell = max(-(right[k] - pos[k]), 0.0)
        if sell > 0:
            _, w, p = prof.function(pos[k], k)
            sale[k] = alpha * _partial(w, p, sell)
        prof.push(k, pos[k])
        _, w_prev, p_prev = prof.function(right[k], k)
    return {"wash": wash, "dividend": div, "sale": sale}


def jump_decomposition(phi: ElementaryStrategy, S: PricePath, D: DividendPath | None,
                       alpha: float, t: int) -> tuple[float, float]:
    """``(Pi_t - Pi_{t-}, Pi_{t+} - Pi_t)`` at grid index ``t``."""
    parts = jump_components(phi, S, D, alpha)
    return float(parts["wash"][t] + parts["dividend"][t]), float(parts["sale"][t])


def tax_process_from_jumps(phi: ElementaryStrategy, S: PricePath, D: DividendPath | None = None,
                           alpha: float = 0.25) -> TaxFlow:
    parts = jump_components(phi, S, D, alpha)
    minus = parts["wash"] + parts["dividend"]
    plus = parts["sale"]
    right = np.cumsum(minus + plus)
    at = right - plus
    left = at - minus
    return TaxFlow(S.grid, left, at, right)


def trading_gains(phi: ElementaryStrategy, S: PricePath, D: DividendPath | None = None) -> np.ndarray:
    """``phi . (S + D)`` at each grid time (right-continuous in t)."""
    dD = _dividend_jumps(D, S.grid)
    inc = np.concatenate(([0.0], np.diff(S.values))) + dD
    inc[0] = 0.0
    return np.cumsum(phi.phi * inc)


def tax_process_via_identity(phi: ElementaryStrategy, S: PricePath, D: DividendPath | None = None,
                             alpha: float = 0.25) -> TaxFlow:
    """Taxes as ``alpha * (trading gains - unrealized book profits)``."""
    _check_inputs(phi, S)
    s = S.values
    n = s.size - 1
    gains = trading_gains(phi, S, D)
    prof = _Profile(s)
    at, rt = np.zeros(n + 1), np.zeros(n + 1)
    for k in range(n + 1):
        _, w, p = prof.function(phi.phi[k], k)
        at[k] = alpha * (gains[k] - float(np.dot(w, p)))
        prof.push(k, phi.phi[k])
        _, w, p = prof.function(phi.right[k], k)
        rt[k] = alpha * (gains[k] - float(np.dot(w, p)))
    left = np.concatenate(([0.0], rt[:-1]))
    return TaxFlow(S.grid, left, at, rt)


def book_profit_integrals(phi: ElementaryStrategy, S: PricePath) -> dict[str, np.ndarray]:
    """``int F(t_k, x) dx`` for every grid index, at and right of each time."""
    s = S.values
    prof = _Profile(s)
    at, rt = np.zeros(s.size), np.zeros(s.size)
    for k in range(s.size):
        _, w, p = prof.function(phi.phi[k], k)
        at[k] = float(np.dot(w, p))
        prof.push(k, phi.phi[k])
        _, w, p = prof.function(phi.right[k], k)
        rt[k] = float(np.dot(w, p))
    return {"at": at, "right": rt}


def up_distance(A: TaxFlow, B: TaxFlow) -> float:
    """Largest gap between two flows over grid times and sides."""
    if A.grid != B.grid:
        raise ValueError("flows live on different grids")
    return float(max(np.max(np.abs(getattr(A, s) - getattr(B, s))) for s in SIDES))


def stability_bound_check(phi: ElementaryStrategy, phi_tilde: ElementaryStrategy, S: PricePath,
                          t: int, side: str = "right") -> tuple[float, float, bool]:
    """Compare the book-profit gap of two nearby strategies with ``3 eps osc(S)``."""
    if phi.grid != phi_tilde.grid or phi.grid != S.grid:
        raise ValueError("inputs live on different grids")
    a = book_profit_integral(phi, S, t, side)
    b = book_profit_integral(phi_tilde, S, t, side)
    diff = np.abs(phi.phi[: t + 1] - phi_tilde.phi[: t + 1])
    if side == "right":
        diff = np.append(diff, abs(phi.right[t] - phi_tilde.right[t]))
    eps = float(diff.max())
    window = S.values[: t + 1]
    lhs = abs(a - b)
    rhs = 3.0 * eps * float(window.max() - window.min())
    return lhs, rhs, lhs <= rhs + 1e-12


def approximate_strategy(sampler: Callable[[float], float], grid: TimeGrid,
                         terminal: float | None = None) -> ElementaryStrategy:
    """Elementary strategy holding ``sampler(t_k)`` over ``(t_{k-1}, t_k]``."""
    values = np.array([0.0] + [float(sampler(t)) for t in grid.times[1:]])
    if np.any(values < 0):
        raise ValueError("sampled positions must be nonnegative")
    return ElementaryStrategy(grid, values, terminal)


# ---------------------------------------------------------------------------
# convergence harness


@dataclass(frozen=True)
class PointwiseCounterexample:
    n: int
    flow_n: TaxFlow
    flow_limit: TaxFlow
    distance: float
    bound: float


def pointwise_counterexample(S: PricePath, n: int, alpha: float) -> PointwiseCounterexample:
    """Strategies ``1 on (0,1/2] u (1/2+1/n, 1]`` against their pointwise limit ``1 on (0,1]``.

    Both are evaluated on ``S``'s grid augmented with ``1/2`` and ``1/2+1/n``;
    ``bound`` is the book profit realized at ``1/2`` by the interrupted strategy.
    """
    if S.grid.T != 1.0:
        raise ValueError("the counterexample lives on [0, 1]")
    if n < 2:
        raise ValueError("n must be at least 2")
    gap_end = 0.5 + 1.0 / n
    grid = TimeGrid(np.union1d(S.grid.times, [0.5, gap_end]))
    Sg = resample(S, grid)
    interrupted = approximate_strategy(lambda t: 0.0 if 0.5 < t <= gap_end else 1.0, grid)
    held = approximate_strategy(lambda t: 1.0, grid)
    flow_n = tax_process_elementary(interrupted, Sg, None, alpha)
    flow = tax_process_elementary(held, Sg, None, alpha)
    half = grid.index_of(0.5)
    bound = alpha * float(Sg.values[half] - Sg.values[: half + 1].min())
    return PointwiseCounterexample(n, flow_n, flow, up_distance(flow_n, flow), bound)


def sampled_feedback(g: Callable[[float], float], S: PricePath, coarse: TimeGrid) -> ElementaryStrategy:
    """``g(S)`` rebalanced only at the points of ``coarse``, expressed on ``S``'s grid.

    On ``(c_{i-1}, c_i]`` the position is ``g(S_{c_{i-1}})``; after the horizon
    it is ``g(S_T)``.
    """
    fine = S.grid.times
    if not np.all(np.isin(coarse.times, fine)):
        raise ValueError("coarse grid must be a subset of the price grid")
    c_idx = np.searchsorted(fine, coarse.times)
    owner = np.searchsorted(coarse.times, fine, side="left") - 1
    owner[0] = 0
    values = np.array([g(S.values[c_idx[i]]) for i in owner], dtype=float)
    values[0] = 0.0
    return ElementaryStrategy(S.grid, values, float(g(S.values[-1])))


@dataclass(frozen=True)
class CauchyLevel:
    steps: int
    mesh: float
    distances: np.ndarray

    @property
    def q50(self) -> float:
        return float(np.quantile(self.distances, 0.5))

    @property
    def q95(self) -> float:
        return float(np.quantile(self.distances, 0.95))


def cauchy_study(g: Callable[[float], float], coarse_steps: Sequence[int], fine_steps: int,
                 paths: int, seed: int, alpha: float = 0.25, s0: float = 100.0, mu: float = 0.0,
                 sigma: float = 0.2, T: float = 1.0) -> list[CauchyLevel]:
    """Sup distances between tax flows of successive rebalancing frequencies.

    For each seeded GBM path on ``fine_steps`` steps, ``g(S)`` is rebalanced on
    each grid of ``coarse_steps`` (each must divide ``fine_steps``) and the
    flow of level ``i`` is compared with level ``i + 1``.
    """
    coarse_steps = list(coarse_steps)
    for m in coarse_steps:
        if fine_steps % m:
            raise ValueError(f"{m} does not divide {fine_steps}")
    dist = np.zeros((len(coarse_steps) - 1, paths))
    for p in range(paths):
        S = gen_gbm(s0, mu, sigma, fine_steps, T, seed, path_index=p)
        flows = []
        for m in coarse_steps:
            coarse = TimeGrid(S.grid.times[:: fine_steps // m])
            flows.append(tax_process_elementary(sampled_feedback(g, S, coarse), S, None, alpha))
        for i in range(len(flows) - 1):
            dist[i, p] = up_distance(flows[i], flows[i + 1])
    return [CauchyLevel(m, T / m, dist[i]) for i, m in enumerate(coarse_steps[:-1])]
