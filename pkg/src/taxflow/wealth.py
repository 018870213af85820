"""Self-financing wealth with taxed interest, and dividend-policy comparison.

The bank account holds ``X`` monetary units; interest ``(1 - alpha) X r dt`` is
credited at the end of each grid interval (left-point rule), dividends arrive
gross into ``X`` and their tax is charged through the tax flow, and trades at
``t_k`` execute at ``S_k``.  Wealth is ``V = X + phi S`` on each side of every
grid time.

A dividend model fixes the return process ``R`` and the cumulative dividends
``D``; the price solves ``S_k = S_{k-1} (1 + dR_k) - dD_k`` and the twin market
without dividends shares the same ``R``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .market_paths import DividendPath, PricePath, RatePath, ReturnPath, TimeGrid
from .tax_flow import (SIDES, ElementaryStrategy, TaxFlow, book_profit_function,
                       tax_process_elementary, trading_gains)

NEG_PRICE_TOL = 1e-12


@dataclass(frozen=True)
class WealthPath:
    grid: TimeGrid
    X_left: np.ndarray
    X_at: np.ndarray
    X_right: np.ndarray
    V_left: np.ndarray
    V_at: np.ndarray
    V_right: np.ndarray
    alpha: float
    v0: float
    rates_valid: bool = True

    def X(self, side: str) -> np.ndarray:
        return getattr(self, f"X_{side}")

    def V(self, side: str) -> np.ndarray:
        return getattr(self, f"V_{side}")


def _check_grids(*objs) -> TimeGrid:
    grid = objs[0].grid
    for o in objs[1:]:
        if o is not None and o.grid != grid:
            raise ValueError("inputs live on different grids")
    return grid


def self_financing_wealth(phi: ElementaryStrategy, S: PricePath, D: DividendPath | None,
                          r: RatePath, alpha: float, v0: float, flow: TaxFlow | None = None) -> WealthPath:
    """Bank account and wealth of ``phi`` started with ``v0`` in cash.

    Negative rates trigger a warning and ``rates_valid=False``.
    """
    grid = _check_grids(S, phi, D, r)
    if np.any(phi.phi < 0) or phi.terminal < 0:
        raise ValueError("strategy positions must be nonnegative")
    rates_valid = r.nonnegative
    if not rates_valid:
        warnings.warn("negative interest rates: dividend comparison results are not covered", stacklevel=2)
    if flow is None:
        flow = tax_process_elementary(phi, S, D, alpha)
    dD = D.jumps if D is not None else np.zeros(len(grid))
    s = S.values
    pos, right = phi.phi, phi.right
    growth = 1.0 + (1.0 - alpha) * r.rates * grid.dt
    n = len(grid)
    XL, XA, XR = np.zeros(n), np.zeros(n), np.zeros(n)
    for k in range(n):
        XL[k] = v0 if k == 0 else XR[k - 1] * growth[k - 1]
        XA[k] = XL[k] + pos[k] * dD[k] - (flow.at[k] - flow.left[k])
        XR[k] = XA[k] - s[k] * (right[k] - pos[k]) - (flow.right[k] - flow.at[k])
    s_prev = np.concatenate(([s[0]], s[:-1]))
    VL = XL + pos * s_prev
    VA = XA + pos * s
    VR = XR + right * s
    return WealthPath(grid, XL, XA, XR, VL, VA, VR, float(alpha), float(v0), rates_valid)


def _interest(w: WealthPath, r: RatePath) -> np.ndarray:
    """``int_0^{t_k} (1 - alpha) X r ds`` on the grid (left-point rule)."""
    inc = (1.0 - w.alpha) * w.X_right[:-1] * r.rates * w.grid.dt
    return np.concatenate(([0.0], np.cumsum(inc)))


def self_financing_residual(w: WealthPath, phi: ElementaryStrategy, S: PricePath, D: DividendPath | None,
                            r: RatePath, flow: TaxFlow) -> float:
    """Largest violation of ``V = v0 + (1-alpha) X.B + phi.D + phi.S - Pi`` over all sides."""
    I = _interest(w, r)
    gains = trading_gains(phi, S, D)
    prev_gains = np.concatenate(([0.0], gains[:-1]))
    resid = [
        w.V_left - (w.v0 + I + prev_gains - flow.left),
        w.V_at - (w.v0 + I + gains - flow.at),
        w.V_right - (w.v0 + I + gains - flow.right),
    ]
    return float(max(np.max(np.abs(x)) for x in resid))


def alternative_bank_account(w: WealthPath, phi: ElementaryStrategy, S: PricePath, D: DividendPath | None,
                             r: RatePath, flow: TaxFlow) -> dict[str, np.ndarray]:
    """``X`` from the cost-free regrouping form: cash pays for trades, earns taxed interest,
    collects dividends and pays taxes."""
    dD = D.jumps if D is not None else np.zeros(len(S))
    spent = np.cumsum(S.values * phi.trades)
    spent_before = np.concatenate(([0.0], spent[:-1]))
    divs = np.cumsum(phi.phi * dD)
    divs_before = np.concatenate(([0.0], divs[:-1]))
    I = _interest(w, r)
    return {
        "left": w.v0 - spent_before + I - flow.left + divs_before,
        "at": w.v0 - spent_before + I - flow.at + divs,
        "right": w.v0 - spent + I - flow.right + divs,
    }


# ---------------------------------------------------------------------------
# dividend policies


@dataclass(frozen=True)
class DividendModel:
    R: ReturnPath
    D: DividendPath
    s0: float

    def __post_init__(self):
        if self.R.grid != self.D.grid:
            raise ValueError("returns and dividends live on different grids")
        if self.s0 < 0 or not math.isfinite(self.s0):
            raise ValueError("s0 must be a nonnegative real")

    @property
    def grid(self) -> TimeGrid:
        return self.R.grid

    def without_dividends(self) -> "DividendModel":
        return DividendModel(self.R, DividendPath.zeros(self.grid), self.s0)


class InadmissibleDividend(ValueError):
    def __init__(self, index: int, value: float):
        super().__init__(f"dividend drives the price negative at index {index} (price {value:.6g})")
        self.index = index


def solve_dividend_sde(model: DividendModel) -> PricePath:
    """Grid solution of ``S = s0 + S_- . R - D``, absorbed once it reaches 0."""
    dR, dD = model.R.increments, model.D.jumps
    n = len(model.grid)
    out = np.zeros(n)
    out[0] = model.s0 - dD[0]
    scale = max(model.s0, 1.0)
    for k in range(n):
        if k > 0:
            if out[k - 1] == 0.0:
                out[k] = -dD[k]
            else:
                out[k] = out[k - 1] * (1.0 + dR[k - 1]) - dD[k]
        if out[k] < 0:
            if out[k] < -NEG_PRICE_TOL * scale:
                raise InadmissibleDividend(k, out[k])
            out[k] = 0.0
    return PricePath(model.grid, out)


def dividend_product_factor(model: DividendModel) -> np.ndarray:
    """Second factor of ``S^D = S^0 * q`` before the first total loss ``dR = -1``.

    Entries from the first total loss on are ``nan``.
    """
    S0 = solve_dividend_sde(model.without_dividends()).values
    dR, dD = model.R.increments, model.D.jumps
    q = np.full(len(model.grid), np.nan)
    if model.s0 == 0:
        return q
    q[0] = 1.0 - dD[0] / model.s0
    for k in range(1, q.size):
        if dR[k - 1] == -1.0:
            break
        prev = S0[k - 1]
        q[k] = q[k - 1] - dD[k] / prev + dD[k] * dR[k - 1] / (prev * (1.0 + dR[k - 1]))
    return q


def dividend_ratio(S_D: PricePath, S_0: PricePath) -> np.ndarray:
    """``S^D / S^0`` with 0 where ``S^0`` vanishes."""
    ratio = np.zeros(len(S_0))
    alive = S_0.values > 0
    ratio[alive] = S_D.values[alive] / S_0.values[alive]
    return ratio


def ratio_monotone_check(S_D: PricePath, S_0: PricePath, model: DividendModel | None = None,
                         tol: float = 1e-12, rel: float = 1e-9) -> bool:
    """True iff ``S^D / S^0`` (0 where ``S^0 = 0``) is nonincreasing.

    With ``model`` the ratio is also compared with the stochastic-exponential product
    factor wherever the latter is defined and ``S^0 > 0``.
    """
    if S_D.grid != S_0.grid:
        raise ValueError("prices live on different grids")
    ratio = dividend_ratio(S_D, S_0)
    ok = bool(np.all(np.diff(ratio) <= tol))
    if model is not None:
        q = dividend_product_factor(model)
        sel = np.isfinite(q) & (S_0.values > 0) & (S_D.values > 0)
        ok &= bool(np.allclose(ratio[sel], q[sel], rtol=rel, atol=tol))
    return ok


def map_strategy_no_dividends(phi_D: ElementaryStrategy, S_D: PricePath, S_0: PricePath) -> ElementaryStrategy:
    """Shares in the twin market that invest the same capital: ``phi^D S^D_- / S^0_-``."""
    if not (phi_D.grid == S_D.grid == S_0.grid):
        raise ValueError("inputs live on different grids")
    prev_D = np.concatenate(([S_D.values[0]], S_D.values[:-1]))
    prev_0 = np.concatenate(([S_0.values[0]], S_0.values[:-1]))
    ratio = np.zeros_like(prev_0)
    alive = prev_0 > 0
    ratio[alive] = prev_D[alive] / prev_0[alive]
    phi0 = phi_D.phi * ratio
    end = S_0.values[-1]
    terminal = phi_D.terminal * S_D.values[-1] / end if end > 0 else 0.0
    return ElementaryStrategy(phi_D.grid, phi0, terminal)


def book_profit_domination(phi_D: ElementaryStrategy, phi_0: ElementaryStrategy, S_D: PricePath,
                           S_0: PricePath, t: int, tol: float = 1e-9) -> bool:
    """``F^D(t, x) <= c F^0(t, c x)`` with ``c = phi^0_t / phi^D_t``.

    Both sides are step functions; they are compared inside every interval
    between consecutive breakpoints (single points do not matter), skipping
    slivers created by rounding of nearly equal breakpoints.
    """
    if phi_0.phi[t] <= 0:
        return True
    c = phi_0.phi[t] / phi_D.phi[t]
    FD = book_profit_function(phi_D, S_D, t, side="at")
    F0 = book_profit_function(phi_0, S_0, t, side="at")
    b_D = np.cumsum(FD.widths)
    b_0 = np.cumsum(F0.widths) / c
    edges = np.union1d([0.0], np.union1d(b_D, b_0))
    wide = np.diff(edges) > 1e-9 * max(1.0, float(edges[-1]))
    points = 0.5 * (edges[1:] + edges[:-1])[wide]
    lhs = np.array([FD(x) for x in points])
    rhs = np.array([c * F0(c * x) for x in points])
    scale = max(1.0, float(np.max(np.abs(S_0.values[: t + 1]))))
    return bool(np.all(lhs <= rhs + tol * scale))


@dataclass(frozen=True)
class DividendComparison:
    S_D: PricePath
    S_0: PricePath
    phi_D: ElementaryStrategy
    phi_0: ElementaryStrategy
    flow_D: TaxFlow
    flow_0: TaxFlow
    wealth_D: WealthPath
    wealth_0: WealthPath

    def wealth_gap(self, side: str = "at") -> np.ndarray:
        """``V^0 - V^D``."""
        return self.wealth_0.V(side) - self.wealth_D.V(side)

    def tax_gap(self, side: str = "at") -> np.ndarray:
        """``Pi^D - Pi^0``."""
        return getattr(self.flow_D, side) - getattr(self.flow_0, side)

    def min_wealth_gap(self) -> float:
        return float(min(self.wealth_gap(s).min() for s in SIDES))

    def min_tax_gap(self) -> float:
        return float(min(self.tax_gap(s).min() for s in SIDES))

    def summary(self, tol: float = 1e-9) -> dict:
        gaps = np.concatenate([self.wealth_gap(s) for s in SIDES])
        taxes = np.concatenate([self.tax_gap(s) for s in SIDES])
        return {
            "min_gap": float(gaps.min()),
            "max_gap": float(gaps.max()),
            "min_tax_gap": float(taxes.min()),
            "violations": int(np.sum(gaps < -tol) + np.sum(taxes < -tol)),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "S_D", "S_0", "phi_D", "phi_0", "Pi_D", "Pi_0", "V_D", "V_0", "gap"])
        cols = (self.S_D.grid.times, self.S_D.values, self.S_0.values, self.phi_D.phi, self.phi_0.phi,
                self.flow_D.at, self.flow_0.at, self.wealth_D.V_at, self.wealth_0.V_at, self.wealth_gap("at"))
        for row in zip(*cols):
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


def compare_dividend_policies(phi_D: ElementaryStrategy, model: DividendModel, r: RatePath,
                              alpha: float, v0: float) -> DividendComparison:
    """Run ``phi_D`` with dividends and its capital-matched twin without."""
    if not r.nonnegative:
        raise ValueError("the dividend comparison requires nonnegative interest rates")
    S_D = solve_dividend_sde(model)
    S_0 = solve_dividend_sde(model.without_dividends())
    phi_0 = map_strategy_no_dividends(phi_D, S_D, S_0)
    flow_D = tax_process_elementary(phi_D, S_D, model.D, alpha)
    flow_0 = tax_process_elementary(phi_0, S_0, None, alpha)
    wealth_D = self_financing_wealth(phi_D, S_D, model.D, r, alpha, v0, flow_D)
    wealth_0 = self_financing_wealth(phi_0, S_0, None, r, alpha, v0, flow_0)
    return DividendComparison(S_D, S_0, phi_D, phi_0, flow_D, flow_0, wealth_D, wealth_0)


def random_dividend_model(rng: np.random.Generator, steps: int, s0: float = 100.0,
                          sigma: float = 0.2, dividend_prob: float = 0.3) -> DividendModel:
    """Random admissible model: binomial-style returns and occasional dividends up to the full price."""
    grid = TimeGrid.uniform(steps)
    dR = rng.choice([-1.0, 1.0], size=steps) * sigma / math.sqrt(steps)
    dR += rng.normal(0, 0.02, size=steps)
    dR = np.maximum(dR, -1.0)
    R = ReturnPath(grid, dR)
    jumps = np.zeros(steps + 1)
    price = s0
    for k in range(1, steps + 1):
        price = price * (1.0 + dR[k - 1])
        if price > 0 and rng.random() < dividend_prob:
            jumps[k] = price * rng.uniform(0.0, 0.5)
            price -= jumps[k]
    return DividendModel(R, DividendPath.from_jumps(grid, jumps), s0)


# ---------------------------------------------------------------------------
# deferral experiment


def deferral_closed_form(alpha: float, r: float, T: float) -> tuple[float, float]:
    """Terminal wealth per unit: taxed once at ``T`` versus taxed continuously."""
    return 1.0 + (1.0 - alpha) * math.expm1(r * T), math.exp((1.0 - alpha) * r * T)


def deferral_experiment(alpha: float, r: float, T: float, steps: int) -> dict[str, float]:
    """Simulate both investments of one monetary unit on a grid of ``steps`` intervals.

    Deferred: a non-paying stock growing by ``r dt`` per interval, bought at 0 and
    sold at ``T``.  Taxed: a stock at constant price 1 paying ``r dt`` per share
    per interval, after-tax dividends reinvested in new shares.
    """
    grid = TimeGrid.uniform(steps, T)
    zero = RatePath.constant(grid, 0.0)
    growth = (1.0 + r * grid.dt)

    S_up = PricePath(grid, np.concatenate(([1.0], np.cumprod(growth))))
    hold = ElementaryStrategy.from_positions(grid, np.append(np.ones(steps), 0.0))
    deferred = self_financing_wealth(hold, S_up, None, zero, alpha, 1.0)

    S_flat = PricePath(grid, np.ones(steps + 1))
    D = DividendPath.from_jumps(grid, np.concatenate(([0.0], r * grid.dt)))
    # positions after trading at t_0 .. t_{n-1}; everything is sold at T
    shares = np.cumprod(np.concatenate(([1.0], 1.0 + (1.0 - alpha) * r * grid.dt[:-1])))
    reinvest = ElementaryStrategy.from_positions(grid, np.append(shares, 0.0))
    taxed = self_financing_wealth(reinvest, S_flat, D, zero, alpha, 1.0)

    lhs, rhs = deferral_closed_form(alpha, r, T)
    return {
        "deferred_closed_form": lhs,
        "taxed_closed_form": rhs,
        "deferred_simulated": float(deferred.V_right[-1]),
        "taxed_simulated": float(taxed.V_right[-1]),
        "cash_residual": float(np.max(np.abs(taxed.X_right[:-1]))),
    }
