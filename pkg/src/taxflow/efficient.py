"""Closed forms for strategies that hold ``g(S_t)`` shares with ``g`` nondecreasing.

Such a strategy never realizes a gain: it only sells shares that were just
bought at the current price.  Its book profits follow from the price alone,

    int_0^{phi_t} F(t, x) dx = G(S_t) - G(min_{u <= t} S_u),

and the tax flow before liquidation is

    Pi_t = alpha * (G(min_{u <= t} S_u) - G(S_0) - [phi, S]_t / 2),

a nonincreasing running-minimum part minus a nondecreasing covariation part.
On a grid the strategy holds ``g(S_{k-1})`` over ``(t_{k-1}, t_k]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .market_paths import PricePath, gen_crr
from .tax_flow import ElementaryStrategy, TaxFlow, tax_process_elementary


class NotMonotone(ValueError):
    pass


@dataclass(frozen=True)
class FeedbackRule:
    """Shares held as a function of the price.

    ``linear``: ``a s + b``; ``power``: ``a s**p``; ``tabulated``: piecewise
    linear through ``(knots, values)``, flat outside the knots.
    """

    kind: str = "linear"
    a: float = 1.0
    b: float = 0.0
    p: float = 1.0
    knots: tuple = ()
    values: tuple = ()
    _cum: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "linear":
            if self.a < 0:
                raise NotMonotone("a decreasing rule has no running-minimum closed form")
        elif self.kind == "power":
            if self.a < 0 or self.p <= 0:
                raise NotMonotone("power rules need a >= 0 and p > 0")
        elif self.kind == "tabulated":
            k = np.asarray(self.knots, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if k.size < 2 or k.shape != v.shape:
                raise ValueError("tabulated rules need matching knots and values, at least two")
            if np.any(np.diff(k) <= 0):
                raise ValueError("knots must be strictly increasing")
            if np.any(np.diff(v) < 0):
                raise NotMonotone("tabulated values must be nondecreasing")
            if np.any(v < 0):
                raise ValueError("tabulated values must be nonnegative")
            object.__setattr__(self, "knots", tuple(k))
            object.__setattr__(self, "values", tuple(v))
            seg = 0.5 * (v[1:] + v[:-1]) * np.diff(k)
            object.__setattr__(self, "_cum", np.concatenate(([0.0], np.cumsum(seg))))
        else:
            raise ValueError(f"unknown feedback rule {self.kind!r}")

    @classmethod
    def linear(cls, a: float = 1.0, b: float = 0.0) -> "FeedbackRule":
        return cls("linear", a=a, b=b)

    @classmethod
    def power(cls, a: float, p: float) -> "FeedbackRule":
        return cls("power", a=a, p=p)

    @classmethod
    def tabulated(cls, knots: Sequence[float], values: Sequence[float]) -> "FeedbackRule":
        return cls("tabulated", knots=tuple(knots), values=tuple(values))

    def g(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            out = self.a * s + self.b
        elif self.kind == "power":
            out = self.a * s**self.p
        else:
            out = np.interp(s, self.knots, self.values)
        return out if out.ndim else float(out)

    __call__ = g

    def G(self, s):
        """Antiderivative with ``G(0) = 0`` (up to a constant for tabulated rules)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            out = 0.5 * self.a * s**2 + self.b * s
        elif self.kind == "power":
            out = self.a * s ** (self.p + 1) / (self.p + 1)
        else:
            k = np.asarray(self.knots)
            v = np.asarray(self.values)
            below = np.minimum(s, k[0])
            inside = np.clip(s, k[0], k[-1])
            i = np.clip(np.searchsorted(k, inside, side="right") - 1, 0, k.size - 2)
            u = inside - k[i]
            slope = (v[i + 1] - v[i]) / (k[i + 1] - k[i])
            out = (v[0] * below + self._cum[i] + v[i] * u + 0.5 * slope * u**2
                   + v[-1] * np.maximum(s - k[-1], 0.0))
        return out if out.ndim else float(out)

    def g_inverse(self, y: float) -> float:
        """``sup{s >= 0 : g(s) <= y}``; ``inf`` when ``g`` never exceeds ``y``."""
        if self.kind == "linear":
            if self.a == 0:
                return math.inf if y >= self.b else 0.0
            return max((y - self.b) / self.a, 0.0)
        if self.kind == "power":
            if self.a == 0:
                return math.inf if y >= 0 else 0.0
            return (max(y, 0.0) / self.a) ** (1.0 / self.p)
        k, v = self.knots, self.values
        if y >= v[-1]:
            return math.inf
        i = int(np.searchsorted(v, y, side="right"))
        if i == 0:
            return 0.0
        return k[i - 1] + (y - v[i - 1]) / (v[i] - v[i - 1]) * (k[i] - k[i - 1])

    def check_range(self, lo: float, hi: float, samples: int = 257) -> None:
        """Reject rules that are negative or decreasing on ``[lo, hi]``."""
        s = np.linspace(lo, hi, samples)
        vals = np.asarray(self.g(s))
        if np.any(vals < 0):
            raise NotMonotone(f"rule is negative on [{lo:.6g}, {hi:.6g}]")
        if np.any(np.diff(vals) < 0):
            raise NotMonotone(f"rule decreases on [{lo:.6g}, {hi:.6g}]")

    def describe(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "a": self.a, "b": self.b}
        if self.kind == "power":
            return {"kind": "power", "a": self.a, "p": self.p}
        return {"kind": "tabulated", "knots": list(self.knots), "values": list(self.values)}


def feedback_strategy(rule: FeedbackRule, S: PricePath) -> ElementaryStrategy:
    """Hold ``g(S_{k-1})`` over ``(t_{k-1}, t_k]`` and ``g(S_T)`` after the horizon."""
    s = S.values
    rule.check_range(float(s.min()), float(s.max()))
    held = np.concatenate(([0.0], np.asarray(rule.g(s[:-1]), dtype=float)))
    return ElementaryStrategy(S.grid, held, float(rule.g(s[-1])))


def closed_form_book_profit(rule: FeedbackRule, S: PricePath, t: int, x: float) -> float:
    if x < 0:
        raise ValueError("share labels are nonnegative")
    s = S.values[: t + 1]
    rule.check_range(float(s.min()), float(s.max()))
    low = float(s.min())
    held = float(rule.g(s[-1]))
    floor = float(rule.g(low))
    if x > held:
        return 0.0
    if x <= held - floor:
        return float(s[-1] - rule.g_inverse(held - x))
    return float(s[-1] - low)


def closed_form_book_profit_integral(rule: FeedbackRule, S: PricePath) -> np.ndarray:
    """``G(S_t) - G(min_{u <= t} S_u)`` along the path."""
    return np.asarray(rule.G(S.values)) - np.asarray(rule.G(S.running_min()))


def quadratic_covariation(phi: ElementaryStrategy, S: PricePath) -> np.ndarray:
    """``sum_{j <= k} (phi_{j+} - phi_{(j-1)+}) (S_j - S_{j-1})``.

    Each position change is paired with the price move it responds to.
    """
    if phi.grid != S.grid:
        raise ValueError("strategy and prices live on different grids")
    inc = np.diff(phi.right) * np.diff(S.values)
    return np.concatenate(([0.0], np.cumsum(inc)))


@dataclass(frozen=True)
class ClosedFormTax:
    flow: TaxFlow
    minimum_part: np.ndarray
    covariation_part: np.ndarray


def closed_form_tax(rule: FeedbackRule, S: PricePath, alpha: float, liquidate: bool = False) -> ClosedFormTax:
    """Running-minimum formula for the taxes of ``g(S)``.

    ``minimum_part`` is ``alpha (G(min S) - G(S_0))`` and ``covariation_part``
    is ``alpha [phi, S] / 2``; the flow is their difference.  With
    ``liquidate`` the tax on selling everything at ``T`` is added to the last
    right value.
    """
    phi = feedback_strategy(rule, S)
    minimum = alpha * (np.asarray(rule.G(S.running_min())) - rule.G(S.values[0]))
    cov = 0.5 * alpha * quadratic_covariation(phi, S)
    values = minimum - cov
    left = np.concatenate(([0.0], values[:-1]))
    right = values.copy()
    if liquidate:
        right[-1] += alpha * closed_form_book_profit_integral(rule, S)[-1]
    return ClosedFormTax(TaxFlow(S.grid, left, values, right), minimum, cov)


def crr_step_taxes(rule: FeedbackRule, S: PricePath, alpha: float) -> np.ndarray:
    """Tax of each binomial step: ``-alpha (g(S_{k-1}) - g(S_k)) (dS_k)^-`` away from the
    running minimum, ``alpha g(min_{k-1}) (min_k - min_{k-1})`` at it."""
    s = S.values
    mins = S.running_min()
    out = np.zeros(s.size)
    for k in range(1, s.size):
        drop = min(s[k] - s[k - 1], 0.0)
        if s[k - 1] > mins[k - 1]:
            out[k] = alpha * (rule.g(s[k - 1]) - rule.g(s[k])) * drop
        else:
            out[k] = alpha * rule.g(mins[k - 1]) * (mins[k] - mins[k - 1])
    return out


@dataclass(frozen=True)
class ConvergenceLevel:
    steps: int
    mesh: float
    engine: np.ndarray
    closed_form: np.ndarray

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.engine - self.closed_form)

    @property
    def median_error(self) -> float:
        return float(np.median(self.abs_error))


def convergence_study(rule: FeedbackRule, steps: Sequence[int], paths: int, seed: int, alpha: float = 0.25,
                      s0: float = 100.0, sigma: float = 0.2, T: float = 1.0) -> list[ConvergenceLevel]:
    """Grid-engine ``Pi_{T+}`` against the closed form ``Pi_T`` on seeded binomial paths.

    Path ``i`` at every level uses the stream ``(seed, i)``; levels differ in the
    number of steps only.
    """
    levels = []
    for n in steps:
        eng, cf = np.zeros(paths), np.zeros(paths)
        for i in range(paths):
            S = gen_crr(s0, sigma, n, T, seed, path_index=i)
            eng[i] = tax_process_elementary(feedback_strategy(rule, S), S, None, alpha).right[-1]
            cf[i] = closed_form_tax(rule, S, alpha).flow.right[-1]
        levels.append(ConvergenceLevel(int(n), T / n, eng, cf))
    return levels


def convergence_csv(levels: Sequence[ConvergenceLevel]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "mesh", "engine_Pi_T", "closed_form_Pi_T", "abs_error"])
    for lv in levels:
        w.writerow([lv.steps] + [f"{v:.17g}" for v in (lv.mesh, float(np.median(lv.engine)),
                                                        float(np.median(lv.closed_form)), lv.median_error)])
    return buf.getvalue()
