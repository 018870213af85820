"""Small hand-checkable markets and strategies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lot_ledger import DiscreteStrategy
from .market_paths import DividendPath, PricePath, TimeGrid
from .tax_flow import ElementaryStrategy


@dataclass(frozen=True)
class Fixture:
    name: str
    S: PricePath
    phi: ElementaryStrategy
    D: DividendPath | None = None

    @property
    def discrete(self) -> DiscreteStrategy:
        return self.phi.to_discrete()


def _unit_grid(n_points: int) -> TimeGrid:
    return TimeGrid(np.arange(float(n_points)))


def wash_sale_example() -> Fixture:
    """Five dates: buy 9, add 1, add 4, sell 4 at the top, then a one-unit drop.

    The share bought at 103 is wash-sold at 102 for a loss of 1; the sale at
    105 realizes a gain of 1 on each of the 4 shares bought at 104.
    """
    grid = _unit_grid(5)
    S = PricePath(grid, [100.0, 103.0, 104.0, 105.0, 102.0])
    return Fixture("figure2", S, ElementaryStrategy.from_positions(grid, [9, 10, 14, 10, 10]))


def dividend_reinvestment_example() -> Fixture:
    """A 1000 dividend with a matching 1000 price drop on 100 shares.

    45 shares (bought at 4000) keep a profit of 1000 after the drop, 55 shares
    (bought at 5500) fall below their basis and are wash-sold; the dividend
    buys 20 new shares at 5000.
    """
    grid = _unit_grid(4)
    S = PricePath(grid, [4000.0, 5500.0, 6000.0, 5000.0])
    D = DividendPath.from_jumps(grid, [0.0, 0.0, 0.0, 1000.0])
    phi = ElementaryStrategy.from_positions(grid, [45, 100, 100, 120])
    return Fixture("figure3", S, phi, D)


def nonadditive_pair() -> tuple[Fixture, Fixture]:
    """One share held over ``(0, 1]`` and one over ``(1, 2]`` while the price rises 100 -> 105."""
    grid = _unit_grid(3)
    S = PricePath(grid, [100.0, 105.0, 105.0])
    first = ElementaryStrategy(grid, [0.0, 1.0, 0.0], 0.0)
    second = ElementaryStrategy(grid, [0.0, 0.0, 1.0], 1.0)
    return Fixture("nonadditive_1", S, first), Fixture("nonadditive_2", S, second)


FIXTURES = {
    "figure2": wash_sale_example,
    "figure3": dividend_reinvestment_example,
}


def load_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None
