"""Hypothesis generators shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from taxflow.market_paths import PricePath, TimeGrid
from taxflow.tax_flow import ElementaryStrategy


@st.composite
def integer_market(draw, min_steps=1, max_steps=12, max_shares=4, max_move=3):
    """Integer prices (a walk from 100) and integer long-only positions after trading."""
    n = draw(st.integers(min_steps, max_steps))
    moves = draw(st.lists(st.integers(-max_move, max_move), min_size=n, max_size=n))
    prices = np.concatenate(([100], 100 + np.cumsum(moves))).astype(float)
    positions = draw(st.lists(st.integers(0, max_shares), min_size=n + 1, max_size=n + 1))
    return prices, np.array(positions, dtype=float)


@st.composite
def grid_market(draw, **kw):
    prices, positions = draw(integer_market(**kw))
    grid = TimeGrid.uniform(prices.size - 1)
    return PricePath(grid, prices), ElementaryStrategy.from_positions(grid, positions)


@st.composite
def real_market(draw, min_steps=1, max_steps=15):
    """Real-valued positive prices and real positions."""
    n = draw(st.integers(min_steps, max_steps))
    floats = st.floats(0.5, 200.0, allow_nan=False)
    prices = np.array(draw(st.lists(floats, min_size=n + 1, max_size=n + 1)))
    positions = np.array(draw(st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=n + 1, max_size=n + 1)))
    grid = TimeGrid.uniform(n)
    return PricePath(grid, prices), ElementaryStrategy.from_positions(grid, positions)
