"""Discrete-time lot accounting under the exact tax basis.

Time runs over indices ``0..T``.  ``N[s, t]`` is the number of shares bought at
``s`` and still held after trading at ``t``; ``phi[t]`` (0-based) is the
position held after trading at ``t``, so ``phi[t] == N[:t+1, t].sum()``.

Two equivalent engines are provided.  :func:`wash_optimal_strategy` builds the
full lot matrix that first sells the most recently purchased shares and then
wash-sells every lot trading below its purchase price; :func:`ledger_step`
carries the same procedure forward incrementally on a list of lots whose basis
is reset on every wash sale.  :func:`brute_force_min_tax` enumerates every
admissible lot matrix on a share lattice and serves as an oracle for both.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .market_paths import PricePath


class EnumerationBudgetExceeded(RuntimeError):
    pass


def _prices(S) -> np.ndarray:
    return np.asarray(S.values if isinstance(S, PricePath) else S, dtype=float)


@dataclass(frozen=True)
class DiscreteStrategy:
    """Positions held after trading at ``0..T``."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 1 or phi.size < 1:
            raise ValueError("a strategy needs at least one position")
        if np.any(phi < 0):
            raise ValueError("short positions are not allowed")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def T(self) -> int:
        return self.phi.size - 1

    @property
    def increments(self) -> np.ndarray:
        """``phi[t] - phi[t-1]`` with a flat start, i.e. the trade at each index."""
        return np.diff(self.phi, prepend=0.0)


@dataclass(frozen=True)
class LotMatrix:
    n: np.ndarray

    def __post_init__(self):
        n = np.array(self.n, dtype=float)
        if n.ndim != 2 or n.shape[0] != n.shape[1]:
            raise ValueError("a lot matrix is square")
        n.setflags(write=False)
        object.__setattr__(self, "n", n)

    @property
    def T(self) -> int:
        return self.n.shape[0] - 1

    def positions(self) -> np.ndarray:
        return self.n.sum(axis=0)


@dataclass(frozen=True)
class BookProfitFunction:
    """Step function ``x -> F(x)`` on ``(0, total_width]``.

    Segment ``i`` covers ``(c_{i-1}, c_i]`` with ``c_i`` the cumulative width;
    profits are per share.
    """

    widths: np.ndarray
    profits: np.ndarray

    def __post_init__(self):
        w = np.array(self.widths, dtype=float)
        p = np.array(self.profits, dtype=float)
        if w.shape != p.shape or w.ndim != 1:
            raise ValueError("widths and profits must be 1-d and aligned")
        if np.any(w <= 0):
            raise ValueError("segment widths must be positive")
        w.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "profits", p)

    @classmethod
    def from_pairs(cls, pairs) -> "BookProfitFunction":
        pairs = [(w, p) for w, p in pairs if w > 0]
        if not pairs:
            return cls(np.empty(0), np.empty(0))
        w, p = zip(*pairs)
        return cls(np.array(w), np.array(p))

    @property
    def total_width(self) -> float:
        return float(self.widths.sum())

    @property
    def segments(self) -> list[tuple[float, float]]:
        return list(zip(self.widths.tolist(), self.profits.tolist()))

    def __call__(self, x: float) -> float:
        if x <= 0 or self.widths.size == 0:
            return 0.0
        edges = np.cumsum(self.widths)
        i = int(np.searchsorted(edges, x, side="left"))
        return float(self.profits[i]) if i < edges.size else 0.0

    def integral(self, upto: float | None = None) -> float:
        """``int_0^upto F(x) dx`` (whole support by default)."""
        if upto is None:
            return float(np.dot(self.widths, self.profits))
        if upto <= 0:
            return 0.0
        edges = np.cumsum(self.widths)
        starts = edges - self.widths
        covered = np.clip(upto - starts, 0.0, self.widths)
        return float(np.dot(covered, self.profits))

    def merged(self) -> "BookProfitFunction":
        """Coalesce neighbouring segments with equal profit."""
        out: list[list[float]] = []
        for w, p in zip(self.widths, self.profits):
            if out and out[-1][1] == p:
                out[-1][0] += w
            else:
                out.append([w, p])
        return BookProfitFunction.from_pairs(out)

    def is_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.profits) >= 0))


# ---------------------------------------------------------------------------
# lot matrices


@dataclass(frozen=True)
class Validation:
    ok: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate(N: LotMatrix, phi: DiscreteStrategy, atol: float = 0.0) -> Validation:
    """Check holding monotonicity per lot, nonnegativity and position consistency."""
    n = N.n
    T = N.T
    problems: list[str] = []
    if phi.phi.size != T + 1:
        return Validation(False, (f"strategy has {phi.phi.size} positions, matrix covers {T + 1} dates",))
    if np.any(np.tril(n, -1) != 0):
        problems.append("entries below the diagonal (sale before purchase)")
    for s in range(T + 1):
        row = n[s, s:]
        if np.any(row < -atol):
            problems.append(f"negative holding in lot {s}")
        bad = np.flatnonzero(np.diff(row) > atol)
        if bad.size:
            t = s + int(bad[0]) + 1
            problems.append(f"lot {s} grows between {t - 1} and {t}: {row[bad[0]]} -> {row[bad[0] + 1]}")
    pos = n.sum(axis=0)
    for t in np.flatnonzero(np.abs(pos - phi.phi) > atol):
        problems.append(f"holdings at {t} sum to {pos[t]}, strategy says {phi.phi[t]}")
    return Validation(not problems, tuple(problems))


def wash_optimal_strategy(phi: DiscreteStrategy, S) -> LotMatrix:
    """Lot matrix that sells newest lots first and wash-sells every losing lot."""
    S = _prices(S)
    x = phi.phi
    T = x.size - 1
    if S.size != T + 1:
        raise ValueError(f"need {T + 1} prices, got {S.size}")
    n = np.zeros((T + 1, T + 1))
    n[0, 0] = x[0]
    for t in range(1, T + 1):
        dphi = x[t] - x[t - 1]
        to_sell = max(-dphi, 0.0)
        prev = n[:t, t - 1]
        # shares bought strictly after s and still held after t-1
        newer = np.concatenate((np.cumsum(prev[::-1])[::-1][1:], [0.0]))
        kept = np.maximum(prev - np.maximum(to_sell - newer, 0.0), 0.0)
        kept[S[t] < S[:t]] = 0.0
        n[:t, t] = kept
        n[t, t] = dphi + float(np.sum(prev - kept))
    return LotMatrix(n)


def tax_payments(N: LotMatrix, S, alpha: float, check: DiscreteStrategy | None = None) -> np.ndarray:
    """Accumulated taxes ``Pi_0..Pi_T`` of a lot matrix."""
    S = _prices(S)
    n = N.n
    if check is not None and not validate(N, check):
        raise ValueError("invalid lot matrix")
    T = N.T
    pi = np.zeros(T + 1)
    for t in range(1, T + 1):
        sold = n[:t, t - 1] - n[:t, t]
        pi[t] = pi[t - 1] + alpha * float(np.dot(sold, S[t] - S[:t]))
    return pi


def purchase_order(S, t: int) -> list[int]:
    """Purchase dates ``0..t`` sorted by descending price, date ``t`` first among
    dates priced at ``S[t]``, otherwise later dates first on ties."""
    S = _prices(S)
    return sorted(range(t + 1), key=lambda s: (-S[s], s != t, -s))


def book_profit_fn_discrete(N: LotMatrix, S, t: int) -> BookProfitFunction:
    """Book profits after trading at ``t``, lowest profit first."""
    S = _prices(S)
    if not 0 <= t <= N.T:
        raise ValueError("t out of range")
    return BookProfitFunction.from_pairs(
        (N.n[s, t], S[t] - S[s]) for s in purchase_order(S, t)
    )


def recursion_step(F_prev: BookProfitFunction, dphi: float, dS: float) -> BookProfitFunction:
    """Advance wash-optimal book profits by one date.

    Drops the first ``(dphi)^-`` shares (the sale), shifts in ``(dphi)^+`` new
    shares at zero profit, adds the price move and floors at zero.
    """
    pairs: list[tuple[float, float]] = []
    drop = max(-dphi, 0.0)
    for w, p in zip(F_prev.widths, F_prev.profits):
        if drop >= w:
            drop -= w
            continue
        pairs.append((w - drop, max(p + dS, 0.0)))
        drop = 0.0
    if dphi > 0:
        pairs.insert(0, (dphi, 0.0))
    return BookProfitFunction.from_pairs(pairs).merged()


def trading_gains(phi: DiscreteStrategy, S) -> np.ndarray:
    """``sum_{u<=t} phi_u (S_u - S_{u-1})`` with ``phi_u`` held over ``(u-1, u]``."""
    S = _prices(S)
    held = phi.phi[:-1]
    return np.concatenate(([0.0], np.cumsum(held * np.diff(S))))


def tax_via_book_profits(N: LotMatrix, S, alpha: float) -> np.ndarray:
    """Accumulated taxes from trading gains minus unrealized book profits."""
    phi = DiscreteStrategy(N.positions())
    gains = trading_gains(phi, S)
    unrealized = np.array([book_profit_fn_discrete(N, S, t).integral() for t in range(N.T + 1)])
    return alpha * (gains - unrealized)


# ---------------------------------------------------------------------------
# incremental ledger


@dataclass(frozen=True)
class Lot:
    purchase_index: int
    size: float
    basis: float


@dataclass(frozen=True)
class LotLedger:
    """Open lots ordered by purchase index; ``index``/``price`` of the last step."""

    lots: tuple[Lot, ...] = ()
    index: int = -1
    price: float = float("nan")

    @property
    def position(self) -> float:
        return float(sum(lot.size for lot in self.lots))

    def book_profits(self) -> BookProfitFunction:
        ordered = sorted(self.lots, key=lambda lot: (-lot.basis, -lot.purchase_index))
        return BookProfitFunction.from_pairs((lot.size, self.price - lot.basis) for lot in ordered)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["purchase_index", "size", "basis", "book_profit"])
        for lot in self.lots:
            writer.writerow([lot.purchase_index, f"{lot.size:.17g}", f"{lot.basis:.17g}",
                             f"{self.price - lot.basis:.17g}"])
        return buf.getvalue()


def ledger_step(ledger: LotLedger, new_price: float, delta_phi: float,
                alpha: float) -> tuple[LotLedger, float]:
    """Process one trading date; returns the new ledger and the tax paid."""
    lots = list(ledger.lots)
    if ledger.position + delta_phi < 0:
        raise ValueError(f"selling {-delta_phi} shares out of {ledger.position} is a short sale")
    index = ledger.index + 1
    tax = 0.0
    to_sell = max(-delta_phi, 0.0)
    while to_sell > 0 and lots:
        lot = lots[-1]
        qty = min(lot.size, to_sell)
        tax += alpha * qty * (new_price - lot.basis)
        to_sell -= qty
        if qty == lot.size:
            lots.pop()
        else:
            lots[-1] = Lot(lot.purchase_index, lot.size - qty, lot.basis)
    # bases are nondecreasing along the list, so losing lots form its tail;
    # they are sold and bought back at the current price as one new lot
    bought = max(delta_phi, 0.0)
    while lots and lots[-1].basis > new_price:
        lot = lots.pop()
        tax += alpha * lot.size * (new_price - lot.basis)
        bought += lot.size
    if bought > 0:
        lots.append(Lot(index, bought, new_price))
    return LotLedger(tuple(lots), index, float(new_price)), tax


def replay_ledger(phi: DiscreteStrategy, S, alpha: float) -> tuple[list[LotLedger], np.ndarray]:
    """Run :func:`ledger_step` over a whole strategy; returns ledgers and ``Pi_0..Pi_T``."""
    S = _prices(S)
    ledger = LotLedger()
    ledgers, taxes = [], []
    for price, dphi in zip(S, phi.increments):
        ledger, tax = ledger_step(ledger, price, dphi, alpha)
        ledgers.append(ledger)
        taxes.append(tax)
    return ledgers, np.cumsum(taxes)


# ---------------------------------------------------------------------------
# exhaustive oracle


def enumerate_lot_matrices(phi: DiscreteStrategy, quantum: float = 1.0,
                           budget: int = 200_000) -> Iterator[LotMatrix]:
    """Every lot matrix on the ``quantum`` lattice generating ``phi``.

    The count grows roughly like the product over dates of the number of ways
    to keep a sub-multiset of the open lots; with ``T <= 4`` and at most four
    shares per date it stays in the low thousands.  Raises
    :class:`EnumerationBudgetExceeded` after ``budget`` matrices.
    """
    units = phi.phi / quantum
    if not np.allclose(units, np.round(units), rtol=0, atol=1e-9):
        raise ValueError("positions must be multiples of the quantum")
    units = np.round(units).astype(int)
    T = units.size - 1
    n = np.zeros((T + 1, T + 1), dtype=int)
    n[0, 0] = units[0]
    count = 0

    def keep(t: int, s: int, room: int) -> Iterator[None]:
        # choose N[s, t] for s..t-1 with total at most `room`
        if s == t:
            yield
            return
        for k in range(min(n[s, t - 1], room), -1, -1):
            n[s, t] = k
            yield from keep(t, s + 1, room - k)
        n[s, t] = 0

    def column(t: int) -> Iterator[LotMatrix]:
        nonlocal count
        if t > T:
            count += 1
            if count > budget:
                raise EnumerationBudgetExceeded(f"more than {budget} lot matrices")
            yield LotMatrix(n * quantum)
            return
        for _ in keep(t, 0, units[t]):
            n[t, t] = units[t] - n[:t, t].sum()
            yield from column(t + 1)
        n[t, t] = 0

    yield from column(1)


def brute_force_min_tax_all(phi: DiscreteStrategy, S, alpha: float, quantum: float = 1.0,
                            budget: int = 200_000) -> np.ndarray:
    """Pointwise minimum of ``Pi_t`` over every enumerated lot matrix."""
    best = None
    for N in enumerate_lot_matrices(phi, quantum, budget):
        pi = tax_payments(N, S, alpha)
        best = pi if best is None else np.minimum(best, pi)
    return best


def brute_force_min_tax(phi: DiscreteStrategy, S, alpha: float, t: int, quantum: float = 1.0,
                        budget: int = 200_000) -> float:
    return float(brute_force_min_tax_all(phi, S, alpha, quantum, budget)[t])


def random_lot_matrix(phi: DiscreteStrategy, rng: np.random.Generator) -> LotMatrix:
    """An arbitrary admissible lot matrix for ``phi`` (random sale choices)."""
    x = phi.phi
    T = x.size - 1
    n = np.zeros((T + 1, T + 1))
    n[0, 0] = x[0]
    for t in range(1, T + 1):
        prev = n[:t, t - 1]
        keep = prev * rng.random(t) * (rng.random(t) < 0.7) + prev * (rng.random(t) >= 0.7)
        total = keep.sum()
        if total > x[t]:
            keep *= x[t] / total
        n[:t, t] = np.minimum(keep, prev)
        n[t, t] = max(x[t] - n[:t, t].sum(), 0.0)
    return LotMatrix(n)
