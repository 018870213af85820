"""Invariant suite: every structural property of the library, checked on seeded data.

Each check returns a :class:`Check` with the worst observed discrepancy; the
suite passes when every check does.  Batch sizes are small so that the whole
suite runs in seconds; the test suite runs the same checks at full size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import lot_ledger as ll
from .efficient import FeedbackRule, closed_form_tax, crr_step_taxes, feedback_strategy
from .fixtures import dividend_reinvestment_example, nonadditive_pair, wash_sale_example
from .market_paths import PricePath, RatePath, TimeGrid, gen_crr, path_rng
from .tax_flow import (SIDES, ElementaryStrategy, book_profit_function,
                       jump_components, pointwise_counterexample, purchase_time, book_profit,
                       stability_bound_check, tax_process_elementary, tax_process_from_jumps,
                       tax_process_via_identity, trading_gains, up_distance)
from .wealth import (book_profit_domination, compare_dividend_policies, random_dividend_model,
                     ratio_monotone_check, solve_dividend_sde)


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    worst: float = 0.0
    instances: int = 0
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ok", bool(self.ok))
        object.__setattr__(self, "worst", float(self.worst))

    def as_dict(self) -> dict:
        return {"ok": self.ok, "worst": self.worst, "instances": self.instances, "detail": self.detail}


def random_integer_instance(rng: np.random.Generator, T: int, max_step: int = 4,
                            s0: int = 100, max_move: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Integer prices and long-only integer positions after trading at ``0..T``."""
    moves = rng.integers(-max_move, max_move + 1, size=T)
    S = np.concatenate(([s0], s0 + np.cumsum(moves))).astype(float)
    pos = [int(rng.integers(0, max_step + 1))]
    for _ in range(T):
        pos.append(max(pos[-1] + int(rng.integers(-max_step, max_step + 1)), 0))
    return S, np.array(pos, dtype=float)


def random_grid_strategy(rng: np.random.Generator, n: int, max_step: int = 3) -> ElementaryStrategy:
    _, pos = random_integer_instance(rng, n, max_step)
    return ElementaryStrategy.from_positions(TimeGrid.uniform(n), pos)


def _flows(phi, S, D, alpha):
    return (tax_process_elementary(phi, S, D, alpha), tax_process_via_identity(phi, S, D, alpha),
            tax_process_from_jumps(phi, S, D, alpha))


def check_worked_examples(alpha: float = 0.25) -> Check:
    wash = wash_sale_example()
    flow = tax_process_elementary(wash.phi, wash.S, None, alpha)
    expect = alpha * np.array([0, 0, 0, 4, 3], dtype=float)
    err = float(np.max(np.abs(flow.right - expect)))
    reinvest = dividend_reinvestment_example()
    F_left = book_profit_function(reinvest.phi, reinvest.S, 3, "left")
    washed = sum(w for w, p in F_left.segments if p + (reinvest.S.values[3] - reinvest.S.values[2]) < 0)
    F_right = book_profit_function(reinvest.phi, reinvest.S, 3, "right")
    fresh = F_right.segments[0]
    ok = err == 0.0 and washed == 55 and fresh == (20.0, 0.0)
    return Check("worked_fixtures", ok, err, 2, f"washed={washed} new={fresh}")


def check_oracle(rng, instances: int, alpha: float = 0.25) -> Check:
    worst = 0.0
    for _ in range(instances):
        T = int(rng.integers(1, 5))
        S, pos = random_integer_instance(rng, T)
        phi = ll.DiscreteStrategy(pos)
        N = ll.wash_optimal_strategy(phi, S)
        best = ll.brute_force_min_tax_all(phi, S, alpha)
        worst = max(worst, float(np.max(np.abs(ll.tax_payments(N, S, alpha) - best))))
    return Check("optimality_oracle", worst == 0.0, worst, instances)


def check_discrete_identities(rng, instances: int, alpha: float = 0.25) -> Check:
    """Book-profit form of the taxes, one-step recursion, ledger replay and embedding."""
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 30))
        S, pos = random_integer_instance(rng, n)
        phi = ll.DiscreteStrategy(pos)
        N = ll.wash_optimal_strategy(phi, S)
        direct = ll.tax_payments(N, S, alpha, check=phi)
        worst = max(worst, float(np.max(np.abs(direct - ll.tax_via_book_profits(N, S, alpha)))))
        _, replay = ll.replay_ledger(phi, S, alpha)
        worst = max(worst, float(np.max(np.abs(direct - replay))))
        grid = TimeGrid.uniform(n)
        path = PricePath(grid, S)
        strat = ElementaryStrategy.from_positions(grid, pos)
        flow = tax_process_elementary(strat, path, None, alpha)
        worst = max(worst, float(np.max(np.abs(flow.right - direct))))
        F = ll.book_profit_fn_discrete(N, S, 0)
        for t in range(1, n + 1):
            F = ll.recursion_step(F, phi.increments[t], S[t] - S[t - 1])
            G = ll.book_profit_fn_discrete(N, S, t).merged()
            H = book_profit_function(strat, path, t).merged()
            if F.segments != G.segments or G.segments != H.segments:
                worst = max(worst, 1.0)
    return Check("discrete_identities", worst <= 1e-9, worst, instances)


def check_purchase_times(rng, instances: int) -> Check:
    bad = 0
    for _ in range(instances):
        n = int(rng.integers(2, 12))
        phi = random_grid_strategy(rng, n)
        S = gen_crr(100.0, 1.0, n, seed=int(rng.integers(1 << 30)))
        t = int(rng.integers(0, n + 1))
        held = phi.phi[t]
        xs = np.linspace(0.0, held + 1.0, 23)[1:]
        taus = [purchase_time(phi, t, x) for x in xs]
        profits = [book_profit(phi, S, t, x) for x in xs]
        inside = xs <= held
        bad += int(np.any(np.diff(np.array(taus)[inside]) > 0))
        bad += int(any(tau != t for tau, i in zip(taus, inside) if not i))
        bad += int(any(p != 0 for p, i in zip(profits, inside) if not i))
        bad += int(np.any(np.diff(np.array(profits)[inside]) < 0))
    return Check("purchase_time_properties", bad == 0, float(bad), instances)


def check_identity(rng, instances: int, alpha: float = 0.25) -> Check:
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 60))
        phi = random_grid_strategy(rng, n)
        S = gen_crr(100.0, 2.0, n, seed=int(rng.integers(1 << 30)))
        a, b, c = _flows(phi, S, None, alpha)
        worst = max(worst, up_distance(a, b), up_distance(a, c))
    return Check("gains_identity", worst < 1e-10, worst, instances)


def check_signs(rng, instances: int, alpha: float = 0.25) -> Check:
    bad = 0
    for i in range(instances):
        model = random_dividend_model(rng, int(rng.integers(2, 25)))
        S = solve_dividend_sde(model)
        phi = random_grid_strategy(rng, model.grid.n_steps)
        parts = jump_components(phi, S, model.D, alpha)
        bad += int(np.any(parts["wash"] > 0) or np.any(parts["dividend"] < 0) or np.any(parts["sale"] < 0))
    return Check("jump_signs", bad == 0, float(bad), instances)


def check_homogeneity_subadditivity(rng, instances: int, alpha: float = 0.25) -> Check:
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(1, 40))
        S = gen_crr(100.0, 2.0, n, seed=int(rng.integers(1 << 30)))
        p1, p2 = random_grid_strategy(rng, n), random_grid_strategy(rng, n)
        lam = float(rng.choice([0.5, 2.0, 3.0]))
        f1 = tax_process_elementary(p1, S, None, alpha)
        f2 = tax_process_elementary(p2, S, None, alpha)
        fs = tax_process_elementary(p1 + p2, S, None, alpha)
        fl = tax_process_elementary(lam * p1, S, None, alpha)
        for side in SIDES:
            worst = max(worst, float(np.max(np.abs(getattr(fl, side) - lam * getattr(f1, side)))))
            worst = max(worst, float(np.max(getattr(fs, side) - getattr(f1, side) - getattr(f2, side))))
    a, b = nonadditive_pair()
    fa = tax_process_elementary(a.phi, a.S, None, alpha).right[1]
    fb = tax_process_elementary(b.phi, b.S, None, alpha).right[1]
    fab = tax_process_elementary(a.phi + b.phi, a.S, None, alpha).right[1]
    strict = fab == 0.0 and fa + fb == 5 * alpha
    return Check("homogeneity_subadditivity", worst <= 1e-10 and strict, worst, instances,
                 f"pair: {fab} < {fa + fb}")


def check_stability(rng, instances: int) -> Check:
    worst = -np.inf
    for _ in range(instances):
        n = int(rng.integers(2, 40))
        phi = random_grid_strategy(rng, n)
        eps = float(rng.uniform(0.01, 1.0))
        noise = rng.uniform(-eps, eps, size=n + 1)
        noise[0] = 0.0
        tilde = ElementaryStrategy(phi.grid, np.maximum(phi.phi + noise, 0.0),
                                   max(phi.terminal + float(rng.uniform(-eps, eps)), 0.0))
        S = gen_crr(100.0, 2.0, n, seed=int(rng.integers(1 << 30)))
        t = int(rng.integers(0, n + 1))
        side = "at" if rng.random() < 0.5 else "right"
        lhs, rhs, _ = stability_bound_check(phi, tilde, S, t, side)
        worst = max(worst, lhs - rhs)
    return Check("stability_bound", worst <= 1e-12, float(worst), instances)


def check_dividends(rng, instances: int, alpha: float = 0.25) -> Check:
    worst = 0.0
    bad = 0
    for _ in range(instances):
        model = random_dividend_model(rng, int(rng.integers(2, 25)))
        phi = random_grid_strategy(rng, model.grid.n_steps)
        r = RatePath(model.grid, rng.uniform(0.0, 0.1, model.grid.n_steps))
        cmp = compare_dividend_policies(phi, model, r, alpha, v0=float(rng.uniform(0, 1000)))
        worst = min(worst, cmp.min_wealth_gap(), cmp.min_tax_gap())
        bad += int(not ratio_monotone_check(cmp.S_D, cmp.S_0, model))
        gains_0 = trading_gains(cmp.phi_0, cmp.S_0)
        gains_D = trading_gains(cmp.phi_D, cmp.S_D, model.D)
        bad += int(not np.allclose(gains_0, gains_D, rtol=0, atol=1e-9 * max(1.0, model.s0)))
        for t in range(len(model.grid)):
            bad += int(not book_profit_domination(cmp.phi_D, cmp.phi_0, cmp.S_D, cmp.S_0, t))
    return Check("dividend_comparison", worst >= -1e-9 and bad == 0, worst, instances, f"bad={bad}")


def check_feedback(rng, instances: int, alpha: float = 0.25) -> Check:
    worst = 0.0
    bad = 0
    rule = FeedbackRule.linear()
    for _ in range(instances):
        n = int(rng.integers(10, 200))
        S = gen_crr(100.0, 0.2, n, seed=int(rng.integers(1 << 30)))
        cf = closed_form_tax(rule, S, alpha)
        bad += int(np.any(cf.flow.at > 1e-12))
        bad += int(np.any(np.diff(cf.minimum_part) > 0) or np.any(np.diff(cf.covariation_part) < -1e-15))
        phi = feedback_strategy(rule, S)
        engine = tax_process_elementary(phi, S, None, alpha)
        steps = crr_step_taxes(rule, S, alpha)
        worst = max(worst, float(np.max(np.abs(np.diff(engine.right) - steps[1:]))))
        gains = alpha * trading_gains(phi, S)
        bp = alpha * (np.asarray(rule.G(S.values)) - np.asarray(rule.G(S.running_min())))
        worst = max(worst, float(np.max(np.abs(gains - bp - cf.flow.at))))
    return Check("feedback_closed_form", worst <= 1e-9 and bad == 0, worst, instances, f"bad={bad}")


def check_pointwise_counterexample(rng, instances: int, alpha: float = 0.25) -> Check:
    worst = np.inf
    for _ in range(instances):
        S = gen_crr(100.0, 5.0, 16, seed=int(rng.integers(1 << 30)))
        for n in (2, 4, 8, 16, 64):
            demo = pointwise_counterexample(S, n, alpha)
            worst = min(worst, demo.distance - demo.bound)
    return Check("pointwise_counterexample", worst >= -1e-12, float(worst), instances)


SUITE: dict[str, tuple[Callable, int]] = {
    "optimality_oracle": (check_oracle, 40),
    "discrete_identities": (check_discrete_identities, 40),
    "purchase_time_properties": (check_purchase_times, 60),
    "gains_identity": (check_identity, 60),
    "jump_signs": (check_signs, 60),
    "homogeneity_subadditivity": (check_homogeneity_subadditivity, 60),
    "stability_bound": (check_stability, 100),
    "dividend_comparison": (check_dividends, 40),
    "feedback_closed_form": (check_feedback, 20),
    "pointwise_counterexample": (check_pointwise_counterexample, 10),
}


def run_suite(seed: int = 0, alpha: float = 0.25, scale: float = 1.0) -> list[Check]:
    results = [check_worked_examples(alpha)]
    for i, (name, (fn, size)) in enumerate(SUITE.items()):
        rng = path_rng(seed, i)
        count = max(1, int(round(size * scale)))
        kwargs = {} if name in ("purchase_time_properties", "stability_bound") else {"alpha": alpha}
        results.append(fn(rng, count, **kwargs))
    return results
