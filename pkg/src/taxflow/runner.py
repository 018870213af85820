"""Experiment runner: builds inputs from a config, runs one experiment, writes reports.

Every report is a deterministic function of the validated config: Monte Carlo
path ``i`` draws from the stream ``(seed, i)``, aggregates are taken in path
order, CSV numbers carry 17 significant digits and JSON keys are sorted.  Each
run writes ``manifest.json`` with the config echo, seed, package version and
SHA-256 checksums of the other files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .efficient import (FeedbackRule, closed_form_book_profit_integral, closed_form_tax,
                        convergence_csv, convergence_study, feedback_strategy)
from .fixtures import Fixture, load_fixture
from .lot_ledger import replay_ledger
from .market_paths import (DividendPath, JumpLaw, PricePath, RatePath, TimeGrid, gen_crr, gen_gbm,
                           gen_jump_diffusion, path_rng)
from .tax_flow import (ElementaryStrategy, book_profit_integrals, cauchy_study, tax_process_elementary,
                       tax_process_via_identity, up_distance)
from .verify import random_grid_strategy, run_suite
from .wealth import compare_dividend_policies, deferral_experiment, random_dividend_model


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class Report:
    files: dict[str, str] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    def add(self, name: str, text: str) -> None:
        self.files[name] = text


# ---------------------------------------------------------------------------
# input builders


def market_path(cfg: ExperimentConfig, path_index: int) -> PricePath:
    m = cfg.market
    if m.model == "crr":
        return gen_crr(m.s0, m.sigma, m.steps, m.T, cfg.seed, path_index)
    if m.model == "gbm":
        return gen_gbm(m.s0, m.mu, m.sigma, m.steps, m.T, cfg.seed, path_index)
    law = JumpLaw(**m.jump_law.model_dump())
    return gen_jump_diffusion(m.s0, m.mu, m.sigma, m.jump_intensity, law, m.steps, m.T, cfg.seed, path_index)


def feedback_rule(cfg: ExperimentConfig) -> FeedbackRule:
    s = cfg.strategy
    if s.rule == "linear":
        return FeedbackRule.linear(s.a, s.b)
    if s.rule == "power":
        return FeedbackRule.power(s.a, s.p)
    return FeedbackRule.tabulated(s.knots, s.values)


def explicit_fixture(cfg: ExperimentConfig) -> Fixture | None:
    s = cfg.strategy
    if s.prices is not None:
        grid = TimeGrid(np.arange(float(len(s.prices))))
        D = DividendPath.from_jumps(grid, s.dividends) if s.dividends is not None else None
        return Fixture("explicit", PricePath(grid, s.prices), ElementaryStrategy.from_positions(grid, s.positions), D)
    if s.fixture is not None:
        return load_fixture(s.fixture)
    return None


def strategy_on(cfg: ExperimentConfig, S: PricePath) -> ElementaryStrategy:
    s = cfg.strategy
    if s.positions is not None:
        if len(s.positions) != len(S):
            raise ValueError(f"{len(s.positions)} positions for a path of {len(S)} points")
        return ElementaryStrategy.from_positions(S.grid, s.positions)
    return feedback_strategy(feedback_rule(cfg), S)


def rates_on(cfg: ExperimentConfig, grid: TimeGrid) -> RatePath:
    if cfg.rates.schedule is not None:
        if len(cfg.rates.schedule) != grid.n_steps:
            raise ValueError(f"rate schedule has {len(cfg.rates.schedule)} entries, grid has {grid.n_steps} intervals")
        return RatePath(grid, cfg.rates.schedule)
    return RatePath.constant(grid, cfg.rates.r)


def _identity_tol(flow) -> float:
    return 1e-10 * max(1.0, float(np.max(np.abs(flow.right))))


# ---------------------------------------------------------------------------
# experiments


def run_ledger(cfg: ExperimentConfig) -> Report:
    rep = Report()
    fx = explicit_fixture(cfg) or load_fixture("figure2")
    flow = tax_process_elementary(fx.phi, fx.S, fx.D, cfg.alpha)
    rep.add("taxflow.csv", flow.to_csv(fx.S, fx.phi))
    ledgers, taxes = replay_ledger(fx.discrete, fx.S.values, cfg.alpha)
    rep.add("ledger.csv", ledgers[-1].to_csv())
    dD = fx.D.jumps if fx.D is not None else np.zeros(len(fx.S))
    dividend_tax = cfg.alpha * np.cumsum(fx.phi.phi * dD)
    gap = float(np.max(np.abs(flow.right - (taxes + dividend_tax))))
    if gap > _identity_tol(flow):
        rep.violations.append(f"ledger replay differs from the tax flow by {gap:.3g}")
    return rep


def run_simulate(cfg: ExperimentConfig) -> Report:
    rep = Report()
    rows = []
    for i in range(cfg.batch.paths):
        S = market_path(cfg, i)
        phi = strategy_on(cfg, S)
        flow = tax_process_elementary(phi, S, None, cfg.alpha)
        gap = up_distance(flow, tax_process_via_identity(phi, S, None, cfg.alpha))
        if gap > _identity_tol(flow):
            rep.violations.append(f"path {i}: constructions differ by {gap:.3g}")
        if i == 0:
            rep.add("taxflow.csv", flow.to_csv(S, phi))
        unrealized = book_profit_integrals(phi, S)["right"][-1]
        rows.append((i, S.values[-1], flow.left[-1], flow.at[-1], flow.right[-1], unrealized, gap))
    rep.add("simulate.csv", csv_text(["path", "S_T", "Pi_T_left", "Pi_T", "Pi_T_right",
                                      "unrealized_T", "identity_gap"], rows))
    return rep


def run_compare_dividends(cfg: ExperimentConfig) -> Report:
    rep = Report()
    rows = []
    for i in range(cfg.batch.paths):
        rng = path_rng(cfg.seed, i)
        model = random_dividend_model(rng, cfg.dividends.steps, cfg.market.s0, cfg.market.sigma,
                                      cfg.dividends.probability)
        if cfg.strategy.positions is not None:
            phi = strategy_on(cfg, PricePath(model.grid, np.zeros(len(model.grid))))
        else:
            phi = random_grid_strategy(rng, model.grid.n_steps)
        cmp = compare_dividend_policies(phi, model, rates_on(cfg, model.grid), cfg.alpha, cfg.v0)
        s = cmp.summary()
        if s["violations"]:
            rep.violations.append(f"path {i}: {s['violations']} comparison violations")
        if i == 0:
            rep.add("comparison.csv", cmp.to_csv())
        rows.append((i, s["min_gap"], s["max_gap"], s["min_tax_gap"], s["violations"]))
    mins = [r[1] for r in rows]
    deferral = deferral_experiment(cfg.alpha, cfg.rates.r if cfg.rates.r > 0 else 0.05, 1.0, 1000)
    rep.add("comparison_batch.csv", csv_text(["path", "min_gap", "max_gap", "min_tax_gap", "violations"], rows))
    rep.add("summary.json", json_text({
        "min_gap": min(mins),
        "max_gap": max(r[2] for r in rows),
        "min_tax_gap": min(r[3] for r in rows),
        "violations": sum(r[4] for r in rows),
        "paths": len(rows),
        "deferral": deferral,
    }))
    return rep


def run_efficient(cfg: ExperimentConfig) -> Report:
    rep = Report()
    rule = feedback_rule(cfg)
    S = market_path(cfg, 0)
    phi = feedback_strategy(rule, S)
    engine = tax_process_elementary(phi, S, None, cfg.alpha)
    cf = closed_form_tax(rule, S, cfg.alpha)
    bp_engine = book_profit_integrals(phi, S)["right"]
    bp_closed = closed_form_book_profit_integral(rule, S)
    rows = zip(S.grid.times, S.values, phi.right, engine.right, cf.flow.at, cf.minimum_part,
               cf.covariation_part, bp_engine, bp_closed)
    rep.add("efficient.csv", csv_text(["t", "S", "phi", "engine_Pi", "closed_form_Pi", "minimum_part",
                                       "covariation_part", "engine_book_profit", "closed_form_book_profit"], rows))
    if np.any(cf.flow.at > 1e-12):
        rep.violations.append("closed-form taxes are positive before liquidation")
    return rep


def run_converge(cfg: ExperimentConfig) -> Report:
    rep = Report()
    rule = feedback_rule(cfg)
    b = cfg.batch
    m = cfg.market
    steps = [b.base_steps * 2**i for i in range(b.levels)]
    levels = convergence_study(rule, steps, b.paths, cfg.seed, cfg.alpha, m.s0, m.sigma, m.T)
    rep.add("convergence.csv", convergence_csv(levels))
    rows = [(lv.steps, i, e, c, abs(e - c)) for lv in levels
            for i, (e, c) in enumerate(zip(lv.engine, lv.closed_form))]
    rep.add("convergence_paths.csv", csv_text(["n", "path", "engine_Pi_T", "closed_form_Pi_T", "abs_error"], rows))
    for lv in levels:
        if np.any(lv.closed_form > 1e-12):
            rep.violations.append(f"n={lv.steps}: positive closed-form taxes")

    coarse = [b.coarse_start * 2**i for i in range(b.levels)]
    fine = max(b.fine_steps, coarse[-1])
    if fine % coarse[-1]:
        raise ValueError(f"fine_steps={fine} must be a multiple of {coarse[-1]}")
    study = cauchy_study(rule, coarse, fine, b.paths, cfg.seed, cfg.alpha, m.s0, m.mu, m.sigma, m.T)
    rep.add("cauchy.csv", csv_text(["n", "mesh", "sup_distance_q50", "sup_distance_q95"],
                                   [(lv.steps, lv.mesh, lv.q50, lv.q95) for lv in study]))
    return rep


def run_verify(cfg: ExperimentConfig) -> Report:
    rep = Report()
    checks = run_suite(cfg.seed, cfg.alpha)
    rep.add("verify.json", json_text({c.name: c.as_dict() for c in checks}))
    rep.violations.extend(f"{c.name} failed (worst {c.worst:.3g})" for c in checks if not c.ok)
    return rep


EXPERIMENT_RUNNERS = {
    "ledger": run_ledger,
    "simulate": run_simulate,
    "compare-dividends": run_compare_dividends,
    "efficient": run_efficient,
    "converge": run_converge,
    "verify": run_verify,
}


def run_experiment(cfg: ExperimentConfig, kind: str, out_dir: Path) -> Report:
    """Run ``kind`` and write its files plus ``manifest.json`` into ``out_dir``."""
    rep = EXPERIMENT_RUNNERS[kind](cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for name, text in sorted(rep.files.items()):
        data = text.encode()
        (out_dir / name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "experiment": kind,
        "seed": cfg.seed,
        "version": __version__,
        "config": cfg.model_dump(mode="json", exclude={"out"}),
        "files": checksums,
        "violations": rep.violations,
    }
    (out_dir / "manifest.json").write_bytes(json_text(manifest).encode())
    return rep
