"""Experiment configuration: a TOML document validated into typed settings.

Example::

    experiment = "converge"
    seed = 7
    alpha = 0.25

    [market]
    model = "crr"
    s0 = 100.0
    sigma = 0.2

    [strategy]
    rule = "linear"
    a = 1.0

    [batch]
    paths = 100
    levels = 6

Unknown keys are errors.  Every problem is reported at once, with the line of
the offending key when it can be located.
"""

from __future__ import annotations

import re
import sys
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fixtures import FIXTURES

EXPERIMENTS = ("ledger", "simulate", "compare-dividends", "efficient", "converge", "verify")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class JumpLawConfig(_Section):
    kind: Literal["fixed", "two_point", "uniform"] = "fixed"
    size: float = 0.0
    low: float = 0.0
    high: float = 0.0


class MarketConfig(_Section):
    model: Literal["crr", "gbm", "jump"] = "crr"
    s0: float = Field(100.0, ge=0)
    sigma: float = Field(0.2, ge=0)
    mu: float = 0.0
    steps: int = Field(200, ge=1)
    T: float = Field(1.0, gt=0)
    jump_intensity: float = Field(0.0, ge=0)
    jump_law: JumpLawConfig = JumpLawConfig()


class StrategyConfig(_Section):
    fixture: Optional[str] = None
    prices: Optional[list[float]] = None
    positions: Optional[list[float]] = None
    dividends: Optional[list[float]] = None
    rule: Literal["linear", "power", "tabulated"] = "linear"
    a: float = 1.0
    b: float = 0.0
    p: float = 1.0
    knots: Optional[list[float]] = None
    values: Optional[list[float]] = None

    @field_validator("fixture")
    @classmethod
    def _known_fixture(cls, v):
        if v is not None and v not in FIXTURES:
            raise ValueError(f"unknown fixture {v!r}; known: {', '.join(sorted(FIXTURES))}")
        return v

    @field_validator("positions")
    @classmethod
    def _long_only(cls, v):
        if v is not None and any(x < 0 for x in v):
            raise ValueError("positions must be nonnegative")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.positions is not None and self.prices is None and self.fixture is None:
            raise ValueError("explicit positions need explicit prices")
        if self.prices is not None and self.positions is None:
            raise ValueError("explicit prices need explicit positions")
        if self.prices is not None and len(self.prices) != len(self.positions):
            raise ValueError("prices and positions must have equal length")
        if self.dividends is not None and (self.prices is None or len(self.dividends) != len(self.prices)):
            raise ValueError("dividends need explicit prices of the same length")
        if self.rule == "tabulated" and (self.knots is None or self.values is None):
            raise ValueError("a tabulated rule needs knots and values")
        return self


class RatesConfig(_Section):
    r: float = 0.0
    schedule: Optional[list[float]] = None


class DividendConfig(_Section):
    probability: float = Field(0.3, ge=0, le=1)
    steps: int = Field(20, ge=1)


class BatchConfig(_Section):
    paths: int = Field(20, ge=1)
    levels: int = Field(6, ge=2)
    base_steps: int = Field(50, ge=1)
    fine_steps: int = Field(512, ge=2)
    coarse_start: int = Field(8, ge=1)


class ExperimentConfig(_Section):
    experiment: Optional[Literal["ledger", "simulate", "compare-dividends", "efficient", "converge", "verify"]] = None
    seed: int = Field(0, ge=0)
    alpha: float = Field(0.25, gt=0, lt=1)
    v0: float = 0.0
    out: str = "taxflow-out"
    market: MarketConfig = MarketConfig()
    strategy: StrategyConfig = StrategyConfig()
    rates: RatesConfig = RatesConfig()
    dividends: DividendConfig = DividendConfig()
    batch: BatchConfig = BatchConfig()


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


def _header_line(lines: list[str], section: str) -> int | None:
    header = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]\s*(#.*)?$")
    for i, ln in enumerate(lines):
        if header.match(ln):
            return i
    return None


def _line_of(text: str, loc: tuple) -> int | None:
    """1-based line of the key at ``loc``, searching inside its section."""
    keys = [str(k) for k in loc if not isinstance(k, int)]
    if not keys:
        return None
    lines = text.splitlines()
    section = ".".join(keys[:-1])
    start = 0
    if section:
        head = _header_line(lines, section)
        if head is None:
            return None
        start = head + 1
    for i in range(start, len(lines)):
        if re.match(r"^\s*\[", lines[i]):
            break
        if re.match(r"^\s*" + re.escape(keys[-1]) + r"\s*=", lines[i]):
            return i + 1
    head = _header_line(lines, ".".join(keys))
    if head is not None:
        return head + 1
    return start if section else None


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate; ``overrides`` are nested dicts merged over the document."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    for key, val in (overrides or {}).items():
        if isinstance(val, dict):
            data.setdefault(key, {})
            if isinstance(data[key], dict):
                data[key].update(val)
                continue
        data[key] = val
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            where = ".".join(str(k) for k in err["loc"]) or "<document>"
            line = _line_of(text, err["loc"])
            prefix = f"line {line}: " if line else ""
            problems.append(f"{prefix}{where}: {err['msg']}")
        raise ConfigError(problems) from None
