"""Scripted price feed: DAI-per-ETH market price indexed by block height.

Prices are piecewise-constant between steps, matching discrete oracle
update semantics; there is no interpolation, so liquidation-trigger
tests are exact.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import NonMonotonePath, NonPositivePrice, NoPriceYet
from .wad import Wad

PriceStep = tuple[int, Wad]


def validate_path(steps: list[PriceStep]) -> None:
    last_height = None
    for height, price in steps:
        if price <= Wad(0):
            raise NonPositivePrice(f"price at height {height} must be > 0")
        if last_height is not None and height <= last_height:
            raise NonMonotonePath(f"step heights must strictly increase (at {height})")
        last_height = height


@dataclass
class PriceOracle:
    """Holds the active price path; mutated only through the engine's
    serialized command queue."""

    steps: list[PriceStep] = field(default_factory=list)

    def set_path(self, steps: list[PriceStep]) -> None:
        validate_path(steps)
        self.steps = list(steps)

    def append_step(self, height: int, price: Wad) -> None:
        validate_path(self.steps + [(height, price)])
        self.steps.append((height, price))

    def has_price(self, height: int) -> bool:
        return bool(self.steps) and self.steps[0][0] <= height

    def price_at(self, height: int) -> Wad:
        """Price of the latest step at or before ``height``."""
        if not self.has_price(height):
            raise NoPriceYet(f"no price step at or before height {height}")
        index = bisect_right(self.steps, (height, float("inf"))) - 1
        return self.steps[index][1]

    def copy(self) -> "PriceOracle":
        return PriceOracle(list(self.steps))
