"""Constant-product exchange pool for the ETH/DAI pair.

Swap output for an input ``x`` against reserves (R_in, R_out) with fee
``f`` basis points is ``R_out * x' / (R_in + x')`` where
``x' = x * (1 - f/10^4)``. The fee stays in the reserves, so the product
R_in * R_out never decreases across a swap. All rounding is downward on
the output side, which keeps the invariant monotone at the integer
level.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import (
    InsufficientFunds,
    InsufficientLiquidity,
    InvalidAmount,
    PoolUninitialized,
    SlippageExceeded,
)
from .wad import Wad

if TYPE_CHECKING:  # pragma: no cover
    from .ledger import BatchContext

BPS = 10_000


class SwapDirection(str, enum.Enum):
    DAI_TO_ETH = "dai_to_eth"
    ETH_TO_DAI = "eth_to_dai"


@dataclass
class Pool:
    reserve_eth: Wad
    reserve_dai: Wad
    fee_bps: int = 30

    def __post_init__(self):
        if self.reserve_eth <= Wad(0) or self.reserve_dai <= Wad(0):
            raise PoolUninitialized("reserves must be strictly positive")
        if not 0 <= self.fee_bps < BPS:
            raise InvalidAmount(f"fee_bps out of range: {self.fee_bps}")

    @property
    def invariant(self) -> int:
        """Raw integer product of the reserves (wei^2 scale)."""
        return int(self.reserve_eth) * int(self.reserve_dai)

    def spot_price(self) -> Wad:
        """Marginal DAI-per-ETH price implied by the reserves."""
        return self.reserve_dai / self.reserve_eth

    def _sides(self, direction: SwapDirection) -> tuple[Wad, Wad]:
        if direction == SwapDirection.DAI_TO_ETH:
            return self.reserve_dai, self.reserve_eth
        return self.reserve_eth, self.reserve_dai

    def copy(self) -> "Pool":
        return Pool(self.reserve_eth, self.reserve_dai, self.fee_bps)


def quote_out(pool: Pool | None, amount_in: Wad, direction: SwapDirection) -> Wad:
    """Output for an exact input. Pure: no state change."""
    if pool is None:
        raise PoolUninitialized("no pool configured")
    if amount_in < Wad(0):
        raise InvalidAmount("swap input must be >= 0")
    if amount_in == Wad(0):
        return Wad(0)
    reserve_in, reserve_out = pool._sides(direction)
    in_eff = int(amount_in) * (BPS - pool.fee_bps) // BPS
    return Wad(int(reserve_out) * in_eff // (int(reserve_in) + in_eff))


def quote_in(pool: Pool | None, amount_out: Wad, direction: SwapDirection) -> Wad:
    """Smallest input whose quote covers an exact output (rounds up)."""
    if pool is None:
        raise PoolUninitialized("no pool configured")
    if amount_out < Wad(0):
        raise InvalidAmount("swap output must be >= 0")
    if amount_out == Wad(0):
        return Wad(0)
    reserve_in, reserve_out = pool._sides(direction)
    if amount_out >= reserve_out:
        raise InsufficientLiquidity(
            f"requested {amount_out} exceeds pool reserve {reserve_out}"
        )
    out, r_in, r_out = int(amount_out), int(reserve_in), int(reserve_out)
    in_eff = -(-(r_in * out) // (r_out - out))
    return Wad(-(-(in_eff * BPS) // (BPS - pool.fee_bps)))


def apply_swap(pool: Pool, amount_in: Wad, direction: SwapDirection) -> Wad:
    """Mutate reserves for a swap and return the output amount."""
    out = quote_out(pool, amount_in, direction)
    if direction == SwapDirection.DAI_TO_ETH:
        pool.reserve_dai = pool.reserve_dai + amount_in
        pool.reserve_eth = pool.reserve_eth - out
    else:
        pool.reserve_eth = pool.reserve_eth + amount_in
        pool.reserve_dai = pool.reserve_dai - out
    return out


@dataclass(frozen=True)
class Swap:
    """Batch op: trade ``amount_in`` for at least ``min_out``."""

    amount_in: Wad
    min_out: Wad
    direction: SwapDirection

    gas_kind = "swap"

    def apply(self, ctx: "BatchContext") -> None:
        chain = ctx.chain
        pool = chain.pool
        if pool is None:
            raise PoolUninitialized("no pool configured")
        token_in, token_out = (
            ("DAI", "ETH")
            if self.direction == SwapDirection.DAI_TO_ETH
            else ("ETH", "DAI")
        )
        if chain.balance(ctx.sender, token_in) < self.amount_in:
            raise InsufficientFunds(
                f"{ctx.sender} holds less than {self.amount_in} {token_in}"
            )
        out = quote_out(pool, self.amount_in, self.direction)
        if out < self.min_out:
            raise SlippageExceeded(f"quoted {out} below min_out {self.min_out}")
        chain.debit(ctx.sender, token_in, self.amount_in)
        apply_swap(pool, self.amount_in, self.direction)
        chain.credit(ctx.sender, token_out, out)
        ctx.last_swap_out = out
