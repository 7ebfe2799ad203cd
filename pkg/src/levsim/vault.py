"""Collateralized debt positions: open, draw DAI against over-collateralized
ETH, repay, close, and liquidate through an instantaneous fixed-discount
auction.

Safety comparisons are made on raw integer cross-products
(``collateral * price >= requirement * debt``), which is exact at any
magnitude; derived amounts (withdrawal headroom, liquidation price) round
in the direction that can never leave a vault under-collateralized. The
liquidation trigger is a single predicate, ``price < liquidation_price``,
with the price truncated the same way it is reported, so trigger tests
are exact at the ulp.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import (
    BelowDustLimit,
    EmptyVault,
    ExceedsCollateralCapacity,
    InvalidAmount,
    KeeperInsufficientDai,
    NotLiquidatable,
    NotVaultOwner,
    OutstandingDebt,
    RepayExceedsDebt,
    UnknownAccount,
    UnknownVault,
    VaultNotOpen,
    WouldUndercollateralize,
)
from .ledger import DAI, ETH, BatchContext, Chain
from .wad import ONE, Wad, wmin

if TYPE_CHECKING:  # pragma: no cover
    pass


@dataclass(frozen=True)
class CollateralType:
    """Risk parameters for the single collateral class."""

    requirement: Wad  # minimum collateral-value / debt ratio, > 1
    liquidation_ratio: Wad | None = None  # defaults to the requirement
    liquidation_penalty: Wad = Wad(0)
    auction_discount: Wad = Wad(0)
    dust_limit: Wad = Wad(0)

    def __post_init__(self):
        if self.requirement <= ONE:
            raise InvalidAmount("collateral requirement must exceed 1")
        if self.liquidation_ratio is None:
            object.__setattr__(self, "liquidation_ratio", self.requirement)
        if self.liquidation_ratio > self.requirement:
            raise InvalidAmount("liquidation ratio cannot exceed the requirement")
        if not Wad(0) <= self.auction_discount < ONE:
            raise InvalidAmount("auction discount must be in [0, 1)")
        if self.liquidation_penalty < Wad(0):
            raise InvalidAmount("liquidation penalty must be >= 0")


class VaultStatus(enum.Enum):
    OPEN = "Open"
    LIQUIDATED = "Liquidated"
    CLOSED = "Closed"


@dataclass
class Vault:
    id: int
    owner: str
    collateral: Wad = Wad(0)
    debt: Wad = Wad(0)
    status: VaultStatus = VaultStatus.OPEN


@dataclass(frozen=True)
class Settlement:
    """Record of one liquidation auction."""

    vault_id: int
    keeper: str
    block_height: int
    price: Wad
    auction_price: Wad
    owed: Wad
    seized_eth: Wad
    returned_eth: Wad
    dai_burned: Wad
    bad_debt: Wad


def _supports(collateral: Wad, price: Wad, ratio: Wad, debt: Wad) -> bool:
    # Exact: both sides are raw integers at wad^2 scale.
    return int(collateral) * int(price) >= int(ratio) * int(debt)


def get_vault(chain: Chain, vault_id: int) -> Vault:
    vault = chain.vaults.get(vault_id)
    if vault is None:
        raise UnknownVault(f"no vault with id {vault_id}")
    return vault


def _open_vault(chain: Chain, vault_id: int) -> Vault:
    vault = get_vault(chain, vault_id)
    if vault.status is not VaultStatus.OPEN:
        raise VaultNotOpen(f"vault {vault_id} is {vault.status.value}")
    return vault


def open_vault(chain: Chain, owner: str) -> int:
    if not chain.has_account(owner):
        raise UnknownAccount(f"unknown account {owner!r}")
    vault_id = chain.next_vault_id
    chain.next_vault_id += 1
    chain.vaults[vault_id] = Vault(id=vault_id, owner=owner)
    return vault_id


def deposit_collateral(chain: Chain, vault_id: int, amount: Wad) -> None:
    vault = _open_vault(chain, vault_id)
    if amount < Wad(0):
        raise InvalidAmount("deposit must be >= 0")
    chain.debit(vault.owner, ETH, amount)
    vault.collateral = vault.collateral + amount


def withdraw_collateral(chain: Chain, vault_id: int, amount: Wad) -> None:
    vault = _open_vault(chain, vault_id)
    if amount < Wad(0):
        raise InvalidAmount("withdrawal must be >= 0")
    if amount > vault.collateral:
        raise WouldUndercollateralize("withdrawal exceeds collateral")
    remaining = vault.collateral - amount
    if vault.debt > Wad(0):
        ct = chain.collateral_type
        if not _supports(remaining, chain.current_price(), ct.requirement, vault.debt):
            raise WouldUndercollateralize(
                f"vault {vault_id} would fall below the collateral requirement"
            )
    vault.collateral = remaining
    chain.credit(vault.owner, ETH, amount)


def max_withdrawable_dai(chain: Chain, vault_id: int) -> Wad:
    """Headroom before the vault hits the collateral requirement.

    Truncation rounds the headroom down, so drawing exactly this amount
    can never under-collateralize the vault.
    """
    vault = _open_vault(chain, vault_id)
    capacity = vault.collateral * chain.current_price() / chain.collateral_type.requirement
    if capacity <= vault.debt:
        return Wad(0)
    return capacity - vault.debt


def withdraw_dai(chain: Chain, vault_id: int, amount: Wad) -> None:
    """Mint DAI against the vault: debt rises and the owner is credited."""
    vault = _open_vault(chain, vault_id)
    if amount < Wad(0):
        raise InvalidAmount("withdrawal must be >= 0")
    if amount > max_withdrawable_dai(chain, vault_id):
        raise ExceedsCollateralCapacity(
            f"withdrawal of {amount} DAI exceeds vault {vault_id} capacity"
        )
    dust = chain.collateral_type.dust_limit
    resulting = vault.debt + amount
    if dust > Wad(0) and Wad(0) < resulting < dust:
        raise BelowDustLimit(f"resulting debt {resulting} below dust limit {dust}")
    vault.debt = resulting
    chain.credit(vault.owner, DAI, amount)


def repay_dai(chain: Chain, vault_id: int, amount: Wad) -> None:
    """Burn DAI from the owner to reduce the vault debt."""
    vault = _open_vault(chain, vault_id)
    if amount < Wad(0):
        raise InvalidAmount("repayment must be >= 0")
    if amount > vault.debt:
        raise RepayExceedsDebt(f"repaying {amount} against debt {vault.debt}")
    chain.debit(vault.owner, DAI, amount)
    vault.debt = vault.debt - amount


def liquidation_price(chain: Chain, vault_id: int) -> Wad:
    """Oracle price below which the vault becomes liquidatable."""
    vault = _open_vault(chain, vault_id)
    if vault.debt == Wad(0):
        return Wad(0)
    if vault.collateral == Wad(0):
        raise EmptyVault(f"vault {vault_id} holds no collateral")
    return chain.collateral_type.liquidation_ratio * vault.debt / vault.collateral


def is_liquidatable(chain: Chain, vault_id: int, price: Wad | None = None) -> bool:
    vault = chain.vaults.get(vault_id)
    if vault is None or vault.status is not VaultStatus.OPEN or vault.debt == Wad(0):
        return False
    if vault.collateral == Wad(0):
        return True
    if price is None:
        price = chain.current_price()
    return price < liquidation_price(chain, vault_id)


def liquidate(chain: Chain, vault_id: int, keeper: str) -> Settlement:
    """Settle an under-collateralized vault in one discounted sale.

    The keeper buys collateral at the discounted price with DAI, which is
    burned; collateral not needed to cover debt plus penalty goes back to
    the owner; any unrecovered DAI remains circulating and is recorded as
    bad debt.
    """
    vault = _open_vault(chain, vault_id)
    if not chain.has_account(keeper):
        raise UnknownAccount(f"unknown keeper {keeper!r}")
    if not is_liquidatable(chain, vault_id):
        raise NotLiquidatable(f"vault {vault_id} is not below its liquidation price")
    ct = chain.collateral_type
    price = chain.current_price()
    owed = vault.debt * (ONE + ct.liquidation_penalty)
    auction_price = price * (ONE - ct.auction_discount)
    # Rounding the seizure up makes the keeper's payment cover `owed`
    # exactly whenever the collateral suffices.
    seized = wmin(vault.collateral, owed.div_ceil(auction_price))
    pay = wmin(owed, seized * auction_price)
    if chain.balance(keeper, DAI) < pay:
        raise KeeperInsufficientDai(f"keeper {keeper} cannot pay {pay} DAI")

    chain.debit(keeper, DAI, pay)  # burned: no account is credited
    chain.credit(keeper, ETH, seized)
    returned = vault.collateral - seized
    chain.credit(vault.owner, ETH, returned)
    chain.dai_writeoffs = chain.dai_writeoffs + (pay - vault.debt)

    settlement = Settlement(
        vault_id=vault_id,
        keeper=keeper,
        block_height=chain.block_height,
        price=price,
        auction_price=auction_price,
        owed=owed,
        seized_eth=seized,
        returned_eth=returned,
        dai_burned=pay,
        bad_debt=owed - pay,
    )
    chain.settlements.append(settlement)
    vault.collateral = Wad(0)
    vault.debt = Wad(0)
    vault.status = VaultStatus.LIQUIDATED
    return settlement


def close_vault(chain: Chain, vault_id: int) -> None:
    vault = _open_vault(chain, vault_id)
    if vault.debt > Wad(0):
        raise OutstandingDebt(f"vault {vault_id} still owes {vault.debt} DAI")
    collateral = vault.collateral
    vault.collateral = Wad(0)
    vault.status = VaultStatus.CLOSED
    chain.credit(vault.owner, ETH, collateral)


# -- batch ops ----------------------------------------------------------


def _resolve(ctx: BatchContext, vault_id: int | None) -> int:
    if vault_id is not None:
        return vault_id
    if ctx.new_vault_id is None:
        raise UnknownVault("no vault opened earlier in this batch")
    return ctx.new_vault_id


def _require_owner(ctx: BatchContext, vault_id: int) -> None:
    vault = get_vault(ctx.chain, vault_id)
    if vault.owner != ctx.sender:
        raise NotVaultOwner(f"vault {vault_id} belongs to {vault.owner}")


@dataclass(frozen=True)
class OpenVault:
    gas_kind = "open_vault"

    def apply(self, ctx: BatchContext) -> None:
        ctx.new_vault_id = open_vault(ctx.chain, ctx.sender)


@dataclass(frozen=True)
class DepositCollateral:
    """vault_id None targets the vault opened earlier in this batch;
    amount None deposits the proceeds of the preceding swap."""

    vault_id: int | None = None
    amount: Wad | None = None

    gas_kind = "deposit"

    def apply(self, ctx: BatchContext) -> None:
        vid = _resolve(ctx, self.vault_id)
        _require_owner(ctx, vid)
        amount = self.amount if self.amount is not None else ctx.last_swap_out
        if amount is None:
            raise InvalidAmount("no swap output available to deposit")
        deposit_collateral(ctx.chain, vid, amount)


@dataclass(frozen=True)
class WithdrawCollateral:
    vault_id: int | None
    amount: Wad

    gas_kind = "withdraw_collateral"

    def apply(self, ctx: BatchContext) -> None:
        vid = _resolve(ctx, self.vault_id)
        _require_owner(ctx, vid)
        withdraw_collateral(ctx.chain, vid, self.amount)


@dataclass(frozen=True)
class WithdrawDai:
    vault_id: int | None
    amount: Wad

    gas_kind = "withdraw_dai"

    def apply(self, ctx: BatchContext) -> None:
        vid = _resolve(ctx, self.vault_id)
        _require_owner(ctx, vid)
        withdraw_dai(ctx.chain, vid, self.amount)


@dataclass(frozen=True)
class RepayDai:
    vault_id: int | None
    amount: Wad

    gas_kind = "repay"

    def apply(self, ctx: BatchContext) -> None:
        vid = _resolve(ctx, self.vault_id)
        _require_owner(ctx, vid)
        repay_dai(ctx.chain, vid, self.amount)


@dataclass(frozen=True)
class CloseVault:
    vault_id: int | None = None

    gas_kind = "close_vault"

    def apply(self, ctx: BatchContext) -> None:
        vid = _resolve(ctx, self.vault_id)
        _require_owner(ctx, vid)
        close_vault(ctx.chain, vid)
