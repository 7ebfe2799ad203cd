"""Deterministic single-writer emulation of the chain environment.

One :class:`Chain` instance holds the entire world: account balances for
the two tokens, the block height, gas accounting, the price oracle, the
swap pool and the vault registry. Transaction batches execute atomically
against it; on any inner failure the whole state change is rolled back
except for the gas charge, which is moved to the ``miner`` account so
total ETH stays constant.

The state digest is a SHA-256 over a canonical, sorted serialization of
state and is a pure function of (genesis config, ordered batch history,
block advances). Receipts and settlement records are observability, not
state, and are excluded from the digest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Protocol

from .errors import (
    GasLimitExceeded,
    InsufficientFunds,
    InvalidAmount,
    OutOfGasFunds,
    SimError,
    UnknownAccount,
)
from .oracle import PriceOracle
from .wad import Wad

if TYPE_CHECKING:  # pragma: no cover
    from .amm import Pool
    from .vault import CollateralType, Settlement, Vault

ETH = "ETH"
DAI = "DAI"
TOKENS = (ETH, DAI)

MINER = "miner"
BOOTSTRAP = "bootstrap"

DEFAULT_GAS_SCHEDULE = {
    "base": 21_000,
    "transfer": 21_000,
    "open_vault": 200_000,
    "deposit": 100_000,
    "withdraw_collateral": 100_000,
    "withdraw_dai": 100_000,
    "repay": 80_000,
    "swap": 120_000,
    "close_vault": 100_000,
}


class BatchOp(Protocol):
    gas_kind: str

    def apply(self, ctx: "BatchContext") -> None: ...


@dataclass
class BatchContext:
    """Execution context threaded through the ops of one batch."""

    chain: "Chain"
    sender: str
    new_vault_id: int | None = None
    last_swap_out: Wad | None = None


@dataclass(frozen=True)
class TxBatch:
    sender: str
    ops: tuple[BatchOp, ...]
    gas_limit: int | None = None  # None: exactly the scheduled cost

    def __init__(self, sender: str, ops: Iterable[BatchOp], gas_limit: int | None = None):
        object.__setattr__(self, "sender", sender)
        object.__setattr__(self, "ops", tuple(ops))
        object.__setattr__(self, "gas_limit", gas_limit)


@dataclass(frozen=True)
class Receipt:
    success: bool
    gas_used: int
    gas_paid: Wad
    error: str | None = None
    error_message: str | None = None
    vault_id: int | None = None

    def raise_for_error(self) -> None:
        if not self.success:
            from .errors import from_code

            raise from_code(self.error or "SimError", self.error_message or "")


@dataclass(frozen=True)
class Transfer:
    """Batch op: move tokens from the batch sender to another account."""

    to: str
    token: str
    amount: Wad

    gas_kind = "transfer"

    def apply(self, ctx: "BatchContext") -> None:
        ctx.chain.transfer(ctx.sender, self.to, self.token, self.amount)


class Chain:
    """World state machine. All mutations go through a single logical
    writer (the engine serializes callers); reads take point-in-time
    snapshots."""

    def __init__(
        self,
        accounts: dict[str, dict[str, Wad]],
        gas_price: Wad = Wad(0),
        gas_schedule: dict[str, int] | None = None,
        oracle: PriceOracle | None = None,
        pool: "Pool | None" = None,
        collateral_type: "CollateralType | None" = None,
    ):
        self.balances: dict[str, dict[str, Wad]] = {
            name: {ETH: tokens.get(ETH, Wad(0)), DAI: tokens.get(DAI, Wad(0))}
            for name, tokens in accounts.items()
        }
        self.balances.setdefault(MINER, {ETH: Wad(0), DAI: Wad(0)})
        self.block_height = 0
        self.gas_price = gas_price
        self.gas_schedule = dict(DEFAULT_GAS_SCHEDULE)
        if gas_schedule:
            self.gas_schedule.update(gas_schedule)
        self.oracle = oracle or PriceOracle()
        self.pool = pool
        self.collateral_type = collateral_type
        self.vaults: dict[int, "Vault"] = {}
        self.next_vault_id = 1
        self.dai_writeoffs = Wad(0)  # signed: burned beyond (+) or short of (-) principal
        self.tx_log: list[Receipt] = []
        self.settlements: list["Settlement"] = []
        self.genesis_eth_supply = Wad(0)

    # -- genesis -------------------------------------------------------

    def seal_genesis(self) -> None:
        """Record the ETH supply; conservation is checked against it."""
        self.genesis_eth_supply = self.total_eth()

    # -- balances ------------------------------------------------------

    def has_account(self, name: str) -> bool:
        return name in self.balances

    def balance(self, account: str, token: str) -> Wad:
        return self.balances.get(account, {}).get(token, Wad(0))

    def credit(self, account: str, token: str, amount: Wad) -> None:
        if amount < Wad(0):
            raise InvalidAmount("credit amount must be >= 0")
        entry = self.balances.setdefault(account, {ETH: Wad(0), DAI: Wad(0)})
        entry[token] = entry[token] + amount

    def debit(self, account: str, token: str, amount: Wad) -> None:
        if amount < Wad(0):
            raise InvalidAmount("debit amount must be >= 0")
        entry = self.balances.setdefault(account, {ETH: Wad(0), DAI: Wad(0)})
        if entry[token] < amount:
            raise InsufficientFunds(
                f"{account} holds {entry[token]} {token}, needs {amount}"
            )
        entry[token] = entry[token] - amount

    def transfer(self, sender: str, to: str, token: str, amount: Wad) -> None:
        if sender not in self.balances:
            raise UnknownAccount(f"unknown sender {sender!r}")
        if token not in TOKENS:
            raise InvalidAmount(f"unknown token {token!r}")
        self.debit(sender, token, amount)
        self.credit(to, token, amount)

    # -- aggregates ----------------------------------------------------

    def total_eth(self) -> Wad:
        """ETH across accounts, vault collateral and the pool reserve."""
        total = Wad(0)
        for tokens in self.balances.values():
            total = total + tokens[ETH]
        for vault in self.vaults.values():
            total = total + vault.collateral
        if self.pool is not None:
            total = total + self.pool.reserve_eth
        return total

    def circulating_dai(self) -> Wad:
        total = Wad(0)
        for tokens in self.balances.values():
            total = total + tokens[DAI]
        if self.pool is not None:
            total = total + self.pool.reserve_dai
        return total

    def total_debt(self) -> Wad:
        total = Wad(0)
        for vault in self.vaults.values():
            total = total + vault.debt
        return total

    # -- blocks and prices ----------------------------------------------

    def advance_block(self, n: int) -> int:
        """Raise the block height by ``n`` (price is height-indexed, so
        it re-evaluates implicitly). Liquidation checks are the
        monitor's responsibility and hook in at the engine level."""
        if n < 0:
            raise InvalidAmount("cannot advance by a negative block count")
        self.block_height += n
        return self.block_height

    def current_price(self) -> Wad:
        return self.oracle.price_at(self.block_height)

    # -- batch execution -------------------------------------------------

    def _scheduled_gas(self, ops: Iterable[BatchOp]) -> int:
        total = sum(self.gas_schedule[op.gas_kind] for op in ops)
        return max(self.gas_schedule["base"], total)

    def execute_batch(self, batch: TxBatch) -> Receipt:
        """Run all ops atomically. On failure every state change rolls
        back except the gas charge; gas is escrowed up front so an op
        cannot spend the ETH needed to pay for it."""
        if batch.sender not in self.balances:
            raise UnknownAccount(f"unknown sender {batch.sender!r}")
        limit = batch.gas_limit if batch.gas_limit is not None else self._scheduled_gas(batch.ops)
        escrow = self.gas_price.scale(limit)
        if self.balance(batch.sender, ETH) < escrow:
            receipt = Receipt(
                success=False,
                gas_used=0,
                gas_paid=Wad(0),
                error="OutOfGasFunds",
                error_message=f"sender cannot cover gas limit {limit}",
            )
            self.tx_log.append(receipt)
            return receipt

        snap = self._fork_state()
        self.debit(batch.sender, ETH, escrow)
        ctx = BatchContext(chain=self, sender=batch.sender)
        base = self.gas_schedule["base"]
        ops_gas = 0
        try:
            for op in batch.ops:
                ops_gas += self.gas_schedule[op.gas_kind]
                if max(base, ops_gas) > limit:
                    raise GasLimitExceeded(
                        f"scheduled gas {max(base, ops_gas)} above limit {limit}"
                    )
                op.apply(ctx)
            gas_used = max(base, ops_gas)
        except SimError as exc:
            gas_used = limit if isinstance(exc, GasLimitExceeded) else min(max(base, ops_gas), limit)
            self._restore_state(snap)
            gas_paid = self.gas_price.scale(gas_used)
            self.debit(batch.sender, ETH, gas_paid)
            self.credit(MINER, ETH, gas_paid)
            receipt = Receipt(
                success=False,
                gas_used=gas_used,
                gas_paid=gas_paid,
                error=exc.code,
                error_message=str(exc),
            )
            self.tx_log.append(receipt)
            return receipt

        gas_paid = self.gas_price.scale(gas_used)
        self.credit(batch.sender, ETH, escrow - gas_paid)
        self.credit(MINER, ETH, gas_paid)
        receipt = Receipt(
            success=True,
            gas_used=gas_used,
            gas_paid=gas_paid,
            vault_id=ctx.new_vault_id,
        )
        self.tx_log.append(receipt)
        return receipt

    # -- snapshot / rollback ----------------------------------------------

    def _fork_state(self) -> dict:
        return {
            "balances": {name: dict(tokens) for name, tokens in self.balances.items()},
            "vaults": {vid: replace(v) for vid, v in self.vaults.items()},
            "pool": self.pool.copy() if self.pool is not None else None,
            "oracle": self.oracle.copy(),
            "block_height": self.block_height,
            "next_vault_id": self.next_vault_id,
            "dai_writeoffs": self.dai_writeoffs,
            "n_settlements": len(self.settlements),
        }

    def _restore_state(self, snap: dict) -> None:
        self.balances = snap["balances"]
        self.vaults = snap["vaults"]
        self.pool = snap["pool"]
        self.oracle = snap["oracle"]
        self.block_height = snap["block_height"]
        self.next_vault_id = snap["next_vault_id"]
        self.dai_writeoffs = snap["dai_writeoffs"]
        del self.settlements[snap["n_settlements"]:]

    # -- snapshots -----------------------------------------------------

    def _state_dict(self) -> dict:
        vaults = [
            {
                "id": vid,
                "owner": v.owner,
                "collateral": int(v.collateral),
                "debt": int(v.debt),
                "status": v.status.value,
            }
            for vid, v in sorted(self.vaults.items())
        ]
        ct = self.collateral_type
        return {
            "block_height": self.block_height,
            "gas_price": int(self.gas_price),
            "gas_schedule": dict(sorted(self.gas_schedule.items())),
            "balances": {
                name: {token: int(amount) for token, amount in sorted(tokens.items())}
                for name, tokens in sorted(self.balances.items())
            },
            "vaults": vaults,
            "next_vault_id": self.next_vault_id,
            "dai_writeoffs": int(self.dai_writeoffs),
            "pool": None
            if self.pool is None
            else {
                "reserve_eth": int(self.pool.reserve_eth),
                "reserve_dai": int(self.pool.reserve_dai),
                "fee_bps": self.pool.fee_bps,
            },
            "collateral_type": None
            if ct is None
            else {
                "requirement": int(ct.requirement),
                "liquidation_ratio": int(ct.liquidation_ratio),
                "liquidation_penalty": int(ct.liquidation_penalty),
                "auction_discount": int(ct.auction_discount),
                "dust_limit": int(ct.dust_limit),
            },
            "price_path": [[h, int(p)] for h, p in self.oracle.steps],
        }

    def digest(self) -> str:
        canonical = json.dumps(self._state_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def read_state(self) -> dict:
        """Consistent point-in-time snapshot plus its digest."""
        try:
            price: str | None = str(self.current_price())
        except SimError:
            price = None
        return {
            "block_height": self.block_height,
            "price": price,
            "balances": {
                name: {token: str(amount) for token, amount in sorted(tokens.items())}
                for name, tokens in sorted(self.balances.items())
            },
            "vaults": [
                {
                    "id": vid,
                    "owner": v.owner,
                    "collateral": str(v.collateral),
                    "debt": str(v.debt),
                    "status": v.status.value,
                }
                for vid, v in sorted(self.vaults.items())
            ],
            "pool": None
            if self.pool is None
            else {
                "reserve_eth": str(self.pool.reserve_eth),
                "reserve_dai": str(self.pool.reserve_dai),
                "fee_bps": self.pool.fee_bps,
            },
            "digest": self.digest(),
        }
