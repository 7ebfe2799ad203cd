"""Block-by-block margin surveillance over live positions.

Each scan values every position at the current oracle price, classifies
it against the margin-call band above the liquidation ratio, and (when
automation is enabled) settles every liquidatable vault through the
synthetic keeper in the same block. P/L is the equity delta net of the
recorded opening costs, so a freshly opened position reports exactly
minus its costs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import KeeperInsufficientDai, UnknownPosition
from .ledger import Chain
from .leverage import Position
from .vault import VaultStatus, get_vault, is_liquidatable, liquidate, liquidation_price
from .wad import Wad

HEALTHY = "Healthy"
MARGIN_CALL = "MarginCall"
LIQUIDATABLE = "Liquidatable"
LIQUIDATED = "Liquidated"
CLOSED = "Closed"

# rank order used by status-monotonicity properties: higher is safer
STATUS_RANK = {LIQUIDATED: 0, LIQUIDATABLE: 1, MARGIN_CALL: 2, HEALTHY: 3}


@dataclass(frozen=True)
class MarginPolicy:
    """The warning band: a vault is in margin call while its ratio sits
    within ``buffer`` above the liquidation ratio."""

    margin_call_buffer: Wad = Wad.from_str("0.1")

    def __post_init__(self):
        if self.margin_call_buffer < Wad(0):
            raise ValueError("margin call buffer must be >= 0")


@dataclass(frozen=True)
class PositionReport:
    position_id: int
    price: Wad
    equity: Wad
    pnl: Wad
    collateralization: Wad | None
    status: str

    def to_dict(self) -> dict:
        return {
            "position_id": self.position_id,
            "price": str(self.price),
            "equity": str(self.equity),
            "pnl": str(self.pnl),
            "collateralization": None
            if self.collateralization is None
            else str(self.collateralization),
            "status": self.status,
        }


class Monitor:
    """Reads chain state, reports margin status, triggers liquidations.

    Runs inside the engine's serialized step at block boundaries; report
    generation itself is read-only.
    """

    def __init__(
        self,
        chain: Chain,
        positions: dict[int, Position],
        policy: MarginPolicy,
        keeper: str,
        auto_liquidate: bool = True,
    ):
        self.chain = chain
        self.positions = positions
        self.policy = policy
        self.keeper = keeper
        self.auto_liquidate = auto_liquidate

    def _position(self, position_id: int) -> Position:
        position = self.positions.get(position_id)
        if position is None:
            raise UnknownPosition(f"no position with id {position_id}")
        return position

    def margin_status(self, position_id: int, price: Wad | None = None) -> str:
        position = self._position(position_id)
        vault = get_vault(self.chain, position.vault_id)
        if vault.status is VaultStatus.LIQUIDATED:
            return LIQUIDATED
        if vault.status is VaultStatus.CLOSED:
            return CLOSED
        if vault.debt == Wad(0):
            return HEALTHY
        if price is None:
            price = self.chain.current_price()
        trigger = liquidation_price(self.chain, position.vault_id)
        if price < trigger:
            return LIQUIDATABLE
        ct = self.chain.collateral_type
        warn_ratio = ct.liquidation_ratio + self.policy.margin_call_buffer
        warn_price = warn_ratio * vault.debt / vault.collateral
        if price < warn_price:
            return MARGIN_CALL
        return HEALTHY

    def position_pnl(self, position_id: int, price: Wad | None = None) -> Wad:
        position = self._position(position_id)
        vault = get_vault(self.chain, position.vault_id)
        if vault.status is not VaultStatus.OPEN:
            return position.final_pnl if position.final_pnl is not None else Wad(0)
        if price is None:
            price = self.chain.current_price()
        equity = vault.collateral * price - vault.debt
        return equity - position.initial_equity - position.cumulative_costs

    def report(self, position_id: int, price: Wad | None = None) -> PositionReport:
        position = self._position(position_id)
        vault = get_vault(self.chain, position.vault_id)
        if price is None:
            price = self.chain.current_price()
        if vault.status is VaultStatus.OPEN:
            equity = vault.collateral * price - vault.debt
            ratio = (
                (vault.collateral * price) / vault.debt if vault.debt > Wad(0) else None
            )
        else:
            equity = position.final_equity if position.final_equity is not None else Wad(0)
            ratio = None
        return PositionReport(
            position_id=position_id,
            price=price,
            equity=equity,
            pnl=self.position_pnl(position_id, price),
            collateralization=ratio,
            status=self.margin_status(position_id, price),
        )

    def settle_liquidatable(self) -> list[int]:
        """Liquidate every vault below its trigger, in id order. A keeper
        short on DAI leaves the vault standing (it stays reported as
        liquidatable) rather than halting the block."""
        settled = []
        price = self.chain.current_price()
        for vault_id in sorted(self.chain.vaults):
            if not is_liquidatable(self.chain, vault_id, price):
                continue
            try:
                settlement = liquidate(self.chain, vault_id, self.keeper)
            except KeeperInsufficientDai:
                continue
            settled.append(vault_id)
            position = self.positions.get(vault_id)
            if position is not None:
                residual = settlement.returned_eth * settlement.price
                position.final_equity = residual
                position.final_pnl = (
                    residual - position.initial_equity - position.cumulative_costs
                )
        return settled

    def scan_and_report(self) -> list[PositionReport]:
        """One report per position at the current price; liquidations are
        settled first so a crossing block already reports Liquidated."""
        if not self.chain.oracle.has_price(self.chain.block_height):
            return []
        if self.auto_liquidate:
            self.settle_liquidatable()
        price = self.chain.current_price()
        return [self.report(pid, price) for pid in sorted(self.positions)]
