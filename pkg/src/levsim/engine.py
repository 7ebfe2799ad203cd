"""Scenario configuration and the serialized engine facade.

The engine wires the chain, monitor and position registry together and
is the single entry point used by the HTTP service and the CLI. Every
mutating call takes the engine lock, giving the linearizable mutation
order the wire API promises; reads build their snapshots under the same
lock and release it before serialization.

Genesis DAI (pool reserve and account endowments) is issued against a
heavily over-collateralized bootstrap vault owned by a system account,
so the circulating-DAI identity holds from block zero.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

from .amm import Pool
from .errors import InvalidAmount, InvalidScenario, SimError, UnknownPosition
from .ledger import BOOTSTRAP, DAI, ETH, Chain, Receipt
from .leverage import (
    DEFAULT_EPSILON_MARGIN,
    DEFAULT_SLIPPAGE_TOLERANCE,
    LeveragePlan,
    Position,
    effective_max_leverage,
    execute_close,
    execute_open,
    plan_open,
    recollateralize,
    theoretical_max_leverage,
)
from .monitor import MarginPolicy, Monitor, PositionReport
from .oracle import PriceOracle, PriceStep, validate_path
from .vault import CollateralType, Vault, VaultStatus, liquidation_price
from .wad import Wad


def _wad(value, context: str) -> Wad:
    try:
        return Wad.from_str(str(value))
    except InvalidAmount as exc:
        raise InvalidScenario(f"{context}: {exc}") from None


def parse_price_path(raw) -> list[PriceStep]:
    if not isinstance(raw, list):
        raise InvalidScenario("price_path must be a list of [height, price] pairs")
    steps: list[PriceStep] = []
    for entry in raw:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise InvalidScenario(f"bad price step: {entry!r}")
        height, price = entry
        if not isinstance(height, int) or height < 0:
            raise InvalidScenario(f"price step height must be a non-negative int: {entry!r}")
        steps.append((height, _wad(price, "price step")))
    try:
        validate_path(steps)
    except SimError as exc:
        raise InvalidScenario(str(exc)) from None
    return steps


@dataclass(frozen=True)
class GenesisConfig:
    accounts: dict[str, dict[str, Wad]]
    gas_price: Wad = Wad(0)
    gas_schedule: dict[str, int] = field(default_factory=dict)
    pool: dict | None = None  # reserve_eth, reserve_dai, fee_bps
    collateral: CollateralType = None
    price_path: list[PriceStep] = field(default_factory=list)
    keeper: str = "keeper"
    auto_liquidation: bool = True
    margin_call_buffer: Wad = Wad.from_str("0.1")
    bootstrap_backing: int = 10

    @classmethod
    def from_dict(cls, raw: dict) -> "GenesisConfig":
        if not isinstance(raw, dict):
            raise InvalidScenario("genesis section must be an object")
        accounts_raw = raw.get("accounts")
        if not isinstance(accounts_raw, dict) or not accounts_raw:
            raise InvalidScenario("genesis.accounts must be a non-empty object")
        accounts = {}
        for name, entry in accounts_raw.items():
            if not isinstance(entry, dict):
                raise InvalidScenario(f"account {name!r} must be an object")
            accounts[name] = {
                ETH: _wad(entry.get("eth", "0"), f"account {name} eth"),
                DAI: _wad(entry.get("dai", "0"), f"account {name} dai"),
            }
            for token, amount in accounts[name].items():
                if amount < Wad(0):
                    raise InvalidScenario(f"account {name} {token} must be >= 0")

        schedule = raw.get("gas_schedule", {})
        if not isinstance(schedule, dict) or not all(
            isinstance(v, int) and v >= 0 for v in schedule.values()
        ):
            raise InvalidScenario("gas_schedule must map op kinds to non-negative ints")

        pool_raw = raw.get("pool")
        if pool_raw is not None:
            if not isinstance(pool_raw, dict):
                raise InvalidScenario("genesis.pool must be an object")
            fee = pool_raw.get("fee_bps", 30)
            if not isinstance(fee, int):
                raise InvalidScenario("pool fee_bps must be an int")
            pool_raw = {
                "reserve_eth": _wad(pool_raw.get("reserve_eth"), "pool reserve_eth"),
                "reserve_dai": _wad(pool_raw.get("reserve_dai"), "pool reserve_dai"),
                "fee_bps": fee,
            }

        coll_raw = raw.get("collateral", {})
        if not isinstance(coll_raw, dict):
            raise InvalidScenario("genesis.collateral must be an object")
        try:
            collateral = CollateralType(
                requirement=_wad(coll_raw.get("requirement", "1.5"), "collateral requirement"),
                liquidation_ratio=(
                    _wad(coll_raw["liquidation_ratio"], "liquidation ratio")
                    if "liquidation_ratio" in coll_raw
                    else None
                ),
                liquidation_penalty=_wad(coll_raw.get("penalty", "0.13"), "penalty"),
                auction_discount=_wad(coll_raw.get("auction_discount", "0.03"), "discount"),
                dust_limit=_wad(coll_raw.get("dust_limit", "0"), "dust limit"),
            )
        except SimError as exc:
            raise InvalidScenario(f"collateral config: {exc}") from None

        backing = raw.get("bootstrap_backing", 10)
        if not isinstance(backing, int) or backing < 1:
            raise InvalidScenario("bootstrap_backing must be an int >= 1")

        return cls(
            accounts=accounts,
            gas_price=_wad(raw.get("gas_price", "0"), "gas_price"),
            gas_schedule=dict(schedule),
            pool=pool_raw,
            collateral=collateral,
            price_path=parse_price_path(raw.get("price_path", [])),
            keeper=str(raw.get("keeper", "keeper")),
            auto_liquidation=bool(raw.get("auto_liquidation", True)),
            margin_call_buffer=_wad(raw.get("margin_call_buffer", "0.1"), "margin buffer"),
            bootstrap_backing=backing,
        )


@dataclass(frozen=True)
class ScenarioAction:
    block: int
    actor: str
    op: str  # open | add_collateral | close
    args: dict


@dataclass(frozen=True)
class Scenario:
    genesis: GenesisConfig
    actions: tuple[ScenarioAction, ...]
    run_blocks: int

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        if not isinstance(raw, dict):
            raise InvalidScenario("scenario file must hold a JSON object")
        genesis = GenesisConfig.from_dict(raw.get("genesis", {}))

        actions = []
        last_block = 0
        for entry in raw.get("actions", []):
            if not isinstance(entry, dict):
                raise InvalidScenario(f"bad action entry: {entry!r}")
            block = entry.get("block")
            if not isinstance(block, int) or block < 0:
                raise InvalidScenario(f"action block must be a non-negative int: {entry!r}")
            if block < last_block:
                raise InvalidScenario("action blocks must be non-decreasing")
            last_block = block
            op = entry.get("action")
            if op not in ("open", "add_collateral", "close"):
                raise InvalidScenario(f"unknown action {op!r}")
            actor = entry.get("actor")
            if op == "open" and actor not in genesis.accounts:
                raise InvalidScenario(f"action actor {actor!r} missing from genesis accounts")
            args = {k: v for k, v in entry.items() if k not in ("block", "actor", "action")}
            actions.append(ScenarioAction(block=block, actor=str(actor), op=op, args=args))

        run = raw.get("run", {})
        blocks = run.get("blocks", 0) if isinstance(run, dict) else None
        if not isinstance(blocks, int) or blocks < 0:
            raise InvalidScenario("run.blocks must be a non-negative int")
        return cls(genesis=genesis, actions=tuple(actions), run_blocks=blocks)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise InvalidScenario(f"cannot read scenario file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidScenario(f"scenario file is not valid JSON: {exc}") from None
    return Scenario.from_dict(raw)


@dataclass(frozen=True)
class BlockScan:
    height: int
    price: Wad | None
    reports: tuple[PositionReport, ...]


class Engine:
    """Single-writer facade over the simulated world."""

    def __init__(self, genesis: GenesisConfig):
        self.genesis = genesis
        pool = (
            Pool(
                reserve_eth=genesis.pool["reserve_eth"],
                reserve_dai=genesis.pool["reserve_dai"],
                fee_bps=genesis.pool["fee_bps"],
            )
            if genesis.pool
            else None
        )
        oracle = PriceOracle()
        if genesis.price_path:
            oracle.set_path(genesis.price_path)
        self.chain = Chain(
            accounts=genesis.accounts,
            gas_price=genesis.gas_price,
            gas_schedule=genesis.gas_schedule,
            oracle=oracle,
            pool=pool,
            collateral_type=genesis.collateral,
        )
        self._issue_genesis_dai()
        self.chain.seal_genesis()

        self.positions: dict[int, Position] = {}
        self.monitor = Monitor(
            chain=self.chain,
            positions=self.positions,
            policy=MarginPolicy(margin_call_buffer=genesis.margin_call_buffer),
            keeper=genesis.keeper,
            auto_liquidate=genesis.auto_liquidation,
        )
        self._lock = threading.RLock()

    def _issue_genesis_dai(self) -> None:
        chain = self.chain
        total = Wad(0)
        if chain.pool is not None:
            total = total + chain.pool.reserve_dai
        for tokens in chain.balances.values():
            total = total + tokens[DAI]
        if total == Wad(0):
            return
        if not chain.oracle.has_price(0):
            raise InvalidScenario(
                "genesis DAI (pool reserve or endowments) needs a price step at height 0"
            )
        price = chain.oracle.price_at(0)
        ct = chain.collateral_type
        required = (ct.requirement * total).div_ceil(price)
        backing = required.scale(self.genesis.bootstrap_backing)
        chain.balances.setdefault(BOOTSTRAP, {ETH: Wad(0), DAI: Wad(0)})
        vault_id = chain.next_vault_id
        chain.next_vault_id += 1
        chain.vaults[vault_id] = Vault(
            id=vault_id, owner=BOOTSTRAP, collateral=backing, debt=total
        )

    # -- reads ---------------------------------------------------------

    def digest(self) -> str:
        with self._lock:
            return self.chain.digest()

    def read_state(self) -> dict:
        with self._lock:
            return self.chain.read_state()

    def config_info(self) -> dict:
        ct = self.chain.collateral_type
        fee_bps = self.chain.pool.fee_bps if self.chain.pool is not None else 0
        requirement = float(ct.requirement)
        fee = fee_bps / 10_000
        cap = effective_max_leverage(requirement, fee)
        user_accounts = sorted(
            name
            for name in self.genesis.accounts
            if name not in (self.genesis.keeper, BOOTSTRAP)
        )
        return {
            "collateral_requirement": str(ct.requirement),
            "liquidation_ratio": str(ct.liquidation_ratio),
            "liquidation_penalty": str(ct.liquidation_penalty),
            "auction_discount": str(ct.auction_discount),
            "margin_call_buffer": str(self.monitor.policy.margin_call_buffer),
            "pool_fee_bps": fee_bps,
            "theoretical_max_leverage": theoretical_max_leverage(requirement),
            "effective_max_leverage": cap,
            "max_target_leverage": cap * (1.0 - DEFAULT_EPSILON_MARGIN),
            "accounts": user_accounts,
            "auto_liquidation": self.monitor.auto_liquidate,
        }

    def position_ids(self) -> list[int]:
        with self._lock:
            return sorted(self.positions)

    def position(self, position_id: int) -> Position:
        position = self.positions.get(position_id)
        if position is None:
            raise UnknownPosition(f"no position with id {position_id}")
        return position

    def report(self, position_id: int) -> PositionReport:
        with self._lock:
            return self.monitor.report(position_id)

    def reports(self) -> list[PositionReport]:
        with self._lock:
            price_known = self.chain.oracle.has_price(self.chain.block_height)
            if not price_known:
                return []
            price = self.chain.current_price()
            return [self.monitor.report(pid, price) for pid in sorted(self.positions)]

    def liquidation_price_of(self, position_id: int) -> Wad:
        with self._lock:
            position = self.position(position_id)
            vault = self.chain.vaults[position.vault_id]
            if vault.status is not VaultStatus.OPEN:
                return Wad(0)
            return liquidation_price(self.chain, position.vault_id)

    # -- mutations -------------------------------------------------------

    def open_position(
        self,
        owner: str,
        collateral: Wad,
        target_leverage,
        slippage_tolerance: float = DEFAULT_SLIPPAGE_TOLERANCE,
    ) -> tuple[Position, LeveragePlan, Receipt]:
        with self._lock:
            plan = plan_open(
                self.chain, owner, collateral, target_leverage, slippage_tolerance
            )
            position, receipt = execute_open(self.chain, plan)
            self.positions[position.id] = position
            return position, plan, receipt

    def add_collateral(self, position_id: int, amount: Wad) -> tuple[Wad, Receipt]:
        with self._lock:
            position = self.position(position_id)
            new_price = recollateralize(self.chain, position, amount)
            receipt = self.chain.tx_log[-1]
            return new_price, receipt

    def close_position(
        self,
        position_id: int,
        slippage_tolerance: float = DEFAULT_SLIPPAGE_TOLERANCE,
    ) -> tuple[Wad, Receipt]:
        with self._lock:
            position = self.position(position_id)
            return execute_close(self.chain, position, slippage_tolerance)

    def advance_blocks(self, blocks: int) -> list[BlockScan]:
        """Advance one block at a time so the monitor evaluates every
        intermediate height; a price crossing can never be skipped."""
        if blocks < 0:
            raise InvalidAmount("blocks must be >= 0")
        scans = []
        with self._lock:
            for _ in range(blocks):
                self.chain.advance_block(1)
                scans.append(self._scan())
        return scans

    def _scan(self) -> BlockScan:
        reports = self.monitor.scan_and_report()
        price = (
            self.chain.current_price()
            if self.chain.oracle.has_price(self.chain.block_height)
            else None
        )
        return BlockScan(
            height=self.chain.block_height, price=price, reports=tuple(reports)
        )

    def scan(self) -> BlockScan:
        with self._lock:
            return self._scan()

    def set_price_path(self, steps: list[PriceStep]) -> BlockScan:
        with self._lock:
            self.chain.oracle.set_path(steps)
            return self._scan()

    def append_price_step(self, height: int, price: Wad) -> BlockScan:
        """Steer the price: scripted steps beyond the current height are
        superseded by the new step (what-if steering), while the realized
        price history stays intact."""
        with self._lock:
            realized = [
                step
                for step in self.chain.oracle.steps
                if step[0] <= self.chain.block_height
            ]
            self.chain.oracle.set_path(realized + [(height, price)])
            return self._scan()
