"""Deterministic simulator for vault-based leveraged trading.

The package models a single-writer token ledger with gas accounting, a
scripted price oracle, a constant-product swap pool and an
over-collateralized vault engine, and drives them through the full
lifecycle of a looped-leverage position: open, monitor, margin-call,
re-collateralize, close or liquidate. An HTTP service and a scenario
CLI sit on top of the same engine.
"""

from .amm import Pool, SwapDirection, quote_in, quote_out
from .engine import Engine, GenesisConfig, Scenario, load_scenario
from .errors import SimError
from .ledger import Chain, Receipt, TxBatch
from .leverage import (
    LeveragePlan,
    Position,
    effective_max_leverage,
    leverage_after_n_cycles,
    plan_open,
    practical_max_leverage,
    theoretical_max_leverage,
)
from .monitor import MarginPolicy, Monitor, PositionReport
from .oracle import PriceOracle
from .vault import CollateralType, Vault, VaultStatus
from .wad import Wad

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "CollateralType",
    "Engine",
    "GenesisConfig",
    "LeveragePlan",
    "MarginPolicy",
    "Monitor",
    "Pool",
    "Position",
    "PositionReport",
    "PriceOracle",
    "Receipt",
    "Scenario",
    "SimError",
    "SwapDirection",
    "TxBatch",
    "Vault",
    "VaultStatus",
    "Wad",
    "effective_max_leverage",
    "leverage_after_n_cycles",
    "load_scenario",
    "plan_open",
    "practical_max_leverage",
    "quote_in",
    "quote_out",
    "theoretical_max_leverage",
]
