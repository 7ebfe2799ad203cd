"""Error taxonomy for the simulator.

Every engine failure carries a stable machine-readable ``code`` (the
class name) so the HTTP layer and batch receipts can map faults onto
wire responses without string matching.
"""

from __future__ import annotations


class SimError(Exception):
    """Base class for all engine faults."""

    @property
    def code(self) -> str:
        return type(self).__name__


# ledger / gas
class UnknownAccount(SimError): pass
class InsufficientFunds(SimError): pass
class GasLimitExceeded(SimError): pass
class OutOfGasFunds(SimError): pass
class InvalidAmount(SimError): pass


# oracle
class NonMonotonePath(SimError): pass
class NonPositivePrice(SimError): pass
class NoPriceYet(SimError): pass


# amm
class PoolUninitialized(SimError): pass
class SlippageExceeded(SimError): pass
class InsufficientLiquidity(SimError): pass


# vault
class UnknownVault(SimError): pass
class VaultNotOpen(SimError): pass
class NotVaultOwner(SimError): pass
class WouldUndercollateralize(SimError): pass
class ExceedsCollateralCapacity(SimError): pass
class BelowDustLimit(SimError): pass
class RepayExceedsDebt(SimError): pass
class EmptyVault(SimError): pass
class NotLiquidatable(SimError): pass
class KeeperInsufficientDai(SimError): pass
class OutstandingDebt(SimError): pass


# leverage
class CollateralRatioAtOrBelowOne(SimError): pass
class TargetExceedsMax(SimError): pass
class InsufficientInitialCollateral(SimError): pass
class UnwindInfeasible(SimError): pass
class PositionNotOpen(SimError): pass


# monitor / service
class UnknownPosition(SimError): pass
class InvalidScenario(SimError): pass


_CODE_REGISTRY = {cls.__name__: cls for cls in SimError.__subclasses__()}


def from_code(code: str, message: str = "") -> SimError:
    """Reconstruct an error instance from a receipt code."""
    return _CODE_REGISTRY.get(code, SimError)(message)
