"""Leverage looping: plan and execute recursive re-collateralization.

A position is opened by depositing collateral, drawing the maximum DAI
the collateral requirement ``r`` allows, swapping it back into ETH and
re-depositing, repeatedly. Each cycle multiplies the marginal exposure
by ``q = (1 - fee) / r``, so cumulative leverage follows the partial
geometric sums ``L_n = sum(q^k, k=0..n)`` and is capped by the closed
form ``1 / (1 - q)``. Planning simulates the exact fixed-point cycle
arithmetic against a copy of the pool, so a plan executed immediately
(the engine serializes both under one lock) replays to the wei.
"""

from __future__ import annotations

from dataclasses import dataclass

from .amm import Pool, Swap, SwapDirection, apply_swap, quote_in, quote_out
from .errors import (
    CollateralRatioAtOrBelowOne,
    InsufficientInitialCollateral,
    InsufficientLiquidity,
    InvalidAmount,
    PoolUninitialized,
    PositionNotOpen,
    TargetExceedsMax,
    UnwindInfeasible,
)
from .ledger import DAI, ETH, Chain, Receipt, TxBatch
from .vault import (
    CloseVault,
    DepositCollateral,
    OpenVault,
    RepayDai,
    VaultStatus,
    WithdrawCollateral,
    WithdrawDai,
    get_vault,
    liquidation_price,
)
from .wad import ONE, Wad, wmin

BPS = 10_000

# leverage increments below this fraction of the initial collateral are
# treated as converged when searching for a practical maximum
_CONVERGENCE_CUTOFF = 1e-6

DEFAULT_SLIPPAGE_TOLERANCE = 0.005
DEFAULT_EPSILON_MARGIN = 0.01


def _check_domain(requirement: float, fee: float) -> None:
    if requirement <= 1.0:
        raise CollateralRatioAtOrBelowOne(
            f"collateral requirement {requirement} admits no finite leverage bound"
        )
    if not 0.0 <= fee < 1.0:
        raise InvalidAmount(f"fee ratio out of range: {fee}")


def theoretical_max_leverage(requirement: float) -> float:
    """Limit of the cumulative leverage series: 1 / (1 - 1/r)."""
    _check_domain(requirement, 0.0)
    return requirement / (requirement - 1.0)


def leverage_after_n_cycles(requirement: float, fee: float = 0.0, n: int = 0) -> float:
    """Partial sum of the leverage series after ``n`` re-collateralization
    cycles (n = 0 means no borrowing at all)."""
    _check_domain(requirement, fee)
    if n < 0:
        raise InvalidAmount("cycle count must be >= 0")
    q = (1.0 - fee) / requirement
    return (1.0 - q ** (n + 1)) / (1.0 - q)


def effective_max_leverage(requirement: float, fee: float = 0.0) -> float:
    """Leverage cap once the per-cycle swap fee is haircut in."""
    _check_domain(requirement, fee)
    return requirement / (requirement - (1.0 - fee))


@dataclass(frozen=True)
class LeveragePlan:
    """Pure description of an open batch; executing it changes state,
    planning never does."""

    owner: str
    initial_collateral: Wad
    target_leverage: Wad
    cycles: int
    dai_withdrawn: tuple[Wad, ...]
    eth_bought: tuple[Wad, ...]
    eth_redeposited: tuple[Wad, ...]
    min_out: tuple[Wad, ...]
    expected_exposure: Wad
    expected_debt: Wad
    expected_gas_units: int
    expected_gas: Wad
    entry_price: Wad
    slippage_tolerance: float

    def to_dict(self) -> dict:
        return {
            "owner": self.owner,
            "initial_collateral": str(self.initial_collateral),
            "target_leverage": str(self.target_leverage),
            "cycles": self.cycles,
            "dai_withdrawn": [str(x) for x in self.dai_withdrawn],
            "eth_bought": [str(x) for x in self.eth_bought],
            "eth_redeposited": [str(x) for x in self.eth_redeposited],
            "min_out": [str(x) for x in self.min_out],
            "expected_exposure": str(self.expected_exposure),
            "expected_debt": str(self.expected_debt),
            "expected_gas_units": self.expected_gas_units,
            "expected_gas": str(self.expected_gas),
            "entry_price": str(self.entry_price),
            "slippage_tolerance": self.slippage_tolerance,
        }


@dataclass
class Position:
    """Live leveraged position; one per vault."""

    id: int
    vault_id: int
    owner: str
    entry_price: Wad
    initial_collateral: Wad
    initial_equity: Wad
    achieved_leverage: Wad
    cumulative_costs: Wad
    opened_at: int
    final_equity: Wad | None = None
    final_pnl: Wad | None = None
    realized_equity: Wad | None = None


def _as_wad_ratio(value: Wad | float | int | str) -> Wad:
    if isinstance(value, Wad):
        return value
    if isinstance(value, str):
        return Wad.from_str(value)
    return Wad.from_number(value)


def _slippage_haircut(amount: Wad, tolerance: float) -> Wad:
    return amount * (ONE - Wad.from_number(tolerance))


@dataclass
class _CycleSim:
    """Shared fixed-point simulation of the open loop on forked state."""

    pool: Pool
    price: Wad
    requirement: Wad
    collateral: Wad
    debt: Wad = Wad(0)

    def max_dai(self) -> Wad:
        capacity = self.collateral * self.price / self.requirement
        return capacity - self.debt if capacity > self.debt else Wad(0)

    def run_cycle(self, dai_in: Wad) -> Wad:
        eth_out = apply_swap(self.pool, dai_in, SwapDirection.DAI_TO_ETH)
        self.collateral = self.collateral + eth_out
        self.debt = self.debt + dai_in
        return eth_out


def _plan_from_sim(
    chain: Chain,
    owner: str,
    initial_collateral: Wad,
    target_leverage: Wad,
    cycles: list[tuple[Wad, Wad]],
    sim: _CycleSim,
    slippage_tolerance: float,
) -> LeveragePlan:
    schedule = chain.gas_schedule
    ops_gas = schedule["open_vault"] + schedule["deposit"]
    ops_gas += len(cycles) * (
        schedule["withdraw_dai"] + schedule["swap"] + schedule["deposit"]
    )
    gas_units = max(schedule["base"], ops_gas)
    expected_gas = chain.gas_price.scale(gas_units)

    if chain.balance(owner, ETH) < initial_collateral + expected_gas:
        raise InsufficientInitialCollateral(
            f"{owner} cannot fund {initial_collateral} ETH plus {expected_gas} gas"
        )

    dai = tuple(c[0] for c in cycles)
    eth = tuple(c[1] for c in cycles)
    return LeveragePlan(
        owner=owner,
        initial_collateral=initial_collateral,
        target_leverage=target_leverage,
        cycles=len(cycles),
        dai_withdrawn=dai,
        eth_bought=eth,
        eth_redeposited=eth,
        min_out=tuple(_slippage_haircut(e, slippage_tolerance) for e in eth),
        expected_exposure=sim.collateral,
        expected_debt=sim.debt,
        expected_gas_units=gas_units,
        expected_gas=expected_gas,
        entry_price=sim.price,
        slippage_tolerance=slippage_tolerance,
    )


def plan_open(
    chain: Chain,
    owner: str,
    initial_collateral: Wad,
    target_leverage: Wad | float | str,
    slippage_tolerance: float = DEFAULT_SLIPPAGE_TOLERANCE,
    epsilon: float = DEFAULT_EPSILON_MARGIN,
) -> LeveragePlan:
    """Plan the smallest cycle sequence reaching ``target_leverage``,
    sizing the final cycle down so the planned exposure lands on the
    target exactly rather than overshooting to the next partial sum."""
    target = _as_wad_ratio(target_leverage)
    if initial_collateral <= Wad(0):
        raise InvalidAmount("initial collateral must be > 0")
    if target < ONE:
        raise InvalidAmount(f"target leverage {target} below 1")
    if not 0.0 <= slippage_tolerance < 1.0:
        raise InvalidAmount(f"slippage tolerance out of range: {slippage_tolerance}")

    ct = chain.collateral_type
    requirement = float(ct.requirement)
    price = chain.current_price()

    fee = 0.0
    if chain.pool is not None:
        fee = chain.pool.fee_bps / BPS
    cap = effective_max_leverage(requirement, fee)
    allowed = cap * (1.0 - epsilon)
    if float(target) > allowed:
        raise TargetExceedsMax(
            f"target {target} above the allowed maximum {allowed:.6f}"
            f" (cap {cap:.6f} less safety margin)"
        )

    if target == ONE:
        sim = _CycleSim(
            pool=chain.pool.copy() if chain.pool is not None else Pool(ONE, ONE, 0),
            price=price,
            requirement=ct.requirement,
            collateral=initial_collateral,
        )
        return _plan_from_sim(chain, owner, initial_collateral, target, [], sim, slippage_tolerance)

    if chain.pool is None:
        raise PoolUninitialized("leveraging above 1x needs a swap pool")

    sim = _CycleSim(
        pool=chain.pool.copy(),
        price=price,
        requirement=ct.requirement,
        collateral=initial_collateral,
    )
    target_collateral = initial_collateral * target
    cycles: list[tuple[Wad, Wad]] = []
    for _ in range(100_000):
        if sim.collateral >= target_collateral:
            break
        max_dai = sim.max_dai()
        if max_dai == Wad(0):
            raise TargetExceedsMax(
                "vault capacity exhausted before reaching the target"
            )
        full_out = quote_out(sim.pool, max_dai, SwapDirection.DAI_TO_ETH)
        if sim.collateral + full_out >= target_collateral:
            need = target_collateral - sim.collateral
            try:
                dai_in = wmin(quote_in(sim.pool, need, SwapDirection.DAI_TO_ETH), max_dai)
            except InsufficientLiquidity:
                dai_in = max_dai
            eth_out = sim.run_cycle(dai_in)
            cycles.append((dai_in, eth_out))
            break
        if full_out == Wad(0):
            raise TargetExceedsMax(
                "pool liquidity limits the achievable leverage below the target"
            )
        eth_out = sim.run_cycle(max_dai)
        cycles.append((max_dai, eth_out))
    else:
        raise TargetExceedsMax("cycle search did not converge")

    return _plan_from_sim(
        chain, owner, initial_collateral, target, cycles, sim, slippage_tolerance
    )


def plan_open_cycles(
    chain: Chain,
    owner: str,
    initial_collateral: Wad,
    cycles: int,
    slippage_tolerance: float = DEFAULT_SLIPPAGE_TOLERANCE,
) -> LeveragePlan:
    """Plan exactly ``cycles`` full cycles, each drawing the maximum DAI.
    Used for cycle-count experiments rather than a leverage target."""
    if initial_collateral <= Wad(0):
        raise InvalidAmount("initial collateral must be > 0")
    if cycles < 0:
        raise InvalidAmount("cycle count must be >= 0")
    if cycles > 0 and chain.pool is None:
        raise PoolUninitialized("leveraging above 1x needs a swap pool")

    ct = chain.collateral_type
    sim = _CycleSim(
        pool=chain.pool.copy() if chain.pool is not None else Pool(ONE, ONE, 0),
        price=chain.current_price(),
        requirement=ct.requirement,
        collateral=initial_collateral,
    )
    ran: list[tuple[Wad, Wad]] = []
    for _ in range(cycles):
        max_dai = sim.max_dai()
        if max_dai == Wad(0):
            break
        eth_out = sim.run_cycle(max_dai)
        ran.append((max_dai, eth_out))
    achieved = sim.collateral / initial_collateral
    return _plan_from_sim(
        chain, owner, initial_collateral, achieved, ran, sim, slippage_tolerance
    )


def _open_ops(plan: LeveragePlan) -> list:
    ops = [OpenVault(), DepositCollateral(None, plan.initial_collateral)]
    for dai_in, eth_out, min_out in zip(
        plan.dai_withdrawn, plan.eth_redeposited, plan.min_out
    ):
        ops.append(WithdrawDai(None, dai_in))
        ops.append(Swap(dai_in, min_out, SwapDirection.DAI_TO_ETH))
        ops.append(DepositCollateral(None, eth_out))
    return ops


def _swap_fees_dai(plan: LeveragePlan, fee_bps: int) -> Wad:
    total = 0
    for dai_in in plan.dai_withdrawn:
        total += int(dai_in) * fee_bps // BPS
    return Wad(total)


def execute_open(chain: Chain, plan: LeveragePlan) -> tuple[Position, Receipt]:
    """Run the open batch atomically; no partial position can exist."""
    batch = TxBatch(plan.owner, _open_ops(plan), gas_limit=plan.expected_gas_units)
    receipt = chain.execute_batch(batch)
    receipt.raise_for_error()
    vault = chain.vaults[receipt.vault_id]

    price = plan.entry_price
    fee_bps = chain.pool.fee_bps if chain.pool is not None else 0
    costs = receipt.gas_paid * price + _swap_fees_dai(plan, fee_bps)
    position = Position(
        id=vault.id,
        vault_id=vault.id,
        owner=plan.owner,
        entry_price=price,
        initial_collateral=plan.initial_collateral,
        initial_equity=vault.collateral * price - vault.debt,
        achieved_leverage=vault.collateral / plan.initial_collateral,
        cumulative_costs=costs,
        opened_at=chain.block_height,
    )
    return position, receipt


@dataclass(frozen=True)
class ClosePlan:
    position_id: int
    ops: tuple
    expected_gas_units: int


def plan_close(
    chain: Chain,
    position: Position,
    slippage_tolerance: float = DEFAULT_SLIPPAGE_TOLERANCE,
) -> ClosePlan:
    """Plan the geometric unwind: free collateral above the safety bound,
    swap it to DAI, repay, repeat until the debt clears, then close."""
    vault = get_vault(chain, position.vault_id)
    if vault.status is not VaultStatus.OPEN:
        raise PositionNotOpen(f"position {position.id} is {vault.status.value}")
    if chain.pool is None and vault.debt > Wad(0):
        raise UnwindInfeasible("no pool to swap collateral through")

    ct = chain.collateral_type
    price = chain.current_price()
    pool = chain.pool.copy() if chain.pool is not None else None
    collateral, debt = vault.collateral, vault.debt
    vid = position.vault_id
    ops: list = []

    for _ in range(1_000):
        if debt == Wad(0):
            break
        # collateral that must stay behind, rounded up so the withdrawal
        # can never breach the requirement
        required = (ct.requirement * debt).div_ceil(price)
        if required >= collateral:
            raise UnwindInfeasible(
                f"vault {vid} has no collateral headroom to unwind from"
            )
        free = collateral - required
        eth_in: Wad | None
        try:
            eth_in = quote_in(pool, debt, SwapDirection.ETH_TO_DAI)
        except InsufficientLiquidity:
            eth_in = None
        if eth_in is not None and eth_in <= free:
            out = quote_out(pool, eth_in, SwapDirection.ETH_TO_DAI)
            ops.append(WithdrawCollateral(vid, eth_in))
            ops.append(Swap(eth_in, _slippage_haircut(out, slippage_tolerance), SwapDirection.ETH_TO_DAI))
            ops.append(RepayDai(vid, debt))
            apply_swap(pool, eth_in, SwapDirection.ETH_TO_DAI)
            collateral = collateral - eth_in
            debt = Wad(0)
            break
        out = quote_out(pool, free, SwapDirection.ETH_TO_DAI)
        repay = wmin(out, debt)
        if repay == Wad(0):
            raise UnwindInfeasible("pool too shallow to make unwind progress")
        apply_swap(pool, free, SwapDirection.ETH_TO_DAI)
        ops.append(WithdrawCollateral(vid, free))
        ops.append(Swap(free, _slippage_haircut(out, slippage_tolerance), SwapDirection.ETH_TO_DAI))
        ops.append(RepayDai(vid, repay))
        collateral = collateral - free
        debt = debt - repay
    else:
        raise UnwindInfeasible("unwind did not terminate")

    ops.append(CloseVault(vid))
    schedule = chain.gas_schedule
    ops_gas = sum(schedule[op.gas_kind] for op in ops)
    return ClosePlan(
        position_id=position.id,
        ops=tuple(ops),
        expected_gas_units=max(schedule["base"], ops_gas),
    )


def execute_close(
    chain: Chain,
    position: Position,
    slippage_tolerance: float = DEFAULT_SLIPPAGE_TOLERANCE,
) -> tuple[Wad, Receipt]:
    """Unwind and close atomically; returns the equity realized by the
    owner, valued in DAI at the closing price."""
    plan = plan_close(chain, position, slippage_tolerance)
    price = chain.current_price()
    eth_before = chain.balance(position.owner, ETH)
    dai_before = chain.balance(position.owner, DAI)

    batch = TxBatch(position.owner, plan.ops, gas_limit=plan.expected_gas_units)
    receipt = chain.execute_batch(batch)
    receipt.raise_for_error()

    eth_delta = chain.balance(position.owner, ETH) - eth_before
    dai_delta = chain.balance(position.owner, DAI) - dai_before
    realized = dai_delta + eth_delta * price

    position.realized_equity = realized
    position.final_equity = realized
    position.final_pnl = realized - position.initial_equity - position.cumulative_costs
    return realized, receipt


def recollateralize(chain: Chain, position: Position, amount: Wad) -> Wad:
    """Add collateral to a live position; returns the new liquidation
    price. Runs as a batch from the owner, so gas applies."""
    vault = get_vault(chain, position.vault_id)
    if vault.status is not VaultStatus.OPEN:
        raise PositionNotOpen(f"position {position.id} is {vault.status.value}")
    if amount < Wad(0):
        raise InvalidAmount("collateral amount must be >= 0")
    batch = TxBatch(
        position.owner, [DepositCollateral(position.vault_id, amount)]
    )
    receipt = chain.execute_batch(batch)
    receipt.raise_for_error()
    position.cumulative_costs = position.cumulative_costs + receipt.gas_paid * position.entry_price
    return liquidation_price(chain, position.vault_id)


def practical_max_leverage(
    initial_collateral: Wad,
    requirement: Wad | float | str,
    fee: float = 0.0,
    gas_price: Wad = Wad(0),
    pool: Pool | None = None,
    price: Wad | None = None,
    gas_schedule: dict[str, int] | None = None,
) -> float:
    """Achieved leverage at the last cycle whose marginal exposure gain,
    valued at the prevailing price, exceeds its marginal cost (gas plus
    fee plus price impact). With a pool, the pool's own fee and implied
    price govern; otherwise conversion is ideal at ``price`` less ``fee``.
    """
    req = _as_wad_ratio(requirement)
    _check_domain(float(req), fee)
    if initial_collateral <= Wad(0):
        raise InvalidAmount("initial collateral must be > 0")
    if pool is None and price is None:
        raise InvalidAmount("either a pool or an explicit price is required")

    schedule = gas_schedule or {"withdraw_dai": 100_000, "swap": 120_000, "deposit": 100_000}
    cycle_units = schedule["withdraw_dai"] + schedule["swap"] + schedule["deposit"]
    gas_eth = gas_price.scale(cycle_units)

    sim_pool = pool.copy() if pool is not None else None
    p = sim_pool.spot_price() if sim_pool is not None else price
    gas_dai = gas_eth * p
    fee_wad = Wad.from_number(fee)

    collateral = initial_collateral
    debt = Wad(0)
    for _ in range(100_000):
        capacity = collateral * p / req
        max_dai = capacity - debt if capacity > debt else Wad(0)
        if max_dai == Wad(0):
            break
        if sim_pool is not None:
            eth_out = quote_out(sim_pool, max_dai, SwapDirection.DAI_TO_ETH)
        else:
            eth_out = (max_dai * (ONE - fee_wad)) / p
        gain = eth_out * p
        cost = gas_dai + (max_dai - gain)
        if eth_out == Wad(0) or gain <= cost:
            break
        if sim_pool is not None:
            apply_swap(sim_pool, max_dai, SwapDirection.DAI_TO_ETH)
        collateral = collateral + eth_out
        debt = debt + max_dai
        if float(eth_out) / float(initial_collateral) < _CONVERGENCE_CUTOFF:
            break
    return float(collateral) / float(initial_collateral)
