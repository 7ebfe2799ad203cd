import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levsim.amm import Pool, Swap, SwapDirection
from levsim.errors import (
    CollateralRatioAtOrBelowOne,
    InsufficientInitialCollateral,
    PositionNotOpen,
    TargetExceedsMax,
)
from levsim.ledger import DAI, ETH, MINER, TxBatch
from levsim.leverage import (
    Position,
    effective_max_leverage,
    execute_close,
    execute_open,
    leverage_after_n_cycles,
    plan_close,
    plan_open,
    plan_open_cycles,
    practical_max_leverage,
    recollateralize,
    theoretical_max_leverage,
)
from levsim.vault import deposit_collateral, open_vault, withdraw_dai
from levsim.wad import WAD, Wad

from conftest import deep_pool, make_chain

W = Wad.from_str


def series_limit(r, fee=0.0, terms=5000):
    """Independent oracle: literal geometric summation to convergence."""
    q = (1.0 - fee) / r
    total, term = 0.0, 1.0
    for _ in range(terms):
        total += term
        term *= q
        if term < 1e-18:
            break
    return total


class TestClosedForms:
    def test_eth_requirement_gives_three_x(self):
        assert theoretical_max_leverage(1.5) == 3.0

    def test_two_x_at_double_collateral(self):
        assert theoretical_max_leverage(2.0) == 2.0

    def test_low_requirement_matches_series_summation(self):
        assert theoretical_max_leverage(1.1) == pytest.approx(series_limit(1.1), abs=1e-9)
        assert theoretical_max_leverage(1.1) == pytest.approx(11.0, abs=1e-9)

    def test_requirement_at_or_below_one_rejected(self):
        with pytest.raises(CollateralRatioAtOrBelowOne):
            theoretical_max_leverage(1.0)
        with pytest.raises(CollateralRatioAtOrBelowOne):
            effective_max_leverage(0.9, 0.0)

    def test_zero_cycles_is_unlevered(self):
        assert leverage_after_n_cycles(1.5, 0.0, 0) == 1.0

    def test_one_cycle_partial_sum(self):
        # brute-force one deposit/withdraw/redeposit pass at parity prices
        exposure, margin = 1.0, 1.0
        margin = margin / 1.5  # max draw against the deposit
        exposure += margin
        assert leverage_after_n_cycles(1.5, 0.0, 1) == pytest.approx(exposure, rel=1e-12)

    def test_partial_sums_approach_the_cap(self):
        assert leverage_after_n_cycles(1.5, 0.0, 40) == pytest.approx(3.0, abs=1e-6)

    def test_effective_reduces_to_theoretical_without_fee(self):
        for r in (1.1, 1.25, 1.5, 2.0, 3.0):
            assert effective_max_leverage(r, 0.0) == theoretical_max_leverage(r)

    def test_effective_max_with_fee_matches_series(self):
        assert effective_max_leverage(1.5, 0.003) == pytest.approx(
            series_limit(1.5, 0.003), rel=1e-12
        )
        assert effective_max_leverage(1.5, 0.003) == pytest.approx(2.982107355864811)
        assert effective_max_leverage(1.1, 0.003) == pytest.approx(
            series_limit(1.1, 0.003), rel=1e-12
        )
        assert effective_max_leverage(1.1, 0.003) == pytest.approx(10.679611650485429)

    @given(
        r=st.floats(min_value=1.05, max_value=5.0),
        fee=st.floats(min_value=0.0, max_value=0.05),
        n=st.integers(min_value=0, max_value=60),
    )
    def test_closed_form_matches_loop_oracle(self, r, fee, n):
        q = (1.0 - fee) / r
        loop = sum(q**k for k in range(n + 1))
        assert leverage_after_n_cycles(r, fee, n) == pytest.approx(loop, rel=1e-12)

    @given(
        r=st.floats(min_value=1.05, max_value=5.0),
        fee=st.floats(min_value=0.0, max_value=0.05),
        n=st.integers(min_value=0, max_value=80),
    )
    def test_partial_sums_increase_and_stay_bounded(self, r, fee, n):
        q = (1.0 - fee) / r
        here = leverage_after_n_cycles(r, fee, n)
        after = leverage_after_n_cycles(r, fee, n + 1)
        limit = effective_max_leverage(r, fee)
        # strictly increasing until the increment saturates float precision
        assert here <= after < limit + 1e-9
        if q ** (n + 1) > 1e-12:
            assert here < after
        assert abs(limit - here) <= q ** (n + 1) / (1.0 - q) + 1e-9


def leverage_chain(fee_bps=0, price="150", alice_eth="1000"):
    return make_chain(
        accounts={
            "alice": {ETH: W(alice_eth), DAI: W("0")},
            "bob": {ETH: W("1000000"), DAI: W("100000000")},
        },
        price=price,
        pool=deep_pool(price=price, fee_bps=fee_bps),
    )


class TestPlanning:
    def test_unlevered_plan_has_no_cycles(self):
        chain = leverage_chain()
        plan = plan_open(chain, "alice", W("3"), "1.0")
        assert plan.cycles == 0
        assert plan.dai_withdrawn == ()
        assert plan.expected_debt == W("0")

    def test_target_two_point_five_takes_four_cycles(self):
        chain = leverage_chain()
        plan = plan_open(chain, "alice", W("3"), "2.5")
        assert plan.cycles == 4
        # the first cycle draws the full headroom: 3 * 150 / 1.5
        assert plan.dai_withdrawn[0] == W("300")
        # the last cycle is truncated: planned exposure lands on target
        assert plan.expected_exposure == W("7.5")

    def test_partial_sum_table_matches_cycle_growth(self):
        chain = leverage_chain()
        exposures = [
            float(plan_open_cycles(chain, "alice", W("3"), n).expected_exposure) / 3.0
            for n in range(5)
        ]
        expected = [leverage_after_n_cycles(1.5, 0.0, n) for n in range(5)]
        for got, want in zip(exposures, expected):
            assert got == pytest.approx(want, rel=1e-6)

    def test_target_above_cap_rejected(self):
        chain = leverage_chain()
        with pytest.raises(TargetExceedsMax):
            plan_open(chain, "alice", W("3"), "3.1")

    def test_epsilon_margin_blocks_near_cap_targets(self):
        chain = leverage_chain()
        with pytest.raises(TargetExceedsMax):
            plan_open(chain, "alice", W("3"), "2.99")
        plan_open(chain, "alice", W("3"), "2.96")  # inside the margin: fine

    def test_wallet_below_initial_collateral(self):
        chain = leverage_chain(alice_eth="2")
        with pytest.raises(InsufficientInitialCollateral):
            plan_open(chain, "alice", W("3"), "2.0")


class TestExecution:
    def test_frictionless_open_matches_closed_form(self):
        chain = leverage_chain()
        plan = plan_open(chain, "alice", W("3"), "2.5")
        position, receipt = execute_open(chain, plan)
        vault = chain.vaults[position.vault_id]
        assert receipt.success
        assert abs(float(vault.collateral) - 7.5) / 7.5 < 0.001
        assert abs(float(vault.debt) - 675.0) / 675.0 < 0.001
        assert float(position.achieved_leverage) == pytest.approx(2.5, rel=1e-3)

    def test_achieved_leverage_never_exceeds_theoretical(self):
        chain = leverage_chain(fee_bps=30)
        for target in ("1.5", "2.0", "2.5", "2.9"):
            plan = plan_open(chain, "alice", W("3"), target)
            position, _ = execute_open(chain, plan)
            assert float(position.achieved_leverage) <= theoretical_max_leverage(1.5)

    def test_stale_plan_rolls_back_on_slippage(self):
        chain = leverage_chain(fee_bps=0)
        # tight tolerance and a shallow pool so a price move trips the guard
        chain.pool = Pool(W("1000"), W("150000"), 0)
        plan = plan_open(chain, "alice", W("3"), "2.5", slippage_tolerance=0.0001)
        # someone else moves the pool between plan and execution
        chain.execute_batch(
            TxBatch("bob", [Swap(W("50000"), W("0"), SwapDirection.DAI_TO_ETH)])
        )
        digest = chain.digest()
        position = None
        with pytest.raises(Exception) as excinfo:
            execute_open(chain, plan)
        assert excinfo.value.code in ("SlippageExceeded", "ExceedsCollateralCapacity")
        assert chain.digest() == digest  # zero gas price: exact restore
        assert chain.vaults == {}

    def test_mid_batch_failure_leaves_no_partial_position(self):
        chain = leverage_chain()
        plan = plan_open(chain, "alice", W("3"), "2.5")
        # corrupt one planned swap guard so the batch fails partway
        ops = plan.min_out
        object.__setattr__(plan, "min_out", ops[:2] + (W("999999999"),) + ops[3:])
        digest = chain.digest()
        with pytest.raises(Exception):
            execute_open(chain, plan)
        assert chain.digest() == digest
        assert chain.vaults == {}


class TestClose:
    def test_close_debt_free_position(self):
        chain = leverage_chain()
        plan = plan_open(chain, "alice", W("3"), "1.0")
        position, _ = execute_open(chain, plan)
        realized, receipt = execute_close(chain, position)
        assert receipt.success
        assert realized == W("450")  # 3 ETH back at 150
        assert chain.balance("alice", ETH) == W("1000")

    def test_round_trip_preserves_equity(self):
        chain = leverage_chain()
        plan = plan_open(chain, "alice", W("3"), "2.5")
        position, _ = execute_open(chain, plan)
        realized, _ = execute_close(chain, position)
        assert abs(float(realized) - 450.0) / 450.0 < 0.001

    def test_close_at_higher_price_realizes_gain(self):
        # exposure 9 ETH against 900 DAI, entry 150, exit 165
        chain = make_chain(
            accounts={"alice": {ETH: W("9"), DAI: W("0")}},
            price=None,
            pool=None,
        )
        chain.oracle.set_path([(0, W("150")), (5, W("165"))])
        vid = open_vault(chain, "alice")
        deposit_collateral(chain, vid, W("9"))
        withdraw_dai(chain, vid, W("900"))
        chain.advance_block(5)
        chain.pool = deep_pool(price="165", fee_bps=0)
        position = Position(
            id=vid,
            vault_id=vid,
            owner="alice",
            entry_price=W("150"),
            initial_collateral=W("3"),
            initial_equity=W("450"),
            achieved_leverage=W("3"),
            cumulative_costs=W("0"),
            opened_at=0,
        )
        realized, _ = execute_close(chain, position)
        assert abs(float(realized) - 585.0) / 585.0 < 0.001

    def test_closed_position_cannot_close_again(self):
        chain = leverage_chain()
        plan = plan_open(chain, "alice", W("3"), "2.0")
        position, _ = execute_open(chain, plan)
        execute_close(chain, position)
        with pytest.raises(PositionNotOpen):
            plan_close(chain, position)


class TestRecollateralize:
    def make_position(self):
        chain = make_chain(price="1200")
        vid = open_vault(chain, "alice")
        deposit_collateral(chain, vid, W("3"))
        withdraw_dai(chain, vid, W("2000"))
        position = Position(
            id=vid,
            vault_id=vid,
            owner="alice",
            entry_price=W("1200"),
            initial_collateral=W("3"),
            initial_equity=W("1600"),
            achieved_leverage=W("1"),
            cumulative_costs=W("0"),
            opened_at=0,
        )
        return chain, position

    def test_zero_addition_keeps_price(self):
        chain, position = self.make_position()
        assert recollateralize(chain, position, W("0")) == W("1000")

    def test_one_eth_drops_trigger_to_750(self):
        chain, position = self.make_position()
        assert recollateralize(chain, position, W("1")) == W("750")

    @given(extra=st.integers(min_value=0, max_value=10 * WAD))
    @settings(max_examples=50)
    def test_adding_collateral_never_raises_trigger(self, extra):
        chain, position = self.make_position()
        before = recollateralize(chain, position, W("0"))
        after = recollateralize(chain, position, Wad(extra))
        assert after <= before


class TestPracticalMax:
    def test_frictionless_converges_to_theoretical(self):
        result = practical_max_leverage(
            W("3"), "1.5", fee=0.0, gas_price=W("0"), price=W("150")
        )
        assert abs(result - 3.0) < 1e-3

    def test_gas_price_weakly_decreases_result(self):
        pool = deep_pool(price="150", fee_bps=30)
        results = [
            practical_max_leverage(
                W("3"), "1.5", gas_price=W(g), pool=pool
            )
            for g in ("0", "0.000000001", "0.00000002", "0.0000005", "0.00001")
        ]
        assert all(a >= b for a, b in zip(results, results[1:]))

    def test_fee_weakly_decreases_result(self):
        results = [
            practical_max_leverage(
                W("3"), "1.5", fee=f, gas_price=W("0"), price=W("150")
            )
            for f in (0.0, 0.001, 0.003, 0.01, 0.03)
        ]
        assert all(a >= b for a, b in zip(results, results[1:]))

    def test_never_exceeds_effective_max(self):
        for fee_bps in (0, 30, 100):
            pool = deep_pool(price="150", fee_bps=fee_bps)
            result = practical_max_leverage(W("3"), "1.5", gas_price=W("0"), pool=pool)
            assert result <= effective_max_leverage(1.5, fee_bps / 10_000) + 1e-9

    def test_realistic_gas_binds_small_positions(self):
        pool = deep_pool(price="150", fee_bps=30)
        result = practical_max_leverage(
            W("0.2"), "1.5", gas_price=W("0.00000005"), pool=pool
        )
        assert result < theoretical_max_leverage(1.5)
