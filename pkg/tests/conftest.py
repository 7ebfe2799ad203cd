import pytest

from levsim.amm import Pool
from levsim.engine import Engine, GenesisConfig
from levsim.ledger import Chain
from levsim.oracle import PriceOracle
from levsim.vault import CollateralType
from levsim.wad import Wad

W = Wad.from_str


def make_chain(
    accounts=None,
    price="150",
    pool=None,
    requirement="1.5",
    liquidation_ratio=None,
    penalty="0",
    discount="0",
    dust="0",
    gas_price="0",
    gas_schedule=None,
):
    """Bare chain for unit tests. Account DAI endowments here are not
    vault-backed, so DAI-identity checks belong in Engine-built worlds."""
    ct = CollateralType(
        requirement=W(requirement),
        liquidation_ratio=None if liquidation_ratio is None else W(liquidation_ratio),
        liquidation_penalty=W(penalty),
        auction_discount=W(discount),
        dust_limit=W(dust),
    )
    oracle = PriceOracle()
    if price is not None:
        oracle.set_path([(0, W(price))])
    if accounts is None:
        accounts = {
            "alice": {"ETH": W("1000"), "DAI": W("0")},
            "bob": {"ETH": W("1000"), "DAI": W("0")},
            "keeper": {"ETH": W("10"), "DAI": W("100000")},
        }
    chain = Chain(
        accounts=accounts,
        gas_price=W(gas_price),
        gas_schedule=gas_schedule,
        oracle=oracle,
        pool=pool,
        collateral_type=ct,
    )
    chain.seal_genesis()
    return chain


def deep_pool(price="150", eth="1000000000", fee_bps=0):
    """Pool deep enough that price impact is negligible for test trades."""
    reserve_eth = W(eth)
    reserve_dai = reserve_eth * W(price)
    return Pool(reserve_eth=reserve_eth, reserve_dai=reserve_dai, fee_bps=fee_bps)


def make_engine(overrides=None, **kwargs):
    config = {
        "accounts": {
            "alice": {"eth": "100"},
            "bob": {"eth": "100"},
            "keeper": {"dai": "1000000"},
        },
        "gas_price": "0",
        "pool": {"reserve_eth": "1000000000", "reserve_dai": "150000000000", "fee_bps": 0},
        "collateral": {"requirement": "1.5", "penalty": "0.13", "auction_discount": "0.03"},
        "price_path": [[0, "150"]],
        "keeper": "keeper",
        "margin_call_buffer": "0.1",
        "auto_liquidation": True,
    }
    config.update(overrides or {})
    config.update(kwargs)
    return Engine(GenesisConfig.from_dict(config))


@pytest.fixture
def chain():
    return make_chain()


@pytest.fixture
def engine():
    return make_engine()
