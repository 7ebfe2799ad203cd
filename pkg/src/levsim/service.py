"""HTTP/JSON facade over the engine.

Numeric fields travel as decimal strings, never floats, so 18-digit
fixed-point values round-trip without precision loss. Responses are
rendered through one canonical serializer (sorted keys, compact
separators), which makes repeated GETs byte-identical between
mutations. The service holds no funds itself: the only account a
request can debit is the owner account named in that request, and only
within that request's batch.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from pydantic import BaseModel

from .engine import Engine, parse_price_path
from .errors import InvalidAmount, InvalidScenario, SimError
from .leverage import LeveragePlan, Position
from .ledger import Receipt
from .monitor import PositionReport
from .wad import Wad

# one status code per engine fault class: 4xx are caller faults
ERROR_STATUS = {
    "MalformedRequest": 400,
    "InvalidAmount": 400,
    "InvalidScenario": 400,
    "NonMonotonePath": 400,
    "NonPositivePrice": 400,
    "NoPriceYet": 400,
    "UnknownPosition": 404,
    "UnknownVault": 404,
    "SlippageExceeded": 409,
    "PositionNotOpen": 409,
    "UnwindInfeasible": 409,
    "NotLiquidatable": 409,
    "OutstandingDebt": 409,
    "VaultNotOpen": 409,
    "TargetExceedsMax": 422,
    "InsufficientInitialCollateral": 422,
    "InsufficientFunds": 422,
    "ExceedsCollateralCapacity": 422,
    "WouldUndercollateralize": 422,
    "BelowDustLimit": 422,
    "RepayExceedsDebt": 422,
    "KeeperInsufficientDai": 422,
    "CollateralRatioAtOrBelowOne": 422,
    "OutOfGasFunds": 422,
    "GasLimitExceeded": 422,
    "EmptyVault": 422,
    "UnknownAccount": 422,
    "NotVaultOwner": 422,
    "InsufficientLiquidity": 422,
    "PoolUninitialized": 422,
}


def canonical_json(payload, status_code: int = 200) -> Response:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return Response(content=body, status_code=status_code, media_type="application/json")


def error_response(code: str, message: str) -> Response:
    status = ERROR_STATUS.get(code, 500)
    return canonical_json({"code": code, "message": message}, status_code=status)


class OpenPositionBody(BaseModel):
    owner: str
    collateral: str
    target_leverage: str
    slippage_tolerance: str | None = None


class AddCollateralBody(BaseModel):
    amount: str


class CloseBody(BaseModel):
    slippage_tolerance: str | None = None


class AdvanceBody(BaseModel):
    blocks: int


class PriceBody(BaseModel):
    path: list | None = None
    step: list | None = None


def _parse_amount(text: str, context: str) -> Wad:
    try:
        return Wad.from_str(text)
    except InvalidAmount as exc:
        # malformed wire value, not an engine-domain failure
        raise InvalidScenario(f"{context}: {exc}") from None


def _parse_ratio(text: str | None, context: str, default: float) -> float:
    if text is None:
        return default
    try:
        return float(Wad.from_str(text))
    except InvalidAmount as exc:
        raise InvalidScenario(f"{context}: {exc}") from None


def _receipt_json(receipt: Receipt) -> dict:
    return {
        "success": receipt.success,
        "gas_used": receipt.gas_used,
        "gas_paid": str(receipt.gas_paid),
        "error": receipt.error,
        "vault_id": receipt.vault_id,
    }


def _report_json(report: PositionReport) -> dict:
    return report.to_dict()


def _position_json(engine: Engine, position: Position) -> dict:
    report = engine.report(position.id)
    return {
        "id": position.id,
        "vault_id": position.vault_id,
        "owner": position.owner,
        "entry_price": str(position.entry_price),
        "initial_collateral": str(position.initial_collateral),
        "initial_equity": str(position.initial_equity),
        "achieved_leverage": str(position.achieved_leverage),
        "cumulative_costs": str(position.cumulative_costs),
        "liquidation_price": str(engine.liquidation_price_of(position.id)),
        "opened_at": position.opened_at,
        "report": _report_json(report),
    }


def _scan_json(engine: Engine) -> dict:
    state = engine.read_state()
    return {
        "digest": state["digest"],
        "block_height": state["block_height"],
        "price": state["price"],
    }


def create_app(engine: Engine, console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="levsim", docs_url=None, redoc_url=None)

    @app.exception_handler(SimError)
    async def _sim_error(_request: Request, exc: SimError):
        code = "MalformedRequest" if isinstance(exc, InvalidScenario) else exc.code
        return error_response(code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError):
        return error_response("MalformedRequest", str(exc.errors()[:1]))

    @app.get("/state")
    def get_state():
        return canonical_json(_scan_json(engine))

    @app.get("/config")
    def get_config():
        return canonical_json(engine.config_info())

    @app.get("/positions")
    def list_positions():
        payload = [
            _position_json(engine, engine.position(pid))
            for pid in engine.position_ids()
        ]
        return canonical_json(payload)

    @app.get("/positions/{position_id}")
    def get_position(position_id: int):
        position = engine.position(position_id)
        return canonical_json(_position_json(engine, position))

    @app.post("/positions")
    def open_position(body: OpenPositionBody):
        collateral = _parse_amount(body.collateral, "collateral")
        target = _parse_amount(body.target_leverage, "target_leverage")
        tolerance = _parse_ratio(body.slippage_tolerance, "slippage_tolerance", 0.005)
        position, plan, receipt = engine.open_position(
            body.owner, collateral, target, tolerance
        )
        payload = {
            "position": _position_json(engine, position),
            "plan": plan.to_dict(),
            "receipt": _receipt_json(receipt),
        }
        return canonical_json(payload, status_code=201)

    @app.post("/positions/{position_id}/collateral")
    def add_collateral(position_id: int, body: AddCollateralBody):
        amount = _parse_amount(body.amount, "amount")
        new_price, receipt = engine.add_collateral(position_id, amount)
        return canonical_json(
            {"new_liquidation_price": str(new_price), "receipt": _receipt_json(receipt)}
        )

    @app.post("/positions/{position_id}/close")
    def close_position(position_id: int, body: CloseBody | None = None):
        tolerance = _parse_ratio(
            body.slippage_tolerance if body else None, "slippage_tolerance", 0.005
        )
        realized, receipt = engine.close_position(position_id, tolerance)
        return canonical_json(
            {"realized_equity": str(realized), "receipt": _receipt_json(receipt)}
        )

    @app.post("/scenario/advance")
    def advance(body: AdvanceBody):
        if body.blocks < 0:
            raise InvalidScenario("blocks must be >= 0")
        engine.advance_blocks(body.blocks)
        return canonical_json(_scan_json(engine))

    @app.post("/scenario/price")
    def set_price(body: PriceBody):
        if (body.path is None) == (body.step is None):
            raise InvalidScenario("provide exactly one of 'path' or 'step'")
        if body.path is not None:
            engine.set_price_path(parse_price_path(body.path))
        else:
            steps = parse_price_path([body.step])
            engine.append_price_step(*steps[0])
        return canonical_json(_scan_json(engine))

    if console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True), name="console")

    return app
