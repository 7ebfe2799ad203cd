"""Command line driver: scripted scenario runs, the leverage-cap curve,
and serving the HTTP API.

All file outputs are byte-deterministic for identical inputs: CSV uses
RFC 4180 quoting with LF line endings and renders amounts as decimal
strings.

Exit codes: 0 ok, 1 runtime error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from decimal import Decimal

from .engine import Engine, Scenario, ScenarioAction, load_scenario
from .errors import InvalidScenario, SimError
from .leverage import effective_max_leverage, theoretical_max_leverage
from .wad import Wad

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _write_csv(path: str, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _apply_action(engine: Engine, action: ScenarioAction) -> None:
    if action.op == "open":
        engine.open_position(
            owner=action.actor,
            collateral=Wad.from_str(str(action.args["collateral"])),
            target_leverage=Wad.from_str(str(action.args["target_leverage"])),
            slippage_tolerance=float(action.args.get("slippage_tolerance", 0.005)),
        )
    elif action.op == "add_collateral":
        engine.add_collateral(
            int(action.args["position"]), Wad.from_str(str(action.args["amount"]))
        )
    elif action.op == "close":
        engine.close_position(int(action.args["position"]))
    else:  # pragma: no cover - validated at parse time
        raise InvalidScenario(f"unknown action {action.op!r}")


def run_scenario(scenario: Scenario, out_path: str, summary_path: str | None) -> None:
    engine = Engine(scenario.genesis)
    pending = list(scenario.actions)
    rows: list[list[str]] = []

    def record(height: int) -> None:
        reports = engine.reports()
        if not reports:
            state = engine.read_state()
            if state["price"] is not None:
                rows.append([str(height), state["price"], "", "", "", "", ""])
            return
        for report in reports:
            rows.append(
                [
                    str(height),
                    str(report.price),
                    str(report.position_id),
                    report.status,
                    "" if report.collateralization is None else str(report.collateralization),
                    str(report.equity),
                    str(report.pnl),
                ]
            )

    for height in range(scenario.run_blocks + 1):
        if height > 0:
            engine.advance_blocks(1)
        while pending and pending[0].block == height:
            _apply_action(engine, pending.pop(0))
        record(height)
    if pending:
        raise InvalidScenario(
            f"action scheduled past run.blocks={scenario.run_blocks}: {pending[0]}"
        )

    _write_csv(
        out_path,
        ["height", "price", "position_id", "status", "collateralization", "equity", "pnl"],
        rows,
    )

    if summary_path:
        settlements = {s.vault_id: s for s in engine.chain.settlements}
        summary_rows = []
        for pid in engine.position_ids():
            position = engine.position(pid)
            report = engine.report(pid)
            settlement = settlements.get(position.vault_id)
            summary_rows.append(
                [
                    str(pid),
                    report.status,
                    str(position.entry_price),
                    str(position.achieved_leverage),
                    str(position.initial_equity),
                    str(report.equity),
                    str(report.pnl),
                    str(position.cumulative_costs),
                    "" if settlement is None else str(settlement.block_height),
                    "" if settlement is None else str(settlement.auction_price),
                    "" if settlement is None else str(settlement.seized_eth),
                    "" if settlement is None else str(settlement.returned_eth),
                    "" if settlement is None else str(settlement.dai_burned),
                    "" if settlement is None else str(settlement.bad_debt),
                ]
            )
        _write_csv(
            summary_path,
            [
                "position_id",
                "final_status",
                "entry_price",
                "achieved_leverage",
                "initial_equity",
                "final_equity",
                "final_pnl",
                "cumulative_costs",
                "liquidated_at",
                "auction_price",
                "seized_eth",
                "returned_eth",
                "dai_burned",
                "bad_debt",
            ],
            summary_rows,
        )


def figure_rows(r_min: Decimal, r_max: Decimal, step: Decimal, fee: float) -> list[list[str]]:
    """Leverage cap per collateral requirement over a decimal grid; the
    grid is generated by exact decimal increments so rows land on the
    requested points without float drift."""
    if r_min <= 1:
        raise InvalidScenario("r-min must be > 1")
    if r_max <= r_min:
        raise InvalidScenario("r-max must exceed r-min")
    if step <= 0:
        raise InvalidScenario("step must be > 0")
    rows = []
    r = r_min
    while r <= r_max:
        r_float = float(r)
        rows.append(
            [
                str(r),
                repr(theoretical_max_leverage(r_float)),
                repr(effective_max_leverage(r_float, fee)),
            ]
        )
        r += step
    return rows


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except InvalidScenario as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = args.summary_out
    if summary is None and args.out.endswith(".csv"):
        summary = args.out[: -len(".csv")] + ".summary.csv"
    try:
        run_scenario(scenario, args.out, summary)
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_figure3(args) -> int:
    try:
        rows = figure_rows(
            Decimal(args.r_min), Decimal(args.r_max), Decimal(args.step), args.fee
        )
    except (InvalidScenario, SimError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_csv(
        args.out,
        ["collateral_requirement", "theoretical_max_leverage", "effective_max_leverage"],
        rows,
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    if not args.genesis:
        print("error: --genesis (or LEVSIM_GENESIS) is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        scenario = load_scenario(args.genesis)
        engine = Engine(scenario.genesis)
    except InvalidScenario as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    app = create_app(engine, console_dir=args.console)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levsim")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scripted scenario to CSV")
    run.add_argument("--scenario", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--summary-out", default=None)
    run.set_defaults(func=cmd_run)

    fig = sub.add_parser("figure3", help="leverage caps over collateral requirements")
    fig.add_argument("--r-min", default="1.05")
    fig.add_argument("--r-max", default="3.0")
    fig.add_argument("--step", default="0.05")
    fig.add_argument("--fee", type=float, default=0.0)
    fig.add_argument("--out", required=True)
    fig.set_defaults(func=cmd_figure3)

    serve = sub.add_parser("serve", help="serve the HTTP API")
    serve.add_argument(
        "--genesis",
        default=os.environ.get("LEVSIM_GENESIS"),
        help="scenario/genesis JSON file (or LEVSIM_GENESIS)",
    )
    serve.add_argument("--host", default=os.environ.get("LEVSIM_HOST", "127.0.0.1"))
    serve.add_argument(
        "--port", type=int, default=int(os.environ.get("LEVSIM_PORT", "8000"))
    )
    serve.add_argument("--console", default=None, help="static console bundle to mount")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser()
    except ValueError as exc:  # unparsable LEVSIM_* environment value
        print(f"error: bad environment configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
