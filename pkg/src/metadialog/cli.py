"""Command-line entry points: validate scenarios, replay headless, serve live."""

from __future__ import annotations

import argparse
import sys

from .interpreter import ParseMode
from .scenario import ScenarioError, parse_scenario_file, validate_scenario
from .session import replay_run


def _add_parse_mode(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--parse-mode",
        choices=["strict", "lenient"],
        default="lenient",
        help="completion parsing mode (default: lenient)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metadialog", description="Meta-controlled dialogue engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="validate a scenario file")
    validate.add_argument("--scenario", required=True)

    replay = sub.add_parser("replay", help="run a headless scripted session")
    replay.add_argument("--scenario", required=True)
    replay.add_argument("--llm-script", required=True)
    replay.add_argument("--asr-script")
    replay.add_argument("--budget-seconds", type=int)
    replay.add_argument("--out", help="transcript output path (JSON Lines)")
    _add_parse_mode(replay)

    serve = sub.add_parser("serve", help="serve live sessions over HTTP/WebSocket")
    serve.add_argument("--scenario", required=True)
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument(
        "--llm",
        default="http",
        help="'http' or 'scripted:<script path>' (default: http)",
    )
    serve.add_argument("--budget-seconds", type=int, default=600)
    serve.add_argument("--assets", help="asset catalog JSON path")
    serve.add_argument("--base-url", default="https://api.openai.com/v1")
    serve.add_argument("--model", default="gpt-4")
    serve.add_argument("--transcript-dir", default="transcripts")
    _add_parse_mode(serve)

    return parser


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = parse_scenario_file(args.scenario)
    except ScenarioError as exc:
        print(f"INVALID: {exc}")
        return 1
    except OSError as exc:
        print(f"ERROR: {exc}")
        return 1
    violations = validate_scenario(scenario)
    if violations:
        for violation in violations:
            print(f"INVALID: {violation.path}: {violation.message}")
        return 1
    print(
        f"OK: {scenario.id} ({len(scenario.tasks)} tasks, "
        f"{len(scenario.command_table)} commands, "
        f"{len(scenario.turn_class_table)} turn classes)"
    )
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    from .session import SessionConfig

    config = SessionConfig(parse_mode=ParseMode(args.parse_mode))
    summary, _ = replay_run(
        scenario_path=args.scenario,
        llm_script_path=args.llm_script,
        asr_script_path=args.asr_script,
        budget_ms=args.budget_seconds * 1000 if args.budget_seconds else None,
        out_path=args.out,
        config=config,
    )
    print(summary.format())
    return 0 if summary.final_phase == "Terminated" else 1


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServerConfig, create_app

    config = ServerConfig(
        scenario_path=args.scenario,
        llm_spec=args.llm,
        parse_mode=ParseMode(args.parse_mode),
        budget_override_ms=args.budget_seconds * 1000,
        transcript_dir=args.transcript_dir,
        asset_catalog_path=args.assets,
        http_base_url=args.base_url,
        model=args.model,
    )
    app = create_app(config)
    uvicorn.run(app, host="127.0.0.1", port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "replay":
        return cmd_replay(args)
    return cmd_serve(args)


if __name__ == "__main__":
    sys.exit(main())
