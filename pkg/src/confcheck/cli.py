"""Command-line entry point: lint bundles, resolve targets, emit plans, run scans."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from confcheck import content_io, core_model, datasource, oval_proc, planner, report, td_eval
from confcheck.errors import EngineError

USAGE_ERROR = 3

FIXTURE_ROOT_ENV = "CONFCHECK_FIXTURE_ROOT"


class _ArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the engine's input-error code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _load_bundle(path: str) -> content_io.CheckBundle:
    return content_io.parse_bundle(_read(path))


def _load_datasource(paths: list[str]) -> datasource.DataSource:
    return datasource.load_data_source([_read(p) for p in paths])


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_lint(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.bundle)
    result = core_model.validate_bundle(bundle)
    _print_json(
        {
            "bundle": args.bundle,
            "violations": [dataclasses.asdict(v) for v in result.violations],
        }
    )
    for violation in result.violations:
        print(f"lint: {violation.message}", file=sys.stderr)
    return 0 if result.ok else USAGE_ERROR


def cmd_resolve(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.bundle)
    ds = _load_datasource(args.datasource)
    target = bundle.targets.get(args.target)
    if target is None:
        print(f"resolve: unknown target id {args.target!r}", file=sys.stderr)
        return USAGE_ERROR
    resolution = td_eval.interpret_target_definition(ds, target)
    _print_json(
        {
            "groups": [list(group) for group in resolution.sorted_groups()],
            "assignment": resolution.assignment,
            "conflicts": list(resolution.conflicts),
        }
    )
    return 0


def _build_plans(args: argparse.Namespace, bundle, ds) -> list[planner.Plan]:
    collectors = content_io.parse_collectors(_read(args.collectors))
    return [
        planner.generate_system_tests(ds, bundle, bundle.checks[check_id], collectors)
        for check_id in sorted(bundle.checks)
    ]


def cmd_plan(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.bundle)
    ds = _load_datasource(args.datasource)
    plans = _build_plans(args, bundle, ds)
    sys.stdout.write(content_io.serialize_plans(plans).decode())
    return 0


def cmd_scan(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.bundle)
    adapters = oval_proc.parse_adapters(_read(args.adapters))
    fixture_root = os.environ.get(FIXTURE_ROOT_ENV)
    if fixture_root:
        adapters = [
            dataclasses.replace(a, remap_root=fixture_root)
            if a.kind is oval_proc.AdapterKind.FILE
            else a
            for a in adapters
        ]
    if args.plan:
        plans = content_io.parse_plans(_read(args.plan), bundle)
        results = oval_proc.run_plans(plans, bundle, adapters)
    else:
        if not args.collectors:
            print("scan: either --plan or --collectors is required", file=sys.stderr)
            return USAGE_ERROR
        if not args.datasource:
            print("scan: --datasource is required unless --plan is given", file=sys.stderr)
            return USAGE_ERROR
        ds = _load_datasource(args.datasource)
        collectors = content_io.parse_collectors(_read(args.collectors))
        results = oval_proc.run_checks(ds, bundle, collectors, adapters)
    payload = content_io.serialize_report(results)
    if args.report:
        Path(args.report).write_bytes(payload)
    sys.stdout.write(payload.decode())
    return report.exit_code(results)


def _add_datasource_flag(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument(
        "--datasource",
        action="append",
        default=[],
        metavar="PATH",
        required=required,
        help="data source JSON file; repeat to federate several",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="confcheck")
    sub = parser.add_subparsers(dest="command", required=True)

    lint = sub.add_parser("lint", help="validate a check bundle")
    lint.add_argument("bundle", help="check bundle XML file")
    lint.set_defaults(func=cmd_lint)

    resolve = sub.add_parser("resolve", help="resolve a target definition")
    _add_datasource_flag(resolve)
    resolve.add_argument("--bundle", required=True, help="check bundle XML file")
    resolve.add_argument("--target", required=True, help="target definition id")
    resolve.set_defaults(func=cmd_resolve)

    plan = sub.add_parser("plan", help="emit system-test plans as editable JSON")
    _add_datasource_flag(plan)
    plan.add_argument("--bundle", required=True)
    plan.add_argument("--collectors", required=True, help="collector set JSON file")
    plan.set_defaults(func=cmd_plan)

    scan = sub.add_parser("scan", help="run checks and write a report")
    _add_datasource_flag(scan, required=False)
    scan.add_argument("--bundle", required=True)
    scan.add_argument("--collectors", help="collector set JSON file")
    scan.add_argument("--adapters", required=True, help="collection adapter JSON file")
    scan.add_argument("--plan", help="run a pre-built plan instead of resolving")
    scan.add_argument("--report", help="also write the report JSON to this path")
    scan.set_defaults(func=cmd_scan)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"confcheck: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except OSError as exc:
        print(f"confcheck: {exc}", file=sys.stderr)
        return USAGE_ERROR


def entrypoint() -> None:  # pragma: no cover - console script shim
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
