"""Command line entry point: the repl, the service, and sandbox fixtures."""

from __future__ import annotations

import argparse
import pickle
import sys
import time
from pathlib import Path

from . import sandbox
from .cleanroom import ExpertMode
from .cli import EXIT_SYSTEM, EXIT_USER, CliConfig, repl
from .errors import KitError, UserError


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--expert", action="store_true",
                        help="accept the user environment as-is, fill gaps only")
    parser.add_argument("--base-dir", type=Path, default=Path.cwd(),
                        help="work directory for tasks (default: cwd)")
    parser.add_argument("--site", type=Path, default=None,
                        help="software site directory (default: BASE/.sbx-site)")
    parser.add_argument("--sandbox", action="store_true",
                        help="install a sandbox release at the site if missing")
    parser.add_argument("--script", type=Path, default=None,
                        help="execute commands from FILE instead of a prompt")
    parser.add_argument("--timeout", type=float, default=300.0,
                        help="per-command timeout in seconds")


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = argparse.ArgumentParser(prog="startkit")
    _common_flags(parser)
    sub = parser.add_subparsers(dest="command")

    serve_p = sub.add_parser("serve", help="run the local UI service")
    serve_p.add_argument("--port", type=int, default=8765)

    sbx_p = sub.add_parser("sandbox", help="manage sandbox fixtures")
    sbx_sub = sbx_p.add_subparsers(dest="sandbox_command", required=True)
    make_p = sbx_sub.add_parser("make", help="install a mock release tree")
    make_p.add_argument("site", type=Path)
    make_p.add_argument("--release", default=sandbox.DEFAULT_RELEASE)
    inject_p = sbx_sub.add_parser("inject", help="inject a fault scenario")
    inject_p.add_argument("site", type=Path)
    inject_p.add_argument("scenario")
    inject_p.add_argument("--release", default=sandbox.DEFAULT_RELEASE)
    inject_p.add_argument("--receipt", type=Path, default=None)
    revert_p = sbx_sub.add_parser("revert", help="revert an injected fault")
    revert_p.add_argument("receipt", type=Path)

    args = parser.parse_args(argv)

    try:
        if args.command == "serve":
            return _serve(args)
        if args.command == "sandbox":
            return _sandbox(args)
        config = CliConfig(
            mode=ExpertMode.Expert if args.expert else ExpertMode.NonExpert,
            base_dir=args.base_dir.resolve(),
            site=args.site.resolve() if args.site else None,
            sandbox=args.sandbox,
            script_file=args.script,
            timeout=args.timeout,
        )
        return repl(config)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except KitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SYSTEM


def _serve(args) -> int:
    from .kit import make_kit
    from .service import KitService

    site = args.site or (args.base_dir / ".sbx-site")
    if args.sandbox and not (site / sandbox.DEFAULT_RELEASE).is_dir():
        sandbox.make_release(site)
    kit = make_kit(args.base_dir, site,
                   mode=ExpertMode.Expert if args.expert else ExpertMode.NonExpert,
                   timeout=args.timeout)
    service = KitService(kit, port=args.port).start()
    host, port = service.address
    print(f"serving on http://{host}:{port}/ (loopback only; Ctrl-C to stop)")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        service.stop()
        kit.close()
    return 0


def _sandbox(args) -> int:
    if args.sandbox_command == "make":
        manifest = sandbox.make_release(args.site, release=args.release)
        print(f"installed release {manifest.release} at {args.site} "
              f"({len(manifest.files)} files)")
        return 0
    if args.sandbox_command == "inject":
        scenario = next((s for s in sandbox.standard_scenarios()
                         if s.name == args.scenario), None)
        if scenario is None:
            names = ", ".join(s.name for s in sandbox.standard_scenarios())
            raise UserError(f"unknown scenario {args.scenario!r}; one of: {names}")
        receipt = sandbox.inject(scenario, args.site, release=args.release)
        receipt_path = args.receipt or (args.site / f"{scenario.name}.receipt")
        receipt_path.write_bytes(pickle.dumps(receipt))
        print(f"injected {scenario.name}; receipt at {receipt_path}")
        return 0
    if args.sandbox_command == "revert":
        receipt = pickle.loads(args.receipt.read_bytes())
        sandbox.revert(receipt)
        args.receipt.unlink()
        print(f"reverted {receipt.scenario}")
        return 0
    return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
