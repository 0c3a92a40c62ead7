"""Command-line entry point.

    gwsim run --scenario jam-impersonation --seed 7 --out results/
    gwsim list-scenarios
    gwsim export-gateway-data --out gateways.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..nodes.server import ROUTE_POLICIES
from .canned import CANNED
from .metrics import emit_metrics
from .runner import build, run_all
from .scenario import ScenarioError, load_scenario

log = logging.getLogger("gwsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwsim", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario (file or canned name) and write outputs")
    r.add_argument("--scenario", required=True, help="scenario JSON file or canned name")
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon-ms", type=float)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--mic-mode", choices=["v1_0", "v1_1"])
    r.add_argument("--route-policy", choices=ROUTE_POLICIES)
    r.add_argument("--listen", metavar="HOST:PORT",
                   help="serve the network server on a real UDP socket instead of simulating")

    sub.add_parser("list-scenarios", help="list canned scenarios")

    e = sub.add_parser("export-gateway-data", help="write the public gateway registry export")
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--scenario", default="baseline")
    return p


def _cmd_run(args) -> int:
    scn = load_scenario(args.scenario).with_overrides(seed=args.seed, horizon_ms=args.horizon_ms,
                                                      mic_mode=args.mic_mode, route_policy=args.route_policy)
    if args.listen:
        return _cmd_listen(scn, args)
    results = run_all(scn)
    paths = emit_metrics(results, args.out)
    for r in results:
        label = " ".join(f"{k}={v}" for k, v in r.params.items()) or r.scenario.name
        devs = r.metrics()["devices"]
        summary = ", ".join(f"{d}: sent={m['uplinks_sent']} genuine={m['acked_genuine']} "
                            f"spoofed={m['acked_spoofed']}" for d, m in devs.items())
        print(f"{label}: {summary}; alerts={len(r.alerts)}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def _cmd_listen(scn, args) -> int:
    from .live import LiveServer, parse_hostport
    host, port = parse_hostport(args.listen)
    with LiveServer(scn, host, port) as live:
        print(f"listening on {live.address} for {scn.horizon_ms:.0f} ms", flush=True)
        try:
            live.serve(scn.horizon_ms)
        except KeyboardInterrupt:
            pass
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "trace.jsonl").write_text(live.sim.trace.dumps())
        (args.out / "alerts.jsonl").write_text(live.ids.log_lines())
        (args.out / "metrics.json").write_text(json.dumps(
            {"server": dict(live.server.stats), "ids": live.ids.counts()}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_list() -> int:
    for name in CANNED:
        scn = load_scenario(name)
        sweep = " sweep " + ",".join(scn.sweep) if scn.sweep else ""
        print(f"{name:30s} {scn.doc.get('description', '')}{sweep}")
    return EXIT_OK


def _cmd_export(args) -> int:
    scn = load_scenario(args.scenario)
    if scn.sweep:
        scn = scn.points()[0][1]
    result = build(scn)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(result.server.registry.export_json() + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-scenarios":
            return _cmd_list()
        return _cmd_export(args)
    except (ScenarioError, KeyError, ValueError) as exc:
        print(f"gwsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"gwsim: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
