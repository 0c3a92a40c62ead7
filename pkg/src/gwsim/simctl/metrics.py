"""Metrics report and output files (metrics.json, trace.jsonl, alerts.jsonl, summary.csv)."""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from pathlib import Path


def _frac(num: int, den: int) -> float:
    return num / den if den else 0.0


def device_metrics(result, dev) -> dict:
    server = result.server
    raw = dev.dev_addr.raw
    delivered = {fcnt for (addr, fcnt) in server.delivered if addr == raw}
    genuine = spoofed = lost = inversions = 0
    for out in dev.outcomes.values():
        if out.status == "presumed_lost":
            lost += 1
        if out.status != "acked":
            continue
        acked_for = server.ack_ledger.get((raw, out.ack_down_fcnt))
        if acked_for == out.fcnt:
            genuine += 1
            continue
        spoofed += 1
        # an earlier uplink reached the server but was given up by the device,
        # while this one never arrived yet counts as acknowledged
        earlier = dev.outcomes.get(acked_for)
        if earlier is not None and earlier.status == "presumed_lost" and out.fcnt not in delivered:
            inversions += 1
    return {
        "dev_addr": str(dev.dev_addr),
        "uplinks_sent": dev.uplinks_sent,
        "transmissions": sum(o.attempts for o in dev.outcomes.values()),
        "delivered": len(delivered),
        "acked_genuine": genuine,
        "acked_spoofed": spoofed,
        "presumed_lost": lost,
        "inversions": inversions,
        "ack_verdicts": dict(dev.verdict_counts),
        "retransmit_limit": dev.retransmit_limit,
    }


def eui_metrics(push_log, attack_start: float | None) -> dict:
    out = {}
    grouped = defaultdict(list)
    for t, eui, src, stat in push_log:
        grouped[eui].append((t, src, stat))
    for eui, rows in sorted(grouped.items()):
        by_addr = defaultdict(Counter)
        for _, src, stat in rows:
            by_addr[src]["pushes"] += 1
            by_addr[src]["corrupt"] += stat == -1
        corrupt = sum(stat == -1 for _, _, stat in rows)
        entry = {
            "pushes": len(rows),
            "corrupt": corrupt,
            "corrupt_fraction": _frac(corrupt, len(rows)),
            "by_address": {a: {"pushes": c["pushes"], "corrupt": c["corrupt"],
                               "corrupt_fraction": _frac(c["corrupt"], c["pushes"])}
                           for a, c in sorted(by_addr.items())},
        }
        if attack_start is not None:
            phase = [stat for t, _, stat in rows if t >= attack_start]
            bad = sum(s == -1 for s in phase)
            entry["pushes_attack_phase"] = len(phase)
            entry["corrupt_attack_phase"] = bad
            entry["corrupt_fraction_attack_phase"] = _frac(bad, len(phase))
        out[eui] = entry
    return out


def _count_by_address(downlinks, since: float | None = None) -> dict:
    c = Counter(d["address"] for d in downlinks if since is None or d["t"] >= since)
    return dict(sorted(c.items()))


def collect_metrics(result) -> dict:
    doc = result.scenario.doc
    att = doc["attacker"]
    attack_start = float(att["start_ms"]) if att else None
    server = result.server
    report = {
        "scenario": result.scenario.name,
        "seed": doc["seed"],
        "horizon_ms": doc["horizon_ms"],
        "mic_mode": doc["mic_mode"],
        "route_policy": doc["route_policy"],
        "params": result.params,
        "devices": {dev_id: device_metrics(result, dev) for dev_id, dev in result.devices.items()},
        "gateways": {gid: dict(gw.stats, alive=gw.alive) for gid, gw in result.gateways.items()},
        "euis": eui_metrics(server.push_log, attack_start),
    }
    srv = {
        "delivered": len(server.delivered),
        "downlinks": len(server.downlinks),
        "downlinks_by_address": _count_by_address(server.downlinks),
        "stats": dict(sorted(server.stats.items())),
    }
    if attack_start is not None:
        warmup = attack_start + float(doc["server"]["most_frequent_window_ms"])
        srv["attack_start_ms"] = attack_start
        srv["warmup_end_ms"] = warmup
        srv["downlinks_by_address_attack"] = _count_by_address(server.downlinks, attack_start)
        srv["downlinks_by_address_after_warmup"] = _count_by_address(server.downlinks, warmup)
        for label, counts in (("attack", srv["downlinks_by_address_attack"]),
                              ("after_warmup", srv["downlinks_by_address_after_warmup"])):
            total = sum(counts.values())
            srv[f"attacker_downlink_share_{label}"] = _frac(counts.get(att["address"], 0), total)
    report["server"] = srv
    if result.attacker is not None:
        a = result.attacker
        spoof = a.state.ack_spoof
        jam = a.state.jammer
        report["attacker"] = {
            "address": a.address,
            "mode": a.state.mode,
            "stolen_eui": str(a.state.stolen_eui) if a.state.stolen_eui else None,
            "link_sniffable": a.sniffing,
            "steps": a.state.log,
            "pushes": a.stats["pushes"],
            "pulls": a.stats["pulls"],
            "ack_spoof": None if spoof is None else {"phase": spoof.phase, "result": spoof.result,
                                                     "events": a.spoofs},
            "jam_bursts": jam.bursts if jam is not None else 0,
        }
    report["ids"] = {"alerts_by_kind": result.ids.counts(), "alerts": len(result.ids.alerts)}
    report["events"] = {"fired": result.sim.scheduler.fired,
                        "trace": dict(sorted(Counter(r["kind"] for r in result.trace.records).items()))}
    return report


def summary_row(report: dict) -> dict:
    row = {"scenario": report["scenario"], "seed": report["seed"], "mic_mode": report["mic_mode"],
           "route_policy": report["route_policy"]}
    row.update({f"param_{k}": v for k, v in report["params"].items()})
    for dev_id, d in report["devices"].items():
        for k in ("uplinks_sent", "delivered", "acked_genuine", "acked_spoofed", "presumed_lost", "inversions"):
            row[f"{dev_id}_{k}"] = d[k]
    for eui, e in report["euis"].items():
        row[f"{eui}_pushes"] = e["pushes"]
        row[f"{eui}_corrupt_fraction"] = round(e["corrupt_fraction"], 6)
        if "corrupt_fraction_attack_phase" in e:
            row[f"{eui}_corrupt_fraction_attack_phase"] = round(e["corrupt_fraction_attack_phase"], 6)
    srv = report["server"]
    row["downlinks"] = srv["downlinks"]
    if "attacker_downlink_share_attack" in srv:
        row["attacker_downlink_share_attack"] = round(srv["attacker_downlink_share_attack"], 6)
        row["attacker_downlink_share_after_warmup"] = round(srv["attacker_downlink_share_after_warmup"], 6)
    for kind, n in report["ids"]["alerts_by_kind"].items():
        row[f"alerts_{kind}"] = n
    return row


def emit_metrics(results, out_dir) -> dict[str, Path]:
    """Write all output files for one or more runs (sweep points) into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    results = list(results)
    sweep = len(results) > 1
    reports = [r.metrics() for r in results]
    paths = {name: out / name for name in ("metrics.json", "trace.jsonl", "alerts.jsonl", "summary.csv")}

    doc = {"runs": reports} if sweep else reports[0]
    paths["metrics.json"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    with paths["trace.jsonl"].open("w") as fh:
        for i, r in enumerate(results):
            if not sweep:
                fh.write(r.trace.dumps())
                continue
            for rec in r.trace.records:
                fh.write(json.dumps({"run": i, **rec}, separators=(",", ":")) + "\n")
    with paths["alerts.jsonl"].open("w") as fh:
        for i, r in enumerate(results):
            for alert in r.alerts:
                rec = alert.to_dict() if not sweep else {"run": i, **alert.to_dict()}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    rows = [summary_row(rep) for rep in reports]
    columns = list(dict.fromkeys(k for row in rows for k in row))
    with paths["summary.csv"].open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return paths
