"""Identifier theft and disabling the legitimate gateway."""

from __future__ import annotations

from ..codec import CodecError, Datagram, DatagramKind, GatewayEui, decode_datagram
from ..nodes.registry import euis_from_export


class AttackError(RuntimeError):
    pass


class SniffError(AttackError):
    """Nothing carrying a gateway identifier was observed."""


class DisconnectRefused(AttackError):
    """The target gateway is physically protected."""


class StepOrderError(AttackError):
    """An attack step was attempted before its prerequisites."""


def sniff_eui(datagrams) -> GatewayEui:
    """EUI from the first PUSH_DATA or PULL_DATA header among observed datagrams.

    Items may be raw bytes or already decoded ``Datagram`` objects; anything
    that does not decode is skipped.
    """
    for item in datagrams:
        if isinstance(item, Datagram):
            d = item
        else:
            try:
                d = decode_datagram(item)
            except CodecError:
                continue
        if d.kind in (DatagramKind.PUSH_DATA, DatagramKind.PULL_DATA):
            return d.eui
    raise SniffError("no PUSH_DATA or PULL_DATA observed")


def eui_from_registry(export, location: str) -> GatewayEui:
    """Look up a gateway by its advertised location in a public registry export."""
    for eui, item in euis_from_export(export):
        if item.get("location") == location:
            return eui
    raise AttackError(f"no registered gateway at {location!r}")


def disconnect_gateway(gateway) -> bool:
    """Cut power or uplink of ``gateway``; returns False if it was already down."""
    if gateway.physically_protected:
        gateway.sim.trace.record("disconnect_refused", gateway=gateway.node_id)
        raise DisconnectRefused(f"{gateway.node_id} is physically protected")
    if not gateway.alive:
        return False
    gateway.disable()
    return True
