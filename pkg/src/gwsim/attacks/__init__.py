"""Attacker toolkit: identifier theft, gateway disabling, jamming, impersonation, ACK spoofing."""

from .impostor import AckSpoofState, Attacker, AttackerState
from .jammer import JAMMER_KINDS, Jammer, JammerConfig, plan_burst, record_done, wormhole_record_and_trigger
from .steps import (AttackError, DisconnectRefused, SniffError, StepOrderError, disconnect_gateway,
                    eui_from_registry, sniff_eui)

__all__ = [
    "AckSpoofState", "Attacker", "AttackerState", "JAMMER_KINDS", "Jammer", "JammerConfig", "plan_burst",
    "record_done", "wormhole_record_and_trigger", "AttackError", "DisconnectRefused", "SniffError",
    "StepOrderError", "disconnect_gateway", "eui_from_registry", "sniff_eui",
]
