"""Deterministic simulator of LoRaWAN gateway impersonation over the Semtech UDP packet-forwarder protocol."""

__version__ = "0.1.0"
