"""TTN-style gateway registry and its public gateway-data export."""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..codec import GatewayEui


class DuplicateEui(ValueError):
    pass


@dataclass
class RegistryEntry:
    eui: GatewayEui
    description: str = ""
    location: str = ""
    trusted: bool = True
    last_seen: float | None = None

    @property
    def name(self) -> str:
        return str(self.eui)


class Registry:
    def __init__(self):
        self._entries: dict[GatewayEui, RegistryEntry] = {}

    def registry_register(self, entry: RegistryEntry) -> RegistryEntry:
        if entry.eui in self._entries:
            raise DuplicateEui(f"{entry.name} is already registered")
        self._entries[entry.eui] = entry
        return entry

    register = registry_register

    def __contains__(self, eui: GatewayEui) -> bool:
        return eui in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, eui: GatewayEui) -> RegistryEntry | None:
        return self._entries.get(eui)

    def is_trusted(self, eui: GatewayEui) -> bool:
        entry = self._entries.get(eui)
        return entry is not None and entry.trusted

    def touch(self, eui: GatewayEui, t: float) -> None:
        entry = self._entries.get(eui)
        if entry is not None:
            entry.last_seen = t

    def registry_export(self) -> list[dict]:
        return [{"id": e.name, "description": e.description, "location": e.location,
                 "last_seen": e.last_seen}
                for e in sorted(self._entries.values(), key=lambda e: e.eui)]

    def export_json(self) -> str:
        return json.dumps(self.registry_export(), indent=2)


def euis_from_export(document) -> list[tuple[GatewayEui, dict]]:
    """Recover identifiers from an exported document (list or JSON text)."""
    if isinstance(document, (str, bytes)):
        document = json.loads(document)
    out = []
    for item in document:
        ident = item.get("id", "")
        if ident.startswith("eui-"):
            out.append((GatewayEui.parse(ident), item))
    return out
