from .device import DeviceBusy, EndDevice, UplinkOutcome
from .gateway import Gateway
from .registry import DuplicateEui, Registry, RegistryEntry, euis_from_export
from .server import ROUTE_POLICIES, NetworkServer

__all__ = ["DeviceBusy", "EndDevice", "UplinkOutcome", "Gateway", "DuplicateEui", "Registry", "RegistryEntry",
           "euis_from_export", "ROUTE_POLICIES", "NetworkServer"]
