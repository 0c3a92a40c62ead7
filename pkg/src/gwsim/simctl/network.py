"""Gateway-to-server UDP links with per-link latency and security attributes."""

from __future__ import annotations

from dataclasses import dataclass

from ..codec import CodecError, decode_datagram


@dataclass(frozen=True)
class LinkAttrs:
    eavesdroppable: bool = True
    authenticated: bool = False
    latency_ms: float = 20.0


class Network:
    """Delivers raw datagrams between logical ``host:port`` addresses.

    Every non-server endpoint owns one link to the server; the link decides
    latency, whether traffic on it is authenticated (IPSec/VPN style) and
    whether a passive observer can read it.
    """

    def __init__(self, scheduler, trace=None, default_link: LinkAttrs = LinkAttrs()):
        self.scheduler = scheduler
        self.trace = trace
        self.default_link = default_link
        self._handlers: dict[str, object] = {}
        self._links: dict[str, LinkAttrs] = {}
        self._taps: dict[str, list] = {}
        self.undeliverable = 0

    def bind(self, address: str, handler, link: LinkAttrs | None = None) -> None:
        self._handlers[address] = handler
        if link is not None:
            self._links[address] = link

    def unbind(self, address: str) -> None:
        self._handlers.pop(address, None)

    def link(self, address: str) -> LinkAttrs:
        return self._links.get(address, self.default_link)

    def tap(self, address: str, fn) -> bool:
        """Passively observe datagrams on ``address``'s link; False if the link resists eavesdropping."""
        if not self.link(address).eavesdroppable:
            return False
        self._taps.setdefault(address, []).append(fn)
        return True

    def untap(self, address: str, fn) -> None:
        taps = self._taps.get(address, [])
        if fn in taps:
            taps.remove(fn)

    def send(self, src: str, dst: str, raw: bytes) -> None:
        link = self._links.get(src) or self._links.get(dst) or self.default_link
        if self.trace is not None:
            try:
                kind = decode_datagram(raw).kind.name
            except CodecError:
                kind = "undecodable"
            self.trace.record("datagram", src=src, dst=dst, dg=kind, raw=raw.hex())
        for end in (src, dst):
            for fn in list(self._taps.get(end, ())):
                fn(raw, src, dst)
        authenticated = self.link(src).authenticated
        self.scheduler.after(link.latency_ms, self._deliver, src, dst, bytes(raw), authenticated)

    def _deliver(self, src, dst, raw, authenticated):
        handler = self._handlers.get(dst)
        if handler is None:
            self.undeliverable += 1
            if self.trace is not None:
                self.trace.record("undeliverable", src=src, dst=dst)
            return
        handler(raw, src, authenticated)
