"""Service offers: periodic capability announcements and the local offer view.

Every worker broadcasts one bundle per announcement round carrying its full
capability vector and one record per offered service. Receivers fold the
records into an offer database keyed by (worker, service); a newer announce
always wins, a delayed older one never overwrites. Offers age out by their
issue time, not by arrival.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

from .bundles import BROADCAST, Bundle, BundleId, BundleKind, NodeAddress
from .simnet import Position

OFFER_HEADER_BYTES = 64
OFFER_RECORD_BYTES = 32
_HEADER = struct.Struct(">Qddddddd")     # worker, issued_at, cpu, memory, disk, energy, x, y
_RECORD = struct.Struct(">24sII")        # service name (NUL padded), param count, reserved
_SERVICE_NAME_BYTES = 24

DEFAULT_ANNOUNCE_INTERVAL_S = 2.0
DEFAULT_OFFER_EXPIRY_S = 120.0


class OfferCodecError(ValueError):
    """Raised when an offer payload cannot be decoded."""


@dataclass
class CapabilityVector:
    """A worker's advertised resources plus its position at announce time."""

    cpu: float
    memory: float
    disk: float
    energy: float
    position: Position

    def resource(self, metric: str) -> float:
        return {"cpu": self.cpu, "memory": self.memory,
                "disk": self.disk, "energy": self.energy}[metric]


@dataclass(frozen=True)
class ServiceOffer:
    worker: NodeAddress
    service_name: str
    param_count: int
    capabilities: "CapabilityVector"
    issued_at: float


@dataclass
class OfferRecord:
    offer: ServiceOffer
    received_at: float


def encode_offers(worker: NodeAddress, issued_at: float, caps: CapabilityVector,
                  services: list[tuple[str, int]]) -> bytes:
    """Fixed-width wire layout: 64 byte header + 32 bytes per offered service."""
    parts = [_HEADER.pack(worker, issued_at, caps.cpu, caps.memory, caps.disk,
                          caps.energy, caps.position[0], caps.position[1])]
    for name, param_count in services:
        raw = name.encode("utf-8")
        if len(raw) > _SERVICE_NAME_BYTES:
            raise ValueError(f"service name too long for wire format: {name!r}")
        parts.append(_RECORD.pack(raw, param_count, 0))
    return b"".join(parts)


def decode_offers(payload: bytes, received_at: float) -> list[ServiceOffer]:
    if not isinstance(payload, (bytes, bytearray)):
        raise OfferCodecError("offer payload is not a byte sequence")
    if len(payload) < OFFER_HEADER_BYTES:
        raise OfferCodecError(f"offer payload truncated: {len(payload)} bytes")
    if (len(payload) - OFFER_HEADER_BYTES) % OFFER_RECORD_BYTES != 0:
        raise OfferCodecError(f"offer payload has trailing bytes: {len(payload)}")
    worker, issued_at, cpu, memory, disk, energy, x, y = _HEADER.unpack_from(payload, 0)
    caps = CapabilityVector(cpu=cpu, memory=memory, disk=disk, energy=energy, position=(x, y))
    offers = []
    for off in range(OFFER_HEADER_BYTES, len(payload), OFFER_RECORD_BYTES):
        raw_name, param_count, _ = _RECORD.unpack_from(payload, off)
        try:
            name = raw_name.rstrip(b"\x00").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise OfferCodecError(f"undecodable service name at offset {off}") from exc
        if not name:
            raise OfferCodecError(f"empty service name at offset {off}")
        offers.append(ServiceOffer(worker=worker, service_name=name,
                                   param_count=param_count, capabilities=caps,
                                   issued_at=issued_at))
    return offers


def build_offer_bundle(bundle_id: BundleId, worker: NodeAddress, issued_at: float,
                       caps: CapabilityVector, services: list[tuple[str, int]],
                       expiry_s: float = DEFAULT_OFFER_EXPIRY_S) -> Optional[Bundle]:
    """One broadcast bundle per announcement round; None if nothing is offered."""
    if not services:
        return None
    payload = encode_offers(worker, issued_at, caps, services)
    return Bundle(bundle_id=bundle_id, source=worker, destination=BROADCAST,
                  kind=BundleKind.OFFER, payload=payload, size_bytes=len(payload),
                  created_at=issued_at, ttl_seconds=expiry_s)


class OfferDatabase:
    """A node's current view of who offers what, folded from received bundles."""

    def __init__(self, expiry_s: float = DEFAULT_OFFER_EXPIRY_S) -> None:
        self.expiry_s = expiry_s
        self._records: dict[tuple[NodeAddress, str], OfferRecord] = {}
        self.malformed_dropped = 0

    def __len__(self) -> int:
        return len(self._records)

    def ingest_bundle(self, bundle: Bundle, received_at: float) -> int:
        """Fold one offer bundle in; malformed payloads are dropped and counted."""
        try:
            offers = decode_offers(bundle.payload, received_at)
        except OfferCodecError:
            self.malformed_dropped += 1
            return 0
        return self.ingest(offers, received_at)

    def ingest(self, offers: list[ServiceOffer], received_at: float) -> int:
        applied = 0
        for offer in offers:
            key = (offer.worker, offer.service_name)
            existing = self._records.get(key)
            if existing is not None and existing.offer.issued_at >= offer.issued_at:
                continue
            self._records[key] = OfferRecord(offer=offer, received_at=received_at)
            applied += 1
        return applied

    def lookup(self, service_name: str, now: float) -> list[OfferRecord]:
        """Fresh offers for one service, sorted by worker address."""
        fresh = [rec for (worker, name), rec in self._records.items()
                 if name == service_name and now - rec.offer.issued_at <= self.expiry_s]
        fresh.sort(key=lambda rec: rec.offer.worker)
        return fresh

    def known_workers(self, now: float) -> list[NodeAddress]:
        workers = {rec.offer.worker for rec in self._records.values()
                   if now - rec.offer.issued_at <= self.expiry_s}
        return sorted(workers)

    def prune(self, now: float) -> int:
        stale = [key for key, rec in self._records.items()
                 if now - rec.offer.issued_at > self.expiry_s]
        for key in stale:
            del self._records[key]
        return len(stale)
