"""One network participant: store, offer view, worker engine, client role.

The node owns the glue: it announces its services on a fixed period, folds
received offers into its database, dispatches addressed bundles to the
worker or client runtime, and honors cleanup markers by purging everything
a finished workflow left behind. Nodes remember which workflows were
cleaned so anti-entropy cannot re-plant stale copies on them.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .announce import (CapabilityVector, OfferDatabase, build_offer_bundle,
                       DEFAULT_ANNOUNCE_INTERVAL_S, DEFAULT_OFFER_EXPIRY_S)
from .assignment import DEFAULT_WEIGHTS, Strategy, validate_weights
from .bundles import BROADCAST, Bundle, BundleKind, NodeAddress
from .client import ClientRuntime
from .report import Collector, Stage
from .runtime import (ErrorClass, ErrorReport, FaultPlan, ServiceDefinition,
                      WorkerRuntime)
from .simnet import Position, World
from .workflow import Archive, WorkflowDescription, packed_size

CLEANUP_MARKER_BYTES = 64


@dataclass
class NodeConfig:
    strategy: Strategy = Strategy.BEST
    weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    preprocess_s: float = 0.05
    postprocess_s: float = 0.6
    announce_interval_s: float = DEFAULT_ANNOUNCE_INTERVAL_S
    offer_expiry_s: float = DEFAULT_OFFER_EXPIRY_S

    def __post_init__(self) -> None:
        self.weights = validate_weights(self.weights)


class Node:
    """Full protocol stack of one address, wired into a World."""

    def __init__(self, address: NodeAddress, world: World, collector: Collector,
                 config: NodeConfig, caps: CapabilityVector,
                 services: dict[str, ServiceDefinition], *, seed: str = "0",
                 position: Position = (0.0, 0.0),
                 fault_plan: Optional[FaultPlan] = None) -> None:
        self.address = address
        self.world = world
        self.collector = collector
        self.config = config
        self.caps = caps
        self.cleaned: set[str] = set()
        self.offer_db = OfferDatabase(expiry_s=config.offer_expiry_s)
        self.select_rng = random.Random(f"{seed}:select:{address}")
        self.exec_rng = random.Random(f"{seed}:exec:{address}")
        self.fault_rng = random.Random(f"{seed}:fault:{address}")
        self.worker = WorkerRuntime(self, services, fault_plan)
        self.client = ClientRuntime(self)
        self._bundle_seq = 0
        world.add_node(address, position=position, handler=self.on_bundle,
                       accept=self.accepts)

    def position(self) -> Position:
        return self.world.position_of(self.address)

    # -- announcements ---------------------------------------------------------

    def start_announcing(self) -> None:
        """Broadcast offers now and on every announce interval from here on."""
        self._announce()

    def _announce(self) -> None:
        now = self.world.now
        if self.worker.services:
            self.caps.position = self.position()
            bundle = build_offer_bundle(self._next_bundle_id(), self.address, now,
                                        self.caps,
                                        [(svc.name, svc.param_count) for svc in
                                         sorted(self.worker.services.values(),
                                                key=lambda s: s.name)],
                                        expiry_s=self.config.offer_expiry_s)
            if bundle is not None:
                self.world.originate(bundle)
        self.world.schedule(now + self.config.announce_interval_s, self._announce)

    # -- bundle plumbing ---------------------------------------------------------

    def _next_bundle_id(self):
        self._bundle_seq += 1
        return (self.address, self._bundle_seq)

    def accepts(self, bundle: Bundle) -> bool:
        """Refuse re-planting of bundles from workflows this node already cleaned."""
        if bundle.kind is BundleKind.CLEANUP_MARKER:
            return True
        return bundle.workflow_id is None or bundle.workflow_id not in self.cleaned

    def on_bundle(self, bundle: Bundle) -> None:
        now = self.world.now
        if bundle.kind is BundleKind.OFFER:
            before = self.offer_db.malformed_dropped
            self.offer_db.ingest_bundle(bundle, now)
            self.collector.malformed_offers += self.offer_db.malformed_dropped - before
            return
        if bundle.kind is BundleKind.CLEANUP_MARKER:
            self.on_cleanup(str(bundle.payload))
            return
        if bundle.destination != self.address:
            return
        self.collector.delivered(bundle.bundle_id, now)
        if bundle.kind is BundleKind.WORKFLOW_ARCHIVE:
            self.worker.on_archive(bundle.payload, now)
        elif bundle.kind is BundleKind.RESULT_ARCHIVE:
            self.client.on_result(bundle.payload)
        elif bundle.kind is BundleKind.ERROR_ARCHIVE:
            self._route_error(bundle.payload)

    def _route_error(self, report: ErrorReport) -> None:
        archive = report.archive
        desc = archive.description
        task = desc.current_task if not desc.finished else None
        retryable = (task is not None and task.worker.is_jit and not archive.retried
                     and archive.assigned_by == self.address
                     and report.error.error_class is not ErrorClass.WORKER_SELECTION)
        if retryable:
            self.worker.on_error_report(report)
        elif desc.client == self.address:
            self.client.on_error(report)

    # -- sending -----------------------------------------------------------------

    def _remaining_ttl(self, desc: WorkflowDescription) -> float:
        if math.isinf(desc.ttl_seconds):
            return math.inf
        return max(0.0, desc.expires_at() - self.world.now)

    def send_archive(self, kind: BundleKind, archive: Archive, dest: NodeAddress,
                     task_key: int) -> None:
        now = self.world.now
        desc = archive.description
        bundle = Bundle(bundle_id=self._next_bundle_id(), source=self.address,
                        destination=dest, kind=kind, payload=archive,
                        size_bytes=packed_size(archive), created_at=now,
                        ttl_seconds=self._remaining_ttl(desc),
                        workflow_id=desc.workflow_id)
        self.collector.sent(bundle.bundle_id, desc.workflow_id, task_key, now)
        self.collector.set_stage(desc.workflow_id, Stage.TRANSIT)
        self.world.originate(bundle)

    def send_error(self, report: ErrorReport, dest: NodeAddress) -> None:
        now = self.world.now
        desc = report.archive.description
        bundle = Bundle(bundle_id=self._next_bundle_id(), source=self.address,
                        destination=dest, kind=BundleKind.ERROR_ARCHIVE, payload=report,
                        size_bytes=packed_size(report.archive), created_at=now,
                        ttl_seconds=self._remaining_ttl(desc),
                        workflow_id=desc.workflow_id)
        self.collector.sent(bundle.bundle_id, desc.workflow_id, report.error.task_index, now)
        self.collector.set_stage(desc.workflow_id, Stage.TRANSIT)
        self.world.originate(bundle)

    def hand_error_to_client(self, report: ErrorReport) -> None:
        """Terminal error path: deliver locally when this node is the client."""
        desc = report.archive.description
        if desc.client == self.address:
            self.client.on_error(report)
        else:
            self.send_error(report, desc.client)

    def send_cleanup(self, desc: WorkflowDescription) -> None:
        bundle = Bundle(bundle_id=self._next_bundle_id(), source=self.address,
                        destination=BROADCAST, kind=BundleKind.CLEANUP_MARKER,
                        payload=desc.workflow_id,
                        size_bytes=CLEANUP_MARKER_BYTES + len(desc.workflow_id),
                        created_at=self.world.now, ttl_seconds=desc.ttl_seconds,
                        workflow_id=desc.workflow_id)
        self.world.originate(bundle)

    # -- cleanup -------------------------------------------------------------------

    def on_cleanup(self, workflow_id: str) -> None:
        if workflow_id in self.cleaned:
            return
        self.cleaned.add(workflow_id)
        store = self.world.stores[self.address]
        store.remove_where(lambda b: b.workflow_id == workflow_id
                           and b.kind is not BundleKind.CLEANUP_MARKER)
        self.worker.on_cleanup(workflow_id)
