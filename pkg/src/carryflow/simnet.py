"""Single-clock discrete event simulator with epidemic bundle replication.

Nodes hold bundle stores and positions; contacts are derived either from a
static adjacency list or from a disc radio range over mobile positions.
While two nodes are in contact every bundle one of them holds and the other
lacks is transferred (anti-entropy), newly inserted bundles are pushed out
immediately over active contacts, and all traffic on one link shares the
medium first-come first-served. Contact state is re-evaluated on a fixed
tick; a transfer interrupted by contact loss restarts from scratch at the
next encounter.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .bundles import Bundle, BundleId, BundleStore, NodeAddress

Position = tuple[float, float]


@dataclass(frozen=True)
class LinkModel:
    """One-hop radio link: fixed latency plus serialization at a shared rate."""

    bandwidth_bps: float = 54_000_000.0
    latency_s: float = 0.020


def transfer_duration(link: LinkModel, size_bytes: int) -> float:
    """Seconds needed to move size_bytes over one hop."""
    if size_bytes < 0:
        raise ValueError("size_bytes must be non-negative")
    return link.latency_s + 8.0 * size_bytes / link.bandwidth_bps


def euclidean(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class RandomWaypoint:
    """Random waypoint mobility inside a rectangle.

    Each node walks toward a uniformly drawn destination at a uniformly drawn
    speed, pauses for a uniform time on arrival, then repeats. One RNG per
    node keeps trajectories independent of event interleaving.
    """

    def __init__(self, width: float, height: float, speed_min: float, speed_max: float,
                 pause_max: float, rngs: list) -> None:
        self.width = width
        self.height = height
        self.speed_min = speed_min
        self.speed_max = speed_max
        self.pause_max = pause_max
        self._rngs = rngs
        n = len(rngs)
        self._target = [(0.0, 0.0)] * n
        self._speed = [0.0] * n
        self._pause_left = [0.0] * n
        self._has_target = [False] * n

    def initial_positions(self) -> list[Position]:
        return [(rng.uniform(0.0, self.width), rng.uniform(0.0, self.height))
                for rng in self._rngs]

    def step(self, positions: np.ndarray, dt: float) -> None:
        for i in range(len(self._rngs)):
            x, y = self._advance_node(i, positions[i, 0], positions[i, 1], dt)
            positions[i, 0] = x
            positions[i, 1] = y

    def _advance_node(self, i: int, x: float, y: float, dt: float) -> Position:
        rng = self._rngs[i]
        while dt > 1e-12:
            if self._pause_left[i] > 0.0:
                used = min(dt, self._pause_left[i])
                self._pause_left[i] -= used
                dt -= used
                continue
            if not self._has_target[i]:
                self._target[i] = (rng.uniform(0.0, self.width), rng.uniform(0.0, self.height))
                self._speed[i] = rng.uniform(self.speed_min, self.speed_max)
                self._has_target[i] = True
            tx, ty = self._target[i]
            dist = math.hypot(tx - x, ty - y)
            reach = self._speed[i] * dt
            if reach >= dist:
                x, y = tx, ty
                dt -= dist / self._speed[i] if self._speed[i] > 0 else dt
                self._has_target[i] = False
                self._pause_left[i] = rng.uniform(0.0, self.pause_max)
            else:
                x += (tx - x) / dist * reach
                y += (ty - y) / dist * reach
                dt = 0.0
        return x, y


@dataclass
class _Transfer:
    sender: NodeAddress
    receiver: NodeAddress
    bundle: Bundle
    aborted: bool = False


class _LinkState:
    __slots__ = ("queue", "queued", "current", "synced_seq")

    def __init__(self, a: NodeAddress, b: NodeAddress) -> None:
        self.queue: deque[_Transfer] = deque()
        self.queued: set[tuple[NodeAddress, BundleId]] = set()
        self.current: Optional[_Transfer] = None
        self.synced_seq: dict[NodeAddress, int] = {a: 0, b: 0}


class World:
    """Event queue, node state, and the epidemic synchronization machinery."""

    def __init__(self, link: LinkModel, tick_interval: float = 0.5, *,
                 contact_range: Optional[float] = None,
                 adjacency: Optional[Iterable[tuple[NodeAddress, NodeAddress]]] = None,
                 mobility: Optional[RandomWaypoint] = None,
                 rating_distance: Callable[[Position, Position], float] = euclidean) -> None:
        self.link = link
        self.tick_interval = tick_interval
        self.contact_range = contact_range
        self.adjacency = {tuple(sorted(p)) for p in adjacency} if adjacency is not None else None
        self.mobility = mobility
        self.rating_distance = rating_distance
        self.now = 0.0
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0
        self.stores: dict[NodeAddress, BundleStore] = {}
        self._handlers: dict[NodeAddress, Callable[[Bundle], None]] = {}
        self._accepts: dict[NodeAddress, Callable[[Bundle], bool]] = {}
        self._addr_index: dict[NodeAddress, int] = {}
        self._positions = np.zeros((0, 2))
        self._links: dict[tuple[NodeAddress, NodeAddress], _LinkState] = {}
        self._contacts: set[tuple[NodeAddress, NodeAddress]] = set()
        self.transfers_completed = 0
        self.transfers_aborted = 0
        self.schedule(0.0, self._tick)

    # -- node registration ------------------------------------------------

    def add_node(self, addr: NodeAddress, position: Position = (0.0, 0.0),
                 handler: Optional[Callable[[Bundle], None]] = None,
                 accept: Optional[Callable[[Bundle], bool]] = None) -> BundleStore:
        if addr in self.stores:
            raise ValueError(f"duplicate node address {addr}")
        store = BundleStore()
        self.stores[addr] = store
        self._addr_index[addr] = len(self._addr_index)
        self._positions = np.vstack([self._positions, [position]])
        if handler is not None:
            self._handlers[addr] = handler
        if accept is not None:
            self._accepts[addr] = accept
        return store

    def set_handler(self, addr: NodeAddress, handler: Callable[[Bundle], None],
                    accept: Optional[Callable[[Bundle], bool]] = None) -> None:
        self._handlers[addr] = handler
        if accept is not None:
            self._accepts[addr] = accept

    def position_of(self, addr: NodeAddress) -> Position:
        row = self._positions[self._addr_index[addr]]
        return (float(row[0]), float(row[1]))

    def set_position(self, addr: NodeAddress, position: Position) -> None:
        self._positions[self._addr_index[addr]] = position

    # -- event queue -------------------------------------------------------

    def schedule(self, when: float, fn: Callable[[], None]) -> None:
        """Queue fn at simulated time `when`; same-time events run in insertion order."""
        self._seq += 1
        heapq.heappush(self._heap, (when, self._seq, fn))

    def run_until(self, t_end: float) -> None:
        while self._heap and self._heap[0][0] <= t_end:
            when, _, fn = heapq.heappop(self._heap)
            self.now = when
            fn()
        self.now = max(self.now, t_end)

    def advance(self, dt: float) -> None:
        self.run_until(self.now + dt)

    # -- contacts ----------------------------------------------------------

    def in_contact(self, a: NodeAddress, b: NodeAddress) -> bool:
        return tuple(sorted((a, b))) in self._contacts

    def _contact_pairs(self) -> set[tuple[NodeAddress, NodeAddress]]:
        if self.adjacency is not None:
            return set(self.adjacency)
        if self.contact_range is None:
            return set()
        pos = self._positions
        diff = pos[:, None, :] - pos[None, :, :]
        dist2 = np.einsum("ijk,ijk->ij", diff, diff)
        within = dist2 <= self.contact_range ** 2
        addrs = sorted(self._addr_index, key=self._addr_index.get)
        pairs = set()
        n = len(addrs)
        for i in range(n):
            row = within[self._addr_index[addrs[i]]]
            for j in range(i + 1, n):
                if row[self._addr_index[addrs[j]]]:
                    pairs.add(tuple(sorted((addrs[i], addrs[j]))))
        return pairs

    def _tick(self) -> None:
        if self.mobility is not None:
            self.mobility.step(self._positions, self.tick_interval if self.now > 0 else 0.0)
        current = self._contact_pairs()
        for pair in sorted(self._links):
            if pair not in current:
                self._close_link(pair)
        for pair in sorted(current):
            state = self._links.get(pair)
            if state is None:
                state = _LinkState(*pair)
                self._links[pair] = state
            self._scan_link(pair, state)
        self._contacts = current
        self.schedule(self.now + self.tick_interval, self._tick)

    def _close_link(self, pair: tuple[NodeAddress, NodeAddress]) -> None:
        state = self._links.pop(pair)
        if state.current is not None:
            state.current.aborted = True
            self.transfers_aborted += 1
        state.queue.clear()
        state.queued.clear()

    # -- synchronization ---------------------------------------------------

    def epidemic_sync(self, a: NodeAddress, b: NodeAddress) -> list[_Transfer]:
        """Schedule transfers so a and b converge on the union of their stores.

        The pair must currently be in contact. Returns the newly queued
        transfers; completion times follow FIFO serialization on the link.
        """
        pair = tuple(sorted((a, b)))
        if pair not in self._contacts:
            raise ValueError(f"nodes {pair} are not in contact")
        state = self._links.setdefault(pair, _LinkState(*pair))
        state.synced_seq[pair[0]] = 0
        state.synced_seq[pair[1]] = 0
        return self._scan_link(pair, state)

    def _scan_link(self, pair: tuple[NodeAddress, NodeAddress],
                   state: _LinkState) -> list[_Transfer]:
        queued = []
        for sender, receiver in (pair, (pair[1], pair[0])):
            store = self.stores[sender]
            last = state.synced_seq[sender]
            for seq, bundle in store.scan_log(last, self.now):
                t = self._maybe_enqueue(pair, state, sender, receiver, bundle)
                if t is not None:
                    queued.append(t)
            state.synced_seq[sender] = store.log_seq
        return queued

    def _maybe_enqueue(self, pair, state: _LinkState, sender: NodeAddress,
                       receiver: NodeAddress, bundle: Bundle) -> Optional[_Transfer]:
        key = (receiver, bundle.bundle_id)
        if key in state.queued:
            return None
        if bundle.bundle_id in self.stores[receiver]:
            return None
        accept = self._accepts.get(receiver)
        if accept is not None and not accept(bundle):
            return None
        transfer = _Transfer(sender, receiver, bundle)
        state.queue.append(transfer)
        state.queued.add(key)
        self._try_start(pair, state)
        return transfer

    def _try_start(self, pair, state: _LinkState) -> None:
        if state.current is not None:
            return
        while state.queue:
            transfer = state.queue.popleft()
            bundle = transfer.bundle
            if bundle.is_expired(self.now) or bundle.bundle_id in self.stores[transfer.receiver]:
                state.queued.discard((transfer.receiver, bundle.bundle_id))
                continue
            state.current = transfer
            done = self.now + transfer_duration(self.link, bundle.size_bytes)
            self.schedule(done, lambda t=transfer, p=pair, s=state: self._complete(p, s, t))
            return

    def _complete(self, pair, state: _LinkState, transfer: _Transfer) -> None:
        if transfer.aborted or self._links.get(pair) is not state:
            return
        state.current = None
        state.queued.discard((transfer.receiver, transfer.bundle.bundle_id))
        self.transfers_completed += 1
        self._deliver(transfer.receiver, transfer.bundle)
        self._try_start(pair, state)

    def _deliver(self, addr: NodeAddress, bundle: Bundle) -> None:
        if bundle.is_expired(self.now):
            return
        accept = self._accepts.get(addr)
        if accept is not None and not accept(bundle):
            return
        if not self.stores[addr].insert(bundle, self.now):
            return
        handler = self._handlers.get(addr)
        if handler is not None:
            handler(bundle)
        self._push(addr, bundle)

    def originate(self, bundle: Bundle) -> bool:
        """Insert a locally created bundle at its source node and start spreading it."""
        self._deliver(bundle.source, bundle)
        return bundle.bundle_id in self.stores[bundle.source]

    def _push(self, addr: NodeAddress, bundle: Bundle) -> None:
        # forward a fresh bundle over every active contact without waiting
        # for the next anti-entropy tick
        for pair in sorted(self._contacts):
            if addr not in pair:
                continue
            state = self._links.get(pair)
            if state is None:
                continue
            other = pair[0] if pair[1] == addr else pair[1]
            self._maybe_enqueue(pair, state, addr, other, bundle)
