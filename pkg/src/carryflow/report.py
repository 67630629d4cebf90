"""Phase accounting, final-state bookkeeping, and report serialization.

Every workflow's wall clock is split into three phases: runtime (parsing,
packing, queueing, worker assignment), transmission (bundle in transit,
including store-carry-forward waiting), and execution (the service actually
running). The collector accumulates these per task while a scenario runs;
the harness freezes them into an ExperimentReport afterwards.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .bundles import BundleId, NodeAddress, format_address

RETURN_LEG = -1  # task key for the final result's trip back to the client


class Stage(Enum):
    """Where a workflow currently sits; used to classify unfinished runs."""

    SUBMITTED = "submitted"
    TRANSIT = "transit"
    QUEUED = "queued"
    PREPROCESS = "preprocess"
    EXECUTING = "executing"
    POSTPROCESS = "postprocess"
    DONE = "done"


class FinalState(Enum):
    SUCCESS = "success"
    WORKER_ERROR = "worker_error"
    TRANSMISSION = "transmission"
    RUNTIME = "runtime"
    EXECUTION = "execution"


_STAGE_TO_STATE = {
    Stage.SUBMITTED: FinalState.RUNTIME,
    Stage.TRANSIT: FinalState.TRANSMISSION,
    Stage.QUEUED: FinalState.RUNTIME,
    Stage.PREPROCESS: FinalState.RUNTIME,
    Stage.EXECUTING: FinalState.EXECUTION,
    Stage.POSTPROCESS: FinalState.RUNTIME,
    Stage.DONE: FinalState.RUNTIME,
}


@dataclass
class PhaseBreakdown:
    runtime_s: float = 0.0
    transmission_s: float = 0.0
    execution_s: float = 0.0

    @property
    def total_s(self) -> float:
        return self.runtime_s + self.transmission_s + self.execution_s


@dataclass
class _WorkflowTrack:
    client: NodeAddress
    strategy: str
    n_tasks: int
    offloaded_at: float
    stage: Stage = Stage.SUBMITTED
    status: str = "pending"
    error_class: Optional[str] = None
    error_message: str = ""
    finished_at: Optional[float] = None
    phases: dict[int, PhaseBreakdown] = field(default_factory=dict)
    return_transmission_s: float = 0.0


class Collector:
    """Accumulates phase charges and selection counts while a run executes."""

    def __init__(self) -> None:
        self.tracks: dict[str, _WorkflowTrack] = {}
        self.selections: dict[tuple[NodeAddress, NodeAddress], int] = {}
        self._pending_sends: dict[BundleId, tuple[str, int, float]] = {}
        self.expired_drops = 0
        self.malformed_offers = 0

    # -- workflow lifecycle -------------------------------------------------

    def register_workflow(self, workflow_id: str, client: NodeAddress, n_tasks: int,
                          strategy: str, now: float) -> None:
        self.tracks[workflow_id] = _WorkflowTrack(client=client, strategy=strategy,
                                                  n_tasks=n_tasks, offloaded_at=now)

    def set_stage(self, workflow_id: str, stage: Stage) -> None:
        track = self.tracks.get(workflow_id)
        if track is not None and track.status == "pending":
            track.stage = stage

    def terminal(self, workflow_id: str, status: str, now: float,
                 error_class: Optional[str] = None, error_message: str = "") -> None:
        track = self.tracks[workflow_id]
        if track.status != "pending":
            return
        track.status = status
        track.error_class = error_class
        track.error_message = error_message
        track.finished_at = now
        if status == "succeeded":
            track.stage = Stage.DONE

    # -- phase charges ------------------------------------------------------

    def charge(self, workflow_id: str, task_idx: int, phase: str, seconds: float) -> None:
        track = self.tracks.get(workflow_id)
        if track is None or seconds == 0.0:
            return
        breakdown = track.phases.setdefault(task_idx, PhaseBreakdown())
        if phase == "runtime":
            breakdown.runtime_s += seconds
        elif phase == "execution":
            breakdown.execution_s += seconds
        else:
            raise ValueError(f"unknown phase {phase!r}")

    def sent(self, bundle_id: BundleId, workflow_id: str, task_key: int, now: float) -> None:
        self._pending_sends[bundle_id] = (workflow_id, task_key, now)

    def delivered(self, bundle_id: BundleId, now: float) -> None:
        entry = self._pending_sends.pop(bundle_id, None)
        if entry is None:
            return
        workflow_id, task_key, t_sent = entry
        track = self.tracks.get(workflow_id)
        if track is None:
            return
        if task_key == RETURN_LEG:
            track.return_transmission_s += now - t_sent
        else:
            breakdown = track.phases.setdefault(task_key, PhaseBreakdown())
            breakdown.transmission_s += now - t_sent

    def selection(self, caller: NodeAddress, worker: NodeAddress) -> None:
        key = (caller, worker)
        self.selections[key] = self.selections.get(key, 0) + 1


# -- frozen reports ----------------------------------------------------------


@dataclass
class WorkflowReport:
    workflow_id: str
    client: NodeAddress
    strategy: str
    status: str
    error_class: Optional[str]
    error_message: str
    final_state: FinalState
    offloaded_at: float
    finished_at: Optional[float]
    task_phases: list[PhaseBreakdown]
    return_transmission_s: float

    @property
    def runtime_s(self) -> float:
        return sum(p.runtime_s for p in self.task_phases)

    @property
    def transmission_s(self) -> float:
        return sum(p.transmission_s for p in self.task_phases)

    @property
    def execution_s(self) -> float:
        return sum(p.execution_s for p in self.task_phases)

    @property
    def total_s(self) -> float:
        return self.runtime_s + self.transmission_s + self.execution_s


@dataclass
class ExperimentReport:
    scenario: str
    seed: int
    strategy: str
    config_digest: str
    duration_s: float
    workflows: list[WorkflowReport]
    selections: dict[tuple[NodeAddress, NodeAddress], int]
    residual_energy: dict[NodeAddress, float]
    expired_drops: int
    malformed_offers: int

    def to_obj(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "strategy": self.strategy,
            "config_digest": self.config_digest,
            "duration_s": self.duration_s,
            "expired_drops": self.expired_drops,
            "malformed_offers": self.malformed_offers,
            "workflows": [
                {
                    "workflow_id": w.workflow_id,
                    "client": format_address(w.client),
                    "strategy": w.strategy,
                    "status": w.status,
                    "error_class": w.error_class,
                    "error_message": w.error_message,
                    "final_state": w.final_state.value,
                    "offloaded_at": w.offloaded_at,
                    "finished_at": w.finished_at,
                    "return_transmission_s": w.return_transmission_s,
                    "task_phases": [
                        {"runtime_s": p.runtime_s, "transmission_s": p.transmission_s,
                         "execution_s": p.execution_s}
                        for p in w.task_phases
                    ],
                }
                for w in self.workflows
            ],
            "selections": {
                f"{format_address(caller)}:{format_address(worker)}": count
                for (caller, worker), count in sorted(self.selections.items())
            },
            "residual_energy": {
                format_address(worker): energy
                for worker, energy in sorted(self.residual_energy.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True, indent=1)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def report_from_obj(obj: dict) -> ExperimentReport:
    workflows = []
    for w in obj["workflows"]:
        workflows.append(WorkflowReport(
            workflow_id=w["workflow_id"],
            client=int(w["client"], 16),
            strategy=w["strategy"],
            status=w["status"],
            error_class=w["error_class"],
            error_message=w["error_message"],
            final_state=FinalState(w["final_state"]),
            offloaded_at=w["offloaded_at"],
            finished_at=w["finished_at"],
            task_phases=[PhaseBreakdown(p["runtime_s"], p["transmission_s"], p["execution_s"])
                         for p in w["task_phases"]],
            return_transmission_s=w["return_transmission_s"],
        ))
    selections = {}
    for key, count in obj["selections"].items():
        caller, _, worker = key.partition(":")
        selections[(int(caller, 16), int(worker, 16))] = count
    return ExperimentReport(
        scenario=obj["scenario"], seed=obj["seed"], strategy=obj["strategy"],
        config_digest=obj["config_digest"], duration_s=obj["duration_s"],
        workflows=workflows, selections=selections,
        residual_energy={int(k, 16): v for k, v in obj["residual_energy"].items()},
        expired_drops=obj["expired_drops"], malformed_offers=obj["malformed_offers"],
    )


def classify(track: _WorkflowTrack) -> FinalState:
    """Map a workflow's end-of-run status onto the five reported final states."""
    if track.status == "succeeded":
        return FinalState.SUCCESS
    if track.status == "failed":
        return FinalState.WORKER_ERROR
    # timed out or still pending at the experiment cap: report where it sat
    return _STAGE_TO_STATE[track.stage]


def freeze_workflow(workflow_id: str, track: _WorkflowTrack) -> WorkflowReport:
    phases = [track.phases.get(i, PhaseBreakdown()) for i in range(track.n_tasks)]
    return WorkflowReport(
        workflow_id=workflow_id,
        client=track.client,
        strategy=track.strategy,
        status=track.status,
        error_class=track.error_class,
        error_message=track.error_message,
        final_state=classify(track),
        offloaded_at=track.offloaded_at,
        finished_at=track.finished_at,
        task_phases=phases,
        return_transmission_s=track.return_transmission_s,
    )


def selection_entropy(counts: dict[NodeAddress, int]) -> float:
    """Shannon entropy (nats) of a worker selection histogram."""
    total = sum(counts.values())
    if total == 0:
        return 0.0
    entropy = 0.0
    for count in counts.values():
        if count:
            p = count / total
            entropy -= p * math.log(p)
    return entropy
