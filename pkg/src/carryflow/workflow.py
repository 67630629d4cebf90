"""Workflow descriptions, their text format, and travelling archives.

A workflow is an ordered list of tasks, each naming a service, its
parameters, an optional pinned worker, and optional resource requirements.
The archive is what actually moves through the network: the description
plus the files the next task needs, with exactly one cursor marking the
next task to run.

Text format, one task per line:

    # comment
    ttl=1800
    any denoise photo.img [cpu=1.0,memory=512,disk=1024,energy=40,distance=100]
    any scale ##result## [cpu=1.0,memory=512]

The worker field is a 16 hex character node address or the literal ``any``.
``##result##`` stands for the previous task's result file; it may appear at
most once per task and never in the first one.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

from .bundles import NodeAddress, format_address, parse_address

PLACEHOLDER = "##result##"

RESOURCE_METRICS = ("cpu", "memory", "disk", "energy")
ALL_METRICS = RESOURCE_METRICS + ("distance",)

DEFAULT_TTL_S = 1800.0


class WorkflowParseError(ValueError):
    """Parse failure; message names the offending line."""


@dataclass(frozen=True)
class WorkerSpec:
    """Pinned worker address, or None for just-in-time selection."""

    address: Optional[NodeAddress] = None

    @property
    def is_jit(self) -> bool:
        return self.address is None

    def format(self) -> str:
        return "any" if self.address is None else format_address(self.address)


@dataclass
class Task:
    worker: WorkerSpec
    service_name: str
    params: list[str]
    requirements: dict[str, float] = field(default_factory=dict)


@dataclass
class WorkflowDescription:
    workflow_id: str
    client: NodeAddress
    tasks: list[Task]
    ttl_seconds: float = DEFAULT_TTL_S
    created_at: float = 0.0
    cursor: int = 0

    @property
    def current_task(self) -> Task:
        return self.tasks[self.cursor]

    @property
    def finished(self) -> bool:
        return self.cursor >= len(self.tasks)

    def expires_at(self) -> float:
        return self.created_at + self.ttl_seconds

    def is_expired(self, now: float) -> bool:
        if math.isinf(self.ttl_seconds):
            return False
        return now > self.expires_at()


def _parse_requirements(text: str, lineno: int) -> dict[str, float]:
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise WorkflowParseError(f"line {lineno}: malformed requirements {text!r}")
    reqs: dict[str, float] = {}
    inner = body[1:-1].strip()
    if not inner:
        return reqs
    for part in inner.split(","):
        if "=" not in part:
            raise WorkflowParseError(f"line {lineno}: malformed requirement entry {part!r}")
        key, _, raw = part.partition("=")
        key = key.strip()
        if key not in ALL_METRICS:
            raise WorkflowParseError(f"line {lineno}: unknown requirement metric {key!r}")
        try:
            value = float(raw)
        except ValueError:
            raise WorkflowParseError(f"line {lineno}: requirement {key} is not a number: {raw!r}")
        if not value > 0:
            raise WorkflowParseError(f"line {lineno}: requirement {key} must be positive")
        reqs[key] = value
    return reqs


def parse(text: str, *, workflow_id: str = "", client: NodeAddress = 0) -> WorkflowDescription:
    """Parse the workflow text format. Raises WorkflowParseError on any defect."""
    tasks: list[Task] = []
    ttl = DEFAULT_TTL_S
    seen_body = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not seen_body and "=" in line.split()[0]:
            key, _, value = line.partition("=")
            if key.strip() != "ttl":
                raise WorkflowParseError(f"line {lineno}: unknown directive {key.strip()!r}")
            try:
                ttl = float(value)
            except ValueError:
                raise WorkflowParseError(f"line {lineno}: ttl is not a number: {value!r}")
            if not (ttl > 0):
                raise WorkflowParseError(f"line {lineno}: ttl must be positive")
            seen_body = True
            continue
        seen_body = True
        fields = line.split()
        if len(fields) < 2:
            raise WorkflowParseError(f"line {lineno}: expected '<worker> <service> ...'")
        worker_field, service_name = fields[0], fields[1]
        rest = fields[2:]
        requirements: dict[str, float] = {}
        if rest and rest[-1].startswith("["):
            requirements = _parse_requirements(rest[-1], lineno)
            rest = rest[:-1]
        if worker_field == "any":
            worker = WorkerSpec(None)
        else:
            try:
                worker = WorkerSpec(parse_address(worker_field))
            except ValueError as exc:
                raise WorkflowParseError(f"line {lineno}: {exc}")
        placeholders = sum(p.count(PLACEHOLDER) for p in rest)
        if placeholders > 1:
            raise WorkflowParseError(f"line {lineno}: {PLACEHOLDER} may appear at most once")
        if placeholders and not tasks:
            raise WorkflowParseError(f"line {lineno}: {PLACEHOLDER} is not allowed in the first task")
        tasks.append(Task(worker=worker, service_name=service_name,
                          params=list(rest), requirements=requirements))
    if not tasks:
        raise WorkflowParseError("workflow has no tasks")
    return WorkflowDescription(workflow_id=workflow_id, client=client,
                               tasks=tasks, ttl_seconds=ttl)


def format_description(desc: WorkflowDescription) -> str:
    """Inverse of parse for the task list (header carries the ttl)."""
    lines = [f"ttl={desc.ttl_seconds:g}"]
    for task in desc.tasks:
        parts = [task.worker.format(), task.service_name] + list(task.params)
        if task.requirements:
            body = ",".join(f"{k}={task.requirements[k]:g}" for k in ALL_METRICS
                            if k in task.requirements)
            parts.append(f"[{body}]")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def substitute_result(task: Task, result_name: str) -> Task:
    """Replace the placeholder in one task's params with a concrete file name."""
    params = [p.replace(PLACEHOLDER, result_name) for p in task.params]
    return Task(worker=task.worker, service_name=task.service_name,
                params=params, requirements=dict(task.requirements))


# -- files and archives ----------------------------------------------------


@dataclass(frozen=True)
class FileStub:
    """A file whose bytes are a deterministic filler pattern of a given size.

    Keeps multi-megabyte payloads out of memory during simulation while
    still defining exact wire bytes for packing.
    """

    size_bytes: int
    tag: str = ""

    def materialize(self) -> bytes:
        pattern = (self.tag.encode("utf-8") or b"\x00") + b"\x00"
        reps = self.size_bytes // len(pattern) + 1
        return (pattern * reps)[: self.size_bytes]


FileContent = Union[bytes, FileStub]


def file_size(content: FileContent) -> int:
    if isinstance(content, FileStub):
        return content.size_bytes
    return len(content)


def file_bytes(content: FileContent) -> bytes:
    if isinstance(content, FileStub):
        return content.materialize()
    return content


@dataclass
class Archive:
    """Everything a worker needs to run the next task, in one transferable unit."""

    description: WorkflowDescription
    files: dict[str, FileContent] = field(default_factory=dict)
    error_log: str = ""
    # bookkeeping for the retry path: who picked the current task's worker,
    # and whether that pick already was the retry
    assigned_by: NodeAddress = 0
    retried: bool = False

    def equivalent(self, other: "Archive") -> bool:
        mine = json.dumps(_desc_to_obj(self.description), sort_keys=True)
        theirs = json.dumps(_desc_to_obj(other.description), sort_keys=True)
        if mine != theirs:
            return False
        if self.error_log != other.error_log:
            return False
        if sorted(self.files) != sorted(other.files):
            return False
        return all(file_bytes(self.files[k]) == file_bytes(other.files[k]) for k in self.files)


_MAGIC = b"CFA1"
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


def _desc_to_obj(desc: WorkflowDescription) -> dict:
    return {
        "workflow_id": desc.workflow_id,
        "client": desc.client,
        "ttl_seconds": desc.ttl_seconds if not math.isinf(desc.ttl_seconds) else "inf",
        "created_at": desc.created_at,
        "cursor": desc.cursor,
        "tasks": [
            {
                "worker": task.worker.address,
                "service": task.service_name,
                "params": task.params,
                "requirements": task.requirements,
            }
            for task in desc.tasks
        ],
    }


def _desc_from_obj(obj: dict) -> WorkflowDescription:
    ttl = obj["ttl_seconds"]
    return WorkflowDescription(
        workflow_id=obj["workflow_id"],
        client=obj["client"],
        ttl_seconds=math.inf if ttl == "inf" else float(ttl),
        created_at=obj["created_at"],
        cursor=obj["cursor"],
        tasks=[
            Task(worker=WorkerSpec(t["worker"]), service_name=t["service"],
                 params=list(t["params"]), requirements=dict(t["requirements"]))
            for t in obj["tasks"]
        ],
    )


def _desc_blob(archive: Archive) -> bytes:
    meta = {
        "description": _desc_to_obj(archive.description),
        "error_log": archive.error_log,
        "assigned_by": archive.assigned_by,
        "retried": archive.retried,
    }
    return json.dumps(meta, sort_keys=True).encode("utf-8")


def packed_size(archive: Archive) -> int:
    """Wire size of pack(archive) without materializing file contents."""
    total = len(_MAGIC) + _U32.size + len(_desc_blob(archive)) + _U32.size
    for name in sorted(archive.files):
        total += _U32.size + len(name.encode("utf-8")) + _U64.size
        total += file_size(archive.files[name])
    return total


def pack(archive: Archive) -> bytes:
    """Serialize an archive; the result length always equals packed_size()."""
    parts = [_MAGIC]
    blob = _desc_blob(archive)
    parts.append(_U32.pack(len(blob)))
    parts.append(blob)
    parts.append(_U32.pack(len(archive.files)))
    for name in sorted(archive.files):
        raw_name = name.encode("utf-8")
        data = file_bytes(archive.files[name])
        parts.append(_U32.pack(len(raw_name)))
        parts.append(raw_name)
        parts.append(_U64.pack(len(data)))
        parts.append(data)
    return b"".join(parts)


class ArchiveFormatError(ValueError):
    """Raised when a packed archive is truncated or corrupt."""


def unpack(data: bytes) -> Archive:
    if data[: len(_MAGIC)] != _MAGIC:
        raise ArchiveFormatError("bad archive magic")
    view = memoryview(data)
    off = len(_MAGIC)

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise ArchiveFormatError(f"archive truncated at offset {off}")
        chunk = view[off: off + n]
        off += n
        return chunk

    blob_len = _U32.unpack(take(_U32.size))[0]
    try:
        meta = json.loads(bytes(take(blob_len)).decode("utf-8"))
        desc = _desc_from_obj(meta["description"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ArchiveFormatError(f"bad archive metadata: {exc}") from exc
    file_count = _U32.unpack(take(_U32.size))[0]
    files: dict[str, FileContent] = {}
    for _ in range(file_count):
        name_len = _U32.unpack(take(_U32.size))[0]
        name = bytes(take(name_len)).decode("utf-8")
        data_len = _U64.unpack(take(_U64.size))[0]
        files[name] = bytes(take(data_len))
    if off != len(view):
        raise ArchiveFormatError(f"{len(view) - off} trailing bytes after archive")
    return Archive(description=desc, files=files, error_log=meta["error_log"],
                   assigned_by=meta["assigned_by"], retried=meta["retried"])
