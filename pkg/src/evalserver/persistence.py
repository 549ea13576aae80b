"""Durable event log per evaluation, snapshots, replay and result export.

Layout: one directory per evaluation holding ``events.log`` (magic header,
then length-prefixed CRC-checked canonical-JSON frames) plus periodic
``snapshot-<seq>.json`` files. Appends are flushed before a command is
acknowledged; an optional fsync guards against power loss. A torn final
frame can only belong to an unacknowledged command and is truncated away
on open; a gap or checksum failure anywhere else is a corrupt log.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import zlib
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .errors import CorruptLogError, StorageFailureError, UnknownEvaluationError
from .events import EventRecord, canonical_json, decode_event, encode_event
from .lifecycle import Evaluation, EvaluationEngine, fold_events

LOG_MAGIC = b"EVLOG001"
LOG_NAME = "events.log"
_FRAME_HEAD = struct.Struct(">I")
_FRAME_CRC = struct.Struct(">I")


class MemoryEventStore:
    """In-process store for tests and throwaway simulations."""

    def __init__(self) -> None:
        self._records: list[EventRecord] = []
        self.snapshots: list[tuple[int, dict[str, Any]]] = []

    def last_seq(self) -> int:
        return self._records[-1].seq if self._records else 0

    def append(self, records: Sequence[EventRecord]) -> None:
        seq = self.last_seq()
        for record in records:
            seq += 1
            if record.seq != seq:
                raise StorageFailureError(f"non-contiguous seq {record.seq}, expected {seq}")
        self._records.extend(records)

    def read(self, from_seq: int = 1, to_seq: int | None = None) -> Iterator[EventRecord]:
        for record in self._records:
            if record.seq < from_seq:
                continue
            if to_seq is not None and record.seq > to_seq:
                break
            yield record

    def save_snapshot(self, up_to_seq: int, state_doc: dict[str, Any]) -> None:
        self.snapshots.append((up_to_seq, state_doc))

    def load_snapshot(self) -> tuple[int, dict[str, Any]] | None:
        return self.snapshots[-1] if self.snapshots else None


class FileEventStore:
    """Append-only on-disk log for one evaluation."""

    def __init__(self, directory: str | Path, *, fsync: bool = True) -> None:
        self.directory = Path(directory)
        self.fsync = fsync
        self.directory.mkdir(parents=True, exist_ok=True)
        self._path = self.directory / LOG_NAME
        self._last_seq = 0
        self._recover_tail()
        self._handle = open(self._path, "ab")

    def close(self) -> None:
        self._handle.close()

    def _recover_tail(self) -> None:
        """Scan the log once: learn last seq, truncate a torn final frame."""
        if not self._path.exists():
            with open(self._path, "wb") as fh:
                fh.write(LOG_MAGIC)
            return
        with open(self._path, "rb") as fh:
            magic = fh.read(len(LOG_MAGIC))
            if magic != LOG_MAGIC:
                raise CorruptLogError(f"{self._path}: bad magic header")
            good_end = fh.tell()
            size = self._path.stat().st_size
            while True:
                head = fh.read(_FRAME_HEAD.size)
                if not head:
                    break
                if len(head) < _FRAME_HEAD.size:
                    break  # torn length prefix
                (length,) = _FRAME_HEAD.unpack(head)
                body = fh.read(length)
                crc_raw = fh.read(_FRAME_CRC.size)
                if len(body) < length or len(crc_raw) < _FRAME_CRC.size:
                    break  # torn frame
                (crc,) = _FRAME_CRC.unpack(crc_raw)
                if zlib.crc32(body) != crc:
                    if fh.tell() == size:
                        break  # torn final frame: bytes hit disk partially
                    raise CorruptLogError(f"{self._path}: checksum mismatch mid-log")
                record = decode_event(body)
                if record.seq != self._last_seq + 1:
                    raise CorruptLogError(
                        f"{self._path}: expected seq {self._last_seq + 1}, found {record.seq}"
                    )
                self._last_seq = record.seq
                good_end = fh.tell()
        if good_end < size:
            with open(self._path, "r+b") as fh:
                fh.truncate(good_end)

    def last_seq(self) -> int:
        return self._last_seq

    def append(self, records: Sequence[EventRecord]) -> None:
        frames = bytearray()
        seq = self._last_seq
        for record in records:
            seq += 1
            if record.seq != seq:
                raise StorageFailureError(f"non-contiguous seq {record.seq}, expected {seq}")
            body = encode_event(record)
            frames += _FRAME_HEAD.pack(len(body))
            frames += body
            frames += _FRAME_CRC.pack(zlib.crc32(body))
        try:
            self._handle.write(frames)
            self._handle.flush()
            if self.fsync:
                os.fsync(self._handle.fileno())
        except OSError as exc:
            raise StorageFailureError(str(exc)) from exc
        self._last_seq = seq

    def read(self, from_seq: int = 1, to_seq: int | None = None) -> Iterator[EventRecord]:
        with open(self._path, "rb") as fh:
            if fh.read(len(LOG_MAGIC)) != LOG_MAGIC:
                raise CorruptLogError(f"{self._path}: bad magic header")
            expected = 0
            while True:
                head = fh.read(_FRAME_HEAD.size)
                if len(head) < _FRAME_HEAD.size:
                    break
                (length,) = _FRAME_HEAD.unpack(head)
                body = fh.read(length)
                crc_raw = fh.read(_FRAME_CRC.size)
                if len(body) < length or len(crc_raw) < _FRAME_CRC.size:
                    break
                (crc,) = _FRAME_CRC.unpack(crc_raw)
                if zlib.crc32(body) != crc:
                    raise CorruptLogError(f"{self._path}: checksum mismatch")
                record = decode_event(body)
                expected += 1
                if record.seq != expected:
                    raise CorruptLogError(f"{self._path}: expected seq {expected}, found {record.seq}")
                if record.seq < from_seq:
                    continue
                if to_seq is not None and record.seq > to_seq:
                    break
                yield record

    # -- snapshots

    def _snapshot_path(self, seq: int) -> Path:
        return self.directory / f"snapshot-{seq:08d}.json"

    def save_snapshot(self, up_to_seq: int, state_doc: dict[str, Any]) -> None:
        body = canonical_json(state_doc)
        doc = {
            "upToSeq": up_to_seq,
            "crc": zlib.crc32(body),
            "state": state_doc,
        }
        tmp = self._snapshot_path(up_to_seq).with_suffix(".tmp")
        try:
            tmp.write_bytes(canonical_json(doc))
            tmp.replace(self._snapshot_path(up_to_seq))
        except OSError as exc:
            raise StorageFailureError(str(exc)) from exc

    def load_snapshot(self) -> tuple[int, dict[str, Any]] | None:
        """Newest readable snapshot, or None (callers fall back to full replay)."""
        candidates = sorted(self.directory.glob("snapshot-*.json"), reverse=True)
        for path in candidates:
            try:
                doc = json.loads(path.read_bytes())
                if doc["crc"] != zlib.crc32(canonical_json(doc["state"])):
                    continue
                return int(doc["upToSeq"]), doc["state"]
            except (OSError, ValueError, KeyError):
                continue
        return None


def replay(store: Any, up_to_seq: int | None = None) -> Evaluation:
    """Reconstruct an evaluation by folding its full event stream."""
    return fold_events(store.read(to_seq=up_to_seq))


def recover_state(store: Any) -> Evaluation:
    """Startup path: newest snapshot plus tail replay, else full replay."""
    snapshot = store.load_snapshot()
    if snapshot is not None:
        up_to_seq, state_doc = snapshot
        try:
            base = Evaluation.from_doc(state_doc)
        except (KeyError, ValueError):
            return replay(store)
        return fold_events(store.read(from_seq=up_to_seq + 1), base=base)
    return replay(store)


def evaluations_root(data_dir: str | Path) -> Path:
    return Path(data_dir) / "evaluations"


def evaluation_dir(data_dir: str | Path, evaluation_id: str) -> Path:
    return evaluations_root(data_dir) / evaluation_id


def list_evaluation_ids(data_dir: str | Path) -> list[str]:
    root = evaluations_root(data_dir)
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir() if (p / LOG_NAME).exists())


# -- exports ---------------------------------------------------------------

SCORES_CSV_COLUMNS = ["evaluation", "team", "group", "task", "value"]


def export_scores_csv(engine: EvaluationEngine) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=SCORES_CSV_COLUMNS)
    writer.writeheader()
    for row in engine.score_rows():
        writer.writerow(row)
    return buffer.getvalue()


def export_full_json(engine: EvaluationEngine) -> dict[str, Any]:
    """Everything about a run: frozen template, tasks, submissions, verdicts
    and the complete audit trail. Round-trips through import_full_json."""
    with engine._lock:
        return {
            "formatVersion": 1,
            "evaluation": engine.state.to_doc(),
            "events": [record.to_doc() for record in engine.store.read()],
        }


def import_full_json(doc: Mapping[str, Any]) -> Evaluation:
    """Rebuild a read-only evaluation from a full export by replaying it."""
    records = [EventRecord.from_doc(d) for d in doc.get("events", [])]
    if not records:
        raise UnknownEvaluationError("export document carries no events")
    state = fold_events(records)
    exported = doc.get("evaluation")
    if exported is not None and canonical_json(exported) != canonical_json(state.to_doc()):
        raise CorruptLogError("export document state does not match its event trail")
    return state
