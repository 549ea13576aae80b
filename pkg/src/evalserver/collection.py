"""Test-collection management: directory ingestion, lookup, byte ranges.

Identity is content-path based (collection id from the collection name,
item id from collection id + relative path), so re-ingesting an unchanged
directory reproduces the exact same ids. Video durations are probed from
mp4 container metadata; unprobeable videos keep duration 0 and a warning
flag.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

from .errors import (
    DuplicateItemNameError,
    InvalidRangeError,
    NotFoundError,
    PathUnreadableError,
)
from .model import ITEM_NAME_RE, ItemResolver, MediaCollection, MediaItem, MediaKind

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}
VIDEO_EXTENSIONS = {".mp4", ".webm"}


def _digest(*parts: str) -> str:
    return hashlib.sha256("\x00".join(parts).encode("utf-8")).hexdigest()[:16]


def collection_id_for(name: str) -> str:
    return _digest("collection", name)


def item_id_for(collection_id: str, relative_path: str) -> str:
    return _digest("item", collection_id, relative_path)


def probe_mp4_duration_ms(path: Path) -> int | None:
    """Read the duration from an mp4 movie header box, if one exists."""
    try:
        with open(path, "rb") as fh:
            return _scan_boxes(fh, 0, path.stat().st_size)
    except (OSError, struct.error):
        return None


def _scan_boxes(fh, start: int, end: int, depth: int = 0) -> int | None:
    if depth > 4:
        return None
    offset = start
    while offset + 8 <= end:
        fh.seek(offset)
        header = fh.read(8)
        if len(header) < 8:
            return None
        (size,) = struct.unpack(">I", header[:4])
        box_type = header[4:8]
        header_len = 8
        if size == 1:
            (size,) = struct.unpack(">Q", fh.read(8))
            header_len = 16
        elif size == 0:
            size = end - offset
        if size < header_len:
            return None
        if box_type == b"moov":
            found = _scan_boxes(fh, offset + header_len, offset + size, depth + 1)
            if found is not None:
                return found
        elif box_type == b"mvhd":
            version = fh.read(1)
            if not version:
                return None
            if version[0] == 1:
                fh.seek(offset + header_len + 4 + 16)
                timescale, duration = struct.unpack(">IQ", fh.read(12))
            else:
                fh.seek(offset + header_len + 4 + 8)
                timescale, duration = struct.unpack(">II", fh.read(8))
            if timescale == 0:
                return None
            return int(duration * 1000 // timescale)
        offset += size
    return None


@dataclass
class IngestReport:
    collection: MediaCollection
    items: list[MediaItem]
    warnings: list[str] = field(default_factory=list)


def ingest_directory(path: str | Path, collection_name: str) -> IngestReport:
    """Register every known media file under ``path`` as a collection.

    Item names are file stems and must be unique across the whole tree;
    files with unusable names are skipped with a warning rather than
    failing the run.
    """
    root = Path(path)
    if not root.is_dir():
        raise PathUnreadableError(f"{root} is not a readable directory")
    collection_id = collection_id_for(collection_name)
    items: list[MediaItem] = []
    warnings: list[str] = []
    seen_names: dict[str, str] = {}
    try:
        files = sorted(p for p in root.rglob("*") if p.is_file())
    except OSError as exc:
        raise PathUnreadableError(str(exc)) from exc
    for file in files:
        suffix = file.suffix.lower()
        if suffix in IMAGE_EXTENSIONS:
            kind = MediaKind.image
        elif suffix in VIDEO_EXTENSIONS:
            kind = MediaKind.video
        else:
            continue
        name = file.stem
        relative = file.relative_to(root).as_posix()
        if not ITEM_NAME_RE.match(name):
            warnings.append(f"skipped {relative}: unusable item name")
            continue
        if name in seen_names:
            raise DuplicateItemNameError(f"{name!r} appears at {seen_names[name]} and {relative}")
        seen_names[name] = relative
        duration_ms = 0
        duration_unknown = False
        if kind is MediaKind.video:
            probed = probe_mp4_duration_ms(file) if suffix == ".mp4" else None
            if probed is None:
                duration_unknown = True
                warnings.append(f"{relative}: video duration unknown")
            else:
                duration_ms = probed
        items.append(
            MediaItem(
                id=item_id_for(collection_id, relative),
                collection_id=collection_id,
                name=name,
                kind=kind,
                duration_ms=duration_ms,
                location=relative,
                duration_unknown=duration_unknown,
            )
        )
    collection = MediaCollection(
        id=collection_id,
        name=collection_name,
        base_path=str(root),
        items=tuple(item.id for item in items),
    )
    return IngestReport(collection, items, warnings)


class CollectionRegistry(ItemResolver):
    """All known collections; the resolver the engine and API share."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._collections: dict[str, MediaCollection] = {}
        self._items: dict[str, dict[str, MediaItem]] = {}
        self._by_name: dict[str, dict[str, MediaItem]] = {}

    def register(self, collection: MediaCollection, items: list[MediaItem]) -> None:
        with self._lock:
            self._collections[collection.id] = collection
            self._items[collection.id] = {item.id: item for item in items}
            self._by_name[collection.id] = {item.name: item for item in items}

    def ingest(self, path: str | Path, collection_name: str) -> IngestReport:
        report = ingest_directory(path, collection_name)
        self.register(report.collection, report.items)
        return report

    def has_collection(self, collection_id: str) -> bool:
        return collection_id in self._collections

    def collection(self, collection_id: str) -> MediaCollection:
        try:
            return self._collections[collection_id]
        except KeyError:
            raise NotFoundError(f"no collection {collection_id!r}") from None

    def collections(self) -> list[MediaCollection]:
        return list(self._collections.values())

    def get(self, collection_id: str, name_or_id: str) -> MediaItem | None:
        items = self._items.get(collection_id)
        if items is None:
            return None
        # Resolution order: id first, then exact name.
        return items.get(name_or_id) or self._by_name[collection_id].get(name_or_id)

    def require_item(self, collection_id: str, name_or_id: str) -> MediaItem:
        item = self.get(collection_id, name_or_id)
        if item is None:
            raise NotFoundError(f"no item {name_or_id!r} in collection {collection_id!r}")
        return item

    def item_path(self, item: MediaItem) -> Path:
        return Path(self.collection(item.collection_id).base_path) / item.location

    def items_of(self, collection_id: str) -> list[MediaItem]:
        return list(self._items.get(collection_id, {}).values())

    # -- persistence as a plain JSON document

    def to_doc(self) -> dict[str, Any]:
        return {
            "collections": [
                {
                    "id": c.id,
                    "name": c.name,
                    "basePath": c.base_path,
                    "items": [
                        {
                            "id": i.id,
                            "name": i.name,
                            "kind": i.kind.value,
                            "durationMs": i.duration_ms,
                            "location": i.location,
                            "durationUnknown": i.duration_unknown,
                        }
                        for i in self.items_of(c.id)
                    ],
                }
                for c in self.collections()
            ]
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "CollectionRegistry":
        registry = cls()
        for c in doc.get("collections", []):
            items = [
                MediaItem(
                    id=i["id"],
                    collection_id=c["id"],
                    name=i["name"],
                    kind=MediaKind(i["kind"]),
                    duration_ms=int(i.get("durationMs", 0)),
                    location=i.get("location", ""),
                    duration_unknown=bool(i.get("durationUnknown", False)),
                )
                for i in c.get("items", [])
            ]
            registry.register(
                MediaCollection(
                    id=c["id"],
                    name=c["name"],
                    base_path=c["basePath"],
                    items=tuple(i.id for i in items),
                ),
                items,
            )
        return registry


@dataclass(frozen=True)
class ByteRange:
    start: int
    end: int  # inclusive, HTTP style
    total: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def resolve_byte_range(total: int, start: int | None, end: int | None) -> ByteRange:
    """Clamp a requested range against the file size, HTTP semantics."""
    if total == 0:
        raise InvalidRangeError("file is empty")
    if start is None:
        start = 0
    if start >= total or start < 0:
        raise InvalidRangeError(f"range start {start} outside 0..{total - 1}")
    if end is None or end >= total:
        end = total - 1
    if end < start:
        raise InvalidRangeError(f"range end {end} before start {start}")
    return ByteRange(start, end, total)


def read_range(path: Path, byte_range: ByteRange, chunk_size: int = 64 * 1024) -> Iterator[bytes]:
    with open(path, "rb") as fh:
        fh.seek(byte_range.start)
        remaining = byte_range.length
        while remaining > 0:
            chunk = fh.read(min(chunk_size, remaining))
            if not chunk:
                break
            remaining -= len(chunk)
            yield chunk
