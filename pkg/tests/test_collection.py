"""Directory ingestion, item lookup and byte-range reads."""

from __future__ import annotations

import struct

import pytest

from evalserver.collection import (
    CollectionRegistry,
    ingest_directory,
    probe_mp4_duration_ms,
    resolve_byte_range,
    read_range,
)
from evalserver.errors import (
    DuplicateItemNameError,
    InvalidRangeError,
    NotFoundError,
    PathUnreadableError,
)
from evalserver.model import MediaKind

from conftest import minimal_mp4


@pytest.fixture
def media_dir(tmp_path):
    root = tmp_path / "media"
    (root / "videos").mkdir(parents=True)
    (root / "videos" / "v-09679.mp4").write_bytes(minimal_mp4(5_000))
    (root / "door-img.png").write_bytes(b"\x89PNG fake image bytes")
    (root / "clip.webm").write_bytes(b"\x1a\x45\xdf\xa3 fake webm")
    (root / "notes.txt").write_text("not media")
    return root


def test_ingest_registers_known_media(media_dir):
    report = ingest_directory(media_dir, "vbs")
    names = {item.name: item for item in report.items}
    assert set(names) == {"v-09679", "door-img", "clip"}
    assert names["v-09679"].kind is MediaKind.video
    assert names["v-09679"].duration_ms == 5_000
    assert names["door-img"].kind is MediaKind.image
    assert report.collection.name == "vbs"


def test_ingest_empty_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    report = ingest_directory(tmp_path / "empty", "nothing")
    assert report.items == []


def test_ingest_unreadable_path(tmp_path):
    with pytest.raises(PathUnreadableError):
        ingest_directory(tmp_path / "missing", "nope")


def test_duplicate_stems_rejected(tmp_path):
    root = tmp_path / "dup"
    (root / "a").mkdir(parents=True)
    (root / "b").mkdir()
    (root / "a" / "same.mp4").write_bytes(minimal_mp4())
    (root / "b" / "same.mp4").write_bytes(minimal_mp4())
    with pytest.raises(DuplicateItemNameError):
        ingest_directory(root, "dup")


def test_unprobeable_video_flagged(media_dir):
    report = ingest_directory(media_dir, "vbs")
    clip = next(item for item in report.items if item.name == "clip")
    assert clip.duration_ms == 0
    assert clip.duration_unknown
    assert any("clip.webm" in w for w in report.warnings)


def test_bad_item_names_skipped_with_warning(tmp_path):
    root = tmp_path / "odd"
    root.mkdir()
    (root / "has space.mp4").write_bytes(minimal_mp4())
    report = ingest_directory(root, "odd")
    assert report.items == []
    assert any("unusable item name" in w for w in report.warnings)


def test_ingest_is_idempotent(media_dir):
    first = ingest_directory(media_dir, "vbs")
    second = ingest_directory(media_dir, "vbs")
    assert first.collection.id == second.collection.id
    assert [i.id for i in first.items] == [i.id for i in second.items]


def test_probe_handles_garbage(tmp_path):
    garbage = tmp_path / "x.mp4"
    garbage.write_bytes(b"definitely not an mp4")
    assert probe_mp4_duration_ms(garbage) is None


def test_probe_64bit_header(tmp_path):
    mvhd_body = b"\x01" + bytes(3) + struct.pack(">QQ", 0, 0) + struct.pack(">IQ", 600, 1_200)
    mvhd = struct.pack(">I4s", 8 + len(mvhd_body), b"mvhd") + mvhd_body
    moov = struct.pack(">I4s", 8 + len(mvhd), b"moov") + mvhd
    path = tmp_path / "v1.mp4"
    path.write_bytes(moov)
    assert probe_mp4_duration_ms(path) == 2_000


# --- registry lookup -----------------------------------------------------------


def test_lookup_by_name_and_id(media_dir):
    registry = CollectionRegistry()
    report = registry.ingest(media_dir, "vbs")
    by_name = registry.get(report.collection.id, "v-09679")
    assert by_name is not None
    assert registry.get(report.collection.id, by_name.id) is by_name


def test_lookup_unknown_raises_via_require(media_dir):
    registry = CollectionRegistry()
    report = registry.ingest(media_dir, "vbs")
    assert registry.get(report.collection.id, "v-nope") is None
    with pytest.raises(NotFoundError):
        registry.require_item(report.collection.id, "v-nope")


def test_registry_doc_round_trip(media_dir):
    registry = CollectionRegistry()
    registry.ingest(media_dir, "vbs")
    doc = registry.to_doc()
    restored = CollectionRegistry.from_doc(doc)
    assert restored.to_doc() == doc


# --- byte ranges -----------------------------------------------------------------


def test_partial_range(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(bytes(range(256)) * 40)  # 10240 bytes
    rng = resolve_byte_range(10_240, 0, 1_023)
    assert rng.length == 1_024
    data = b"".join(read_range(path, rng))
    assert len(data) == 1_024
    assert data == path.read_bytes()[:1_024]


def test_range_beyond_eof_invalid():
    with pytest.raises(InvalidRangeError):
        resolve_byte_range(10_240, 10_240, None)


def test_open_ended_range_clamps_to_eof(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"abcdefgh")
    rng = resolve_byte_range(8, 4, 99)
    assert (rng.start, rng.end) == (4, 7)
    assert b"".join(read_range(path, rng)) == b"efgh"


def test_full_file_range(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"abcdefgh")
    rng = resolve_byte_range(8, None, None)
    assert b"".join(read_range(path, rng)) == b"abcdefgh"
