"""
Tests for the binary dataset cache.
"""

import struct

import numpy as np
import pytest

from thct_net.data.cache import MAGIC, decode_split, encode_split, read_split, split_path, write_split
from thct_net.exceptions import DataError, DatasetCacheError

from tests.conftest import synthetic_splits


@pytest.fixture
def split():
    train, _ = synthetic_splits()
    return train


class TestDatasetCache:
    """Tests for writing and reading split files."""

    def test_round_trip_preserves_everything(self, split, tmp_path):
        """Test coordinates, labels, ids, names and role survive."""
        path = write_split(split_path(tmp_path, "train"), split)
        loaded = read_split(path)
        assert loaded.role == "train"
        assert loaded.class_names == split.class_names
        assert loaded.source_ids() == split.source_ids()
        np.testing.assert_array_equal(loaded.labels, split.labels)
        for a, b in zip(loaded.samples, split.samples):
            np.testing.assert_array_equal(a.coords, b.coords)
            assert a.original_frames == b.original_frames

    def test_split_path_naming(self, tmp_path):
        """Test one file per role."""
        assert split_path(tmp_path, "val") == tmp_path / "val.thctds"

    def test_creates_parent_directory(self, split, tmp_path):
        """Test nested output directories are created."""
        path = write_split(tmp_path / "a" / "b" / "train.thctds", split)
        assert path.exists()

    def test_no_temp_file_left(self, split, tmp_path):
        """Test the write goes through a temporary file that is renamed into place."""
        write_split(split_path(tmp_path, "train"), split)
        write_split(split_path(tmp_path, "train"), split)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["train.thctds"]

    def test_header_layout(self, split):
        """Test magic, version and role code at the start of the file."""
        data = encode_split(split)
        assert data[:len(MAGIC)] == MAGIC
        version, role = struct.unpack_from("<II", data, len(MAGIC))
        assert (version, role) == (1, 0)

    def test_bad_magic(self, split):
        """Test a foreign file is refused."""
        data = b"NOTDATA" + encode_split(split)[len(MAGIC):]
        with pytest.raises(DatasetCacheError, match="bad magic"):
            decode_split(data)

    def test_unsupported_version(self, split):
        """Test a future version is refused."""
        data = bytearray(encode_split(split))
        struct.pack_into("<I", data, len(MAGIC), 9)
        with pytest.raises(DatasetCacheError, match="version 9"):
            decode_split(bytes(data))

    def test_truncated(self, split):
        """Test a cut-off file raises DatasetCacheError."""
        data = encode_split(split)
        with pytest.raises(DatasetCacheError, match="truncated"):
            decode_split(data[:-5])

    def test_trailing_bytes(self, split):
        """Test extra bytes after the last record are refused."""
        with pytest.raises(DatasetCacheError, match="trailing"):
            decode_split(encode_split(split) + b"\x00\x00")

    def test_missing_file(self, tmp_path):
        """Test a missing cache is a DataError naming the path."""
        with pytest.raises(DataError, match="missing.thctds"):
            read_split(tmp_path / "missing.thctds")
