"""Binary formats: round trips and corruption rejection."""

import numpy as np
import numpy.testing as npt
import pytest

from tacalign.errors import FormatError
from tacalign.io import (
    load_depth_image,
    load_point_cloud,
    save_depth_image,
    save_point_cloud,
)


class TestPointCloudFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-10, 10, size=(1024, 3)).astype(np.float32)
        path = tmp_path / "c.tclp"
        save_point_cloud(path, pts)
        loaded = load_point_cloud(path)
        npt.assert_array_equal(loaded.astype(np.float32), pts)
        save_point_cloud(tmp_path / "c2.tclp", loaded)
        assert path.read_bytes() == (tmp_path / "c2.tclp").read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tclp"
        path.write_bytes(b"WHAT" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_point_cloud(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "t.tclp"
        save_point_cloud(path, np.zeros((10, 3)))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_point_cloud(path)

    def test_wrong_version(self, tmp_path):
        import struct

        path = tmp_path / "v.tclp"
        save_point_cloud(path, np.zeros((2, 3)))
        data = bytearray(path.read_bytes())
        struct.pack_into("<I", data, 4, 9)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_point_cloud(path)

    def test_shape_validation_on_save(self, tmp_path):
        with pytest.raises(ValueError):
            save_point_cloud(tmp_path / "x.tclp", np.zeros((3, 4)))


class TestDepthImageFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 3.5, size=(48, 64)).astype(np.float32)
        path = tmp_path / "i.tcld"
        save_depth_image(path, img)
        loaded = load_depth_image(path)
        assert loaded.shape == (48, 64)
        npt.assert_array_equal(loaded.astype(np.float32), img)
        save_depth_image(tmp_path / "i2.tcld", loaded)
        assert path.read_bytes() == (tmp_path / "i2.tcld").read_bytes()

    def test_header_encodes_width_then_height(self, tmp_path):
        import struct

        path = tmp_path / "wh.tcld"
        save_depth_image(path, np.zeros((48, 64)))
        w, h = struct.unpack_from("<II", path.read_bytes(), 4)
        assert (w, h) == (64, 48)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tcld"
        path.write_bytes(b"ABCD" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_depth_image(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "t.tcld"
        save_depth_image(path, np.ones((8, 8)))
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(FormatError):
            load_depth_image(path)
