import json

import numpy as np
import pytest

from splatuq import io
from splatuq.fisher import CovDiag, FisherDiag
from splatuq.presets import PRESETS, get_preset
from splatuq.renderer import CameraPose
from splatuq.scene import flatten

from conftest import random_scene


class TestScene:
    @pytest.mark.parametrize("name", PRESETS)
    def test_round_trip_presets(self, tmp_path, name):
        scene = get_preset(name).scene
        io.save_scene(scene, tmp_path / "s.json")
        assert io.load_scene(tmp_path / "s.json") == scene

    def test_round_trip_random_reals(self, tmp_path, rng):
        scene = random_scene(rng, 6, 3)
        io.save_scene(scene, tmp_path / "s.json")
        np.testing.assert_array_equal(flatten(io.load_scene(tmp_path / "s.json")), flatten(scene))

    def test_missing_field(self, tmp_path, rng):
        data = io.scene_to_dict(random_scene(rng, 2))
        del data["splats"][1]["phi"]
        (tmp_path / "s.json").write_text(json.dumps(data))
        with pytest.raises(io.FormatError, match=r"splats\[1\]: missing field 'phi'"):
            io.load_scene(tmp_path / "s.json")

    def test_unknown_field(self, tmp_path, rng):
        data = io.scene_to_dict(random_scene(rng, 2))
        data["splats"][0]["colour"] = [0, 0, 0]
        (tmp_path / "s.json").write_text(json.dumps(data))
        with pytest.raises(io.FormatError, match="unknown field 'colour'"):
            io.load_scene(tmp_path / "s.json")

    def test_malformed_json_names_line(self, tmp_path):
        (tmp_path / "s.json").write_text('{\n  "splats": [,\n}')
        with pytest.raises(io.FormatError, match="line 2"):
            io.load_scene(tmp_path / "s.json")

    def test_camera_round_trip(self):
        cam = CameraPose((0.1, 1 / 3), 0.7, 5.5, 20, 12)
        assert io.camera_from_dict(json.loads(io.dumps(io.camera_to_dict(cam)))) == cam


class TestSidecars:
    def test_fisher(self, tmp_path, rng):
        f = FisherDiag(rng.uniform(size=18), 40, 200)
        io.save_sidecar(f, tmp_path / "f.json")
        g = io.load_sidecar(tmp_path / "f.json")
        np.testing.assert_array_equal(g.values, f.values)
        assert (g.step_count, g.total_steps) == (40, 200)

    def test_cov(self, tmp_path, rng):
        c = CovDiag(rng.uniform(0.1, 10, 9), 1e-3)
        io.save_sidecar(c, tmp_path / "c.json")
        d = io.load_sidecar(tmp_path / "c.json")
        np.testing.assert_array_equal(d.values, c.values)
        assert d.lam == 1e-3

    def test_unknown_kind(self, tmp_path):
        (tmp_path / "x.json").write_text('{"kind": "hessian", "values": []}')
        with pytest.raises(io.FormatError, match="unknown sidecar kind"):
            io.load_sidecar(tmp_path / "x.json")


class TestImages:
    def test_quantize_rounds_half_up(self):
        np.testing.assert_array_equal(io.quantize8([0.0, 0.5 / 255, 1.5 / 255, 1.0, 1.7, -0.2]), [0, 1, 2, 255, 255, 0])

    def test_ppm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (5, 7, 3)) / 255.0
        io.write_ppm(tmp_path / "a.ppm", img)
        np.testing.assert_array_equal(io.read_ppm(tmp_path / "a.ppm"), img)
        assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n7 5\n255\n")

    def test_pgm16_round_trip(self, tmp_path, rng):
        v = rng.uniform(-3, 5, (6, 4))
        vmin, vmax = io.write_pgm16(tmp_path / "h.pgm", v)
        assert (vmin, vmax) == (v.min(), v.max())
        back = io.read_pgm16(tmp_path / "h.pgm")
        np.testing.assert_allclose(back, v, atol=(vmax - vmin) / 65535)
        assert (tmp_path / "h.pgm").read_bytes().startswith(b"P5\n4 6\n65535\n")

    def test_constant_pgm(self, tmp_path):
        io.write_pgm16(tmp_path / "z.pgm", np.zeros((3, 3)))
        np.testing.assert_array_equal(io.read_pgm16(tmp_path / "z.pgm"), 0.0)

    def test_wrong_magic(self, tmp_path):
        io.write_pgm16(tmp_path / "z.pgm", np.zeros((3, 3)))
        with pytest.raises(io.FormatError, match="expected P6"):
            io.read_ppm(tmp_path / "z.pgm")


class TestViewsAndCsv:
    def test_views_round_trip(self, tmp_path, rng):
        cams = [CameraPose((i, 0), 0.1 * i, 4.0, 6, 5) for i in range(3)]
        entries = []
        for i, c in enumerate(cams):
            io.write_ppm(tmp_path / f"v{i}.ppm", rng.uniform(size=(5, 6, 3)))
            entries.append((i, c, f"v{i}.ppm"))
        io.save_views(entries, tmp_path / "views.json")
        loaded = io.load_views(tmp_path / "views.json")
        assert [(i, c) for i, c, _ in loaded] == [(i, c) for i, c, _ in entries]
        assert loaded[0][2].shape == (5, 6, 3)

    def test_views_size_mismatch(self, tmp_path):
        io.write_ppm(tmp_path / "v.ppm", np.zeros((4, 4, 3)))
        io.save_views([(0, CameraPose((0, 0), 0, 1, 5, 5), "v.ppm")], tmp_path / "views.json")
        with pytest.raises(io.FormatError, match="does not match"):
            io.load_views(tmp_path / "views.json")

    def test_csv_round_trip(self, tmp_path):
        io.write_csv(tmp_path / "t.csv", io.SCORE_HEADER, [(0, 1, 0.1, 5), (2, 0, 1 / 3, 0)])
        rows = io.read_csv(tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "view_id,object_id,score,pixel_count"
        assert float(rows[1]["score"]) == 1 / 3
        assert rows[0]["pixel_count"] == "5"

    def test_non_finite_rejected(self):
        with pytest.raises(io.FormatError):
            io.dumps({"x": float("nan")})
