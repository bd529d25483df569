"""File formats, config round-trips, and the CLI exit-code contract."""

import os

import numpy as np
import pytest

from sptnet.cli import main
from sptnet.config import (ConfigError, parse_config, serialize_config)
from sptnet.network import ModelConfig
from sptnet.oracle import upsample2_by_loop
from sptnet.pnm import (PnmError, bilinear_resize, read_association, read_pgm,
                        read_ppm, write_association, write_pgm, write_ppm)


class TestPnmRoundTrip:
    def test_pgm_quantization_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        gray = rng.uniform(size=(9, 7))
        path = str(tmp_path / "g.pgm")
        write_pgm(path, gray)
        back = read_pgm(path)
        assert back.shape == (9, 7)
        np.testing.assert_allclose(back, np.round(gray * 255) / 255,
                                   atol=1e-12)

    def test_ppm_round_trip_exact_on_representable(self, tmp_path):
        vals = np.arange(24).reshape(2, 4, 3) * 10 / 255.0
        path = str(tmp_path / "c.ppm")
        write_ppm(path, vals)
        np.testing.assert_array_equal(read_ppm(path), vals)

    def test_header_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "h.pgm"
        path.write_bytes(b"P5 # a comment\n# another\n 3\n2 # dims\n255\n"
                         + bytes(range(6)))
        img = read_pgm(str(path))
        assert img.shape == (2, 3)
        assert img[0, 1] == 1 / 255

    @pytest.mark.parametrize("payload", [
        b"P4\n2 2\n255\n" + bytes(4),            # wrong magic
        b"P5\n2 2\n65535\n" + bytes(8),          # unsupported maxval
        b"P5\n2 2\n255\n" + bytes(3),            # truncated raster
        b"P5\n2 2\n255",                         # no separator, no raster
        b"P5\n-2 2\n255\n",                      # bad dimension token
    ])
    def test_malformed_pgm_rejected(self, tmp_path, payload):
        path = tmp_path / "bad.pgm"
        path.write_bytes(payload)
        with pytest.raises(PnmError):
            read_pgm(str(path))

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(PnmError):
            read_ppm(str(tmp_path / "nope.ppm"))

    def test_out_of_range_write_rejected_and_target_preserved(self, tmp_path):
        path = str(tmp_path / "keep.pgm")
        write_pgm(path, np.full((2, 2), 0.5))
        before = open(path, "rb").read()
        with pytest.raises(PnmError):
            write_pgm(path, np.full((2, 2), 1.5))
        assert open(path, "rb").read() == before
        leftovers = [f for f in os.listdir(tmp_path) if f.startswith(".pnm-")]
        assert leftovers == []


class TestAssociationDump:
    def test_round_trip_float32_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        a = rng.uniform(size=(12, 4)).astype(np.float32).astype(np.float64)
        path = str(tmp_path / "a.spas")
        write_association(path, a)
        np.testing.assert_array_equal(read_association(path), a)
        assert os.path.getsize(path) == 12 + 12 * 4 * 4

    def test_general_values_cast_to_float32(self, tmp_path):
        a = np.array([[1 / 3, 2 / 3]])
        path = str(tmp_path / "b.spas")
        write_association(path, a)
        np.testing.assert_array_equal(read_association(path),
                                      a.astype(np.float32).astype(np.float64))

    @pytest.mark.parametrize("payload", [
        b"SPAX" + bytes(8),                       # bad magic
        b"SPAS" + bytes(4),                       # truncated header
        b"SPAS" + np.array([2, 3], "<u4").tobytes() + bytes(4 * 5),  # short
    ])
    def test_malformed_dump_rejected(self, tmp_path, payload):
        path = tmp_path / "bad.spas"
        path.write_bytes(payload)
        with pytest.raises(PnmError):
            read_association(str(path))


class TestResize:
    def test_identity_when_size_matches(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(size=(5, 6, 3))
        np.testing.assert_allclose(bilinear_resize(img, 5, 6), img,
                                   atol=1e-15)

    def test_constant_image_stays_constant(self):
        img = np.full((4, 4, 1), 0.37)
        out = bilinear_resize(img, 11, 3)
        np.testing.assert_allclose(out, 0.37, atol=1e-15)

    def test_doubling_matches_reference_upsampler(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(size=(4, 6, 2))
        got = bilinear_resize(img, 8, 12)
        np.testing.assert_allclose(got, upsample2_by_loop(img), atol=1e-12)

    def test_output_within_input_range(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0.2, 0.8, size=(7, 5, 3))
        out = bilinear_resize(img, 13, 17)
        assert out.min() >= 0.2 and out.max() <= 0.8


class TestConfigFile:
    def test_round_trip_equality(self):
        cfg = ModelConfig(input_size=96, stage_channels=(8, 16, 32, 64),
                          stage_cells=(3, 2, 1, 1), mask_radius=1, t=3,
                          salrm_k=4, seed=11)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_defaults_round_trip(self):
        assert parse_config(serialize_config(ModelConfig())) == ModelConfig()

    def test_empty_text_gives_defaults(self):
        assert parse_config("") == ModelConfig()

    def test_comments_and_spacing(self):
        cfg = parse_config("# header\n  iters = 3  # trailing\n\nseed=5\n")
        assert cfg.t == 3 and cfg.seed == 5

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("input_size = 64\nlearning_rate = 0.1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("seed = 1\nseed = 2\n")

    def test_bad_integer_rejected(self):
        with pytest.raises(ConfigError, match="integer"):
            parse_config("iters = two\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("just some words\n")

    def test_invalid_model_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("input_size = 33\n")  # not a multiple of 32

    def test_tuple_keys(self):
        cfg = parse_config("channels = 4, 8, 16, 32\ncells = 2,2,1,1\n"
                           "input_size = 32\n")
        assert cfg.stage_channels == (4, 8, 16, 32)
        assert cfg.stage_cells == (2, 2, 1, 1)


@pytest.fixture
def sample_pair(tmp_path):
    rng = np.random.default_rng(7)
    rgb_path = str(tmp_path / "in.ppm")
    depth_path = str(tmp_path / "in.pgm")
    write_ppm(rgb_path, rng.uniform(size=(40, 40, 3)))
    write_pgm(depth_path, rng.uniform(size=(40, 40)))
    cfg_path = str(tmp_path / "m.cfg")
    with open(cfg_path, "w") as fh:
        fh.write("input_size = 32\nchannels = 4,8,16,32\nseed = 9\n")
    return rgb_path, depth_path, cfg_path


class TestCliContract:
    def test_forward_writes_quantized_map(self, tmp_path, sample_pair):
        rgb, depth, cfg = sample_pair
        out = str(tmp_path / "sm.pgm")
        assert main(["forward", "--rgb", rgb, "--depth", depth,
                     "--config", cfg, "--out", out]) == 0
        sal = read_pgm(out)
        assert sal.shape == (32, 32)
        assert sal.min() >= 0.0 and sal.max() <= 1.0

    def test_forward_is_byte_deterministic(self, tmp_path, sample_pair):
        rgb, depth, cfg = sample_pair
        a, b = str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")
        for out in (a, b):
            assert main(["forward", "--rgb", rgb, "--depth", depth,
                         "--config", cfg, "--out", out]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_forward_dump_scales(self, tmp_path, sample_pair):
        rgb, depth, cfg = sample_pair
        scales = str(tmp_path / "scales")
        assert main(["forward", "--rgb", rgb, "--depth", depth,
                     "--config", cfg, "--out", str(tmp_path / "sm.pgm"),
                     "--dump-scales", scales]) == 0
        for i in range(1, 5):
            assert read_pgm(os.path.join(scales, f"sm{i}.pgm")).shape \
                == (32, 32)

    def test_malformed_image_exits_1(self, tmp_path, sample_pair):
        _, depth, cfg = sample_pair
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P6\n4 4\n255\n\x00\x01")
        assert main(["forward", "--rgb", str(bad), "--depth", depth,
                     "--config", cfg, "--out", str(tmp_path / "o.pgm")]) == 1
        assert not (tmp_path / "o.pgm").exists()

    def test_bad_config_exits_2(self, tmp_path, sample_pair):
        rgb, depth, _ = sample_pair
        bad = tmp_path / "bad.cfg"
        bad.write_text("voltage = 9\n")
        assert main(["forward", "--rgb", rgb, "--depth", depth,
                     "--config", str(bad),
                     "--out", str(tmp_path / "o.pgm")]) == 2

    def test_usage_errors_exit_2(self):
        assert main(["no-such-command"]) == 2
        assert main(["gradcheck", "--module", "warp-drive"]) == 2
        assert main(["oracle", "--suite", "nonsense"]) == 2

    def test_superpixels_constant_image_identity(self, tmp_path):
        img_path = str(tmp_path / "flat.ppm")
        write_ppm(img_path, np.full((16, 16, 3), 100 / 255))
        out = str(tmp_path / "seg.ppm")
        assert main(["superpixels", "--input", img_path, "--cell", "4",
                     "--out", out]) == 0
        np.testing.assert_array_equal(read_ppm(out), read_ppm(img_path))

    def test_superpixels_assoc_dump_is_row_stochastic(self, tmp_path):
        rng = np.random.default_rng(8)
        img_path = str(tmp_path / "img.ppm")
        write_ppm(img_path, rng.uniform(size=(12, 12, 3)))
        assoc = str(tmp_path / "a.spas")
        assert main(["superpixels", "--input", img_path, "--cell", "3",
                     "--out", str(tmp_path / "seg.ppm"),
                     "--assoc", assoc]) == 0
        a = read_association(assoc)
        assert a.shape == (144, 16)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-6)

    def test_superpixels_bad_cell_exits_3(self, tmp_path):
        img_path = str(tmp_path / "img.ppm")
        write_ppm(img_path, np.zeros((10, 10, 3)))
        assert main(["superpixels", "--input", img_path, "--cell", "3",
                     "--out", str(tmp_path / "seg.ppm")]) == 3

    def test_flops_runs_with_defaults(self, capsys):
        assert main(["flops"]) == 0
        out = capsys.readouterr().out
        assert "network total" in out and "sagem" in out

    def test_gradcheck_loss_passes(self, capsys):
        assert main(["gradcheck", "--module", "loss"]) == 0
        assert "ok" in capsys.readouterr().out

    def test_oracle_zero_trials_notice(self, capsys):
        assert main(["oracle", "--suite", "topk", "--trials", "0"]) == 0
        assert "0 cases" in capsys.readouterr().out

    def test_oracle_suites_pass(self):
        for suite in ("mask", "topk", "scatter", "sagem", "salrm"):
            assert main(["oracle", "--suite", suite, "--trials", "4",
                         "--seed", "2"]) == 0
