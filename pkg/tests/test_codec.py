"""Codec pipeline tests: quantization, containers, round trips, rates."""

import math

import numpy as np
import pytest

from nlcodec import codec, fixtures
from nlcodec.codec import (analyze, compress, compress_with_report,
                           container_info, decompress, evaluate, pack_archive,
                           pad_reflect, quantize, reconstruct, unpack_archive)
from nlcodec.entropy import (BinGrid, TABLE_TOTAL, default_scale_table,
                             logistic_table)
from nlcodec.errors import CorruptStreamError, WrongModelError
from nlcodec.nn import default_network_spec
from nlcodec.weights import WeightStore

GRID = BinGrid()


def _toy(levels, seed=0, m=6, mid=4):
    spec = default_network_spec(levels, latent_channels=m, hidden_channels=mid)
    return spec, fixtures.random_weights(spec, seed=seed)


class TestQuantize:
    def test_rounding_rule(self):
        vals = np.array([0.4, -1.5, 2.5, 0.5, -0.5, 1.49], np.float32)
        got = quantize(vals[None, None, :], GRID)
        np.testing.assert_array_equal(got[0, 0], [0, -2, 3, 1, -1, 1])

    def test_clamps_to_grid(self):
        assert quantize(np.array([[[600.0]]]), GRID)[0, 0, 0] == 511
        assert quantize(np.array([[[-900.0]]]), GRID)[0, 0, 0] == -512

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        z = rng.normal(0, 40, (2, 5, 5)).astype(np.float32)
        once = quantize(z, GRID)
        np.testing.assert_array_equal(quantize(once.astype(np.float32), GRID),
                                      once)


class TestPadding:
    def test_no_padding_needed(self):
        img = np.zeros((3, 8, 8), np.uint8)
        assert pad_reflect(img, 8, 8) is img

    def test_reflect_extends(self):
        img = np.arange(12, dtype=np.uint8).reshape(1, 3, 4)
        out = pad_reflect(img, 8, 8)
        assert out.shape == (1, 8, 8)
        np.testing.assert_array_equal(out[:, :3, :4], img)

    def test_one_pixel_image(self):
        img = np.full((3, 1, 1), 9, np.uint8)
        out = pad_reflect(img, 4, 4)
        assert out.shape == (3, 4, 4)
        assert np.all(out == 9)


class TestAnalyze:
    def test_single_level_shapes(self):
        spec, ws = _toy(1)
        x = np.zeros((3, 32, 32), np.float32)
        latents = analyze(x, spec, ws)
        assert len(latents) == 1
        assert latents.layers[0].shape == (6, 8, 8)

    def test_per_level_halving(self):
        spec, ws = _toy(3)
        x = np.zeros((3, 64, 64), np.float32)
        latents = analyze(x, spec, ws)
        shapes = [z.shape for z in latents.layers]
        assert shapes == [(6, 16, 16), (6, 8, 8), (6, 4, 4)]

    def test_noncompliant_dims_rejected(self):
        spec, ws = _toy(2)
        with pytest.raises(ValueError):
            analyze(np.zeros((3, 30, 32), np.float32), spec, ws)

    def test_deterministic(self):
        spec, ws = _toy(2, seed=3)
        x = fixtures.synthetic_image(32, 32, seed=4).astype(np.float32) / 255
        a = analyze(x, spec, ws)
        b = analyze(x, spec, ws)
        for za, zb in zip(a.layers, b.layers):
            np.testing.assert_array_equal(za, zb)


class TestRoundTrip:
    @pytest.mark.parametrize("levels,size", [(1, (40, 56)), (2, (35, 50)),
                                             (3, (64, 48))])
    def test_decode_matches_encoder_reconstruction(self, levels, size):
        spec, ws = _toy(levels, seed=levels)
        img = fixtures.synthetic_image(*size, seed=levels)
        blob = compress(img, spec, ws)
        out = decompress(blob, spec, ws)
        assert out.shape == img.shape

        f = spec.total_downsampling
        ph = -(-size[0] // f) * f
        pw = -(-size[1] // f) * f
        x = pad_reflect(img, ph, pw).astype(np.float32) / np.float32(255)
        latents = analyze(x, spec, ws)
        recon = reconstruct(latents, spec, ws, size=size)
        np.testing.assert_array_equal(out, recon)

    def test_self_check_mode(self):
        spec, ws = _toy(2, seed=9)
        img = fixtures.synthetic_image(33, 47, seed=9)
        compress(img, spec, ws, self_check=True)

    def test_compress_deterministic(self):
        spec, ws = _toy(2, seed=5)
        img = fixtures.synthetic_image(32, 32, seed=5)
        assert compress(img, spec, ws) == compress(img, spec, ws)

    def test_sigma_fields_identical_across_sides(self):
        # Decoder-side scale fields are recomputed from decoded integers
        # through the same float32 path; hash both sides.
        spec, ws = _toy(3, seed=6)
        img = fixtures.synthetic_image(64, 64, seed=6)
        f = spec.total_downsampling
        x = pad_reflect(img, 64, 64).astype(np.float32) / np.float32(255)
        latents = analyze(x, spec, ws)
        table = default_scale_table()
        enc_fields = [codec._sigma_field(latents.layers[l], spec, ws, l, table)
                      for l in range(len(latents) - 1, 0, -1)]
        # Re-decode and recompute.
        blob = compress(img, spec, ws)
        decompress(blob, spec, ws)
        dec_fields = [codec._sigma_field(latents.layers[l], spec, ws, l, table)
                      for l in range(len(latents) - 1, 0, -1)]
        for a, b in zip(enc_fields, dec_fields):
            assert a.tobytes() == b.tobytes()

    def test_empty_image_rejected(self):
        spec, ws = _toy(1)
        with pytest.raises(ValueError):
            compress(np.zeros((3, 0, 4), np.uint8), spec, ws)
        with pytest.raises(ValueError):
            compress(np.zeros((3, 4, 4), np.float32), spec, ws)


class TestContainer:
    def test_header_round_trips_dimensions(self):
        spec, ws = _toy(2, seed=1)
        img = fixtures.synthetic_image(37, 61, seed=1)
        blob = compress(img, spec, ws)
        info = container_info(blob)
        assert (info["width"], info["height"]) == (61, 37)
        assert info["padded_width"] % spec.total_downsampling == 0
        assert decompress(blob, spec, ws).shape == (3, 37, 61)

    def test_wrong_model_detected(self):
        spec, ws = _toy(2, seed=1)
        _, other = _toy(2, seed=2)
        img = fixtures.synthetic_image(32, 32, seed=1)
        blob = compress(img, spec, ws)
        with pytest.raises(WrongModelError):
            decompress(blob, spec, other)

    def test_payload_tamper_detected(self):
        spec, ws = _toy(2, seed=4)
        img = fixtures.synthetic_image(32, 32, seed=4)
        blob = bytearray(compress(img, spec, ws))
        recon = decompress(bytes(blob), spec, ws)
        blob[-3] ^= 0x11
        try:
            tampered = decompress(bytes(blob), spec, ws)
            assert not np.array_equal(tampered, recon)
        except CorruptStreamError:
            pass

    def test_trailing_garbage_rejected(self):
        spec, ws = _toy(1, seed=3)
        img = fixtures.synthetic_image(32, 32, seed=3)
        blob = compress(img, spec, ws)
        with pytest.raises(CorruptStreamError):
            decompress(blob + b"\x00", spec, ws)

    def test_removed_segment_rejected(self):
        spec, ws = _toy(2, seed=7)
        img = fixtures.synthetic_image(32, 32, seed=7)
        blob = compress(img, spec, ws)
        info = container_info(blob)
        cut = info["layers"][0]["bytes"]
        clipped = blob[:info["segments_at"]] + \
            blob[info["segments_at"] + cut:]
        with pytest.raises(CorruptStreamError):
            decompress(clipped, spec, ws)

    def test_not_a_container_rejected(self):
        spec, ws = _toy(1)
        with pytest.raises(CorruptStreamError):
            decompress(b"garbage bytes", spec, ws)


class TestRates:
    def test_payload_close_to_table_estimate(self):
        for seed in range(4):
            spec, ws = _toy(2, seed=seed)
            img = fixtures.synthetic_image(48, 48, seed=seed)
            _, rep = compress_with_report(img, spec, ws)
            est = rep["estimated_bits"]
            payload = rep["payload_bits"]
            assert payload >= est - 16 * 8 * spec.levels
            assert payload <= est * 1.01 + 128 * 8

    def test_zero_latents_at_max_scale_rate(self):
        # Force every latent to zero and the scale predictor to saturate at
        # the top level; the payload is then predictable from the top-level
        # and logistic center-bin frequencies alone.
        spec = default_network_spec(2, latent_channels=4, hidden_channels=3)
        tensors = {}
        for name, shape in spec.parameter_shapes().items():
            if name.endswith(".beta"):
                tensors[name] = np.ones(shape, np.float32)
            elif name.endswith(".gamma"):
                tensors[name] = (0.05 * np.eye(shape[0])).astype(np.float32)
            else:
                tensors[name] = np.zeros(shape, np.float32)
        tensors["sigma.0.2.bias"] = np.full(
            spec.parameter_shapes()["sigma.0.2.bias"], 10.0, np.float32)
        ws = WeightStore(spec, tensors)

        img = fixtures.synthetic_image(64, 64, seed=0)
        blob, rep = compress_with_report(img, spec, ws)

        table = default_scale_table()
        top_freq = logistic_table().freq(0 - GRID.lo)
        low_freq = table.tables[63].freq(0 - GRID.lo)
        n_top = 4 * 8 * 8
        n_low = 4 * 16 * 16
        expected = (n_top * -math.log2(top_freq / TABLE_TOTAL)
                    + n_low * -math.log2(low_freq / TABLE_TOTAL))
        payload = rep["payload_bits"]
        assert abs(payload - expected) <= 0.01 * expected + 2 * 64
        assert decompress(blob, spec, ws).shape == img.shape

    def test_model_rate_close_to_table_rate(self):
        spec, ws = _toy(2, seed=11)
        img = fixtures.synthetic_image(48, 48, seed=11)
        x = img.astype(np.float32) / np.float32(255)
        latents = analyze(x, spec, ws)
        model_bits = codec.model_rate_bits(latents, spec, ws)
        _, rep = compress_with_report(img, spec, ws)
        # Table quantization and conservative scale rounding cost a little.
        assert rep["estimated_bits"] <= model_bits * 1.25 + 64
        assert model_bits <= rep["estimated_bits"] * 1.25 + 64


class TestEvaluate:
    def test_rd_point_fields(self):
        spec, ws = _toy(1, seed=2)
        img = fixtures.synthetic_image(40, 40, seed=2)
        point = evaluate(img, spec, ws, distortion="mse", lambda_id="toy")
        assert point.bpp > 0 and math.isfinite(point.bpp)
        assert point.distortion >= 0 and math.isfinite(point.distortion)
        assert point.lambda_id == "toy"

    def test_bpp_formula(self):
        spec, ws = _toy(1, seed=2)
        img = fixtures.synthetic_image(40, 40, seed=2)
        blob = compress(img, spec, ws)
        info = container_info(blob)
        assert info["bpp"] == pytest.approx(len(blob) * 8 / (40 * 40))

    def test_identical_reconstruction_would_give_zero_mse(self):
        img = fixtures.synthetic_image(32, 32, seed=0)
        mse = float(np.mean((img.astype(np.float64) -
                             img.astype(np.float64)) ** 2))
        assert mse == 0.0

    def test_bad_distortion_rejected(self):
        spec, ws = _toy(1)
        img = fixtures.synthetic_image(32, 32, seed=0)
        with pytest.raises(ValueError):
            evaluate(img, spec, ws, distortion="vmaf")


class TestArchive:
    def test_round_trip(self):
        blobs = [b"alpha", b"beta-beta", b"c", b"dd"]
        arch = pack_archive(100, 70, 64, blobs)
        w, h, tile, got = unpack_archive(arch)
        assert (w, h, tile) == (100, 70, 64)
        assert got == blobs

    def test_tile_count_consistency(self):
        arch = pack_archive(100, 70, 64, [b"a", b"b"])
        with pytest.raises(CorruptStreamError):
            unpack_archive(arch)

    def test_bad_magic(self):
        with pytest.raises(CorruptStreamError):
            unpack_archive(b"XXXX" + bytes(30))
