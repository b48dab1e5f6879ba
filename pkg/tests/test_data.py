import json
import struct

import numpy as np
import pytest

from flowcast.data import (
    BatchStream,
    ClipStore,
    DigitState,
    GeneratorConfig,
    IdxFormatError,
    IdxLengthError,
    ImageSet,
    dataset_fingerprint,
    dataset_split,
    generate_moving_mnist,
    parse_idx,
    serialize_idx,
    split_indices,
    split_sizes,
    step_digit,
    synthetic_digits,
    would_bounce,
    write_dataset,
)


def idx_bytes(count, h, w, payload, magic=0x00000803):
    return struct.pack(">IIII", magic, count, h, w) + bytes(payload)


class TestIdx:
    def test_byte_scaling(self):
        parsed = parse_idx(idx_bytes(1, 2, 2, [0, 255, 128, 0]))
        expected = np.array([[[0.0, 1.0], [128 / 255, 0.0]]], dtype=np.float32)
        np.testing.assert_allclose(parsed.pixels, expected)
        assert abs(parsed.pixels[0, 1, 0] - 0.50196) < 1e-4

    def test_label_magic_rejected(self):
        with pytest.raises(IdxFormatError):
            parse_idx(idx_bytes(1, 2, 2, [0] * 4, magic=0x00000801))

    def test_truncated_payload_rejected(self):
        with pytest.raises(IdxLengthError):
            parse_idx(idx_bytes(2, 28, 28, [0] * 100))

    def test_synthetic_roundtrip(self):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 256, size=2 * 28 * 28, dtype=np.uint8)
        parsed = parse_idx(idx_bytes(2, 28, 28, raw.tobytes()))
        assert parsed.count == 2
        assert parse_idx(serialize_idx(parsed)).pixels.tobytes() == parsed.pixels.tobytes()

    def test_short_header_rejected(self):
        with pytest.raises(IdxFormatError):
            parse_idx(b"\x00\x00\x08")


class TestGlyphs:
    def test_ten_digits_in_range(self):
        digits = synthetic_digits(12)
        assert digits.count == 10
        assert digits.height == digits.width == 12
        assert digits.pixels.min() >= 0 and digits.pixels.max() <= 1
        assert all(digits.pixels[d].max() == 1.0 for d in range(10))

    def test_deterministic(self):
        a, b = synthetic_digits(12), synthetic_digits(12)
        assert np.array_equal(a.pixels, b.pixels)

    def test_digits_are_distinct(self):
        digits = synthetic_digits(12)
        for i in range(10):
            for j in range(i + 1, 10):
                assert not np.array_equal(digits.pixels[i], digits.pixels[j])


class TestStepDigit:
    def test_linear_motion_away_from_walls(self):
        rng = np.random.default_rng(1)
        state = DigitState(0, (10.0, 10.0), (2.0, 0.0))
        nxt = step_digit(state, (20, 20), rng)
        assert nxt.position == (12.0, 10.0)
        assert nxt.velocity == (2.0, 0.0)

    def test_reflection_formula_at_high_wall(self):
        # 1 unit from the right wall, moving +3 in col: reflect about the
        # bound, r' = 2 * bound - r, landing 2 units inside
        rng = np.random.default_rng(2)
        bound = 20.0
        state = DigitState(0, (5.0, bound - 1.0), (0.0, 3.0))
        nxt = step_digit(state, (20, 20), rng)
        assert nxt.position[1] == pytest.approx(bound - 2.0)
        assert nxt.velocity[1] < 0  # new velocity points away from the wall

    def test_reflection_formula_at_low_wall(self):
        rng = np.random.default_rng(3)
        state = DigitState(0, (1.0, 5.0), (-3.0, 0.0))
        nxt = step_digit(state, (20, 20), rng)
        assert nxt.position[0] == pytest.approx(2.0)
        assert nxt.velocity[0] > 0

    def test_zero_velocity_is_fixed_point(self):
        rng = np.random.default_rng(4)
        state = DigitState(0, (7.0, 3.0), (0.0, 0.0))
        for _ in range(10):
            state = step_digit(state, (20, 20), rng)
        assert state.position == (7.0, 3.0)

    def test_result_always_inside_bounds(self):
        rng = np.random.default_rng(5)
        state = DigitState(0, (3.0, 3.0), (2.5, -1.5))
        for _ in range(500):
            state = step_digit(state, (10, 10), rng, speed_min=1.0, speed_max=3.0)
            assert 0 <= state.position[0] <= 10
            assert 0 <= state.position[1] <= 10

    def test_glyph_larger_than_canvas_rejected(self):
        rng = np.random.default_rng(6)
        with pytest.raises(ValueError):
            step_digit(DigitState(0, (0.0, 0.0), (1.0, 1.0)), (-2, 5), rng)

    def test_speed_within_range_after_bounce(self):
        rng = np.random.default_rng(7)
        state = DigitState(0, (0.5, 5.0), (-2.0, 0.0))
        for _ in range(200):
            bounced = would_bounce(state, (10, 10))
            state = step_digit(state, (10, 10), rng, speed_min=1.0, speed_max=2.0)
            if bounced:
                speed = np.hypot(*state.velocity)
                assert 1.0 <= speed <= 2.0


class TestGenerator:
    def config(self, **kw):
        base = dict(canvas_size=32, num_digits=1, num_frames=8,
                    speed_min=1.0, speed_max=2.0)
        base.update(kw)
        return GeneratorConfig(**base)

    def test_zero_speed_gives_identical_frames(self):
        video = generate_moving_mnist(
            self.config(speed_min=0.0, speed_max=0.0, num_frames=5),
            synthetic_digits(12), seed=0)
        for t in range(1, 5):
            assert np.array_equal(video.frames[t], video.frames[0])

    def test_same_seed_is_bit_identical(self):
        cfg = self.config(num_frames=15)
        digits = synthetic_digits(12)
        a = generate_moving_mnist(cfg, digits, seed=123)
        b = generate_moving_mnist(cfg, digits, seed=123)
        assert a.frames.tobytes() == b.frames.tobytes()
        assert np.array_equal(a.positions, b.positions)

    def test_different_seeds_differ(self):
        cfg = self.config()
        digits = synthetic_digits(12)
        a = generate_moving_mnist(cfg, digits, seed=1)
        b = generate_moving_mnist(cfg, digits, seed=2)
        assert a.frames.tobytes() != b.frames.tobytes()

    def test_intensities_in_unit_interval(self):
        digits = synthetic_digits(12)
        for seed in range(5):
            video = generate_moving_mnist(self.config(num_digits=2), digits, seed)
            assert video.frames.min() >= 0.0
            assert video.frames.max() <= 1.0

    def test_overlap_blends_by_maximum(self):
        # two-digit clips never exceed the brightest single glyph pixel
        digits = synthetic_digits(12)
        peak = digits.pixels.max()
        for seed in range(10):
            video = generate_moving_mnist(
                self.config(num_digits=2, canvas_size=16, num_frames=4),
                ImageSet(digits.pixels * 0.8), seed)
            assert video.frames.max() <= 0.8 * peak + 1e-6

    def test_positions_affine_between_bounces(self):
        digits = synthetic_digits(12)
        checked = 0
        for seed in range(8):
            video = generate_moving_mnist(self.config(num_frames=30), digits, seed)
            pos = video.positions[:, 0, :]
            bounce = video.bounces[:, 0]
            # inside a bounce-free run, consecutive differences are constant
            for t in range(1, 29):
                if not bounce[t - 1] and not bounce[t]:
                    d1 = pos[t] - pos[t - 1]
                    d2 = pos[t + 1] - pos[t]
                    np.testing.assert_allclose(d1, d2, atol=1e-9)
                    checked += 1
        assert checked > 50

    def test_glyph_stays_inside_canvas(self):
        digits = synthetic_digits(12)
        video = generate_moving_mnist(self.config(num_frames=40), digits, 9)
        bound = 32 - 12
        assert video.positions.min() >= 0.0
        assert video.positions.max() <= bound

    def test_glyph_too_large_rejected(self):
        with pytest.raises(ValueError):
            generate_moving_mnist(self.config(canvas_size=8), synthetic_digits(12), 0)

    def test_bad_digit_count_rejected(self):
        with pytest.raises(ValueError):
            generate_moving_mnist(self.config(num_digits=3), synthetic_digits(12), 0)


class TestSplits:
    def test_ten_videos_eight_one_one(self):
        assert split_sizes(10, (0.8, 0.1, 0.1)) == (8, 1, 1)

    def test_ratios_must_sum_to_one(self):
        with pytest.raises(ValueError):
            split_sizes(10, (0.5, 0.5, 0.5))

    def test_ratios_must_be_positive(self):
        with pytest.raises(ValueError):
            split_sizes(10, (1.2, -0.1, -0.1))

    def test_empty_split_rejected(self):
        with pytest.raises(ValueError):
            split_sizes(2, (0.8, 0.1, 0.1))

    def test_indices_disjoint_and_complete(self):
        parts = split_indices(23, (0.7, 0.2, 0.1), seed=3)
        merged = np.concatenate(parts)
        assert sorted(merged) == list(range(23))
        assert sum(len(p) for p in parts) == 23

    def test_same_seed_same_assignment(self):
        a = split_indices(40, (0.8, 0.1, 0.1), seed=7)
        b = split_indices(40, (0.8, 0.1, 0.1), seed=7)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa, pb)


class TestStore:
    def make_clips(self, n=6, t=4, size=8):
        rng = np.random.default_rng(11)
        return [rng.random((t, 1, size, size)).astype(np.float32) for _ in range(n)]

    def test_f32_roundtrip_exact(self, tmp_path):
        clips = self.make_clips()
        write_dataset(tmp_path, clips, seed=1, fmt="f32")
        store = ClipStore(tmp_path)
        assert len(store) == 6
        for i, clip in enumerate(clips):
            assert np.array_equal(store[i], clip)

    def test_png_roundtrip_quantized(self, tmp_path):
        clips = self.make_clips(n=3)
        write_dataset(tmp_path, clips, seed=1, fmt="png")
        store = ClipStore(tmp_path)
        for i, clip in enumerate(clips):
            assert np.abs(store[i] - clip).max() <= 0.5 / 255 + 1e-6

    def test_fingerprint_stable_across_rewrites(self, tmp_path):
        clips = self.make_clips(n=3)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        write_dataset(d1, clips, seed=1)
        write_dataset(d2, clips, seed=1)
        assert dataset_fingerprint(d1) == dataset_fingerprint(d2)

    def test_batch_stream_shapes_and_reshuffle(self, tmp_path):
        clips = self.make_clips(n=10)
        stream = BatchStream(clips, np.arange(10), batch_size=4, shuffle=True,
                             seed=5, drop_last=True)
        first = [b.shape for b in stream]
        assert first == [(4, 4, 1, 8, 8), (4, 4, 1, 8, 8)]
        # second pass reshuffles but keeps shapes
        again = list(stream)
        assert [b.shape for b in again] == first

    def test_dataset_split_yields_batches(self):
        clips = self.make_clips(n=12)
        train, val, test = dataset_split(clips, (0.5, 0.25, 0.25), seed=2,
                                         batch_size=3)
        batches = list(train)
        assert all(b.shape[0] == 3 for b in batches)
        assert len(val.indices) == 3 and len(test.indices) == 3
        overlap = set(train.indices) & set(val.indices) | set(train.indices) & set(test.indices)
        assert not overlap
