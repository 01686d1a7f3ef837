import numpy as np
import pytest

from penstyle import codec, traceio
from penstyle.codec import (
    FrameSequence,
    QuantizerConfig,
    calibrate,
    decode,
    direction_change_code,
    encode,
    frames_to_onehot,
    speed_code,
)
from penstyle.traceio import SynthStyleSpec, synth_trace

from conftest import random_trace

CFG = QuantizerConfig(n_levels=16, v_max=10.0)


def wrap_angle(a):
    """Signed wrap to (-pi, pi]."""
    return (a + np.pi) % (2 * np.pi) - np.pi


class TestDirectionChangeCode:
    def test_collinear_is_zero(self):
        assert direction_change_code((0, 0), (1, 0), (2, 0)) == 0

    def test_left_turn_90_deg(self):
        assert direction_change_code((0, 0), (1, 0), (1, 1)) == 4

    def test_right_turn_one_bin(self):
        # Hand evaluation of the mod formula: -22.5 deg -> 337.5 deg -> bin 15.
        ang = np.radians(-22.5)
        p2 = (1 + np.cos(ang), np.sin(ang))
        assert direction_change_code((0, 0), (1, 0), p2) == 15

    def test_zero_displacement_rejected(self):
        with pytest.raises(ValueError):
            direction_change_code((0, 0), (0, 0), (1, 0))
        with pytest.raises(ValueError):
            direction_change_code((0, 0), (1, 0), (1, 0))

    def test_rotation_invariant(self, rng):
        for _ in range(200):
            pts = rng.normal(size=(3, 2))
            if np.allclose(pts[0], pts[1]) or np.allclose(pts[1], pts[2]):
                continue
            code = direction_change_code(*pts)
            # Skip inputs landing within float noise of a bin boundary.
            v1, v2 = pts[1] - pts[0], pts[2] - pts[1]
            dtheta = (np.arctan2(v2[1], v2[0]) - np.arctan2(v1[1], v1[0])) % (2 * np.pi)
            frac = (dtheta / (2 * np.pi / 16) + 0.5) % 1.0
            if min(frac, 1 - frac) < 1e-9:
                continue
            theta = rng.uniform(0, 2 * np.pi)
            rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
            rotated = pts @ rot.T
            assert direction_change_code(*rotated) == code


class TestSpeedCode:
    def test_zero_displacement(self):
        assert speed_code((1, 1), (1, 1), 0.01, CFG) == 0

    def test_vmax_hits_top_bin(self):
        assert speed_code((0, 0), (CFG.v_max * 0.01, 0), 0.01, CFG) == 15

    def test_half_vmax(self):
        # floor(0.5 * 16) = 8
        assert speed_code((0, 0), (0.5 * CFG.v_max * 0.01, 0), 0.01, CFG) == 8

    def test_above_vmax_clamped(self):
        assert speed_code((0, 0), (5 * CFG.v_max, 0), 0.01, CFG) == 15

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            speed_code((0, 0), (1, 0), 0.0, CFG)


class TestEncode:
    def test_five_points_three_frames(self, rng):
        fs = encode(random_trace(rng, n_points=5), CFG)
        assert fs.T == 3

    def test_straight_constant_speed(self):
        # Speed sits mid-bin so float noise cannot straddle a boundary.
        n = 10
        pts = np.column_stack([np.arange(n) * 0.041, np.zeros(n), np.arange(n) / 100])
        fs = encode(traceio.Trace("w", "X", pts), CFG)
        assert np.all(fs.dir_codes == 0)
        assert len(set(fs.speed_codes.tolist())) == 1

    def test_codes_in_range(self, rng):
        for _ in range(50):
            fs = encode(random_trace(rng, n_points=int(rng.integers(4, 60))), CFG)
            assert fs.dir_codes.min() >= 0 and fs.dir_codes.max() <= 15
            assert fs.speed_codes.min() >= 0 and fs.speed_codes.max() <= 15

    def test_duplicate_points_merged(self):
        pts = np.array([
            [0.0, 0.0, 0.00],
            [0.0, 0.0, 0.01],  # duplicate of previous, dropped
            [0.1, 0.0, 0.02],
            [0.2, 0.0, 0.03],
            [0.3, 0.0, 0.04],
        ])
        fs = encode(traceio.Trace("w", "X", pts), CFG)
        assert fs.T == 2

    def test_all_duplicates_rejected(self):
        pts = np.array([[0.0, 0.0, 0.01 * i] for i in range(5)])
        with pytest.raises(ValueError):
            encode(traceio.Trace("w", "X", pts), CFG)


class TestDecode:
    def test_straight_line_round_trip_exact_heading(self):
        n = 12
        pts = np.column_stack([np.arange(n) * 0.05, np.arange(n) * 0.02, np.arange(n) / 100])
        fs = encode(traceio.Trace("w", "X", pts), CFG)
        back = decode(fs, CFG)
        disp = np.diff(back.points[:, :2], axis=0)
        headings = np.arctan2(disp[:, 1], disp[:, 0])
        assert np.allclose(wrap_angle(headings - headings[0]), 0.0, atol=1e-12)

    def test_round_trip_codes_identical(self, rng):
        for _ in range(100):
            tr = random_trace(rng, n_points=int(rng.integers(4, 80)))
            fs = encode(tr, CFG)
            again = encode(decode(fs, CFG), CFG)
            assert np.array_equal(fs.dir_codes, again.dir_codes)
            assert np.array_equal(fs.speed_codes, again.speed_codes)

    def test_per_step_turn_error_within_half_bin(self, rng):
        half_bin = np.pi / 16
        for _ in range(50):
            tr = random_trace(rng, n_points=30)
            fs = encode(tr, CFG)
            back = decode(fs, CFG)
            for trace, other in ((tr, back),):
                a = np.diff(trace.points[:, :2], axis=0)
                b = np.diff(other.points[:, :2], axis=0)
                ta = np.arctan2(a[:, 1], a[:, 0])
                tb = np.arctan2(b[:, 1], b[:, 0])
                err = wrap_angle(np.diff(ta) - np.diff(tb))
                assert np.abs(err).max() <= half_bin + 1e-9


class TestFrameSequence:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            FrameSequence("X", np.array([], dtype=int), np.array([], dtype=int), 0.0, 1.0, (0, 0))

    def test_hundred_frames_allowed(self):
        # The sampler cap is 100 generated frames, so the type admits them.
        codes = np.zeros(100, dtype=int)
        assert FrameSequence("X", codes, codes, 0.0, 1.0, (0, 0)).T == 100

    def test_too_long_rejected(self):
        codes = np.zeros(101, dtype=int)
        with pytest.raises(ValueError):
            FrameSequence("X", codes, codes, 0.0, 1.0, (0, 0))

    def test_code_range_checked(self):
        with pytest.raises(ValueError):
            FrameSequence("X", np.array([16]), np.array([0]), 0.0, 1.0, (0, 0))

    def test_one_hot_property(self, rng):
        for _ in range(20):
            fs = encode(random_trace(rng, n_points=int(rng.integers(4, 40))), CFG)
            onehot = frames_to_onehot(fs)
            assert onehot.shape == (fs.T, 32)
            assert np.array_equal(onehot[:, :16].sum(axis=1), np.ones(fs.T))
            assert np.array_equal(onehot[:, 16:].sum(axis=1), np.ones(fs.T))


class TestCalibrate:
    def test_vmax_is_high_percentile(self, rng):
        traces = [random_trace(rng, n_points=40, writer=f"w{i}") for i in range(10)]
        cfg = calibrate(traces)
        speeds = []
        for tr in traces:
            disp = np.linalg.norm(np.diff(tr.points[:, :2], axis=0), axis=1)
            dt = np.diff(tr.points[:, 2])
            speeds.append(disp / dt)
        allv = np.concatenate(speeds)
        assert np.isclose(cfg.v_max, np.percentile(allv, 99.0))

    def test_json_round_trip(self):
        cfg = QuantizerConfig(16, 3.25)
        assert QuantizerConfig.from_json(cfg.to_json()) == cfg


class TestSyntheticRoundTrip:
    def test_synthetic_letters_round_trip(self):
        for letter in traceio.TEMPLATES:
            tr = synth_trace(SynthStyleSpec(letter, jitter=0.004, seed=11))
            cfg = calibrate([tr])
            fs = encode(tr, cfg)
            again = encode(decode(fs, cfg), cfg)
            assert np.array_equal(fs.dir_codes, again.dir_codes)
            assert np.array_equal(fs.speed_codes, again.speed_codes)
