"""Kinematics, collision resolution, and sensing against geometric oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdbc.simulation import (
    Arena,
    RobotBody,
    normalize_angle,
    resolve_collisions,
    resolve_collisions_arrays,
    sense_range_bearing,
    square_arena,
    step_kinematics,
)

V_MAX = 0.12
AXLE = 0.08
DT = 0.1


class TestKinematics:
    def test_straight_line(self):
        body = RobotBody(x=0.0, y=0.0, heading=0.7, radius=0.05, left=1.0, right=1.0)
        out = step_kinematics(body, DT, V_MAX, AXLE)
        assert out.x == pytest.approx(V_MAX * DT * math.cos(0.7), abs=1e-12)
        assert out.y == pytest.approx(V_MAX * DT * math.sin(0.7), abs=1e-12)
        assert out.heading == pytest.approx(0.7, abs=1e-12)

    def test_spin_in_place(self):
        body = RobotBody(x=1.0, y=2.0, heading=0.0, radius=0.05, left=-1.0, right=1.0)
        out = step_kinematics(body, DT, V_MAX, AXLE)
        assert out.x == pytest.approx(1.0, abs=1e-12)
        assert out.y == pytest.approx(2.0, abs=1e-12)
        assert out.heading == pytest.approx(V_MAX * 2.0 / AXLE * DT, abs=1e-12)

    def test_heading_stays_normalised(self):
        body = RobotBody(x=0.0, y=0.0, heading=3.0, radius=0.05, left=-1.0, right=1.0)
        for _ in range(100):
            body = step_kinematics(body, DT, V_MAX, AXLE)
            assert -math.pi <= body.heading < math.pi

    def test_matches_fine_step_integration(self):
        rng = np.random.default_rng(5)
        commands = rng.uniform(-1.0, 1.0, size=(100, 2))
        coarse = RobotBody(x=0.0, y=0.0, heading=0.0, radius=0.05)
        fine = (0.0, 0.0, 0.0)
        path_len = 0.0
        for left, right in commands:
            coarse = step_kinematics(
                RobotBody(coarse.x, coarse.y, coarse.heading, 0.05, left, right),
                DT, V_MAX, AXLE,
            )
            # dt/100 Euler reference
            x, y, h = fine
            lin = V_MAX * (left + right) / 2.0
            ang = V_MAX * (right - left) / AXLE
            for _ in range(100):
                x += lin * (DT / 100) * math.cos(h)
                y += lin * (DT / 100) * math.sin(h)
                h += ang * (DT / 100)
            fine = (x, y, h)
            path_len += abs(lin) * DT
        err = math.hypot(coarse.x - fine[0], coarse.y - fine[1])
        assert err < 0.01 * max(path_len, 1e-9)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            step_kinematics(RobotBody(0, 0, 0, 0.05), 0.0, V_MAX, AXLE)


class TestCollisions:
    def test_identical_centres_separate_deterministically(self):
        bodies = [
            RobotBody(1.0, 1.0, 0.0, 0.05),
            RobotBody(1.0, 1.0, 0.0, 0.05),
        ]
        out = resolve_collisions(bodies, square_arena(2.0))
        gap = math.hypot(out[0].x - out[1].x, out[0].y - out[1].y)
        assert gap == pytest.approx(0.1, abs=1e-9)
        assert out[0].x < out[1].x  # lower index pushed -x
        assert out[0].y == out[1].y

    def test_wall_clamp(self):
        bodies = [RobotBody(0.01, 1.0, 0.0, 0.05)]
        out = resolve_collisions(bodies, square_arena(2.0))
        assert out[0].x == pytest.approx(0.05, abs=1e-9)

    def test_random_clusters_fully_separated(self):
        rng = np.random.default_rng(9)
        arena = square_arena(2.0)
        for _ in range(25):
            pos = rng.uniform(0.0, 0.4, size=(1, 6, 2)) + 0.8
            active = np.ones((1, 6), dtype=bool)
            out = resolve_collisions_arrays(pos, 0.05, active, arena.wall_array())
            for i in range(6):
                for j in range(i + 1, 6):
                    d = np.hypot(*(out[0, i] - out[0, j]))
                    assert d >= 0.1 - 1e-6
                assert 0.05 - 1e-6 <= out[0, i, 0] <= 1.95 + 1e-6
                assert 0.05 - 1e-6 <= out[0, i, 1] <= 1.95 + 1e-6

    def test_inactive_robots_untouched(self):
        pos = np.array([[[1.0, 1.0], [1.02, 1.0]]])
        active = np.array([[True, False]])
        out = resolve_collisions_arrays(pos, 0.05, active, np.empty((0, 4)))
        assert out[0, 1] == pytest.approx([1.02, 1.0])

    def test_no_overlap_returns_input_unchanged(self):
        pos = np.array([[[0.5, 0.5], [1.5, 1.5]]])
        active = np.ones((1, 2), dtype=bool)
        out = resolve_collisions_arrays(pos, 0.05, active, np.empty((0, 4)))
        assert np.array_equal(out, pos)


class TestSensing:
    def test_target_at_observer(self):
        body = RobotBody(1.0, 1.0, 0.3, 0.05)
        r, b = sense_range_bearing(body, (1.0, 1.0), 2.0)
        assert r == 0.0

    def test_dead_ahead_at_max_range(self):
        body = RobotBody(0.0, 0.0, math.pi / 4, 0.05)
        target = (2.0 * math.cos(math.pi / 4), 2.0 * math.sin(math.pi / 4))
        r, b = sense_range_bearing(body, target, 2.0)
        assert r == pytest.approx(1.0, abs=1e-12)
        assert b == pytest.approx(0.0, abs=1e-12)

    def test_beyond_range_not_sensed(self):
        body = RobotBody(0.0, 0.0, 0.0, 0.05)
        assert sense_range_bearing(body, (3.0, 0.0), 2.0) is None

    @given(
        st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
        st.floats(-3, 3), st.floats(-3.1, 3.1),
    )
    @settings(max_examples=80)
    def test_matches_trigonometric_oracle(self, ox, oy, tx, ty, heading):
        body = RobotBody(ox, oy, heading, 0.05)
        out = sense_range_bearing(body, (tx, ty), 10.0)
        dist = math.hypot(tx - ox, ty - oy)
        assert out is not None
        r, b = out
        assert r == pytest.approx(dist / 10.0, abs=1e-9)
        expected = math.atan2(ty - oy, tx - ox) - heading
        expected = (expected + math.pi) % (2 * math.pi) - math.pi
        assert b == pytest.approx(expected, abs=1e-9)

    def test_rejects_bad_range(self):
        with pytest.raises(ValueError):
            sense_range_bearing(RobotBody(0, 0, 0, 0.05), (1.0, 0.0), 0.0)


class TestDeterminism:
    def test_identical_command_sequences_bit_identical(self):
        rng = np.random.default_rng(3)
        commands = rng.uniform(-1, 1, size=(50, 2))
        runs = []
        for _ in range(2):
            body = RobotBody(0.3, 0.4, 0.1, 0.05)
            trace = []
            for left, right in commands:
                body = step_kinematics(
                    RobotBody(body.x, body.y, body.heading, 0.05, left, right),
                    DT, V_MAX, AXLE,
                )
                trace.append((body.x, body.y, body.heading))
            runs.append(trace)
        assert runs[0] == runs[1]


class TestAngles:
    @given(st.floats(-50.0, 50.0))
    def test_normalize_angle_range(self, a):
        out = float(normalize_angle(a))
        assert -math.pi <= out < math.pi
        assert math.isclose(
            math.cos(out), math.cos(a), abs_tol=1e-9
        ) and math.isclose(math.sin(out), math.sin(a), abs_tol=1e-9)


class TestArena:
    def test_square_arena_geometry(self):
        arena = square_arena(2.0)
        assert arena.bounds == (0.0, 0.0, 2.0, 2.0)
        assert arena.diagonal == pytest.approx(math.sqrt(8.0))
        assert arena.wall_array().shape == (4, 4)

    def test_empty_walls(self):
        arena = Arena(walls=(), bounds=(0, 0, 1, 1))
        assert arena.wall_array().shape == (0, 4)
