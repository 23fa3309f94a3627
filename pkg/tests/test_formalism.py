"""Feature extractor goldens and task-state invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdbc.formalism import (
    GEOM_CIRCLE,
    GEOM_POINT,
    GEOM_SEGMENTS,
    EntityGroup,
    EntityState,
    FeatureSnapshot,
    GroupSpec,
    TaskStateSnapshot,
    UndefinedFeatureError,
    extract_features,
    extract_feature_series,
    feature_schema,
    geometry_distance,
    group_dispersion,
    group_mean_state,
    group_pair_distance,
    group_size_feature,
    point_segment_distance,
)


def euclid(a: EntityState, b: EntityState) -> float:
    return math.hypot(a.theta[0] - b.theta[0], a.theta[1] - b.theta[1])


def body(x, y, *rest):
    return EntityState((x, y) + tuple(rest))


def group(name, entities, kappa, eta_min, eta_max):
    return EntityGroup(GroupSpec(name, kappa, eta_min, eta_max), tuple(entities))


class TestGroupSize:
    def test_lower_bound(self):
        g = group("a", [body(0, 0)] * 2, 2, 2, 5)
        assert group_size_feature(g) == 0.0

    def test_upper_bound(self):
        g = group("a", [body(0, 0)] * 5, 2, 2, 5)
        assert group_size_feature(g) == 1.0

    def test_direct_evaluation(self):
        g = group("a", [body(0, 0)] * 3, 2, 0, 5)
        assert group_size_feature(g) == pytest.approx(0.6, abs=1e-12)

    def test_degenerate_bounds_raise(self):
        g = group("a", [body(0, 0)], 2, 1, 1)
        with pytest.raises(UndefinedFeatureError):
            group_size_feature(g)

    @given(st.integers(0, 6), st.data())
    def test_relabelling_invariance(self, n, data):
        entities = [body(data.draw(st.floats(-5, 5)), i) for i in range(n)]
        perm = data.draw(st.permutations(entities))
        g1 = group("a", entities, 2, 0, 6)
        g2 = group("a", perm, 2, 0, 6)
        assert group_size_feature(g1) == group_size_feature(g2)


class TestMeanState:
    def test_single_entity_identity(self):
        g = group("a", [EntityState((0.2, 7.0))], 2, 1, 4)
        assert group_mean_state(g) == pytest.approx((0.2, 7.0), abs=1e-12)

    def test_two_entities(self):
        g = group("a", [EntityState((0.0, 2.0)), EntityState((2.0, 4.0))], 2, 1, 4)
        assert group_mean_state(g) == pytest.approx((1.0, 3.0), abs=1e-12)

    def test_matches_independent_mean(self):
        rng = np.random.default_rng(3)
        thetas = rng.normal(size=(5, 3))
        g = group("a", [EntityState(tuple(t)) for t in thetas], 3, 1, 9)
        got = group_mean_state(g)
        # independent per-component accumulation
        for j in range(3):
            total = 0.0
            for i in range(5):
                total += thetas[i, j]
            assert got[j] == pytest.approx(total / 5, abs=1e-12)

    def test_empty_group_raises(self):
        g = group("a", [], 2, 0, 4)
        with pytest.raises(UndefinedFeatureError):
            group_mean_state(g)


class TestDispersion:
    def test_two_entities_as_printed(self):
        # ordered-pair sum over (|g|-1)^2: both directed distances count
        g = group("a", [body(0, 0), body(4, 0)], 2, 1, 4)
        assert group_dispersion(g, euclid) == pytest.approx(8.0, abs=1e-12)

    def test_three_unit_distances(self):
        h = math.sqrt(3) / 2
        g = group("a", [body(0, 0), body(1, 0), body(0.5, h)], 2, 1, 4)
        assert group_dispersion(g, euclid) == pytest.approx(6 / 4, abs=1e-12)

    def test_identical_positions_zero(self):
        g = group("a", [body(1, 1)] * 4, 2, 1, 4)
        assert group_dispersion(g, euclid) == pytest.approx(0.0, abs=1e-12)

    def test_singleton_raises(self):
        g = group("a", [body(0, 0)], 2, 0, 4)
        with pytest.raises(UndefinedFeatureError):
            group_dispersion(g, euclid)

    @given(st.integers(2, 6), st.floats(0.1, 10.0), st.integers(0, 10))
    @settings(max_examples=40)
    def test_distance_scaling(self, n, c, seed):
        rng = np.random.default_rng(seed)
        entities = [body(*rng.uniform(-3, 3, 2)) for _ in range(n)]
        g = group("a", entities, 2, 0, 8)
        scaled = lambda a, b: c * euclid(a, b)  # noqa: E731
        assert group_dispersion(g, scaled) == pytest.approx(
            c * group_dispersion(g, euclid), rel=1e-12
        )


class TestPairDistance:
    def test_singleton_groups(self):
        a = group("a", [body(0, 0)], 2, 1, 1)
        b = group("b", [body(3.5, 0)], 2, 1, 1)
        assert group_pair_distance(a, b, euclid) == pytest.approx(3.5, abs=1e-12)

    def test_two_against_one(self):
        a = group("a", [body(0, 2), body(0, 4)], 2, 1, 4)
        b = group("b", [body(0, 0)], 2, 1, 1)
        assert group_pair_distance(a, b, euclid) == pytest.approx(3.0, abs=1e-12)

    def test_matches_exhaustive_double_loop(self):
        rng = np.random.default_rng(11)
        xs = [body(*rng.uniform(-5, 5, 2)) for _ in range(3)]
        ys = [body(*rng.uniform(-5, 5, 2)) for _ in range(4)]
        a = group("a", xs, 2, 1, 8)
        b = group("b", ys, 2, 1, 8)
        total = 0.0
        for ea in xs:
            for eb in ys:
                total += euclid(ea, eb)
        assert group_pair_distance(a, b, euclid) == pytest.approx(total / 12, abs=1e-12)

    def test_empty_raises(self):
        a = group("a", [], 2, 0, 4)
        b = group("b", [body(0, 0)], 2, 1, 1)
        with pytest.raises(UndefinedFeatureError):
            group_pair_distance(a, b, euclid)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 20))
    @settings(max_examples=40)
    def test_symmetry(self, na, nb, seed):
        rng = np.random.default_rng(seed)
        a = group("a", [body(*rng.uniform(-5, 5, 2)) for _ in range(na)], 2, 1, 8)
        b = group("b", [body(*rng.uniform(-5, 5, 2)) for _ in range(nb)], 2, 1, 8)
        assert group_pair_distance(a, b, euclid) == pytest.approx(
            group_pair_distance(b, a, euclid), abs=1e-12
        )


def sharing_like_snapshot(n_alive=4):
    robots = group(
        "agents",
        [body(i * 0.3, 0.1, 0.0, 0.05, 50.0, 0.0) for i in range(n_alive)],
        6, 0, 4,
    )
    station = EntityGroup(
        GroupSpec("station", 1, 1, 1),
        (EntityState((0.0,), (GEOM_POINT, 1.0, 1.0)),),
    )
    return TaskStateSnapshot(groups=(robots, station), distance=geometry_distance)


def pursuit_like_snapshot(prey_present=True):
    predators = group(
        "predators", [body(i * 0.3, 0.0, 0.0, 0.1) for i in range(3)], 4, 3, 3
    )
    prey_entities = (body(1.0, 1.0, 0.0, 0.0),) if prey_present else ()
    prey = EntityGroup(GroupSpec("prey", 4, 0, 1), prey_entities)
    bounds = EntityGroup(
        GroupSpec("bounds", 0, 1, 1),
        (EntityState((), (GEOM_CIRCLE, 0.0, 0.0, 3.0)),),
    )
    return TaskStateSnapshot(groups=(predators, prey, bounds), distance=geometry_distance)


class TestExtractFeatures:
    def test_sharing_layout_has_ten_features(self):
        out = extract_features(sharing_like_snapshot())
        assert len(out.values) == 10

    def test_pursuit_layout_has_thirteen_features(self):
        out = extract_features(pursuit_like_snapshot())
        assert len(out.values) == 13

    def test_fixed_stateless_singleton_emits_nothing(self):
        g = EntityGroup(GroupSpec("walls", 0, 1, 1), (EntityState(()),))
        snap = TaskStateSnapshot(groups=(g,), distance=geometry_distance)
        assert extract_features(snap).values == ()

    def test_schema_matches_predicted_count(self):
        snap = pursuit_like_snapshot()
        predicted = feature_schema(tuple(g.spec for g in snap.groups))
        assert extract_features(snap).schema == predicted

    def test_carry_forward_on_empty_group(self):
        full = pursuit_like_snapshot(prey_present=True)
        empty = pursuit_like_snapshot(prey_present=False)
        first = extract_features(full)
        second = extract_features(empty, first)
        schema = first.schema
        # prey mean-state and prey pair-distance features repeat the
        # previous values; the prey size feature drops to 0
        for k, name in enumerate(schema):
            if name == "prey group size":
                assert second.values[k] == 0.0
            elif name.startswith("prey ") or name in ("predators-prey distance", "prey-bounds distance"):
                assert second.values[k] == first.values[k]

    def test_first_step_empty_defaults_to_zero(self):
        empty = pursuit_like_snapshot(prey_present=False)
        out = extract_features(empty)
        for k, name in enumerate(out.schema):
            if name.startswith("prey ") and name != "prey group size":
                assert out.values[k] == 0.0

    def test_excluded_pair_is_dropped(self):
        snap = pursuit_like_snapshot()
        excluded = TaskStateSnapshot(
            groups=snap.groups,
            distance=snap.distance,
            excluded_pairs=frozenset({frozenset({"predators", "bounds"})}),
        )
        out = extract_features(excluded)
        assert len(out.values) == 12
        assert "predators-bounds distance" not in out.schema

    def test_series_threads_carry_forward(self):
        snaps = [
            pursuit_like_snapshot(True),
            pursuit_like_snapshot(False),
            pursuit_like_snapshot(False),
        ]
        series = extract_feature_series(snaps)
        k = series[0].schema.index("prey state 0")
        assert series[1].values[k] == series[0].values[k]
        assert series[2].values[k] == series[0].values[k]


class TestGeometryDistance:
    def test_point_entities(self):
        a = body(0.0, 0.0)
        b = body(3.0, 4.0)
        assert geometry_distance(a, b) == pytest.approx(5.0, abs=1e-12)

    def test_identity_is_zero(self):
        walls = EntityState((), (GEOM_SEGMENTS, 0, 0, 1, 0))
        assert geometry_distance(walls, walls) == 0.0

    def test_point_to_segments_uses_nearest(self):
        walls = EntityState((), (GEOM_SEGMENTS, 0, 0, 10, 0, 0, 5, 10, 5))
        p = body(5.0, 1.0)
        assert geometry_distance(p, walls) == pytest.approx(1.0, abs=1e-12)
        assert geometry_distance(walls, p) == pytest.approx(1.0, abs=1e-12)

    def test_point_to_circle_line(self):
        bounds = EntityState((), (GEOM_CIRCLE, 0.0, 0.0, 3.0))
        assert geometry_distance(body(1.0, 0.0), bounds) == pytest.approx(2.0, abs=1e-12)
        assert geometry_distance(body(5.0, 0.0), bounds) == pytest.approx(2.0, abs=1e-12)

    def test_point_prop_entities(self):
        gate = EntityState((1.0,), (GEOM_POINT, 2.0, 2.0))
        assert geometry_distance(body(2.0, 0.0), gate) == pytest.approx(2.0, abs=1e-12)

    @given(
        st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5),
        st.floats(-5, 5), st.floats(-5, 5),
    )
    @settings(max_examples=50)
    def test_point_segment_between_endpoint_distances(self, px, py, x1, y1, x2, y2):
        d = point_segment_distance(px, py, x1, y1, x2, y2)
        d1 = math.hypot(px - x1, py - y1)
        d2 = math.hypot(px - x2, py - y2)
        assert 0.0 <= d <= min(d1, d2) + 1e-12


class TestValidation:
    def test_group_size_bounds_enforced(self):
        with pytest.raises(ValueError):
            group("a", [body(0, 0)] * 3, 2, 0, 2)

    def test_arity_enforced(self):
        with pytest.raises(ValueError):
            group("a", [EntityState((1.0,))], 2, 0, 4)

    def test_snapshot_needs_groups(self):
        with pytest.raises(ValueError):
            TaskStateSnapshot(groups=(), distance=geometry_distance)

    def test_feature_snapshot_length_checked(self):
        with pytest.raises(ValueError):
            FeatureSnapshot(values=(1.0,), schema=("a", "b"))
