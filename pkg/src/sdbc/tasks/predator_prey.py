"""Predator-prey pursuit: three predators chase a fleeing prey of equal
speed inside a circular chase zone, so capture requires encirclement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..formalism import (
    GEOM_CIRCLE,
    EntityGroup,
    EntityState,
    GroupSpec,
    TaskStateSnapshot,
    geometry_distance,
)
from ..simulation import normalize_angle, resolve_collisions_arrays, step_kinematics_arrays
from .base import (
    Controller,
    Task,
    TrialBatch,
    carry_forward,
    group_dispersion_series,
    masked_mean,
    pairwise_distances,
)


@dataclass(frozen=True)
class PredatorPreyParams:
    n_predators: int = 3
    zone_radius: float = 3.0
    max_steps: int = 600
    robot_radius: float = 0.05
    v_max: float = 0.12
    prey_speed_factor: float = 1.0
    prey_sense: float = 0.75
    predator_sense: float = 6.0
    axle: float = 0.08
    dt: float = 0.1
    prey_spawn_min: float = 1.0
    prey_spawn_max: float = 2.0
    start_spacing: float = 0.3
    published_layout: bool = True  # prey group may empty, so its size is a feature


def pursuit_fitness(
    captured: bool, t: int, tau: int, d_i: float, d_f: float, size: float
) -> float:
    """2 - t/tau on capture, else the normalised closing of the mean distance."""
    if d_i < 0 or d_f < 0 or size <= 0:
        raise ValueError("distances must be non-negative and size positive")
    if captured:
        return 2.0 - t / tau
    return max(d_i - d_f, 0.0) / size


def prey_policy(
    prey_pos: np.ndarray, predator_pos: np.ndarray, sense_range: float
) -> np.ndarray:
    """Unit flight direction away from the mean sensed predator position,
    or the zero vector when no predator is in range."""
    deltas = predator_pos - prey_pos
    dist = np.sqrt((deltas * deltas).sum(axis=-1))
    sensed = dist <= sense_range
    if not sensed.any():
        return np.zeros(2)
    away = prey_pos - predator_pos[sensed].mean(axis=0)
    norm = math.hypot(away[0], away[1])
    if norm < 1e-12:
        return np.zeros(2)
    return away / norm


class PredatorPreyTask(Task):
    name = "predator_prey"
    n_inputs = 6
    n_outputs = 2

    def __init__(self, params: PredatorPreyParams = PredatorPreyParams()):
        self.params = params
        # the chase zone's bounding-box diagonal normalises distance gains
        self.size = 2.0 * params.zone_radius * math.sqrt(2.0)
        n = params.n_predators
        offset = (np.arange(n) - (n - 1) / 2.0) * params.start_spacing
        self.start_pos = np.stack([offset, np.zeros(n)], axis=-1)
        self.start_heading = np.full(n, math.pi / 2.0)

    @property
    def max_steps(self) -> int:
        return self.params.max_steps

    def group_specs(self) -> tuple[GroupSpec, ...]:
        p = self.params
        attrs = ("x", "y", "turning speed", "linear speed")
        return (
            GroupSpec("predators", 4, p.n_predators, p.n_predators, attrs),
            GroupSpec("prey", 4, 0 if p.published_layout else 1, 1, attrs),
            GroupSpec("bounds", 0, 1, 1),
        )

    def _initial_prey(self, seeds: Sequence[int]) -> np.ndarray:
        p = self.params
        prey = np.empty((len(seeds), 2))
        for b, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            r = rng.uniform(p.prey_spawn_min, p.prey_spawn_max)
            a = rng.uniform(-math.pi, math.pi)
            prey[b] = (r * math.cos(a), r * math.sin(a))
        return prey

    def _sensors(
        self,
        pos: np.ndarray,
        heading: np.ndarray,
        prey: np.ndarray,
        prey_present: np.ndarray,
        rows: np.ndarray,
    ) -> np.ndarray:
        p = self.params
        b, n = pos.shape[0], pos.shape[1]
        x = np.empty((b, n, 6))
        dx = prey[:, None, 0] - pos[..., 0]
        dy = prey[:, None, 1] - pos[..., 1]
        dist = np.hypot(dx, dy)
        sensed = prey_present[:, None] & (dist <= p.predator_sense)
        bearing = normalize_angle(np.arctan2(dy, dx) - heading)
        x[..., 0] = np.where(sensed, dist / p.predator_sense, 1.0)
        x[..., 1] = np.where(sensed, bearing / math.pi, 0.0)
        peer_d = pairwise_distances(pos[..., 0], pos[..., 1])
        np.einsum("bii->bi", peer_d)[:] = np.inf
        order = np.argsort(peer_d, axis=2, kind="stable")
        ni = np.arange(n)[None, :]
        for slot in range(2):
            if slot >= n:
                x[..., 2 + 2 * slot] = 1.0
                x[..., 3 + 2 * slot] = 0.0
                continue
            idx = order[..., slot]
            d = peer_d[rows, ni, idx]
            tx = pos[..., 0][rows, idx]
            ty = pos[..., 1][rows, idx]
            pb = normalize_angle(np.arctan2(ty - pos[..., 1], tx - pos[..., 0]) - heading)
            ok = np.isfinite(d) & (d <= p.predator_sense)
            x[..., 2 + 2 * slot] = np.where(ok, d / p.predator_sense, 1.0)
            x[..., 3 + 2 * slot] = np.where(ok, pb / math.pi, 0.0)
        return x

    def simulate(
        self, controller: Controller, seeds: Sequence[int], record: bool = False
    ) -> TrialBatch:
        p = self.params
        b, n, tau = len(seeds), p.n_predators, p.max_steps
        pos = np.broadcast_to(self.start_pos, (b, n, 2)).copy()
        heading = np.broadcast_to(self.start_heading, (b, n)).copy()
        prey = self._initial_prey(seeds)
        prey_heading = np.zeros(b)
        prey_present = np.ones(b, dtype=bool)
        done = np.zeros(b, dtype=bool)
        captured = np.zeros(b, dtype=bool)
        steps = np.full(b, tau, dtype=int)

        d0 = np.hypot(pos[..., 0] - prey[:, None, 0], pos[..., 1] - prey[:, None, 1])
        d_initial = d0.mean(axis=1)
        d_final = d_initial.copy()

        r_pos = np.empty((tau, b, n, 2))
        r_turn = np.empty((tau, b, n))
        r_lin = np.empty((tau, b, n))
        r_prey = np.empty((tau, b, 2))
        r_prey_turn = np.empty((tau, b))
        r_prey_lin = np.empty((tau, b))
        r_present = np.empty((tau, b), dtype=bool)
        r_heading = np.empty((tau, b, n)) if record else None
        r_wheels = np.empty((tau, b, n, 2)) if record else None

        no_walls = np.empty((0, 4))
        prey_speed = p.prey_speed_factor * p.v_max
        rows = np.arange(b)[:, None]
        t_used = tau
        for t in range(tau):
            if done.all():
                t_used = t
                break
            sensors = self._sensors(pos, heading, prey, prey_present & ~done, rows)
            wheels = controller(sensors.reshape(b * n, 6)).reshape(b, n, 2)
            wheels = wheels * (~done)[:, None, None]
            nx, ny, nh = step_kinematics_arrays(
                pos[..., 0], pos[..., 1], heading,
                wheels[..., 0], wheels[..., 1], p.dt, p.v_max, p.axle,
            )
            pos = np.stack([nx, ny], axis=-1)
            heading = nh
            active = np.broadcast_to((~done)[:, None], (b, n))
            pos = resolve_collisions_arrays(pos, p.robot_radius, active, no_walls, max_passes=4)

            # preprogrammed prey: flee the mean sensed predator position
            deltas = pos - prey[:, None, :]
            pd = np.sqrt((deltas * deltas).sum(axis=-1))
            sensed = pd <= p.prey_sense
            any_sensed = sensed.any(axis=1) & ~done
            w = sensed / np.maximum(sensed.sum(axis=1), 1)[:, None]
            mean_pred = (pos * w[..., None]).sum(axis=1)
            away = prey - mean_pred
            norm = np.sqrt((away * away).sum(axis=-1))
            flee = np.where(
                (any_sensed & (norm > 1e-12))[:, None],
                away / np.maximum(norm, 1e-12)[:, None],
                0.0,
            )
            new_prey = prey + flee * prey_speed * p.dt
            moving = (flee != 0.0).any(axis=1)
            new_ph = np.where(moving, np.arctan2(flee[:, 1], flee[:, 0]), prey_heading)
            prey_turn = np.where(moving, normalize_angle(new_ph - prey_heading) / p.dt, 0.0)
            prey_lin = np.where(moving, prey_speed, 0.0)
            prey = new_prey
            prey_heading = new_ph

            pd = np.hypot(pos[..., 0] - prey[:, None, 0], pos[..., 1] - prey[:, None, 1])
            caught = ~done & prey_present & (pd.min(axis=1) <= 2.0 * p.robot_radius)
            escaped = (
                ~done & prey_present & ~caught
                & (np.hypot(prey[:, 0], prey[:, 1]) > p.zone_radius)
            )
            prey_present = prey_present & ~caught

            r_pos[t] = pos
            r_turn[t] = p.v_max * (wheels[..., 1] - wheels[..., 0]) / p.axle
            r_lin[t] = p.v_max * (wheels[..., 0] + wheels[..., 1]) / 2.0
            r_prey[t] = prey
            r_prey_turn[t] = prey_turn
            r_prey_lin[t] = prey_lin
            r_present[t] = prey_present & ~done
            if record:
                r_heading[t] = heading
                r_wheels[t] = wheels

            ending = ~done & (caught | escaped)
            d_final = np.where(~done, pd.mean(axis=1), d_final)
            captured = captured | caught
            steps = np.where(ending, t + 1, steps)
            done = done | ending

        rec = {
            "pos": r_pos[:t_used],
            "turn": r_turn[:t_used],
            "lin": r_lin[:t_used],
            "prey": r_prey[:t_used],
            "prey_turn": r_prey_turn[:t_used],
            "prey_lin": r_prey_lin[:t_used],
            "present": r_present[:t_used],
            "steps": steps,
        }
        if record:
            rec["heading"] = r_heading[:t_used]
            rec["wheels"] = r_wheels[:t_used]

        fitness = np.where(
            captured,
            2.0 - steps / tau,
            np.maximum(d_initial - d_final, 0.0) / self.size,
        )
        ts = self._ts_chars(rec, captured, steps, d_final)
        return TrialBatch(
            steps=steps, fitness=fitness, features=self._features(rec),
            ts_chars=ts, record=rec,
        )

    def _features(self, rec: dict) -> np.ndarray:
        """Schema order: prey size, predator means (x, y, turn, lin), prey
        means (same), predator dispersion, predators-prey, predators-bounds,
        prey-bounds."""
        p = self.params
        pos, prey, present = rec["pos"], rec["prey"], rec["present"]
        t, b = present.shape

        cols = []
        if p.published_layout:
            cols.append(present.astype(float))
            prey_defined = present
        else:
            # fixed-size prey group: the prey stays in the group throughout
            prey_defined = np.ones_like(present)

        for arr in (pos[..., 0], pos[..., 1], rec["turn"], rec["lin"]):
            cols.append(arr.mean(axis=2))
        for arr in (prey[..., 0], prey[..., 1], rec["prey_turn"], rec["prey_lin"]):
            cols.append(carry_forward(arr, prey_defined))

        dist = pairwise_distances(pos[..., 0], pos[..., 1])
        member = np.ones((t, b, p.n_predators), dtype=bool)
        disp, _ = group_dispersion_series(dist, member)
        cols.append(disp)

        pd = np.hypot(pos[..., 0] - prey[..., None, 0], pos[..., 1] - prey[..., None, 1])
        cols.append(carry_forward(pd.mean(axis=2), prey_defined))
        center_d = np.hypot(pos[..., 0], pos[..., 1])
        cols.append(np.abs(center_d - p.zone_radius).mean(axis=2))
        prey_center = np.hypot(prey[..., 0], prey[..., 1])
        cols.append(carry_forward(np.abs(prey_center - p.zone_radius), prey_defined))
        return np.stack(cols, axis=-1)

    def _ts_chars(
        self, rec: dict, captured: np.ndarray, steps: np.ndarray, d_final: np.ndarray
    ) -> np.ndarray:
        p = self.params
        pos = rec["pos"]
        t_axis = np.arange(pos.shape[0])[:, None]
        in_trial = t_axis < steps[None, :]
        centroid = pos.mean(axis=2)
        spread = np.hypot(
            pos[..., 0] - centroid[..., None, 0], pos[..., 1] - centroid[..., None, 1]
        ).mean(axis=2)
        mean_spread = (spread * in_trial).sum(axis=0) / np.maximum(in_trial.sum(axis=0), 1)
        out = np.stack(
            [
                captured.astype(float),
                steps / p.max_steps,
                d_final / (2.0 * p.zone_radius),
                mean_spread / p.zone_radius,
            ],
            axis=-1,
        )
        return np.clip(out, 0.0, 1.0)

    def snapshot(self, rec: dict, trial: int, step: int) -> TaskStateSnapshot:
        specs = self.group_specs()
        predators = tuple(
            EntityState(
                (
                    float(rec["pos"][step, trial, i, 0]),
                    float(rec["pos"][step, trial, i, 1]),
                    float(rec["turn"][step, trial, i]),
                    float(rec["lin"][step, trial, i]),
                )
            )
            for i in range(self.params.n_predators)
        )
        prey_entities: tuple[EntityState, ...] = ()
        if rec["present"][step, trial] or not self.params.published_layout:
            prey_entities = (
                EntityState(
                    (
                        float(rec["prey"][step, trial, 0]),
                        float(rec["prey"][step, trial, 1]),
                        float(rec["prey_turn"][step, trial]),
                        float(rec["prey_lin"][step, trial]),
                    )
                ),
            )
        bounds = EntityState((), (GEOM_CIRCLE, 0.0, 0.0, self.params.zone_radius))
        return TaskStateSnapshot(
            groups=(
                EntityGroup(specs[0], predators),
                EntityGroup(specs[1], prey_entities),
                EntityGroup(specs[2], (bounds,)),
            ),
            distance=geometry_distance,
        )
