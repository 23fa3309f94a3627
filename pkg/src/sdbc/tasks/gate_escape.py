"""Gate escape: a robot group must exit through a gate that shuts shortly
after the first robot passes, so escaping together requires waiting for
each other."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..formalism import (
    GEOM_POINT,
    GEOM_SEGMENTS,
    EntityGroup,
    EntityState,
    GroupSpec,
    TaskStateSnapshot,
    geometry_distance,
)
from ..simulation import (
    range_bearing_arrays,
    resolve_collisions_arrays,
    step_kinematics_arrays,
)
from .base import (
    Controller,
    Task,
    TrialBatch,
    carry_forward,
    group_dispersion_series,
    masked_mean,
    nearest_neighbor_sensor,
    pairwise_distances,
    random_positions,
)

_NO_WALLS = np.empty((0, 4))


@dataclass(frozen=True)
class GateEscapeParams:
    n_robots: int = 4
    arena_size: float = 2.0
    gate_width: float = 0.3
    gate_close_delay: int = 25  # steps between first passage and closure
    grace_steps: int = 25       # steps after closure before the trial ends
    max_steps: int = 500
    robot_radius: float = 0.05
    v_max: float = 0.12
    axle: float = 0.08
    dt: float = 0.1
    neighbor_sense: float = 1.0
    wall_sense: float = 0.5
    published_layout: bool = True  # fold the gate-walls distance out of the schema


def gate_fitness(g: int, t: int, tau: int, n: int) -> float:
    """Escaped count plus normalised elapsed time, rescaled to [0, 1]."""
    if not (0 <= g <= n and 0 <= t <= tau):
        raise ValueError("escaped count or time out of range")
    return (g + t / tau) / (1 + n)


class GateEscapeTask(Task):
    name = "gate_escape"
    n_inputs = 6
    n_outputs = 2

    def __init__(self, params: GateEscapeParams = GateEscapeParams()):
        self.params = params
        s = params.arena_size
        half = params.gate_width / 2.0
        self.gate_center = (s / 2.0, s)
        gx1, gx2 = s / 2.0 - half, s / 2.0 + half
        # static walls; the segment that closes the gate is the gate's own
        self.walls = np.array(
            [
                (0.0, 0.0, s, 0.0),
                (s, 0.0, s, s),
                (s, s, gx2, s),
                (gx1, s, 0.0, s),
                (0.0, s, 0.0, 0.0),
            ]
        )
        self.closing_segment = np.array([(gx1, s, gx2, s)])
        self.diagonal = math.hypot(s, s)

    @property
    def max_steps(self) -> int:
        return self.params.max_steps

    def group_specs(self) -> tuple[GroupSpec, ...]:
        n = self.params.n_robots
        return (
            GroupSpec(
                "agents", 5, 0, n,
                ("x", "y", "turning speed", "linear speed", "is passing gate"),
            ),
            GroupSpec("gate", 1, 1, 1, ("is closing",)),
            GroupSpec("walls", 0, 1, 1),
        )

    def excluded_pairs(self) -> frozenset[frozenset[str]]:
        if self.params.published_layout:
            return frozenset({frozenset({"gate", "walls"})})
        return frozenset()

    def _initial_state(self, seeds: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        margin = p.robot_radius + 0.01
        pos = np.empty((len(seeds), p.n_robots, 2))
        heading = np.empty((len(seeds), p.n_robots))
        for b, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            pos[b] = random_positions(
                rng,
                p.n_robots,
                (margin, margin),
                (p.arena_size - margin, p.arena_size - margin),
                2.2 * p.robot_radius,
            )
            heading[b] = rng.uniform(-math.pi, math.pi, p.n_robots)
        return pos, heading

    def _sensors(
        self,
        pos: np.ndarray,
        heading: np.ndarray,
        active: np.ndarray,
        escaped_frac: np.ndarray,
        rows: np.ndarray,
    ) -> np.ndarray:
        p = self.params
        b, n = pos.shape[0], pos.shape[1]
        x = np.empty((b, n, 6))
        gr, gb, _ = range_bearing_arrays(
            pos[..., 0], pos[..., 1], heading,
            self.gate_center[0], self.gate_center[1], self.diagonal,
        )
        x[..., 0] = gr
        x[..., 1] = gb / math.pi
        x[..., 2], x[..., 3] = nearest_neighbor_sensor(
            pos, heading, active, p.neighbor_sense, rows
        )
        # proximity to the enclosing box, cheap stand-in for per-segment math
        s = p.arena_size
        box_d = np.minimum(
            np.minimum(pos[..., 0], s - pos[..., 0]),
            np.minimum(pos[..., 1], s - pos[..., 1]),
        )
        x[..., 4] = np.clip(1.0 - box_d / p.wall_sense, 0.0, 1.0)
        x[..., 5] = escaped_frac[:, None]
        return x

    def _wall_distance(self, pos: np.ndarray) -> np.ndarray:
        a = self.walls[:, 0:2]
        d = self.walls[:, 2:4] - a
        seg_sq = np.maximum((d * d).sum(axis=1), 1e-30)
        rel = pos[..., None, :] - a
        t = np.clip((rel * d).sum(axis=-1) / seg_sq, 0.0, 1.0)
        delta = rel - t[..., None] * d
        return np.sqrt((delta * delta).sum(axis=-1)).min(axis=-1)

    def simulate(
        self, controller: Controller, seeds: Sequence[int], record: bool = False
    ) -> TrialBatch:
        p = self.params
        b, n, tau = len(seeds), p.n_robots, p.max_steps
        pos, heading = self._initial_state(seeds)
        active = np.ones((b, n), dtype=bool)
        done = np.zeros(b, dtype=bool)
        steps = np.full(b, tau, dtype=int)
        first_pass = np.full(b, -1, dtype=int)
        escaped = np.zeros(b, dtype=int)

        r_pos = np.empty((tau, b, n, 2))
        r_turn = np.empty((tau, b, n))
        r_lin = np.empty((tau, b, n))
        r_pass = np.empty((tau, b, n))
        r_active = np.empty((tau, b, n), dtype=bool)
        r_closing = np.empty((tau, b))
        r_heading = np.empty((tau, b, n)) if record else None
        r_wheels = np.empty((tau, b, n, 2)) if record else None

        cx, cy = self.gate_center
        rows = np.arange(b)[:, None]
        t_used = tau
        for t in range(tau):
            if done.all():
                t_used = t
                break
            sensors = self._sensors(pos, heading, active, escaped / n, rows)
            wheels = controller(sensors.reshape(b * n, 6)).reshape(b, n, 2)
            move = active & ~done[:, None]
            wheels = wheels * move[..., None]
            nx, ny, nh = step_kinematics_arrays(
                pos[..., 0], pos[..., 1], heading,
                wheels[..., 0], wheels[..., 1], p.dt, p.v_max, p.axle,
            )
            pos = np.stack([nx, ny], axis=-1)
            heading = nh
            closed = (first_pass >= 0) & (t >= first_pass + p.gate_close_delay)
            pos = resolve_collisions_arrays(pos, p.robot_radius, move, _NO_WALLS, max_passes=4)
            pos = self._clamp_walls(pos, move, closed)

            newly_escaped = move & (pos[..., 1] > p.arena_size + p.robot_radius)
            if newly_escaped.any():
                active = active & ~newly_escaped
                escaped = np.where(done, escaped, n - active.sum(axis=1))
                just_opened = (first_pass < 0) & (escaped > 0) & ~done
                first_pass = np.where(just_opened, t, first_pass)

            turn = p.v_max * (wheels[..., 1] - wheels[..., 0]) / p.axle
            lin = p.v_max * (wheels[..., 0] + wheels[..., 1]) / 2.0
            passing = (
                active
                & (np.abs(pos[..., 0] - cx) <= p.gate_width / 2.0)
                & (np.abs(pos[..., 1] - cy) <= p.robot_radius)
            )
            r_pos[t] = pos
            r_turn[t] = turn
            r_lin[t] = lin
            r_pass[t] = passing
            r_active[t] = active
            r_closing[t] = (first_pass >= 0).astype(float)
            if record:
                r_heading[t] = heading
                r_wheels[t] = wheels

            all_out = active.sum(axis=1) == 0
            closed_out = (first_pass >= 0) & (
                t >= first_pass + p.gate_close_delay + p.grace_steps
            )
            ending = ~done & (all_out | closed_out)
            steps = np.where(ending, t + 1, steps)
            done = done | ending

        rec = {
            "pos": r_pos[:t_used],
            "turn": r_turn[:t_used],
            "lin": r_lin[:t_used],
            "passing": r_pass[:t_used],
            "active": r_active[:t_used],
            "closing": r_closing[:t_used],
            "steps": steps,
        }
        if record:
            rec["heading"] = r_heading[:t_used]
            rec["wheels"] = r_wheels[:t_used]

        features = self._features(rec)
        fitness = (escaped + steps / tau) / (1.0 + n)
        ts = self._ts_chars(rec, escaped, first_pass, steps)
        return TrialBatch(steps=steps, fitness=fitness, features=features,
                          ts_chars=ts, record=rec)

    def _clamp_walls(self, pos: np.ndarray, active: np.ndarray, closed: np.ndarray) -> np.ndarray:
        """Analytic wall resolution for the square arena with a gated top.

        Equivalent to segment-based resolution: axis clamps for the walls,
        radial pushes for the gate posts, and a full top clamp once the
        trial's gate has closed.  Escaped (inactive) robots sit outside and
        are left alone.
        """
        p = self.params
        s, r = p.arena_size, p.robot_radius
        gx1, gx2 = self.gate_center[0] - p.gate_width / 2.0, self.gate_center[0] + p.gate_width / 2.0
        x, y = pos[..., 0], pos[..., 1]
        x = np.where(active, np.clip(x, r, s - r), x)
        y = np.where(active, np.maximum(y, r), y)
        in_channel = (x > gx1) & (x < gx2)
        blocked = ~in_channel | (closed[:, None] & (y < s))
        y = np.where(active & blocked & (y > s - r) & (y < s), s - r, y)
        y = np.where(active & ~in_channel & (y >= s) & (y < s + r), s + r, y)
        pos = np.stack([x, y], axis=-1)
        for post in ((gx1, s), (gx2, s)):
            dx = pos[..., 0] - post[0]
            dy = pos[..., 1] - post[1]
            dist = np.sqrt(dx * dx + dy * dy)
            hit = active & (dist < r)
            if not hit.any():
                continue
            safe = np.where(dist > 1e-12, dist, 1.0)
            ux = np.where(dist > 1e-12, dx / safe, 0.0)
            uy = np.where(dist > 1e-12, dy / safe, -1.0)
            pos = np.where(
                hit[..., None],
                np.stack([post[0] + ux * r, post[1] + uy * r], axis=-1),
                pos,
            )
        return pos

    def _features(self, rec: dict) -> np.ndarray:
        """Schema order: agents size, agents means (x, y, turn, lin, passing),
        gate closing, agents dispersion, agents-gate, agents-walls."""
        p = self.params
        pos, active = rec["pos"], rec["active"]
        n_active = active.sum(axis=2)
        size = n_active / p.n_robots

        mean_cols = []
        for arr in (pos[..., 0], pos[..., 1], rec["turn"], rec["lin"], rec["passing"]):
            m, ok = masked_mean(arr, active)
            mean_cols.append(carry_forward(m, ok))

        dist = pairwise_distances(pos[..., 0], pos[..., 1])
        disp, disp_ok = group_dispersion_series(dist, active)
        disp = carry_forward(disp, disp_ok)

        gate_d = np.hypot(pos[..., 0] - self.gate_center[0], pos[..., 1] - self.gate_center[1])
        to_gate, ok = masked_mean(gate_d, active)
        to_gate = carry_forward(to_gate, ok)
        to_walls, ok = masked_mean(self._wall_distance(pos), active)
        to_walls = carry_forward(to_walls, ok)

        cols = [size] + mean_cols + [rec["closing"], disp, to_gate, to_walls]
        if not self.params.published_layout:
            gate_walls = self._gate_wall_distance() * np.ones_like(size)
            cols.append(gate_walls)
        return np.stack(cols, axis=-1)

    def _gate_wall_distance(self) -> float:
        gate = EntityState((0.0,), (GEOM_POINT, *self.gate_center))
        return geometry_distance(gate, self._walls_entity())

    def _walls_entity(self) -> EntityState:
        return EntityState((), (GEOM_SEGMENTS, *self.walls.ravel()))

    def _ts_chars(
        self, rec: dict, escaped: np.ndarray, first_pass: np.ndarray, steps: np.ndarray
    ) -> np.ndarray:
        p = self.params
        pos, active = rec["pos"], rec["active"]
        t_axis = np.arange(pos.shape[0])[:, None]
        in_trial = t_axis < steps[None, :]
        n_active = active.sum(axis=2)

        gate_d = np.hypot(pos[..., 0] - self.gate_center[0], pos[..., 1] - self.gate_center[1])
        per_step, ok = masked_mean(gate_d, active)
        valid = in_trial & ok
        mean_gate = (per_step * valid).sum(axis=0) / np.maximum(valid.sum(axis=0), 1)

        dist = pairwise_distances(pos[..., 0], pos[..., 1])
        pair_mask = active[..., :, None] & active[..., None, :]
        totals = (dist * pair_mask).sum(axis=(-2, -1))
        n_pairs = np.maximum(n_active * (n_active - 1), 1)
        disp = np.where(n_active >= 2, totals / n_pairs, 0.0)
        mean_disp = (disp * in_trial).sum(axis=0) / np.maximum(in_trial.sum(axis=0), 1)

        opened = np.where(first_pass >= 0, (first_pass + 1) / p.max_steps, 1.0)
        out = np.stack(
            [
                escaped / p.n_robots,
                opened,
                mean_gate / self.diagonal,
                mean_disp / self.diagonal,
            ],
            axis=-1,
        )
        return np.clip(out, 0.0, 1.0)

    def snapshot(self, rec: dict, trial: int, step: int) -> TaskStateSnapshot:
        specs = self.group_specs()
        robots = tuple(
            EntityState(
                (
                    float(rec["pos"][step, trial, i, 0]),
                    float(rec["pos"][step, trial, i, 1]),
                    float(rec["turn"][step, trial, i]),
                    float(rec["lin"][step, trial, i]),
                    float(rec["passing"][step, trial, i]),
                )
            )
            for i in range(self.params.n_robots)
            if rec["active"][step, trial, i]
        )
        gate = EntityState(
            (float(rec["closing"][step, trial]),), (GEOM_POINT, *self.gate_center)
        )
        return TaskStateSnapshot(
            groups=(
                EntityGroup(specs[0], robots),
                EntityGroup(specs[1], (gate,)),
                EntityGroup(specs[2], (self._walls_entity(),)),
            ),
            distance=geometry_distance,
            excluded_pairs=self.excluded_pairs(),
        )
