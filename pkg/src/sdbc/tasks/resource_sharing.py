"""Resource sharing: robots drain energy as they move and must take turns
on a single charging station to survive the trial."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..formalism import (
    GEOM_POINT,
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
class ResourceSharingParams:
    # energy scales are matched to travel: a full tank covers roughly four
    # arena widths at full speed, while idling through a whole trial costs
    # about twice e_max, so survival requires charging and moving stays
    # meaningfully priced
    n_robots: int = 4
    arena_size: float = 2.0
    station_radius: float = 0.2
    e_max: float = 100.0
    start_energy: float = 50.0
    consumption_base: float = 0.2
    consumption_move: float = 0.5
    recharge: float = 2.0
    max_steps: int = 1000
    robot_radius: float = 0.05
    v_max: float = 0.3
    axle: float = 0.08
    dt: float = 0.1
    neighbor_sense: float = 1.0
    station_sense: float = 1.0   # station (and its occupancy) visible inside this radius
    spawn_clearance: float = 0.0  # minimum spawn distance from the station


def sharing_fitness(s: int, mean_energy: float, e_max: float, n: int) -> float:
    """Survivor count plus normalised mean energy, rescaled to [0, 1]."""
    if not (0 <= s <= n) or not (0.0 <= mean_energy <= e_max):
        raise ValueError("survivors or mean energy out of range")
    return (s + mean_energy / e_max) / (1 + n)


class ResourceSharingTask(Task):
    name = "resource_sharing"
    n_inputs = 6
    n_outputs = 2

    def __init__(self, params: ResourceSharingParams = ResourceSharingParams()):
        self.params = params
        s = params.arena_size
        self.station = (s / 2.0, s / 2.0)
        self.walls = np.array(
            [
                (0.0, 0.0, s, 0.0),
                (s, 0.0, s, s),
                (s, s, 0.0, s),
                (0.0, s, 0.0, 0.0),
            ]
        )
        self.diagonal = math.hypot(s, s)
        # largest possible distance from the station, for the TS vector
        corners = [(0, 0), (s, 0), (0, s), (s, s)]
        self.station_reach = max(math.hypot(c[0] - self.station[0], c[1] - self.station[1]) for c in corners)

    @property
    def max_steps(self) -> int:
        return self.params.max_steps

    def group_specs(self) -> tuple[GroupSpec, ...]:
        n = self.params.n_robots
        return (
            GroupSpec(
                "agents", 6, 0, n,
                ("x", "y", "turning speed", "linear speed", "energy level", "is charging"),
            ),
            GroupSpec("station", 1, 1, 1, ("is occupied",)),
        )

    def _initial_state(self, seeds: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        margin = p.robot_radius + 0.01
        pos = np.empty((len(seeds), p.n_robots, 2))
        heading = np.empty((len(seeds), p.n_robots))
        for b, seed in enumerate(seeds):
            rng = np.random.default_rng(seed)
            placed = random_positions(
                rng,
                p.n_robots,
                (margin, margin),
                (p.arena_size - margin, p.arena_size - margin),
                2.2 * p.robot_radius,
            )
            if p.spawn_clearance > 0.0:
                for i in range(p.n_robots):
                    while np.hypot(*(placed[i] - self.station)) < p.spawn_clearance:
                        placed[i] = rng.uniform(
                            (margin, margin),
                            (p.arena_size - margin, p.arena_size - margin),
                        )
            pos[b] = placed
            heading[b] = rng.uniform(-math.pi, math.pi, p.n_robots)
        return pos, heading

    def _sensors(
        self,
        pos: np.ndarray,
        heading: np.ndarray,
        alive: np.ndarray,
        energy: np.ndarray,
        occupied: np.ndarray,
        rows: np.ndarray,
    ) -> np.ndarray:
        p = self.params
        b, n = pos.shape[0], pos.shape[1]
        x = np.empty((b, n, 6))
        x[..., 0] = energy / p.e_max
        sr, sb, seen = range_bearing_arrays(
            pos[..., 0], pos[..., 1], heading,
            self.station[0], self.station[1], p.station_sense,
        )
        x[..., 1] = np.where(seen, sr, 1.0)
        x[..., 2] = np.where(seen, sb / math.pi, 0.0)
        x[..., 3] = np.where(seen, occupied[:, None], 0.0)
        x[..., 4], x[..., 5] = nearest_neighbor_sensor(
            pos, heading, alive, p.neighbor_sense, rows
        )
        return x

    def simulate(
        self, controller: Controller, seeds: Sequence[int], record: bool = False
    ) -> TrialBatch:
        p = self.params
        b, n, tau = len(seeds), p.n_robots, p.max_steps
        pos, heading = self._initial_state(seeds)
        alive = np.ones((b, n), dtype=bool)
        energy = np.full((b, n), p.start_energy)
        occupant = np.full(b, -1, dtype=int)
        done = np.zeros(b, dtype=bool)
        steps = np.full(b, tau, dtype=int)
        energy_integral = np.zeros(b)
        speed_sum = np.zeros(b)
        alive_steps = np.zeros(b)

        r_pos = np.empty((tau, b, n, 2))
        r_turn = np.empty((tau, b, n))
        r_lin = np.empty((tau, b, n))
        r_energy = np.empty((tau, b, n))
        r_charging = np.empty((tau, b, n))
        r_alive = np.empty((tau, b, n), dtype=bool)
        r_occupied = np.empty((tau, b))
        r_heading = np.empty((tau, b, n)) if record else None
        r_wheels = np.empty((tau, b, n, 2)) if record else None

        rows = np.arange(b)[:, None]
        flat_rows = np.arange(b)
        t_used = tau
        for t in range(tau):
            if done.all():
                t_used = t
                break
            occupied_flag = (occupant >= 0).astype(float)
            sensors = self._sensors(pos, heading, alive, energy, occupied_flag, rows)
            wheels = controller(sensors.reshape(b * n, 6)).reshape(b, n, 2)
            move = alive & ~done[:, None]
            wheels = wheels * move[..., None]
            nx, ny, nh = step_kinematics_arrays(
                pos[..., 0], pos[..., 1], heading,
                wheels[..., 0], wheels[..., 1], p.dt, p.v_max, p.axle,
            )
            pos = np.stack([nx, ny], axis=-1)
            heading = nh
            pos = resolve_collisions_arrays(pos, p.robot_radius, move, _NO_WALLS, max_passes=4)
            # axis clamps are exact wall resolution for a closed box; dead
            # robots already rest inside, so clamping them is a no-op
            pos = np.clip(pos, p.robot_radius, p.arena_size - p.robot_radius)

            # station occupancy: the holder keeps it while alive and inside;
            # otherwise the nearest alive robot inside takes it
            st_dist = np.hypot(pos[..., 0] - self.station[0], pos[..., 1] - self.station[1])
            inside = alive & (st_dist <= p.station_radius)
            keeps = (occupant >= 0) & inside[flat_rows, np.maximum(occupant, 0)]
            occupant = np.where(keeps, occupant, -1)
            claim_d = np.where(inside, st_dist, np.inf)
            claimant = claim_d.argmin(axis=1)
            has_claim = np.isfinite(claim_d[flat_rows, claimant])
            occupant = np.where((occupant < 0) & has_claim & ~done, claimant, occupant)

            charging = np.zeros((b, n), dtype=bool)
            holders = np.nonzero(occupant >= 0)[0]
            charging[holders, occupant[holders]] = True
            charging &= move

            consumption = p.consumption_base + p.consumption_move * np.abs(
                (wheels[..., 0] + wheels[..., 1]) / 2.0
            )
            energy = np.where(move, energy - consumption, energy)
            energy = np.where(charging, np.minimum(energy + p.recharge, p.e_max), energy)
            died = move & (energy <= 0.0)
            energy = np.maximum(energy, 0.0)
            alive = alive & ~died
            freed = (occupant >= 0) & ~alive[flat_rows, np.maximum(occupant, 0)]
            occupant = np.where(freed, -1, occupant)

            turn = p.v_max * (wheels[..., 1] - wheels[..., 0]) / p.axle
            lin = p.v_max * (wheels[..., 0] + wheels[..., 1]) / 2.0
            live_now = alive & ~done[:, None]
            energy_integral += np.where(done, 0.0, (energy * alive).sum(axis=1))
            speed_sum += np.where(done, 0.0, (np.abs(lin) * live_now).sum(axis=1))
            alive_steps += np.where(done, 0.0, live_now.sum(axis=1))

            r_pos[t] = pos
            r_turn[t] = turn
            r_lin[t] = lin
            r_energy[t] = energy
            r_charging[t] = charging & alive
            r_alive[t] = alive
            r_occupied[t] = (occupant >= 0).astype(float)
            if record:
                r_heading[t] = heading
                r_wheels[t] = wheels

            ending = ~done & (alive.sum(axis=1) == 0)
            steps = np.where(ending, t + 1, steps)
            done = done | ending

        rec = {
            "pos": r_pos[:t_used],
            "turn": r_turn[:t_used],
            "lin": r_lin[:t_used],
            "energy": r_energy[:t_used],
            "charging": r_charging[:t_used],
            "alive": r_alive[:t_used],
            "occupied": r_occupied[:t_used],
            "steps": steps,
        }
        if record:
            rec["heading"] = r_heading[:t_used]
            rec["wheels"] = r_wheels[:t_used]

        survivors = rec["alive"][steps - 1, np.arange(b)].sum(axis=1)
        mean_energy = energy_integral / (n * tau)
        fitness = (survivors + mean_energy / p.e_max) / (1.0 + n)

        st_dist = np.hypot(
            rec["pos"][..., 0] - self.station[0], rec["pos"][..., 1] - self.station[1]
        )
        per_step, ok = masked_mean(st_dist, rec["alive"])
        t_axis = np.arange(t_used)[:, None]
        valid = (t_axis < steps[None, :]) & ok
        mean_station = (per_step * valid).sum(axis=0) / np.maximum(valid.sum(axis=0), 1)
        ts = np.stack(
            [
                survivors / n,
                mean_energy / p.e_max,
                speed_sum / np.maximum(alive_steps, 1) / p.v_max,
                mean_station / self.station_reach,
            ],
            axis=-1,
        )
        return TrialBatch(
            steps=steps,
            fitness=fitness,
            features=self._features(rec),
            ts_chars=np.clip(ts, 0.0, 1.0),
            record=rec,
        )

    def _features(self, rec: dict) -> np.ndarray:
        """Schema order: agents size, agents means (x, y, turn, lin, energy,
        charging), station occupied, agents dispersion, agents-station."""
        p = self.params
        pos, alive = rec["pos"], rec["alive"]
        size = alive.sum(axis=2) / p.n_robots

        mean_cols = []
        for arr in (
            pos[..., 0], pos[..., 1], rec["turn"], rec["lin"],
            rec["energy"], rec["charging"],
        ):
            m, ok = masked_mean(arr, alive)
            mean_cols.append(carry_forward(m, ok))

        dist = pairwise_distances(pos[..., 0], pos[..., 1])
        disp, disp_ok = group_dispersion_series(dist, alive)
        disp = carry_forward(disp, disp_ok)

        st_dist = np.hypot(pos[..., 0] - self.station[0], pos[..., 1] - self.station[1])
        to_station, ok = masked_mean(st_dist, alive)
        to_station = carry_forward(to_station, ok)

        cols = [size] + mean_cols + [rec["occupied"], disp, to_station]
        return np.stack(cols, axis=-1)

    def snapshot(self, rec: dict, trial: int, step: int) -> TaskStateSnapshot:
        specs = self.group_specs()
        robots = tuple(
            EntityState(
                (
                    float(rec["pos"][step, trial, i, 0]),
                    float(rec["pos"][step, trial, i, 1]),
                    float(rec["turn"][step, trial, i]),
                    float(rec["lin"][step, trial, i]),
                    float(rec["energy"][step, trial, i]),
                    float(rec["charging"][step, trial, i]),
                )
            )
            for i in range(self.params.n_robots)
            if rec["alive"][step, trial, i]
        )
        station = EntityState(
            (float(rec["occupied"][step, trial]),), (GEOM_POINT, *self.station)
        )
        return TaskStateSnapshot(
            groups=(
                EntityGroup(specs[0], robots),
                EntityGroup(specs[1], (station,)),
            ),
            distance=geometry_distance,
        )
