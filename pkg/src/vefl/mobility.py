"""Car-following mobility inside a circular coverage area.

Vehicles drive on straight lanes parallel to the x axis and follow the
Intelligent Driver Model (IDM). The base station sits at the origin and
covers a disk of radius ``r``; a vehicle is a candidate client while it is
strictly inside that disk.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import PositionOutsideCoverage


@dataclass(frozen=True)
class IdmParams:
    u_max: float  # desired / maximum speed, m/s
    a_max: float = 1.5  # maximum acceleration
    b_comf: float = 2.0  # comfortable deceleration
    s_saf: float = 2.0  # jam distance, m
    t_headway: float = 1.5  # safe time headway, s


@dataclass
class VehicleState:
    x: float
    y: float
    speed: float
    accel: float = 0.0
    gap_to_leader: float = np.inf  # inf: free road ahead
    speed_delta_to_leader: float = 0.0  # own speed minus leader speed
    lane_id: int = 0
    entry_slot: int = 0
    vid: int = -1
    direction: int = 1  # +1 drives towards +x, -1 towards -x


@dataclass(frozen=True)
class CoverageGeometry:
    radius: float = 500.0

    def contains(self, x, y):
        return x * x + y * y < self.radius ** 2


def desired_gap(speed, speed_delta, p: IdmParams):
    """Dynamic desired gap s* of the IDM."""
    return p.s_saf + speed * p.t_headway + speed * speed_delta / (2.0 * np.sqrt(p.a_max * p.b_comf))


def idm_acceleration(speed, gap, speed_delta, p: IdmParams):
    """IDM acceleration; works on scalars or arrays.

    ``gap = inf`` gives the free-road term only.
    """
    speed = np.asarray(speed, float)
    gap = np.asarray(gap, float)
    free = p.a_max * (1.0 - (speed / p.u_max) ** 4)
    s_star = np.maximum(desired_gap(speed, speed_delta, p), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inter = np.where(np.isfinite(gap), p.a_max * (s_star / np.maximum(gap, 1e-6)) ** 2, 0.0)
    out = free - inter
    return float(out) if out.ndim == 0 else out


def coverage_boundary_distances(x, y, geom: CoverageGeometry):
    """Distances to the coverage circle along the two axes.

    Returns ``(left, right, down, up)``: how far the point can move along
    -x, +x, -y, +y before it reaches the circle. Each pair sums to the chord
    through the point.
    """
    r2 = geom.radius ** 2
    if x * x + y * y >= r2:
        raise PositionOutsideCoverage(f"({x:.3f}, {y:.3f}) is not inside radius {geom.radius}")
    hx = np.sqrt(r2 - y * y)
    hy = np.sqrt(r2 - x * x)
    return (abs(x + hx), abs(x - hx), abs(y + hy), abs(y - hy))


def sojourn_lower_bound(x, y, u_max, geom: CoverageGeometry):
    """Lower bound on the time left inside coverage.

    Valid for any path made of axis-parallel moves at speed <= u_max: the
    L1 distance from an interior point to the circle is attained along an
    axis, so no such path can leave sooner. Paths with diagonal motion can
    leave earlier (see tests).
    """
    return min(coverage_boundary_distances(x, y, geom)) / u_max


@dataclass
class RoadConfig:
    """Straight multi-lane road crossing the coverage disk."""

    n_lanes: int = 2
    lane_width: float = 3.5
    offset: float = 0.0  # y of the first lane
    two_way: bool = True  # alternate lane directions
    arrival_rate: float = 0.5  # vehicles per second, all lanes together
    initial_vehicles: int = 30
    entry_speed_frac: tuple = (0.6, 1.0)
    dt: float = 0.1  # mobility sub-step, s
    min_entry_gap: float = 10.0


class Road:
    """Euler-integrated IDM traffic on a straight road through the coverage disk.

    Vehicles enter on the disk boundary with Poisson arrivals and are
    removed the first sub-step they are outside the disk. ``departed``
    collects removed vehicles together with their interpolated exit time.
    """

    def __init__(self, cfg: RoadConfig, idm: IdmParams, geom: CoverageGeometry, rng):
        self.cfg, self.idm, self.geom = cfg, idm, geom
        self.rng = rng
        self.time = 0.0
        self.vehicles: List[VehicleState] = []
        self.next_id = 0
        self.exit_times = {}
        self.arrivals = 0
        self.lanes = []
        for k in range(cfg.n_lanes):
            y = cfg.offset + k * cfg.lane_width
            if y * y >= geom.radius ** 2:
                raise ValueError("lane does not cross the coverage disk")
            d = -1 if (cfg.two_way and k % 2 == 1) else 1
            self.lanes.append((y, d, np.sqrt(geom.radius ** 2 - y * y)))
        self._populate(cfg.initial_vehicles)
        self._refresh_leaders()

    def _spawn(self, lane, x, speed):
        y, d, _ = self.lanes[lane]
        v = VehicleState(x=x, y=y, speed=speed, lane_id=lane, direction=d,
                         entry_slot=int(round(self.time / self.cfg.dt)), vid=self.next_id)
        self.next_id += 1
        self.vehicles.append(v)
        return v

    def _populate(self, count):
        lo, hi = self.cfg.entry_speed_frac
        for _ in range(count):
            lane = int(self.rng.integers(len(self.lanes)))
            y, d, half = self.lanes[lane]
            taken = [v.x for v in self.vehicles if v.lane_id == lane]
            for _attempt in range(50):
                x = float(self.rng.uniform(-half * 0.98, half * 0.98))
                if all(abs(x - t) >= self.cfg.min_entry_gap for t in taken):
                    break
            self._spawn(lane, x, float(self.rng.uniform(lo, hi) * self.idm.u_max))

    def _arrive(self, dt):
        n_new = self.rng.poisson(self.cfg.arrival_rate * dt)
        lo, hi = self.cfg.entry_speed_frac
        for _ in range(n_new):
            lane = int(self.rng.integers(len(self.lanes)))
            y, d, half = self.lanes[lane]
            x0 = -d * half * (1 - 1e-9)
            nearest = min((abs(v.x - x0) for v in self.vehicles if v.lane_id == lane), default=np.inf)
            if nearest < self.cfg.min_entry_gap:
                continue  # entry blocked, arrival lost
            self._spawn(lane, x0, float(self.rng.uniform(lo, hi) * self.idm.u_max))
            self.arrivals += 1

    def _refresh_leaders(self):
        for lane in range(len(self.lanes)):
            members = [v for v in self.vehicles if v.lane_id == lane]
            if not members:
                continue
            d = self.lanes[lane][1]
            members.sort(key=lambda v: d * v.x)
            for follower, leader in zip(members[:-1], members[1:]):
                follower.gap_to_leader = d * (leader.x - follower.x)
                follower.speed_delta_to_leader = follower.speed - leader.speed
            members[-1].gap_to_leader = np.inf
            members[-1].speed_delta_to_leader = 0.0

    def step(self):
        """Advance one sub-step; returns the vehicles that left coverage."""
        dt = self.cfg.dt
        left = step_mobility(self.vehicles, self.idm, self.geom, dt)
        for v, frac in left:
            self.exit_times[v.vid] = self.time + frac * dt
        gone = {v.vid for v, _ in left}
        self.vehicles = [v for v in self.vehicles if v.vid not in gone]
        self.time += dt
        self._arrive(dt)
        self._refresh_leaders()
        return [v for v, _ in left]


def step_mobility(vehicles, idm: IdmParams, geom: CoverageGeometry, dt):
    """One explicit Euler step for every vehicle, in place.

    Speeds are clamped to [0, u_max] and positions advance with the new
    speed. Returns ``(vehicle, fraction)`` for vehicles that crossed the
    coverage boundary during the step, with the crossing point found by
    linear interpolation along the step.
    """
    if not vehicles:
        return []
    speed = np.array([v.speed for v in vehicles])
    gap = np.array([v.gap_to_leader for v in vehicles])
    dv = np.array([v.speed_delta_to_leader for v in vehicles])
    acc = idm_acceleration(speed, gap, dv, idm)
    acc = np.atleast_1d(acc)
    new_speed = np.clip(speed + acc * dt, 0.0, idm.u_max)
    left = []
    r2 = geom.radius ** 2
    for v, a, u in zip(vehicles, acc, new_speed):
        x0 = v.x
        v.accel = float(a)
        v.speed = float(u)
        v.x = x0 + v.direction * v.speed * dt
        if v.x * v.x + v.y * v.y >= r2:
            half = np.sqrt(r2 - v.y * v.y)
            boundary = v.direction * half
            move = abs(v.x - x0)
            frac = abs(boundary - x0) / move if move > 0 else 0.0
            left.append((v, float(np.clip(frac, 0.0, 1.0))))
    return left


@dataclass
class MobilityTrace:
    """Snapshots of the road every ``dt`` seconds."""

    dt: float
    times: np.ndarray
    # per snapshot: dict vid -> (x, y, speed)
    frames: list
    exit_times: dict
    u_max: float
    geom: CoverageGeometry

    def pool_at(self, t):
        """Vehicles inside coverage at time ``t`` (nearest earlier snapshot)."""
        k = int(np.clip(np.floor(t / self.dt + 1e-9), 0, len(self.frames) - 1))
        return self.frames[k]

    def position_at(self, vid, t):
        """Linear interpolation between the two snapshots around ``t``."""
        k = int(np.clip(np.floor(t / self.dt + 1e-9), 0, len(self.frames) - 1))
        a = self.frames[k].get(vid)
        b = self.frames[k + 1].get(vid) if k + 1 < len(self.frames) else None
        if a is None:
            return None
        if b is None:
            return a[0], a[1]
        w = t / self.dt - k
        return a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])

    def unique_vehicles(self):
        ids = set()
        for f in self.frames:
            ids.update(f.keys())
        return sorted(ids)


def generate_trace(duration, cfg: RoadConfig, idm: IdmParams, geom: CoverageGeometry, rng) -> MobilityTrace:
    road = Road(cfg, idm, geom, rng)
    n_steps = int(np.ceil(duration / cfg.dt)) + 1
    frames = []
    times = np.arange(n_steps + 1) * cfg.dt
    for _ in range(n_steps + 1):
        frames.append({v.vid: (v.x, v.y, v.speed) for v in road.vehicles})
        road.step()
    # vehicles still present never leave within the horizon
    return MobilityTrace(cfg.dt, times, frames, dict(road.exit_times), idm.u_max, geom)
