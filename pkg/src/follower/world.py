"""2D simulation world and the closed-loop episode runner.

Per planner tick (0.5 s): place the target, render the camera frame, run
detection, read both ultrasonic sensors and ask the policy for a desired
twist.  Then 50 control substeps of 10 ms run the PI loops, the velocity
plant, exact unicycle motion, encoder emulation and odometry.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from follower import vision
from follower.control import (
    CONTROL_DT,
    DEFAULT_GAINS,
    PLANT_TAU,
    PidGains,
    PiState,
    PlantModel,
    controlled_twist,
    plant_step,
)
from follower.kinematics import (
    BodyTwist,
    EncoderDelta,
    Pose,
    RobotGeometry,
    WheelSpeeds,
    body_to_wheel_speeds,
    integrate_unicycle,
    odometry_update,
)
from follower.planner import (
    INITIAL_X_ANGLE,
    ExpertConfig,
    PlannerBundle,
    PlannerInput,
    V_CLAMP,
    expert_policy,
    plan_twist,
)
from follower.vision import FRAME_HEIGHT, FRAME_WIDTH, Detection, Proximity, VisionConfig

ENV_FORMAT_VERSION = 1
BUILTIN_NAMES = ("env1", "env2", "env3")


# ---------------------------------------------------------------- geometry


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle; (x, y) is the lower-left corner, metres."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("rectangle width and height must be positive")

    @property
    def x1(self) -> float:
        return self.x + self.w

    @property
    def y1(self) -> float:
        return self.y + self.h

    def contains_rect(self, other: "Rect") -> bool:
        return (self.x <= other.x and self.y <= other.y
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    @classmethod
    def centered(cls, cx: float, cy: float, w: float, h: float) -> "Rect":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class ObstacleEvent:
    """At time ``t`` an obstacle appears (or moves, if ``index`` names one).

    With ``relative`` the rectangle is centred ``ahead`` metres in front of
    the robot and ``lateral`` metres to its left at trigger time.
    """

    t: float
    w: float
    h: float
    index: Optional[int] = None
    x: float = 0.0
    y: float = 0.0
    relative: bool = False
    ahead: float = 0.0
    lateral: float = 0.0

    def rect_for(self, pose: Pose) -> Rect:
        if not self.relative:
            return Rect(self.x, self.y, self.w, self.h)
        c, s = math.cos(pose.a), math.sin(pose.a)
        cx = pose.x + self.ahead * c - self.lateral * s
        cy = pose.y + self.ahead * s + self.lateral * c
        return Rect.centered(cx, cy, self.w, self.h)


@dataclass
class Environment:
    name: str
    bounds: Optional[Rect]
    obstacles: list
    target_path: list  # (t, x, y) waypoints
    robot_start: Pose = field(default_factory=Pose)
    events: list = field(default_factory=list)

    def __post_init__(self):
        if not self.target_path:
            raise ValueError("target path needs at least one waypoint")
        ts = [p[0] for p in self.target_path]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("target path times must be strictly increasing")
        if self.bounds is not None:
            for o in self.obstacles:
                if not self.bounds.contains_rect(o):
                    raise ValueError(f"obstacle {o} lies outside the world bounds")
        if collision_check(self.robot_start, RobotGeometry().body_radius, self):
            raise ValueError("robot start pose collides with an obstacle or the bounds")

    @property
    def path_end_time(self) -> float:
        return float(self.target_path[-1][0])

    def target_path_length(self) -> float:
        pts = np.array([(x, y) for _, x, y in self.target_path], dtype=float)
        return float(np.sum(np.hypot(*np.diff(pts, axis=0).T))) if len(pts) > 1 else 0.0

    def target_at(self, t: float) -> tuple[float, float]:
        """Linearly interpolated target position, held at the path ends."""
        path = self.target_path
        if t <= path[0][0]:
            return float(path[0][1]), float(path[0][2])
        for (t0, x0, y0), (t1, x1, y1) in zip(path, path[1:]):
            if t <= t1:
                f = (t - t0) / (t1 - t0)
                return x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        return float(path[-1][1]), float(path[-1][2])

    # -- serialisation

    def to_json(self) -> dict:
        return {
            "format": "follower-environment",
            "version": ENV_FORMAT_VERSION,
            "name": self.name,
            "bounds": None if self.bounds is None else asdict(self.bounds),
            "obstacles": [asdict(o) for o in self.obstacles],
            "target_path": [list(p) for p in self.target_path],
            "robot_start": asdict(self.robot_start),
            "events": [asdict(e) for e in self.events],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Environment":
        if d.get("version", ENV_FORMAT_VERSION) != ENV_FORMAT_VERSION:
            raise ValueError(f"unsupported environment version {d.get('version')}")
        bounds = d.get("bounds")
        return cls(
            name=d.get("name", "custom"),
            bounds=None if bounds is None else Rect(**bounds),
            obstacles=[Rect(**o) for o in d.get("obstacles", [])],
            target_path=[tuple(float(c) for c in p) for p in d["target_path"]],
            robot_start=Pose(**d.get("robot_start", {})),
            events=[ObstacleEvent(**e) for e in d.get("events", [])],
        )

    @classmethod
    def load(cls, path) -> "Environment":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def builtin_environments() -> list[Environment]:
    """The three shipped course layouts (versioned JSON under ``data/``)."""
    return [load_builtin(name) for name in BUILTIN_NAMES]


def load_builtin(name: str) -> Environment:
    if name not in BUILTIN_NAMES:
        raise KeyError(f"unknown built-in environment {name!r}")
    text = resources.files("follower").joinpath("data", f"{name}.json").read_text()
    return Environment.from_json(json.loads(text))


def resolve_environment(spec: str) -> Environment:
    """A built-in name or a path to an environment JSON file."""
    if spec in BUILTIN_NAMES:
        return load_builtin(spec)
    return Environment.load(spec)


# ---------------------------------------------------------------- sensing


@dataclass(frozen=True)
class SensorConfig:
    mount_angle_left: float = math.radians(15.0)
    mount_angle_right: float = math.radians(-15.0)
    cone_half_angle: float = math.radians(15.0)
    max_range_cm: float = 400.0
    n_rays: int = 9

    def __post_init__(self):
        if self.max_range_cm <= 0:
            raise ValueError("max_range_cm must be positive")
        if self.n_rays < 3 or self.n_rays % 2 == 0:
            raise ValueError("n_rays must be odd and >= 3")


@dataclass(frozen=True)
class CameraConfig:
    hfov_deg: float = 60.0
    target_radius_m: float = 0.05
    target_color: tuple = (235, 215, 35)
    background: tuple = (60, 60, 60)
    far_clip_m: float = 10.0

    def __post_init__(self):
        if not 0 < self.hfov_deg < 180:
            raise ValueError("hfov must lie in (0, 180) degrees")
        if self.target_radius_m <= 0:
            raise ValueError("target radius must be positive")

    @property
    def focal_px(self) -> float:
        return (FRAME_WIDTH / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)


def ray_rect_distance(ox: float, oy: float, dx: float, dy: float, r: Rect) -> float:
    """Distance along a unit ray to the rectangle (slab test); inf if missed.

    A ray starting inside the rectangle reports 0.
    """
    t_lo, t_hi = -math.inf, math.inf
    for o, d, lo, hi in ((ox, dx, r.x, r.x1), (oy, dy, r.y, r.y1)):
        if abs(d) < 1e-15:
            if o < lo or o > hi:
                return math.inf
            continue
        t0, t1 = (lo - o) / d, (hi - o) / d
        if t0 > t1:
            t0, t1 = t1, t0
        t_lo, t_hi = max(t_lo, t0), min(t_hi, t1)
        if t_lo > t_hi:
            return math.inf
    if t_hi < 0:
        return math.inf
    return max(t_lo, 0.0)


def ray_bounds_distance(ox: float, oy: float, dx: float, dy: float, b: Rect) -> float:
    """Distance from an interior point to the world boundary along a unit ray."""
    t = math.inf
    if dx > 1e-15:
        t = min(t, (b.x1 - ox) / dx)
    elif dx < -1e-15:
        t = min(t, (b.x - ox) / dx)
    if dy > 1e-15:
        t = min(t, (b.y1 - oy) / dy)
    elif dy < -1e-15:
        t = min(t, (b.y - oy) / dy)
    return max(t, 0.0)


def cast_ray(ox: float, oy: float, angle: float, env: Environment) -> float:
    dx, dy = math.cos(angle), math.sin(angle)
    best = math.inf
    for r in env.obstacles:
        best = min(best, ray_rect_distance(ox, oy, dx, dy, r))
    if env.bounds is not None:
        best = min(best, ray_bounds_distance(ox, oy, dx, dy, env.bounds))
    return best


def ultrasonic_distance(pose: Pose, mount_angle: float, cfg: SensorConfig,
                        env: Environment) -> float:
    """Nearest echo within the sensor cone, in cm (capped at max range)."""
    center = pose.a + mount_angle
    best = math.inf
    for off in np.linspace(-cfg.cone_half_angle, cfg.cone_half_angle, cfg.n_rays):
        best = min(best, cast_ray(pose.x, pose.y, center + float(off), env))
    return min(cfg.max_range_cm, best * 100.0)


def segment_blocked(x0: float, y0: float, x1: float, y1: float, env: Environment) -> bool:
    length = math.hypot(x1 - x0, y1 - y0)
    if length == 0:
        return False
    dx, dy = (x1 - x0) / length, (y1 - y0) / length
    return any(ray_rect_distance(x0, y0, dx, dy, r) < length for r in env.obstacles)


def target_projection(robot: Pose, target_xy, cam: CameraConfig):
    """(cx, cy, radius_px, bearing) of the target in the image, or None if
    it lies behind the camera or beyond the far clip."""
    tx, ty = target_xy
    dist = math.hypot(tx - robot.x, ty - robot.y)
    if dist <= 1e-9 or dist > cam.far_clip_m:
        return None
    # bearing is positive to the right of the heading
    bearing = -math.remainder(math.atan2(ty - robot.y, tx - robot.x) - robot.a, 2 * math.pi)
    if abs(bearing) >= math.pi / 2:
        return None
    f = cam.focal_px
    cx = FRAME_WIDTH / 2.0 + f * math.tan(bearing)
    return cx, FRAME_HEIGHT / 2.0, f * cam.target_radius_m / dist, bearing


_YY, _XX = np.mgrid[0:FRAME_HEIGHT, 0:FRAME_WIDTH]


def draw_disc(frame: np.ndarray, cx: float, cy: float, r: float, color) -> np.ndarray:
    """Fill every pixel whose centre lies within ``r`` of (cx, cy)."""
    inside = (_XX - cx) ** 2 + (_YY - cy) ** 2 <= r * r
    frame[inside] = color
    return frame


def render_frame(robot: Pose, target_xy, cam: CameraConfig = CameraConfig(),
                 env: Optional[Environment] = None) -> np.ndarray:
    """Synthetic 320x240 camera image of the target ball.

    The ball is drawn only when its bearing is inside the horizontal field
    of view and (given ``env``) no obstacle blocks the line of sight.
    """
    frame = np.empty((FRAME_HEIGHT, FRAME_WIDTH, 3), dtype=np.uint8)
    frame[:] = cam.background
    proj = target_projection(robot, target_xy, cam)
    if proj is None:
        return frame
    cx, cy, r, bearing = proj
    if abs(bearing) > math.radians(cam.hfov_deg) / 2.0:
        return frame
    if env is not None and segment_blocked(robot.x, robot.y, target_xy[0], target_xy[1], env):
        return frame
    return draw_disc(frame, cx, cy, r, cam.target_color)


def collision_check(pose: Pose, body_radius: float, env: Environment) -> bool:
    """Robot disc touches an obstacle or leaves the world (closed boundaries)."""
    for r in env.obstacles:
        nx = min(max(pose.x, r.x), r.x1)
        ny = min(max(pose.y, r.y), r.y1)
        if (pose.x - nx) ** 2 + (pose.y - ny) ** 2 <= body_radius ** 2:
            return True
    b = env.bounds
    if b is not None:
        if (pose.x - body_radius <= b.x or pose.x + body_radius >= b.x1
                or pose.y - body_radius <= b.y or pose.y + body_radius >= b.y1):
            return True
    return False


# ---------------------------------------------------------------- encoders


@dataclass
class EncoderState:
    """Cumulative wheel rotation (in ticks, unquantised) and ticks emitted."""

    left_pos: float = 0.0
    right_pos: float = 0.0
    left_emitted: int = 0
    right_emitted: int = 0


# Guards floor() against sums like 511.9999999999 for exactly one revolution.
_TICK_EPS = 1e-9


def encoder_emulate(wheels: WheelSpeeds, dt: float, geom: RobotGeometry,
                    state: EncoderState) -> EncoderDelta:
    if dt <= 0:
        raise ValueError("dt must be positive")
    scale = geom.ticks_per_rev / (2.0 * math.pi)
    state.left_pos += wheels.left * dt * scale
    state.right_pos += wheels.right * dt * scale
    left = math.floor(state.left_pos + _TICK_EPS)
    right = math.floor(state.right_pos + _TICK_EPS)
    delta = EncoderDelta(left - state.left_emitted, right - state.right_emitted)
    state.left_emitted, state.right_emitted = left, right
    return delta


# ---------------------------------------------------------------- episodes

COMPLETED = "Completed"
COLLISION = "Collision"
TIMEOUT = "Timeout"


@dataclass(frozen=True)
class SimConfig:
    planner_period: float = 0.5
    control_dt: float = CONTROL_DT
    geometry: RobotGeometry = field(default_factory=RobotGeometry)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    vision: VisionConfig = field(default_factory=VisionConfig)
    gains_v: PidGains = DEFAULT_GAINS
    gains_w: PidGains = DEFAULT_GAINS
    plant_tau: float = PLANT_TAU
    close_ticks_to_finish: int = 3
    # grace period after the target stops before declaring a timeout
    timeout_after_path: float = 20.0

    @property
    def substeps(self) -> int:
        return int(round(self.planner_period / self.control_dt))


TRACE_COLUMNS = (
    "t", "x_true", "y_true", "a_true", "x_odom", "y_odom", "a_odom",
    "v_desired", "v_controlled", "v_actual", "w_desired", "w_controlled", "w_actual",
    "left_cm", "right_cm", "x_angle", "proximity", "target_x", "target_y",
)


@dataclass(frozen=True)
class TraceRow:
    t: float
    pose_true: Pose
    pose_odom: Pose
    v_desired: float
    v_controlled: float
    v_actual: float
    w_desired: float
    w_controlled: float
    w_actual: float
    left_cm: float
    right_cm: float
    x_angle: float
    proximity: int
    target_x: float
    target_y: float

    def values(self) -> tuple:
        return (
            self.t, self.pose_true.x, self.pose_true.y, self.pose_true.a,
            self.pose_odom.x, self.pose_odom.y, self.pose_odom.a,
            self.v_desired, self.v_controlled, self.v_actual,
            self.w_desired, self.w_controlled, self.w_actual,
            self.left_cm, self.right_cm, self.x_angle, self.proximity,
            self.target_x, self.target_y,
        )


@dataclass(frozen=True)
class PlannerTick:
    """What the policy saw and asked for at one planner tick."""

    t: float
    inputs: PlannerInput
    desired: BodyTwist
    detection: Optional[Detection]
    pose: Pose


@dataclass
class Trace:
    env_name: str
    seed: int
    rows: list = field(default_factory=list)
    ticks: list = field(default_factory=list)
    outcome: str = TIMEOUT
    duration: float = 0.0
    path_length: float = 0.0

    def summary(self) -> dict:
        final = self.rows[-1] if self.rows else None
        return {
            "env": self.env_name,
            "seed": self.seed,
            "outcome": self.outcome,
            "collisions": int(self.outcome == COLLISION),
            "duration_s": round(self.duration, 6),
            "path_length_m": round(self.path_length, 6),
            "planner_ticks": len(self.ticks),
            "odometry_error_m": None if final is None else round(
                final.pose_true.distance_to(final.pose_odom), 6),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row.values()])

    def write_ticks_csv(self, path) -> None:
        """Per planner tick: inputs, planned twist and the open-loop
        'desired path' obtained by integrating the planned twist over 0.5 s."""
        pose = self.ticks[0].pose if self.ticks else Pose()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t", "left_cm", "right_cm", "x_angle", "proximity",
                        "v_planned", "w_planned", "x_desired_path", "y_desired_path",
                        "x_robot", "y_robot"))
            for k, tick in enumerate(self.ticks):
                w.writerow([_fmt(v) for v in (
                    tick.t, tick.inputs.left_cm, tick.inputs.right_cm, tick.inputs.x_angle,
                    tick.inputs.proximity, tick.desired.v, tick.desired.w,
                    pose.x, pose.y, tick.pose.x, tick.pose.y)])
                dt = (self.ticks[k + 1].t - tick.t) if k + 1 < len(self.ticks) else 0.5
                pose = integrate_unicycle(pose, tick.desired, dt)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


# A policy maps (detection, left_cm, right_cm, last_x_angle) to
# (desired twist, remembered x_angle, planner inputs used).
Policy = Callable[[Optional[Detection], float, float, Optional[float]],
                  tuple[BodyTwist, float, PlannerInput]]


def _inputs(detection, left_cm, right_cm, last_x_angle) -> PlannerInput:
    if detection is not None:
        return PlannerInput(left_cm, right_cm, float(detection.x_angle), float(detection.proximity))
    return PlannerInput(left_cm, right_cm, float(last_x_angle), 0.0)


def network_policy(bundle: PlannerBundle) -> Policy:
    def policy(detection, left_cm, right_cm, last_x_angle):
        twist, x = plan_twist(bundle, detection, left_cm, right_cm, last_x_angle)
        return twist, x, _inputs(detection, left_cm, right_cm, last_x_angle)
    return policy


def expert_driver(cfg: ExpertConfig = ExpertConfig()) -> Policy:
    def policy(detection, left_cm, right_cm, last_x_angle):
        inp = _inputs(detection, left_cm, right_cm, last_x_angle)
        return expert_policy(inp, cfg), inp.x_angle, inp
    return policy


def idle_policy(detection, left_cm, right_cm, last_x_angle):
    inp = _inputs(detection, left_cm, right_cm, last_x_angle)
    return BodyTwist(0.0, 0.0), inp.x_angle, inp


def simulate_episode(
    env: Environment,
    policy: Policy,
    cfg: SimConfig = SimConfig(),
    seed: int = 0,
    frames_dir=None,
    max_ticks: Optional[int] = None,
) -> Trace:
    """Run one closed-loop episode.

    Ends ``Completed`` once the target has finished its path and has been
    seen close for ``cfg.close_ticks_to_finish`` consecutive planner ticks;
    ``Collision`` as soon as the body touches an obstacle or the world edge;
    ``Timeout`` after ``cfg.timeout_after_path`` seconds past the end of the
    target path (or after ``max_ticks``).  The baseline simulation has no
    stochastic elements; ``seed`` is recorded in the trace.
    """
    geom = cfg.geometry
    trace = Trace(env.name, seed)
    obstacles = list(env.obstacles)
    world = replace(env, obstacles=obstacles, events=[])
    pending = sorted(env.events, key=lambda e: e.t)

    pose = env.robot_start
    odom = env.robot_start
    enc = EncoderState()
    v_pi = PiState(dt=cfg.control_dt)
    w_pi = PiState(dt=cfg.control_dt)
    v_plant = PlantModel(tau=cfg.plant_tau)
    w_plant = PlantModel(tau=cfg.plant_tau)
    last_x = INITIAL_X_ANGLE
    close_run = 0
    t = 0.0
    deadline = env.path_end_time + cfg.timeout_after_path
    if frames_dir is not None:
        frames_dir = Path(frames_dir)
        frames_dir.mkdir(parents=True, exist_ok=True)

    k = 0
    while True:
        t = k * cfg.planner_period
        while pending and pending[0].t <= t + 1e-12:
            ev = pending.pop(0)
            rect = ev.rect_for(pose)
            if ev.index is None:
                obstacles.append(rect)
            else:
                obstacles[ev.index] = rect

        target = env.target_at(t)
        frame = render_frame(pose, target, cfg.camera, world)
        det = vision.detect_object(frame, cfg.vision)
        left = ultrasonic_distance(pose, cfg.sensors.mount_angle_left, cfg.sensors, world)
        right = ultrasonic_distance(pose, cfg.sensors.mount_angle_right, cfg.sensors, world)
        desired, last_x, inputs = policy(det, left, right, last_x)
        trace.ticks.append(PlannerTick(t, inputs, desired, det, pose))
        if frames_dir is not None:
            vision.write_ppm(frames_dir / f"frame_{k:04d}.ppm", vision.annotate(frame, det))
            (frames_dir / f"frame_{k:04d}.txt").write_text(
                "none\n" if det is None else f"{det.x_angle}\n")

        close_run = close_run + 1 if det is not None and det.proximity == Proximity.CLOSE else 0
        if t >= env.path_end_time and close_run >= cfg.close_ticks_to_finish:
            trace.outcome = COMPLETED
            break
        if t >= deadline or (max_ticks is not None and k >= max_ticks):
            trace.outcome = TIMEOUT
            break

        collided = False
        for j in range(cfg.substeps):
            ts = t + (j + 1) * cfg.control_dt
            actual = BodyTwist(v_plant.state, w_plant.state)
            cmd = controlled_twist(actual, desired, v_pi, w_pi, cfg.gains_v, cfg.gains_w)
            plant_step(v_plant, cmd.v, cfg.control_dt)
            plant_step(w_plant, cmd.w, cfg.control_dt)
            actual = BodyTwist(v_plant.state, w_plant.state)
            wheels = body_to_wheel_speeds(actual, geom)
            new_pose = integrate_unicycle(pose, actual, cfg.control_dt)
            trace.path_length += pose.distance_to(new_pose)
            pose = new_pose
            odom = odometry_update(odom, encoder_emulate(wheels, cfg.control_dt, geom, enc), geom)
            tx, ty = env.target_at(ts)
            trace.rows.append(TraceRow(
                ts, pose, odom,
                desired.v, cmd.v, actual.v, desired.w, cmd.w, actual.w,
                left, right, inputs.x_angle, int(inputs.proximity), tx, ty,
            ))
            if collision_check(pose, geom.body_radius, world):
                collided = True
                t = ts
                break
        if collided:
            trace.outcome = COLLISION
            break
        k += 1

    trace.duration = t
    return trace


def run_planner_episode(env: Environment, bundle: PlannerBundle, cfg: SimConfig = SimConfig(),
                        seed: int = 0, frames_dir=None) -> Trace:
    return simulate_episode(env, network_policy(bundle), cfg, seed, frames_dir)


# ---------------------------------------------------------------- demonstrations


def jittered_environment(base: Environment, rng: np.random.Generator,
                         obstacle_jitter: float = 0.15, path_jitter: float = 0.15,
                         time_scale=(0.8, 1.25), popup_prob: float = 0.5) -> Environment:
    """Randomised variant of ``base``: shifted obstacles and waypoints, a
    rescaled target schedule and, sometimes, an obstacle popping up in front
    of the robot."""
    obstacles = []
    for o in base.obstacles:
        dx, dy = rng.uniform(-obstacle_jitter, obstacle_jitter, size=2)
        r = Rect(o.x + dx, o.y + dy, o.w, o.h)
        if base.bounds is not None and not base.bounds.contains_rect(r):
            r = o
        obstacles.append(r)
    scale = rng.uniform(*time_scale)
    path = [base.target_path[0]]
    for tt, x, y in base.target_path[1:]:
        dx, dy = rng.uniform(-path_jitter, path_jitter, size=2)
        path.append((tt * scale, x + dx, y + dy))
    path[0] = (path[0][0] * scale, path[0][1], path[0][2])
    events = []
    if rng.random() < popup_prob:
        events.append(ObstacleEvent(
            t=float(rng.uniform(2.0, 0.8 * path[-1][0])),
            w=float(rng.uniform(0.1, 0.3)), h=float(rng.uniform(0.1, 0.3)),
            relative=True, ahead=float(rng.uniform(0.35, 0.6)),
            lateral=float(rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 0.25)),
        ))
    return Environment(f"{base.name}-var", base.bounds, obstacles, path, base.robot_start, events)


def generate_dataset(
    environments: Sequence[Environment],
    n_rows: int,
    seed: int,
    expert: ExpertConfig = ExpertConfig(),
    cfg: SimConfig = SimConfig(),
    max_episodes: int = 2000,
):
    """Drive the expert through randomised course variants and log one row per
    planner tick until ``n_rows`` rows are collected."""
    from follower.planner import DemoDataset

    if n_rows < 100:
        raise ValueError("n_rows must be at least 100")
    rng = np.random.default_rng(seed)
    driver = expert_driver(expert)
    X, V, W = [], [], []
    for ep in range(max_episodes):
        base = environments[ep % len(environments)]
        env = jittered_environment(base, rng)
        trace = simulate_episode(env, driver, cfg, seed)
        for tick in trace.ticks:
            X.append(tick.inputs.as_array())
            V.append(min(V_CLAMP, max(0.0, tick.desired.v)))
            W.append(tick.desired.w)
            if len(V) == n_rows:
                return DemoDataset(np.array(X), np.array(V), np.array(W))
    raise RuntimeError(
        f"only {len(V)} of {n_rows} rows collected within {max_episodes} episodes")


# ---------------------------------------------------------------- scripted scenarios


def popup_obstacle_scenario(t_event: float = 3.0, gap_m: float = 0.30,
                            lateral_m: float = 0.22, size_m: float = 0.20) -> Environment:
    """Open floor, target walking ahead; at ``t_event`` a box appears with its
    near face ``gap_m`` in front of the robot centre, shifted ``lateral_m``
    to the robot's left.  The target then bears away from the box side."""
    side = 1.0 if lateral_m >= 0 else -1.0
    path = [(0.0, 1.2, 0.0), (t_event, 1.2 + 0.15 * t_event, 0.0),
            (t_event + 9.0, 2.4, -side * 1.0)]
    event = ObstacleEvent(t=t_event, w=size_m, h=size_m, relative=True,
                          ahead=gap_m + size_m / 2.0, lateral=lateral_m)
    return Environment("popup", Rect(-1.0, -1.5, 5.5, 3.0), [], path, Pose(), [event])


def static_target_scenario(distance_m: float = 0.30) -> Environment:
    """Target parked ``distance_m`` straight ahead from the start."""
    return Environment("static", Rect(-1.0, -1.0, 3.0, 2.0), [],
                       [(0.0, distance_m, 0.0)], Pose())
