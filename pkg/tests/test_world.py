import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from follower import world
from follower.kinematics import Pose, RobotGeometry, WheelSpeeds
from follower.vision import HsvRange, Proximity, threshold_mask
from follower.world import (
    CameraConfig, EncoderState, Environment, ObstacleEvent, Rect, SensorConfig, SimConfig,
    builtin_environments, collision_check, encoder_emulate, render_frame,
    simulate_episode, target_projection, ultrasonic_distance,
)
from oracles import disc_aabb_distance

SENS = SensorConfig()
CAM = CameraConfig()
GEOM = RobotGeometry()


def open_env(obstacles=(), bounds=None, start=Pose()):
    return Environment("t", bounds, list(obstacles), [(0.0, 5.0, 0.0)], start)


# ---------------------------------------------------------------- environments


def test_builtin_layouts():
    envs = builtin_environments()
    assert [e.name for e in envs] == ["env1", "env2", "env3"]
    assert len(envs[0].obstacles) == 3
    assert abs(envs[0].target_path_length() - 2.3) <= 0.1
    for e in envs[1:]:
        assert 2.0 <= e.target_path_length() <= 2.5
    layouts = {tuple(e.obstacles) for e in envs}
    assert len(layouts) == 3


def test_builtin_starts_are_free():
    for e in builtin_environments():
        assert not collision_check(e.robot_start, GEOM.body_radius, e)


def test_environment_validation():
    with pytest.raises(ValueError):
        Environment("x", None, [], [], Pose())
    with pytest.raises(ValueError):
        Environment("x", None, [], [(1.0, 0, 0), (1.0, 1, 1)], Pose())
    with pytest.raises(ValueError):
        Environment("x", Rect(0, 0, 1, 1), [Rect(0.5, 0.5, 1, 1)], [(0, 0.5, 0.5)], Pose(0.2, 0.2))
    with pytest.raises(ValueError):
        Environment("x", None, [Rect(-0.1, -0.1, 0.2, 0.2)], [(0, 1, 1)], Pose())


def test_environment_json_round_trip(tmp_path):
    env = world.popup_obstacle_scenario()
    env.save(tmp_path / "e.json")
    back = Environment.load(tmp_path / "e.json")
    assert back == env
    assert world.resolve_environment(str(tmp_path / "e.json")) == env
    assert world.resolve_environment("env2") == builtin_environments()[1]


def test_unknown_builtin():
    with pytest.raises(KeyError):
        world.load_builtin("env9")


def test_target_interpolation():
    env = Environment("p", None, [], [(1.0, 0.0, 0.0), (3.0, 2.0, -2.0)], Pose(-1, 0))
    assert env.target_at(0.0) == (0.0, 0.0)
    assert env.target_at(2.0) == pytest.approx((1.0, -1.0))
    assert env.target_at(9.0) == (2.0, -2.0)


def test_relative_event_placement():
    ev = ObstacleEvent(t=0, w=0.2, h=0.2, relative=True, ahead=0.4, lateral=0.1)
    r = ev.rect_for(Pose(1.0, 1.0, math.pi / 2))
    assert (r.x + r.w / 2, r.y + r.h / 2) == pytest.approx((0.9, 1.4))


# ---------------------------------------------------------------- sensors


def test_sensor_empty_world_reads_max_range():
    assert ultrasonic_distance(Pose(), SENS.mount_angle_left, SENS, open_env()) == 400.0


def test_sensor_wall_dead_ahead():
    env = open_env([Rect(1.0, -5.0, 0.5, 10.0)])
    # point the left sensor's centre ray along +x
    pose = Pose(0.0, 0.0, -SENS.mount_angle_left)
    assert ultrasonic_distance(pose, SENS.mount_angle_left, SENS, env) == pytest.approx(100.0, abs=1.0)


def test_sensor_ignores_obstacle_behind():
    env = open_env([Rect(-1.5, -0.5, 0.5, 1.0)])
    for mount in (SENS.mount_angle_left, SENS.mount_angle_right):
        assert ultrasonic_distance(Pose(), mount, SENS, env) == 400.0


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(-math.pi, math.pi))
def test_sensor_reading_in_range(x, y, a):
    env = builtin_environments()[0]
    d = ultrasonic_distance(Pose(x, y, a), SENS.mount_angle_right, SENS, env)
    assert 0.0 <= d <= 400.0


def test_sensor_config_validation():
    with pytest.raises(ValueError):
        SensorConfig(n_rays=4)
    with pytest.raises(ValueError):
        SensorConfig(max_range_cm=0)


# ---------------------------------------------------------------- camera


def test_focal_length():
    assert CAM.focal_px == pytest.approx(277.128, abs=1e-3)


def test_target_ahead_is_centred():
    cx, cy, r, bearing = target_projection(Pose(), (1.0, 0.0), CAM)
    assert (cx, cy, bearing) == (160.0, 120.0, 0.0)


def test_bearing_to_the_right():
    b = math.radians(20)
    cx, *_ = target_projection(Pose(), (math.cos(b), -math.sin(b)), CAM)
    assert cx == pytest.approx(160 + 277.13 * math.tan(b), abs=0.01)
    assert round(cx) == 261


@pytest.mark.parametrize("d", [0.5, 0.8, 1.1])
def test_radius_inverse_to_distance(d):
    near = threshold_mask(render_frame(Pose(), (d, 0.0)), HsvRange())
    far = threshold_mask(render_frame(Pose(), (2 * d, 0.0)), HsvRange())
    r_near = math.sqrt(near.sum() / math.pi)
    r_far = math.sqrt(far.sum() / math.pi)
    assert abs(r_near - 2 * r_far) <= 1.0


def test_render_outside_fov_or_occluded_is_blank():
    blank = render_frame(Pose(), (0.0, 1.0))  # 90 degrees left
    assert not threshold_mask(blank, HsvRange()).any()
    env = open_env([Rect(0.4, -0.2, 0.1, 0.4)])
    hidden = render_frame(Pose(), (1.0, 0.0), CAM, env)
    assert not threshold_mask(hidden, HsvRange()).any()


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraConfig(hfov_deg=180)
    with pytest.raises(ValueError):
        CameraConfig(target_radius_m=0)


# ---------------------------------------------------------------- collisions


def test_collision_examples():
    env = open_env([Rect(1.0, 1.0, 0.5, 0.5)], bounds=Rect(-2, -2, 6, 6))
    assert not collision_check(Pose(0.0, 0.0), 0.15, env)
    assert collision_check(Pose(1.2, 1.2), 0.15, env)
    # face exactly one body radius away (0.15 - 0.0 is exact in binary)
    touching = open_env([Rect(0.15, -0.5, 0.5, 1.0)], start=Pose(-3.0, 0.0))
    assert collision_check(Pose(0.0, 0.0), 0.15, touching)
    assert not collision_check(Pose(-1e-9, 0.0), 0.15, touching)
    assert collision_check(Pose(3.9, 0.0), 0.15, env)  # leaves the bounds


@given(st.floats(-1, 3), st.floats(-1, 3), st.floats(0.05, 0.5))
def test_collision_matches_distance_oracle(x, y, r):
    rect = Rect(0.5, 0.7, 1.2, 0.4)
    env = open_env([rect])
    hit = disc_aabb_distance(x, y, rect.x, rect.y, rect.x1, rect.y1) <= r
    assert collision_check(Pose(x, y), r, env) == hit


# ---------------------------------------------------------------- encoders


def test_one_revolution_is_512_ticks():
    st_ = EncoderState()
    total = 0
    for _ in range(100):
        total += encoder_emulate(WheelSpeeds(2 * math.pi, 2 * math.pi), 0.01, GEOM, st_).dtick_left
    assert total == 512


def test_zero_speed_zero_ticks():
    d = encoder_emulate(WheelSpeeds(0, 0), 0.01, GEOM, EncoderState())
    assert (d.dtick_left, d.dtick_right) == (0, 0)


@given(st.floats(-40, 40), st.floats(-40, 40))
def test_tick_conservation(left, right):
    many = EncoderState()
    sum_l = sum_r = 0
    for _ in range(1000):
        d = encoder_emulate(WheelSpeeds(right, left), 0.001, GEOM, many)
        sum_l += d.dtick_left
        sum_r += d.dtick_right
    one = encoder_emulate(WheelSpeeds(right, left), 1.0, GEOM, EncoderState())
    assert (sum_l, sum_r) == (one.dtick_left, one.dtick_right)
    # cumulative ticks never lag the true rotation by a full tick
    assert abs(many.left_pos - many.left_emitted) < 1 + 1e-6


def test_encoder_rejects_bad_dt():
    with pytest.raises(ValueError):
        encoder_emulate(WheelSpeeds(1, 1), 0.0, GEOM, EncoderState())


# ---------------------------------------------------------------- episodes


expert = world.expert_driver()


def test_trace_columns_and_finiteness(tmp_path):
    tr = simulate_episode(builtin_environments()[1], expert, SimConfig(), seed=3)
    tr.write_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == world.TRACE_COLUMNS
    data = np.array(rows[1:], dtype=float)
    assert np.isfinite(data).all()
    assert np.all(np.diff(data[:, 0]) > 0)
    lr = data[:, [13, 14]]
    assert np.all((lr >= 0) & (lr <= 400))
    assert len(data) == (len(tr.ticks) - 1) * SimConfig().substeps


def test_episode_deterministic(tmp_path):
    env = builtin_environments()[2]
    for name in ("a", "b"):
        simulate_episode(env, expert, SimConfig(), seed=5).write_csv(tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_idle_planner_leaves_robot_at_rest():
    env = builtin_environments()[0]
    tr = simulate_episode(env, world.idle_policy, SimConfig(), max_ticks=20)
    start = env.robot_start
    assert max(r.pose_true.distance_to(start) for r in tr.rows) < 1e-3
    assert tr.outcome == world.TIMEOUT


def test_static_target_rest_rule():
    tr = simulate_episode(world.static_target_scenario(), expert, SimConfig())
    assert tr.outcome == world.COMPLETED
    assert max(r.pose_true.distance_to(Pose()) for r in tr.rows) < 0.05


def test_expert_env1_odometry_drift():
    tr = simulate_episode(builtin_environments()[0], expert, SimConfig())
    assert tr.outcome == world.COMPLETED
    assert tr.summary()["odometry_error_m"] <= 0.05


def test_collision_outcome():
    env = Environment("wall", Rect(-1, -1, 3, 2), [Rect(0.5, -0.5, 0.2, 1.0)],
                      [(0.0, 1.5, 0.0)], Pose())
    blind = SimConfig(sensors=SensorConfig(max_range_cm=400.0))

    def charge(det, left, right, last):
        return world.BodyTwist(0.3, 0.0), 160.0, world.PlannerInput(left, right, 160.0, 0.0)

    tr = simulate_episode(env, charge, blind)
    assert tr.outcome == world.COLLISION
    assert tr.summary()["collisions"] == 1


def test_frames_written(tmp_path):
    tr = simulate_episode(world.static_target_scenario(), expert, SimConfig(), frames_dir=tmp_path)
    n = len(tr.ticks)
    assert len(list(tmp_path.glob("frame_*.ppm"))) == n
    assert (tmp_path / "frame_0000.txt").read_text().strip().isdigit()


def test_ticks_csv_integrates_planned_twist(tmp_path):
    tr = simulate_episode(builtin_environments()[1], expert, SimConfig())
    tr.write_ticks_csv(tmp_path / "k.csv")
    rows = list(csv.DictReader(open(tmp_path / "k.csv")))
    assert len(rows) == len(tr.ticks)
    p = world.integrate_unicycle(tr.ticks[0].pose, tr.ticks[0].desired, 0.5)
    assert float(rows[1]["x_desired_path"]) == pytest.approx(p.x, abs=1e-12)


def test_popup_scenario_with_expert():
    tr = simulate_episode(world.popup_obstacle_scenario(), expert, SimConfig())
    assert tr.outcome != world.COLLISION
    k = next(i for i, t in enumerate(tr.ticks) if t.t >= 3.0)
    assert tr.ticks[k].desired.v <= 0.5 * tr.ticks[k - 1].desired.v
    assert abs(tr.ticks[k].desired.w) > abs(tr.ticks[k - 1].desired.w)


def test_dataset_generation_validates():
    with pytest.raises(ValueError):
        world.generate_dataset(builtin_environments(), 10, 0)


def test_proximity_recorded_as_int():
    tr = simulate_episode(world.static_target_scenario(), expert, SimConfig())
    assert tr.rows[0].proximity in (int(Proximity.FAR), int(Proximity.CLOSE))
