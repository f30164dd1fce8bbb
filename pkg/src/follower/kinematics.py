"""Differential-drive kinematics and wheel-encoder odometry.

Wheel speeds are wheel *angular* velocities (rad/s).  Heading is measured
counter-clockwise from the world x axis and kept in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Below this yaw rate the arc integrator uses the straight-line branch.
STRAIGHT_EPS = 1e-9


@dataclass(frozen=True)
class RobotGeometry:
    wheel_radius: float = 0.05
    axle_length: float = 0.20
    ticks_per_rev: int = 512
    body_radius: float = 0.15

    def __post_init__(self):
        if min(self.wheel_radius, self.axle_length, self.body_radius) <= 0:
            raise ValueError("geometry lengths must be strictly positive")
        if int(self.ticks_per_rev) != self.ticks_per_rev or self.ticks_per_rev < 1:
            raise ValueError("ticks_per_rev must be an integer >= 1")

    @property
    def tick_arc(self) -> float:
        """Distance a wheel rim travels per encoder tick (m)."""
        return 2.0 * math.pi * self.wheel_radius / self.ticks_per_rev


@dataclass(frozen=True)
class BodyTwist:
    v: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class WheelSpeeds:
    right: float = 0.0
    left: float = 0.0


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", wrap_angle(self.a))

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class EncoderDelta:
    dtick_left: int = 0
    dtick_right: int = 0


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def body_to_wheel_speeds(twist: BodyTwist, geom: RobotGeometry) -> WheelSpeeds:
    R, L = geom.wheel_radius, geom.axle_length
    return WheelSpeeds(
        right=(2.0 * twist.v + twist.w * L) / (2.0 * R),
        left=(2.0 * twist.v - twist.w * L) / (2.0 * R),
    )


def wheel_to_body_speeds(wheels: WheelSpeeds, geom: RobotGeometry) -> BodyTwist:
    R, L = geom.wheel_radius, geom.axle_length
    return BodyTwist(
        v=R * (wheels.right + wheels.left) / 2.0,
        w=R * (wheels.right - wheels.left) / L,
    )


def integrate_unicycle(pose: Pose, twist: BodyTwist, dt: float) -> Pose:
    """Exact constant-twist motion over ``dt`` (arc about the ICC)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v, w = twist.v, twist.w
    if abs(w) < STRAIGHT_EPS:
        return Pose(
            pose.x + v * dt * math.cos(pose.a),
            pose.y + v * dt * math.sin(pose.a),
            pose.a + w * dt,
        )
    a_new = pose.a + w * dt
    r = v / w
    return Pose(
        pose.x + r * (math.sin(a_new) - math.sin(pose.a)),
        pose.y - r * (math.cos(a_new) - math.cos(pose.a)),
        a_new,
    )


def odometry_update(pose: Pose, delta: EncoderDelta, geom: RobotGeometry) -> Pose:
    """Dead-reckoning step from encoder tick deltas.

    Position advances along the *previous* heading; the heading update
    follows from the wheel travel difference over the axle length.
    """
    circumference = 2.0 * math.pi * geom.wheel_radius
    d_left = circumference * delta.dtick_left / geom.ticks_per_rev
    d_right = circumference * delta.dtick_right / geom.ticks_per_rev
    d_center = (d_right + d_left) / 2.0
    return Pose(
        pose.x + d_center * math.cos(pose.a),
        pose.y + d_center * math.sin(pose.a),
        pose.a + (d_right - d_left) / geom.axle_length,
    )
