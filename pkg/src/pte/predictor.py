"""Chunk sources standing in for a trained chunking policy.

``plan_chunk`` is a scripted demonstrator: from the observed state it rolls
the remaining pick-and-place task forward at ``demo_speed`` and returns the
next L poses ``(x, y, grip)``. It never moves faster than ``demo_speed``, which
is exactly the ceiling a proleptic offset is meant to beat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from pte.core.chunks import ActionChunk
from pte.errors import InvalidArgument, PlanningError
from pte.world import GRIP_CLOSE, GRIP_OPEN, WorldSnapshot

SIM_DOF = 3


class Phase(str, Enum):
    APPROACH = "approach"
    GRASP = "grasp"
    CARRY = "carry"
    RELEASE = "release"
    DONE = "done"


@dataclass(frozen=True)
class Observation:
    time: int
    agent_pose: np.ndarray
    world: WorldSnapshot

    @classmethod
    def from_world(cls, world: WorldSnapshot) -> "Observation":
        return cls(world.time_step, world.agent.pose, world)


@dataclass(frozen=True)
class PredictorConfig:
    demo_speed: float = 0.25
    waypoint_tolerance: float = 0.01
    noise_sigma: float = 0.0
    latency_steps: int = 0
    grip_steps: int = 4
    ramp_time: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.demo_speed) and self.demo_speed > 0):
            raise InvalidArgument(f"demo_speed must be > 0, got {self.demo_speed!r}")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InvalidArgument(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if int(self.latency_steps) != self.latency_steps or self.latency_steps < 0:
            raise InvalidArgument(f"latency_steps must be a non-negative integer, got {self.latency_steps!r}")
        if int(self.grip_steps) != self.grip_steps or self.grip_steps < 1:
            raise InvalidArgument(f"grip_steps must be >= 1, got {self.grip_steps!r}")
        if not (self.waypoint_tolerance >= 0 and self.ramp_time >= 0):
            raise InvalidArgument("waypoint_tolerance and ramp_time must be >= 0")


def _active_block(world: WorldSnapshot):
    for b in world.blocks:
        if not b.placed:
            return b
    return None


def current_phase(world: WorldSnapshot, cfg: PredictorConfig) -> Phase:
    """Task phase implied by the world state alone."""
    block = _active_block(world)
    if block is None:
        return Phase.DONE
    a = world.agent
    tol = cfg.waypoint_tolerance
    if block.held:
        if math.dist(a.pos, world.target_box(block).center) <= tol:
            return Phase.RELEASE
        return Phase.GRASP if a.grip < 1.0 else Phase.CARRY
    # a closed grip without a held block means the grasp missed: reopen first
    if a.grip >= GRIP_CLOSE:
        return Phase.APPROACH
    return Phase.GRASP if math.dist(a.pos, block.pos) <= tol else Phase.APPROACH


def plan_chunk(obs: Observation, cfg: PredictorConfig, L: int, dt: float = 0.05) -> ActionChunk:
    if L < 1:
        raise InvalidArgument(f"L must be >= 1, got {L}")
    world = obs.world
    phase = current_phase(world, cfg)
    block = _active_block(world)
    block_pos = block.pos if block is not None else None
    box_pos = world.target_box(block).center if block is not None else None
    for goal in (block_pos, box_pos):
        if goal is not None and not world.in_bounds(goal):
            raise PlanningError(f"goal {goal} lies outside workspace bounds {world.bounds}")

    x, y, grip = (float(v) for v in obs.agent_pose)
    tol = cfg.waypoint_tolerance
    grip_rate = 1.0 / cfg.grip_steps
    ramp_acc = cfg.demo_speed / cfg.ramp_time if cfg.ramp_time > 0 else math.inf
    speed = min(math.hypot(*world.agent.vel), cfg.demo_speed) if cfg.ramp_time > 0 else cfg.demo_speed

    out = np.empty((L, SIM_DOF))
    for j in range(L):
        out[j] = (x, y, grip)
        if phase in (Phase.APPROACH, Phase.GRASP, Phase.CARRY):
            gx, gy = box_pos if phase is Phase.CARRY else block_pos
            d = math.hypot(gx - x, gy - y)
            if d > 0.0:
                if cfg.ramp_time > 0:
                    speed = min(cfg.demo_speed, speed + ramp_acc * dt, math.sqrt(2.0 * ramp_acc * d))
                step = min(speed * dt, d)
                x += (gx - x) * (step / d)
                y += (gy - y) * (step / d)
                d -= step
        if phase is Phase.APPROACH:
            grip = max(0.0, grip - grip_rate)
            if d <= tol and grip < GRIP_CLOSE:
                phase = Phase.GRASP
        elif phase is Phase.GRASP:
            grip = min(1.0, grip + grip_rate)
            if grip >= 1.0:
                phase = Phase.CARRY
                speed = 0.0 if cfg.ramp_time > 0 else cfg.demo_speed
        elif phase is Phase.CARRY:
            grip = min(1.0, grip + grip_rate)
            if math.hypot(box_pos[0] - x, box_pos[1] - y) <= tol:
                phase = Phase.RELEASE
        else:
            prev = grip
            grip = max(0.0, grip - grip_rate)
            if phase is Phase.RELEASE and prev >= GRIP_OPEN > grip:
                phase = Phase.DONE
    return ActionChunk(obs.time, out)


def position_channels(dof: int) -> tuple[int, ...]:
    if dof == SIM_DOF:
        return (0, 1)
    if dof == 26:
        return (0, 1, 2, 13, 14, 15)
    return tuple(range(dof))


def noise_rng(seed: int, inference_time: int) -> np.random.Generator:
    """Per-chunk generator so noise does not depend on who computes the chunk."""
    return np.random.default_rng([int(seed), int(inference_time)])


def perturb_chunk(chunk: ActionChunk, sigma: float, rng, channels=None) -> ActionChunk:
    """Add i.i.d. N(0, sigma^2) noise to position channels; grip is left alone."""
    if not (math.isfinite(sigma) and sigma >= 0):
        raise InvalidArgument(f"sigma must be >= 0, got {sigma!r}")
    if sigma == 0:
        return chunk
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cols = list(channels if channels is not None else position_channels(chunk.dof))
    acts = np.array(chunk.actions)
    acts[:, cols] += rng.normal(0.0, sigma, size=(chunk.length, len(cols)))
    return ActionChunk(chunk.inference_time, acts)


def replay_next(cursor):
    """Next chunk from an open chunk log, or None once the log is exhausted."""
    return cursor.next_chunk()
