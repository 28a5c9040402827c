"""Kinematic pick-and-place episodes.

A planar point gripper tracks the ensemble command under speed and
acceleration limits. Grasp, drop and place events decide the outcome; the
elapsed time to a successful place is the benchmark metric.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Protocol

import numpy as np

from pte.core.chunks import ActionChunk, ChunkBuffer, EnsembleConfig
from pte.core.ensemble import weighted_average
from pte.errors import InvalidArgument, PlanningError, PlantFault
from pte.predictor import (
    SIM_DOF,
    Observation,
    PredictorConfig,
    noise_rng,
    perturb_chunk,
    plan_chunk,
)
from pte.world import AgentState, EventConfig, ScenarioConfig, WorldSnapshot, make_world


@dataclass(frozen=True)
class PlantLimits:
    v_max: float = 0.9
    a_max: float = 4.0
    dt: float = 0.05
    grip_rate: float = 5.0  # full stroke per second

    def __post_init__(self):
        for name in ("v_max", "a_max", "dt", "grip_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgument(f"plant.{name} must be > 0, got {v!r}")


class FailureCause(str, Enum):
    NONE = "none"
    DROP = "drop"
    MISPLACE = "misplace"
    TIMEOUT = "timeout"
    PLANT_FAULT = "plant_fault"
    # transport failures; excluded from success-rate statistics
    INFRASTRUCTURE = "infrastructure"


@dataclass(frozen=True)
class Event:
    kind: str  # grasp | drop | place | misplace
    block: int


@dataclass(frozen=True)
class StepRecord:
    t: int
    command: tuple[float, ...]
    actual: tuple[float, float, float]
    sources: tuple[int, ...]
    events: tuple[str, ...] = ()


@dataclass
class EpisodeTrace:
    steps: list[StepRecord] = field(default_factory=list)
    chunks: list[ActionChunk] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def commands(self) -> np.ndarray:
        return np.array([s.command for s in self.steps])


@dataclass
class EpisodeResult:
    success: bool
    failure_cause: FailureCause
    elapsed_steps: int
    dt: float
    seed: int = 0
    f: int = 0
    detail: str = ""
    trace: EpisodeTrace | None = field(default=None, repr=False, compare=False)

    @property
    def elapsed_seconds(self) -> float:
        return self.elapsed_steps * self.dt


def step(world: WorldSnapshot, command, limits: PlantLimits) -> WorldSnapshot:
    """One explicit-Euler plant step toward ``command = (x, y, grip)``."""
    cmd = np.asarray(command, dtype=np.float64).reshape(-1)
    if cmd.shape[0] != SIM_DOF or not np.all(np.isfinite(cmd)):
        raise PlantFault(f"invalid command {command!r}")
    a = world.agent
    dt = limits.dt
    (px, py), (vx, vy) = a.pos, a.vel
    ex, ey = float(cmd[0]) - px, float(cmd[1]) - py
    d = math.hypot(ex, ey)
    if d > 0.0:
        h = 0.5 * limits.a_max * dt
        v_brake = math.sqrt(2.0 * limits.a_max * d + h * h) - h
        v_des = min(limits.v_max, d / dt, v_brake)
        dvx, dvy = ex / d * v_des - vx, ey / d * v_des - vy
    else:
        dvx, dvy = -vx, -vy
    dv = math.hypot(dvx, dvy)
    dv_max = limits.a_max * dt
    if dv > dv_max:
        dvx, dvy = dvx * dv_max / dv, dvy * dv_max / dv
    vx, vy = vx + dvx, vy + dvy
    s = math.hypot(vx, vy)
    if s > limits.v_max:
        vx, vy = vx * limits.v_max / s, vy * limits.v_max / s
    pos = (px + vx * dt, py + vy * dt)

    g_cmd = min(1.0, max(0.0, float(cmd[2])))
    g_step = limits.grip_rate * dt
    grip = a.grip + min(g_step, max(-g_step, g_cmd - a.grip))

    blocks = tuple(replace(b, pos=pos) if b.held else b for b in world.blocks)
    agent = AgentState(pos=pos, vel=(vx, vy), grip=grip, grip_prev=a.grip)
    return replace(world, agent=agent, blocks=blocks, time_step=world.time_step + 1)


def check_events(world: WorldSnapshot, command, cfg: EventConfig) -> tuple[list[Event], WorldSnapshot]:
    a = world.agent
    events: list[Event] = []
    blocks = list(world.blocks)
    held = world.held_block()
    closed = a.grip_prev < cfg.close_threshold <= a.grip
    opened = a.grip_prev > cfg.open_threshold >= a.grip
    if held is not None:
        err = math.hypot(float(command[0]) - a.pos[0], float(command[1]) - a.pos[1])
        blk = blocks[held]
        if err > cfg.e_drop:
            blocks[held] = replace(blk, held=False)
            events.append(Event("drop", held))
        elif opened:
            ok = any(box.color == blk.color and box.contains(a.pos) for box in world.boxes)
            blocks[held] = replace(blk, held=False, placed=ok)
            events.append(Event("place" if ok else "misplace", held))
    elif closed:
        free = [
            (math.dist(b.pos, a.pos), i)
            for i, b in enumerate(blocks)
            if not b.placed and math.dist(b.pos, a.pos) <= cfg.r_grasp
        ]
        if free:
            _, i = min(free)
            blocks[i] = replace(blocks[i], held=True, pos=a.pos)
            events.append(Event("grasp", i))
    if not events:
        return events, world
    return events, replace(world, blocks=tuple(blocks))


class ChunkSource(Protocol):
    def request(self, obs: Observation) -> None: ...

    def ready(self, t: int) -> list[ActionChunk]: ...


class LocalSource:
    """In-process predictor with a fixed delivery delay of ``latency_steps``."""

    def __init__(self, pred: PredictorConfig, chunk_len: int, dt: float, seed: int):
        self.pred = pred
        self.chunk_len = chunk_len
        self.dt = dt
        self.seed = seed
        self._pending: deque[tuple[int, ActionChunk]] = deque()

    def request(self, obs: Observation) -> None:
        chunk = plan_chunk(obs, self.pred, self.chunk_len, self.dt)
        chunk = perturb_chunk(chunk, self.pred.noise_sigma, noise_rng(self.seed, obs.time))
        self._pending.append((obs.time + self.pred.latency_steps, chunk))

    def ready(self, t: int) -> list[ActionChunk]:
        out = []
        while self._pending and self._pending[0][0] <= t:
            out.append(self._pending.popleft()[1])
        return out


class InfrastructureError(Exception):
    pass


def _check_configs(ensemble: EnsembleConfig, limits: PlantLimits):
    if abs(limits.dt * ensemble.control_hz - 1.0) > 1e-9:
        raise InvalidArgument(f"plant.dt={limits.dt} does not match ensemble.control_hz={ensemble.control_hz}")


def control_loop(
    world: WorldSnapshot,
    source: ChunkSource,
    ensemble: EnsembleConfig,
    limits: PlantLimits,
    scenario: ScenarioConfig,
    seed: int = 0,
    record_trace: bool = False,
) -> EpisodeResult:
    """Shared tick loop: request, deliver, ensemble, step, check events."""
    _check_configs(ensemble, limits)
    L, f = ensemble.chunk_len, ensemble.f
    buffer = ChunkBuffer(L, SIM_DOF)
    events_cfg = scenario.events
    max_steps = int(round(scenario.timeout_s / limits.dt))
    trace = EpisodeTrace() if record_trace else None

    def finish(cause: FailureCause, steps: int, detail: str = "") -> EpisodeResult:
        if trace is not None and detail:
            trace.notes.append(detail)
        return EpisodeResult(cause is FailureCause.NONE, cause, steps, limits.dt, seed, f, detail, trace)

    for t in range(max_steps):
        try:
            if t % ensemble.inference_period == 0:
                source.request(Observation.from_world(world))
            for chunk in source.ready(t):
                buffer.push(chunk)
                if trace is not None:
                    trace.chunks.append(chunk)
        except PlanningError as exc:
            # counted with timeouts, flagged separately in the trace
            return finish(FailureCause.TIMEOUT, t, f"planning_error: {exc}")
        except InfrastructureError as exc:
            return finish(FailureCause.INFRASTRUCTURE, t, f"infrastructure: {exc}")

        sources, column = buffer.column(t, f)
        command = weighted_average(column, ensemble.m) if column else world.agent.pose
        try:
            world = step(world, command, limits)
        except PlantFault as exc:
            return finish(FailureCause.PLANT_FAULT, t + 1, f"plant_fault: {exc}")
        events, world = check_events(world, command, events_cfg)
        if trace is not None:
            a = world.agent
            trace.steps.append(
                StepRecord(
                    t,
                    tuple(float(c) for c in command),
                    (a.pos[0], a.pos[1], a.grip),
                    tuple(sources),
                    tuple(e.kind for e in events),
                )
            )
        for e in events:
            if e.kind == "place":
                return finish(FailureCause.NONE, t + 1)
            if e.kind == "drop":
                return finish(FailureCause.DROP, t + 1)
            if e.kind == "misplace":
                return finish(FailureCause.MISPLACE, t + 1)
    return finish(FailureCause.TIMEOUT, max_steps)


def run_episode(
    seed: int,
    ensemble: EnsembleConfig = EnsembleConfig(),
    pred: PredictorConfig = PredictorConfig(),
    limits: PlantLimits = PlantLimits(),
    scenario: ScenarioConfig = ScenarioConfig(),
    record_trace: bool = False,
) -> EpisodeResult:
    world = make_world(seed, scenario)
    source = LocalSource(pred, ensemble.chunk_len, limits.dt, seed)
    return control_loop(world, source, ensemble, limits, scenario, seed, record_trace)
