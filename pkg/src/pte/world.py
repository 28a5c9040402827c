"""Planar pick-and-place world state and seeded scenario layouts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from pte.errors import InvalidArgument

Vec2 = tuple[float, float]

# Grip crossing thresholds; the scripted predictor and the event checker agree on these.
GRIP_CLOSE = 0.8
GRIP_OPEN = 0.2

COLORS = ("yellow", "blue")


def _vec2(v) -> Vec2:
    x, y = (float(a) for a in v)
    return (x, y)


@dataclass(frozen=True)
class AgentState:
    pos: Vec2 = (0.0, 0.0)
    vel: Vec2 = (0.0, 0.0)
    grip: float = 0.0
    # grip before the last plant step, for threshold-crossing detection
    grip_prev: float = 0.0

    @property
    def pose(self) -> np.ndarray:
        return np.array([self.pos[0], self.pos[1], self.grip])


@dataclass(frozen=True)
class Block:
    pos: Vec2
    color: str
    held: bool = False
    placed: bool = False


@dataclass(frozen=True)
class Box:
    center: Vec2
    half_size: float
    color: str

    @property
    def region(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        h = self.half_size
        return (cx - h, cy - h, cx + h, cy + h)

    def contains(self, p: Vec2) -> bool:
        x0, y0, x1, y1 = self.region
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


@dataclass(frozen=True)
class WorldSnapshot:
    agent: AgentState
    blocks: tuple[Block, ...]
    boxes: tuple[Box, ...]
    bounds: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    time_step: int = 0

    def in_bounds(self, p: Vec2) -> bool:
        x0, x1, y0, y1 = self.bounds
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    def held_block(self) -> int | None:
        for i, b in enumerate(self.blocks):
            if b.held:
                return i
        return None

    def target_box(self, block: Block) -> Box:
        """Nearest box whose color matches the block."""
        matching = [b for b in self.boxes if b.color == block.color]
        if not matching:
            raise InvalidArgument(f"no box for color {block.color!r}")
        return min(matching, key=lambda b: math.dist(b.center, block.pos))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WorldSnapshot":
        a = d["agent"]
        agent = AgentState(_vec2(a["pos"]), _vec2(a["vel"]), float(a["grip"]), float(a["grip_prev"]))
        blocks = tuple(
            Block(_vec2(b["pos"]), str(b["color"]), bool(b["held"]), bool(b["placed"])) for b in d["blocks"]
        )
        boxes = tuple(Box(_vec2(b["center"]), float(b["half_size"]), str(b["color"])) for b in d["boxes"])
        return cls(agent, blocks, boxes, tuple(float(v) for v in d["bounds"]), int(d["time_step"]))

    def replace(self, **kw) -> "WorldSnapshot":
        return replace(self, **kw)


@dataclass(frozen=True)
class EventConfig:
    r_grasp: float = 0.1
    e_drop: float = 0.3
    close_threshold: float = GRIP_CLOSE
    open_threshold: float = GRIP_OPEN


@dataclass(frozen=True)
class ScenarioConfig:
    """Layout ranges, event thresholds and the episode time limit (SI units)."""

    bounds: tuple[float, float, float, float] = (-0.9, 0.9, -0.5, 0.5)
    home: Vec2 = (0.0, -0.4)
    block_x: Vec2 = (-0.3, 0.3)
    block_y: Vec2 = (-0.15, 0.25)
    box_x: float = 0.65
    box_y: Vec2 = (-0.2, 0.2)
    box_half_size: float = 0.12
    r_grasp: float = 0.1
    e_drop: float = 0.3
    timeout_s: float = 60.0

    def __post_init__(self):
        for name in ("box_half_size", "r_grasp", "e_drop", "timeout_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgument(f"scenario.{name} must be > 0, got {v!r}")
        object.__setattr__(self, "bounds", tuple(float(v) for v in self.bounds))
        for name in ("home", "block_x", "block_y", "box_y"):
            object.__setattr__(self, name, _vec2(getattr(self, name)))

    @property
    def events(self) -> EventConfig:
        return EventConfig(r_grasp=self.r_grasp, e_drop=self.e_drop)


def make_world(seed: int, scenario: ScenarioConfig = ScenarioConfig()) -> WorldSnapshot:
    """Seeded single-block layout: one block in the middle, a yellow and a blue
    box at either end in random order. The block takes the color of its nearest box.
    """
    rng = np.random.default_rng(seed)
    bx = float(rng.uniform(*scenario.block_x))
    by = float(rng.uniform(*scenario.block_y))
    ys = rng.uniform(*scenario.box_y, size=2)
    colors = list(COLORS)
    if rng.random() < 0.5:
        colors.reverse()
    boxes = (
        Box((-scenario.box_x, float(ys[0])), scenario.box_half_size, colors[0]),
        Box((scenario.box_x, float(ys[1])), scenario.box_half_size, colors[1]),
    )
    nearest = min(boxes, key=lambda b: math.dist(b.center, (bx, by)))
    agent = AgentState(pos=scenario.home)
    world = WorldSnapshot(agent, (Block((bx, by), nearest.color),), boxes, scenario.bounds, 0)
    for p in (scenario.home, (bx, by), boxes[0].center, boxes[1].center):
        if not world.in_bounds(p):
            raise InvalidArgument(f"scenario places {p} outside workspace bounds {scenario.bounds}")
    return world
