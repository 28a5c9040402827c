import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pte.core import ActionChunk
from pte.errors import InvalidArgument, OrderingError, ParseError, PlanningError
from pte.harness import open_chunk_log, record_chunk_log
from pte.chunklog import write_chunk_log
from pte.predictor import (
    Observation,
    Phase,
    PredictorConfig,
    current_phase,
    perturb_chunk,
    plan_chunk,
    replay_next,
)
from pte.sim import check_events, run_episode
from pte.world import AgentState, Block, Box, EventConfig, WorldSnapshot, make_world

BIG = (-5.0, 5.0, -5.0, 5.0)


def world_with(agent_pos, block_pos, grip=0.0, held=False, placed=False, box=(2.0, 0.0)):
    return WorldSnapshot(
        AgentState(pos=agent_pos, grip=grip, grip_prev=grip),
        (Block(block_pos, "blue", held=held, placed=placed),),
        (Box(box, 0.1, "blue"), Box((-2.0, 0.0), 0.1, "yellow")),
        BIG,
        0,
    )


def test_settled_at_goal_is_fixed_point():
    w = world_with((2.0, 0.0), (2.0, 0.0), placed=True)
    chunk = plan_chunk(Observation.from_world(w), PredictorConfig(), 24)
    assert current_phase(w, PredictorConfig()) is Phase.DONE
    np.testing.assert_array_equal(chunk.actions, np.tile([2.0, 0.0, 0.0], (24, 1)))


def test_straight_line_at_demo_speed():
    w = world_with((-0.5, 0.0), (0.5, 0.0))
    chunk = plan_chunk(Observation.from_world(w), PredictorConfig(demo_speed=0.5), 24, dt=0.05)
    dist = np.hypot(chunk.actions[:, 0] - 0.5, chunk.actions[:, 1])
    np.testing.assert_allclose(dist, 1.0 - 0.025 * np.arange(24), atol=1e-12)
    assert np.all(chunk.actions[:, 2] == 0.0)


def test_entries_hold_goal_after_arrival():
    w = world_with((0.0, 0.0), (0.05, 0.0))
    cfg = PredictorConfig(grip_steps=4)
    acts = plan_chunk(Observation.from_world(w), cfg, 12).actions
    # 0.05 m at 0.0125 m/step: 4 moves, then the grip closes over 4 steps
    np.testing.assert_allclose(acts[4:9, 0], 0.05)
    np.testing.assert_allclose(acts[4:9, 2], [0.0, 0.25, 0.5, 0.75, 1.0])
    assert acts[9, 0] > 0.05  # carrying toward the box at +x


def test_deterministic():
    obs = Observation.from_world(make_world(3))
    a = plan_chunk(obs, PredictorConfig(), 24)
    b = plan_chunk(obs, PredictorConfig(), 24)
    assert a == b


def test_goal_outside_workspace():
    w = world_with((0.0, 0.0), (6.0, 0.0))
    with pytest.raises(PlanningError):
        plan_chunk(Observation.from_world(w), PredictorConfig(), 24)


def test_missed_grasp_reopens():
    w = world_with((0.3, 0.0), (0.0, 0.0), grip=1.0)
    assert current_phase(w, PredictorConfig()) is Phase.APPROACH
    acts = plan_chunk(Observation.from_world(w), PredictorConfig(), 24).actions
    assert acts[1, 2] < 1.0


@settings(max_examples=60)
@given(
    ax=st.floats(-1, 1), ay=st.floats(-1, 1), bx=st.floats(-1, 1), by=st.floats(-1, 1),
    grip=st.floats(0, 1), held=st.booleans(), speed=st.floats(0.05, 1.0), ramp=st.sampled_from([0.0, 0.2]),
)
def test_speed_ceiling(ax, ay, bx, by, grip, held, speed, ramp):
    w = world_with((ax, ay), (ax, ay) if held else (bx, by), grip=grip, held=held)
    dt = 0.05
    acts = plan_chunk(Observation.from_world(w), PredictorConfig(demo_speed=speed, ramp_time=ramp), 24, dt).actions
    steps = np.hypot(*np.diff(acts[:, :2], axis=0).T)
    assert np.all(steps <= speed * dt + 1e-12)


def test_closed_loop_consistency():
    """Executing the plan exactly makes successive plans agree on shared targets."""
    cfg, L = PredictorConfig(), 24
    world = make_world(5)
    events_cfg = EventConfig()
    prev = None
    for t in range(160):
        chunk = plan_chunk(Observation.from_world(world), cfg, L)
        if prev is not None:
            np.testing.assert_allclose(chunk.actions[:-1], prev.actions[1:], rtol=0, atol=1e-9)
        nxt = chunk.actions[1]
        a = world.agent
        pos = (float(nxt[0]), float(nxt[1]))
        blocks = tuple(b.__class__(pos, b.color, b.held, b.placed) if b.held else b for b in world.blocks)
        world = world.replace(
            agent=AgentState(pos=pos, vel=a.vel, grip=float(nxt[2]), grip_prev=a.grip),
            blocks=blocks,
            time_step=t + 1,
        )
        _, world = check_events(world, nxt, events_cfg)
        prev = chunk
    assert world.blocks[0].placed


def test_perturb_zero_sigma_is_identity():
    c = plan_chunk(Observation.from_world(make_world(0)), PredictorConfig(), 24)
    assert perturb_chunk(c, 0.0, 1) is c


def test_perturb_reproducible_and_grip_untouched():
    c = plan_chunk(Observation.from_world(make_world(0)), PredictorConfig(), 24)
    a = perturb_chunk(c, 0.01, np.random.default_rng(42))
    b = perturb_chunk(c, 0.01, np.random.default_rng(42))
    assert a == b and a != c
    np.testing.assert_array_equal(a.actions[:, 2], c.actions[:, 2])


def test_perturb_noise_statistics():
    base = ActionChunk(0, np.zeros((50_000, 3)))
    out = perturb_chunk(base, 0.01, np.random.default_rng(7))
    noise = out.actions[:, :2].ravel()
    assert noise.size == 100_000
    assert abs(noise.std() / 0.01 - 1.0) < 0.05
    assert np.all(out.actions[:, 2] == 0.0)


def test_perturb_negative_sigma():
    with pytest.raises(InvalidArgument):
        perturb_chunk(ActionChunk(0, np.zeros((3, 3))), -0.1, 0)


def test_replay_empty_log(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    with open_chunk_log(p) as cur:
        assert replay_next(cur) is None


def test_replay_roundtrip(tmp_path):
    res = run_episode(2, record_trace=True)
    p = record_chunk_log(res, tmp_path / "log.jsonl")
    with open_chunk_log(p) as cur:
        replayed = []
        while (c := replay_next(cur)) is not None:
            replayed.append(c)
    assert replayed == res.trace.chunks


def test_replay_truncated_final_line(tmp_path):
    chunks = [ActionChunk(v, np.full((4, 2), float(v))) for v in range(3)]
    p = write_chunk_log(chunks, tmp_path / "log.jsonl")
    text = p.read_text()
    p.write_text(text[: len(text) - 15])
    with open_chunk_log(p) as cur:
        assert replay_next(cur) == chunks[0]
        assert replay_next(cur) == chunks[1]
        with pytest.raises(ParseError) as err:
            replay_next(cur)
    assert err.value.line == 3
    assert "last complete record index 1" in str(err.value)


def test_replay_non_monotone(tmp_path):
    p = write_chunk_log([ActionChunk(2, np.zeros((3, 1))), ActionChunk(1, np.zeros((3, 1)))], tmp_path / "l.jsonl")
    with open_chunk_log(p) as cur:
        replay_next(cur)
        with pytest.raises(OrderingError, match="line 2"):
            replay_next(cur)
