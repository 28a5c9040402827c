"""Policy server / control client over newline-delimited JSON on TCP.

Client to server::

    {"kind": "OBS", "seq": 1, "t": 0, "seed": 7, "world": {...}}
    {"kind": "END", "seq": 9}

Server to client::

    {"kind": "CHUNK", "seq": 1, "v": 0, "ready": 0, "actions": [[x, y, grip], ...]}
    {"kind": "ERROR", "seq": 1, "message": "..."}

A malformed message gets an ERROR reply and the connection is closed. A
planning failure gets an ERROR with ``"code": "planning"`` and the session
continues.

Requests are answered strictly in order. ``ready`` is the first control tick
at which the client may use the chunk; the server sets it to
``v + latency_steps`` so service delay is reproducible.
"""
from __future__ import annotations

import json
import logging
import socket
import time
from collections import deque

from pte.core.chunks import ActionChunk, EnsembleConfig
from pte.errors import PTEError, ParseError, PlanningError, ProtocolError
from pte.predictor import Observation, PredictorConfig, noise_rng, perturb_chunk, plan_chunk
from pte.sim import (
    EpisodeResult,
    FailureCause,
    InfrastructureError,
    PlantLimits,
    control_loop,
)
from pte.world import ScenarioConfig, WorldSnapshot, make_world

log = logging.getLogger(__name__)

KINDS = ("OBS", "CHUNK", "END", "ERROR")


class StartupError(PTEError, OSError):
    pass


def encode(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


def decode(line: bytes) -> dict:
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"not a JSON message: {exc}") from None
    if not isinstance(msg, dict) or msg.get("kind") not in KINDS:
        raise ParseError("message must be an object with a known 'kind'")
    seq = msg.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise ParseError("message needs an integer 'seq'")
    return msg


def parse_endpoint(endpoint) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint[0], int(endpoint[1])
    host, _, port = str(endpoint).rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like HOST:PORT, got {endpoint!r}")
    return host, int(port)


def obs_message(seq: int, obs: Observation, seed: int) -> dict:
    return {"kind": "OBS", "seq": seq, "t": obs.time, "seed": seed, "world": obs.world.to_dict()}


def chunk_message(seq: int, chunk: ActionChunk, ready: int) -> dict:
    return {"kind": "CHUNK", "seq": seq, "v": chunk.inference_time, "ready": ready, "actions": chunk.actions.tolist()}


class PolicyServer:
    """Answers OBS with CHUNK, one connection at a time, until an END arrives."""

    def __init__(self, endpoint, pred: PredictorConfig, chunk_len: int, dt: float = 0.05,
                 service_delay_s: float = 0.0, max_requests: int | None = None):
        self.pred = pred
        self.chunk_len = chunk_len
        self.dt = dt
        self.service_delay_s = service_delay_s
        self.max_requests = max_requests
        self.requests = 0
        self._stop = False
        host, port = parse_endpoint(endpoint)
        try:
            self.sock = socket.create_server((host, port))
        except OSError as exc:
            raise StartupError(f"cannot bind {host}:{port}: {exc}") from exc
        self.sock.settimeout(0.2)

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()[:2]

    def close(self):
        self._stop = True
        self.sock.close()

    def respond(self, msg: dict) -> dict:
        world = WorldSnapshot.from_dict(msg["world"])
        obs = Observation.from_world(world)
        if obs.time != msg["t"]:
            raise ProtocolError(f"OBS t={msg['t']} disagrees with world time_step={obs.time}")
        chunk = plan_chunk(obs, self.pred, self.chunk_len, self.dt)
        chunk = perturb_chunk(chunk, self.pred.noise_sigma, noise_rng(msg["seed"], obs.time))
        if self.service_delay_s > 0:
            time.sleep(self.service_delay_s)
        return chunk_message(msg["seq"], chunk, obs.time + self.pred.latency_steps)

    def _handle(self, conn: socket.socket) -> None:
        last_seq = None
        with conn, conn.makefile("rb") as rfile:
            for line in rfile:
                if not line.strip():
                    continue
                seq = None
                try:
                    msg = decode(line)
                    seq = msg["seq"]
                    if last_seq is not None and seq <= last_seq:
                        raise ProtocolError(f"seq {seq} does not follow {last_seq}")
                    last_seq = seq
                    if msg["kind"] == "END":
                        self._stop = True
                        conn.sendall(encode({"kind": "END", "seq": seq}))
                        return
                    if msg["kind"] != "OBS":
                        raise ProtocolError(f"unexpected {msg['kind']} from client")
                    reply = self.respond(msg)
                except PlanningError as exc:
                    reply = {"kind": "ERROR", "seq": seq, "code": "planning", "message": str(exc)}
                except (PTEError, KeyError, TypeError, ValueError) as exc:
                    log.warning("protocol error: %s", exc)
                    conn.sendall(encode({"kind": "ERROR", "seq": seq, "message": str(exc)}))
                    return
                conn.sendall(encode(reply))
                self.requests += 1
                if self.max_requests is not None and self.requests >= self.max_requests:
                    self._stop = True
                    return

    def serve(self) -> None:
        try:
            while not self._stop:
                try:
                    conn, _ = self.sock.accept()
                except socket.timeout:
                    continue
                except OSError:
                    if self._stop:
                        break
                    raise
                conn.settimeout(None)
                self._handle(conn)
        finally:
            self.sock.close()


def serve_policy(endpoint, pred: PredictorConfig, L: int, dt: float = 0.05, service_delay_s: float = 0.0) -> None:
    PolicyServer(endpoint, pred, L, dt, service_delay_s).serve()


class WireSource:
    """Chunk source backed by a policy server; one request in flight at a time."""

    def __init__(self, sock: socket.socket, seed: int):
        self.sock = sock
        self.rfile = sock.makefile("rb")
        self.seed = seed
        self.seq = 0
        self._pending: deque[tuple[int, ActionChunk]] = deque()

    def _send(self, msg: dict) -> None:
        try:
            self.sock.sendall(encode(msg))
        except OSError as exc:
            raise InfrastructureError(f"send failed: {exc}") from exc

    def _recv(self) -> dict:
        try:
            line = self.rfile.readline()
        except OSError as exc:
            raise InfrastructureError(f"receive failed: {exc}") from exc
        if not line:
            raise InfrastructureError("server closed the connection")
        try:
            return decode(line)
        except ParseError as exc:
            raise InfrastructureError(str(exc)) from exc

    def request(self, obs: Observation) -> None:
        self.seq += 1
        self._send(obs_message(self.seq, obs, self.seed))
        msg = self._recv()
        if msg["kind"] == "ERROR":
            if msg.get("code") == "planning":
                raise PlanningError(msg.get("message", ""))
            raise InfrastructureError(f"server error: {msg.get('message')}")
        if msg["kind"] != "CHUNK" or msg["seq"] != self.seq:
            raise InfrastructureError(f"expected CHUNK seq={self.seq}, got {msg['kind']} seq={msg['seq']}")
        try:
            chunk = ActionChunk(msg["v"], msg["actions"])
        except (PTEError, KeyError) as exc:
            raise InfrastructureError(f"bad chunk payload: {exc}") from exc
        self._pending.append((int(msg["ready"]), chunk))

    def ready(self, t: int) -> list[ActionChunk]:
        out = []
        while self._pending and self._pending[0][0] <= t:
            out.append(self._pending.popleft()[1])
        return out

    def end(self) -> None:
        self.seq += 1
        self._send({"kind": "END", "seq": self.seq})
        self._recv()


def client_loop(
    endpoint,
    ensemble: EnsembleConfig,
    limits: PlantLimits,
    seed: int,
    scenario: ScenarioConfig = ScenarioConfig(),
    record_trace: bool = False,
    send_end: bool = False,
    timeout_s: float = 10.0,
) -> EpisodeResult:
    """Run one episode with chunks sourced from a remote policy server.

    Connection loss yields ``FailureCause.INFRASTRUCTURE``.
    """
    world = make_world(seed, scenario)
    try:
        sock = socket.create_connection(parse_endpoint(endpoint), timeout=timeout_s)
    except OSError as exc:
        return EpisodeResult(False, FailureCause.INFRASTRUCTURE, 0, limits.dt, seed, ensemble.f, f"connect failed: {exc}")
    with sock:
        source = WireSource(sock, seed)
        result = control_loop(world, source, ensemble, limits, scenario, seed, record_trace)
        if send_end:
            try:
                source.end()
            except InfrastructureError:
                pass
    return result
