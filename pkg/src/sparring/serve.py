"""Websocket streaming service ("r2r-stream/1").

One connection = one isolated session: the client's sparse signals drive
agent A, agent B runs the same policy unconditioned (zeroed signals).
Chunks are generated eagerly: as soon as a signal at or past a pending
chunk's first frame arrives, the chunk is generated with the latest
signal zero-order-held over the not-yet-seen frames. Malformed input
gets an error message and the session survives; a reset reseeds the
engine and replays the hello.
"""

from __future__ import annotations

import asyncio
import threading
import time
from dataclasses import dataclass

import numpy as np
from websockets.asyncio.server import serve as ws_serve

from . import protocol
from .clipio import skeleton_to_dict
from .engine import DuelEngine, PolicyAgent, default_stance_poses
from .geometry import matrix_to_quat
from .motion import SparseSignal
from .policy import ReactionPolicy
from .skeleton import Skeleton, default_skeleton


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    ring_radius: float = 3.0
    seed: int = 1
    start_gap: float = 2.0  # initial distance between the two characters


class _Session:
    def __init__(self, policy: ReactionPolicy, skeleton: Skeleton, config: ServeConfig):
        self.policy = policy
        self.skeleton = skeleton
        self.config = config
        self.signals: dict[int, SparseSignal] = {}
        self.latest_frame = -1
        self._reset()

    def _reset(self) -> None:
        cfg = self.config
        d = self.policy.config.downsample
        half = cfg.start_gap / 2
        seed_a = default_stance_poses(self.skeleton, (-half, 0.0), (1.0, 0.0), count=d)
        seed_b = default_stance_poses(self.skeleton, (half, 0.0), (-1.0, 0.0), count=d)
        agent_a = PolicyAgent("a", self.policy, self.skeleton, cfg.seed,
                              signal_fn=self._signal_at)
        agent_b = PolicyAgent("b", self.policy, self.skeleton, cfg.seed + 1,
                              signal_fn=None)
        self.engine = DuelEngine(agent_a, agent_b, self.skeleton, seed_a, seed_b,
                                 ring_radius=cfg.ring_radius)
        self.signals.clear()
        self.latest_frame = -1
        self.seed_poses = (seed_a, seed_b)

    def _signal_at(self, i: int) -> SparseSignal:
        """Zero-order hold: latest signal at or before frame i."""
        if not self.signals:
            return SparseSignal.zeros()
        at_or_before = [k for k in self.signals if k <= i]
        key = max(at_or_before) if at_or_before else min(self.signals)
        return self.signals[key]

    def hello(self) -> dict:
        return {
            "v": protocol.STREAM_VERSION, "kind": "hello",
            "skeleton": skeleton_to_dict(self.skeleton),
            "d": self.policy.config.downsample,
            "fps": 30.0,
            "w": self.policy.config.window,
        }

    @staticmethod
    def _pose_json(pose) -> dict:
        return {"root_translation": [float(v) for v in pose.root_pos],
                "joint_rotations": matrix_to_quat(pose.joint_rot).tolist()}

    def seed_frames_message(self) -> dict:
        a, b = self.seed_poses
        return protocol.frames_message(0, [self._pose_json(p) for p in a],
                                       [self._pose_json(p) for p in b])

    def add_signal(self, frame: int, signal: SparseSignal) -> list[dict]:
        """Record a signal; step the engine for every chunk it unlocks."""
        self.signals[frame] = signal
        self.latest_frame = max(self.latest_frame, frame)
        out = []
        while self.latest_frame >= self.engine.frame_index:
            start = self.engine.frame_index
            res = self.engine.step()
            out.append(protocol.frames_message(
                start,
                [self._pose_json(p) for p in res.poses_a],
                [self._pose_json(p) for p in res.poses_b]))
        # drop stale signals so the session is constant-memory
        horizon = self.engine.frame_index - self.policy.config.window - 8
        for k in [k for k in self.signals if k < horizon]:
            del self.signals[k]
        return out


class StreamServer:
    """Runs the asyncio websocket server on a background thread."""

    def __init__(self, policy: ReactionPolicy, skeleton: Skeleton | None = None,
                 config: ServeConfig | None = None):
        self.policy = policy
        self.skeleton = skeleton or default_skeleton()
        self.config = config or ServeConfig()
        self.active_sessions = 0
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._server = None
        self._started = threading.Event()
        self.port: int | None = None

    async def _handler(self, ws) -> None:
        session = _Session(self.policy, self.skeleton, self.config)
        self.active_sessions += 1
        try:
            await ws.send(protocol.encode_message(session.hello()))
            await ws.send(protocol.encode_message(session.seed_frames_message()))
            async for raw in ws:
                try:
                    msg = protocol.validate_message(protocol.decode_message(raw), "client")
                except protocol.ProtocolError as e:
                    await ws.send(protocol.encode_message(
                        protocol.error_message(e.code, e.detail)))
                    continue
                if msg["kind"] == "heartbeat":
                    reply = dict(msg)
                    reply["t_server"] = time.time() * 1000.0
                    await ws.send(protocol.encode_message(reply))
                elif msg["kind"] == "reset":
                    session._reset()
                    await ws.send(protocol.encode_message(session.hello()))
                    await ws.send(protocol.encode_message(session.seed_frames_message()))
                elif msg["kind"] == "signal":
                    frame, signal = protocol.parse_signal(msg)
                    try:
                        for out in session.add_signal(frame, signal):
                            await ws.send(protocol.encode_message(out))
                    except Exception as e:  # keep the session alive
                        await ws.send(protocol.encode_message(
                            protocol.error_message(protocol.ERR_INTERNAL, str(e))))
        finally:
            self.active_sessions -= 1

    async def _main(self, ready: threading.Event) -> None:
        async with ws_serve(self._handler, self.config.host, self.config.port) as server:
            self._server = server
            self.port = server.sockets[0].getsockname()[1] if server.sockets else self.config.port
            ready.set()
            await asyncio.get_running_loop().create_future()  # run until cancelled

    def start(self) -> "StreamServer":
        def runner():
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)
            try:
                self._loop.run_until_complete(self._main(self._started))
            except asyncio.CancelledError:
                pass
            finally:
                self._loop.close()

        self._thread = threading.Thread(target=runner, daemon=True)
        self._thread.start()
        if not self._started.wait(timeout=15):
            raise RuntimeError("stream server failed to start")
        return self

    def stop(self, timeout: float = 10.0) -> None:
        if self._loop is None:
            return

        def shutdown():
            for task in asyncio.all_tasks(self._loop):
                task.cancel()

        self._loop.call_soon_threadsafe(shutdown)
        if self._thread is not None:
            self._thread.join(timeout=timeout)


def serve_stream(policy: ReactionPolicy, config: ServeConfig | None = None,
                 skeleton: Skeleton | None = None) -> StreamServer:
    """Start the service; returns the handle (stop() to shut down)."""
    return StreamServer(policy, skeleton, config).start()
