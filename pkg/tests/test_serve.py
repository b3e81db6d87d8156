import contextlib
import time

import numpy as np
import pytest
from websockets.sync.client import connect

from sparring import protocol
from sparring.motion import SparseSignal
from sparring.protocol import ProtocolError, decode_message, encode_message, validate_message
from sparring.serve import ServeConfig, StreamServer
from test_policy import tiny_policy


@pytest.fixture(scope="module")
def server():
    policy = tiny_policy(sparse_control=True, ddim_steps=10)
    srv = StreamServer(policy, config=ServeConfig(port=0)).start()
    yield srv
    srv.stop()


def recv_validated(ws, timeout=10):
    msg = validate_message(decode_message(ws.recv(timeout=timeout)), direction="server")
    return msg


def handshake(ws):
    hello = recv_validated(ws)
    assert hello["kind"] == "hello"
    seed = recv_validated(ws)
    assert seed["kind"] == "frames" and seed["start_frame"] == 0
    return hello, seed


class TestProtocol:
    def test_encode_decode_round_trip(self):
        msg = protocol.signal_message(3, SparseSignal.zeros(), t=12.5)
        assert decode_message(encode_message(msg)) == msg

    def test_length_prefix_enforced(self):
        with pytest.raises(ProtocolError):
            decode_message('999:{"v":1}')
        with pytest.raises(ProtocolError):
            decode_message('not-a-prefix')

    def test_version_checked(self):
        with pytest.raises(ProtocolError) as e:
            validate_message({"v": "r2r-stream/9", "kind": "reset"})
        assert e.value.code == protocol.ERR_VERSION

    def test_signal_schema_checked(self):
        bad = {"v": protocol.STREAM_VERSION, "kind": "signal", "frame": 0,
               "signal": {"head_pos": [0, 0]}}
        with pytest.raises(ProtocolError) as e:
            validate_message(bad)
        assert e.value.code == protocol.ERR_SCHEMA

    def test_signal_round_trip_preserves_values(self, rng):
        sig = SparseSignal(rng.standard_normal(3), rng.standard_normal(6),
                           rng.standard_normal(3), rng.standard_normal(6),
                           rng.standard_normal(3), rng.standard_normal(6))
        msg = decode_message(encode_message(protocol.signal_message(7, sig)))
        frame, parsed = protocol.parse_signal(msg)
        assert frame == 7
        np.testing.assert_allclose(parsed.head_pos, sig.head_pos)


class TestService:
    def test_echo_30_signals_yield_30_plus_frames(self, server):
        with connect(f"ws://127.0.0.1:{server.port}") as ws:
            _, seed = handshake(ws)
            received = len(seed["poses"])
            for i in range(30):
                ws.send(encode_message(protocol.signal_message(i, SparseSignal.zeros())))
            with contextlib.suppress(TimeoutError):
                while True:
                    msg = recv_validated(ws, timeout=3)
                    if msg["kind"] == "frames":
                        received += len(msg["poses"])
            assert received >= 30

    def test_frames_are_contiguous(self, server):
        with connect(f"ws://127.0.0.1:{server.port}") as ws:
            _, seed = handshake(ws)
            next_expected = len(seed["poses"])
            for i in range(16):
                ws.send(encode_message(protocol.signal_message(i, SparseSignal.zeros())))
            with contextlib.suppress(TimeoutError):
                while True:
                    msg = recv_validated(ws, timeout=3)
                    if msg["kind"] == "frames":
                        assert msg["start_frame"] == next_expected
                        next_expected += len(msg["poses"])

    def test_malformed_message_yields_error_and_session_survives(self, server):
        with connect(f"ws://127.0.0.1:{server.port}") as ws:
            handshake(ws)
            ws.send("definitely not a protocol message")
            err = recv_validated(ws)
            assert err["kind"] == "error"
            assert err["code"] == protocol.ERR_MALFORMED
            # still alive: heartbeat round-trips
            ws.send(encode_message({"v": protocol.STREAM_VERSION, "kind": "heartbeat",
                                    "nonce": 1, "t": 0.0}))
            hb = recv_validated(ws)
            assert hb["kind"] == "heartbeat" and "t_server" in hb

    def test_reset_replays_hello(self, server):
        with connect(f"ws://127.0.0.1:{server.port}") as ws:
            handshake(ws)
            ws.send(encode_message({"v": protocol.STREAM_VERSION, "kind": "reset"}))
            hello2, seed2 = handshake(ws)
            assert seed2["start_frame"] == 0

    def test_concurrent_sessions_are_isolated(self, server):
        with connect(f"ws://127.0.0.1:{server.port}") as ws1, \
                connect(f"ws://127.0.0.1:{server.port}") as ws2:
            handshake(ws1)
            handshake(ws2)
            assert server.active_sessions == 2
            # drive only session 1; session 2 sees nothing but silence
            for i in range(8):
                ws1.send(encode_message(protocol.signal_message(i, SparseSignal.zeros())))
            got_frames = False
            with contextlib.suppress(TimeoutError):
                while True:
                    if recv_validated(ws1, timeout=3)["kind"] == "frames":
                        got_frames = True
            assert got_frames
            with pytest.raises(TimeoutError):
                ws2.recv(timeout=0.5)

    def test_disconnect_frees_session(self, server):
        before = server.active_sessions
        with connect(f"ws://127.0.0.1:{server.port}") as ws:
            handshake(ws)
            assert server.active_sessions == before + 1
        deadline = time.time() + 5
        while server.active_sessions != before and time.time() < deadline:
            time.sleep(0.05)
        assert server.active_sessions == before

    def test_all_outbound_messages_validate(self, server):
        # schema conformance: every server message passes validation
        with connect(f"ws://127.0.0.1:{server.port}") as ws:
            handshake(ws)
            for i in range(8):
                ws.send(encode_message(protocol.signal_message(i, SparseSignal.zeros())))
            with contextlib.suppress(TimeoutError):
                while True:
                    recv_validated(ws, timeout=2)  # raises on any violation
