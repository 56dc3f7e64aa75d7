"""Classification server: per-device queues, round-robin scheduling, durable results."""

from __future__ import annotations

import collections
import json
import logging
import socket
import threading
import time
from dataclasses import dataclass

import numpy as np

from .classifier import CLASS_LABELS, MlpModel, forward
from .dsp import extract_features
from .protocol import (
    AckStatus, Frame, FrameDecoder, MsgType, ProtocolError,
    decode_audio_payload, decode_features_payload, decode_result_payload,
    encode_ack_payload, encode_frame, encode_result_payload,
)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 7071
_RECV_CHUNK = 65536

logger = logging.getLogger("edgesound.server")
logger.addHandler(logging.NullHandler())

_CONFIG_FOR_TYPE = {
    MsgType.AUDIO: "B",
    MsgType.FEATURES: "C",
    MsgType.RESULT: "A",
}


def _now_us() -> int:
    return time.monotonic_ns() // 1000


@dataclass(eq=False)
class ResultRecord:
    """One stored classification outcome."""

    device_id: int
    clip_id: int
    config: str
    class_index: int
    label: str
    confidence: float
    received_ts_us: int
    processing_us: int
    bytes_received: int

    def to_json_line(self, deterministic_ts: bool = False) -> str:
        out = dict(self.__dict__)
        if deterministic_ts:
            out["received_ts_us"] = 0
        return json.dumps(out, sort_keys=True)


class ResultStore:
    """Append-only JSON-lines store; every write is flushed before it returns."""

    def __init__(self, path=None, deterministic_ts: bool = False):
        self.path = path
        self.records = []
        self.deterministic_ts = deterministic_ts
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def append(self, record: ResultRecord) -> None:
        """Record a result durably; the reply to the device may only follow this."""
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(record.to_json_line(self.deterministic_ts) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def handle_message(frame: Frame, model: MlpModel = None):
    """Process one decoded frame; returns (reply frame, stored record or None)."""
    received = _now_us()
    t0 = time.perf_counter()
    config = _CONFIG_FOR_TYPE.get(MsgType(frame.msg_type))
    clip_id = frame.timestamp_us  # correlation token for payloads without one
    try:
        if config is None:
            raise ValueError(f"unexpected message type {frame.msg_type} from a device")
        if frame.msg_type == MsgType.AUDIO:
            clip = decode_audio_payload(frame.payload)
            if model is None:
                raise ValueError("server has no model loaded; cannot classify audio")
            features = extract_features(clip)
            probs = forward(model, features)
            class_index = int(np.argmax(probs))
            confidence = float(probs[class_index])
            label = model.labels[class_index]
            reply_payload = encode_result_payload(class_index, confidence, clip_id)
            reply_type = MsgType.CLASSIFICATION
        elif frame.msg_type == MsgType.FEATURES:
            features = decode_features_payload(frame.payload)
            if model is None:
                raise ValueError("server has no model loaded; cannot classify features")
            probs = forward(model, features)
            class_index = int(np.argmax(probs))
            confidence = float(probs[class_index])
            label = model.labels[class_index]
            reply_payload = encode_result_payload(class_index, confidence, clip_id)
            reply_type = MsgType.CLASSIFICATION
        else:  # RESULT computed on the device; store and acknowledge
            class_index, confidence, clip_id = decode_result_payload(frame.payload)
            if class_index >= len(CLASS_LABELS):
                raise ValueError(f"class index {class_index} out of range")
            label = CLASS_LABELS[class_index]
            reply_payload = encode_ack_payload(AckStatus.OK, clip_id)
            reply_type = MsgType.ACK
    except ValueError as exc:
        logger.info("device=%d msg_type=%d error=%s",
                    frame.device_id, frame.msg_type, exc)
        reply = Frame(MsgType.ACK, frame.device_id, _now_us(),
                      encode_ack_payload(AckStatus.ERROR, clip_id))
        return reply, None

    processing_us = int((time.perf_counter() - t0) * 1e6)
    record = ResultRecord(
        device_id=frame.device_id, clip_id=clip_id, config=config,
        class_index=class_index, label=label, confidence=confidence,
        received_ts_us=received, processing_us=processing_us,
        bytes_received=frame.wire_size,
    )
    reply = Frame(reply_type, frame.device_id, _now_us(), reply_payload)
    return reply, record


class _Connection:
    """Server-side state for one device link."""

    def __init__(self, sock, addr):
        self.sock = sock
        self.addr = addr
        self.decoder = FrameDecoder()
        self.queue = collections.deque()  # (frame, arrival_us)
        self.device_id = None
        self.alive = True
        self.violated = False
        self.in_ring = False

    def name(self) -> str:
        return f"device {self.device_id}" if self.device_id is not None \
            else f"{self.addr[0]}:{self.addr[1]}"


class SoundServer:
    """Accepts device connections and serves them one message per turn."""

    def __init__(self, host: str = DEFAULT_HOST, port: int = DEFAULT_PORT, *,
                 model: MlpModel = None, store_path=None,
                 deterministic_ts: bool = False):
        self.model = model
        self.store = ResultStore(store_path, deterministic_ts)
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(128)
        # A blocked accept() does not wake when another thread closes the
        # listener, so poll with a short timeout to notice shutdown.
        self._listener.settimeout(0.1)
        self.address = self._listener.getsockname()
        self._cond = threading.Condition()
        self._ring = []  # connections in arrival order
        self._cursor = 0
        self._stop = threading.Event()
        self._threads = []
        self._log = []  # (device_id, msg_type) in processing order

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "SoundServer":
        accept = threading.Thread(target=self._accept_loop, daemon=True,
                                  name="server-accept")
        sched = threading.Thread(target=self._scheduler_loop, daemon=True,
                                 name="server-scheduler")
        self._threads = [accept, sched]
        for t in self._threads:
            t.start()
        logger.info("listening on %s:%d", *self.address)
        return self

    def stop(self) -> None:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._cond:
            self._cond.notify_all()
        for t in self._threads:
            t.join(timeout=5.0)
        with self._cond:
            for conn in self._ring:
                try:
                    conn.sock.close()
                except OSError:
                    pass
        self.store.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def wait(self) -> None:
        """Block until stop() is called from another thread or a signal handler."""
        self._stop.wait()

    def processing_sequence(self) -> list:
        """Device ids in the order their messages were granted a turn."""
        with self._cond:
            return [device_id for device_id, _ in self._log]

    # -- reader side -------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(sock, addr)
            reader = threading.Thread(target=self._reader_loop, args=(conn,),
                                      daemon=True, name=f"server-reader-{addr[1]}")
            reader.start()

    def _reader_loop(self, conn: _Connection) -> None:
        try:
            while not self._stop.is_set():
                data = conn.sock.recv(_RECV_CHUNK)
                if not data:
                    break
                frames = conn.decoder.feed(data)
                if not frames:
                    continue
                with self._cond:
                    for frame in frames:
                        if conn.device_id is None:
                            conn.device_id = frame.device_id
                        conn.queue.append((frame, _now_us()))
                    if not conn.in_ring:
                        self._ring.append(conn)
                        conn.in_ring = True
                    self._cond.notify()
        except ProtocolError as exc:
            logger.warning("closing %s: %s", conn.name(), exc)
            with self._cond:
                conn.violated = True
                conn.queue.clear()
                self._cond.notify()
            try:
                conn.sock.close()
            except OSError:
                pass
        except OSError:
            pass
        finally:
            with self._cond:
                conn.alive = False
                self._cond.notify()

    # -- scheduler side ----------------------------------------------------

    def _next_turn(self):
        """Round-robin sweep: pop one message from the next non-empty queue."""
        scanned = 0
        while self._ring and scanned < len(self._ring):
            if self._cursor >= len(self._ring):
                self._cursor = 0
            conn = self._ring[self._cursor]
            if not conn.queue:
                if not conn.alive or conn.violated:
                    del self._ring[self._cursor]
                    conn.in_ring = False
                    continue
                self._cursor = (self._cursor + 1) % len(self._ring)
                scanned += 1
                continue
            frame, arrival = conn.queue.popleft()
            self._cursor = (self._cursor + 1) % len(self._ring)
            return conn, frame, arrival
        return None

    def _scheduler_loop(self) -> None:
        while True:
            with self._cond:
                turn = self._next_turn()
                while turn is None:
                    if self._stop.is_set():
                        return
                    self._cond.wait()
                    turn = self._next_turn()
            conn, frame, arrival = turn
            self._serve_one(conn, frame, arrival)

    def _serve_one(self, conn: _Connection, frame: Frame, arrival_us: int) -> None:
        reply, record = handle_message(frame, self.model)
        if record is not None:
            self.store.append(record)
        try:
            conn.sock.sendall(encode_frame(reply))
        except OSError as exc:
            logger.warning("reply to %s failed: %s", conn.name(), exc)
        latency_us = _now_us() - arrival_us
        with self._cond:
            self._log.append((frame.device_id, int(frame.msg_type)))
        logger.info("device=%d msg_type=%d bytes=%d latency_us=%d",
                    frame.device_id, frame.msg_type, frame.wire_size, latency_us)


def serve(host: str = DEFAULT_HOST, port: int = DEFAULT_PORT, *,
          model: MlpModel = None, store_path=None) -> SoundServer:
    """Start a server and return it; callers stop() it when done."""
    return SoundServer(host, port, model=model, store_path=store_path).start()
