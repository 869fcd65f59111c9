"""Loopback TCP traffic harness: chat relay and file-transfer workloads.

Two wire protocols, runnable separately or together:

* chat (IRCD-like): UTF-8 lines ``JOIN <name>``, ``MSG <name> <text>``,
  ``QUIT``; the server relays each MSG to every other joined session.
* file transfer (FTP-like): binary frames of 1-byte opcode, 4-byte
  big-endian payload length, payload; an upload is PUT, fixed-size DATA
  chunks, DONE, answered by a single ACK.

A "packet" in the counters is a data-bearing application frame (MSG or
DATA) and its length is the frame's payload bytes; control frames (JOIN,
QUIT, PUT, DONE, ACK, STAT) are not counted. Both protocols answer a
STAT request with a JSON snapshot of the server-side counters plus the
server's uptime, which is how a run measures total time from server
start and the server-side receive counters.

Durations use the monotonic clock; wall-clock timestamps appear only in
the informational departure-time sum.
"""

from __future__ import annotations

import json
import logging
import random
import socket
import string
import struct
import threading
import time
from dataclasses import asdict, dataclass, field

from .errors import HarnessError, ValidationError
from .flow_metrics import FlowFactors

log = logging.getLogger(__name__)

MODE_CHAT = "chat"
MODE_FILE = "file_transfer"
MODE_BOTH = "both"
MODES = (MODE_CHAT, MODE_FILE, MODE_BOTH)

DEFAULT_CHAT_PORT = 6667
DEFAULT_FILE_PORT = 2121

OP_PUT = 0x01
OP_DATA = 0x02
OP_DONE = 0x03
OP_ACK = 0x04
OP_STAT = 0x05

_FRAME_HEADER = struct.Struct(">BI")
MAX_FRAME_PAYLOAD = 16 * 1024 * 1024

SESSION_TIMEOUT = 30.0


def _mono_ms() -> float:
    return time.monotonic() * 1000.0


def _wall_ms() -> float:
    return time.time() * 1000.0


# --- framing ---------------------------------------------------------------


def encode_frame(opcode: int, payload: bytes = b"") -> bytes:
    return _FRAME_HEADER.pack(opcode, len(payload)) + payload


def _recv_exact(sock: socket.socket, count: int) -> bytes | None:
    """Read exactly ``count`` bytes; None on a clean EOF at the start."""
    chunks = []
    remaining = count
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == count:
                return None
            raise HarnessError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> tuple[int, bytes] | None:
    """Read one framed message; None on EOF at a frame boundary."""
    header = _recv_exact(sock, _FRAME_HEADER.size)
    if header is None:
        return None
    opcode, length = _FRAME_HEADER.unpack(header)
    if length > MAX_FRAME_PAYLOAD:
        raise HarnessError(f"frame payload of {length} bytes exceeds limit")
    payload = _recv_exact(sock, length) if length else b""
    if length and payload is None:
        raise HarnessError("connection closed mid-frame")
    return opcode, payload


# --- counters --------------------------------------------------------------


class ProtocolCounters:
    """Thread-safe data-frame counters for one protocol listener."""

    def __init__(self):
        self._lock = threading.Lock()
        self.packets_received = 0
        self.bytes_received = 0
        self.packets_sent = 0
        self.bytes_sent = 0

    def record_received(self, payload_bytes: int) -> None:
        with self._lock:
            self.packets_received += 1
            self.bytes_received += payload_bytes

    def record_sent(self, payload_bytes: int) -> None:
        with self._lock:
            self.packets_sent += 1
            self.bytes_sent += payload_bytes

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "packets_received": self.packets_received,
                "bytes_received": self.bytes_received,
                "packets_sent": self.packets_sent,
                "bytes_sent": self.bytes_sent,
            }


class _ChatPeer:
    def __init__(self, conn: socket.socket):
        self.conn = conn
        self.lock = threading.Lock()
        self.name = ""


# --- server ----------------------------------------------------------------


class TrafficServer:
    """TCP server handle for one or both workload protocols.

    ``start`` binds every listener before returning; if any bind fails
    the already-open listeners are closed again (no partial state).
    """

    def __init__(self, mode: str, host: str = "127.0.0.1",
                 chat_port: int = DEFAULT_CHAT_PORT, file_port: int = DEFAULT_FILE_PORT):
        if mode not in MODES:
            raise ValidationError(f"unknown mode {mode!r}, expected one of {MODES}")
        self.mode = mode
        self.host = host
        self._requested = {"chat": chat_port, "file": file_port}
        self._listeners: dict[str, socket.socket] = {}
        self._threads: list[threading.Thread] = []
        self._sessions: set[socket.socket] = set()
        self._sessions_lock = threading.Lock()
        self._chat_peers: dict[int, _ChatPeer] = {}
        self._chat_peers_lock = threading.Lock()
        self.chat_counters = ProtocolCounters()
        self.file_counters = ProtocolCounters()
        self._start_mono = 0.0
        self._running = False

    # -- lifecycle

    def start(self) -> "TrafficServer":
        kinds = []
        if self.mode in (MODE_CHAT, MODE_BOTH):
            kinds.append("chat")
        if self.mode in (MODE_FILE, MODE_BOTH):
            kinds.append("file")
        try:
            for kind in kinds:
                listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                listener.bind((self.host, self._requested[kind]))
                listener.listen(32)
                # closing a listener does not wake a blocked accept() on
                # Linux; poll so stop() is honored promptly
                listener.settimeout(0.2)
                self._listeners[kind] = listener
        except OSError:
            for listener in self._listeners.values():
                listener.close()
            self._listeners.clear()
            raise
        self._start_mono = _mono_ms()
        self._running = True
        for kind, listener in self._listeners.items():
            handler = self._handle_chat if kind == "chat" else self._handle_file
            thread = threading.Thread(
                target=self._accept_loop, args=(listener, handler),
                name=f"bioperf-accept-{kind}", daemon=True,
            )
            thread.start()
            self._threads.append(thread)
        log.info("serving mode=%s on %s", self.mode, self.addresses())
        return self

    def stop(self) -> None:
        self._running = False
        for listener in self._listeners.values():
            listener.close()
        with self._sessions_lock:
            open_sessions = list(self._sessions)
        for conn in open_sessions:
            # shutdown, not just close: session threads hold makefile()
            # references, so close() alone would leave them blocked
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        for thread in self._threads:
            thread.join(timeout=5.0)

    def __enter__(self) -> "TrafficServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- addressing

    def port(self, kind: str) -> int:
        return self._listeners[kind].getsockname()[1]

    @property
    def chat_port(self) -> int:
        return self.port("chat")

    @property
    def file_port(self) -> int:
        return self.port("file")

    def addresses(self) -> dict[str, tuple[str, int]]:
        return {kind: listener.getsockname() for kind, listener in self._listeners.items()}

    def uptime_ms(self) -> float:
        return _mono_ms() - self._start_mono

    # -- accept/session plumbing

    def _accept_loop(self, listener: socket.socket, handler) -> None:
        while self._running:
            try:
                conn, addr = listener.accept()
            except TimeoutError:
                continue
            except OSError:
                return
            conn.settimeout(SESSION_TIMEOUT)
            with self._sessions_lock:
                self._sessions.add(conn)
            thread = threading.Thread(
                target=self._run_session, args=(conn, handler),
                name=f"bioperf-session-{addr[1]}", daemon=True,
            )
            thread.start()

    def _run_session(self, conn: socket.socket, handler) -> None:
        try:
            handler(conn)
        except (OSError, HarnessError) as exc:
            log.debug("session ended with error: %s", exc)
        finally:
            with self._sessions_lock:
                self._sessions.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def _stat_payload(self, counters: ProtocolCounters) -> dict:
        payload = counters.snapshot()
        payload["uptime_ms"] = self.uptime_ms()
        payload["wall_ms"] = _wall_ms()
        return payload

    # -- chat protocol

    def _handle_chat(self, conn: socket.socket) -> None:
        peer = _ChatPeer(conn)
        reader = conn.makefile("rb")
        try:
            for raw in reader:
                line = raw.decode("utf-8", errors="replace").rstrip("\r\n")
                if not line:
                    continue
                verb, _, rest = line.partition(" ")
                if verb == "JOIN":
                    peer.name = rest
                    with self._chat_peers_lock:
                        self._chat_peers[id(peer)] = peer
                elif verb == "MSG":
                    _, _, text = rest.partition(" ")
                    payload_len = len(text.encode("utf-8"))
                    self.chat_counters.record_received(payload_len)
                    self._relay(peer, raw, payload_len)
                elif verb == "QUIT":
                    break
                elif verb == "STAT":
                    reply = json.dumps(self._stat_payload(self.chat_counters)) + "\n"
                    with peer.lock:
                        conn.sendall(reply.encode("utf-8"))
                else:
                    log.debug("ignoring unknown chat verb %r", verb)
        finally:
            with self._chat_peers_lock:
                self._chat_peers.pop(id(peer), None)
            reader.close()

    def _relay(self, sender: _ChatPeer, frame: bytes, payload_len: int) -> None:
        with self._chat_peers_lock:
            targets = [p for p in self._chat_peers.values() if p is not sender]
        for target in targets:
            try:
                with target.lock:
                    target.conn.sendall(frame)
                self.chat_counters.record_sent(payload_len)
            except OSError:
                # receiver mid-disconnect; its own session thread cleans up
                pass

    # -- file protocol

    def _handle_file(self, conn: socket.socket) -> None:
        while True:
            frame = read_frame(conn)
            if frame is None:
                return
            opcode, payload = frame
            if opcode == OP_DATA:
                self.file_counters.record_received(len(payload))
            elif opcode == OP_DONE:
                conn.sendall(encode_frame(OP_ACK))
            elif opcode == OP_STAT:
                reply = json.dumps(self._stat_payload(self.file_counters)).encode("utf-8")
                conn.sendall(encode_frame(OP_STAT, reply))
            elif opcode == OP_PUT:
                log.debug("upload announced: %r", payload.decode("utf-8", "replace"))
            else:
                raise HarnessError(f"unknown file-transfer opcode {opcode}")


def serve(mode: str, port: int | None = None, host: str = "127.0.0.1",
          file_port: int | None = None) -> TrafficServer:
    """Bind and start a server; raises OSError if a port is taken.

    ``port`` addresses the protocol selected by single-protocol modes
    (chat or file transfer); in both mode it is the chat port and
    ``file_port`` the file-transfer port.
    """
    chat_port = DEFAULT_CHAT_PORT
    fport = DEFAULT_FILE_PORT
    if mode == MODE_CHAT and port is not None:
        chat_port = port
    elif mode == MODE_FILE and port is not None:
        fport = port
    elif mode == MODE_BOTH:
        if port is not None:
            chat_port = port
        if file_port is not None:
            fport = file_port
    return TrafficServer(mode, host, chat_port=chat_port, file_port=fport).start()


# --- client workload -------------------------------------------------------


@dataclass(frozen=True)
class Workload:
    """Scripted workload knobs. Counters depend only on these, never on
    timing, so repeated runs produce identical packet/byte counts."""

    client_count: int = 2
    message_count: int = 100
    message_size: int = 64
    file_size: int = 65536
    chunk_size: int = 1024
    seed: int = 42

    def validate(self) -> None:
        if self.client_count < 1:
            raise ValidationError("client_count must be >= 1")
        if self.message_count < 0 or self.message_size < 0 or self.file_size < 0:
            raise ValidationError("workload sizes must be >= 0")
        if self.chunk_size < 1:
            raise ValidationError("chunk_size must be >= 1")


@dataclass
class SessionRecord:
    """One client connection's counters and timestamps (client side)."""

    session_id: str
    mode: str
    client_start: float
    client_departure: float
    packets_sent: int = 0
    packets_received: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    departure_epoch_ms: float = 0.0


@dataclass
class RunRecord:
    """One measured run: its sessions plus the aggregated factors."""

    run_label: str
    mode: str
    server_start: float
    run_end: float
    sessions: list[SessionRecord]
    factors: FlowFactors
    complete: bool = True

    def to_dict(self) -> dict:
        return {
            "run_label": self.run_label,
            "mode": self.mode,
            "server_start": self.server_start,
            "run_end": self.run_end,
            "complete": self.complete,
            "sessions": [asdict(s) for s in self.sessions],
            "factors": asdict(self.factors),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        try:
            return cls(
                run_label=data["run_label"],
                mode=data["mode"],
                server_start=data["server_start"],
                run_end=data["run_end"],
                complete=data.get("complete", True),
                sessions=[SessionRecord(**s) for s in data["sessions"]],
                factors=FlowFactors(**data["factors"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed run record: {exc}") from None


def save_run_record(record: RunRecord, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record.to_dict(), fh, indent=2)
        fh.write("\n")


def load_run_record(path) -> RunRecord:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return RunRecord.from_dict(data)


DEFAULT_RUN_LABELS = {MODE_CHAT: "IRCD", MODE_FILE: "FTP", MODE_BOTH: "IRCD&FTP"}


def aggregate(sessions, server_start: float, run_end: float, *,
              run_label: str = "run", clients_online: int | None = None,
              servers: int = 1, received: tuple[int, int] | None = None) -> FlowFactors:
    """Fold session records into one run's FlowFactors.

    Service time is the sum of per-session (departure - start) windows,
    overlapping or not; total time spans from server start to run end.
    ``received`` carries the server-side (frames, bytes) receive counters
    when available; otherwise the client-side sums are used.
    """
    sessions = list(sessions)
    if not sessions:
        raise ValidationError("aggregate needs at least one session")
    for s in sessions:
        if s.client_departure < s.client_start:
            raise ValidationError(
                f"session {s.session_id!r}: departure precedes start (clock skew)"
            )
    total_time = run_end - server_start
    if total_time <= 0:
        raise ValidationError("run end does not follow server start")
    packets_sent = sum(s.packets_sent for s in sessions)
    bytes_sent = sum(s.bytes_sent for s in sessions)
    if received is not None:
        packets_received, bytes_received = received
    else:
        packets_received = sum(s.packets_received for s in sessions)
        bytes_received = sum(s.bytes_received for s in sessions)
    factors = FlowFactors(
        run_label=run_label,
        clients_online=len(sessions) if clients_online is None else clients_online,
        servers=servers,
        packets_sent=packets_sent,
        packets_sent_length=bytes_sent,
        packets_received=packets_received,
        packets_received_length=bytes_received,
        total_arrival_time=(
            max(s.client_departure for s in sessions)
            - min(s.client_start for s in sessions)
        ),
        total_departure_time=sum(s.departure_epoch_ms for s in sessions),
        total_service_time=sum(s.client_departure - s.client_start for s in sessions),
        total_time=total_time,
    )
    factors.validate()
    return factors


def _chat_session(host: str, port: int, index: int, workload: Workload,
                  record: SessionRecord, failures: list[str]) -> None:
    name = f"client{index}"
    alphabet = string.ascii_letters + string.digits
    rng = random.Random(f"{workload.seed}:chat:{index}")
    record.client_start = _mono_ms()
    try:
        with socket.create_connection((host, port), timeout=SESSION_TIMEOUT) as sock:
            sock.settimeout(SESSION_TIMEOUT)
            drain = threading.Thread(
                target=_drain_chat, args=(sock, record), daemon=True,
            )
            drain.start()
            sock.sendall(f"JOIN {name}\n".encode("utf-8"))
            for _ in range(workload.message_count):
                text = "".join(rng.choices(alphabet, k=workload.message_size))
                sock.sendall(f"MSG {name} {text}\n".encode("utf-8"))
                record.packets_sent += 1
                record.bytes_sent += workload.message_size
            sock.sendall(b"QUIT\n")
            # server closes after QUIT; EOF here means it processed our stream
            drain.join(timeout=SESSION_TIMEOUT)
    except OSError as exc:
        failures.append(f"{record.session_id}: {exc}")
    finally:
        record.client_departure = _mono_ms()
        record.departure_epoch_ms = _wall_ms()


def _drain_chat(sock: socket.socket, record: SessionRecord) -> None:
    try:
        reader = sock.makefile("rb")
        for raw in reader:
            line = raw.decode("utf-8", errors="replace").rstrip("\r\n")
            verb, _, rest = line.partition(" ")
            if verb == "MSG":
                _, _, text = rest.partition(" ")
                record.packets_received += 1
                record.bytes_received += len(text.encode("utf-8"))
    except (OSError, ValueError):
        pass


def _file_session(host: str, port: int, index: int, workload: Workload,
                  record: SessionRecord, failures: list[str]) -> None:
    rng = random.Random(f"{workload.seed}:file:{index}")
    record.client_start = _mono_ms()
    try:
        with socket.create_connection((host, port), timeout=SESSION_TIMEOUT) as sock:
            sock.settimeout(SESSION_TIMEOUT)
            sock.sendall(encode_frame(OP_PUT, f"client{index}.bin".encode("utf-8")))
            remaining = workload.file_size
            while remaining > 0:
                size = min(workload.chunk_size, remaining)
                sock.sendall(encode_frame(OP_DATA, rng.randbytes(size)))
                record.packets_sent += 1
                record.bytes_sent += size
                remaining -= size
            sock.sendall(encode_frame(OP_DONE))
            frame = read_frame(sock)
            if frame is None or frame[0] != OP_ACK:
                failures.append(f"{record.session_id}: missing upload ACK")
    except (OSError, HarnessError) as exc:
        failures.append(f"{record.session_id}: {exc}")
    finally:
        record.client_departure = _mono_ms()
        record.departure_epoch_ms = _wall_ms()


def _query_chat_stats(host: str, port: int) -> dict:
    try:
        with socket.create_connection((host, port), timeout=SESSION_TIMEOUT) as sock:
            sock.settimeout(SESSION_TIMEOUT)
            sock.sendall(b"STAT\n")
            line = sock.makefile("rb").readline()
    except OSError as exc:
        raise HarnessError(f"cannot reach chat server at {host}:{port}: {exc}") from exc
    if not line:
        raise HarnessError(f"empty STAT reply from chat server at {host}:{port}")
    return json.loads(line)


def _query_file_stats(host: str, port: int) -> dict:
    try:
        with socket.create_connection((host, port), timeout=SESSION_TIMEOUT) as sock:
            sock.settimeout(SESSION_TIMEOUT)
            sock.sendall(encode_frame(OP_STAT))
            frame = read_frame(sock)
    except OSError as exc:
        raise HarnessError(f"cannot reach file server at {host}:{port}: {exc}") from exc
    if frame is None or frame[0] != OP_STAT:
        raise HarnessError(f"bad STAT reply from file server at {host}:{port}")
    return json.loads(frame[1])


def run_client(mode: str, host: str = "127.0.0.1",
               chat_port: int = DEFAULT_CHAT_PORT, file_port: int = DEFAULT_FILE_PORT,
               workload: Workload | None = None, run_label: str | None = None) -> RunRecord:
    """Drive a scripted workload against a running server.

    Spawns ``workload.client_count`` concurrent client sessions per
    selected protocol, snapshots the server counters before and after,
    and aggregates everything into a RunRecord. A mid-run session
    failure leaves ``complete`` False on the record; an unreachable
    server raises HarnessError up front.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}, expected one of {MODES}")
    workload = workload or Workload()
    workload.validate()
    label = run_label or DEFAULT_RUN_LABELS[mode]

    queries = {}
    if mode in (MODE_CHAT, MODE_BOTH):
        queries["chat"] = lambda: _query_chat_stats(host, chat_port)
    if mode in (MODE_FILE, MODE_BOTH):
        queries["file"] = lambda: _query_file_stats(host, file_port)
    before = {kind: query() for kind, query in queries.items()}

    sessions: list[SessionRecord] = []
    failures: list[str] = []
    threads: list[threading.Thread] = []
    now = _mono_ms()
    if mode in (MODE_CHAT, MODE_BOTH):
        for i in range(workload.client_count):
            record = SessionRecord(f"chat-{i}", MODE_CHAT, now, now)
            sessions.append(record)
            threads.append(threading.Thread(
                target=_chat_session,
                args=(host, chat_port, i, workload, record, failures),
                name=f"bioperf-chat-client-{i}",
            ))
    if mode in (MODE_FILE, MODE_BOTH):
        for i in range(workload.client_count):
            record = SessionRecord(f"file-{i}", MODE_FILE, now, now)
            sessions.append(record)
            threads.append(threading.Thread(
                target=_file_session,
                args=(host, file_port, i, workload, record, failures),
                name=f"bioperf-file-client-{i}",
            ))
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    run_end = _mono_ms()
    after = {kind: query() for kind, query in queries.items()}
    uptime = max(stats["uptime_ms"] for stats in after.values())
    received = (
        sum(after[k]["packets_received"] - before[k]["packets_received"] for k in after),
        sum(after[k]["bytes_received"] - before[k]["bytes_received"] for k in after),
    )
    for failure in failures:
        log.warning("incomplete session: %s", failure)
    factors = aggregate(
        sessions,
        server_start=run_end - uptime,
        run_end=run_end,
        run_label=label,
        clients_online=workload.client_count,
        received=received,
    )
    return RunRecord(
        run_label=label,
        mode=mode,
        server_start=run_end - uptime,
        run_end=run_end,
        sessions=sessions,
        factors=factors,
        complete=not failures,
    )
