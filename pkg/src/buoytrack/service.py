"""The control center: TCP ingestion, position pipeline, live push fan-out.

Pipeline per accepted POS frame: parse the sentence, drop Void fixes,
persist the track point (journal flush included), evaluate every armed
fence, persist and push any exit alarms, then push the position event.
Persist-before-broadcast is deliberate: a subscriber must never see a
point that a subsequent track query cannot return.

Everything runs on one asyncio loop (TCP sessions and the HTTP app), so
store mutations are naturally funneled through a single writer.  Live
subscribers get a bounded queue each; a subscriber that cannot keep up is
dropped rather than allowed to stall ingestion.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import nmea, wire
from .geofence import AlarmEvent, ContainmentTable
from .store import Store, TrackPoint

logger = logging.getLogger(__name__)

DEFAULT_TCP_PORT = 5023
DEFAULT_HTTP_PORT = 8080
DEFAULT_SESSION_IDLE_S = 300.0
SUBSCRIBER_QUEUE_SIZE = 256


class VoidFix(Exception):
    """The sentence parsed but carries no trusted position."""


@dataclass
class ServerConfig:
    tcp_port: int = DEFAULT_TCP_PORT
    http_port: int = DEFAULT_HTTP_PORT
    data_dir: Path = Path("data")
    host: str = "127.0.0.1"
    idle_timeout_s: float = DEFAULT_SESSION_IDLE_S
    online_window_s: float = 60.0
    boundary_eps_deg: float = 1e-9
    static_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        self.data_dir = Path(self.data_dir)
        if self.tcp_port == self.http_port:
            raise ValueError("tcp_port and http_port must differ")


@dataclass(frozen=True)
class LiveEvent:
    """One push-feed message: a position, an alarm, or an online toggle."""

    type: str  # "position" | "alarm" | "status"
    terminal: str
    payload: dict
    server_time: float

    def to_wire(self) -> dict:
        return {
            "type": self.type,
            "terminal": self.terminal,
            "payload": self.payload,
            "server_time": self.server_time,
        }


def point_payload(p: TrackPoint) -> dict:
    return {
        "terminal": p.terminal, "timestamp": p.timestamp,
        "lat": p.lat, "lon": p.lon,
        "speed_knots": p.speed_knots, "course_deg": p.course_deg,
        "seq": p.seq, "received_at": p.received_at,
    }


def alarm_payload(a: AlarmEvent) -> dict:
    return {
        "id": a.id, "terminal": a.terminal, "fence_id": a.fence_id,
        "lat": a.position[0], "lon": a.position[1],
        "timestamp": a.timestamp, "kind": a.kind,
    }


class LiveHub:
    """Fan-out of LiveEvents to bounded per-subscriber queues.

    publish() never blocks: a full queue gets drained by one slot and a
    None sentinel is left behind, telling that subscriber's feed task to
    hang up.  Single-loop use only.
    """

    def __init__(self, queue_size: int = SUBSCRIBER_QUEUE_SIZE):
        self._queue_size = queue_size
        self._subscribers: dict[int, asyncio.Queue] = {}
        self._next_id = 0

    def subscribe(self) -> tuple[int, asyncio.Queue]:
        sub_id = self._next_id
        self._next_id += 1
        queue: asyncio.Queue = asyncio.Queue(self._queue_size)
        self._subscribers[sub_id] = queue
        return sub_id, queue

    def unsubscribe(self, sub_id: int) -> None:
        self._subscribers.pop(sub_id, None)

    @property
    def subscriber_count(self) -> int:
        return len(self._subscribers)

    def publish(self, event: LiveEvent) -> None:
        for sub_id, queue in list(self._subscribers.items()):
            try:
                queue.put_nowait(event)
            except asyncio.QueueFull:
                logger.warning("dropping slow live subscriber %d", sub_id)
                del self._subscribers[sub_id]
                try:
                    queue.get_nowait()
                except asyncio.QueueEmpty:
                    pass
                queue.put_nowait(None)


class ControlCenter:
    """Store + fence evaluation + live hub, fed by TCP and HTTP frontends."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.store = Store(config.data_dir)
        self.hub = LiveHub()
        self.containment = ContainmentTable(eps=config.boundary_eps_deg)
        self._uvicorn_server = None
        self._stop = None

    def close(self) -> None:
        self.store.close()

    # -- position pipeline -------------------------------------------------

    def ingest_position(self, imei: str, seq: int, sentence: str, now: float) -> TrackPoint:
        """Run one report through parse -> persist -> fences -> broadcast.

        Raises nmea.NmeaError for an undecodable sentence (surfaced at the
        wire as ERR BADPOS) and VoidFix for a Void one (acknowledged at the
        wire but never persisted).
        """
        fix = nmea.parse_gprmc(sentence)
        if fix.status is nmea.FixStatus.VOID:
            raise VoidFix(sentence)
        epoch = fix.epoch_seconds()
        point = TrackPoint(
            terminal=imei,
            timestamp=epoch if epoch is not None else now,
            lat=fix.latitude,
            lon=fix.longitude,
            speed_knots=fix.speed_knots,
            course_deg=fix.course_deg,
            seq=seq,
            received_at=now,
        )
        self.store.append_point(point)
        position = (point.lat, point.lon)
        for fence in self.store.list_fences():
            if not fence.armed:
                continue
            alarm = self.containment.observe(imei, fence, position, now)
            if alarm is not None:
                self.store.append_alarm(alarm)
                self.hub.publish(LiveEvent("alarm", imei, alarm_payload(alarm), now))
        self.hub.publish(LiveEvent("position", imei, point_payload(point), now))
        return point

    def _publish_status(self, imei: str, online: bool, now: float) -> None:
        self.hub.publish(LiveEvent("status", imei, {"online": online}, now))

    def apply_event(self, event: wire.ServerEvent, now: float) -> None:
        """Act on one accepted-frame event from the wire layer."""
        if isinstance(event, wire.TerminalOnline):
            self.store.register_terminal(event.imei)
            self.store.touch_terminal(event.imei, now)
            self._publish_status(event.imei, True, now)
        elif isinstance(event, wire.PositionReceived):
            self.store.register_terminal(event.imei)
            try:
                self.ingest_position(event.imei, event.seq, event.sentence, event.received_at)
            except VoidFix:
                logger.debug("void fix from %s not persisted", event.imei)
        elif isinstance(event, wire.HeartbeatReceived):
            self.store.touch_terminal(event.imei, now)

    # -- TCP frontend --------------------------------------------------------

    async def _handle_connection(self, reader: asyncio.StreamReader,
                                 writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        session = wire.Session()
        logger.info("terminal connection from %s", peer)
        try:
            while True:
                try:
                    line = await asyncio.wait_for(
                        reader.readline(), timeout=self.config.idle_timeout_s)
                except asyncio.TimeoutError:
                    logger.info("closing idle session %s", peer)
                    break
                except ValueError:
                    # Line beyond the stream limit: cannot resync safely.
                    writer.write(wire.encode_frame(
                        wire.Err("BADFRAME", "frame too long")).encode("ascii"))
                    await writer.drain()
                    break
                if not line:
                    break
                try:
                    frame = wire.decode_frame(line.decode("ascii"))
                except (UnicodeDecodeError, wire.BadFrame) as exc:
                    reply: wire.WireFrame = wire.Err("BADFRAME", str(exc))
                else:
                    now = time.time()
                    reply, events, session = wire.handle_frame(session, frame, now)
                    for event in events:
                        self.apply_event(event, now)
                writer.write(wire.encode_frame(reply).encode("ascii"))
                await writer.drain()
        except ConnectionError:
            pass
        finally:
            if session.authenticated:
                self._publish_status(session.imei, False, time.time())
            writer.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass
            logger.info("terminal connection %s closed", peer)

    # -- lifecycle ---------------------------------------------------------------

    async def serve(self, *, ready: asyncio.Event | None = None) -> None:
        """Run the TCP listener and the HTTP app until request_stop()."""
        import uvicorn

        from .httpapi import build_app

        self._stop = asyncio.Event()
        tcp_server = await asyncio.start_server(
            self._handle_connection, host=self.config.host,
            port=self.config.tcp_port, limit=4 * wire.MAX_FRAME_BYTES)
        uv_config = uvicorn.Config(
            build_app(self), host=self.config.host, port=self.config.http_port,
            log_level="warning", access_log=False)
        self._uvicorn_server = uvicorn.Server(uv_config)
        http_task = asyncio.create_task(self._uvicorn_server.serve())
        try:
            while not self._uvicorn_server.started:
                if http_task.done():
                    http_task.result()
                    raise RuntimeError("http server exited during startup")
                await asyncio.sleep(0.01)
            logger.info("listening tcp=%d http=%d data=%s",
                        self.config.tcp_port, self.config.http_port,
                        self.config.data_dir)
            print(f"buoytrack listening tcp={self.config.tcp_port} "
                  f"http={self.config.http_port} data={self.config.data_dir}",
                  flush=True)
            if ready is not None:
                ready.set()
            # Runs until request_stop(), or until uvicorn exits on its own
            # (it handles SIGINT/SIGTERM itself when on the main thread).
            stop_wait = asyncio.create_task(self._stop.wait())
            await asyncio.wait({stop_wait, http_task},
                               return_when=asyncio.FIRST_COMPLETED)
            stop_wait.cancel()
        finally:
            tcp_server.close()
            await tcp_server.wait_closed()
            if not http_task.done():
                self._uvicorn_server.should_exit = True
            await http_task
            self.close()

    def request_stop(self) -> None:
        if self._stop is not None:
            self._stop.set()
