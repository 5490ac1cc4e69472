"""Locator terminal simulator.

Two halves: a pure lifecycle state machine (power-on through power-save),
and a route-driven fix generator that feeds the wire protocol.  The real
terminal registers on the mobile network, attaches GPRS, opens GPS, lights
its indicator, and shuts both radios off again when no data request
arrives; ``device_step`` replays exactly that sequence from events.

Route interpolation is planar: legs are projected with an equirectangular
meter approximation at the leg's mean latitude.  At desk scale (well under
100 km) the error is far below GPS precision.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
import socket
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from . import nmea, wire

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
KNOTS_TO_MS = 1852.0 / 3600.0

DEFAULT_REGISTRATION_DELAY_S = 2.0
DEFAULT_GPRS_ATTACH_DELAY_S = 3.0
DEFAULT_FIX_DELAY_S = 1.0
DEFAULT_IDLE_TIMEOUT_S = 600.0


class SimError(Exception):
    """Raised when the simulator cannot complete its run."""


class IllegalTransition(ValueError):
    """The event is not applicable in the current phase."""


class Phase(Enum):
    OFF = "Off"
    REGISTERING = "Registering"
    GPRS_CONNECTING = "GprsConnecting"
    ACQUIRING = "Acquiring"
    REPORTING = "Reporting"
    POWER_SAVE = "PowerSave"


class DeviceEvent(Enum):
    POWER_ON = "PowerOn"
    REGISTERED = "Registered"
    GPRS_UP = "GprsUp"
    FIX_ACQUIRED = "FixAcquired"
    TICK = "Tick"
    DATA_REQUEST = "DataRequest"


@dataclass(frozen=True)
class DeviceState:
    phase: Phase = Phase.OFF
    gps_on: bool = False
    gprs_on: bool = False
    indicator_lit: bool = False
    idle_since: float | None = None


def device_step(
    state: DeviceState,
    event: DeviceEvent,
    now: float,
    idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
) -> DeviceState:
    """Pure lifecycle transition; raises IllegalTransition when not applicable.

    Ticks are a clock signal, so they are accepted in every powered phase
    and only do something in Reporting (the idle check).  DataRequest is
    meaningful in Reporting (resets the idle clock) and PowerSave (wakes
    the device back into the registration sequence).
    """
    phase = state.phase
    if event is DeviceEvent.POWER_ON:
        if phase is not Phase.OFF:
            raise IllegalTransition(f"PowerOn in {phase.value}")
        return DeviceState(phase=Phase.REGISTERING)
    if event is DeviceEvent.REGISTERED:
        if phase is not Phase.REGISTERING:
            raise IllegalTransition(f"Registered in {phase.value}")
        return replace(state, phase=Phase.GPRS_CONNECTING, gprs_on=True)
    if event is DeviceEvent.GPRS_UP:
        if phase is not Phase.GPRS_CONNECTING:
            raise IllegalTransition(f"GprsUp in {phase.value}")
        return replace(state, phase=Phase.ACQUIRING, gps_on=True)
    if event is DeviceEvent.FIX_ACQUIRED:
        if phase is not Phase.ACQUIRING:
            raise IllegalTransition(f"FixAcquired in {phase.value}")
        return replace(state, phase=Phase.REPORTING, indicator_lit=True, idle_since=now)
    if event is DeviceEvent.TICK:
        if phase is Phase.OFF:
            raise IllegalTransition("Tick while off")
        if phase is Phase.REPORTING and state.idle_since is not None \
                and now - state.idle_since >= idle_timeout_s:
            return DeviceState(phase=Phase.POWER_SAVE)
        return state
    if event is DeviceEvent.DATA_REQUEST:
        if phase is Phase.REPORTING:
            return replace(state, idle_since=now)
        if phase is Phase.POWER_SAVE:
            return DeviceState(phase=Phase.REGISTERING)
        raise IllegalTransition(f"DataRequest in {phase.value}")
    raise IllegalTransition(f"unknown event {event!r}")


@dataclass(frozen=True)
class Route:
    """Scenario input: ordered waypoints walked at constant speed."""

    waypoints: tuple[tuple[float, float], ...]
    speed_knots: float
    report_interval_s: float

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ValueError("route needs at least 2 waypoints")
        for lat, lon in self.waypoints:
            if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
                raise ValueError(f"waypoint ({lat}, {lon}) out of range")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if a == b:
                raise ValueError(f"consecutive duplicate waypoint {a}")
        if self.speed_knots <= 0:
            raise ValueError("speed_knots must be positive")
        if self.report_interval_s <= 0:
            raise ValueError("report_interval_s must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "Route":
        try:
            waypoints = tuple((float(lat), float(lon)) for lat, lon in obj["waypoints"])
            return cls(
                waypoints=waypoints,
                speed_knots=float(obj["speed_knots"]),
                report_interval_s=float(obj["report_interval_s"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"bad route document: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Route":
        """Read a route JSON file: waypoints, speed_knots, report_interval_s."""
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _leg_metrics(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    """Length in meters and bearing in degrees of one leg."""
    mean_lat = math.radians((a[0] + b[0]) / 2.0)
    dx = math.radians(b[1] - a[1]) * math.cos(mean_lat) * EARTH_RADIUS_M
    dy = math.radians(b[0] - a[0]) * EARTH_RADIUS_M
    return math.hypot(dx, dy), math.degrees(math.atan2(dx, dy)) % 360.0


def position_at(route: Route, t: float) -> tuple[float, float, float]:
    """(lat, lon, course) after t seconds along the route; clamps at the end."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    remaining = route.speed_knots * KNOTS_TO_MS * t
    course = 0.0
    for a, b in zip(route.waypoints, route.waypoints[1:]):
        length, course = _leg_metrics(a, b)
        if length == 0.0:
            continue
        if remaining <= length:
            f = remaining / length
            return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), course)
        remaining -= length
    last = route.waypoints[-1]
    return (last[0], last[1], course)


def emit_fix(route: Route, t: float, wallclock: float) -> nmea.GprmcFix:
    """An Active fix at the route position, stamped from the wall clock."""
    lat, lon, course = position_at(route, t)
    stamp = dt.datetime.fromtimestamp(wallclock, tz=dt.timezone.utc)
    return nmea.GprmcFix(
        utc_time=stamp.time().replace(microsecond=0),
        status=nmea.FixStatus.ACTIVE,
        latitude=lat,
        longitude=lon,
        speed_knots=route.speed_knots,
        course_deg=course,
        date=stamp.date(),
    )


@dataclass
class SimReport:
    """Outcome of one simulator run."""

    sent: int = 0
    acked: int = 0
    power_saves: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and self.acked == self.sent


class _ServerLink:
    """Blocking request/response connection to the tracking server."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("r", encoding="ascii", newline="\n")

    def exchange(self, frame: wire.WireFrame) -> wire.WireFrame:
        self._sock.sendall(wire.encode_frame(frame).encode("ascii"))
        line = self._rfile.readline()
        if not line:
            raise SimError("server closed the connection")
        return wire.decode_frame(line)

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()


def run_simulator(
    host: str,
    port: int,
    imei: str,
    route: Route,
    count: int,
    interval_s: float | None = None,
    *,
    fw_version: str = "1.0",
    registration_delay_s: float = DEFAULT_REGISTRATION_DELAY_S,
    gprs_attach_delay_s: float = DEFAULT_GPRS_ATTACH_DELAY_S,
    fix_delay_s: float = DEFAULT_FIX_DELAY_S,
    idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
    data_request_at: tuple[float, ...] = (),
    sleep=time.sleep,
    clock=time.time,
) -> SimReport:
    """Drive one simulated terminal against a running server.

    Walks the lifecycle state machine with the configured delays, logs in,
    then sends ``count`` position reports every ``interval_s`` seconds
    (default: the route's report interval).  Simulated route time advances
    by the same interval per report.  ``data_request_at`` lists sim-time
    offsets at which an external data request is injected; without one the
    device drops into power-save once the idle timeout lapses mid-run and
    must be woken by a later request to finish.
    """
    wire.validate_imei(imei)
    if interval_s is None:
        interval_s = route.report_interval_s
    if interval_s <= 0:
        raise ValueError("interval must be positive")
    report = SimReport()
    pending_requests = sorted(data_request_at)
    state = DeviceState()
    link: _ServerLink | None = None
    next_seq = 0

    def startup(state: DeviceState) -> DeviceState:
        sleep(registration_delay_s)
        state = device_step(state, DeviceEvent.REGISTERED, clock())
        sleep(gprs_attach_delay_s)
        state = device_step(state, DeviceEvent.GPRS_UP, clock())
        sleep(fix_delay_s)
        return device_step(state, DeviceEvent.FIX_ACQUIRED, clock())

    def login() -> _ServerLink:
        link = _ServerLink(host, port)
        reply = link.exchange(wire.Login(imei, fw_version))
        if not isinstance(reply, wire.AckLogin):
            link.close()
            raise SimError(f"login rejected: {reply!r}")
        return link

    state = device_step(state, DeviceEvent.POWER_ON, clock())
    state = startup(state)
    link = login()
    sim_t = 0.0
    try:
        for i in range(count):
            while pending_requests and pending_requests[0] <= sim_t:
                pending_requests.pop(0)
                state = device_step(state, DeviceEvent.DATA_REQUEST, clock())
            if state.phase is Phase.POWER_SAVE:
                # Radios are off: the link is gone until the next request.
                if link is not None:
                    link.close()
                    link = None
                if not pending_requests:
                    report.errors.append(
                        f"power-save with {count - i} reports left and no data request scheduled")
                    break
                sleep(max(0.0, (pending_requests[0] - sim_t)))
                sim_t = pending_requests.pop(0)
                state = device_step(state, DeviceEvent.DATA_REQUEST, clock())
                state = startup(state)
                link = login()
            fix = emit_fix(route, sim_t, clock())
            reply = link.exchange(wire.Pos(imei, next_seq, nmea.format_gprmc(fix)))
            report.sent += 1
            if isinstance(reply, wire.AckPos) and reply.seq == next_seq:
                report.acked += 1
            else:
                report.errors.append(f"report {next_seq} rejected: {reply!r}")
            next_seq += 1
            if i + 1 < count:
                sleep(interval_s)
            sim_t += interval_s
            previous_phase = state.phase
            state = device_step(state, DeviceEvent.TICK, clock(), idle_timeout_s)
            if state.phase is Phase.POWER_SAVE and previous_phase is not Phase.POWER_SAVE:
                report.power_saves += 1
                logger.info("terminal %s entered power-save at sim t=%.1fs", imei, sim_t)
    finally:
        if link is not None:
            link.close()
    return report
