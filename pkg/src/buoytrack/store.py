"""Persistence: terminals, track points, fences, labels, alarms.

Backend is in-memory state plus an append-only journal of tagged JSON
records (``{"kind": ..., "v": 1, "payload": {...}}``, one per line),
replayed at startup.  Every mutation is journaled and flushed to disk
before it is acknowledged; applying a record is idempotent (upserts and
keyed skips), so replaying a journal twice yields the same state as once.

Concurrency contract: single writer, many readers.  All methods take one
re-entrant lock, which keeps direct use from multiple threads safe; the
serving layer funnels every mutation through one event loop anyway.

Track queries are capped at a 7x24-hour window (inclusive at exactly
604800 s).
"""

from __future__ import annotations

import bisect
import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from . import geofence
from .geofence import AlarmEvent, Geofence

logger = logging.getLogger(__name__)

MAX_TRACK_WINDOW_S = 7 * 24 * 3600
MAX_LABEL_CHARS = 280
JOURNAL_NAME = "journal.ndjson"
DEFAULT_ONLINE_WINDOW_S = 60.0


class StoreError(Exception):
    """Base class for store errors."""


class UnknownTerminal(StoreError):
    pass


class BadWindow(StoreError):
    pass


class WindowTooLarge(StoreError):
    pass


class InvalidPolygon(StoreError):
    pass


class UnknownFence(StoreError):
    pass


class UnknownLabel(StoreError):
    pass


class EmptyText(StoreError):
    pass


class ReadOnlyStore(StoreError):
    pass


@dataclass(frozen=True)
class TrackPoint:
    terminal: str
    timestamp: float
    lat: float
    lon: float
    speed_knots: float
    course_deg: float
    seq: int
    received_at: float | None = None

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"position ({self.lat}, {self.lon}) out of range")
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive epoch seconds")


@dataclass
class Terminal:
    imei: str
    name: str
    last_seen: float | None = None


@dataclass(frozen=True)
class MapLabel:
    id: str
    position: tuple[float, float]
    text: str
    created_at: float


def _point_key(p: TrackPoint) -> tuple[str, float, int]:
    return (p.terminal, p.timestamp, p.seq)


class Store:
    """Journal-backed fleet state.  Open one instance per data directory."""

    def __init__(self, data_dir: str | Path, *, readonly: bool = False):
        self._dir = Path(data_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._path = self._dir / JOURNAL_NAME
        self._lock = threading.RLock()
        self._terminals: dict[str, Terminal] = {}
        self._names: dict[str, str] = {}
        self._tracks: dict[str, list[TrackPoint]] = {}
        self._point_keys: set[tuple[str, float, int]] = set()
        self._fences: dict[str, Geofence] = {}
        self._labels: dict[str, MapLabel] = {}
        self._alarms: list[AlarmEvent] = []
        self._alarm_ids: set[str] = set()
        self._journal = None
        self._replay()
        if not readonly:
            self._journal = open(self._path, "a", encoding="utf-8")

    # -- journal machinery ------------------------------------------------

    def _replay(self) -> None:
        if not self._path.exists():
            return
        with open(self._path, encoding="utf-8") as fh:
            lines = fh.readlines()
        for lineno, line in enumerate(lines, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                if lineno == len(lines):
                    # Torn final record from an interrupted write.
                    logger.warning("dropping torn journal tail at line %d", lineno)
                    continue
                raise StoreError(f"corrupt journal at line {lineno}: {exc}") from exc
            self._apply(record)

    def _append(self, kind: str, payload: dict) -> None:
        if self._journal is None:
            raise ReadOnlyStore("store opened read-only")
        record = {"kind": kind, "v": 1, "payload": payload}
        self._journal.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._journal.flush()
        os.fsync(self._journal.fileno())
        self._apply(record)

    def _apply(self, record: dict) -> None:
        kind, payload = record["kind"], record["payload"]
        if kind == "terminal":
            imei = payload["imei"]
            existing = self._terminals.get(imei)
            if existing is None:
                terminal = Terminal(imei=imei, name=payload["name"])
                self._terminals[imei] = terminal
                self._names[terminal.name] = imei
        elif kind == "touch":
            terminal = self._terminals.get(payload["imei"])
            if terminal is not None:
                seen = payload["at"]
                if terminal.last_seen is None or seen > terminal.last_seen:
                    terminal.last_seen = seen
        elif kind == "point":
            p = TrackPoint(**payload)
            key = _point_key(p)
            if key in self._point_keys:
                return
            self._point_keys.add(key)
            track = self._tracks.setdefault(p.terminal, [])
            bisect.insort(track, p, key=lambda q: (q.timestamp, q.seq))
            terminal = self._terminals.get(p.terminal)
            seen = p.received_at if p.received_at is not None else p.timestamp
            if terminal is not None and (terminal.last_seen is None or seen > terminal.last_seen):
                terminal.last_seen = seen
        elif kind == "fence":
            fence = Geofence(
                id=payload["id"],
                name=payload["name"],
                vertices=tuple((lat, lon) for lat, lon in payload["vertices"]),
                armed=payload["armed"],
            )
            self._fences[fence.id] = fence
        elif kind == "fence_del":
            self._fences.pop(payload["id"], None)
        elif kind == "label":
            label = MapLabel(
                id=payload["id"],
                position=(payload["lat"], payload["lon"]),
                text=payload["text"],
                created_at=payload["created_at"],
            )
            self._labels[label.id] = label
        elif kind == "label_del":
            self._labels.pop(payload["id"], None)
        elif kind == "alarm":
            if payload["id"] in self._alarm_ids:
                return
            alarm = AlarmEvent(
                id=payload["id"],
                terminal=payload["terminal"],
                fence_id=payload["fence_id"],
                position=(payload["lat"], payload["lon"]),
                timestamp=payload["timestamp"],
                kind=payload["alarm_kind"],
            )
            self._alarm_ids.add(alarm.id)
            bisect.insort(self._alarms, alarm, key=lambda a: a.timestamp)
        else:
            raise StoreError(f"unknown journal record kind {kind!r}")

    def close(self) -> None:
        with self._lock:
            if self._journal is not None:
                self._journal.close()
                self._journal = None

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- terminals ---------------------------------------------------------

    def register_terminal(self, imei: str, name: str | None = None) -> Terminal:
        """Upsert a terminal; new ones get name = imei until renamed."""
        with self._lock:
            existing = self._terminals.get(imei)
            if existing is not None:
                return existing
            name = name or imei
            if name in self._names:
                raise StoreError(f"terminal name {name!r} already taken")
            self._append("terminal", {"imei": imei, "name": name})
            return self._terminals[imei]

    def touch_terminal(self, imei: str, at: float) -> None:
        with self._lock:
            if imei not in self._terminals:
                raise UnknownTerminal(imei)
            self._append("touch", {"imei": imei, "at": at})

    def resolve_terminal(self, ref: str) -> Terminal:
        """Look a terminal up by IMEI or by assigned name."""
        with self._lock:
            terminal = self._terminals.get(ref)
            if terminal is None and ref in self._names:
                terminal = self._terminals[self._names[ref]]
            if terminal is None:
                raise UnknownTerminal(ref)
            return terminal

    def list_terminals(self) -> list[Terminal]:
        with self._lock:
            return sorted(self._terminals.values(), key=lambda t: t.imei)

    def last_point(self, imei: str) -> TrackPoint | None:
        with self._lock:
            track = self._tracks.get(imei)
            return track[-1] if track else None

    def online_terminals(
        self, now: float, online_window_s: float = DEFAULT_ONLINE_WINDOW_S,
    ) -> list[tuple[Terminal, TrackPoint | None]]:
        """Terminals seen within the window, with their freshest point."""
        if online_window_s <= 0:
            raise ValueError("online_window_s must be positive")
        with self._lock:
            out = []
            for terminal in self.list_terminals():
                if terminal.last_seen is not None and terminal.last_seen >= now - online_window_s:
                    out.append((terminal, self.last_point(terminal.imei)))
            return out

    # -- track points --------------------------------------------------------

    def append_point(self, p: TrackPoint) -> None:
        """Journal one point; duplicate (terminal, timestamp, seq) is a no-op."""
        with self._lock:
            if p.terminal not in self._terminals:
                raise UnknownTerminal(p.terminal)
            if _point_key(p) in self._point_keys:
                return
            self._append("point", {
                "terminal": p.terminal, "timestamp": p.timestamp,
                "lat": p.lat, "lon": p.lon,
                "speed_knots": p.speed_knots, "course_deg": p.course_deg,
                "seq": p.seq, "received_at": p.received_at,
            })

    def query_track(self, terminal_ref: str, from_s: float, to_s: float) -> list[TrackPoint]:
        """Points with from <= timestamp <= to, ascending (timestamp, seq)."""
        with self._lock:
            terminal = self.resolve_terminal(terminal_ref)
            if from_s >= to_s:
                raise BadWindow(f"from {from_s} must be before to {to_s}")
            if to_s - from_s > MAX_TRACK_WINDOW_S:
                raise WindowTooLarge(
                    f"window {to_s - from_s:.0f}s exceeds {MAX_TRACK_WINDOW_S}s (7x24h)")
            track = self._tracks.get(terminal.imei, [])
            lo = bisect.bisect_left(track, from_s, key=lambda p: p.timestamp)
            hi = bisect.bisect_right(track, to_s, key=lambda p: p.timestamp)
            return track[lo:hi]

    # -- fences --------------------------------------------------------------

    def save_fence(self, fence: Geofence) -> Geofence:
        """Validate and upsert; editing an armed flag is an upsert too."""
        try:
            geofence.validate_polygon(fence.vertices)
        except geofence.GeofenceError as exc:
            raise InvalidPolygon(str(exc)) from exc
        with self._lock:
            self._append("fence", {
                "id": fence.id, "name": fence.name, "armed": fence.armed,
                "vertices": [list(v) for v in fence.vertices],
            })
            return fence

    def get_fence(self, fence_id: str) -> Geofence:
        with self._lock:
            fence = self._fences.get(fence_id)
            if fence is None:
                raise UnknownFence(fence_id)
            return fence

    def delete_fence(self, fence_id: str) -> None:
        with self._lock:
            if fence_id not in self._fences:
                raise UnknownFence(fence_id)
            self._append("fence_del", {"id": fence_id})

    def list_fences(self) -> list[Geofence]:
        with self._lock:
            return sorted(self._fences.values(), key=lambda f: f.name)

    # -- labels ----------------------------------------------------------------

    def save_label(self, label: MapLabel) -> MapLabel:
        if not label.text.strip():
            raise EmptyText("label text must be nonempty")
        if len(label.text) > MAX_LABEL_CHARS:
            raise ValueError(f"label text exceeds {MAX_LABEL_CHARS} characters")
        lat, lon = label.position
        if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
            raise ValueError(f"label position ({lat}, {lon}) out of range")
        with self._lock:
            self._append("label", {
                "id": label.id, "lat": lat, "lon": lon,
                "text": label.text, "created_at": label.created_at,
            })
            return label

    def delete_label(self, label_id: str) -> None:
        with self._lock:
            if label_id not in self._labels:
                raise UnknownLabel(label_id)
            self._append("label_del", {"id": label_id})

    def list_labels(self) -> list[MapLabel]:
        with self._lock:
            return sorted(self._labels.values(), key=lambda l: l.created_at)

    # -- alarms -------------------------------------------------------------------

    def append_alarm(self, alarm: AlarmEvent) -> None:
        with self._lock:
            if alarm.id in self._alarm_ids:
                return
            self._append("alarm", {
                "id": alarm.id, "terminal": alarm.terminal,
                "fence_id": alarm.fence_id,
                "lat": alarm.position[0], "lon": alarm.position[1],
                "timestamp": alarm.timestamp, "alarm_kind": alarm.kind,
            })

    def list_alarms(self, from_s: float | None = None, to_s: float | None = None) -> list[AlarmEvent]:
        with self._lock:
            out = self._alarms
            if from_s is not None:
                out = [a for a in out if a.timestamp >= from_s]
            if to_s is not None:
                out = [a for a in out if a.timestamp <= to_s]
            return list(out)
