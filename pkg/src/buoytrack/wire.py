"""Terminal-to-server TCP protocol: line frames and session transitions.

One CRLF-terminated ASCII line per frame, strict request/response: the
terminal sends LOGIN / POS / HB, the server answers with exactly one ACK
or ERR.  Sequence numbers on POS frames must strictly increase within a
session, which rejects replays of buffered reports after a GPRS reconnect.

Frame grammar::

    LOGIN,<imei>,<fw>
    POS,<imei>,<seq>,<sentence>     sentence is the final field, may contain commas
    HB,<imei>
    ACK,LOGIN,<epoch>  |  ACK,POS,<seq>  |  ACK,HB
    ERR,<code>,<reason>             reason is the final field

The transition logic is pure; the enclosing server runs one session per
connection and feeds frames in arrival order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Union

from . import nmea

MAX_FRAME_BYTES = 1024

_IMEI_RE = re.compile(r"^\d{15}$")


class WireError(ValueError):
    """Base class for protocol errors."""


class BadFrame(WireError):
    """Unknown verb, wrong arity, or a field that fails validation."""


def validate_imei(imei: str) -> str:
    if not _IMEI_RE.match(imei):
        raise BadFrame(f"IMEI must be 15 decimal digits, got {imei!r}")
    return imei


def _no_line_breaks(value: str, what: str) -> str:
    if "\r" in value or "\n" in value:
        raise BadFrame(f"{what} must not contain line breaks")
    return value


def _single_field(value: str, what: str) -> str:
    _no_line_breaks(value, what)
    if "," in value:
        raise BadFrame(f"{what} must not contain commas")
    return value


@dataclass(frozen=True)
class Login:
    imei: str
    fw_version: str

    def __post_init__(self) -> None:
        validate_imei(self.imei)
        _single_field(self.fw_version, "fw_version")


@dataclass(frozen=True)
class Pos:
    imei: str
    seq: int
    sentence: str

    def __post_init__(self) -> None:
        validate_imei(self.imei)
        if self.seq < 0:
            raise BadFrame(f"seq {self.seq} is negative")
        _no_line_breaks(self.sentence, "sentence")
        if not self.sentence.startswith("$") or "*" not in self.sentence:
            raise BadFrame("sentence must be '$'-framed with a '*' checksum")


@dataclass(frozen=True)
class Hb:
    imei: str

    def __post_init__(self) -> None:
        validate_imei(self.imei)


@dataclass(frozen=True)
class AckLogin:
    epoch_seconds: int


@dataclass(frozen=True)
class AckPos:
    seq: int


@dataclass(frozen=True)
class AckHb:
    pass


@dataclass(frozen=True)
class Err:
    code: str
    reason: str

    def __post_init__(self) -> None:
        if not self.code:
            raise BadFrame("error code must be nonempty")
        _single_field(self.code, "code")
        _no_line_breaks(self.reason, "reason")


WireFrame = Union[Login, Pos, Hb, AckLogin, AckPos, AckHb, Err]


# Events the server acts on after a frame is accepted.

@dataclass(frozen=True)
class TerminalOnline:
    imei: str
    fw_version: str


@dataclass(frozen=True)
class PositionReceived:
    imei: str
    seq: int
    sentence: str
    received_at: float


@dataclass(frozen=True)
class HeartbeatReceived:
    imei: str


ServerEvent = Union[TerminalOnline, PositionReceived, HeartbeatReceived]


@dataclass(frozen=True)
class Session:
    """Per-connection state; imei is None until a LOGIN is accepted."""

    imei: str | None = None
    last_seq: int | None = None
    last_activity: float = 0.0

    @property
    def authenticated(self) -> bool:
        return self.imei is not None


def _parse_int(text: str, what: str) -> int:
    if not text.isdigit():
        raise BadFrame(f"bad {what} {text!r}")
    return int(text)


def decode_frame(line: str) -> WireFrame:
    """Parse one frame line (trailing CRLF tolerated)."""
    line = line.rstrip("\r\n")
    if len(line) > MAX_FRAME_BYTES:
        raise BadFrame(f"frame longer than {MAX_FRAME_BYTES} bytes")
    parts = line.split(",")
    verb = parts[0]
    if verb == "LOGIN":
        if len(parts) != 3:
            raise BadFrame("LOGIN takes imei and fw fields")
        return Login(parts[1], parts[2])
    if verb == "POS":
        if len(parts) < 4:
            raise BadFrame("POS takes imei, seq and sentence fields")
        return Pos(parts[1], _parse_int(parts[2], "seq"), ",".join(parts[3:]))
    if verb == "HB":
        if len(parts) != 2:
            raise BadFrame("HB takes an imei field")
        return Hb(parts[1])
    if verb == "ACK":
        if len(parts) == 2 and parts[1] == "HB":
            return AckHb()
        if len(parts) == 3 and parts[1] == "LOGIN":
            return AckLogin(_parse_int(parts[2], "epoch"))
        if len(parts) == 3 and parts[1] == "POS":
            return AckPos(_parse_int(parts[2], "seq"))
        raise BadFrame(f"bad ACK frame {line!r}")
    if verb == "ERR":
        if len(parts) < 3:
            raise BadFrame("ERR takes code and reason fields")
        return Err(parts[1], ",".join(parts[2:]))
    raise BadFrame(f"unknown verb {verb!r}")


def encode_frame(frame: WireFrame) -> str:
    """Render a frame as its CRLF-terminated line."""
    if isinstance(frame, Login):
        body = f"LOGIN,{frame.imei},{frame.fw_version}"
    elif isinstance(frame, Pos):
        body = f"POS,{frame.imei},{frame.seq},{frame.sentence}"
    elif isinstance(frame, Hb):
        body = f"HB,{frame.imei}"
    elif isinstance(frame, AckLogin):
        body = f"ACK,LOGIN,{frame.epoch_seconds}"
    elif isinstance(frame, AckPos):
        body = f"ACK,POS,{frame.seq}"
    elif isinstance(frame, AckHb):
        body = "ACK,HB"
    elif isinstance(frame, Err):
        body = f"ERR,{frame.code},{frame.reason}"
    else:
        raise TypeError(f"not a wire frame: {frame!r}")
    return body + "\r\n"


def handle_frame(
    session: Session, frame: WireFrame, now: float,
) -> tuple[WireFrame, list[ServerEvent], Session]:
    """Process one terminal-originated frame.

    Returns the single reply frame, the server events the caller must act
    on, and the successor session.  Pure: identical inputs give identical
    outputs, and no frame ever de-authenticates a session.
    """
    if isinstance(frame, Login):
        if session.authenticated:
            return Err("RELOGIN", "session already authenticated"), [], session
        new = replace(session, imei=frame.imei, last_activity=now)
        return (AckLogin(int(now)),
                [TerminalOnline(frame.imei, frame.fw_version)],
                new)

    if isinstance(frame, Pos):
        if not session.authenticated:
            return Err("NOLOGIN", "login required"), [], session
        if frame.imei != session.imei:
            return Err("IMEI", "frame imei does not match session"), [], session
        if session.last_seq is not None and frame.seq <= session.last_seq:
            return Err("SEQ", f"seq {frame.seq} not above {session.last_seq}"), [], session
        try:
            nmea.parse_gprmc(frame.sentence)
        except nmea.NmeaError as exc:
            return Err("BADPOS", str(exc)), [], session
        new = replace(session, last_seq=frame.seq, last_activity=now)
        return (AckPos(frame.seq),
                [PositionReceived(frame.imei, frame.seq, frame.sentence, now)],
                new)

    if isinstance(frame, Hb):
        if not session.authenticated:
            return Err("NOLOGIN", "login required"), [], session
        if frame.imei != session.imei:
            return Err("IMEI", "frame imei does not match session"), [], session
        new = replace(session, last_activity=now)
        return AckHb(), [HeartbeatReceived(frame.imei)], new

    raise ValueError(f"not a terminal-originated frame: {frame!r}")
