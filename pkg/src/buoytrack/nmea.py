"""NMEA 0183 RMC sentence codec.

Locator terminals report positions as ``$GPRMC`` sentences (time, status,
position, speed over ground, course, date).  This module parses such
sentences into :class:`GprmcFix`, generates canonical sentences from a fix,
and converts the ``ddmm.mmmm`` coordinate fields to signed decimal degrees.

Everything here is pure and reentrant; no I/O.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass
from enum import Enum


class NmeaError(ValueError):
    """Base class for sentence-level errors."""


class IllegalCharacter(NmeaError):
    """Checksum body contains framing characters ('$' or '*')."""


class NotRmc(NmeaError):
    """The sentence is well-formed NMEA but not an RMC sentence.

    Raised so mixed streams (GGA, GSV, ...) can skip non-RMC lines cheaply;
    it is never a fatal condition for a reader.
    """


class ChecksumMismatch(NmeaError):
    """Stated checksum does not match the computed one."""


class MalformedField(NmeaError):
    """Wrong field count, or a field that cannot be decoded."""


class MalformedCoordinate(MalformedField):
    """A ddmm.mmmm coordinate field that cannot be converted.

    Subclass of :class:`MalformedField` so sentence parsing surfaces bad
    coordinates as malformed fields.
    """


class FixStatus(Enum):
    ACTIVE = "A"
    VOID = "V"


# Two-digit RMC years map into this window (deployment era of the system).
YEAR_BASE = 2000

_TIME_RE = re.compile(r"^(\d{2})(\d{2})(\d{2})(\.\d+)?$")
_DATE_RE = re.compile(r"^(\d{2})(\d{2})(\d{2})$")
_COORD_RE = re.compile(r"^(\d{3,})(?:\.(\d+))?$")
_UNSIGNED_RE = re.compile(r"^\d+(\.\d+)?$")


@dataclass(frozen=True)
class GprmcFix:
    """One decoded RMC sentence.

    Latitude/longitude are signed decimal degrees (+N/+E).  A Void fix may
    omit any payload field (cold-starting receivers emit mostly-empty
    sentences); an Active fix carries them all.
    """

    utc_time: dt.time | None
    status: FixStatus
    latitude: float | None
    longitude: float | None
    speed_knots: float | None
    course_deg: float | None
    date: dt.date | None
    mag_variation_deg: float | None = None
    checksum_ok: bool = True

    def __post_init__(self) -> None:
        if self.status is FixStatus.ACTIVE:
            for name in ("utc_time", "latitude", "longitude", "speed_knots",
                         "course_deg", "date"):
                if getattr(self, name) is None:
                    raise ValueError(f"active fix requires {name}")
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")
        if self.speed_knots is not None and self.speed_knots < 0.0:
            raise ValueError(f"negative speed {self.speed_knots}")
        if self.course_deg is not None and not 0.0 <= self.course_deg < 360.0:
            raise ValueError(f"course {self.course_deg} out of [0, 360)")
        if self.date is not None and not YEAR_BASE <= self.date.year <= YEAR_BASE + 99:
            raise ValueError(f"year {self.date.year} outside {YEAR_BASE}-{YEAR_BASE + 99}")

    def epoch_seconds(self) -> float | None:
        """UTC epoch seconds of the fix, or None if time/date are absent."""
        if self.utc_time is None or self.date is None:
            return None
        combined = dt.datetime.combine(self.date, self.utc_time, tzinfo=dt.timezone.utc)
        return combined.timestamp()


def nmea_checksum(body: str) -> str:
    """XOR-fold the sentence body (text between '$' and '*').

    Returns the checksum as two uppercase hex characters.
    """
    if "$" in body or "*" in body:
        raise IllegalCharacter("checksum body must not contain '$' or '*'")
    acc = 0
    for ch in body:
        acc ^= ord(ch)
    return f"{acc:02X}"


def coord_to_degrees(field: str, hemisphere: str) -> float:
    """Convert a ddmm.mmmm / dddmm.mmmm field to signed decimal degrees.

    ``hemisphere`` selects the range check and sign: N/S allow up to 90
    degrees, E/W up to 180; S and W negate.
    """
    if hemisphere in ("N", "S"):
        limit = 90.0
    elif hemisphere in ("E", "W"):
        limit = 180.0
    else:
        raise MalformedCoordinate(f"bad hemisphere {hemisphere!r}")
    m = _COORD_RE.match(field)
    if not m:
        raise MalformedCoordinate(f"bad coordinate field {field!r}")
    digits, frac = m.group(1), m.group(2)
    degrees = int(digits[:-2])
    minutes = float(digits[-2:] + ("." + frac if frac else ""))
    if minutes >= 60.0:
        raise MalformedCoordinate(f"minutes {minutes} >= 60 in {field!r}")
    value = degrees + minutes / 60.0
    if value > limit:
        raise MalformedCoordinate(f"{field!r} exceeds {limit} degrees")
    return -value if hemisphere in ("S", "W") else value


def _degrees_to_coord(value: float, *, lon: bool) -> tuple[str, str]:
    """Inverse of coord_to_degrees: canonical field text plus hemisphere.

    Minutes carry four decimal places, which keeps the round-trip error
    below 1e-6 degrees (half an ulp is 0.00005 min = 8.4e-7 deg).
    """
    if lon:
        hemi = "E" if value >= 0 else "W"
        deg_width = 3
    else:
        hemi = "N" if value >= 0 else "S"
        deg_width = 2
    mag = abs(value)
    degrees = int(mag)
    minutes = round((mag - degrees) * 60.0, 4)
    if minutes >= 60.0:
        minutes = 0.0
        degrees += 1
    return f"{degrees:0{deg_width}d}{minutes:07.4f}", hemi


def _parse_time(field: str) -> dt.time:
    m = _TIME_RE.match(field)
    if not m:
        raise MalformedField(f"bad time field {field!r}")
    hh, mm, ss = int(m.group(1)), int(m.group(2)), int(m.group(3))
    micros = min(int(round(float(m.group(4) or "0") * 1_000_000)), 999_999)
    try:
        return dt.time(hh, mm, ss, micros)
    except ValueError as exc:
        raise MalformedField(f"bad time field {field!r}") from exc


def _parse_date(field: str) -> dt.date:
    m = _DATE_RE.match(field)
    if not m:
        raise MalformedField(f"bad date field {field!r}")
    day, month, yy = int(m.group(1)), int(m.group(2)), int(m.group(3))
    try:
        return dt.date(YEAR_BASE + yy, month, day)
    except ValueError as exc:
        raise MalformedField(f"bad date field {field!r}") from exc


def _parse_unsigned(field: str, name: str) -> float:
    if not _UNSIGNED_RE.match(field):
        raise MalformedField(f"bad {name} field {field!r}")
    return float(field)


def parse_gprmc(line: str, *, require_checksum: bool = True) -> GprmcFix:
    """Decode one RMC sentence ('$'...'*hh', no trailing line break).

    With ``require_checksum`` (the default) a stated checksum that does not
    match raises :class:`ChecksumMismatch`; otherwise the fix is returned
    with ``checksum_ok=False``.
    """
    if not line.startswith("$"):
        raise MalformedField("sentence must start with '$'")
    star = line.rfind("*")
    if star == -1 or len(line) - star != 3:
        raise MalformedField("sentence must end with '*' and two checksum digits")
    body, stated = line[1:star], line[star + 1:]
    try:
        int(stated, 16)
    except ValueError:
        raise MalformedField(f"bad checksum digits {stated!r}") from None

    fields = body.split(",")
    ident = fields[0]
    if len(ident) != 5 or not ident.endswith("RMC"):
        raise NotRmc(f"not an RMC sentence: {ident!r}")

    try:
        computed = nmea_checksum(body)
    except IllegalCharacter as exc:
        raise MalformedField(str(exc)) from exc
    checksum_ok = computed == stated.upper()
    if require_checksum and not checksum_ok:
        raise ChecksumMismatch(f"stated {stated.upper()} != computed {computed}")

    # talker + 11 data fields; NMEA 2.3 receivers append a mode field.
    if len(fields) not in (12, 13):
        raise MalformedField(f"expected 12 or 13 fields, got {len(fields)}")

    status_field = fields[2]
    try:
        status = FixStatus(status_field)
    except ValueError:
        raise MalformedField(f"bad status field {status_field!r}") from None
    void = status is FixStatus.VOID

    def optional(field: str, parser, name: str):
        if field == "":
            if void:
                return None
            raise MalformedField(f"empty {name} field in active fix")
        return parser(field)

    utc_time = optional(fields[1], _parse_time, "time")

    lat_f, lat_h, lon_f, lon_h = fields[3], fields[4], fields[5], fields[6]
    if (lat_f == "") != (lat_h == "") or (lon_f == "") != (lon_h == ""):
        raise MalformedField("coordinate value and hemisphere must appear together")
    if lat_h not in ("", "N", "S"):
        raise MalformedField(f"bad latitude hemisphere {lat_h!r}")
    if lon_h not in ("", "E", "W"):
        raise MalformedField(f"bad longitude hemisphere {lon_h!r}")
    latitude = optional(lat_f, lambda f: coord_to_degrees(f, lat_h), "latitude")
    longitude = optional(lon_f, lambda f: coord_to_degrees(f, lon_h), "longitude")

    speed = optional(fields[7], lambda f: _parse_unsigned(f, "speed"), "speed")
    course = optional(fields[8], lambda f: _parse_unsigned(f, "course"), "course")
    if course is not None and course >= 360.0:
        raise MalformedField(f"course {course} out of [0, 360)")
    date = optional(fields[9], _parse_date, "date")

    var_f, var_h = fields[10], fields[11]
    if (var_f == "") != (var_h == ""):
        raise MalformedField("variation value and hemisphere must appear together")
    if var_f == "":
        variation = None
    else:
        if var_h not in ("E", "W"):
            raise MalformedField(f"bad variation hemisphere {var_h!r}")
        variation = _parse_unsigned(var_f, "variation")
        if var_h == "W":
            variation = -variation

    try:
        return GprmcFix(
            utc_time=utc_time,
            status=status,
            latitude=latitude,
            longitude=longitude,
            speed_knots=speed,
            course_deg=course,
            date=date,
            mag_variation_deg=variation,
            checksum_ok=checksum_ok,
        )
    except ValueError as exc:
        raise MalformedField(str(exc)) from exc


def format_gprmc(fix: GprmcFix) -> str:
    """Emit the canonical sentence for a fix (GPRMC talker, no mode field).

    Fractional seconds are dropped; minutes carry four decimals, speed and
    course one, so a parse of the output agrees with the fix within 1e-6
    degrees / 0.05 knots / 0.05 degrees of course.
    """
    time_f = "" if fix.utc_time is None else fix.utc_time.strftime("%H%M%S")
    if fix.latitude is None:
        lat_f = lat_h = ""
    else:
        lat_f, lat_h = _degrees_to_coord(fix.latitude, lon=False)
    if fix.longitude is None:
        lon_f = lon_h = ""
    else:
        lon_f, lon_h = _degrees_to_coord(fix.longitude, lon=True)
    speed_f = "" if fix.speed_knots is None else f"{round(fix.speed_knots, 1):05.1f}"
    if fix.course_deg is None:
        course_f = ""
    else:
        course = round(fix.course_deg, 1)
        if course >= 360.0:
            course = 0.0
        course_f = f"{course:05.1f}"
    date_f = "" if fix.date is None else fix.date.strftime("%d%m%y")
    if fix.mag_variation_deg is None:
        var_f = var_h = ""
    else:
        var = round(fix.mag_variation_deg, 1)
        var_h = "W" if var < 0 else "E"
        var_f = f"{abs(var):05.1f}"

    body = ",".join((
        "GPRMC", time_f, fix.status.value,
        lat_f, lat_h, lon_f, lon_h,
        speed_f, course_f, date_f, var_f, var_h,
    ))
    return f"${body}*{nmea_checksum(body)}"
