"""GSM SMS binary PDU codec (SMS-SUBMIT encode, SMS-DELIVER decode).

The fallback transport for position reports: payloads travel as 8-bit user
data, so only the 8-bit data coding scheme is supported.  Addresses use the
GSM semi-octet encoding (nibble-swapped BCD digit pairs, odd length padded
with 0xF).

Layout of an encoded SUBMIT, in octets::

    00        SMSC length (0 = use stored SMSC)
    11        first octet: SMS-SUBMIT, relative validity period
    MR        message reference
    NN        destination digit count
    TOA       type of address (0x81 national / 0x91 international)
    ...       destination digits, semi-octets
    00        protocol identifier
    04        data coding scheme: 8-bit
    AA        validity period: relative, 4 days
    LL        user data length (octets)
    ...       user data

Pure functions; reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass

MAX_PAYLOAD = 140
MAX_ADDRESS_DIGITS = 20


class PduError(ValueError):
    """Base class for PDU codec errors."""


class NonDigit(PduError):
    """An address contains something other than decimal digits."""


class LengthMismatch(PduError):
    """Semi-octet byte count does not match the stated digit count."""


class PayloadTooLong(PduError):
    """User data exceeds 140 octets."""


class BadHex(PduError):
    """Input is not an even-length hex text."""


class NotDeliver(PduError):
    """The PDU's message type indicator is not SMS-DELIVER."""


class UnsupportedDcs(PduError):
    """Data coding scheme is not in the 8-bit family."""


class Truncated(PduError):
    """The PDU ends before a required field."""


@dataclass(frozen=True)
class SmsSubmit:
    """An outbound message: destination, reference, and binary payload."""

    message_ref: int
    dest_digits: str
    type_of_address: int = 0x91
    payload: bytes = b""

    def __post_init__(self) -> None:
        if not 0 <= self.message_ref <= 255:
            raise PduError(f"message_ref {self.message_ref} out of 0-255")
        if not self.dest_digits.isdigit():
            raise NonDigit(f"destination {self.dest_digits!r} is not all digits")
        if not 1 <= len(self.dest_digits) <= MAX_ADDRESS_DIGITS:
            raise PduError(f"destination must be 1-{MAX_ADDRESS_DIGITS} digits")
        if not 0 <= self.type_of_address <= 255:
            raise PduError(f"type_of_address {self.type_of_address} out of one octet")
        if len(self.payload) > MAX_PAYLOAD:
            raise PayloadTooLong(f"payload {len(self.payload)} > {MAX_PAYLOAD} octets")


@dataclass(frozen=True)
class SmscTimestamp:
    """Service-center timestamp: local time plus quarter-hour UTC offset."""

    year: int
    month: int
    day: int
    hour: int
    minute: int
    second: int
    tz_quarter_hours: int = 0

    def __post_init__(self) -> None:
        import datetime as dt

        try:
            dt.datetime(self.year, self.month, self.day,
                        self.hour, self.minute, self.second)
        except ValueError as exc:
            raise PduError(f"timestamp out of calendar range: {exc}") from exc
        if not -79 <= self.tz_quarter_hours <= 79:
            raise PduError(f"timezone {self.tz_quarter_hours} quarter-hours out of range")


@dataclass(frozen=True)
class SmsDeliver:
    """An inbound message as decoded from an SMS-DELIVER PDU."""

    originator_digits: str
    type_of_address: int
    timestamp: SmscTimestamp
    payload: bytes

    def __post_init__(self) -> None:
        if len(self.payload) > MAX_PAYLOAD:
            raise PayloadTooLong(f"payload {len(self.payload)} > {MAX_PAYLOAD} octets")


def encode_semi_octets(digits: str) -> bytes:
    """Pack decimal digits into nibble-swapped pairs, F-padding odd length."""
    if not all(c.isdigit() and c.isascii() for c in digits):
        raise NonDigit(f"{digits!r} is not all decimal digits")
    out = bytearray()
    padded = digits + "F" if len(digits) % 2 else digits
    for i in range(0, len(padded), 2):
        lo, hi = padded[i], padded[i + 1]
        out.append((int(hi, 16) << 4) | int(lo, 16))
    return bytes(out)


def decode_semi_octets(data: bytes, digit_count: int) -> str:
    """Exact inverse of :func:`encode_semi_octets` for the stated digit count."""
    if digit_count < 0:
        raise LengthMismatch("digit_count must be nonnegative")
    expected = (digit_count + 1) // 2
    if len(data) != expected:
        raise LengthMismatch(f"need {expected} bytes for {digit_count} digits, got {len(data)}")
    digits = []
    for byte in data:
        digits.append(byte & 0x0F)
        digits.append(byte >> 4)
    digits = digits[:digit_count]
    if any(d > 9 for d in digits):
        raise NonDigit("semi-octet data contains a non-BCD digit nibble")
    return "".join(str(d) for d in digits)


def encode_submit(msg: SmsSubmit) -> str:
    """Encode an SMS-SUBMIT as uppercase hex text (layout above)."""
    pdu = bytearray((0x00, 0x11, msg.message_ref,
                     len(msg.dest_digits), msg.type_of_address))
    pdu += encode_semi_octets(msg.dest_digits)
    pdu += bytes((0x00, 0x04, 0xAA, len(msg.payload)))
    pdu += msg.payload
    return pdu.hex().upper()


class _Reader:
    """Byte cursor that raises Truncated instead of running off the end."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def u8(self, what: str) -> int:
        if self._pos >= len(self._data):
            raise Truncated(f"PDU ends before {what}")
        value = self._data[self._pos]
        self._pos += 1
        return value

    def take(self, n: int, what: str) -> bytes:
        if self._pos + n > len(self._data):
            raise Truncated(f"PDU ends inside {what}")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk


def _is_eight_bit_dcs(dcs: int) -> bool:
    # General coding group 00xx with 8-bit alphabet, or the data-coding /
    # message-class group 1111 with its 8-bit flag set.
    if dcs & 0xC0 == 0x00:
        return dcs & 0x0C == 0x04
    return dcs & 0xF4 == 0xF4


def _decode_scts(raw: bytes) -> SmscTimestamp:
    def bcd(byte: int) -> int:
        lo, hi = byte & 0x0F, byte >> 4
        if lo > 9 or hi > 9:
            raise PduError(f"non-BCD timestamp octet {byte:02X}")
        return lo * 10 + hi

    yy, mo, dd, hh, mi, ss = (bcd(b) for b in raw[:6])
    tz_byte = raw[6]
    quarters = (tz_byte & 0x07) * 10 + (tz_byte >> 4)
    if tz_byte & 0x08:
        quarters = -quarters
    return SmscTimestamp(2000 + yy, mo, dd, hh, mi, ss, quarters)


def decode_deliver(hex_text: str) -> SmsDeliver:
    """Decode an SMS-DELIVER PDU given as hex text.

    Rejects anything whose message type indicator is not DELIVER and any
    data coding scheme outside the 8-bit family.  Trailing octets beyond
    the stated user data length are ignored.
    """
    try:
        data = bytes.fromhex(hex_text)
    except ValueError as exc:
        raise BadHex(f"not an even-length hex text: {exc}") from exc

    r = _Reader(data)
    smsc_len = r.u8("SMSC length")
    r.take(smsc_len, "SMSC address")
    first_octet = r.u8("first octet")
    if first_octet & 0x03 != 0x00:
        raise NotDeliver(f"MTI {first_octet & 0x03} is not SMS-DELIVER")
    digit_count = r.u8("originator length")
    toa = r.u8("type of address")
    originator = decode_semi_octets(
        r.take((digit_count + 1) // 2, "originator address"), digit_count)
    r.u8("protocol identifier")
    dcs = r.u8("data coding scheme")
    if not _is_eight_bit_dcs(dcs):
        raise UnsupportedDcs(f"DCS {dcs:02X} is not 8-bit")
    timestamp = _decode_scts(r.take(7, "timestamp"))
    udl = r.u8("user data length")
    payload = r.take(udl, "user data")
    return SmsDeliver(originator, toa, timestamp, bytes(payload))
