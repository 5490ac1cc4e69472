"""Command line interface.

Subcommands are non-interactive: usage errors exit 2 (click's default),
runtime errors exit 1 with a one-line diagnostic.
"""

from __future__ import annotations

import asyncio
import datetime as dt
import functools
import json
import logging
import sys
import time
from pathlib import Path

import click

from . import devicesim, nmea, pdu, store as store_mod
from .geofence import point_in_polygon, validate_polygon, vertices_from_geojson
from .service import ControlCenter, ServerConfig

_DOMAIN_ERRORS = (ValueError, store_mod.StoreError, devicesim.SimError, OSError)


def _runtime_errors(fn):
    """Map domain failures to one-line diagnostics with exit code 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _DOMAIN_ERRORS as exc:
            raise click.ClickException(str(exc))

    return wrapper


@click.group()
def main():
    """Buoy fleet tracking: server, terminal simulator, and codec tools."""
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--tcp-port", default=5023, show_default=True,
              envvar="BUOYTRACK_TCP_PORT", help="Terminal listener port.")
@click.option("--http-port", default=8080, show_default=True,
              envvar="BUOYTRACK_HTTP_PORT", help="API/console port.")
@click.option("--data", default="data", show_default=True,
              envvar="BUOYTRACK_DATA", type=click.Path(file_okay=False),
              help="Journal directory.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--idle-timeout", default=300.0, show_default=True,
              help="Seconds before an idle terminal session is dropped.")
@click.option("--online-window", default=60.0, show_default=True,
              help="Seconds within which a terminal counts as online.")
@click.option("--static", type=click.Path(file_okay=False), default=None,
              help="Directory with the web console bundle to serve at /.")
@_runtime_errors
def serve(tcp_port, http_port, data, host, idle_timeout, online_window, static):
    """Run the control center (TCP ingestion + HTTP API + push feed)."""
    config = ServerConfig(
        tcp_port=tcp_port, http_port=http_port, data_dir=Path(data),
        host=host, idle_timeout_s=idle_timeout, online_window_s=online_window,
        static_dir=Path(static) if static else None)
    center = ControlCenter(config)
    try:
        asyncio.run(center.serve())
    except KeyboardInterrupt:
        pass


@main.command()
@click.option("--server", default="127.0.0.1:5023", show_default=True,
              help="Tracking server as host:port.")
@click.option("--imei", required=True, help="15-digit terminal identity.")
@click.option("--route", "route_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Route JSON: waypoints, speed_knots, report_interval_s.")
@click.option("--count", default=10, show_default=True,
              help="Number of position reports to send.")
@click.option("--interval", default=None, type=float,
              help="Report interval in seconds [default: route value].")
@click.option("--fw", default="1.0", show_default=True)
@click.option("--reg-delay", default=devicesim.DEFAULT_REGISTRATION_DELAY_S,
              show_default=True, help="Network registration delay.")
@click.option("--gprs-delay", default=devicesim.DEFAULT_GPRS_ATTACH_DELAY_S,
              show_default=True, help="GPRS attach delay.")
@click.option("--fix-delay", default=devicesim.DEFAULT_FIX_DELAY_S,
              show_default=True, help="First GPS fix delay.")
@click.option("--idle-timeout", default=devicesim.DEFAULT_IDLE_TIMEOUT_S,
              show_default=True, help="Device power-save idle timeout.")
@click.option("--data-request-at", multiple=True, type=float,
              help="Sim-time offsets (s) at which to inject a data request; repeatable.")
@_runtime_errors
def sim(server, imei, route_path, count, interval, fw, reg_delay, gprs_delay,
        fix_delay, idle_timeout, data_request_at):
    """Simulate one locator terminal against a running server."""
    host, _, port_text = server.partition(":")
    if not port_text.isdigit():
        raise click.ClickException(f"bad --server value {server!r}, need host:port")
    route = devicesim.Route.load(route_path)
    report = devicesim.run_simulator(
        host, int(port_text), imei, route, count, interval,
        fw_version=fw, registration_delay_s=reg_delay,
        gprs_attach_delay_s=gprs_delay, fix_delay_s=fix_delay,
        idle_timeout_s=idle_timeout, data_request_at=tuple(data_request_at))
    click.echo(f"sent={report.sent} acked={report.acked} "
               f"power_saves={report.power_saves} errors={len(report.errors)}")
    for err in report.errors:
        click.echo(f"error: {err}", err=True)
    if not report.ok or report.sent != count:
        sys.exit(1)


@main.group(name="nmea")
def nmea_group():
    """RMC sentence tools."""


@nmea_group.command(name="checksum")
@click.argument("body")
@_runtime_errors
def nmea_checksum_cmd(body):
    """Print the XOR checksum of a sentence body (text between $ and *)."""
    click.echo(nmea.nmea_checksum(body))


@nmea_group.command(name="parse")
@click.argument("sentence")
@_runtime_errors
def nmea_parse_cmd(sentence):
    """Decode one RMC sentence and print its fields as JSON."""
    fix = nmea.parse_gprmc(sentence)
    click.echo(json.dumps({
        "utc_time": fix.utc_time.isoformat() if fix.utc_time else None,
        "status": fix.status.name.title(),
        "latitude": fix.latitude,
        "longitude": fix.longitude,
        "speed_knots": fix.speed_knots,
        "course_deg": fix.course_deg,
        "date": fix.date.isoformat() if fix.date else None,
        "mag_variation_deg": fix.mag_variation_deg,
        "checksum_ok": fix.checksum_ok,
    }))


@nmea_group.command(name="gen")
@click.option("--lat", required=True, type=float)
@click.option("--lon", required=True, type=float)
@click.option("--speed", default=0.0, show_default=True, help="Knots.")
@click.option("--course", default=0.0, show_default=True, help="Degrees true.")
@click.option("--time", "epoch", default=None, type=float,
              help="UTC epoch seconds [default: now].")
@click.option("--void", is_flag=True, help="Emit a Void (status V) sentence.")
@_runtime_errors
def nmea_gen_cmd(lat, lon, speed, course, epoch, void):
    """Generate one RMC sentence."""
    stamp = dt.datetime.fromtimestamp(
        epoch if epoch is not None else time.time(), tz=dt.timezone.utc)
    fix = nmea.GprmcFix(
        utc_time=stamp.time().replace(microsecond=0),
        status=nmea.FixStatus.VOID if void else nmea.FixStatus.ACTIVE,
        latitude=lat, longitude=lon, speed_knots=speed, course_deg=course,
        date=stamp.date())
    click.echo(nmea.format_gprmc(fix))


@main.group(name="pdu")
def pdu_group():
    """SMS binary PDU tools."""


@pdu_group.command(name="encode-submit")
@click.option("--dest", required=True, help="Destination digits.")
@click.option("--mr", default=0, show_default=True, help="Message reference.")
@click.option("--toa", default="0x91", show_default=True,
              help="Type of address octet (0x81 national, 0x91 international).")
@click.option("--text", default=None, help="Payload as ASCII text.")
@click.option("--payload-hex", default=None, help="Payload as hex.")
@_runtime_errors
def pdu_encode_submit_cmd(dest, mr, toa, text, payload_hex):
    """Encode an SMS-SUBMIT PDU and print it as hex."""
    if (text is None) == (payload_hex is None):
        raise click.UsageError("give exactly one of --text or --payload-hex")
    payload = text.encode("ascii") if text is not None else bytes.fromhex(payload_hex)
    msg = pdu.SmsSubmit(message_ref=mr, dest_digits=dest,
                        type_of_address=int(toa, 0), payload=payload)
    click.echo(pdu.encode_submit(msg))


@pdu_group.command(name="decode-deliver")
@click.argument("hex_text")
@_runtime_errors
def pdu_decode_deliver_cmd(hex_text):
    """Decode an SMS-DELIVER PDU and print its fields as JSON."""
    msg = pdu.decode_deliver(hex_text)
    ts = msg.timestamp
    click.echo(json.dumps({
        "originator": msg.originator_digits,
        "type_of_address": f"0x{msg.type_of_address:02X}",
        "timestamp": f"{ts.year:04d}-{ts.month:02d}-{ts.day:02d} "
                     f"{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}",
        "tz_quarter_hours": ts.tz_quarter_hours,
        "payload_hex": msg.payload.hex().upper(),
    }))


@pdu_group.command(name="semi")
@click.argument("value")
@click.option("--decode", "do_decode", is_flag=True,
              help="Treat VALUE as hex and decode it instead.")
@click.option("--digits", default=None, type=int,
              help="Digit count for --decode.")
@_runtime_errors
def pdu_semi_cmd(value, do_decode, digits):
    """Encode digits as GSM semi-octets (or decode with --decode)."""
    if do_decode:
        if digits is None:
            raise click.UsageError("--decode requires --digits")
        try:
            data = bytes.fromhex(value)
        except ValueError as exc:
            raise pdu.BadHex(str(exc))
        click.echo(pdu.decode_semi_octets(data, digits))
    else:
        click.echo(pdu.encode_semi_octets(value).hex().upper())


@main.group(name="fence")
def fence_group():
    """Geofence tools."""


@fence_group.command(name="check")
@click.argument("geojson_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("lat", type=float)
@click.argument("lon", type=float)
@_runtime_errors
def fence_check_cmd(geojson_file, lat, lon):
    """Classify a point against a polygon from a GeoJSON file."""
    with open(geojson_file, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") == "Feature":
        geometry = doc.get("geometry")
    elif doc.get("type") == "FeatureCollection":
        features = doc.get("features") or []
        if len(features) != 1:
            raise click.ClickException("FeatureCollection must hold exactly one feature")
        geometry = features[0].get("geometry")
    else:
        geometry = doc
    vertices = vertices_from_geojson(geometry)
    validate_polygon(vertices)
    click.echo(point_in_polygon((lat, lon), vertices).value)


@main.group(name="export")
def export_group():
    """Data export."""


@export_group.command(name="track")
@click.option("--terminal", required=True, help="Terminal name or IMEI.")
@click.option("--from", "from_s", required=True, type=float,
              help="Window start, UTC epoch seconds.")
@click.option("--to", "to_s", required=True, type=float,
              help="Window end, UTC epoch seconds.")
@click.option("--data", default="data", show_default=True,
              envvar="BUOYTRACK_DATA", type=click.Path(file_okay=False))
@_runtime_errors
def export_track_cmd(terminal, from_s, to_s, data):
    """Emit a track window as newline-delimited JSON records."""
    st = store_mod.Store(data, readonly=True)
    for p in st.query_track(terminal, from_s, to_s):
        click.echo(json.dumps({
            "terminal": p.terminal, "timestamp": p.timestamp,
            "lat": p.lat, "lon": p.lon, "speed_knots": p.speed_knots,
            "course_deg": p.course_deg, "seq": p.seq,
            "received_at": p.received_at,
        }))


if __name__ == "__main__":
    main()
