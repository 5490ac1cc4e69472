import datetime as dt
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from buoytrack import nmea
from buoytrack.devicesim import (
    DeviceEvent,
    DeviceState,
    IllegalTransition,
    Phase,
    Route,
    device_step,
    emit_fix,
    position_at,
)

E = DeviceEvent


def run_events(events, *, start=DeviceState(), now=0.0, idle_timeout=600.0):
    state = start
    for event in events:
        state = device_step(state, event, now, idle_timeout)
    return state

START_SEQUENCE = (E.POWER_ON, E.REGISTERED, E.GPRS_UP, E.FIX_ACQUIRED)


class TestDeviceStep:
    def test_power_on(self):
        state = device_step(DeviceState(), E.POWER_ON, 0.0)
        assert state.phase is Phase.REGISTERING
        assert not state.gps_on and not state.gprs_on and not state.indicator_lit

    def test_registered_turns_gprs_on(self):
        state = run_events([E.POWER_ON, E.REGISTERED])
        assert state.phase is Phase.GPRS_CONNECTING
        assert state.gprs_on and not state.gps_on

    def test_gprs_up_turns_gps_on(self):
        state = run_events([E.POWER_ON, E.REGISTERED, E.GPRS_UP])
        assert state.phase is Phase.ACQUIRING
        assert state.gps_on and state.gprs_on

    def test_fix_acquired_lights_indicator(self):
        state = run_events(START_SEQUENCE)
        assert state.phase is Phase.REPORTING
        assert state.indicator_lit

    def test_start_sequence_reaches_reporting_with_radios_on(self):
        state = run_events(START_SEQUENCE, now=42.0)
        assert state.phase is Phase.REPORTING
        assert state.gps_on and state.gprs_on and state.indicator_lit
        assert state.idle_since == 42.0

    def test_idle_tick_enters_power_save(self):
        reporting = run_events(START_SEQUENCE, now=0.0)
        state = device_step(reporting, E.TICK, 601.0, 600.0)
        assert state.phase is Phase.POWER_SAVE
        assert not state.gps_on and not state.gprs_on

    def test_idle_boundary_is_inclusive(self):
        reporting = run_events(START_SEQUENCE, now=0.0)
        assert device_step(reporting, E.TICK, 599.9, 600.0).phase is Phase.REPORTING
        assert device_step(reporting, E.TICK, 600.0, 600.0).phase is Phase.POWER_SAVE

    def test_data_request_resets_idle_clock(self):
        reporting = run_events(START_SEQUENCE, now=0.0)
        state = device_step(reporting, E.DATA_REQUEST, 500.0)
        assert state.phase is Phase.REPORTING
        assert state.idle_since == 500.0
        assert device_step(state, E.TICK, 1000.0, 600.0).phase is Phase.REPORTING
        assert device_step(state, E.TICK, 1100.0, 600.0).phase is Phase.POWER_SAVE

    def test_data_request_wakes_power_save(self):
        asleep = device_step(run_events(START_SEQUENCE), E.TICK, 9000.0, 600.0)
        assert asleep.phase is Phase.POWER_SAVE
        woken = device_step(asleep, E.DATA_REQUEST, 9001.0)
        assert woken.phase is Phase.REGISTERING
        restored = run_events([E.REGISTERED, E.GPRS_UP, E.FIX_ACQUIRED],
                              start=woken, now=9010.0)
        assert restored.phase is Phase.REPORTING
        assert restored.gps_on and restored.gprs_on and restored.indicator_lit

    def test_tick_noop_outside_reporting(self):
        state = run_events([E.POWER_ON, E.REGISTERED])
        assert device_step(state, E.TICK, 1e9) == state

    @pytest.mark.parametrize("phase_events,event", [
        ([], E.REGISTERED),                  # Off
        ([], E.TICK),                        # no clock while off
        ([], E.DATA_REQUEST),
        ([E.POWER_ON], E.POWER_ON),          # Registering
        ([E.POWER_ON], E.GPRS_UP),
        ([E.POWER_ON], E.DATA_REQUEST),
        ([E.POWER_ON, E.REGISTERED], E.FIX_ACQUIRED),
        (list(START_SEQUENCE), E.POWER_ON),  # Reporting
        (list(START_SEQUENCE), E.REGISTERED),
    ])
    def test_illegal_transitions(self, phase_events, event):
        state = run_events(phase_events)
        with pytest.raises(IllegalTransition):
            device_step(state, event, 0.0)

    @given(st.lists(st.sampled_from(list(DeviceEvent)), max_size=60),
           st.floats(1.0, 1e6))
    def test_invariants_hold_on_every_reachable_state(self, events, step_s):
        state = DeviceState()
        now = 0.0
        saw_power_save_from = None
        for event in events:
            now += step_s
            try:
                prev = state
                state = device_step(state, event, now, 600.0)
            except IllegalTransition:
                continue
            if state.gps_on:
                assert state.phase in (Phase.ACQUIRING, Phase.REPORTING)
            if state.gprs_on:
                assert state.phase in (Phase.GPRS_CONNECTING, Phase.ACQUIRING, Phase.REPORTING)
            if state.phase is Phase.POWER_SAVE:
                assert not state.gps_on and not state.gprs_on
                if prev.phase is not Phase.POWER_SAVE:
                    saw_power_save_from = prev.phase
        if saw_power_save_from is not None:
            assert saw_power_save_from is Phase.REPORTING


ROUTE = Route(waypoints=((0.0, 0.0), (0.0, 0.1)), speed_knots=10.0,
              report_interval_s=1.0)


class TestRoute:
    def test_requires_two_waypoints(self):
        with pytest.raises(ValueError):
            Route(waypoints=((0.0, 0.0),), speed_knots=1.0, report_interval_s=1.0)

    def test_rejects_duplicate_consecutive(self):
        with pytest.raises(ValueError):
            Route(waypoints=((0.0, 0.0), (0.0, 0.0), (1.0, 1.0)),
                  speed_knots=1.0, report_interval_s=1.0)

    def test_rejects_bad_speed_and_interval(self):
        with pytest.raises(ValueError):
            Route(waypoints=ROUTE.waypoints, speed_knots=0.0, report_interval_s=1.0)
        with pytest.raises(ValueError):
            Route(waypoints=ROUTE.waypoints, speed_knots=1.0, report_interval_s=0.0)

    def test_load(self, tmp_path):
        path = tmp_path / "route.json"
        path.write_text(json.dumps({
            "waypoints": [[60.0, 5.0], [60.01, 5.0]],
            "speed_knots": 4.0,
            "report_interval_s": 2,
        }))
        route = Route.load(path)
        assert route.waypoints == ((60.0, 5.0), (60.01, 5.0))
        assert route.speed_knots == 4.0

    def test_load_rejects_bad_document(self, tmp_path):
        path = tmp_path / "route.json"
        path.write_text(json.dumps({"waypoints": [[0, 0], [1, 1]]}))
        with pytest.raises(ValueError):
            Route.load(path)


class TestPositionAt:
    def test_start_clamp(self):
        lat, lon, course = position_at(ROUTE, 0.0)
        assert (lat, lon) == (0.0, 0.0)
        assert course == pytest.approx(90.0)

    def test_end_clamp(self):
        lat, lon, course = position_at(ROUTE, 1e9)
        assert (lat, lon) == (0.0, 0.1)
        assert course == pytest.approx(90.0)

    def test_due_east_midpoint(self):
        # Leg length on the equator: 0.1 deg of longitude.
        leg_m = math.radians(0.1) * 6_371_000.0
        half_t = (leg_m / 2) / (10.0 * 1852.0 / 3600.0)
        lat, lon, course = position_at(ROUTE, half_t)
        assert lat == pytest.approx(0.0, abs=1e-12)
        assert lon == pytest.approx(0.05, abs=1e-9)
        assert course == pytest.approx(90.0)

    def test_due_north_course(self):
        route = Route(waypoints=((10.0, 20.0), (10.1, 20.0)), speed_knots=5.0,
                      report_interval_s=1.0)
        assert position_at(route, 0.0)[2] == pytest.approx(0.0)

    def test_multi_leg_walk(self):
        route = Route(waypoints=((0.0, 0.0), (0.0, 0.01), (0.01, 0.01)),
                      speed_knots=10.0, report_interval_s=1.0)
        leg_m = math.radians(0.01) * 6_371_000.0
        t_leg = leg_m / (10.0 * 1852.0 / 3600.0)
        lat, lon, course = position_at(route, t_leg * 1.5)
        assert lon == pytest.approx(0.01, abs=1e-9)
        assert lat == pytest.approx(0.005, abs=1e-9)
        assert course == pytest.approx(0.0)

    @given(st.floats(0, 5000), st.floats(0.001, 2.0))
    def test_continuity(self, t, dt_s):
        route = Route(waypoints=((0.0, 0.0), (0.0, 0.05), (0.05, 0.05)),
                      speed_knots=20.0, report_interval_s=1.0)
        lat1, lon1, _ = position_at(route, t)
        lat2, lon2, _ = position_at(route, t + dt_s)
        moved_m = math.hypot(lat2 - lat1, lon2 - lon1) * math.pi / 180 * 6_371_000.0
        assert moved_m <= 20.0 * 1852.0 / 3600.0 * dt_s + 1e-6

    @given(st.floats(0, 1e7))
    def test_constant_after_exhaustion(self, extra):
        end = position_at(ROUTE, 1e8)
        assert position_at(ROUTE, 1e8 + extra) == end


class TestEmitFix:
    WALLCLOCK = dt.datetime(2026, 3, 4, 12, 30, 45, tzinfo=dt.timezone.utc).timestamp()

    def test_start_fix_matches_first_waypoint(self):
        fix = emit_fix(ROUTE, 0.0, self.WALLCLOCK)
        assert fix.status is nmea.FixStatus.ACTIVE
        assert abs(fix.latitude - 0.0) < 1e-6
        assert abs(fix.longitude - 0.0) < 1e-6
        assert fix.speed_knots == ROUTE.speed_knots
        assert fix.utc_time == dt.time(12, 30, 45)
        assert fix.date == dt.date(2026, 3, 4)

    def test_clamped_fix_keeps_route_speed(self):
        a = emit_fix(ROUTE, 1e8, self.WALLCLOCK)
        b = emit_fix(ROUTE, 1e8 + 60, self.WALLCLOCK + 60)
        assert (a.latitude, a.longitude) == (b.latitude, b.longitude)
        assert a.speed_knots == b.speed_knots == ROUTE.speed_knots

    def test_fix_formats_to_valid_sentence(self):
        fix = emit_fix(ROUTE, 30.0, self.WALLCLOCK)
        again = nmea.parse_gprmc(nmea.format_gprmc(fix))
        assert abs(again.latitude - fix.latitude) < 1e-6
        assert abs(again.longitude - fix.longitude) < 1e-6
