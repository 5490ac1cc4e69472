"""HTTP+JSON API and live push channel over the control center.

Errors carry a machine-readable code: ``{"code": ..., "detail": ...}``
with 400 for validation problems, 404 for unknown ids, and 413 for
oversized bodies.  Fences travel as GeoJSON Polygon features.
"""

from __future__ import annotations

import asyncio
import time
import uuid
from pathlib import Path
from typing import TYPE_CHECKING

from fastapi import FastAPI, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import store as store_mod
from .geofence import Geofence, GeofenceError, geojson_from_vertices, vertices_from_geojson
from .service import alarm_payload, point_payload
from .store import MapLabel

if TYPE_CHECKING:
    from .service import ControlCenter

MAX_BODY_BYTES = 64 * 1024

_ERROR_MAP: list[tuple[type, int, str]] = [
    (store_mod.UnknownTerminal, 404, "UNKNOWN_TERMINAL"),
    (store_mod.UnknownFence, 404, "UNKNOWN_FENCE"),
    (store_mod.UnknownLabel, 404, "UNKNOWN_LABEL"),
    (store_mod.WindowTooLarge, 400, "WINDOW_TOO_LARGE"),
    (store_mod.BadWindow, 400, "BAD_WINDOW"),
    (store_mod.InvalidPolygon, 400, "INVALID_POLYGON"),
    (store_mod.EmptyText, 400, "EMPTY_TEXT"),
    (GeofenceError, 400, "INVALID_POLYGON"),
]


def _error_response(exc: Exception) -> JSONResponse:
    for exc_type, status, code in _ERROR_MAP:
        if isinstance(exc, exc_type):
            return JSONResponse(status_code=status,
                                content={"code": code, "detail": str(exc)})
    if isinstance(exc, (ValueError, store_mod.StoreError)):
        return JSONResponse(status_code=400,
                            content={"code": "VALIDATION", "detail": str(exc)})
    raise exc


class LabelBody(BaseModel):
    lat: float
    lon: float
    text: str = Field(min_length=1, max_length=store_mod.MAX_LABEL_CHARS)


def _terminal_json(center: "ControlCenter", terminal, now: float) -> dict:
    last = center.store.last_point(terminal.imei)
    online = (terminal.last_seen is not None
              and terminal.last_seen >= now - center.config.online_window_s)
    return {
        "imei": terminal.imei,
        "name": terminal.name,
        "online": online,
        "last_seen": terminal.last_seen,
        "last_point": point_payload(last) if last else None,
    }


def fence_feature(fence: Geofence) -> dict:
    return {
        "type": "Feature",
        "geometry": geojson_from_vertices(fence.vertices),
        "properties": {"id": fence.id, "name": fence.name, "armed": fence.armed},
    }


def _label_json(label: MapLabel) -> dict:
    return {
        "id": label.id,
        "lat": label.position[0],
        "lon": label.position[1],
        "text": label.text,
        "created_at": label.created_at,
    }


def build_app(center: "ControlCenter") -> FastAPI:
    app = FastAPI(title="buoytrack", docs_url=None, redoc_url=None)

    @app.middleware("http")
    async def limit_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and int(length) > MAX_BODY_BYTES:
            return JSONResponse(status_code=413,
                                content={"code": "BODY_TOO_LARGE",
                                         "detail": f"body over {MAX_BODY_BYTES} bytes"})
        return await call_next(request)

    @app.exception_handler(store_mod.StoreError)
    async def store_errors(request: Request, exc: store_mod.StoreError):
        return _error_response(exc)

    @app.exception_handler(GeofenceError)
    async def fence_errors(request: Request, exc: GeofenceError):
        return _error_response(exc)

    @app.exception_handler(ValueError)
    async def value_errors(request: Request, exc: ValueError):
        return _error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def body_errors(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"code": "VALIDATION", "detail": str(exc)})

    # -- terminals and tracks ---------------------------------------------

    @app.get("/api/terminals")
    async def terminals():
        now = time.time()
        return [_terminal_json(center, t, now) for t in center.store.list_terminals()]

    @app.get("/api/terminals/{ref}/track")
    async def track(ref: str,
                    from_s: float = Query(alias="from"),
                    to_s: float = Query(alias="to")):
        points = center.store.query_track(ref, from_s, to_s)
        return [point_payload(p) for p in points]

    # -- fences -------------------------------------------------------------

    @app.post("/api/fences")
    async def save_fence(feature: dict):
        if not isinstance(feature, dict) or feature.get("type") != "Feature":
            raise GeofenceError("fence body must be a GeoJSON Feature")
        vertices = vertices_from_geojson(feature.get("geometry"))
        props = feature.get("properties") or {}
        name = props.get("name") or "fence"
        armed = bool(props.get("armed", True))
        fence_id = props.get("id") or uuid.uuid4().hex[:12]
        fence = Geofence(id=str(fence_id), name=str(name),
                         vertices=vertices, armed=armed)
        center.store.save_fence(fence)
        return fence_feature(fence)

    @app.get("/api/fences")
    async def fences():
        return {
            "type": "FeatureCollection",
            "features": [fence_feature(f) for f in center.store.list_fences()],
        }

    @app.delete("/api/fences/{fence_id}")
    async def delete_fence(fence_id: str):
        center.store.delete_fence(fence_id)
        center.containment.forget_fence(fence_id)
        return {"deleted": fence_id}

    # -- labels ----------------------------------------------------------------

    @app.post("/api/labels")
    async def save_label(body: LabelBody):
        label = MapLabel(id=uuid.uuid4().hex[:12], position=(body.lat, body.lon),
                         text=body.text, created_at=time.time())
        center.store.save_label(label)
        return _label_json(label)

    @app.get("/api/labels")
    async def labels():
        return [_label_json(l) for l in center.store.list_labels()]

    @app.delete("/api/labels/{label_id}")
    async def delete_label(label_id: str):
        center.store.delete_label(label_id)
        return {"deleted": label_id}

    # -- alarms -------------------------------------------------------------------

    @app.get("/api/alarms")
    async def alarms(from_s: float | None = Query(default=None, alias="from"),
                     to_s: float | None = Query(default=None, alias="to")):
        return [alarm_payload(a) for a in center.store.list_alarms(from_s, to_s)]

    # -- live push channel ----------------------------------------------------------

    @app.websocket("/ws/live")
    async def live(ws: WebSocket):
        await ws.accept()
        sub_id, queue = center.hub.subscribe()
        recv_task = asyncio.ensure_future(ws.receive())
        get_task: asyncio.Future | None = None
        try:
            while True:
                if get_task is None:
                    get_task = asyncio.ensure_future(queue.get())
                done, _ = await asyncio.wait(
                    {recv_task, get_task}, return_when=asyncio.FIRST_COMPLETED)
                if recv_task in done:
                    message = recv_task.result()
                    if message["type"] == "websocket.disconnect":
                        break
                    recv_task = asyncio.ensure_future(ws.receive())
                if get_task in done:
                    event = get_task.result()
                    get_task = None
                    if event is None:  # kicked as a slow subscriber
                        await ws.close(code=1013)
                        break
                    await ws.send_json(event.to_wire())
        except WebSocketDisconnect:
            pass
        finally:
            center.hub.unsubscribe(sub_id)
            for task in (recv_task, get_task):
                if task is not None and not task.done():
                    task.cancel()

    static_dir = center.config.static_dir
    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
