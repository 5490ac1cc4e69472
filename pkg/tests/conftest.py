import asyncio
import socket
import threading
import time

import httpx
import pytest

from buoytrack.service import ControlCenter, ServerConfig


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def center(tmp_path):
    """A control center with no listeners, for direct pipeline tests."""
    config = ServerConfig(tcp_port=free_port(), http_port=free_port(),
                          data_dir=tmp_path / "data")
    c = ControlCenter(config)
    yield c
    c.close()


class RunningServer:
    def __init__(self, center: ControlCenter, config: ServerConfig):
        self.center = center
        self.config = config
        self.base_url = f"http://127.0.0.1:{config.http_port}"
        self._loop = None
        self._thread = None

    def start(self, timeout: float = 15.0) -> "RunningServer":
        started = threading.Event()

        def runner():
            loop = asyncio.new_event_loop()
            self._loop = loop
            asyncio.set_event_loop(loop)

            async def go():
                ready = asyncio.Event()
                task = asyncio.create_task(self.center.serve(ready=ready))
                await ready.wait()
                started.set()
                await task

            try:
                loop.run_until_complete(go())
            finally:
                loop.close()

        self._thread = threading.Thread(target=runner, daemon=True)
        self._thread.start()
        if not started.wait(timeout):
            raise RuntimeError("server did not come up")
        deadline = time.time() + timeout
        while time.time() < deadline:
            try:
                httpx.get(f"{self.base_url}/api/terminals", timeout=1.0)
                return self
            except httpx.HTTPError:
                time.sleep(0.05)
        raise RuntimeError("http endpoint never became responsive")

    def stop(self) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self.center.request_stop)
        if self._thread is not None:
            self._thread.join(15)


@pytest.fixture
def running_server(tmp_path):
    config = ServerConfig(tcp_port=free_port(), http_port=free_port(),
                          data_dir=tmp_path / "data")
    server = RunningServer(ControlCenter(config), config).start()
    yield server
    server.stop()
