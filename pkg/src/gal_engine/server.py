"""Review endpoint for the human-in-the-loop strategy.

Serves the paused round's candidate pool, accepts decisions, and hosts the
static review UI when its build output is present. All mutations funnel
through the engine's single-writer lock; a decision posted while no round
is paused gets 409, an invalid one 422.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .engine import Engine, RunStatus
from .errors import StateError, ValidationError

# Default location of the built review UI, relative to the repo root.
_UI_DIST = Path(__file__).resolve().parents[2] / "frontend" / "dist"


class EngineDriver:
    """Runs engine rounds on a worker thread while the API serves reads.

    The loop advances automatically between rounds and idles while a round
    is awaiting a human decision; posting a decision wakes it up.
    """

    def __init__(self, engine: Engine):
        self.engine = engine
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.error: Optional[BaseException] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, name="engine-driver",
                                        daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        try:
            while not self._stop.is_set():
                status = self.engine.status
                if status is RunStatus.RUNNING:
                    self.engine.run_round()
                elif status is RunStatus.AWAITING_HUMAN:
                    self._wake.wait(timeout=0.2)
                    self._wake.clear()
                else:
                    break
        except BaseException as exc:  # surfaced via /api/run
            self.error = exc

    def notify(self) -> None:
        self._wake.set()

    def shutdown(self, timeout: float = 5.0) -> None:
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=timeout)


def build_app(engine: Engine, driver: EngineDriver | None = None,
              ui_dist: Path | None = None) -> FastAPI:
    """Assemble the review API around one engine instance."""
    app = FastAPI(title="gal review endpoint")

    @app.get("/api/run")
    def get_run():
        summary = engine.run_summary()
        if driver is not None and driver.error is not None:
            summary["driver_error"] = str(driver.error)
        return summary

    @app.get("/api/round/current/candidates")
    def get_candidates():
        try:
            return engine.candidate_view()
        except StateError:
            return JSONResponse(status_code=409,
                                content={"detail": "no round awaiting review"})

    @app.post("/api/round/current/decision")
    async def post_decision(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse(status_code=422, content={"detail": "body must be JSON"})
        pairs = body.get("pairs") if isinstance(body, dict) else None
        if not isinstance(pairs, list):
            return JSONResponse(status_code=422,
                                content={"detail": "body needs a pairs array"})
        try:
            parsed = [(int(p["anchor_id"]), str(p["sample_id"])) for p in pairs]
        except (KeyError, TypeError, ValueError):
            return JSONResponse(status_code=422,
                                content={"detail": "pairs need anchor_id and sample_id"})
        try:
            engine.submit_human_decision(parsed)
        except StateError:
            return JSONResponse(status_code=409,
                                content={"detail": "no round awaiting decision"})
        except ValidationError as exc:
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        if driver is not None:
            driver.notify()
        return engine.last_round_summary()

    @app.get("/api/references")
    def get_references():
        return engine.references_view()

    dist = ui_dist if ui_dist is not None else _UI_DIST
    if dist.is_dir():
        app.mount("/", StaticFiles(directory=str(dist), html=True), name="ui")
    return app


def serve(engine: Engine, host: str, port: int,
          ui_dist: Path | None = None) -> None:
    """Run the review endpoint until interrupted; binds before starting so
    an occupied port fails fast."""
    import socket

    import uvicorn

    driver = EngineDriver(engine)
    app = build_app(engine, driver, ui_dist=ui_dist)

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))  # OSError propagates to the caller

    driver.start()
    try:
        config = uvicorn.Config(app, log_level="warning")
        server = uvicorn.Server(config)
        server.run(sockets=[sock])
    finally:
        driver.shutdown()
        sock.close()
