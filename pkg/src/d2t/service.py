"""HTTP surface of the rating service.

Endpoints (UTF-8 JSON):
  GET  /api/tasks/next?rater=ID  -> 200 {task | null}
  POST /api/ratings              -> 200 ack, 409 duplicate, 404 unknown, 422 domain
  GET  /api/progress             -> 200 counters
  GET  /api/report               -> 200 aggregate report

Static frontend assets (when built) are served from the directory passed to
``create_app``.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .rating import RatingError, RatingRecord, TaskStore, aggregate

_ERROR_STATUS = {"not_found": 404, "duplicate": 409, "domain": 422}


def create_app(store: TaskStore, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="d2t rating service")
    app.state.store = store

    @app.exception_handler(RatingError)
    async def rating_error_handler(request: Request, exc: RatingError):
        return JSONResponse(
            status_code=_ERROR_STATUS[exc.code], content={"detail": str(exc)}
        )

    @app.get("/api/tasks/next")
    def next_task(rater: str = Query(...)):
        task = store.next_task(rater)
        if task is None:
            return {"task": None}
        return {
            "task": {
                "id": task.id,
                "kind": task.kind,
                "payload": task.public_payload(),
            }
        }

    @app.post("/api/ratings")
    async def submit_rating(request: Request):
        body = await request.json()
        missing = [k for k in ("task_id", "rater", "value") if k not in body]
        if missing:
            return JSONResponse(
                status_code=422, content={"detail": f"missing fields: {missing}"}
            )
        store.submit(RatingRecord(body["task_id"], body["rater"], body["value"]))
        return {"ok": True}

    @app.get("/api/progress")
    def progress():
        return store.progress()

    @app.get("/api/report")
    def report():
        return aggregate(store).to_dict()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")
    return app
