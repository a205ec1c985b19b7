"""HTTP review service over the mapping pipeline.

JSON API consumed by the review UI and by scripted clients:

* ``POST /v1/sessions`` — run the pipeline on an uploaded table (CSV body,
  multipart file, or a JSON column list) and persist a session
* ``GET /v1/sessions/{id}`` — fetch a session
* ``POST /v1/sessions/{id}/corrections`` — apply a human override
* ``POST /v1/sessions/{id}/finalize`` — lock the session, emit the document
* ``GET /v1/schema`` — object types and attributes, for dropdowns
* ``GET /healthz`` — liveness

Corrections against a finalized session answer 409 so concurrent reviewers
resolve races; an optional static bearer token guards the /v1 surface.
"""

from __future__ import annotations

import csv
import io
import os

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from schemamap.core import (
    DataType,
    IngestError,
    SourceColumn,
    dump_target_schema,
    infer_dtype,
)
from schemamap.pipeline import (
    PipelineConfig,
    SessionFinalizedError,
    SessionManager,
    SessionNotFoundError,
    UnknownAttributeError,
    UnknownColumnError,
)


def _columns_from_csv_text(text: str, sample_limit: int) -> list[SourceColumn]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty CSV body") from None
    n_cols = len(header)
    samples: list[list[str]] = [[] for _ in range(n_cols)]
    for row in reader:
        row = (row + [""] * n_cols)[:n_cols]
        for i, cell in enumerate(row):
            if len(samples[i]) < sample_limit:
                samples[i].append(cell)
    return [
        SourceColumn(
            name=name.strip() or f"column_{i + 1}",
            samples=tuple(samples[i]),
            declared_dtype=infer_dtype(samples[i]),
        )
        for i, name in enumerate(header)
    ]


def _columns_from_json(doc: dict) -> list[SourceColumn]:
    columns = []
    for entry in doc.get("columns", []):
        if "name" not in entry:
            raise ValueError("column entry missing 'name'")
        dtype = DataType(entry["dtype"]) if entry.get("dtype") else None
        samples = tuple(str(s) for s in entry.get("samples", ()))
        columns.append(
            SourceColumn(
                name=entry["name"],
                samples=samples,
                declared_dtype=dtype or infer_dtype(samples),
            )
        )
    return columns


def create_app(config: PipelineConfig, manager: SessionManager | None = None) -> FastAPI:
    manager = manager or SessionManager(config)
    app = FastAPI(title="schemamap", version="0.1.0")

    expected_token = (
        os.environ.get(config.auth_token_env, "") if config.auth_token_env else ""
    )

    @app.middleware("http")
    async def bearer_guard(request: Request, call_next):
        if expected_token and request.url.path.startswith("/v1"):
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {expected_token}":
                return JSONResponse({"detail": "unauthorized"}, status_code=401)
        return await call_next(request)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/v1/schema")
    def get_schema():
        return dump_target_schema(manager.pipeline.schema)

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        content_type = request.headers.get("content-type", "")
        sample_limit = config.sample_limit
        try:
            if content_type.startswith("application/json"):
                doc = await request.json()
                if "csv_text" in doc:
                    columns = _columns_from_csv_text(doc["csv_text"], sample_limit)
                else:
                    columns = _columns_from_json(doc)
            elif content_type.startswith("multipart/form-data"):
                form = await request.form()
                upload = form.get("file")
                if upload is None:
                    raise ValueError("multipart body missing 'file' field")
                raw = await upload.read()
                columns = _columns_from_csv_text(raw.decode("utf-8-sig"), sample_limit)
            else:  # raw CSV body
                raw = await request.body()
                columns = _columns_from_csv_text(raw.decode("utf-8-sig"), sample_limit)
        except (IngestError, ValueError, UnicodeDecodeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        session = manager.run_table(columns)
        return session.to_dict()

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return manager.get(session_id).to_dict()
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail="session not found") from None

    @app.post("/v1/sessions/{session_id}/corrections")
    async def post_correction(session_id: str, request: Request):
        doc = await request.json()
        column = doc.get("column")
        attribute_id = doc.get("attribute_id")
        if not column or not attribute_id:
            raise HTTPException(
                status_code=400, detail="body requires 'column' and 'attribute_id'"
            )
        try:
            session = manager.apply_correction(session_id, column, attribute_id)
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail="session not found") from None
        except SessionFinalizedError:
            raise HTTPException(status_code=409, detail="session is finalized") from None
        except (UnknownColumnError, UnknownAttributeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return session.to_dict()

    @app.post("/v1/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        try:
            session, document = manager.finalize(session_id)
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail="session not found") from None
        except SessionFinalizedError:
            raise HTTPException(status_code=409, detail="session already finalized") from None
        return {"session": session.to_dict(), "document": document}

    if config.ui_dir and os.path.isdir(config.ui_dir):
        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app
