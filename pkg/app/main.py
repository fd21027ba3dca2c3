import csv
import io
import json
import logging
from contextlib import asynccontextmanager
from datetime import datetime
from typing import List, Optional

from fastapi import BackgroundTasks, Depends, FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.concurrency import run_in_threadpool
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from sqlalchemy.ext.asyncio import AsyncSession

from app.config import DEFAULT_WORKERS
from app.db.database import DatabaseService, get_session, init_db
from app.errors import (
    CPlaneRepresentation,
    DegenerateInput,
    EmptyEnumeration,
    InvalidSelection,
    InvalidSignature,
    TurnoverError,
)
from app.models.database import Job
from app.models.schemas import (
    CensusJobRequest,
    CensusRecordSchema,
    CensusSummarySchema,
    InvariantReportSchema,
    InvariantRequest,
    JobListItem,
    JobProgress,
    JobResponse,
)
from app.services.census import CensusRunner, GridSpec, census_signatures
from app.services.charvar import Case, CharVarPoint, TurnoverSignature, make_selection
from app.services.export import RECORD_FIELDS, record_row
from app.services.invariants import query_point
from app.websocket.manager import manager

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

BAD_INPUT = (InvalidSignature, InvalidSelection, CPlaneRepresentation, EmptyEnumeration, DegenerateInput)


@asynccontextmanager
async def lifespan(app: FastAPI):
    await init_db()
    logger.info("Database initialized")
    yield


app = FastAPI(
    title="Turnover Orbibundle API",
    description="Invariant queries and censuses of PU(2,1) representations of turnover groups",
    version="1.0.0",
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _job_response(job: Job) -> JobResponse:
    return JobResponse(
        job_id=job.id,
        case=job.case,
        n_min=job.n_min,
        n_max=job.n_max,
        status=job.status,
        created_at=job.created_at,
        completed_at=job.completed_at,
        progress=JobProgress(
            signatures_done=job.signatures_done,
            total_signatures=job.total_signatures,
            records_found=job.records_found
        ),
        summary=json.loads(job.summary) if job.summary else None,
        error_message=job.error_message
    )


async def _require_job(db: DatabaseService, job_id: str) -> Job:
    job = await db.get_job(job_id)
    if not job:
        raise HTTPException(status_code=404, detail="Job not found")
    return job


async def run_census_job(job_id: str, request: CensusJobRequest):
    """Background task running a census and persisting its records"""
    async for session in get_session():
        db = DatabaseService(session)
        found = 0

        async def progress_callback(message_type: str, data: dict):
            nonlocal found
            if message_type == "signature_done":
                found += data["records"]
                await db.update_job_progress(job_id, signatures_done=data["index"], records_found=found)
            await manager.broadcast_progress(job_id, message_type, data)

        try:
            await db.update_job_status(job_id, "running")
            total = sum(1 for _ in census_signatures(request.case, request.n_max, request.n_min))
            await db.update_job_progress(job_id, total_signatures=total)

            runner = CensusRunner(workers=DEFAULT_WORKERS, progress_callback=progress_callback)
            grid = GridSpec.from_ranges(request.s_range, request.t_range)
            logger.info(f"Starting {request.case.value} census up to n={request.n_max} for job {job_id}")
            result = await runner.run_census(request.case, request.n_max, grid, request.branch_policy,
                                             request.n_min, request.lifts, request.auto_extent)

            records = [CensusRecordSchema.from_record(r) for r in result.records]
            if records:
                await db.create_records_bulk(job_id, records)
            summary = CensusSummarySchema.model_validate(result.summary)
            await db.update_job_status(job_id, "completed", completed_at=datetime.utcnow(), summary=summary)
            await manager.broadcast_progress(job_id, "job_complete", {
                "records": len(records),
                "triples": result.summary.triples
            })
            logger.info(f"Census job {job_id} completed with {len(records)} records")

        except Exception as e:
            logger.error(f"Error in census job {job_id}: {e}")
            await db.update_job_status(job_id, "failed", error_message=str(e))
            await manager.broadcast_progress(job_id, "job_failed", {"error": str(e)})


@app.post("/api/invariants", response_model=InvariantReportSchema)
async def query_invariants(request: InvariantRequest):
    """Invariants of the representation at one point of the character variety"""
    point = None
    if request.case is Case.REGULAR:
        if request.s is None or request.t is None:
            raise HTTPException(status_code=400, detail="s and t are required in the regular case")
        point = CharVarPoint(request.s, request.t, request.branch)
    try:
        sig = TurnoverSignature.parse(request.signature)
        rotation = tuple(int(p) for p in request.selection.split(","))
        sel = make_selection(sig, request.case, rotation, request.lift)
        result = await run_in_threadpool(query_point, sel, point)
    except BAD_INPUT as e:
        raise HTTPException(status_code=400, detail=e.to_dict())
    except TurnoverError as e:
        raise HTTPException(status_code=422, detail=e.to_dict())
    return InvariantReportSchema.model_validate(result.report)


@app.post("/api/jobs/census", response_model=JobResponse)
async def create_census_job(
    request: CensusJobRequest,
    background_tasks: BackgroundTasks,
    session: AsyncSession = Depends(get_session)
):
    """Create a census job and run it in the background"""
    if request.n_max < request.n_min:
        raise HTTPException(status_code=400, detail="n_max must be at least n_min")
    db = DatabaseService(session)
    job = await db.create_job(request.case.value, request.n_min, request.n_max,
                              parameters=request.model_dump_json())
    background_tasks.add_task(run_census_job, job.id, request)
    return _job_response(job)


@app.get("/api/jobs/{job_id}", response_model=JobResponse)
async def get_job(job_id: str, session: AsyncSession = Depends(get_session)):
    """Get job status, progress and summary"""
    db = DatabaseService(session)
    return _job_response(await _require_job(db, job_id))


@app.get("/api/jobs", response_model=List[JobListItem])
async def list_jobs(
    limit: int = Query(50, le=100),
    offset: int = Query(0, ge=0),
    session: AsyncSession = Depends(get_session)
):
    """List census jobs, newest first"""
    db = DatabaseService(session)
    jobs = await db.list_jobs(limit=limit, offset=offset)
    return [
        JobListItem(
            job_id=job.id,
            case=job.case,
            n_max=job.n_max,
            status=job.status,
            created_at=job.created_at,
            records_found=job.records_found
        )
        for job in jobs
    ]


@app.get("/api/jobs/{job_id}/records", response_model=List[CensusRecordSchema])
async def get_job_records(
    job_id: str,
    signature: Optional[str] = Query(None, description="Only records of this signature, e.g. 3,3,4"),
    session: AsyncSession = Depends(get_session)
):
    db = DatabaseService(session)
    await _require_job(db, job_id)
    rows = await db.get_job_records(job_id, signature=signature)
    return [CensusRecordSchema.model_validate_json(row.payload) for row in rows]


@app.get("/api/jobs/{job_id}/export")
async def export_job_records(
    job_id: str,
    format: str = Query("csv", pattern="^(csv|json)$"),
    session: AsyncSession = Depends(get_session)
):
    """Export census records as CSV or JSON"""
    db = DatabaseService(session)
    job = await _require_job(db, job_id)
    rows = await db.get_job_records(job_id)

    if format == "json":
        return [json.loads(row.payload) for row in rows]

    output = io.StringIO()
    writer = csv.DictWriter(output, fieldnames=RECORD_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(record_row(CensusRecordSchema.model_validate_json(row.payload)))

    output.seek(0)
    return StreamingResponse(
        iter([output.getvalue()]),
        media_type="text/csv",
        headers={"Content-Disposition": f"attachment; filename=census_{job.case}_{job_id}.csv"}
    )


@app.websocket("/ws/jobs/{job_id}")
async def websocket_endpoint(websocket: WebSocket, job_id: str):
    """WebSocket endpoint for census progress updates"""
    await manager.connect(websocket, job_id)
    try:
        while True:
            await websocket.receive_text()
    except WebSocketDisconnect:
        manager.disconnect(websocket, job_id)


@app.get("/")
async def root():
    """API root endpoint"""
    return {
        "message": "Turnover Orbibundle API",
        "docs": "/docs",
        "version": "1.0.0"
    }
