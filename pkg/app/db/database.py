import uuid
from datetime import datetime
from typing import List, Optional
from sqlalchemy.ext.asyncio import create_async_engine, AsyncSession, async_sessionmaker
from sqlalchemy.future import select

from app.config import DATABASE_URL
from app.models.database import Base, Job, CensusRecordRow
from app.models.schemas import CensusRecordSchema, CensusSummarySchema, format_fraction


engine = create_async_engine(DATABASE_URL, echo=False)
AsyncSessionLocal = async_sessionmaker(engine, class_=AsyncSession, expire_on_commit=False)


async def init_db():
    async with engine.begin() as conn:
        await conn.run_sync(Base.metadata.create_all)


async def get_session() -> AsyncSession:
    async with AsyncSessionLocal() as session:
        yield session


def record_to_row(job_id: str, record: CensusRecordSchema) -> CensusRecordRow:
    n1, n2, n3 = (int(n) for n in record.signature.split(","))
    cell = record.representative
    return CensusRecordRow(
        job_id=job_id,
        signature=record.signature,
        n1=n1, n2=n2, n3=n3,
        selection=f"{record.l1},{record.l2},{record.l3}",
        lift=record.lift,
        branch=record.branch.value if record.branch else None,
        s=cell.s,
        t=cell.t,
        e=format_fraction(cell.report.e),
        e_over_chi=format_fraction(cell.report.e_over_chi),
        consistency=cell.report.consistency,
        payload=record.model_dump_json(),
    )


class DatabaseService:
    def __init__(self, session: AsyncSession):
        self.session = session

    async def create_job(self, case: str, n_min: int, n_max: int,
                         parameters: Optional[str] = None) -> Job:
        job = Job(
            id=str(uuid.uuid4()),
            case=case,
            n_min=n_min,
            n_max=n_max,
            parameters=parameters,
            status="pending",
            created_at=datetime.utcnow()
        )
        self.session.add(job)
        await self.session.commit()
        await self.session.refresh(job)
        return job

    async def get_job(self, job_id: str) -> Optional[Job]:
        result = await self.session.execute(
            select(Job).where(Job.id == job_id)
        )
        return result.scalar_one_or_none()

    async def update_job_status(
        self,
        job_id: str,
        status: str,
        error_message: Optional[str] = None,
        completed_at: Optional[datetime] = None,
        summary: Optional[CensusSummarySchema] = None
    ) -> Optional[Job]:
        job = await self.get_job(job_id)
        if job:
            job.status = status
            if error_message:
                job.error_message = error_message
            if completed_at:
                job.completed_at = completed_at
            if summary is not None:
                job.summary = summary.model_dump_json()
            await self.session.commit()
            await self.session.refresh(job)
        return job

    async def update_job_progress(
        self,
        job_id: str,
        total_signatures: Optional[int] = None,
        signatures_done: Optional[int] = None,
        records_found: Optional[int] = None
    ) -> Optional[Job]:
        job = await self.get_job(job_id)
        if job:
            if total_signatures is not None:
                job.total_signatures = total_signatures
            if signatures_done is not None:
                job.signatures_done = signatures_done
            if records_found is not None:
                job.records_found = records_found
            await self.session.commit()
            await self.session.refresh(job)
        return job

    async def list_jobs(self, limit: int = 50, offset: int = 0) -> List[Job]:
        result = await self.session.execute(
            select(Job)
            .order_by(Job.created_at.desc())
            .limit(limit)
            .offset(offset)
        )
        return result.scalars().all()

    async def create_records_bulk(self, job_id: str, records: List[CensusRecordSchema]):
        self.session.add_all([record_to_row(job_id, record) for record in records])
        await self.session.commit()

    async def get_job_records(self, job_id: str, signature: Optional[str] = None) -> List[CensusRecordRow]:
        query = (
            select(CensusRecordRow)
            .where(CensusRecordRow.job_id == job_id)
            .order_by(CensusRecordRow.id)
        )
        if signature:
            query = query.where(CensusRecordRow.signature == signature)

        result = await self.session.execute(query)
        return result.scalars().all()
