from datetime import datetime
from sqlalchemy import Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class Job(Base):
    __tablename__ = "jobs"

    id = Column(String, primary_key=True)
    case = Column(String, nullable=False, index=True)
    n_min = Column(Integer, nullable=False, default=3)
    n_max = Column(Integer, nullable=False)
    parameters = Column(Text, nullable=True)  # CensusJobRequest as JSON
    status = Column(String, nullable=False, default="pending")  # pending, running, completed, failed
    created_at = Column(DateTime, default=datetime.utcnow)
    completed_at = Column(DateTime, nullable=True)

    # Progress tracking
    total_signatures = Column(Integer, default=0)
    signatures_done = Column(Integer, default=0)
    records_found = Column(Integer, default=0)

    summary = Column(Text, nullable=True)  # CensusSummarySchema as JSON
    error_message = Column(Text, nullable=True)

    records = relationship("CensusRecordRow", back_populates="job", cascade="all, delete-orphan")


class CensusRecordRow(Base):
    __tablename__ = "census_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    job_id = Column(String, ForeignKey("jobs.id"), nullable=False, index=True)

    signature = Column(String, nullable=False, index=True)  # "n1,n2,n3"
    n1 = Column(Integer, nullable=False)
    n2 = Column(Integer, nullable=False)
    n3 = Column(Integer, nullable=False)
    selection = Column(String, nullable=False)  # "l1,l2,l3"
    lift = Column(Integer, nullable=False)
    branch = Column(String, nullable=True)

    s = Column(Float, nullable=True)
    t = Column(Float, nullable=True)
    e = Column(String, nullable=False)  # exact "p/q"
    e_over_chi = Column(String, nullable=False)
    consistency = Column(Boolean, nullable=False)

    payload = Column(Text, nullable=False)  # CensusRecordSchema as JSON

    job = relationship("Job", back_populates="records")
