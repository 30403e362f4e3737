from datetime import datetime, timezone

from sqlalchemy import JSON, BigInteger, Column, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.orm import relationship

from .database import Base


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(String, primary_key=True, index=True)
    kind = Column(String)  # 'static' or 'dynamic'
    config = Column(JSON)
    created_at = Column(DateTime(timezone=True), default=lambda: datetime.now(timezone.utc))

    records = relationship(
        "RecordRow", back_populates="run", cascade="all, delete-orphan", order_by="RecordRow.id",
    )


class RecordRow(Base):
    __tablename__ = "records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String, ForeignKey("experiment_runs.id"), index=True)
    method = Column(String)
    reconstructor = Column(String)
    M = Column(Integer)
    snr_db = Column(Float)
    t = Column(Integer)
    trial = Column(Integer)
    # NULL for failed trials
    mse_sum = Column(Float, nullable=True)
    mse_mean = Column(Float, nullable=True)
    objective = Column(Float, nullable=True)
    wall_time_ms = Column(Float)
    seed = Column(BigInteger)

    run = relationship("ExperimentRun", back_populates="records")
