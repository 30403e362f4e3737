"""Database storage for benchmark runs and their records."""

import math
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

from sqlalchemy import func, select
from sqlalchemy.ext.asyncio import AsyncSession
from sqlalchemy.orm import selectinload

from .bench import ExperimentRecord
from .models import ExperimentRun, RecordRow


def _nullable(value: float) -> Optional[float]:
    return None if math.isnan(value) else value


async def create_run(db: AsyncSession, run_id: str, kind: str, config: Dict[str, Any]) -> Optional[ExperimentRun]:
    """
    Create a new run.
    """
    db_run = ExperimentRun(
        id=run_id,
        kind=kind,
        config=config,
        created_at=datetime.now(timezone.utc),
    )
    db.add(db_run)
    await db.commit()
    return await get_run(db, run_id)


async def get_run(db: AsyncSession, run_id: str) -> Optional[ExperimentRun]:
    """
    Load a run with its records.
    """
    result = await db.execute(
        select(ExperimentRun)
        .options(selectinload(ExperimentRun.records))
        .where(ExperimentRun.id == run_id)
    )
    return result.scalars().first()


async def add_records(db: AsyncSession, run_id: str, records: Sequence[ExperimentRecord]) -> int:
    """
    Append records to a run. Returns the number of rows written.
    """
    db.add_all([
        RecordRow(
            run_id=run_id,
            method=r.method,
            reconstructor=r.reconstructor,
            M=r.M,
            snr_db=r.snr_db,
            t=r.t,
            trial=r.trial,
            mse_sum=_nullable(r.mse_sum),
            mse_mean=_nullable(r.mse_mean),
            objective=_nullable(r.objective),
            wall_time_ms=r.wall_time_ms,
            seed=r.seed,
        )
        for r in records
    ])
    await db.commit()
    return len(records)


async def get_records(db: AsyncSession, run_id: str) -> List[ExperimentRecord]:
    """
    Records of a run, NULL metrics restored as NaN.
    """
    result = await db.execute(
        select(RecordRow).where(RecordRow.run_id == run_id).order_by(RecordRow.id)
    )
    return [
        ExperimentRecord(
            method=row.method,
            reconstructor=row.reconstructor,
            M=row.M,
            snr_db=row.snr_db,
            t=row.t,
            trial=row.trial,
            mse_sum=math.nan if row.mse_sum is None else row.mse_sum,
            mse_mean=math.nan if row.mse_mean is None else row.mse_mean,
            objective=math.nan if row.objective is None else row.objective,
            wall_time_ms=row.wall_time_ms,
            seed=row.seed,
        )
        for row in result.scalars().all()
    ]


async def list_runs(db: AsyncSession) -> List[Dict[str, Any]]:
    """
    List all runs (metadata only).
    """
    counts = (
        select(RecordRow.run_id, func.count(RecordRow.id).label("record_count"))
        .group_by(RecordRow.run_id)
        .subquery()
    )
    result = await db.execute(
        select(ExperimentRun, counts.c.record_count)
        .outerjoin(counts, counts.c.run_id == ExperimentRun.id)
        .order_by(ExperimentRun.created_at.desc())
    )
    return [
        {
            "id": run.id,
            "kind": run.kind,
            "created_at": run.created_at.isoformat(),
            "record_count": count or 0,
        }
        for run, count in result.all()
    ]


async def delete_run(db: AsyncSession, run_id: str) -> bool:
    """
    Delete a run and its records.
    """
    run = await get_run(db, run_id)
    if run:
        await db.delete(run)
        await db.commit()
        return True
    return False
