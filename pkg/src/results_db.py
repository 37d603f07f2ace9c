from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Any, List, Optional

from peewee import (
    AutoField,
    CharField,
    DateTimeField,
    FloatField,
    ForeignKeyField,
    IntegerField,
    Model,
    SqliteDatabase,
    TextField,
)

results_database = SqliteDatabase(None)

RUN_RUNNING = "running"
RUN_COMPLETED = "completed"
RUN_FAILED = "failed"


def utcnow_naive() -> datetime:
    return datetime.now(timezone.utc).replace(tzinfo=None)


class BaseModel(Model):
    created_at = DateTimeField(default=utcnow_naive)
    updated_at = DateTimeField(default=utcnow_naive)

    def save(self, *args, **kwargs):  # type: ignore[override]
        self.updated_at = utcnow_naive()
        return super().save(*args, **kwargs)

    class Meta:
        database = results_database


class ExperimentRun(BaseModel):
    id = AutoField()
    regime = CharField()
    master_seed = CharField()
    output_dir = CharField()
    config_json = TextField()
    status = CharField(default=RUN_RUNNING)
    failure_reason = TextField(null=True)
    finished_at = DateTimeField(null=True)


class ConvergenceEntry(BaseModel):
    id = AutoField()
    run = ForeignKeyField(ExperimentRun, backref="rows", on_delete="CASCADE")
    n = IntegerField()
    m = IntegerField()
    replicates = IntegerField()
    tv = FloatField()
    coincidence_rate = FloatField()
    isolated_fraction = FloatField()
    tail_index = FloatField(null=True)


def init_results_db(path: str) -> None:
    results_database.init(path)
    results_database.connect(reuse_if_open=True)
    results_database.create_tables([ExperimentRun, ConvergenceEntry])


def close_results_db() -> None:
    if not results_database.is_closed():
        results_database.close()


def start_run(config: dict[str, Any]) -> ExperimentRun:
    return ExperimentRun.create(
        regime=str(config["regime"]),
        master_seed=str(config["master_seed"]),
        output_dir=str(config["output_dir"]),
        config_json=json.dumps(config, sort_keys=True),
    )


def record_convergence(run: ExperimentRun, row: dict[str, Any]) -> ConvergenceEntry:
    return ConvergenceEntry.create(
        run=run,
        n=row["n"],
        m=row["m"],
        replicates=row["replicates"],
        tv=row["tv"],
        coincidence_rate=row["coincidence_rate"],
        isolated_fraction=row["isolated_fraction"],
        tail_index=row.get("tail_index"),
    )


def finish_run(run: ExperimentRun) -> None:
    run.status = RUN_COMPLETED
    run.finished_at = utcnow_naive()
    run.save()


def fail_run(run: ExperimentRun, reason: str) -> None:
    run.status = RUN_FAILED
    run.failure_reason = reason
    run.finished_at = utcnow_naive()
    run.save()


def list_runs() -> List[ExperimentRun]:
    return list(ExperimentRun.select().order_by(ExperimentRun.id))


def get_run(run_id: int) -> Optional[ExperimentRun]:
    return ExperimentRun.get_or_none(ExperimentRun.id == run_id)


def convergence_rows(run: ExperimentRun) -> List[ConvergenceEntry]:
    return list(
        ConvergenceEntry.select()
        .where(ConvergenceEntry.run == run)
        .order_by(ConvergenceEntry.n)
    )
