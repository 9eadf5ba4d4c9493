from datetime import datetime

from sqlalchemy import create_engine, event
from sqlalchemy.orm import scoped_session, sessionmaker

from .models import Base, Setting, StudyRun, SummaryRow


PRAGMAS = (
    "PRAGMA journal_mode=WAL;",  # enable Write-Ahead Logging
    "PRAGMA synchronous=NORMAL;",  # reduce sync overhead
    "PRAGMA cache_size=-16000;",  # set cache size (negative for KB)
    "PRAGMA temp_store=MEMORY;",  # use memory for temporary tables
    "PRAGMA locking_mode=NORMAL;",  # avoid exclusive locking
)


def _apply_pragmas(dbapi_connection, connection_record):
    cursor = dbapi_connection.cursor()
    for pragma in PRAGMAS:
        cursor.execute(pragma)
    cursor.close()


class SQLite:
    """Run ledger: settings, study runs, their summary rows and the log trail.

    ``session`` is a thread-local scoped session, so study workers can log
    while the driver records runs.
    """

    def __init__(self, uri, echo=False):
        engine = create_engine(
            uri, echo=echo, connect_args={"check_same_thread": False}
        )
        event.listen(engine, "connect", _apply_pragmas)

        Base.metadata.create_all(engine)

        self.engine = engine
        self.session = scoped_session(sessionmaker(bind=engine))

    def close(self):
        self.session.remove()
        self.engine.dispose()

    def update(self, key, value):
        row = self.session.query(Setting).filter_by(key=key).first()
        dt = datetime.utcnow()

        if row:
            row.value = value
            row.updated_on = dt

        else:
            row = Setting(
                key=key,
                value=value,
                created_on=dt,
                updated_on=dt,
            )
            self.session.add(row)

        self.session.commit()

    def record_run(
        self,
        study,
        seed,
        config_sha256,
        status,
        exit_code,
        report_path=None,
        peak_rss=None,
        wall_seconds=None,
    ):
        dt = datetime.utcnow()
        row = StudyRun(
            study=study,
            seed=seed,
            config_sha256=config_sha256,
            status=status,
            exit_code=exit_code,
            report_path=None if report_path is None else str(report_path),
            peak_rss=peak_rss,
            wall_seconds=wall_seconds,
            created_on=dt,
            updated_on=dt,
        )

        self.session.add(row)
        self.session.commit()
        return row.id

    def record_summary(self, run_id, records):
        dt = datetime.utcnow()

        for record in records:
            self.session.add(
                SummaryRow(
                    run_id=run_id,
                    metric=record.metric,
                    value=record.value,
                    expected=record.expected,
                    tolerance=record.tolerance,
                    status=record.status,
                    created_on=dt,
                    updated_on=dt,
                )
            )

        self.session.commit()

    def runs(self, study=None):
        query = self.session.query(StudyRun)
        if study:
            query = query.filter_by(study=study)

        return query.order_by(StudyRun.id).all()
