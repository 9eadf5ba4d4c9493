import logging

import pytest

from helpers.logging import SQLiteHandler
from helpers.models import RunLog, Setting, SummaryRow
from helpers.reports import SummaryRecord
from helpers.sqlite import SQLite


@pytest.fixture
def sqlite(tmp_path):
    db = SQLite(f"sqlite:///{(tmp_path / 'ledger.sqlite').as_posix()}")
    yield db
    db.close()


def test_update_upserts_a_setting(sqlite):
    sqlite.update("config-sha256", "abc")
    sqlite.update("config-sha256", "def")

    rows = sqlite.session.query(Setting).filter_by(key="config-sha256").all()
    assert [row.value for row in rows] == ["def"]


def test_runs_and_their_summary_rows(sqlite):
    first = sqlite.record_run("noise", 0, None, "pass", 0, report_path="out/noise/report.json")
    second = sqlite.record_run("abelian", 1, "abc", "fail", 1, peak_rss=1024, wall_seconds=0.5)

    sqlite.record_summary(second, [SummaryRecord.check("fitted_order", 1.2, 2.0, 0.1)])

    assert [run.study for run in sqlite.runs()] == ["noise", "abelian"]
    assert [run.id for run in sqlite.runs("abelian")] == [second]
    assert sqlite.runs("noise")[0].report_path == "out/noise/report.json"
    assert first != second

    rows = sqlite.session.query(SummaryRow).filter_by(run_id=second).all()
    assert [(row.metric, row.status) for row in rows] == [("fitted_order", "fail")]


def test_handler_writes_log_records(sqlite):
    logger = logging.getLogger("holokit-ledger-test")
    logger.propagate = False
    handler = SQLiteHandler(sqlite)
    logger.addHandler(handler)

    try:
        logger.setLevel(logging.DEBUG)
        logger.debug("too quiet.")
        logger.warning("overlap 3 is ill-conditioned.")
    finally:
        logger.removeHandler(handler)

    rows = sqlite.session.query(RunLog).all()
    assert [(row.key, row.value) for row in rows] == [("warning", "overlap 3 is ill-conditioned.")]
