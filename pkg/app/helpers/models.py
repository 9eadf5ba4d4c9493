from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, Text
from sqlalchemy.orm import declarative_base


Base = declarative_base()


class RunLog(Base):
    __tablename__ = "run_logs"
    id = Column(Integer, primary_key=True)

    module = Column(Text)
    key = Column(Text)
    value = Column(Text)

    created_on = Column(DateTime, default=datetime.utcnow)
    updated_on = Column(DateTime, default=datetime.utcnow)


class Setting(Base):
    __tablename__ = "settings"
    id = Column(Integer, primary_key=True)

    key = Column(Text)
    value = Column(Text)

    created_on = Column(DateTime, default=datetime.utcnow)
    updated_on = Column(DateTime, default=datetime.utcnow)


class StudyRun(Base):
    __tablename__ = "study_runs"
    id = Column(Integer, primary_key=True)

    study = Column(Text, index=True)
    seed = Column(Integer)
    config_sha256 = Column(Text)
    status = Column(Text, index=True)
    exit_code = Column(Integer)
    report_path = Column(Text)
    peak_rss = Column(Integer)
    wall_seconds = Column(Float)

    created_on = Column(DateTime, default=datetime.utcnow)
    updated_on = Column(DateTime, default=datetime.utcnow)


class SummaryRow(Base):
    __tablename__ = "summary_rows"
    id = Column(Integer, primary_key=True)

    run_id = Column(Integer, ForeignKey("study_runs.id"), index=True)
    metric = Column(Text)
    value = Column(Float)
    expected = Column(Float)
    tolerance = Column(Float)
    status = Column(Text)

    created_on = Column(DateTime, default=datetime.utcnow)
    updated_on = Column(DateTime, default=datetime.utcnow)
