from sqlalchemy import (
    Boolean,
    Column,
    DateTime,
    Float,
    ForeignKey,
    Integer,
    String,
    Text,
)
from sqlalchemy.orm import relationship

from finsflow.models.common import Base


class Run(Base):
    """
    Data model for one recorded scenario run.
    """
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    scenario = Column(String(255), nullable=False)
    seed = Column(String(32), nullable=False)
    command = Column(String(255), default="")
    rollup = Column(String(8), nullable=False)
    q = Column(Float, nullable=True)
    q_sharper = Column(Float, nullable=True)
    constants = Column(Text, default="")
    report_path = Column(Text, default="")
    duration = Column(Float, nullable=True)
    created = Column(DateTime, nullable=False)

    checks = relationship("CheckResult", back_populates="run", cascade="all, delete-orphan")

    def __repr__(self):
        return (
            f"<Run(id={self.id!r}, scenario={self.scenario!r}, seed={self.seed!r}, "
            f"command={self.command!r}, rollup={self.rollup!r}, q={self.q!r}, "
            f"report_path={self.report_path!r}, created={self.created!r})>"
        )


class CheckResult(Base):
    """
    Data model for the verdict of one check within a run.

    ``kind`` is ``residual`` for identity checks and ``margin`` for inequality sweeps.
    """
    __tablename__ = "check_results"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    tag = Column(String(64), nullable=False)
    kind = Column(String(16), nullable=False)
    value = Column(Float, nullable=True)
    tolerance = Column(Float, nullable=True)
    passed = Column(Boolean, nullable=False)
    order = Column(Float, nullable=True)

    run = relationship("Run", back_populates="checks")

    def __repr__(self):
        return (
            f"<CheckResult(id={self.id!r}, run_id={self.run_id!r}, tag={self.tag!r}, kind={self.kind!r}, "
            f"value={self.value!r}, tolerance={self.tolerance!r}, passed={self.passed!r}, order={self.order!r})>"
        )
