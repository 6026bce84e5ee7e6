import logging
import os

from sqlalchemy import create_engine
from sqlalchemy.orm import configure_mappers, declarative_base, sessionmaker

Base = declarative_base()


def open_session(path):
    """
    Open the run store at ``path``, creating its tables when missing.

    :param path: Path of the SQLite file
    :return: Tuple (engine, session)
    """
    # Register all models with the metadata before creating tables.
    from finsflow.models import run  # noqa: F401

    db_path = os.path.abspath(path)
    logging.info(f"Opening run store {db_path}.")
    configure_mappers()
    engine = create_engine(f"sqlite:///{db_path}")
    Base.metadata.create_all(engine)
    Session = sessionmaker(bind=engine)
    return engine, Session()
