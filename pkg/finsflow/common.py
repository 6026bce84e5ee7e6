import atexit
import logging
import os

import pandas as pd
import streamlit as st

from sqlalchemy import DateTime
from sqlalchemy.orm import class_mapper
from st_aggrid import AgGrid, GridOptionsBuilder

from finsflow.controllers.run_controller import RunController
from finsflow.models.common import open_session

# Set logging level
logging.basicConfig(level=logging.INFO)

# Define global database engine and session variables.
engine = None
session = None

ALL_SCENARIOS = "All scenarios"


def init():
    """
    Initializes the run browser and opens the run store.

    The store path comes from the ``FINSFLOW_DATABASE`` environment variable
    and defaults to ``finsflow.sqlite``.
    """
    global engine, session
    if 'session' not in st.session_state:
        engine, session = open_session(os.environ.get("FINSFLOW_DATABASE", "finsflow.sqlite"))
        st.session_state['engine'] = engine
        st.session_state['session'] = session


def shutdown():
    """
    Close the database session and dispose the engine.
    """
    global engine, session
    if session is not None:
        logging.info("Closing run store session and disposing engine.")
        session.close()
        engine.dispose()


# Run shutdown before the python interpreter exits.
atexit.register(shutdown)


def create_table(objects, columns):
    """
    Display a table of SQLAlchemy model instances using st_aggrid.

    :param objects: List of SQLAlchemy model instances to display.
    :type objects: list[object]
    :param columns: Dictionary mapping column names to labels for display.
    :type columns: dict[str, str]
    :returns: AgGrid response with the selected rows.
    """
    df = pd.DataFrame([{col: getattr(obj, col, None) for col in columns} for obj in objects])
    mapper = class_mapper(type(objects[0]))
    for col in columns:
        if col in mapper.columns and isinstance(mapper.columns[col].type, DateTime):
            df[col] = df[col].apply(lambda d: d.strftime("%Y-%m-%d %H:%M:%S") if d is not None else "")

    gb = GridOptionsBuilder.from_dataframe(df)
    gb.configure_default_column(flex=1)
    gb.configure_selection('single')
    for col, label in columns.items():
        gb.configure_column(col, headerName=label)
    return AgGrid(
        df,
        gridOptions=gb.build(),
        update_mode='SELECTION_CHANGED',
        fit_columns_on_grid_load=True,
        use_container_width=True,
    )


def create_sidebar(session=None):
    """
    Creates the sidebar with a scenario filter and the page navigation.

    :param session: SQLAlchemy session to use (optional, default: None).
    :type session: sqlalchemy.orm.Session
    """
    if session is None:
        session = st.session_state['session']

    with st.sidebar:
        controller = RunController(session)
        scenarios = [ALL_SCENARIOS] + sorted({run.scenario for run in controller.get_all()})
        current = st.session_state.get('scenario', ALL_SCENARIOS)
        index = scenarios.index(current) if current in scenarios else 0
        st.session_state['scenario'] = st.selectbox("Scenario", scenarios, index=index)
        page = st.navigation({'Runs': [st.Page("pages/runs.py", title="Runs")]})

    page.run()
