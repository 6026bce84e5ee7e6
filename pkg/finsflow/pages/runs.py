"""
Recorded runs, the checks of the selected run and its per-stamp gradient
estimate margins.
"""
from pathlib import Path

import pandas as pd
import plotly.graph_objects as go
import streamlit as st

from finsflow.common import ALL_SCENARIOS, create_table, init
from finsflow.controllers.run_controller import RunController

init()

session = st.session_state['session']
controller = RunController(session)


def margin_chart(run):
    """
    Plot the per-stamp minimum margins of the gradient estimate, if recorded.
    """
    path = Path(run.report_path) / "gradient_margins.csv"
    if not path.exists():
        st.info("No gradient estimate margins recorded for this run.")
        return
    df = pd.read_csv(path)
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=df['time'], y=df['min_margin'], mode='lines+markers', name='min margin'))
    fig.add_hline(y=0.0, line_dash='dash', line_color='#d62728')
    fig.update_layout(xaxis_title="t", yaxis_title="RHS − LHS", height=400)
    st.plotly_chart(fig, use_container_width=True)


@st.dialog("Confirm Deletion")
def delete_run(run_id):
    st.warning(f"Delete run {run_id} and its check results?")
    if st.button("Yes, delete run"):
        controller.delete_by_id(run_id)
        st.rerun()


st.set_page_config(layout="wide")
st.title("Runs")

scenario = st.session_state.get('scenario', ALL_SCENARIOS)
runs = controller.get_all() if scenario == ALL_SCENARIOS else controller.get_by_scenario(scenario)
if not runs:
    st.info("No runs recorded.")
    st.stop()

columns = {
    'id': 'ID',
    'scenario': 'Scenario',
    'seed': 'Seed',
    'command': 'Phases',
    'rollup': 'Rollup',
    'q': 'Q',
    'duration': 'Seconds',
    'created': 'Created',
}
response = create_table(runs, columns)
selected = response.get('selected_rows', None)
if selected is not None and len(selected):
    run = controller.get_by_id(int(selected.iloc[0]['id']))
    st.subheader(f"Run {run.id}: {run.scenario} ({run.rollup})")
    if run.checks:
        create_table(run.checks, {
            'tag': 'Check', 'kind': 'Kind', 'value': 'Value', 'tolerance': 'Tolerance',
            'order': 'Order', 'passed': 'Passed',
        })
    margin_chart(run)
    if st.button("Delete run"):
        delete_run(run.id)
