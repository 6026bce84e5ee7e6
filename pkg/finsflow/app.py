from finsflow.common import init, create_sidebar

# Initialize the run browser.
init()
create_sidebar()
