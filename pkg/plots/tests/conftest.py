import matplotlib.pyplot as plt
import pytest


@pytest.fixture(autouse=True)
def _close_figures():
    # Figure-building tests leave figures open; cap the process total.
    yield
    plt.close("all")
