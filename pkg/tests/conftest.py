from __future__ import annotations

import pytest

from helpers import fig1_network_dict, fig1_state

from peerdiscovery.membership import channel_view


@pytest.fixture
def fig1():
    return fig1_state()


@pytest.fixture
def fig1_dict():
    return fig1_network_dict()


@pytest.fixture
def fig1_view(fig1):
    return channel_view(fig1, "ch1")


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if "test_acceptance" not in report.nodeid or report.when != "call":
        return
    name = report.nodeid.split("::")[-1]
    print(f"\n[acceptance] {name}: {report.outcome.upper()}", flush=True)
