import pathlib

import pytest

from bioperf import harness

SAMPLE_DATA = pathlib.Path(__file__).resolve().parent.parent / "sample_data"


@pytest.fixture
def sample_data_dir() -> pathlib.Path:
    return SAMPLE_DATA


@pytest.fixture
def server_factory():
    """Start servers on ephemeral ports; everything started is stopped."""
    started = []

    def factory(mode: str) -> harness.TrafficServer:
        server = harness.TrafficServer(mode, chat_port=0, file_port=0).start()
        started.append(server)
        return server

    yield factory
    for server in started:
        server.stop()
