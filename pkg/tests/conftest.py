import os

import pytest

from dilconv import backend

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def accept():
    """Record one summary line per acceptance criterion."""

    def record(number, title, status, detail=""):
        ACCEPTANCE[number] = f"[{status}] {number}. {title}" + (f" -- {detail}" if detail else "")

    return record


@pytest.fixture(params=sorted(backend.BACKENDS))
def kernels(request, monkeypatch):
    """Run the test once per available kernel backend."""
    monkeypatch.setattr(backend, "kernels", backend.BACKENDS[request.param])
    return backend.BACKENDS[request.param]


def dataset_path(var):
    path = os.environ.get(var)
    return path if path and os.path.exists(path) else None
