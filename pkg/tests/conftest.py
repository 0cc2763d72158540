import socket
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from doubles import EVOSUITE10, FIXTURES, PROJECT10  # noqa: E402
from jtestgen.code_model import load_project  # noqa: E402
from jtestgen.seed_miner import ingest_evosuite_tests  # noqa: E402


class NetworkBlocked(RuntimeError):
    pass


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Every test runs offline; any outbound connection is an error."""

    def refuse(*args, **kwargs):
        raise NetworkBlocked("network access attempted during tests")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    monkeypatch.setattr(socket, "getaddrinfo", refuse)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def shop():
    return load_project(PROJECT10)


@pytest.fixture(scope="session")
def shop_evosuite():
    def provider(cls):
        path = EVOSUITE10 / "com" / "example" / "shop" / f"{cls.name}_ESTest.java"
        return ingest_evosuite_tests(path.read_text(encoding="utf-8"), path.name) if path.exists() else []

    return provider


def focal(corpus, name):
    return next((c, m) for c, m in corpus.focal_methods() if m.name == name)


# criterion number -> (status, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status} {detail}")
