from pathlib import Path

import pytest

from dove.syntax import load_spec

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

# criterion number -> (passed, detail); filled in by test_acceptance
VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def corpus() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def tmn():
    return load_spec(CORPUS / "tmn.proto")


@pytest.fixture(scope="session")
def tmn_wc():
    return load_spec(CORPUS / "tmn_wc.proto")


@pytest.fixture(scope="session")
def tmn_variant():
    return load_spec(CORPUS / "tmn_variant.proto")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
