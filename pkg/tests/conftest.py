import json
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

FIXTURES = HERE / "fixtures"
CORPUS = FIXTURES / "corpus"
SEGMENTER_FIXTURES = FIXTURES / "segmenter"


@pytest.fixture(scope="session")
def published():
    return json.loads((HERE / "data" / "published_tables.json").read_text())


@pytest.fixture(scope="session")
def kb():
    from policyflow.knowledge import KnowledgeBase

    return KnowledgeBase.load()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
