import pytest

from sdein.model import ModelConfig
from sdein.synthetic import bundled

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def synthetic():
    return bundled("synthetic20.jsonl")


@pytest.fixture(scope="session")
def fixture2():
    return bundled("gradcheck2.jsonl")


@pytest.fixture
def tiny_config():
    return ModelConfig(hidden_size=8, relation_size=4, general_dim=6, domain_dim=4, cnn_windows=(3,),
                       gcn_layers=1, embedding_dropout=0.0, shared_dropout=0.0)


@pytest.fixture
def acceptance_report():
    def record(name: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
