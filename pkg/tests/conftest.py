"""Shared test configuration.

Registers a hypothesis profile suited to CI (no deadline; statistical tests
manage their own budgets) and collects acceptance-criterion result lines so
they are printed in a dedicated section at the end of the run regardless of
capture settings.
"""

import hypothesis
import pytest

hypothesis.settings.register_profile(
    "ci",
    deadline=None,
    max_examples=50,
    derandomize=True,
)
hypothesis.settings.load_profile("ci")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Callable that records one pass/fail line per acceptance criterion."""

    def record(line: str) -> None:
        _ACCEPTANCE_LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
