from pathlib import Path

import pytest

from threshem.dataio import parse_dataset, parse_network, read_text

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def ab():
    """Fixture AB: structure and parameters."""
    return parse_network(read_text(FIXTURES / "ab.net"))


@pytest.fixture(scope="session")
def ab_structure(ab):
    return ab[0]


@pytest.fixture(scope="session")
def ab_params(ab):
    return ab[1]


@pytest.fixture(scope="session")
def d4(ab_structure):
    """Dataset D4: (a0,b0), (a0,?), (?,b1), (a1,b1)."""
    return parse_dataset(read_text(FIXTURES / "d4.csv"), ab_structure)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record ``PASS``/``FAIL`` for an acceptance criterion once its test body finishes."""
    holder = {}

    def declare(number: int, title: str):
        holder["label"] = f"criterion {number}: {title}"

    def note(text: str):
        holder.setdefault("notes", []).append(text)

    declare.note = note
    yield declare
    if "label" not in holder:
        return
    call = getattr(request.node, "rep_call", None)
    passed = call is not None and call.passed
    line = f"{'PASS' if passed else 'FAIL'}  {holder['label']}"
    if holder.get("notes"):
        line += " [" + "; ".join(holder["notes"]) + "]"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
