import pytest

from nnpda.grammars import builtin
from nnpda.tensors import encode_weights

GRAMMARS = ("parens", "dyck2", "anbn")


@pytest.fixture(scope="session")
def parens():
    return builtin("parens")


@pytest.fixture(scope="session")
def parens_tensors(parens):
    return encode_weights(parens)


def word(spec, text):
    """Input indices for a string written one character per symbol."""
    return [spec.input_alphabet.index(ch) for ch in text.replace(" ", "")]


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
