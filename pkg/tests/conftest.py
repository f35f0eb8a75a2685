import pytest

from lookahead.flux import make_family_j, make_lwr
from lookahead.threshold import build_gamma, build_sigma

# acceptance results, one entry per criterion; a criterion checked in
# several parts passes only if every part passes
ACCEPTANCE_PARTS: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_PARTS.setdefault(criterion, []).append((bool(passed), detail))


def acceptance_lines() -> list[str]:
    lines = []
    for key in sorted(ACCEPTANCE_PARTS):
        parts = ACCEPTANCE_PARTS[key]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        lines.append(f"criterion {key:>2}: {verdict}  " + "; ".join(d for _, d in parts))
    return lines


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_PARTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_lines():
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fj2():
    return make_family_j(2)


@pytest.fixture(scope="session")
def lwr():
    return make_lwr()


@pytest.fixture(scope="session")
def sigma2(fj2):
    return build_sigma(fj2)


@pytest.fixture(scope="session")
def gamma2(fj2):
    return build_gamma(fj2)


@pytest.fixture(scope="session")
def sigma_lwr(lwr):
    return build_sigma(lwr)
