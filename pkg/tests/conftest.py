import pytest

from rationeval import kernels

# Collected by the acceptance tests; rendered into the terminal summary so
# each criterion's verdict is visible without -s.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Compile jitted kernels up front so timed sections measure steady state.
    kernels.warmup()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"ACCEPTANCE {name}: {verdict}{suffix}")
