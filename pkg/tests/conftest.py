import pytest

from cspi_lab.hamiltonian_core import NormalHamiltonian

# mpmath, 30 digits, sum_n exp(-(0.5 n + n(n-1)/2)) at beta = 1
Z_STAR = 1.753314144021452772
# sum_n exp(-(0.5 n + n^2/2)), the naive-exponential limit
Z_NAIVE = 1.4201909683070033

_criteria = {}


def record_criterion(number, passed, detail):
    _criteria[number] = (passed, detail)


@pytest.fixture
def bose_hubbard():
    return NormalHamiltonian.bose_hubbard(-0.5, 1.0)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        passed, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
