import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import make_uji  # noqa: E402
from wifissl.data import Role, write_csv  # noqa: E402


@pytest.fixture(scope="session")
def small_train():
    return make_uji(240, seed=1)


@pytest.fixture(scope="session")
def small_test():
    return make_uji(80, seed=2, role=Role.TEST)


@pytest.fixture
def uji_files(tmp_path, small_train, small_test):
    """A data directory with UJIIndoorLoc-named synthetic CSVs."""
    write_csv(small_train, tmp_path / "trainingData.csv")
    write_csv(small_test, tmp_path / "validationData.csv")
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in RESULTS:
        terminalreporter.write_line(f"{status:<7} {name}" + (f": {detail}" if detail else ""))
