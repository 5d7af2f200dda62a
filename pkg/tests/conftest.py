import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthspeed.scenesynth import CameraRig, generate_dataset  # noqa: E402

SMALL_RIG = CameraRig(width_px=48, height_px=32)


@pytest.fixture(scope="session")
def small_rig():
    return SMALL_RIG


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Twenty rendered episodes at 48x32, shared read-only across tests."""
    root = tmp_path_factory.mktemp("tiny") / "ds"
    generate_dataset(20, SMALL_RIG, master_seed=11, output_dir=root)
    return root


# --- acceptance reporting ----------------------------------------------------
# Tests tagged @pytest.mark.criterion(n, title) get one PASS/FAIL line each in
# the terminal summary; values passed to record_property show up as details.

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    n, title = marker.args
    status = "PASS" if rep.passed else "FAIL"
    if rep.skipped:
        status = "SKIP"
    details = ", ".join(f"{k}={v}" for k, v in item.user_properties)
    _CRITERIA[n] = (status, title, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, details = _CRITERIA[n]
        line = f"[{status}] criterion {n:2d}: {title}"
        terminalreporter.write_line(line + (f" ({details})" if details else ""))
