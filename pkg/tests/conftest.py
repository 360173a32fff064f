import math

import pytest
import yaml

TINY = {
    "basis": {"g_max": math.sqrt(12)},
    "mesh": {"dims": [4, 4, 4]},
    "lsrf": {"u_max": 2.0, "n_bins": 400},
    "quadrature": {"u_op": 1.8},
    "solver": {"scan_points": 2001},
    "sweep": {"a_min_nm": 90.0, "a_max_nm": 110.0, "steps": 3},
    "ensemble": {"n_atoms": 8, "bins": 4},
    "lineshape": {"points": 2001},
    "beta": {"n_points": 20},
    "convergence": {"fine_dims": [5, 5, 5]},
}


@pytest.fixture
def tiny_config(tmp_path):
    """Path of a YAML config small enough for a CLI run in seconds."""
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one acceptance line: ``acceptance(criterion, passed, detail)``."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.append((criterion, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_ACCEPTANCE, key=lambda r: _order(r[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}")


def _order(criterion: str):
    head = "".join(c for c in criterion if c.isdigit())
    return int(head or 0), criterion
