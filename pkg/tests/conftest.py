import numpy as np
import pytest

from robust_reserving.glm import residual_panel
from robust_reserving.pipeline import PipelineConfig, detect, prepare_panel, run_pipeline
from robust_reserving.triangle import bundled_manifest, load_example_panel

_RUNS: dict = {}


@pytest.fixture(scope="session")
def example_panel():
    return load_example_panel()


@pytest.fixture(scope="session")
def example_residuals(example_panel):
    return residual_panel(prepare_panel(example_panel)[0])


@pytest.fixture(scope="session")
def run_technique():
    """Cached full pipeline runs on the bundled panel, keyed by technique."""

    def run(technique: str):
        if technique not in _RUNS:
            _RUNS[technique] = run_pipeline(PipelineConfig(manifest=str(bundled_manifest()), technique=technique))
        return _RUNS[technique]

    return run


@pytest.fixture(scope="session")
def detect_technique(example_residuals):
    cache: dict = {}

    def run(technique: str):
        if technique not in cache:
            cache[technique] = detect(example_residuals, PipelineConfig(technique=technique))
        return cache[technique]

    return run


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, list[str]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one criterion: print a PASS/FAIL line (plus failing checks) and fail the test if any check failed."""

    def report(number: int, title: str, checks: list[tuple[str, bool, str]]) -> None:
        failed = [c for c in checks if not c[1]]
        status = "PASS" if not failed else "FAIL"
        lines = [f"[{status}] criterion {number}: {title} ({len(checks) - len(failed)}/{len(checks)} checks)"]
        lines += [f"        FAIL {name}: {detail}" for name, _, detail in failed]
        ACCEPTANCE[number] = lines
        print("\n".join(lines))
        assert not failed, "; ".join(f"{name}: {detail}" for name, _, detail in failed)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            for line in ACCEPTANCE[number]:
                terminalreporter.write_line(line)
