import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from demakeup.age import TrainConfig, train_age_estimator  # noqa: E402
from demakeup.encoders import TestDoubleFace, TestDoubleImageText, TestDoublePerceptual  # noqa: E402
from demakeup.synthetic import intensity_age_dataset  # noqa: E402


@pytest.fixture(scope="session")
def image_text():
    return TestDoubleImageText()


@pytest.fixture(scope="session")
def face():
    return TestDoubleFace()


@pytest.fixture(scope="session")
def perceptual():
    return TestDoublePerceptual()


@pytest.fixture(scope="session")
def trained_regressor():
    """Proxy regressor fitted to the synthetic intensity-age mapping."""
    model, history = train_age_estimator(
        intensity_age_dataset(200, seed=0), TrainConfig(max_epochs=30, batch_size=10, patience=30)
    )
    for p in model.parameters():
        p.requires_grad_(False)
    return model, history


@pytest.fixture
def rng():
    return torch.Generator().manual_seed(1234)


_ACCEPTANCE: list[tuple[str, str, float, str]] = []


@pytest.fixture
def measured(record_property):
    """Attach a short ``key=value`` note to the acceptance summary line."""
    def note(**kv):
        for k, v in kv.items():
            record_property(k, v)
    return note


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = ", ".join(f"{k}={v}" for k, v in report.user_properties)
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome, report.duration, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, dur, detail in _ACCEPTANCE:
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}  ({dur:.1f}s)  {detail}".rstrip())
