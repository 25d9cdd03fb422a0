import pytest

from ckconv.config import RunConfig

TINY = dict(
    data__train_per_class=3, data__test_per_class=2, data__points=64,
    stage1__centers=16, stage1__radius=0.5, stage1__neighbors=8, stage1__channels=8,
    stage2__centers=4, stage2__radius=1.0, stage2__neighbors=8, stage2__channels=12,
    model__kernel_hidden=8, model__head_hidden=8, model__v=3,
    train__epochs=2, train__batch_size=4,
)


def tiny_config(**overrides) -> RunConfig:
    return RunConfig().replace(**{**TINY, **overrides})


@pytest.fixture
def tiny():
    return tiny_config


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, name, passed, detail)`` records one acceptance line."""

    def record(n: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {n:2d}: {name}" + (f" | {detail}" if detail else "")
        ACCEPTANCE[n] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
