import os
from pathlib import Path

import numpy as np
import pytest

from mixpul.nn import Mlp

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = Path(os.environ.get("MIXPUL_DATA_DIR", ROOT / "data"))


def central_difference(f, params, h=1e-5):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. each array in ``params`` (in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            up = f()
            p[i] = orig - h
            down = f()
            p[i] = orig
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    a = np.concatenate([g.ravel() for g in analytic])
    n = np.concatenate([g.ravel() for g in numeric])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model(rng):
    return Mlp.init([4, 8, 6, 1], rng)


def data_path(*parts):
    path = DATA_DIR.joinpath(*parts)
    if not path.exists():
        pytest.skip(f"{path} missing; run `python -m mixpul.fetch --data-dir {DATA_DIR}`")
    return path


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
