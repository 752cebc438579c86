from __future__ import annotations

import numpy as np
import pytest

from semipc.core import ColumnSchema, Dataset

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((name, bool(passed), detail))
    print(f"{name}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda t: int(t[0].split()[-1])):
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")


def dense_u(pairs: np.ndarray, n: int) -> np.ndarray:
    """Element-wise incidence matrix with the reference column dropped."""
    u = np.zeros((pairs.shape[0], n + 1))
    for r, (i, j) in enumerate(pairs):
        u[r, i] += 1.0
        u[r, j] -= 1.0
    return u[:, 1:]


def random_dataset(
    rng: np.random.Generator,
    n: int,
    T: int = 1,
    p: int = 2,
    continuous: tuple[bool, ...] | None = None,
    sign: int = 1,
) -> Dataset:
    """Complete balanced design with random outcomes and covariates."""
    i, j = np.triu_indices(n + 1, k=1)
    head = np.repeat(i, T)
    tail = np.repeat(j, T)
    r = head.size
    mask = continuous if continuous is not None else (True,) * p
    schema = ColumnSchema(tuple(mask), sign)
    z = rng.normal(size=(r, p))
    for c, cont in enumerate(mask):
        if not cont:
            z[:, c] = rng.choice([-1.0, 0.0, 1.0], size=r)
    return Dataset.from_arrays(n + 1, schema, head, tail, rng.integers(0, 2, r), rng.normal(size=r), z)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
