import numpy as np
import pytest


def toy_frame(n=80, q=6, m=0, seed=0, sigma_u=0.3, beta=2.0):
    """Columns y, w (or w1..wm) and z1..zq from a small linear model."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, q))
    x = 0.5 * z[:, 0] + rng.normal(size=n) + 3.0
    y = 1.0 + beta * x - 1.5 * z[:, 1] + 0.3 * rng.normal(size=n)
    cols = {"y": y}
    if m == 0:
        cols["w"] = x + sigma_u * rng.normal(size=n)
    for k in range(m):
        cols[f"w{k + 1}"] = x + sigma_u * rng.normal(size=n)
    for j in range(q):
        cols[f"z{j + 1}"] = z[:, j]
    return cols


@pytest.fixture
def write_csv(tmp_path):
    def _write(cols, name="data.csv"):
        path = tmp_path / name
        names = list(cols)
        rows = zip(*(cols[c] for c in names))
        lines = [",".join(names)] + [",".join(repr(float(v)) for v in r) for r in rows]
        path.write_text("\n".join(lines) + "\n")
        return path
    return _write


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Store one acceptance outcome for the end-of-run summary and return ``ok``."""
    ACCEPTANCE[number] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
