import io
import itertools
import json
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from isserlis.cli import run


def random_psd(rng, d, rank=None):
    """Random PSD matrix, rank-deficient when ``rank < d``."""
    b = rng.standard_normal((d, rank or d))
    return b @ b.T


def brute_force_matchings(n):
    """All perfect matchings of 1..n: chop every permutation into consecutive pairs."""
    if n % 2:
        return set()
    found = set()
    for perm in itertools.permutations(range(1, n + 1)):
        found.add(frozenset(frozenset(perm[i:i + 2]) for i in range(0, n, 2)))
    return found


def invoke(*argv):
    """Run the CLI in-process; returns (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = run([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


@pytest.fixture
def write_json(tmp_path):
    counter = iter(range(10 ** 6))

    def _write(data, name=None):
        path = tmp_path / (name or f"in{next(counter)}.json")
        path.write_text(json.dumps(data))
        return str(path)

    return _write


ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  AC{criterion:<2}  {detail}")
