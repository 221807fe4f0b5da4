import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from afbrecon import cli  # noqa: E402


@pytest.fixture(scope="session")
def sweep_runs(tmp_path_factory):
    """The default evaluation grid run twice, for determinism and trend checks."""
    base = tmp_path_factory.mktemp("sweep")
    first = base / "run1"
    second = base / "run2"
    t0 = time.perf_counter()
    rc = cli.main(["sweep", "--out-dir", str(first)])
    seconds = time.perf_counter() - t0
    assert rc == 0
    assert cli.main(["sweep", "--out-dir", str(second)]) == 0
    return {"first": first, "second": second, "seconds": seconds}
