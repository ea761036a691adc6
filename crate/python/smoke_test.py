"""Smoke test for the `mmwave` extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/mmwave-*.whl
"""

import cmath
import math
import random
import tempfile
from pathlib import Path

import mmwave


def check_array():
    a = mmwave.ula_response(4, 0.0)
    assert len(a) == 4
    assert all(abs(x - 0.5) < 1e-12 for x in a)
    b = mmwave.ula_response(8, math.pi / 6)
    assert abs(sum(abs(x) ** 2 for x in b) - 1.0) < 1e-12
    grid = mmwave.angle_grid(4)
    assert abs(grid[0] + math.pi / 2) < 1e-12 and len(grid) == 4
    try:
        mmwave.ula_response(4, 2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range angle accepted")


def check_pastd():
    rng = random.Random(3)
    dim = 8
    u = [cmath.exp(1j * 0.4 * k) / math.sqrt(dim) for k in range(dim)]
    tracker = mmwave.Pastd(1, dim)
    for _ in range(400):
        s = complex(rng.gauss(0, 1), rng.gauss(0, 1))
        r = [s * x + complex(rng.gauss(0, 0.02), rng.gauss(0, 0.02)) for x in u]
        tracker.update(r)
    (col,) = tracker.basis()
    overlap = abs(sum(c.conjugate() * x for c, x in zip(col, u)))
    assert overlap > 0.99, overlap
    assert tracker.lambdas[0] > 0


def check_stats():
    assert abs(mmwave.noise_variance(500e6, 6.0) - 7.92e-12) < 0.01e-12
    assert mmwave.percentile([3.0, 1.0, 2.0, 4.0], 0.5) == 2.0
    assert mmwave.empirical_cdf([2.0, 1.0]) == [(1.0, 0.5), (2.0, 1.0)]


def check_campaign():
    sc = mmwave.Scenario("k = 3\ntrials = 8\n", ["seed=5", "bf_mode=hybrid,fd"])
    assert sc.n_users == 3 and sc.seed == 5
    with tempfile.TemporaryDirectory() as d:
        prefix = Path(d) / "run"
        summary = sc.run(str(prefix))
        assert (Path(d) / "run_summary.csv").read_text().startswith("link,bf_mode,estimator,")
    assert len(summary) == 12
    assert summary["dl/hybrid/zf"]["n_samples"] == 24
    assert summary["dl/hybrid/perfect"]["median"] > 0
    try:
        mmwave.Scenario("k = 3\nbogus = 1\n")
    except ValueError as e:
        assert "line 2" in str(e), e
    else:
        raise AssertionError("unknown key accepted")


if __name__ == "__main__":
    for check in (check_array, check_pastd, check_stats, check_campaign):
        check()
        print(f"ok  {check.__name__}")
