"""Smoke test for the compiled extension: python python/smoke_test.py"""

import json
import math

import pathgroup_py as pg


def main():
    so3 = pg.Group("so3")
    assert so3.algebra_dim == 3 and not so3.is_abelian()
    g = so3.exp([0.3, -0.2, 0.5])
    x = so3.log(g)
    assert max(abs(a - b) for a, b in zip(x, [0.3, -0.2, 0.5])) < 1e-12
    assert abs(so3.inner([1, 0, 0], [1, 0, 0]) - 1.0) < 1e-12

    assert pg.ito_round_trip_error(so3, samples=20) < 1e-10

    traces = pg.terminal_traces(so3, samples=4000, seed=7)
    mean = sum(traces) / len(traces)
    sd = math.sqrt(sum((t - mean) ** 2 for t in traces) / (len(traces) - 1) / len(traces))
    assert abs(mean - pg.so3_trace_moment(1.0)) < 4 * sd + 1e-3, (mean, sd)
    assert abs(pg.so3_trace_moment(1.0) - 3 * math.exp(-1.0)) < 1e-9

    circle = pg.Group("circle")
    assert abs(pg.circle_density(0.5, 0.0) - pg.circle_density(0.5, 2 * math.pi)) < 1e-12

    names = [n for n, _, _ in pg.list_identities(suite="symbolic")]
    assert "representations.fourier_wiener.order_four" in names
    reports = [json.loads(r) for r in pg.verify(suite="symbolic", groups=["so3", "circle"])]
    assert reports and all(r["verdict"] == "pass" for r in reports)
    print(f"pathgroup_py {pg.version()}: {len(reports)} symbolic reports pass; E[tr g_1] ≈ {mean:.4f}")


def test_smoke():
    main()


if __name__ == "__main__":
    main()
