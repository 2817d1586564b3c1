"""Smoke test for the delegate_lab extension module.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import json
import math

import delegate_lab as dl


def check_solve():
    grid = dl.Grid.from_setting(2, [1], [2], [0.25] * 4, [0.0, 0.0, 1.0, 5.0])
    assert (grid.h, grid.m) == (2, 2)
    result = dl.solve(grid, "brute")
    assert result["team_loss"] == 0.125
    assert result["retained"] == [1]
    assert result["machine"] == [0.0, 5.0]
    objective = grid.retained_objective(result["retained"])
    assert abs(result["team_loss"] - grid.base_loss - objective) < 1e-12

    try:
        dl.solve(grid, "separable")
    except ValueError as e:
        assert "not separable" in str(e)
    else:
        raise AssertionError("separable solver accepted a non-separable grid")

    same = dl.Grid.from_json(json.dumps({"h": 2, "m": 2, "mass": grid.mass, "value": grid.value}))
    assert dl.solve(same)["team_loss"] == dl.solve(grid)["team_loss"]


def check_two_feature():
    an = dl.analyze_two_feature(0.0, 1.0)
    assert an["regions"] == ["FULL"]
    assert an["optimal_loss"] == 0.0
    an = dl.analyze_two_feature(0.0, 5.0)
    assert an["full_adoption_possible"]
    y1, y2 = an["witness"]
    grid = dl.two_feature_grid(0.0, 5.0)
    assert grid.delegation_set([y1, y2]) == [0, 1]


def check_dynamics():
    trace = dl.iterate(dl.two_feature_grid(0.0, 5.0))
    assert trace["steps"][0]["machine"] == [0.0, 3.0]
    assert trace["fixed_point"] == [0.0, 5.0]
    assert trace["converged"] and trace["iterations"] == 1

    exp = dl.run_experiment(1, 1, 200, 1)
    assert len(exp["rows"]) == 200
    assert [r["sample_id"] for r in exp["rows"]] == list(range(200))
    assert 0.0 <= exp["summary"]["prop_optimal"] <= 1.0
    assert exp == dl.run_experiment(1, 1, 200, 1)


def check_zero_and_reduction():
    assert dl.zero_loss_possible(dl.two_feature_grid(2.0, 2.0)) == {"possible": True, "r0": [0]}
    assert not dl.zero_loss_possible(dl.two_feature_grid(0.0, 5.0))["possible"]

    cycle = [(0, 1), (1, 2), (2, 3), (3, 0)]
    grid = dl.graph_to_instance(4, cycle)
    assert (grid.h, grid.m) == (4, 12)
    norms = [sum(v * v for v in row) for row in grid.value]
    assert all(math.isclose(n, norms[0], abs_tol=1e-12) for n in norms)
    size, _ = dl.max_clique(4, cycle)
    assert len(dl.solve(grid, "brute")["retained"]) == size == 2

    try:
        dl.graph_to_instance(3, [(0, 1)])
    except ValueError:
        pass
    else:
        raise AssertionError("irregular graph accepted")


def main():
    check_solve()
    check_two_feature()
    check_dynamics()
    check_zero_and_reduction()
    print(f"delegate_lab {dl.__version__}: smoke test ok")


if __name__ == "__main__":
    main()
