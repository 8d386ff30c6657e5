import math
from dataclasses import replace

import numpy as np
import pytest

from wynerci.errors import InvalidArgumentError
from wynerci.rng import derive_seed
from wynerci.sweep import (CSV_HEADER, SweepConfig, SweepRecord, best_feasible, default_grid,
                           num_bipartitions, param_count, pareto_frontier, records_from_csv,
                           records_to_csv, run_sweep, runtime_profile)
from wynerci.synth import invertible_spec, noninvertible_spec

SMALL = SweepConfig(solver="bipartite", synth=noninvertible_spec(), grid=(0.5, 4.0), restarts=3,
                    max_iters=200, accuracy_samples=500, record_time=False)


def rec(cmi, mi, g=0, r=0):
    return SweepRecord("vi", g, r, 1.0, 0, 0.0, 1, "tolerance", None, mi, cmi, None, 1)


@pytest.fixture(scope="module")
def small_records():
    return run_sweep(SMALL)


def test_default_grid():
    g = default_grid()
    assert len(g) == 20 and g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(10.0)
    assert np.allclose(np.diff(np.log(g)), math.log(100) / 19)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        SweepConfig(solver="em")
    with pytest.raises(InvalidArgumentError):
        SweepConfig(grid=(1.0, 0.5))
    with pytest.raises(InvalidArgumentError):
        SweepConfig(restarts=0)
    with pytest.raises(InvalidArgumentError):
        SweepConfig.from_dict({"solver": "vi", "colour": 1})


def test_config_dict_round_trip():
    back = SweepConfig.from_dict(SMALL.to_dict())
    assert back == replace(SMALL, z_cardinality=8)


def test_param_counts():
    assert param_count("vi", (16, 16), 8) == 256
    assert param_count("bipartite", (16, 16), 8) == 2048
    assert num_bipartitions(2) == 1 and num_bipartitions(3) == 3 and num_bipartitions(4) == 7


def test_one_record_per_cell_in_order(small_records):
    assert len(small_records) == 6
    assert [(r.grid_index, r.restart) for r in small_records] == [(g, r) for g in range(2) for r in range(3)]
    assert all(r.seed == derive_seed(0, r.grid_index, r.restart) for r in small_records)
    assert all(r.wall_ms is None for r in small_records)


def test_exactly_one_accuracy_per_grid_point(small_records):
    for g in range(2):
        group = [r for r in small_records if r.grid_index == g]
        scored = [r for r in group if r.accuracy is not None]
        assert len(scored) == 1
        assert scored[0] == min(group, key=lambda r: (r.final_loss, r.iterations, r.seed))
        assert 0.0 <= scored[0].accuracy <= 1.0


def test_single_cell_grid():
    out = run_sweep(replace(SMALL, grid=(1.0,), restarts=1, accuracy_samples=0))
    assert len(out) == 1 and out[0].accuracy is None


def test_threaded_sweep_matches_single_thread(small_records):
    par = run_sweep(replace(SMALL, threads=2))
    assert par == small_records


def test_trace_callback_sees_every_restart(small_records):
    seen = []
    out = run_sweep(SMALL, on_trace=lambda r, t: seen.append((r, t.final_loss)))
    assert out == small_records
    assert [r for r, _ in seen] == [replace(r, accuracy=None) for r in small_records]
    assert all(loss == r.final_loss for r, loss in seen)
    with pytest.raises(InvalidArgumentError):
        run_sweep(replace(SMALL, threads=2), on_trace=print)


def test_vi_sweep_small():
    cfg = replace(SMALL, solver="vi", synth=invertible_spec(), grid=(2.0,), restarts=2, accuracy_samples=0)
    out = run_sweep(cfg)
    assert len(out) == 2 and all(r.param_count == 256 for r in out)


def test_csv_round_trip(small_records):
    text = records_to_csv(small_records)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    rows = records_from_csv(text)
    assert len(rows) == 6
    for row, r in zip(rows, small_records):
        assert float(row["mi_z_xv"]) == r.mi_z_xv
        assert row["wall_ms"] == ""
    with pytest.raises(InvalidArgumentError):
        records_from_csv("a,b\n1,2\n")


def test_pareto_examples():
    pts = [rec(0.0, 3.0), rec(0.1, 2.5), rec(0.1, 2.8), rec(0.2, 2.6), rec(0.5, 1.0)]
    front = pareto_frontier(pts)
    assert [(r.cond_mi_sum, r.mi_z_xv) for r in front] == [(0.0, 3.0), (0.1, 2.5), (0.5, 1.0)]
    with pytest.raises(InvalidArgumentError):
        pareto_frontier([])


def test_pareto_members_are_not_dominated(small_records):
    front = pareto_frontier(small_records)
    for f in front:
        for r in small_records:
            dominated = (r.cond_mi_sum <= f.cond_mi_sum and r.mi_z_xv <= f.mi_z_xv
                         and (r.cond_mi_sum, r.mi_z_xv) != (f.cond_mi_sum, f.mi_z_xv))
            assert not dominated
    # every non-member is dominated by some member
    for r in small_records:
        if r not in front:
            assert any(f.cond_mi_sum <= r.cond_mi_sum and f.mi_z_xv <= r.mi_z_xv for f in front)


def test_best_feasible():
    pts = [rec(0.005, 2.9, 0), rec(0.001, 2.95, 1), rec(0.02, 2.0, 2)]
    assert best_feasible(pts, 0.01).mi_z_xv == 2.9
    assert best_feasible(pts, 0.0001) is None


def test_runtime_profile_shape():
    prof = runtime_profile(replace(SMALL, grid=(1.0,), restarts=1), [2, 4])
    assert [z for z, _ in prof] == [2, 4]
    assert all(t > 0 for _, t in prof)
