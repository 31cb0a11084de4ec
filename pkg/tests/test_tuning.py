import numpy as np
import pytest

from progmetric.bayes_opt import BOX_HIGH, BOX_LOW, hp_to_vector
from progmetric.losses import HyperParams
from progmetric.tuning import (
    QUADRATIC_MINIMUM,
    quadratic_objective,
    run_tuning,
    trace_csv_lines,
)


def test_quadratic_objective_center_and_corners():
    # continuous center of the box in the two real coordinates
    center = HyperParams(lam=1.0, margin=0.1, k=4, p=8)
    z = (hp_to_vector(center) - BOX_LOW) / (BOX_HIGH - BOX_LOW)
    assert quadratic_objective(center) == pytest.approx(
        float(((z - 0.5) ** 2).sum()), rel=1e-12)
    corner = HyperParams(lam=0.0, margin=-0.1, k=1, p=1)
    assert quadratic_objective(corner) == pytest.approx(1.0, rel=1e-12)
    assert quadratic_objective(center) < 0.01


def test_trace_shape_and_phases():
    trace = run_tuning(0, rounds=3, pool_size=8, n_initial=4)
    assert len(trace) == 7
    assert [t.phase for t in trace] == ["init"] * 4 + ["propose"] * 3
    assert [t.index for t in trace] == list(range(7))


def test_best_so_far_non_increasing():
    trace = run_tuning(1, rounds=10, pool_size=32)
    bests = [t.best_so_far for t in trace]
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))
    assert bests[-1] == min(t.value for t in trace)


def test_run_tuning_deterministic():
    a = run_tuning(5, rounds=4, pool_size=16)
    b = run_tuning(5, rounds=4, pool_size=16)
    assert a == b


def test_converges_near_minimum():
    trace = run_tuning(2, rounds=30)
    assert trace[-1].best_so_far - QUADRATIC_MINIMUM < 0.05


def test_trace_csv_lines():
    trace = run_tuning(3, rounds=1, pool_size=4, n_initial=2)
    lines = list(trace_csv_lines(trace))
    assert lines[0] == "index,phase,lambda,margin,k,p,value,best_so_far"
    assert len(lines) == 4
    assert lines[1].startswith("0,init,")
