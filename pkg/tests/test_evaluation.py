import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcardboard.cardboard import GroundRect
from mvcardboard.evaluation import (
    EvalConfig,
    FrameCounts,
    aggregate,
    apply_mask,
    compute_metrics,
    evaluate,
    match_greedy,
    match_hungarian,
    write_report,
)


def brute_force(pred, gt, radius):
    """(max matched count, min total distance at that count) by enumeration."""
    d = np.linalg.norm(pred[:, None] - gt[None], axis=-1)
    best = (0, 0.0)
    n, m = len(pred), len(gt)
    small, large = (n, m) if n <= m else (m, n)
    for perm in itertools.permutations(range(large), small):
        pairs = [(i, perm[i]) if n <= m else (perm[i], i) for i in range(small)]
        ok = [d[a, b] for a, b in pairs if d[a, b] <= radius]
        cand = (len(ok), sum(ok))
        if cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
            best = cand
    return best


def test_identical_lists():
    pts = np.random.default_rng(0).uniform(0, 10, (8, 2))
    m = match_hungarian(pts, pts, 0.5)
    assert len(m.pairs) == 8 and m.total_distance == 0


def test_beyond_radius():
    r = compute_metrics(match_hungarian([[0, 0]], [[0.6, 0]], 0.5))
    assert (r.tp, r.fp, r.fn) == (0, 1, 1)


def test_crossing_configuration():
    pred = np.array([[0.0, 0.0], [0.4, 0.0]])
    gt = np.array([[0.3, 0.0], [0.7, 0.0]])
    h, g = match_hungarian(pred, gt, 0.5), match_greedy(pred, gt, 0.5)
    assert len(h.pairs) == 2 and len(g.pairs) == 1
    assert h.total_distance == pytest.approx(0.6)
    assert brute_force(pred, gt, 0.5) == (2, pytest.approx(0.6))


def test_hungarian_vs_greedy_and_brute_force():
    rng = np.random.default_rng(42)
    for trial in range(500):
        n, m = rng.integers(1, 7, 2)
        pred, gt = rng.uniform(0, 1.5, (n, 2)), rng.uniform(0, 1.5, (m, 2))
        h, g = match_hungarian(pred, gt, 0.5), match_greedy(pred, gt, 0.5)
        assert len(h.pairs) >= len(g.pairs)
        if len(h.pairs) == len(g.pairs):
            assert h.total_distance <= g.total_distance + 1e-12
        count, dist = brute_force(pred, gt, 0.5)
        assert len(h.pairs) == count
        assert h.total_distance == pytest.approx(dist, abs=1e-9)


def test_moda_formula():
    r = aggregate([FrameCounts(0, 8, 1, 2, 10, 8.0)])
    assert r.moda == pytest.approx(0.7)


def test_modp():
    r = compute_metrics(match_hungarian([[0, 0]], [[0.25, 0]], 0.5), EvalConfig(0.5))
    assert r.modp == pytest.approx(0.5)
    assert compute_metrics(match_hungarian([[1, 1]], [[1, 1]], 0.5)).modp == 1.0


def test_no_ground_truth():
    assert aggregate([FrameCounts(0, 0, 0, 0, 0, 0.0)]).moda == 1.0
    assert aggregate([FrameCounts(0, 0, 2, 0, 0, 0.0)]).moda == -2.0


def test_mask():
    pts = np.array([[1.0, 1.0], [5.0, 5.0], [1.5, 0.5]])
    np.testing.assert_array_equal(apply_mask(pts, ()), pts)
    assert len(apply_mask(pts, (GroundRect(0, 0, 10, 10),))) == 0
    m = (GroundRect(0, 0, 2, 2),)
    a = apply_mask(pts, m)
    b = apply_mask(pts[::-1], m)
    np.testing.assert_array_equal(a, b[::-1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 8), st.integers(0, 8))
def test_counts_consistent(seed, n, m):
    rng = np.random.default_rng(seed)
    r = compute_metrics(match_hungarian(rng.uniform(0, 3, (n, 2)), rng.uniform(0, 3, (m, 2)), 0.5))
    assert r.tp + r.fp == n and r.tp + r.fn == m
    assert 0 <= r.modp <= 1 and r.moda <= 1


def test_report_files(tmp_path):
    rep = evaluate({0: [[0, 0]], 1: [[5, 5]]}, {0: [[0.1, 0]], 1: []})
    write_report(rep, tmp_path / "r.csv", tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "frame,TP,FP,FN,MODA,MODP,P,R"
    assert len(lines) == 3
    agg = json.loads((tmp_path / "r.json").read_text())
    assert (agg["tp"], agg["fp"], agg["fn"]) == (1, 1, 0)
