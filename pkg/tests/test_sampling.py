"""Latin hypercube designs and problem sample sets."""

import numpy as np
import pytest

from piat import problems, sampling
from piat.sampling import SamplingError, lhs, sample_problem


def test_lhs_stratification_one_dim():
    pts = lhs(4, 1, np.random.default_rng(0))
    strata = np.sort(np.floor(pts[:, 0] * 4).astype(int))
    assert list(strata) == [0, 1, 2, 3]


def test_lhs_shape_and_range():
    pts = lhs(37, 5, np.random.default_rng(1))
    assert pts.shape == (37, 5)
    assert np.all(pts >= 0.0) and np.all(pts < 1.0)


def test_lhs_stratification_every_dimension():
    n, dims = 50, 4
    pts = lhs(n, dims, np.random.default_rng(2))
    for j in range(dims):
        strata = np.sort(np.floor(pts[:, j] * n).astype(int))
        assert np.array_equal(strata, np.arange(n))


def test_lhs_deterministic_and_seed_sensitive():
    a = lhs(20, 3, 77)
    b = lhs(20, 3, 77)
    c = lhs(20, 3, 78)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_lhs_validates_counts():
    with pytest.raises(SamplingError):
        lhs(0, 1, 0)
    with pytest.raises(SamplingError):
        lhs(5, 0, 0)


def test_even_split_of_condition_points():
    prob = problems.kuramoto_sivashinsky()
    train, _ = sample_problem(prob, 30, 20, 10, seed=0)
    assert len(train.by_kind(sampling.INITIAL)) == 10
    assert len(train.by_kind(sampling.BOUNDARY)) == 10
    assert len(train.by_kind(sampling.COLLOCATION)) == 30


def test_odd_split_remainder_to_initial():
    prob = problems.kuramoto_sivashinsky()
    train, _ = sample_problem(prob, 5, 7, 5, seed=0)
    assert len(train.by_kind(sampling.INITIAL)) == 4
    assert len(train.by_kind(sampling.BOUNDARY)) == 3


def test_collocation_labels_zero_and_interior():
    prob = problems.kuramoto_sivashinsky()
    train, _ = sample_problem(prob, 100, 10, 10, seed=4)
    for p in train.by_kind(sampling.COLLOCATION):
        assert p.label == 0.0
        assert prob.x_lo[0] < p.x[0] < prob.x_hi[0]
        assert 0.0 < p.t < prob.t_max


def test_initial_points_on_time_zero_face():
    prob = problems.allen_cahn(d=2)
    train, _ = sample_problem(prob, 10, 12, 10, seed=5)
    for p in train.by_kind(sampling.INITIAL):
        assert p.t == 0.0
        assert p.label == pytest.approx(prob.exact(p.x, 0.0), abs=1e-12)


def test_boundary_points_sit_exactly_on_faces():
    prob = problems.allen_cahn(d=3)
    train, _ = sample_problem(prob, 10, 24, 10, seed=6)
    bpts = train.by_kind(sampling.BOUNDARY)
    faces_seen = set()
    for p in bpts:
        dim, side = p.face
        expected = prob.x_hi[dim] if side else prob.x_lo[dim]
        assert p.x[dim] == expected
        faces_seen.add(p.face)
    assert len(faces_seen) == 6          # round-robin covers all 2d faces


def test_test_points_labeled_by_exact_solution():
    prob = problems.sawada_kotera()
    _, test = sample_problem(prob, 10, 10, 40, seed=7)
    assert test.n_test == 40
    for p in test.points:
        assert p.kind == sampling.TEST
        assert p.label == pytest.approx(prob.exact(p.x, p.t), abs=1e-12)


def test_sampling_deterministic():
    prob = problems.kuramoto_sivashinsky()
    t1, e1 = sample_problem(prob, 20, 10, 10, seed=9)
    t2, e2 = sample_problem(prob, 20, 10, 10, seed=9)
    for a, b in zip(t1.points + e1.points, t2.points + e2.points):
        assert np.array_equal(a.x, b.x)
        assert a.t == b.t and a.label == b.label and a.kind == b.kind


def test_train_and_test_sets_disjoint():
    prob = problems.kuramoto_sivashinsky()
    train, test = sample_problem(prob, 50, 10, 50, seed=10)
    train_coords = {(p.x[0], p.t) for p in train.points}
    test_coords = {(p.x[0], p.t) for p in test.points}
    assert not train_coords & test_coords


def test_counts_validated():
    prob = problems.kuramoto_sivashinsky()
    with pytest.raises(SamplingError):
        sample_problem(prob, 0, 10, 10, seed=0)


def test_csv_export(tmp_path):
    prob = problems.allen_cahn(d=2)
    train, _ = sample_problem(prob, 5, 4, 5, seed=11)
    path = tmp_path / "samples.csv"
    sampling.write_csv(train, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "kind,x1,x2,t,label"
    assert len(lines) == 1 + len(train.points)
    first = lines[1].split(",")
    assert first[0] in sampling.KINDS
    # values survive a text round-trip exactly
    p = train.points[0]
    assert float(first[1]) == p.x[0]
    assert float(first[4]) == p.label
