"""Latin hypercube sampling of collocation, boundary, initial and test
points with kind tags and reproducible seeding."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .problems import ProblemSpec

COLLOCATION = "collocation"
BOUNDARY = "boundary"
INITIAL = "initial"
TEST = "test"

KINDS = (COLLOCATION, BOUNDARY, INITIAL, TEST)


class SamplingError(ValueError):
    pass


@dataclass
class SamplePoint:
    x: np.ndarray            # shape (d,)
    t: float
    kind: str
    label: float             # 0 | g(x,t) | h(x) | exact(x,t)
    face: tuple[int, int] | None = None   # (dim, side) for boundary points

    def coords(self) -> np.ndarray:
        """Row (x_1..x_d, t)."""
        return np.append(self.x, self.t)


@dataclass
class SampleSet:
    points: list[SamplePoint]
    n_f: int
    n_u: int
    n_test: int
    seed: int

    def by_kind(self, kind: str) -> list[SamplePoint]:
        return [p for p in self.points if p.kind == kind]

    def coords(self, kind: str) -> np.ndarray:
        """(n, d+1) coordinate rows for one kind."""
        pts = self.by_kind(kind)
        if not pts:
            return np.zeros((0, 0))
        return np.stack([p.coords() for p in pts])

    def labels(self, kind: str) -> np.ndarray:
        return np.asarray([p.label for p in self.points if p.kind == kind])


def lhs(n: int, dims: int, rng) -> np.ndarray:
    """Latin hypercube design on [0, 1)^dims.

    Each of the n equal strata per dimension holds exactly one sample;
    stratum permutations are drawn independently per dimension and the
    within-stratum offset is uniform (nudged off exact zero so scaled
    samples stay strictly inside closed domains).
    """
    if n < 1 or dims < 1:
        raise SamplingError("lhs needs n >= 1 and dims >= 1")
    rng = np.random.default_rng(rng)
    out = np.empty((n, dims))
    tiny = np.nextafter(0.0, 1.0)
    for j in range(dims):
        perm = rng.permutation(n)
        off = rng.random(n)
        off[off == 0.0] = tiny
        out[:, j] = (perm + off) / n
    return out


def _scale(unit: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return lo + unit * (hi - lo)


def sample_problem(problem: ProblemSpec, n_f: int, n_u: int, n_test: int,
                   seed: int) -> tuple[SampleSet, SampleSet]:
    """Draw the training and test sets for one run.

    Collocation points fill the space-time interior; n_u splits evenly
    between the initial face (remainder goes to initial) and the spatial
    boundary, cycling round-robin over the 2d faces. Test points cover
    the full space-time box and carry exact-solution labels.
    """
    if min(n_f, n_u, n_test) < 1:
        raise SamplingError("sample counts must be >= 1")
    rng = np.random.default_rng(seed)
    d = problem.d
    x_lo = np.asarray(problem.x_lo)
    x_hi = np.asarray(problem.x_hi)

    points: list[SamplePoint] = []

    cube = lhs(n_f, d + 1, rng)
    xs = _scale(cube[:, :d], x_lo, x_hi)
    ts = cube[:, d] * problem.t_max
    for i in range(n_f):
        points.append(SamplePoint(xs[i].copy(), float(ts[i]), COLLOCATION, 0.0))

    n_bound = n_u // 2
    n_init = n_u - n_bound
    xi = _scale(lhs(n_init, d, rng), x_lo, x_hi)
    hi_labels = problem.h(xi)
    for i in range(n_init):
        points.append(SamplePoint(xi[i].copy(), 0.0, INITIAL,
                                  float(hi_labels[i])))

    if n_bound:
        free = lhs(n_bound, d, rng)   # d-1 free spatial coords + time
        for i in range(n_bound):
            face = i % (2 * d)
            dim, side = face // 2, face % 2
            x = np.empty(d)
            x[dim] = x_hi[dim] if side else x_lo[dim]
            other = [j for j in range(d) if j != dim]
            for c, j in enumerate(other):
                x[j] = x_lo[j] + free[i, c] * (x_hi[j] - x_lo[j])
            t = float(free[i, d - 1] * problem.t_max)
            points.append(SamplePoint(x, t, BOUNDARY,
                                      float(problem.g(x, t)), (dim, side)))

    train = SampleSet(points, n_f, n_u, 0, seed)

    cube = lhs(n_test, d + 1, rng)
    xs = _scale(cube[:, :d], x_lo, x_hi)
    ts = cube[:, d] * problem.t_max
    labels = problem.exact(xs, ts)
    test_points = [
        SamplePoint(xs[i].copy(), float(ts[i]), TEST, float(labels[i]))
        for i in range(n_test)
    ]
    test = SampleSet(test_points, 0, 0, n_test, seed)
    return train, test


def write_csv(sample_set: SampleSet, path) -> None:
    """Columns: kind, x1..xd, t, label."""
    d = len(sample_set.points[0].x) if sample_set.points else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind"] + [f"x{i+1}" for i in range(d)] + ["t", "label"])
        for p in sample_set.points:
            w.writerow([p.kind] + [repr(v) for v in p.x]
                       + [repr(p.t), repr(p.label)])
