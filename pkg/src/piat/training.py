"""Loss assembly, the optimizer, and the training regimes.

Five regimes share one full-batch loop: plain residual training, the
same with a weight-norm penalty, Gaussian input smoothing, and
adversarial training (with or without the penalty) where every sample
is pushed up the pointwise loss by projected sign ascent and its label
is recomputed at the perturbed location, so the adversarial sample
still carries its true target.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import network, sampling
from .network import Mlp
from .problems import ProblemSpec
from .sampling import BOUNDARY, COLLOCATION, INITIAL, SamplePoint, SampleSet
from .tape import Tape, VarId

log = logging.getLogger(__name__)

REGIMES = ("pinn", "pinn+wd", "gaussian", "piat", "piat+wd")

_TRAIN_KINDS = (COLLOCATION, BOUNDARY, INITIAL)


class TrainingError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float = 1e-3
    lambda_wd: float = 5e-4          # applied only by the +wd regimes
    eps: float = 0.05                # attack budget (box half-width)
    pgd_steps: int = 10
    pgd_alpha: float | None = None   # None -> eps / 4
    sigma_gauss: float | None = None  # None -> eps
    regime: str = "pinn"
    seed: int = 0
    w_residual: float = 1.0
    w_boundary: float = 1.0
    w_initial: float = 1.0
    eval_interval: int = 100
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise TrainingError(
                f"unknown regime {self.regime!r}; expected one of {REGIMES}"
            )
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.eps < 0:
            raise TrainingError("attack budget eps must be >= 0")
        if self.pgd_steps < 1:
            raise TrainingError("pgd_steps must be >= 1")
        if self.pgd_alpha is not None and self.pgd_alpha <= 0:
            raise TrainingError("pgd_alpha must be > 0 when given")
        if self.sigma_gauss is not None and self.sigma_gauss < 0:
            raise TrainingError("sigma_gauss must be >= 0")
        if self.adversarial and self.eps > 0 and self.effective_pgd_alpha <= 0:
            raise TrainingError("adversarial training needs a positive step")

    @property
    def effective_pgd_alpha(self) -> float:
        return self.eps / 4.0 if self.pgd_alpha is None else self.pgd_alpha

    @property
    def effective_sigma(self) -> float:
        return self.eps if self.sigma_gauss is None else self.sigma_gauss

    @property
    def effective_lambda(self) -> float:
        return self.lambda_wd if self.regime.endswith("+wd") else 0.0

    @property
    def adversarial(self) -> bool:
        return self.regime.startswith("piat")


@dataclass
class LossBreakdown:
    residual_mse: float
    boundary_mse: float
    initial_mse: float
    wd_penalty: float
    total: float


@dataclass
class AdamState:
    """Adam with bias-corrected moments (beta1=0.9, beta2=0.999)."""

    n: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    t: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.m = np.zeros(self.n)
        self.v = np.zeros(self.n)

    def step(self, params: np.ndarray, grads: np.ndarray,
             lr: float) -> np.ndarray:
        if params.shape != grads.shape or params.shape != (self.n,):
            raise TrainingError("parameter/gradient shape mismatch")
        bad = np.flatnonzero(~np.isfinite(grads))
        if bad.size:
            raise TrainingError(
                f"non-finite gradient for parameter index {int(bad[0])}"
            )
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps_adam)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              lr: float = 1e-3) -> np.ndarray:
    return state.step(params, grads, lr)


# -- recorded pointwise-loss programs -----------------------------------------


class _KindProgram:
    """One recorded pointwise loss for a point kind, evaluated over lanes.

    Lane j holds point j; rebinding coordinate/label/parameter leaves and
    re-running the program evaluates all points at once. One backward
    sweep yields both per-lane input gradients (for the attack) and
    per-lane parameter gradients (reduced outside in fixed lane order).
    """

    def __init__(self, problem: ProblemSpec, mlp: Mlp, kind: str, lanes: int):
        self.problem = problem
        self.kind = kind
        self.lanes = lanes
        d = problem.d
        cap = _capacity_hint(problem, mlp, kind)
        self.tape = Tape(lanes=lanes, capacity=cap)
        self.leaves = network.register_leaves(self.tape, mlp)
        self.x_vars = [
            self.tape.leaf(np.zeros(lanes), role=f"input coordinate x{i+1}")
            for i in range(d)
        ]
        self.t_var = self.tape.leaf(np.zeros(lanes), role="input coordinate t")
        self.label_var: VarId | None = None
        if kind == COLLOCATION:
            pj = problem.record_jets(
                self.tape, self.x_vars, self.t_var,
                lambda tp, ins: network.forward(tp, self.leaves, ins),
            )
            r = problem.residual(pj)
            self.loss_var = self.tape.mul(r, r)
        else:
            out = network.forward(self.tape, self.leaves,
                                  list(self.x_vars) + [self.t_var])
            u = out.coeffs[0]
            self.label_var = self.tape.leaf(np.zeros(lanes), role="label")
            err = self.tape.sub(u, self.label_var)
            self.loss_var = self.tape.mul(err, err)
        self.param_rows = self.leaves.flat_rows
        self.coord_rows = np.asarray(
            [v.index for v in self.x_vars] + [self.t_var.index], np.int64
        )

    def set_params(self, flat: np.ndarray) -> None:
        self.tape.set_leaf_rows(self.param_rows, flat)

    def set_points(self, coords: np.ndarray, labels: np.ndarray) -> None:
        """coords has one row per point: (x_1..x_d, t)."""
        self.tape.set_leaf_rows(self.coord_rows, coords.T.copy())
        if self.label_var is not None:
            self.tape.set_leaf(self.label_var, labels)

    def loss_rows(self) -> np.ndarray:
        self.tape.forward(check=False)
        return self.tape.values_at(np.asarray([self.loss_var.index]))[0]

    def gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """(per-lane coordinate grads (n, d+1), summed parameter grads)."""
        adj = self.tape.backward_raw(self.loss_var)
        coord = adj[self.coord_rows, :].T.copy()
        param = adj[self.param_rows, :].sum(axis=1)
        return coord, param

    def coord_gradients(self) -> np.ndarray:
        adj = self.tape.backward_raw(self.loss_var)
        return adj[self.coord_rows, :].T.copy()


def _capacity_hint(problem: ProblemSpec, mlp: Mlp, kind: str) -> int:
    macs = sum(a * b + b for a, b in
               zip(mlp.layer_sizes[:-1], mlp.layer_sizes[1:]))
    hidden = sum(mlp.layer_sizes[1:-1])
    if kind != COLLOCATION:
        return 4 * macs + 8 * hidden + 256
    k = problem.max_x_order + 1
    per_pass = 2 * k * macs + 3 * k * k * hidden
    return int(1.25 * (problem.d * per_pass + 5 * macs + 512)) + 64


def _labels_for(problem: ProblemSpec, kind: str,
                coords: np.ndarray) -> np.ndarray:
    """Ground-truth labels at given coordinates (recomputed, not stored)."""
    n, w = coords.shape
    xs, ts = coords[:, : w - 1], coords[:, w - 1]
    if kind == COLLOCATION:
        return np.zeros(n)
    if kind == BOUNDARY:
        return problem.exact(xs, ts)
    if kind == INITIAL:
        return problem.exact(xs, np.zeros(n))
    raise TrainingError(f"no labels for kind {kind!r}")


def _free_mask(kind: str, faces, n: int, d: int) -> np.ndarray:
    """Which coordinates a perturbation may move; fixed ones stay put."""
    mask = np.ones((n, d + 1), bool)
    if kind == INITIAL:
        mask[:, d] = False
    elif kind == BOUNDARY:
        for i, face in enumerate(faces):
            if face is None:
                raise TrainingError("boundary point lacks its face tag")
            mask[i, face[0]] = False
    return mask


def _clean_arrays(sample_set: SampleSet):
    """Per-kind clean coordinates and face tags, in fixed kind order."""
    out = {}
    for kind in _TRAIN_KINDS:
        pts = sample_set.by_kind(kind)
        if not pts:
            continue
        coords = np.stack([p.coords() for p in pts])
        faces = [p.face for p in pts]
        out[kind] = (coords, faces)
    return out


# -- public per-point operations ----------------------------------------------


@dataclass
class PointLoss:
    """Pointwise loss recorded on its own tape (single lane)."""

    tape: Tape
    var: VarId
    coord_vars: list[VarId]

    @property
    def value(self) -> float:
        v = self.tape.value(self.var)
        return float(v if np.ndim(v) == 0 else v[0])


def pointwise_loss(problem: ProblemSpec, net: Mlp,
                   point: SamplePoint) -> PointLoss:
    """Squared residual at collocation points, squared label mismatch at
    boundary/initial points, recorded on a fresh tape."""
    if point.kind not in _TRAIN_KINDS:
        raise TrainingError(f"invalid point kind {point.kind!r}")
    prog = _KindProgram(problem, net, point.kind, lanes=1)
    prog.set_params(net.flat_params())
    coords = point.coords()[None, :]
    prog.set_points(coords, np.asarray([point.label]))
    prog.tape.forward(check=True)
    return PointLoss(prog.tape, prog.loss_var,
                     list(prog.x_vars) + [prog.t_var])


def gaussian_perturb(problem: ProblemSpec, point: SamplePoint, sigma: float,
                     rng) -> SamplePoint:
    """Add N(0, sigma^2) noise to every free coordinate, clamp to the
    domain closure, and recompute the label at the new location."""
    if sigma < 0:
        raise TrainingError("sigma must be >= 0")
    rng = np.random.default_rng(rng)
    d = problem.d
    coords = point.coords()[None, :]
    mask = _free_mask(point.kind, [point.face], 1, d)
    noise = rng.standard_normal((1, d + 1)) * sigma
    noise[~mask] = 0.0
    coords = problem.clamp(coords + noise)
    label = float(_labels_for(problem, point.kind, coords)[0])
    return SamplePoint(coords[0, :d].copy(), float(coords[0, d]),
                       point.kind, label, point.face)


def pgd_attack(problem: ProblemSpec, net: Mlp, point: SamplePoint,
               eps: float, alpha: float, steps: int) -> SamplePoint:
    """Projected sign-ascent on the pointwise loss over the point's free
    coordinates, with the label recomputed at the perturbed location."""
    if eps < 0 or steps < 1:
        raise TrainingError("need eps >= 0 and steps >= 1")
    prog = _KindProgram(problem, net, point.kind, lanes=1)
    prog.set_params(net.flat_params())
    coords, labels = _pgd_batch(
        prog, problem, point.kind, point.coords()[None, :], [point.face],
        eps, alpha, steps,
    )
    return SamplePoint(coords[0, :problem.d].copy(),
                       float(coords[0, problem.d]),
                       point.kind, float(labels[0]), point.face)


def _pgd_batch(prog: _KindProgram, problem: ProblemSpec, kind: str,
               clean: np.ndarray, faces, eps: float, alpha: float,
               steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched attack; returns perturbed coordinates and fresh labels.

    delta is projected onto the eps-box after every step and the point
    onto the domain closure; lanes that ever see a non-finite gradient
    revert to their clean coordinates.
    """
    n, w = clean.shape
    free = _free_mask(kind, faces, n, w - 1)
    delta = np.zeros_like(clean)
    bad = np.zeros(n, bool)
    for _ in range(steps):
        coords = problem.clamp(clean + delta)
        prog.set_points(coords, _labels_for(problem, kind, coords))
        prog.tape.forward(check=False)
        grads = prog.coord_gradients()
        finite = np.isfinite(grads).all(axis=1)
        bad |= ~finite
        step = alpha * np.sign(grads)
        step[~free] = 0.0
        step[bad] = 0.0
        delta = np.clip(delta + step, -eps, eps)
    coords = problem.clamp(clean + delta)
    if bad.any():
        coords[bad] = clean[bad]
        log.warning("attack aborted for %d point(s) with non-finite "
                    "gradients; returned unperturbed", int(bad.sum()))
    return coords, _labels_for(problem, kind, coords)


# -- composite loss -----------------------------------------------------------


def composite_loss(problem: ProblemSpec, net: Mlp, sample_set: SampleSet,
                   lambda_wd: float = 0.0,
                   weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
                   ) -> LossBreakdown:
    """Per-kind mean squared losses plus lambda * ||theta||^2."""
    flat = net.flat_params()
    mses = {}
    for kind, w in zip(_TRAIN_KINDS, weights):
        pts = sample_set.by_kind(kind)
        if not pts:
            if w != 0.0:
                raise TrainingError(
                    f"sample set has no {kind} points but weight {w} != 0"
                )
            mses[kind] = 0.0
            continue
        prog = _KindProgram(problem, net, kind, lanes=len(pts))
        prog.set_params(flat)
        coords = np.stack([p.coords() for p in pts])
        prog.set_points(coords, np.asarray([p.label for p in pts]))
        mses[kind] = float(prog.loss_rows().mean())
    return _assemble_breakdown(mses, flat, lambda_wd, weights)


def _assemble_breakdown(mses: dict, flat: np.ndarray, lambda_wd: float,
                        weights) -> LossBreakdown:
    wd = float(lambda_wd) * float(flat @ flat)
    total = (weights[0] * mses[COLLOCATION] + weights[1] * mses[BOUNDARY]
             + weights[2] * mses[INITIAL] + wd)
    return LossBreakdown(mses[COLLOCATION], mses[BOUNDARY], mses[INITIAL],
                         wd, total)


def evaluate(problem: ProblemSpec, net: Mlp, test_set: SampleSet) -> float:
    """Mean squared error of the network against exact-solution labels."""
    pts = test_set.points
    if not pts:
        raise TrainingError("empty test set")
    coords = np.stack([p.coords() for p in pts])
    labels = np.asarray([p.label for p in pts])
    pred = net.predict(coords)
    return float(np.mean((pred - labels) ** 2))


# -- training loop -------------------------------------------------------------


@dataclass
class RunMetrics:
    seed: int
    epochs_run: int
    diverged: bool
    residual_mse: np.ndarray
    boundary_mse: np.ndarray
    initial_mse: np.ndarray
    wd_penalty: np.ndarray
    total: np.ndarray
    test_epochs: list[int]
    test_mse: list[float]
    final_train_loss: float
    final_test_mse: float
    runtime_s: float


def train(problem: ProblemSpec, net: Mlp, train_set: SampleSet,
          test_set: SampleSet, config: TrainConfig) -> tuple[Mlp, RunMetrics]:
    """Full-batch training under the configured regime.

    Each epoch re-derives that epoch's sample positions from the clean
    set (identity, Gaussian noise, or a fresh attack), evaluates the
    composite loss there, and applies one Adam update. Divergence stops
    the loop and flags the metrics instead of raising.
    """
    t_start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    flat = net.flat_params().copy()
    clean = _clean_arrays(train_set)
    if COLLOCATION not in clean:
        raise TrainingError("training set has no collocation points")
    kind_weights = {
        COLLOCATION: config.w_residual,
        BOUNDARY: config.w_boundary,
        INITIAL: config.w_initial,
    }
    for kind in _TRAIN_KINDS:
        if kind not in clean and kind_weights[kind] != 0.0:
            raise TrainingError(
                f"sample set has no {kind} points but weight "
                f"{kind_weights[kind]} != 0"
            )
    programs = {
        kind: _KindProgram(problem, net, kind, lanes=arr[0].shape[0])
        for kind, arr in clean.items()
    }
    adam = AdamState(flat.size)
    lam = config.effective_lambda
    weights = (config.w_residual, config.w_boundary, config.w_initial)

    series = {name: np.zeros(config.epochs) for name in
              ("residual_mse", "boundary_mse", "initial_mse",
               "wd_penalty", "total")}
    test_epochs: list[int] = []
    test_mse: list[float] = []
    diverged = False
    epochs_run = 0

    for epoch in range(1, config.epochs + 1):
        for prog in programs.values():
            prog.set_params(flat)

        grad = 2.0 * lam * flat
        mses = {kind: 0.0 for kind in _TRAIN_KINDS}
        for kind in _TRAIN_KINDS:
            if kind not in programs:
                continue
            prog = programs[kind]
            coords, faces = clean[kind]
            if config.regime == "gaussian":
                mask = _free_mask(kind, faces, coords.shape[0], problem.d)
                noise = rng.standard_normal(coords.shape) \
                    * config.effective_sigma
                noise[~mask] = 0.0
                coords = problem.clamp(coords + noise)
                labels = _labels_for(problem, kind, coords)
            elif config.adversarial:
                coords, labels = _pgd_batch(
                    prog, problem, kind, coords, faces, config.eps,
                    config.effective_pgd_alpha, config.pgd_steps,
                )
            else:
                labels = _labels_for(problem, kind, coords)
            prog.set_points(coords, labels)
            rows = prog.loss_rows()
            mses[kind] = float(rows.mean())
            _, param_grad = prog.gradients()
            grad += (kind_weights[kind] / rows.size) * param_grad

        bd = _assemble_breakdown(mses, flat, lam, weights)
        epochs_run = epoch
        idx = epoch - 1
        series["residual_mse"][idx] = bd.residual_mse
        series["boundary_mse"][idx] = bd.boundary_mse
        series["initial_mse"][idx] = bd.initial_mse
        series["wd_penalty"][idx] = bd.wd_penalty
        series["total"][idx] = bd.total

        if (not np.isfinite(bd.total)
                or bd.total > config.divergence_threshold
                or not np.isfinite(grad).all()):
            diverged = True
            log.warning("divergence at epoch %d (total=%.3e); stopping",
                        epoch, bd.total)
            break

        flat = adam.step(flat, grad, config.learning_rate)

        if epoch % config.eval_interval == 0 or epoch == config.epochs:
            test_epochs.append(epoch)
            test_mse.append(evaluate(problem, net.with_params(flat),
                                     test_set))

    trained = net.with_params(flat)
    if not test_epochs or test_epochs[-1] != epochs_run:
        test_epochs.append(epochs_run)
        test_mse.append(evaluate(problem, trained, test_set))
    metrics = RunMetrics(
        seed=config.seed,
        epochs_run=epochs_run,
        diverged=diverged,
        residual_mse=series["residual_mse"][:epochs_run].copy(),
        boundary_mse=series["boundary_mse"][:epochs_run].copy(),
        initial_mse=series["initial_mse"][:epochs_run].copy(),
        wd_penalty=series["wd_penalty"][:epochs_run].copy(),
        total=series["total"][:epochs_run].copy(),
        test_epochs=test_epochs,
        test_mse=test_mse,
        final_train_loss=float(series["total"][epochs_run - 1]),
        final_test_mse=test_mse[-1],
        runtime_s=time.perf_counter() - t_start,
    )
    return trained, metrics
