"""Fully-connected approximator with flat parameter access.

The net maps (x_1..x_d, t) to a single output through tanh hidden
layers; tanh is smooth to all orders, which the residual operators rely
on when they push jets of order up to 8 through a forward pass. The
forward pass can run on jets, so one evaluation yields the output and
its derivatives in the seeded coordinate while staying differentiable
with respect to every weight.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import jets
from .jets import Jet
from .tape import Tape, VarId

_MAGIC = b"PIATNET1"
_FORMAT_VERSION = 1


class NetworkError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class Mlp:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]   # per layer, shape (n_out, n_in)
    biases: list[np.ndarray]    # per layer, shape (n_out,)
    activation: str = "tanh"
    init_seed: int = 0
    # Affine input map onto [-1, 1] per coordinate; (-1, 1) bounds give
    # the identity. Keeps tanh layers out of saturation on wide domains
    # and tames high-order derivative magnitudes.
    in_lo: np.ndarray | None = None
    in_hi: np.ndarray | None = None

    def __post_init__(self):
        width = self.layer_sizes[0]
        if self.in_lo is None:
            self.in_lo = np.full(width, -1.0)
        if self.in_hi is None:
            self.in_hi = np.full(width, 1.0)
        self.in_lo = np.asarray(self.in_lo, np.float64)
        self.in_hi = np.asarray(self.in_hi, np.float64)
        if self.in_lo.shape != (width,) or self.in_hi.shape != (width,):
            raise NetworkError("input bounds must match the input width")
        if np.any(self.in_hi <= self.in_lo):
            raise NetworkError("input bounds must satisfy lo < hi")

    @property
    def d(self) -> int:
        """Spatial dimension: input width minus the time coordinate."""
        return self.layer_sizes[0] - 1

    def input_affine(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-input scale a and offset b with s(x) = a*x + b in [-1, 1]."""
        a = 2.0 / (self.in_hi - self.in_lo)
        b = -(self.in_hi + self.in_lo) / (self.in_hi - self.in_lo)
        return a, b

    @property
    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def flat_params(self) -> np.ndarray:
        """All weights (layer-major, row-major), then all biases."""
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b for b in self.biases]
        )

    def with_params(self, flat: np.ndarray) -> "Mlp":
        if flat.shape != (self.param_count,):
            raise NetworkError(
                f"parameter vector has length {flat.shape}, "
                f"expected {self.param_count}"
            )
        weights, biases = [], []
        pos = 0
        for w in self.weights:
            weights.append(flat[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
        for b in self.biases:
            biases.append(flat[pos:pos + b.size].copy())
            pos += b.size
        return Mlp(self.layer_sizes, weights, biases, self.activation,
                   self.init_seed, self.in_lo.copy(), self.in_hi.copy())

    def predict(self, xt: np.ndarray) -> np.ndarray:
        """Plain inference for a batch of rows (x_1..x_d, t) -> (n,).

        Matrix form of the same forward map; used for test-error and
        grid evaluation where no derivatives are needed.
        """
        h = np.atleast_2d(np.asarray(xt, np.float64))
        if h.shape[1] != self.layer_sizes[0]:
            raise NetworkError(
                f"expected input width {self.layer_sizes[0]}, got {h.shape[1]}"
            )
        a, b = self.input_affine()
        h = h * a + b
        last = len(self.weights) - 1
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if idx < last:
                np.tanh(h, out=h)
        return h[:, 0]


def init(layer_sizes: Sequence[int], seed: int,
         input_bounds: tuple | None = None) -> Mlp:
    """Glorot-uniform weights, zero biases, deterministic per seed.

    ``input_bounds`` is an optional (lo, hi) pair of per-input arrays
    defining the affine map onto [-1, 1]; omitted bounds leave inputs
    unscaled.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise NetworkError(f"invalid layer sizes {sizes}")
    if sizes[-1] != 1:
        raise NetworkError("output layer must have width 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    lo, hi = (None, None) if input_bounds is None else input_bounds
    return Mlp(sizes, weights, biases, "tanh", int(seed), lo, hi)


@dataclass
class NetLeaves:
    """Tape leaves for one registered network, plus the row order that
    matches the flat parameter layout."""

    layer_sizes: tuple[int, ...]
    weights: list[list[list[VarId]]]
    biases: list[list[VarId]]
    flat_rows: np.ndarray = field(repr=False)
    in_scale: np.ndarray = field(repr=False, default=None)
    in_offset: np.ndarray = field(repr=False, default=None)

    def flat_vars(self) -> list[VarId]:
        """Leaf handles in flat-parameter order."""
        out = [v for layer in self.weights for row in layer for v in row]
        out.extend(v for layer in self.biases for v in layer)
        return out


def register_leaves(tape: Tape, mlp: Mlp) -> NetLeaves:
    """Record every weight and bias as a tape leaf."""
    w_vars: list[list[list[VarId]]] = []
    b_vars: list[list[VarId]] = []
    rows: list[int] = []
    for li, w in enumerate(mlp.weights):
        layer = []
        for j in range(w.shape[0]):
            row = [tape.leaf(w[j, i], role=f"weight[{li}][{j},{i}]")
                   for i in range(w.shape[1])]
            rows.extend(v.index for v in row)
            layer.append(row)
        w_vars.append(layer)
    for li, b in enumerate(mlp.biases):
        layer_b = [tape.leaf(b[j], role=f"bias[{li}][{j}]")
                   for j in range(b.shape[0])]
        rows.extend(v.index for v in layer_b)
        b_vars.append(layer_b)
    a, off = mlp.input_affine()
    return NetLeaves(mlp.layer_sizes, w_vars, b_vars,
                     np.asarray(rows, np.int64), a, off)


def forward(tape: Tape, leaves: NetLeaves, inputs: Sequence[Jet | VarId]) -> Jet:
    """Record one forward pass; returns the output as a jet.

    At most one input may carry jet order > 0: higher orders in several
    coordinates at once would need a multivariate truncation, which the
    residual operators never require (they run one pass per coordinate).
    """
    sizes = leaves.layer_sizes
    if len(inputs) != sizes[0]:
        raise NetworkError(
            f"expected {sizes[0]} inputs, got {len(inputs)}"
        )
    ins: list[Jet] = [
        v if isinstance(v, Jet) else jets.lift(tape, v, 0) for v in inputs
    ]

    def active(j: Jet) -> bool:
        return any(isinstance(c, VarId) or c != 0.0 for c in j.coeffs[1:])

    if sum(active(j) for j in ins) > 1:
        raise NetworkError("only one input coordinate may carry a jet")
    order = max(j.order for j in ins)
    ins = [
        j if j.order == order
        else Jet(tape, list(j.coeffs) + [0.0] * (order - j.order))
        for j in ins
    ]
    # affine input normalization; exact through the jet coefficients
    ins = [j * float(a) + float(b)
           for j, a, b in zip(ins, leaves.in_scale, leaves.in_offset)]
    last = len(leaves.weights) - 1
    for li in range(len(leaves.weights)):
        outs: list[Jet] = []
        for j in range(sizes[li + 1]):
            acc = jets.lift(tape, leaves.biases[li][j], order)
            w_row = leaves.weights[li][j]
            for i in range(sizes[li]):
                acc = acc + jets.lift(tape, w_row[i], order) * ins[i]
            outs.append(jets.tanh(acc) if li < last else acc)
        ins = outs
    return ins[0]


def serialize(mlp: Mlp) -> bytes:
    """Checkpoint: header (version, sizes, activation, seed, d, input
    bounds) + little-endian parameter array."""
    act = mlp.activation.encode("ascii")
    head = _MAGIC
    head += struct.pack("<IIqI", _FORMAT_VERSION, mlp.d, mlp.init_seed,
                        len(mlp.layer_sizes))
    head += struct.pack(f"<{len(mlp.layer_sizes)}I", *mlp.layer_sizes)
    head += struct.pack("<B", len(act)) + act
    head += mlp.in_lo.astype("<f8").tobytes()
    head += mlp.in_hi.astype("<f8").tobytes()
    body = mlp.flat_params().astype("<f8").tobytes()
    return head + body


def deserialize(data: bytes) -> Mlp:
    """Rebuild a network from checkpoint bytes; never partially loads."""
    try:
        if data[:8] != _MAGIC:
            raise CheckpointError("bad checkpoint magic")
        pos = 8
        version, d, seed, n_sizes = struct.unpack_from("<IIqI", data, pos)
        pos += struct.calcsize("<IIqI")
        if version != _FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        sizes = struct.unpack_from(f"<{n_sizes}I", data, pos)
        pos += 4 * n_sizes
        (act_len,) = struct.unpack_from("<B", data, pos)
        pos += 1
        activation = data[pos:pos + act_len].decode("ascii")
        if len(data[pos:pos + act_len]) != act_len:
            raise CheckpointError("truncated checkpoint header")
        pos += act_len
        width = int(sizes[0]) if sizes else 0
        bounds = np.frombuffer(data, dtype="<f8", count=2 * width,
                               offset=pos)
        pos += 16 * width
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated checkpoint header: {exc}") from None
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise CheckpointError(f"invalid layer sizes {sizes}")
    if d != sizes[0] - 1:
        raise CheckpointError(
            f"header dimension {d} inconsistent with input width {sizes[0]}"
        )
    if activation != "tanh":
        raise CheckpointError(f"unknown activation tag {activation!r}")
    n_params = sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))
    n_params += sum(sizes[1:])
    body = data[pos:]
    if len(body) != 8 * n_params:
        raise CheckpointError(
            f"checkpoint payload holds {len(body)} bytes, "
            f"expected {8 * n_params}"
        )
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    template = Mlp(
        tuple(int(s) for s in sizes),
        [np.zeros((b, a)) for a, b in zip(sizes[:-1], sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
        activation,
        int(seed),
        bounds[:width].astype(np.float64),
        bounds[width:].astype(np.float64),
    )
    return template.with_params(flat)


def write_checkpoint(mlp: Mlp, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(mlp))


def read_checkpoint(path, expect_d: int | None = None) -> Mlp:
    with open(path, "rb") as fh:
        mlp = deserialize(fh.read())
    if expect_d is not None and mlp.d != expect_d:
        raise CheckpointError(
            f"checkpoint is for dimension {mlp.d}, problem needs {expect_d}"
        )
    return mlp
