"""Scalar reverse-mode automatic differentiation on a recorded tape.

Every value in a computation is one node: a leaf (weight, bias, input
coordinate, constant) or a primitive applied to at most two earlier
nodes. Recording is append-only, so node indices are already a
topological order and one reverse sweep yields the exact derivative of
an output with respect to every leaf.

A tape can carry several *lanes*: the same scalar program evaluated in
lockstep for many sample points. Lane k never mixes with lane j, so a
batched tape behaves exactly like that many independent scalar tapes;
any cross-lane reduction (say, summing per-point gradients) is the
caller's job and must use a fixed order.

After recording, leaf rows may be rebound with new values and the whole
program re-evaluated in place (`set_leaf` / `forward`), which is how the
training loop re-runs one recorded loss under perturbed inputs or
updated weights without paying the recording cost again.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k

_TOKENS = itertools.count(1)

_UNARY = {"neg", "sin", "cos", "exp", "tanh"}
_BINARY = {"add", "sub", "mul", "div"}


class TapeError(ValueError):
    """Recording or evaluation violated a tape contract."""


@dataclass(frozen=True, slots=True)
class VarId:
    """Handle for one tape node; valid only on the tape that issued it."""

    index: int
    tape_token: int


@dataclass(frozen=True)
class NodeView:
    """Read-only view of a recorded node, partials included."""

    index: int
    opcode: str
    inputs: tuple[int, ...]
    value: float | np.ndarray
    partials: tuple


class AdjointBuffer:
    """Adjoints for every node of a tape after one reverse sweep."""

    def __init__(self, tape: "Tape", values: np.ndarray):
        self._tape = tape
        self._values = values

    def __len__(self) -> int:
        return self._values.shape[0]

    def grad(self, var: VarId) -> float | np.ndarray:
        self._tape._check_var(var)
        row = self._values[var.index]
        return float(row[0]) if self._tape.scalar else row.copy()

    @property
    def values(self) -> np.ndarray:
        return self._values


class Tape:
    """Append-only record of a scalar computation.

    ``lanes=None`` gives a plain scalar tape (floats in, floats out);
    an integer runs that many independent copies of the program in
    lockstep, one lane per sample point.
    """

    def __init__(self, lanes: int | None = None, capacity: int = 64):
        if lanes is not None and lanes < 1:
            raise TapeError("lane count must be >= 1")
        self.scalar = lanes is None
        self.lanes = 1 if lanes is None else int(lanes)
        self._token = next(_TOKENS)
        self._n = 0
        cap = max(64, int(capacity))
        self._op = np.zeros(cap, np.int8)
        self._ia = np.zeros(cap, np.int32)
        self._ib = np.zeros(cap, np.int32)
        self._aux = np.zeros(cap, np.float64)
        self._vals = np.zeros((cap, self.lanes), np.float64)
        self._leaf_rows: list[int] = []
        self._leaf_rows_arr: np.ndarray | None = None
        self._roles: dict[int, str] = {}
        self._consts: dict[float, VarId] = {}
        self._adj: np.ndarray | None = None
        self._adj_clean = False

    # -- bookkeeping ----------------------------------------------------

    def __len__(self) -> int:
        return self._n

    @property
    def n_nodes(self) -> int:
        return self._n

    def _grow(self) -> None:
        cap = self._op.shape[0] * 2
        self._op = np.resize(self._op, cap)
        self._ia = np.resize(self._ia, cap)
        self._ib = np.resize(self._ib, cap)
        self._aux = np.resize(self._aux, cap)
        vals = np.zeros((cap, self.lanes), np.float64)
        vals[: self._n] = self._vals[: self._n]
        self._vals = vals
        self._adj = None

    def _check_var(self, var: VarId) -> None:
        if not isinstance(var, VarId) or var.tape_token != self._token:
            raise TapeError("variable does not belong to this tape")
        if not 0 <= var.index < self._n:
            raise TapeError(f"variable index {var.index} out of range")

    def _coerce_row(self, value) -> np.ndarray:
        arr = np.asarray(value, np.float64)
        if arr.ndim == 0:
            return np.full(self.lanes, float(arr))
        if arr.shape != (self.lanes,):
            raise TapeError(
                f"expected scalar or shape ({self.lanes},), got {arr.shape}"
            )
        return arr

    # -- recording ------------------------------------------------------

    def leaf(self, value, role: str = "leaf") -> VarId:
        """Record an input node. Its adjoint after backward is d(out)/d(leaf)."""
        row = self._coerce_row(value)
        if not np.isfinite(row).all():
            raise TapeError(f"non-finite value for {role} leaf")
        if self._n == self._op.shape[0]:
            self._grow()
        i = self._n
        self._op[i] = _k.LEAF
        self._vals[i] = row
        self._n += 1
        self._leaf_rows.append(i)
        self._leaf_rows_arr = None
        self._roles[i] = role
        return VarId(i, self._token)

    def const(self, value: float) -> VarId:
        """Interned constant leaf (one node per distinct value)."""
        value = float(value)
        got = self._consts.get(value)
        if got is None:
            got = self.leaf(value, role="const")
            self._consts[value] = got
        return got

    def _record(self, op: int, a: VarId, b: VarId | None = None,
                aux: float = 0.0) -> VarId:
        self._check_var(a)
        if b is not None:
            self._check_var(b)
        if self._n == self._op.shape[0]:
            self._grow()
        i = self._n
        self._op[i] = op
        self._ia[i] = a.index
        self._ib[i] = 0 if b is None else b.index
        self._aux[i] = aux
        va = self._vals[a.index]
        vb = self._vals[self._ib[i]]
        out = self._vals[i]
        if op == _k.ADD:
            np.add(va, vb, out=out)
        elif op == _k.SUB:
            np.subtract(va, vb, out=out)
        elif op == _k.MUL:
            np.multiply(va, vb, out=out)
        elif op == _k.DIV:
            if np.any(vb == 0.0):
                raise TapeError(f"division by zero at node {i}")
            np.divide(va, vb, out=out)
        elif op == _k.NEG:
            np.negative(va, out=out)
        elif op == _k.SIN:
            np.sin(va, out=out)
        elif op == _k.COS:
            np.cos(va, out=out)
        elif op == _k.EXP:
            np.exp(va, out=out)
        elif op == _k.TANH:
            np.tanh(va, out=out)
        elif op == _k.POWI:
            np.power(va, int(aux), out=out)
        elif op == _k.SCALE:
            np.multiply(va, aux, out=out)
        if not np.isfinite(out).all():
            name = _k.OP_NAMES[op]
            raise TapeError(f"non-finite result from {name} at node {i}")
        self._n += 1
        return VarId(i, self._token)

    def add(self, a: VarId, b: VarId) -> VarId:
        return self._record(_k.ADD, a, b)

    def sub(self, a: VarId, b: VarId) -> VarId:
        return self._record(_k.SUB, a, b)

    def mul(self, a: VarId, b: VarId) -> VarId:
        return self._record(_k.MUL, a, b)

    def div(self, a: VarId, b: VarId) -> VarId:
        return self._record(_k.DIV, a, b)

    def neg(self, a: VarId) -> VarId:
        return self._record(_k.NEG, a)

    def sin(self, a: VarId) -> VarId:
        return self._record(_k.SIN, a)

    def cos(self, a: VarId) -> VarId:
        return self._record(_k.COS, a)

    def exp(self, a: VarId) -> VarId:
        return self._record(_k.EXP, a)

    def tanh(self, a: VarId) -> VarId:
        return self._record(_k.TANH, a)

    def powi(self, a: VarId, exponent: int) -> VarId:
        return self._record(_k.POWI, a, aux=float(int(exponent)))

    def scale(self, a: VarId, factor: float) -> VarId:
        return self._record(_k.SCALE, a, aux=float(factor))

    def apply(self, op: str, *args: VarId, exponent: int | None = None,
              factor: float | None = None) -> VarId:
        """Generic entry point over the fixed primitive set."""
        if op in _BINARY:
            if len(args) != 2:
                raise TapeError(f"{op} takes two arguments")
            return getattr(self, op)(*args)
        if op in _UNARY:
            if len(args) != 1:
                raise TapeError(f"{op} takes one argument")
            return getattr(self, op)(*args)
        if op == "powi":
            if len(args) != 1 or exponent is None:
                raise TapeError("powi takes one argument and an exponent")
            return self.powi(args[0], exponent)
        if op == "scale":
            if len(args) != 1 or factor is None:
                raise TapeError("scale takes one argument and a factor")
            return self.scale(args[0], factor)
        raise TapeError(f"unknown primitive {op!r}")

    # -- values ----------------------------------------------------------

    def value(self, var: VarId) -> float | np.ndarray:
        self._check_var(var)
        row = self._vals[var.index]
        return float(row[0]) if self.scalar else row.copy()

    def set_leaf(self, var: VarId, value) -> None:
        """Rebind a leaf value; dependent nodes refresh on `forward`."""
        self._check_var(var)
        if self._op[var.index] != _k.LEAF:
            raise TapeError("set_leaf target is not a leaf")
        row = self._coerce_row(value)
        if not np.isfinite(row).all():
            role = self._roles.get(var.index, "leaf")
            raise TapeError(f"non-finite value for {role} leaf")
        self._vals[var.index] = row

    def set_leaf_rows(self, rows: np.ndarray, values: np.ndarray) -> None:
        """Bulk leaf rebind; `rows` must index leaf nodes only."""
        if not np.isfinite(values).all():
            raise TapeError("non-finite value in bulk leaf assignment")
        if values.ndim == 1:
            self._vals[rows] = values[:, None]
        else:
            self._vals[rows] = values

    def leaf_indices(self, vars: list[VarId]) -> np.ndarray:
        out = np.empty(len(vars), np.int64)
        for j, v in enumerate(vars):
            self._check_var(v)
            if self._op[v.index] != _k.LEAF:
                raise TapeError("leaf_indices argument is not a leaf")
            out[j] = v.index
        return out

    def values_at(self, rows: np.ndarray) -> np.ndarray:
        return self._vals[rows].copy()

    # -- evaluation -------------------------------------------------------

    def forward(self, check: bool = True) -> None:
        """Recompute every non-leaf row from the current leaf values."""
        n = self._n
        _k.forward(self._op, self._ia, self._ib, self._aux, self._vals, n)
        if check:
            bad = _k.first_nonfinite(self._vals, n)
            if bad >= 0:
                name = _k.OP_NAMES[self._op[bad]]
                raise TapeError(f"non-finite value from {name} at node {bad}")

    def first_nonfinite_node(self) -> int:
        return int(_k.first_nonfinite(self._vals, self._n))

    def backward(self, out: VarId, check: bool = True) -> AdjointBuffer:
        """Reverse sweep from `out`; adjoint of each leaf is d(out)/d(leaf)."""
        self._check_var(out)
        adj = np.zeros((self._n, self.lanes), np.float64)
        _k.backward(self._op, self._ia, self._ib, self._aux,
                    self._vals, adj, out.index, True)
        if check:
            bad = _k.first_nonfinite(adj, self._n)
            if bad >= 0:
                raise TapeError(f"non-finite adjoint at node {bad}")
        return AdjointBuffer(self, adj)

    def backward_raw(self, out: VarId) -> np.ndarray:
        """Fast reverse sweep for the training loop.

        Reuses one persistent buffer and clears internal rows as they are
        consumed, so only leaf rows hold adjoints afterwards. No finite
        check: callers inspect the rows they read.
        """
        self._check_var(out)
        if self._adj is None or self._adj.shape[0] < self._n:
            self._adj = np.zeros((self._op.shape[0], self.lanes), np.float64)
            self._adj_clean = True
        if not self._adj_clean:
            if self._leaf_rows_arr is None:
                self._leaf_rows_arr = np.asarray(self._leaf_rows, np.int64)
            _k.zero_rows(self._adj, self._leaf_rows_arr)
        _k.backward(self._op, self._ia, self._ib, self._aux,
                    self._vals, self._adj, out.index, False)
        self._adj_clean = False
        return self._adj

    # -- inspection --------------------------------------------------------

    def node(self, index: int) -> NodeView:
        """Node record with value and local partial derivatives."""
        if not 0 <= index < self._n:
            raise TapeError(f"node index {index} out of range")
        op = int(self._op[index])
        name = _k.OP_NAMES[op]
        a, b = int(self._ia[index]), int(self._ib[index])
        v = self._vals[index]
        va = self._vals[a]
        unpack = (lambda r: float(r[0])) if self.scalar else (lambda r: r.copy())
        if op == _k.LEAF:
            return NodeView(index, name, (), unpack(v), ())
        if op == _k.ADD:
            parts = (np.ones(self.lanes), np.ones(self.lanes))
        elif op == _k.SUB:
            parts = (np.ones(self.lanes), -np.ones(self.lanes))
        elif op == _k.MUL:
            parts = (self._vals[b].copy(), va.copy())
        elif op == _k.DIV:
            parts = (1.0 / self._vals[b], -v / self._vals[b])
        elif op == _k.NEG:
            parts = (-np.ones(self.lanes),)
        elif op == _k.SIN:
            parts = (np.cos(va),)
        elif op == _k.COS:
            parts = (-np.sin(va),)
        elif op == _k.EXP:
            parts = (v.copy(),)
        elif op == _k.TANH:
            parts = (1.0 - v * v,)
        elif op == _k.POWI:
            p = int(self._aux[index])
            parts = (np.zeros(self.lanes) if p == 0 else p * va ** (p - 1),)
        else:  # SCALE
            parts = (np.full(self.lanes, self._aux[index]),)
        inputs = (a,) if op in (_k.NEG, _k.SIN, _k.COS, _k.EXP, _k.TANH,
                                _k.POWI, _k.SCALE) else (a, b)
        return NodeView(index, name, inputs, unpack(v),
                        tuple(unpack(p) for p in parts))

    def role(self, var: VarId) -> str | None:
        return self._roles.get(var.index)
