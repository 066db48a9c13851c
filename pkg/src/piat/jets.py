"""Truncated Taylor (jet) arithmetic recorded on an autodiff tape.

A jet stores normalized coefficients c_k = u^(k)(x)/k!, so the k-th
derivative is k! * c_k; normalization keeps coefficient magnitudes tame
even at order 7 or 8. Coefficients are tape variables (or plain floats
when a coefficient is structurally constant, which costs no tape nodes),
so every extracted derivative stays differentiable with respect to both
network weights and the expansion point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .tape import Tape, TapeError, VarId

Coeff = VarId | float


class JetError(ValueError):
    """Jet arithmetic contract violation (order or tape mismatch)."""


def _add(tape: Tape, a: Coeff, b: Coeff) -> Coeff:
    if isinstance(a, VarId):
        if isinstance(b, VarId):
            return tape.add(a, b)
        return a if b == 0.0 else tape.add(a, tape.const(b))
    if isinstance(b, VarId):
        return b if a == 0.0 else tape.add(tape.const(a), b)
    return a + b


def _sub(tape: Tape, a: Coeff, b: Coeff) -> Coeff:
    if isinstance(a, VarId):
        if isinstance(b, VarId):
            return tape.sub(a, b)
        return a if b == 0.0 else tape.sub(a, tape.const(b))
    if isinstance(b, VarId):
        return tape.neg(b) if a == 0.0 else tape.sub(tape.const(a), b)
    return a - b


def _mul(tape: Tape, a: Coeff, b: Coeff) -> Coeff:
    if isinstance(a, VarId) and isinstance(b, VarId):
        return tape.mul(a, b)
    if isinstance(a, VarId):
        return _scale(tape, a, b)
    if isinstance(b, VarId):
        return _scale(tape, b, a)
    return a * b


def _scale(tape: Tape, a: Coeff, c: float) -> Coeff:
    if not isinstance(a, VarId):
        return a * c
    if c == 0.0:
        return 0.0
    if c == 1.0:
        return a
    return tape.scale(a, c)


@dataclass
class Jet:
    """Truncated Taylor polynomial; coeffs[k] is u^(k)/k!."""

    tape: Tape
    coeffs: list[Coeff]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def _check_pair(self, other: "Jet") -> None:
        if self.tape is not other.tape:
            raise JetError("jets belong to different tapes")
        if self.order != other.order:
            raise JetError(
                f"jet order mismatch: {self.order} vs {other.order}"
            )

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check_pair(other)
            return Jet(self.tape, [
                _add(self.tape, a, b)
                for a, b in zip(self.coeffs, other.coeffs)
            ])
        if isinstance(other, (int, float)):
            out = list(self.coeffs)
            out[0] = _add(self.tape, out[0], float(other))
            return Jet(self.tape, out)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check_pair(other)
            return Jet(self.tape, [
                _sub(self.tape, a, b)
                for a, b in zip(self.coeffs, other.coeffs)
            ])
        if isinstance(other, (int, float)):
            return self + (-float(other))
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            return (-self) + float(other)
        return NotImplemented

    def __neg__(self):
        return Jet(self.tape, [
            _scale(self.tape, c, -1.0) if isinstance(c, VarId) else -c
            for c in self.coeffs
        ])

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check_pair(other)
            t = self.tape
            a, b = self.coeffs, other.coeffs
            out: list[Coeff] = []
            for k in range(len(a)):
                acc: Coeff = 0.0
                for i in range(k + 1):
                    acc = _add(t, acc, _mul(t, a[i], b[k - i]))
                out.append(acc)
            return Jet(t, out)
        if isinstance(other, (int, float)):
            return Jet(self.tape, [
                _scale(self.tape, c, float(other)) for c in self.coeffs
            ])
        return NotImplemented

    __rmul__ = __mul__

    def coeff_value(self, k: int) -> float:
        """Lane-0 value of coefficient k (tests and diagnostics)."""
        c = self.coeffs[k]
        if isinstance(c, VarId):
            v = self.tape.value(c)
            return float(v if self.tape.scalar else v[0])
        return float(c)


def seed(tape: Tape, x: VarId, order: int) -> Jet:
    """Jet of the identity at x: [x, 1, 0, ..., 0].

    The slope coefficient is an exact constant, so derivatives with
    respect to the expansion point flow through coefficient 0 alone.
    """
    if order < 0:
        raise JetError("jet order must be >= 0")
    coeffs: list[Coeff] = [x]
    if order >= 1:
        coeffs.append(1.0)
        coeffs.extend(0.0 for _ in range(order - 1))
    return Jet(tape, coeffs)


def lift(tape: Tape, v: Coeff, order: int) -> Jet:
    """Constant-in-x jet for a scalar (weight, frozen coordinate, number)."""
    if order < 0:
        raise JetError("jet order must be >= 0")
    coeffs: list[Coeff] = [v]
    coeffs.extend(0.0 for _ in range(order))
    return Jet(tape, coeffs)


def truncate(a: Jet, order: int) -> Jet:
    if order > a.order:
        raise JetError(f"cannot truncate order {a.order} jet to {order}")
    return Jet(a.tape, list(a.coeffs[: order + 1]))


def extract(a: Jet, k: int) -> VarId:
    """k-th derivative (k! * c_k) as a tape variable."""
    if k > a.order:
        raise JetError(f"derivative order {k} exceeds jet order {a.order}")
    c = a.coeffs[k]
    fact = math.factorial(k)
    if isinstance(c, VarId):
        return c if fact == 1 else a.tape.scale(c, float(fact))
    return a.tape.const(fact * c)


def shift_derivative(a: Jet, m: int) -> Jet:
    """Jet of u^(m), order reduced by m: d_k = (k+m)!/k! * c_{k+m}."""
    if m > a.order:
        raise JetError(f"shift by {m} exceeds jet order {a.order}")
    if m == 0:
        return Jet(a.tape, list(a.coeffs))
    t = a.tape
    out: list[Coeff] = []
    for k in range(a.order - m + 1):
        fct = math.factorial(k + m) / math.factorial(k)
        out.append(_scale(t, a.coeffs[k + m], fct))
    return Jet(t, out)


def _derivative_convolution(tape, u, other, k, sign=1.0):
    """sum_{j=1..k} (j/k) * u_j * other_{k-j}, the series form of f' = g * u'."""
    acc: Coeff = 0.0
    for j in range(1, k + 1):
        term = _mul(tape, u[j], other[k - j])
        acc = _add(tape, acc, _scale(tape, term, sign * j / k))
    return acc


def tanh(a: Jet) -> Jet:
    """tanh through the jet via y' = (1 - y^2) u'."""
    t = a.tape
    u = a.coeffs
    k_max = a.order
    y0 = t.tanh(u[0]) if isinstance(u[0], VarId) else math.tanh(u[0])
    y: list[Coeff] = [y0]
    # v = 1 - y^2, built alongside y one order at a time
    v: list[Coeff] = [_sub(t, 1.0, _mul(t, y0, y0))]
    for k in range(1, k_max + 1):
        y.append(_derivative_convolution(t, u, v, k))
        if k < k_max:
            sq: Coeff = 0.0
            for i in range(k + 1):
                sq = _add(t, sq, _mul(t, y[i], y[k - i]))
            v.append(_scale(t, sq, -1.0))
    return Jet(t, y)


def exp(a: Jet) -> Jet:
    t = a.tape
    u = a.coeffs
    e0 = t.exp(u[0]) if isinstance(u[0], VarId) else math.exp(u[0])
    e: list[Coeff] = [e0]
    for k in range(1, a.order + 1):
        e.append(_derivative_convolution(t, u, e, k))
    return Jet(t, e)


def _sin_cos(a: Jet) -> tuple[Jet, Jet]:
    t = a.tape
    u = a.coeffs
    if isinstance(u[0], VarId):
        s0: Coeff = t.sin(u[0])
        c0: Coeff = t.cos(u[0])
    else:
        s0, c0 = math.sin(u[0]), math.cos(u[0])
    s: list[Coeff] = [s0]
    c: list[Coeff] = [c0]
    for k in range(1, a.order + 1):
        s.append(_derivative_convolution(t, u, c, k))
        c.append(_derivative_convolution(t, u, s, k, sign=-1.0))
    return Jet(t, s), Jet(t, c)


def sin(a: Jet) -> Jet:
    return _sin_cos(a)[0]


def cos(a: Jet) -> Jet:
    return _sin_cos(a)[1]
