"""Compiled inner loops for tape evaluation.

The tape stores one row of lane values per node; every kernel here walks
the node arrays in index order (forward) or reverse order (backward), so
results are bitwise deterministic regardless of how many lanes a tape
carries.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Opcode table. LEAF rows are inputs: their values are written by the
# caller and never recomputed.
LEAF = 0
ADD = 1
SUB = 2
MUL = 3
DIV = 4
NEG = 5
SIN = 6
COS = 7
EXP = 8
TANH = 9
POWI = 10
SCALE = 11

OP_NAMES = (
    "leaf", "add", "sub", "mul", "div", "neg",
    "sin", "cos", "exp", "tanh", "powi", "scale",
)


@njit(cache=True, fastmath={'contract', 'nsz'})
def forward(op, ia, ib, aux, vals, n):
    """Recompute rows 0..n-1 of ``vals`` from the current leaf rows."""
    lanes = vals.shape[1]
    for i in range(n):
        o = op[i]
        if o == LEAF:
            continue
        a = ia[i]
        b = ib[i]
        if o == ADD:
            for k in range(lanes):
                vals[i, k] = vals[a, k] + vals[b, k]
        elif o == SUB:
            for k in range(lanes):
                vals[i, k] = vals[a, k] - vals[b, k]
        elif o == MUL:
            for k in range(lanes):
                vals[i, k] = vals[a, k] * vals[b, k]
        elif o == DIV:
            for k in range(lanes):
                vals[i, k] = vals[a, k] / vals[b, k]
        elif o == NEG:
            for k in range(lanes):
                vals[i, k] = -vals[a, k]
        elif o == SIN:
            for k in range(lanes):
                vals[i, k] = math.sin(vals[a, k])
        elif o == COS:
            for k in range(lanes):
                vals[i, k] = math.cos(vals[a, k])
        elif o == EXP:
            for k in range(lanes):
                vals[i, k] = math.exp(vals[a, k])
        elif o == TANH:
            for k in range(lanes):
                vals[i, k] = math.tanh(vals[a, k])
        elif o == POWI:
            p = int(aux[i])
            for k in range(lanes):
                vals[i, k] = vals[a, k] ** p
        else:  # SCALE
            c = aux[i]
            for k in range(lanes):
                vals[i, k] = c * vals[a, k]


@njit(cache=True, fastmath={'contract', 'nsz'})
def backward(op, ia, ib, aux, vals, adj, out, keep_internal):
    """Reverse sweep: fill ``adj`` with d(out)/d(node) per lane.

    ``adj`` must be zero on entry (all rows when ``keep_internal``;
    otherwise only leaf rows and rows >= out need zeroing because the
    sweep consumes-and-clears every internal row it visits).
    """
    lanes = vals.shape[1]
    for k in range(lanes):
        adj[out, k] = 1.0
    for i in range(out, -1, -1):
        o = op[i]
        if o == LEAF:
            continue
        a = ia[i]
        b = ib[i]
        if keep_internal:
            if o == ADD:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[a, k] += g
                    adj[b, k] += g
            elif o == SUB:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[a, k] += g
                    adj[b, k] -= g
            elif o == MUL:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[a, k] += g * vals[b, k]
                    adj[b, k] += g * vals[a, k]
            elif o == DIV:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[a, k] += g / vals[b, k]
                    adj[b, k] -= g * vals[i, k] / vals[b, k]
            elif o == NEG:
                for k in range(lanes):
                    adj[a, k] -= adj[i, k]
            elif o == SIN:
                for k in range(lanes):
                    adj[a, k] += adj[i, k] * math.cos(vals[a, k])
            elif o == COS:
                for k in range(lanes):
                    adj[a, k] -= adj[i, k] * math.sin(vals[a, k])
            elif o == EXP:
                for k in range(lanes):
                    adj[a, k] += adj[i, k] * vals[i, k]
            elif o == TANH:
                for k in range(lanes):
                    t = vals[i, k]
                    adj[a, k] += adj[i, k] * (1.0 - t * t)
            elif o == POWI:
                p = int(aux[i])
                if p != 0:
                    for k in range(lanes):
                        adj[a, k] += adj[i, k] * p * vals[a, k] ** (p - 1)
            else:  # SCALE
                c = aux[i]
                for k in range(lanes):
                    adj[a, k] += c * adj[i, k]
        else:
            # consume-and-clear: same rules, zeroing row i in the same pass
            if o == ADD:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[i, k] = 0.0
                    adj[a, k] += g
                    adj[b, k] += g
            elif o == SUB:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[i, k] = 0.0
                    adj[a, k] += g
                    adj[b, k] -= g
            elif o == MUL:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[i, k] = 0.0
                    adj[a, k] += g * vals[b, k]
                    adj[b, k] += g * vals[a, k]
            elif o == DIV:
                for k in range(lanes):
                    g = adj[i, k]
                    adj[i, k] = 0.0
                    adj[a, k] += g / vals[b, k]
                    adj[b, k] -= g * vals[i, k] / vals[b, k]
            elif o == NEG:
                for k in range(lanes):
                    adj[a, k] -= adj[i, k]
                    adj[i, k] = 0.0
            elif o == SIN:
                for k in range(lanes):
                    adj[a, k] += adj[i, k] * math.cos(vals[a, k])
                    adj[i, k] = 0.0
            elif o == COS:
                for k in range(lanes):
                    adj[a, k] -= adj[i, k] * math.sin(vals[a, k])
                    adj[i, k] = 0.0
            elif o == EXP:
                for k in range(lanes):
                    adj[a, k] += adj[i, k] * vals[i, k]
                    adj[i, k] = 0.0
            elif o == TANH:
                for k in range(lanes):
                    t = vals[i, k]
                    adj[a, k] += adj[i, k] * (1.0 - t * t)
                    adj[i, k] = 0.0
            elif o == POWI:
                p = int(aux[i])
                for k in range(lanes):
                    if p != 0:
                        adj[a, k] += adj[i, k] * p * vals[a, k] ** (p - 1)
                    adj[i, k] = 0.0
            else:  # SCALE
                c = aux[i]
                for k in range(lanes):
                    adj[a, k] += c * adj[i, k]
                    adj[i, k] = 0.0


@njit(cache=True)
def first_nonfinite(arr, n):
    """Smallest row index in arr[:n] holding a non-finite entry, or -1."""
    lanes = arr.shape[1]
    for i in range(n):
        for k in range(lanes):
            if not math.isfinite(arr[i, k]):
                return i
    return -1


@njit(cache=True)
def zero_rows(arr, rows):
    lanes = arr.shape[1]
    for j in range(rows.shape[0]):
        i = rows[j]
        for k in range(lanes):
            arr[i, k] = 0.0
