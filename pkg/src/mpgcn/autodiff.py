"""A small reverse-mode tape over dense float64 matrices.

Values are 2-D numpy arrays. Every recorded operation appends a node whose
inputs all have smaller ids, so a backward sweep is just a reverse loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .graph_core import CsrMatrix, spmm


class NonFiniteError(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


@dataclass
class Node:
    kind: str
    inputs: tuple[int, ...]
    requires_grad: bool
    ctx: Any = None


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    grads: list[np.ndarray | None] = field(default_factory=list)

    def __len__(self):
        return len(self.nodes)

    def value(self, i: int) -> np.ndarray:
        return self.values[i]

    def grad(self, i: int) -> np.ndarray:
        g = self.grads[i] if i < len(self.grads) else None
        return np.zeros_like(self.values[i]) if g is None else g

    def _push(self, kind, inputs, value, ctx=None, requires_grad=None) -> int:
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"operation '{kind}' (node {len(self.nodes)}) produced a non-finite value")
        if requires_grad is None:
            requires_grad = any(self.nodes[i].requires_grad for i in inputs)
        self.nodes.append(Node(kind, tuple(inputs), requires_grad, ctx))
        self.values.append(value)
        return len(self.nodes) - 1

    # leaves

    def param(self, value) -> int:
        """Record a trainable leaf."""
        return self._push("param", (), _as_matrix(value).copy(), requires_grad=True)

    def constant(self, value) -> int:
        return self._push("constant", (), _as_matrix(value), requires_grad=False)

    # operations

    def matmul_affine(self, x: int, w: int, b: int | None = None) -> int:
        xv, wv = self.values[x], self.values[w]
        if xv.shape[1] != wv.shape[0]:
            raise ShapeError(f"matmul_affine: x is {xv.shape}, w is {wv.shape}")
        out = xv @ wv
        inputs = (x, w)
        if b is not None:
            bv = self.values[b]
            if bv.shape != (1, wv.shape[1]):
                raise ShapeError(f"matmul_affine: bias is {bv.shape}, expected (1, {wv.shape[1]})")
            out = out + bv
            inputs = (x, w, b)
        return self._push("matmul_affine", inputs, out)

    def spmm(self, n: CsrMatrix, h: int) -> int:
        hv = self.values[h]
        if n.num_cols != hv.shape[0]:
            raise ShapeError(f"spmm: operator is {n.num_rows}x{n.num_cols}, h is {hv.shape}")
        return self._push("spmm", (h,), spmm(n, hv), ctx=n)

    def add_bias(self, x: int, b: int) -> int:
        xv, bv = self.values[x], self.values[b]
        if bv.shape != (1, xv.shape[1]):
            raise ShapeError(f"add_bias: bias is {bv.shape}, expected (1, {xv.shape[1]})")
        return self._push("add_bias", (x, b), xv + bv)

    def relu(self, x: int) -> int:
        return self._push("relu", (x,), np.maximum(self.values[x], 0.0))

    def dropout(self, x: int, p: float, training: bool, rng: np.random.Generator | None) -> int:
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
        if not training or p == 0.0:
            return x
        keep = rng.random(self.values[x].shape) >= p
        scale = keep / (1.0 - p)
        return self._push("dropout", (x,), self.values[x] * scale, ctx=scale)

    def elementwise_sum(self, xs: Sequence[int]) -> int:
        xs = tuple(xs)
        if not xs:
            raise ShapeError("elementwise_sum needs at least one input")
        shape = self.values[xs[0]].shape
        out = np.zeros(shape)
        for i in xs:
            if self.values[i].shape != shape:
                raise ShapeError(f"elementwise_sum: shape {self.values[i].shape} differs from {shape}")
            out = out + self.values[i]
        if len(xs) == 1:
            return xs[0]
        return self._push("sum", xs, out)

    def log_softmax_rows(self, x: int) -> int:
        out = log_softmax(self.values[x])
        return self._push("log_softmax", (x,), out)

    def masked_nll(self, logp: int, labels, mask) -> int:
        lp = self.values[logp]
        labels = np.asarray(labels, dtype=np.int64)
        mask = np.asarray(mask, dtype=np.int64)
        if mask.size == 0:
            raise ValueError("masked_nll needs a non-empty mask")
        y = labels[mask]
        if np.any(y < 0) or np.any(y >= lp.shape[1]):
            raise ValueError(f"label out of range for {lp.shape[1]} classes")
        loss = -lp[mask, y].sum() / mask.size
        return self._push("masked_nll", (logp,), np.array([[loss]]), ctx=(mask, y))

    # reverse sweep

    def backward(self, root: int) -> list[np.ndarray]:
        """Populate gradients of ``root`` w.r.t. every node recorded before it."""
        if self.values[root].size != 1:
            raise ShapeError(f"backward needs a scalar root, node {root} is {self.values[root].shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[root] = np.ones_like(self.values[root])
        for i in range(root, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or not node.requires_grad or not node.inputs:
                continue
            for j, gj in zip(node.inputs, self._vjp(i, g)):
                if gj is None or not self.nodes[j].requires_grad:
                    continue
                grads[j] = gj if grads[j] is None else grads[j] + gj
        self.grads = [np.zeros_like(v) if g is None else g for v, g in zip(self.values, grads)]
        return self.grads

    def _vjp(self, i: int, g: np.ndarray):
        node = self.nodes[i]
        kind, ins = node.kind, node.inputs
        wants = [self.nodes[j].requires_grad for j in ins]
        if kind == "matmul_affine":
            x, w = self.values[ins[0]], self.values[ins[1]]
            out = [g @ w.T if wants[0] else None, x.T @ g if wants[1] else None]
            if len(ins) == 3:
                out.append(g.sum(axis=0, keepdims=True))
            return out
        if kind == "add_bias":
            return [g, g.sum(axis=0, keepdims=True)]
        if kind == "spmm":
            return [spmm(node.ctx.T, g)]
        if kind == "relu":
            return [g * (self.values[ins[0]] > 0)]
        if kind == "dropout":
            return [g * node.ctx]
        if kind == "sum":
            return [g] * len(ins)
        if kind == "log_softmax":
            y = self.values[i]
            return [g - np.exp(y) * g.sum(axis=1, keepdims=True)]
        if kind == "masked_nll":
            mask, y = node.ctx
            out = np.zeros_like(self.values[ins[0]])
            np.add.at(out, (mask, y), -g[0, 0] / mask.size)
            return [out]
        raise AssertionError(f"no gradient rule for '{kind}'")


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"tape values are matrices, got shape {arr.shape}")
    return arr


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


# A closure maps a list of parameter arrays to (tape, scalar loss node, parameter node ids).
LossClosure = Callable[[list[np.ndarray]], tuple[Tape, int, Sequence[int]]]


def check_gradients(
    closure: LossClosure,
    params: Sequence[np.ndarray],
    eps: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest relative error between tape gradients and central differences.

    The relative error of one entry is |a - n| / max(1e-8, |a| + |n|). When
    ``max_entries`` is set and the model has more entries than that, a random
    subsample of that many entries is checked.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]
    tape, loss, ids = closure(params)
    tape.backward(loss)
    analytic = [tape.grad(i).reshape(p.shape) for i, p in zip(ids, params)]

    def loss_at(ps):
        t, l, _ = closure(ps)
        val = float(t.value(l)[0, 0])
        if not np.isfinite(val):
            raise NonFiniteError("loss became non-finite during gradient check")
        return val

    entries = [(k, idx) for k, p in enumerate(params) for idx in np.ndindex(p.shape)]
    if max_entries is not None and len(entries) > max_entries:
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[i] for i in sorted(pick)]

    worst = 0.0
    for k, idx in entries:
        orig = params[k][idx]
        params[k][idx] = orig + eps
        up = loss_at(params)
        params[k][idx] = orig - eps
        down = loss_at(params)
        params[k][idx] = orig
        numeric = (up - down) / (2 * eps)
        a = analytic[k][idx]
        worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    return float(worst)
