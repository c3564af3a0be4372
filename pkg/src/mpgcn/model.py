"""Sequential, residual and multipath GCN builders.

Every convolution layer computes ``relu(N @ (dropout(H) @ W) + b)`` where
``N`` is the normalized adjacency. All three architectures end in the same
linear head followed by a row-wise log-softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tape
from .graph_core import CsrMatrix
from .rng import stream

KINDS = ("sequential", "residual", "multipath")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    in_dim: int
    hidden: int
    classes: int
    depth: int | None = None
    paths: tuple[int, ...] = ()
    shared_stem: int = 0
    dropout: float = 0.5
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(int(p) for p in self.paths))

    def validate(self) -> ModelSpec:
        if self.kind not in KINDS:
            raise SpecError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("in_dim", "hidden", "classes"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise SpecError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.kind == "multipath":
            if self.depth is not None:
                raise SpecError("depth is not used by a multipath spec; give paths instead")
            if not self.paths:
                raise SpecError("multipath spec needs at least one path")
            if self.shared_stem < 0:
                raise SpecError("shared_stem must be >= 0")
            low = max(1, self.shared_stem)
            for i, p in enumerate(self.paths):
                if p < low:
                    raise SpecError(f"path {i} has depth {p}, below max(1, shared_stem) = {low}")
        else:
            if self.paths or self.shared_stem:
                raise SpecError(f"paths/shared_stem are only valid for multipath, not {self.kind}")
            if self.depth is None or self.depth < 1:
                raise SpecError(f"{self.kind} spec needs depth >= 1")
        return self

    def layer_roles(self) -> list[tuple]:
        """Conv layers in parameter order.

        Roles are ("seq", i), ("stem", i) or ("path", path_id, position).
        """
        if self.kind != "multipath":
            return [("seq", i) for i in range(self.depth)]
        roles = [("stem", i) for i in range(self.shared_stem)]
        for k, p in enumerate(self.paths):
            roles += [("path", k, j) for j in range(p - self.shared_stem)]
        return roles

    def layer_shapes(self) -> list[tuple[int, int]]:
        shapes = []
        for role in self.layer_roles():
            first = role[0] in ("seq", "stem") and role[1] == 0
            if role[0] == "path" and self.shared_stem == 0 and role[2] == 0:
                first = True
            shapes.append((self.in_dim if first else self.hidden, self.hidden))
        return shapes


@dataclass
class Parameters:
    conv_layers: list[tuple[np.ndarray, np.ndarray | None]]
    final_linear: tuple[np.ndarray, np.ndarray | None]
    layout: list[tuple] = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        """Flat list: each conv W then b, then the head W then b (biases only when present)."""
        out = []
        for w, b in [*self.conv_layers, self.final_linear]:
            out.append(w)
            if b is not None:
                out.append(b)
        return out

    def names(self) -> list[str]:
        out = []
        for role, (w, b) in zip([*self.layout, ("final",)], [*self.conv_layers, self.final_linear]):
            tag = "/".join(str(r) for r in role)
            out.append(f"{tag}/W")
            if b is not None:
                out.append(f"{tag}/b")
        return out

    def is_bias(self) -> list[bool]:
        return [n.endswith("/b") for n in self.names()]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> Parameters:
        it = iter(arrays)
        layers = [(next(it), None if b is None else next(it)) for _, b in self.conv_layers]
        w, b = self.final_linear
        final = (next(it), None if b is None else next(it))
        return Parameters(layers, final, list(self.layout))

    def copy(self) -> Parameters:
        return self.with_arrays([a.copy() for a in self.arrays()])


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(spec: ModelSpec, seed: int) -> Parameters:
    """Glorot-uniform weights and zero biases, drawn from the seed's init stream."""
    spec.validate()
    rng = stream(seed, "init")

    def layer(fan_in, fan_out):
        bound = glorot_bound(fan_in, fan_out)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        return w, (np.zeros((1, fan_out)) if spec.bias else None)

    conv = [layer(i, o) for i, o in spec.layer_shapes()]
    final = layer(spec.hidden, spec.classes)
    return Parameters(conv, final, spec.layer_roles())


def param_count(spec: ModelSpec, conv_only: bool = False) -> int:
    spec.validate()
    b = 1 if spec.bias else 0
    conv = sum(i * o + b * o for i, o in spec.layer_shapes())
    if conv_only:
        return conv
    return conv + spec.hidden * spec.classes + b * spec.classes


@dataclass
class Forward:
    logits: int
    param_ids: list[int]


class _Builder:
    def __init__(self, tape, spec, params, n, x, training, rng):
        if x.shape[0] != n.num_rows or n.num_rows != n.num_cols:
            raise SpecError(
                f"operator is {n.num_rows}x{n.num_cols} but features have {x.shape[0]} rows"
            )
        if x.shape[1] != spec.in_dim:
            raise SpecError(f"features have {x.shape[1]} columns, spec.in_dim is {spec.in_dim}")
        self.tape, self.spec, self.n = tape, spec, n
        self.training, self.rng = training, rng
        self.param_ids = []
        self.layers = []
        for w, b in params.conv_layers:
            self.layers.append(self._register(w, b))
        self.final = self._register(*params.final_linear)
        self.x = tape.constant(x)

    def _register(self, w, b):
        wid = self.tape.param(w)
        self.param_ids.append(wid)
        bid = None
        if b is not None:
            bid = self.tape.param(b)
            self.param_ids.append(bid)
        return wid, bid

    def conv(self, h: int, k: int) -> int:
        tape = self.tape
        wid, bid = self.layers[k]
        if tape.value(h).shape[1] != tape.value(wid).shape[0]:
            raise SpecError(
                f"layer {k}: input width {tape.value(h).shape[1]} != weight rows {tape.value(wid).shape[0]}"
            )
        d = tape.dropout(h, self.spec.dropout, self.training, self.rng)
        z = tape.spmm(self.n, tape.matmul_affine(d, wid))
        if bid is not None:
            z = tape.add_bias(z, bid)
        return tape.relu(z)

    def head(self, h: int) -> Forward:
        wid, bid = self.final
        logits = self.tape.log_softmax_rows(self.tape.matmul_affine(h, wid, bid))
        return Forward(logits, self.param_ids)


def _check_kind(spec, kind):
    spec.validate()
    if spec.kind != kind:
        raise SpecError(f"expected a {kind} spec, got {spec.kind}")


def forward_sequential(tape, spec, params, n, x, training=False, rng=None) -> Forward:
    _check_kind(spec, "sequential")
    b = _Builder(tape, spec, params, n, x, training, rng)
    h = b.x
    for k in range(spec.depth):
        h = b.conv(h, k)
    return b.head(h)


def forward_residual(tape, spec, params, n, x, training=False, rng=None) -> Forward:
    _check_kind(spec, "residual")
    b = _Builder(tape, spec, params, n, x, training, rng)
    h = b.conv(b.x, 0)
    for k in range(1, spec.depth):
        h = tape.elementwise_sum([b.conv(h, k), h])
    return b.head(h)


def forward_multipath(tape, spec, params, n, x, training=False, rng=None) -> Forward:
    _check_kind(spec, "multipath")
    b = _Builder(tape, spec, params, n, x, training, rng)
    s = b.x
    k = 0
    for _ in range(spec.shared_stem):
        s = b.conv(s, k)
        k += 1
    outs = []
    for p in spec.paths:
        z = s
        for _ in range(p - spec.shared_stem):
            z = b.conv(z, k)
            k += 1
        outs.append(z)
    return b.head(tape.elementwise_sum(outs))


_FORWARDS = {
    "sequential": forward_sequential,
    "residual": forward_residual,
    "multipath": forward_multipath,
}


def forward(
    tape: Tape,
    spec: ModelSpec,
    params: Parameters,
    n: CsrMatrix,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Forward:
    """Record the forward pass of ``spec`` on ``tape`` and return the log-probability node."""
    if training and spec.dropout > 0 and rng is None:
        raise ValueError("training-mode forward with dropout needs an rng")
    return _FORWARDS[spec.kind](tape, spec, params, n, x, training, rng)
