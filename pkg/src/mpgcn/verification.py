"""Finite-difference verification of every tape operation and of the full models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, check_gradients
from .data_io import generate_sbm, make_splits
from .graph_core import from_dense, normalized_adjacency
from .model import ModelSpec, forward, init_params
from .rng import stream

OP_TOL = 1e-6
MODEL_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err < self.tol


def _scalarize(tape, out, rng):
    # random bilinear read-out u^T Y v keeps every entry's weight distinct
    rows, cols = tape.value(out).shape
    u = tape.constant(rng.normal(size=(1, rows)))
    v = tape.constant(rng.normal(size=(cols, 1)))
    return tape.matmul_affine(tape.matmul_affine(u, out), v)


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def op_checks(seed: int = 0) -> list[CheckResult]:
    rng = stream(seed, "gradcheck")
    results = []

    def run(name, build, params):
        read = rng.bit_generator.state

        def closure(ps):
            local = np.random.Generator(np.random.PCG64())
            local.bit_generator.state = read
            tape = Tape()
            ids = [tape.param(p) for p in ps]
            out = build(tape, ids)
            return tape, _scalarize(tape, out, local), ids

        results.append(CheckResult(name, check_gradients(closure, params), OP_TOL))
        rng.random()  # advance so the next check gets fresh read-out weights

    x, w, b = rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), rng.normal(size=(1, 4))
    run("matmul_affine", lambda t, i: t.matmul_affine(i[0], i[1], i[2]), [x, w, b])
    run("add_bias", lambda t, i: t.add_bias(i[0], i[1]), [rng.normal(size=(6, 4)), b])

    dense = (rng.random((7, 7)) < 0.4).astype(float)
    n = normalized_adjacency(from_dense(np.triu(dense, 1) + np.triu(dense, 1).T))
    run("spmm", lambda t, i: t.spmm(n, i[0]), [rng.normal(size=(7, 3))])
    asym = from_dense(rng.random((5, 7)) * (rng.random((5, 7)) < 0.5))
    run("spmm_rectangular", lambda t, i: t.spmm(asym, i[0]), [rng.normal(size=(7, 2))])

    run("relu", lambda t, i: t.relu(i[0]), [_away_from_zero(rng, (6, 5))])

    mask_seed = int(rng.integers(2**32))
    run(
        "dropout",
        lambda t, i: t.dropout(i[0], 0.5, True, np.random.default_rng(mask_seed)),
        [rng.normal(size=(6, 4))],
    )
    run(
        "elementwise_sum",
        lambda t, i: t.elementwise_sum(i),
        [rng.normal(size=(4, 3)) for _ in range(3)],
    )
    run("elementwise_sum_shared", lambda t, i: t.elementwise_sum([i[0], t.relu(i[0]), i[0]]),
        [_away_from_zero(rng, (4, 3))])
    run("log_softmax_rows", lambda t, i: t.log_softmax_rows(i[0]), [rng.normal(size=(6, 5))])

    labels = rng.integers(0, 4, size=8)
    mask = np.array([0, 2, 3, 5, 7])

    def nll_closure(ps):
        tape = Tape()
        ids = [tape.param(p) for p in ps]
        return tape, tape.masked_nll(tape.log_softmax_rows(ids[0]), labels, mask), ids

    results.append(
        CheckResult("masked_nll", check_gradients(nll_closure, [rng.normal(size=(8, 4))]), OP_TOL)
    )
    return results


MODEL_SPECS = {
    "sequential(depth=3)": dict(kind="sequential", depth=3),
    "residual(depth=3)": dict(kind="residual", depth=3),
    "multipath(paths=[1,2])": dict(kind="multipath", paths=(1, 2)),
}


def model_check(kind_args: dict, seed: int = 0, hidden: int = 8, dropout: float = 0.5) -> float:
    """Max relative gradient error of a full model on a 12-node SBM graph."""
    ds = make_splits(generate_sbm(3, 4, 0.8, 0.2, 5, seed), 1, 1, seed)
    n = normalized_adjacency(ds.adjacency)
    spec = ModelSpec(in_dim=5, hidden=hidden, classes=3, dropout=dropout, **kind_args)
    params = init_params(spec, seed)
    for w, b in params.conv_layers + [params.final_linear]:
        if b is not None:
            b += stream(seed, "gradcheck").normal(scale=0.1, size=b.shape)

    def closure(arrays):
        tape = Tape()
        fwd = forward(tape, spec, params.with_arrays(arrays), n, ds.features,
                      training=dropout > 0, rng=stream(seed, "dropout"))
        return tape, tape.masked_nll(fwd.logits, ds.labels, ds.train), fwd.param_ids

    return check_gradients(closure, params.arrays())


def model_checks(seed: int = 0) -> list[CheckResult]:
    return [CheckResult(name, model_check(args, seed), MODEL_TOL) for name, args in MODEL_SPECS.items()]


def run_suite(seed: int = 0) -> list[CheckResult]:
    return op_checks(seed) + model_checks(seed)
