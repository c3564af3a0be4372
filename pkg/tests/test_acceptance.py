"""Acceptance suite. Each criterion prints one PASS, FAIL or SKIP line.

Criteria 4 and 5 need the public LINQS citation files. Point MPGCN_CORA_DIR and
MPGCN_CITESEER_DIR at directories holding ``cora.content``/``cora.cites`` and
``citeseer.content``/``citeseer.cites`` to enable them.
"""

import csv
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from mpgcn.autodiff import Tape
from mpgcn.cli import SUMMARY_HEADER, main
from mpgcn.graph_core import EdgeList, build_csr, normalized_adjacency
from mpgcn.model import ModelSpec, forward, init_params
from mpgcn.verification import MODEL_TOL, OP_TOL, run_suite
from oracles import dense_adjacency, dense_normalized, forward_dense

SEED_LISTS = (list(range(0, 10)), list(range(100, 110)), list(range(200, 210)))


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        status = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"\n[acceptance {number}] {status}: {detail}")
        assert ok, detail

    return emit


def skip_line(capsys, number, reason):
    with capsys.disabled():
        print(f"\n[acceptance {number}] SKIP: {reason}")
    pytest.skip(reason)


def run_bench(root, extra):
    args = ["bench", "--metrics_dir", str(root / "metrics"), "--summary", str(root / "summary.csv"), *extra]
    assert main(args) == 0
    return root


def read_rows(path):
    with open(path) as fh:
        return {row["model"]: row for row in csv.DictReader(fh)}


def test_1_gradient_correctness(report):
    start = time.perf_counter()
    results = run_suite()
    elapsed = time.perf_counter() - start
    ops = [r for r in results if r.tol == OP_TOL]
    models = [r for r in results if r.tol == MODEL_TOL]
    worst_op = max(r.max_rel_err for r in ops)
    worst_model = max(r.max_rel_err for r in models)
    ok = (len(ops) + len(models) == len(results) and len(models) == 3 and worst_op < 1e-6
          and worst_model < 1e-4 and elapsed < 30.0 and main(["gradcheck"]) == 0)
    report(1, ok, f"{len(ops)} ops worst {worst_op:.2e} (<1e-6), {len(models)} models worst "
                  f"{worst_model:.2e} (<1e-4), {elapsed:.1f} s (<30 s)")


def random_spec(rng, kind, d, c):
    h = int(rng.integers(1, 9))
    if kind == "multipath":
        paths = tuple(int(p) for p in rng.integers(1, 5, size=rng.integers(1, 4)))
        stem = int(rng.integers(0, min(paths) + 1))
        return ModelSpec(kind, d, h, c, paths=paths, shared_stem=stem, bias=bool(rng.random() < 0.8))
    return ModelSpec(kind, d, h, c, depth=int(rng.integers(1, 5)), bias=bool(rng.random() < 0.8))


def test_2_oracle_equivalence(report):
    rng = np.random.default_rng(2024)
    worst = {}
    for kind in ("sequential", "residual", "multipath"):
        worst[kind] = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 17))
            density = rng.random()
            edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < density]
            d, c = int(rng.integers(1, 7)), int(rng.integers(2, 5))
            spec = random_spec(rng, kind, d, c)
            params = init_params(spec, int(rng.integers(2**31)))
            params = params.with_arrays([a + rng.normal(0, 0.1, a.shape) for a in params.arrays()])
            x = rng.normal(size=(n, d))
            tape = Tape()
            got = tape.value(forward(tape, spec, params, normalized_adjacency(build_csr(EdgeList(n, edges))), x).logits)
            want = forward_dense(spec, params, dense_normalized(dense_adjacency(n, edges)), x)
            worst[kind] = max(worst[kind], float(np.abs(got - want).max()))
    ok = all(v <= 1e-10 for v in worst.values())
    report(2, ok, "100 trials per forward, max abs diff " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + " (<=1e-10)")


def count(capsys, *args):
    capsys.readouterr()
    assert main(["count", *args]) == 0
    fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
    return int(fields["params"]), int(fields["conv_params"])


def test_3_parameter_parity(report, capsys):
    checks = []
    mp = count(capsys, "--arch", "mpgcn", "--paths", "3,4", "--shared-stem", "1",
               "--in-dim", "128", "--hidden", "256", "--classes", "7")
    seq = count(capsys, "--arch", "gcn", "--depth", "6", "--in-dim", "128", "--hidden", "256", "--classes", "7")
    checks.append(mp[1] == seq[1] == 361_984)
    for d, h in ((1, 1), (16, 64), (128, 256), (1433, 64), (3703, 16), (500, 3)):
        dims = ["--in-dim", str(d), "--hidden", str(h), "--classes", "6"]
        a = count(capsys, "--arch", "mpgcn", "--paths", "5,3", "--shared-stem", "1", *dims)
        b = count(capsys, "--arch", "gcn", "--depth", "7", *dims)
        checks.append(a == b)
    small = ["--in-dim", "8", "--hidden", "8", "--classes", "3"]
    a = count(capsys, "--arch", "mpgcn", "--paths", "1,2", "--shared-stem", "0", *small)
    b = count(capsys, "--arch", "gcn", "--depth", "3", *small)
    checks.append(a[0] == b[0] == 243)
    report(3, all(checks), f"[3,4] s=1 vs depth 6 conv {mp[1]} / {seq[1]}; [5,3] s=1 vs depth 7 equal for 6 (d,h) "
                           f"pairs: {all(checks[1:-1])}; [1,2] s=0 vs depth 3 total {a[0]} / {b[0]}")


def linqs_dir(var, stem, capsys, number):
    root = os.environ.get(var)
    if not root:
        skip_line(capsys, number, f"set {var} to a directory with {stem}.content and {stem}.cites")
    root = Path(root)
    content, cites = root / f"{stem}.content", root / f"{stem}.cites"
    if not (content.is_file() and cites.is_file()):
        skip_line(capsys, number, f"{var}={root} lacks {stem}.content or {stem}.cites")
    return content, cites


def linqs_bench(tmp_path, content, cites):
    run_bench(tmp_path, ["--dataset.kind", "linqs", "--dataset.content", str(content),
                         "--dataset.cites", str(cites)])
    rows = read_rows(tmp_path / "summary.csv")
    return {m: float(r["mean_test_acc"]) for m, r in rows.items()}


@pytest.mark.slow
def test_4_cora(report, capsys, tmp_path):
    content, cites = linqs_dir("MPGCN_CORA_DIR", "cora", capsys, 4)
    acc = linqs_bench(tmp_path, content, cites)
    gcn, mp = acc["gcn"], acc["mpgcn"]
    ok = gcn >= 0.75 and mp >= gcn - 0.005 and mp >= 0.77
    report(4, ok, f"Cora GCN {gcn:.4f} (>=0.75), MPGCN {mp:.4f} (>=GCN-0.005 and >=0.77)")


@pytest.mark.slow
def test_5_citeseer(report, capsys, tmp_path):
    content, cites = linqs_dir("MPGCN_CITESEER_DIR", "citeseer", capsys, 5)
    acc = linqs_bench(tmp_path, content, cites)
    gcn, mp = acc["gcn"], acc["mpgcn"]
    ok = 0.56 <= gcn <= 0.72 and mp >= gcn - 0.005
    report(5, ok, f"CiteSeer GCN {gcn:.4f} (in [0.56, 0.72]), MPGCN {mp:.4f} (>=GCN-0.005)")


@pytest.fixture(scope="module")
def sbm_benches(tmp_path_factory):
    """Default SBM bench for each seed list, plus a repeat of the first."""
    root = tmp_path_factory.mktemp("sbm")
    runs = [run_bench(root / f"list{i}", ["--seeds", json.dumps(seeds)]) for i, seeds in enumerate(SEED_LISTS)]
    repeat = run_bench(root / "repeat", ["--seeds", json.dumps(SEED_LISTS[0])])
    return runs, repeat


@pytest.mark.slow
def test_6_convergence_speed(report, sbm_benches):
    runs, _ = sbm_benches
    outcomes = []
    for root in runs:
        rows = read_rows(root / "summary.bestval.csv")
        outcomes.append((float(rows["mpgcn"]["median_epochs_to_95"]), float(rows["gcn"]["median_epochs_to_95"])))
    wins = sum(mp <= gcn for mp, gcn in outcomes)
    detail = "; ".join(f"seeds {s[0]}-{s[-1]}: MPGCN {mp:g} vs GCN {gcn:g}" for s, (mp, gcn) in zip(SEED_LISTS, outcomes))
    report(6, wins >= 2, f"median epochs to 95% val, holds in {wins}/3 ({detail})")


@pytest.mark.slow
def test_7_determinism(report, sbm_benches):
    runs, repeat = sbm_benches
    first = runs[0]
    names = sorted(p.relative_to(first).as_posix() for p in first.rglob("*.csv"))
    same = [(first / n).read_bytes() == (repeat / n).read_bytes() for n in names]
    header = next(csv.reader((first / "summary.csv").open()))
    echo = [json.loads((r / "summary.csv.config.json").read_text()) for r in (first, repeat)]
    for e in echo:
        e.pop("output")
    ok = all(same) and len(names) == 32 and header == SUMMARY_HEADER and echo[0] == echo[1]
    report(7, ok, f"{sum(same)}/{len(names)} CSV files bitwise identical across repeated bench")


def test_8_out_of_scope(capsys):
    with capsys.disabled():
        print("\n[acceptance 8] SKIP: informational; large-graph benchmarks are outside desk scale and their "
              "architectures are covered by criteria 1-3")
    pytest.skip("informational criterion")
