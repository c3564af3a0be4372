import csv
import json
import statistics

import pytest

from mpgcn.cli import METRICS_HEADER, SUMMARY_HEADER, check_shared, main
from mpgcn.config import ConfigError, parse_config
from mpgcn.data_io import generate_sbm, load_cache


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path / "c.json", {"model": {"arch": "gcn"}, "dataset": {"kind": "sbm"}}))
    assert cfg.model == {"arch": "gcn", "hidden": 64, "dropout": 0.5, "bias": True, "depth": 3}
    assert cfg.train["lr"] == 0.01 and cfg.train["epochs"] == 100
    assert cfg.train["seeds"] == list(range(10))
    assert cfg.dataset["blocks"] == 4 and cfg.dataset["train_per_class"] == 20


def test_flag_beats_file(tmp_path):
    path = write(tmp_path / "c.json", {"train": {"epochs": 100}})
    assert parse_config(path, {"train.epochs": 500}).train["epochs"] == 500


def test_contradictory_arch_fields(tmp_path):
    with pytest.raises(ConfigError, match="paths"):
        parse_config(write(tmp_path / "c.json", {"model": {"arch": "gcn", "paths": [1, 2]}}))
    with pytest.raises(ConfigError, match="depth"):
        parse_config(None, {"model.arch": "mpgcn", "model.depth": 3})


def test_unknown_keys_listed(tmp_path):
    with pytest.raises(ConfigError, match="model.widht.*train.lrr|train.lrr"):
        parse_config(write(tmp_path / "c.json", {"model": {"widht": 3}, "train": {"lrr": 1}}))
    with pytest.raises(ConfigError, match="sections"):
        parse_config(write(tmp_path / "c.json", {"optim": {}}))
    with pytest.raises(ConfigError):
        parse_config(None, {"train.momentum": 0.9})


def test_dataset_kind_fields(tmp_path):
    with pytest.raises(ConfigError, match="content, cites|cites, content"):
        parse_config(None, {"dataset.kind": "linqs"})
    with pytest.raises(ConfigError, match="blocks"):
        parse_config(None, {"dataset.kind": "cache", "dataset.path": "x.bin", "dataset.blocks": 3})
    cfg = parse_config(None, {"dataset.kind": "cache", "dataset.path": "x.bin"})
    assert "blocks" not in cfg.dataset


def test_seed_resolution():
    assert parse_config(None, {"train.seed_count": 3}).train["seeds"] == [0, 1, 2]
    assert parse_config(None, {"train.seeds": [5, 9]}).train["seed_count"] == 2
    with pytest.raises(ConfigError):
        parse_config(None, {"train.seeds": [1], "train.seed_count": 4})


def test_missing_file():
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("/nonexistent/cfg.json")


def test_bench_config_rejects_arch():
    with pytest.raises(ConfigError):
        parse_config(None, {"model.arch": "gcn"}, bench=True)
    cfg = parse_config(None, {}, bench=True)
    assert cfg.with_arch("mpgcn").model["paths"] == [1, 2]
    assert "paths" not in cfg.with_arch("gcn").model


def test_mismatched_bench_configs():
    base = parse_config(None, {"train.epochs": 5}, bench=True)
    configs = [base.with_arch(a) for a in ("gcn", "resgcn", "mpgcn")]
    configs[2].model["hidden"] = 32
    with pytest.raises(ConfigError, match="model.hidden"):
        check_shared(configs)
    configs[2].model["hidden"] = 64
    configs[1].train["seeds"] = [0]
    with pytest.raises(ConfigError, match="train.seeds"):
        check_shared(configs)


def test_count_command(capsys):
    assert main(["count", "--arch", "mpgcn", "--in-dim", "8", "--hidden", "8", "--classes", "3",
                 "--paths", "1,2"]) == 0
    assert capsys.readouterr().out.strip() == "params=243 conv_params=216"


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 13 and all(line.startswith("PASS") for line in lines)


def test_error_exit_code(capsys):
    assert main(["train", "--model.paths", "[1,2]"]) == 2
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0 and "error" in err


def test_synth_round_trip(tmp_path, capsys):
    out = tmp_path / "sbm.bin"
    assert main(["synth", "--out", str(out), "--blocks", "3", "--per_block", "10", "--dataset.seed", "4"]) == 0
    ds = load_cache(out)
    ref = generate_sbm(3, 10, 0.1, 0.02, 16, 4)
    assert ds.adjacency == ref.adjacency
    assert ds.features.tobytes() == ref.features.tobytes()


def bench_args(tmp_path, tag):
    return ["bench", "--epochs", "12", "--seed_count", "2", "--hidden", "16",
            "--metrics_dir", str(tmp_path / tag / "metrics"), "--summary", str(tmp_path / tag / "summary.csv")]


@pytest.fixture(scope="module")
def bench_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bench")
    assert main(bench_args(tmp, "a")) == 0
    assert main(bench_args(tmp, "b")) == 0
    return tmp


def test_bench_summary_shape(bench_run):
    rows = list(csv.reader((bench_run / "a" / "summary.csv").open()))
    assert rows[0] == SUMMARY_HEADER
    assert [r[0] for r in rows[1:]] == ["gcn", "resgcn", "mpgcn"]
    assert all(int(r[1]) > 0 for r in rows[1:])
    files = sorted(p.name for p in (bench_run / "a" / "metrics").iterdir())
    assert files == sorted(f"{m}_seed{s}.csv" for m in ("gcn", "resgcn", "mpgcn") for s in (0, 1))


def test_bench_bitwise_repeatable(bench_run):
    a, b = bench_run / "a", bench_run / "b"
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
    for f in (a / "metrics").iterdir():
        assert f.read_bytes() == (b / "metrics" / f.name).read_bytes()


def test_summary_recomputes_from_metrics(bench_run):
    root = bench_run / "a"
    summary = {r["model"]: r for r in csv.DictReader((root / "summary.csv").open())}
    for model, row in summary.items():
        finals, e95 = [], []
        for seed in (0, 1):
            with (root / "metrics" / f"{model}_seed{seed}.csv").open() as fh:
                reader = csv.reader(fh)
                assert next(reader) == METRICS_HEADER
                recs = list(reader)
            finals.append(float(recs[-1][6]))
            vals = [float(r[5]) for r in recs]
            e95.append(next(int(r[2]) for r in recs if float(r[5]) >= 0.95 * max(vals)))
        assert float(row["mean_test_acc"]) == statistics.fmean(finals)
        assert float(row["std_test_acc"]) == statistics.stdev(finals)
        assert float(row["mean_epochs_to_95"]) == statistics.fmean(e95)


def test_config_echo_reproduces(bench_run, tmp_path):
    echo = bench_run / "a" / "summary.csv.config.json"
    cfg = json.loads(echo.read_text())
    cfg["output"] = {"metrics_dir": str(tmp_path / "m"), "summary": str(tmp_path / "s.csv")}
    path = write(tmp_path / "echo.json", cfg)
    assert main(["bench", "--config", str(path)]) == 0
    assert (tmp_path / "s.csv").read_bytes() == (bench_run / "a" / "summary.csv").read_bytes()


def test_train_command(tmp_path, capsys):
    args = ["train", "--arch", "mpgcn", "--paths", "[3,4]", "--shared_stem", "1", "--epochs", "3",
            "--seeds", "[0]", "--hidden", "8", "--metrics_dir", str(tmp_path / "m"),
            "--summary", str(tmp_path / "s.csv")]
    assert main(args) == 0
    rows = list(csv.reader((tmp_path / "s.csv").open()))
    assert [r[0] for r in rows[1:]] == ["mpgcn"]
    assert (tmp_path / "m" / "mpgcn_seed0.csv").exists()
