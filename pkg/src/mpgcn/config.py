"""Experiment configuration: JSON file, dotted flag overrides, default materialization."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .data_io import Dataset, generate_sbm, load_cache, load_linqs, row_normalize
from .model import ModelSpec
from .training import TrainConfig


class ConfigError(ValueError):
    pass


ARCH_KINDS = {"gcn": "sequential", "resgcn": "residual", "mpgcn": "multipath"}
BENCH = "bench"

# None marks a key with no default (must be supplied when relevant).
DATASET_COMMON = {"kind": "sbm", "train_per_class": 20, "val_per_class": 30, "row_normalize": False}
DATASET_KINDS = {
    "sbm": {"blocks": 4, "per_block": 60, "p_intra": 0.1, "p_inter": 0.02, "features": 16, "seed": 0},
    "linqs": {"content": None, "cites": None, "name": None},
    "cache": {"path": None},
}
MODEL_COMMON = {"arch": "gcn", "hidden": 64, "dropout": 0.5, "bias": True}
MODEL_ARCHS = {
    "gcn": {"depth": 3},
    "resgcn": {"depth": 3},
    "mpgcn": {"paths": [1, 2], "shared_stem": 0},
    BENCH: {"depth": 3, "paths": [1, 2], "shared_stem": 0},
}
TRAIN = {
    "lr": 0.01,
    "weight_decay": 5e-4,
    "epochs": 100,
    "seeds": None,
    "seed_count": 10,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
}
OUTPUT = {"metrics_dir": "runs/metrics", "summary": "runs/summary.csv"}


def _known(section: str) -> set[str]:
    if section == "dataset":
        return set(DATASET_COMMON).union(*DATASET_KINDS.values())
    if section == "model":
        return set(MODEL_COMMON).union(*MODEL_ARCHS.values())
    return set({"train": TRAIN, "output": OUTPUT}[section])


SECTIONS = ("dataset", "model", "train", "output")
LEAVES = {f"{s}.{k}" for s in SECTIONS for k in _known(s)}


def leaf_aliases() -> dict[str, str]:
    """Bare key -> dotted key, for keys that appear in exactly one section."""
    seen: dict[str, list[str]] = {}
    for dotted in sorted(LEAVES):
        seen.setdefault(dotted.split(".", 1)[1], []).append(dotted)
    return {k: v[0] for k, v in seen.items() if len(v) == 1}


@dataclass
class ExperimentConfig:
    dataset: dict
    model: dict
    train: dict
    output: dict

    def to_dict(self) -> dict:
        return {s: copy.deepcopy(getattr(self, s)) for s in SECTIONS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_arch(self, arch: str) -> ExperimentConfig:
        """Concrete single-model config derived from a bench config."""
        d = self.to_dict()
        model = {k: d["model"][k] for k in MODEL_COMMON if k != "arch"}
        model["arch"] = arch
        for k in MODEL_ARCHS[arch]:
            model[k] = d["model"][k]
        d["model"] = model
        return ExperimentConfig(**d)

    @property
    def label(self) -> str:
        return self.model["arch"]


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(path=None, overrides: dict | None = None, bench: bool = False) -> ExperimentConfig:
    """Resolve a config from an optional JSON file plus ``{"section.key": value}`` overrides.

    Flag values win over file values. Defaults are filled only for keys that
    belong to the chosen dataset kind and architecture; keys belonging to a
    different kind or architecture are an error.
    """
    raw = {s: {} for s in SECTIONS}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        loaded = json.loads(path.read_text())
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
        for s, body in loaded.items():
            if not isinstance(body, dict):
                raise ConfigError(f"section '{s}' must be an object")
            raw[s].update(body)

    for dotted, value in (overrides or {}).items():
        if dotted not in LEAVES:
            raise ConfigError(f"unknown config key: {dotted}")
        s, k = dotted.split(".", 1)
        raw[s][k] = value

    unknown = sorted(f"{s}.{k}" for s in SECTIONS for k in raw[s] if k not in _known(s))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    return ExperimentConfig(
        dataset=_resolve_dataset(raw["dataset"]),
        model=_resolve_model(raw["model"], bench),
        train=_resolve_train(raw["train"]),
        output={**OUTPUT, **raw["output"]},
    )


def _fill(given: dict, common: dict, specific: dict, what: str, choice: str) -> dict:
    allowed = set(common) | set(specific)
    stray = sorted(set(given) - allowed)
    if stray:
        raise ConfigError(f"keys {', '.join(stray)} do not apply to {what} '{choice}'")
    out = {**common, **specific, **given}
    missing = sorted(k for k, v in out.items() if v is None and k in specific and k != "name")
    if missing:
        raise ConfigError(f"{what} '{choice}' requires: {', '.join(missing)}")
    return out


def _resolve_dataset(given: dict) -> dict:
    kind = given.get("kind", DATASET_COMMON["kind"])
    if kind not in DATASET_KINDS:
        raise ConfigError(f"dataset.kind must be one of {sorted(DATASET_KINDS)}, got {kind!r}")
    return _fill(given, DATASET_COMMON, DATASET_KINDS[kind], "dataset kind", kind)


def _resolve_model(given: dict, bench: bool) -> dict:
    if bench:
        if "arch" in given and given["arch"] != BENCH:
            raise ConfigError("bench runs every architecture; drop model.arch from the config")
        out = _fill({k: v for k, v in given.items() if k != "arch"},
                    {k: v for k, v in MODEL_COMMON.items() if k != "arch"}, MODEL_ARCHS[BENCH],
                    "architecture", BENCH)
        return out
    arch = given.get("arch", MODEL_COMMON["arch"])
    if arch not in ARCH_KINDS:
        raise ConfigError(f"model.arch must be one of {sorted(ARCH_KINDS)}, got {arch!r}")
    return _fill(given, MODEL_COMMON, MODEL_ARCHS[arch], "architecture", arch)


def _resolve_train(given: dict) -> dict:
    out = {**TRAIN, **given}
    if given.get("seeds") is not None:
        seeds = [int(s) for s in given["seeds"]]
        if "seed_count" in given and given["seed_count"] != len(seeds):
            raise ConfigError("train.seeds and train.seed_count disagree")
    else:
        seeds = list(range(int(out["seed_count"])))
    if not seeds:
        raise ConfigError("at least one seed is required")
    out["seeds"] = seeds
    out["seed_count"] = len(seeds)
    return out


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.dataset
    if d["kind"] == "sbm":
        ds = generate_sbm(d["blocks"], d["per_block"], d["p_intra"], d["p_inter"], d["features"], d["seed"])
    elif d["kind"] == "linqs":
        ds = load_linqs(d["content"], d["cites"], name=d.get("name"))
    else:
        ds = load_cache(d["path"])
    return row_normalize(ds) if d["row_normalize"] else ds


def build_spec(cfg: ExperimentConfig, in_dim: int, classes: int) -> ModelSpec:
    m = cfg.model
    kind = ARCH_KINDS[m["arch"]]
    extra = {"depth": m["depth"]} if kind != "multipath" else {
        "paths": tuple(m["paths"]), "shared_stem": m["shared_stem"]}
    return ModelSpec(kind, in_dim, m["hidden"], classes, dropout=m["dropout"], bias=m["bias"], **extra).validate()


def build_train(cfg: ExperimentConfig) -> TrainConfig:
    t, d = cfg.train, cfg.dataset
    return TrainConfig(
        lr=t["lr"],
        weight_decay=t["weight_decay"],
        epochs=t["epochs"],
        seeds=tuple(t["seeds"]),
        adam_beta1=t["adam_beta1"],
        adam_beta2=t["adam_beta2"],
        adam_eps=t["adam_eps"],
        train_per_class=d["train_per_class"],
        val_per_class=d["val_per_class"],
    )
