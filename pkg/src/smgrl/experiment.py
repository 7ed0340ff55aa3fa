"""Config-driven experiment sweeps writing ``metrics.csv`` and ``plotdata.csv``."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import nn
from .coarsen import build_hierarchy
from .distributed import insert_nodes, partition_report, partitioned_inference, remove_nodes
from .dmgrl import DmgrlConfig, dmgrl_run
from .graph import Graph, NodeTable
from .io import load_graph
from .metrics import accuracy, macro_f1
from .pipeline import (CombineSpec, SmgrlConfig, derive_seed, infer_levels, lift_all, run_separate_gcns,
                       run_smgrl, train_head)
from .synth import SynthSpec, generate

KINDS = ("smgrl", "separate", "chain", "partition", "inductive", "dmgrl")

CONFIG_KEYS = {
    "name", "kind", "dataset", "arch", "layers", "hidden", "dims", "ratios", "combine", "seeds", "k",
    "max_pass_reduction", "train", "lengths", "holdout_fracs", "holdouts", "chain",
}
TRAIN_KEYS = {f.name for f in fields(nn.TrainConfig)} - {"seed"}


@dataclass(frozen=True)
class MetricRow:
    seed: int
    dataset: str
    variant: str
    arch: str
    layers: int
    dim: int
    ratio: float
    combine: str
    level: str
    macro_f1: float
    accuracy: float
    train_seconds: float
    infer_seconds: float
    setting: str = ""

    def __post_init__(self):
        for name in ("macro_f1", "accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


COLUMNS = [f.name for f in fields(MetricRow)]
HEADER = ",".join(COLUMNS)
HEADER_SHA256 = hashlib.sha256(HEADER.encode()).hexdigest()
TIMING_COLUMNS = ("train_seconds", "infer_seconds")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    dataset: object
    arch: str = "sage"
    layers: int = 1
    hidden: int | None = None
    dims: tuple[int, ...] = (16,)
    ratios: tuple[float, ...] = (0.4,)
    combine: tuple[str, ...] = ("weighted",)
    seeds: tuple[int, ...] = tuple(range(20))
    k: int = 10
    max_pass_reduction: float | None = None
    train: dict | None = None
    lengths: tuple[int, ...] = (2, 4, 8)
    holdout_fracs: tuple[float, ...] = (0.1,)
    holdouts: int = 10
    chain: dict | None = None

    def train_config(self, seed: int) -> nn.TrainConfig:
        return nn.TrainConfig(seed=seed, **(self.train or {}))


def _as_tuple(value, cast):
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return (cast(value),)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate every key before anything runs."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    for key in ("name", "kind"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    if raw["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {raw['kind']!r}")
    if raw["kind"] != "chain" and "dataset" not in raw:
        raise ConfigError("missing required key 'dataset'")
    train = raw.get("train") or {}
    bad = sorted(set(train) - TRAIN_KEYS)
    if bad:
        raise ConfigError(f"unknown train keys: {bad}")
    seeds = raw.get("seeds", 20)
    seeds = tuple(range(int(seeds))) if isinstance(seeds, int) else _as_tuple(seeds, int)
    if not seeds:
        raise ConfigError("seeds must be nonempty")
    combine = _as_tuple(raw.get("combine", "weighted"), str)
    for c in combine:
        try:
            CombineSpec(c)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if raw.get("arch", "sage") not in nn.ARCHS:
        raise ConfigError(f"arch must be one of {nn.ARCHS}")
    ratios = _as_tuple(raw.get("ratios", 0.4), float)
    if any(not 0 <= r < 1 for r in ratios):
        raise ConfigError("ratios must lie in [0, 1)")
    try:
        nn.TrainConfig(**train)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from None
    dataset = raw.get("dataset")
    if isinstance(dataset, dict):
        try:
            SynthSpec(dataset["family"], dataset.get("params", {}), dataset.get("seed", 0))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"dataset: {exc}") from None
    return ExperimentConfig(
        name=str(raw["name"]), kind=raw["kind"], dataset=dataset, arch=raw.get("arch", "sage"),
        layers=int(raw.get("layers", 1)), hidden=raw.get("hidden"),
        dims=_as_tuple(raw.get("dims", 16), int), ratios=ratios, combine=combine, seeds=seeds,
        k=int(raw.get("k", 10)), max_pass_reduction=raw.get("max_pass_reduction"), train=train,
        lengths=_as_tuple(raw.get("lengths", [2, 4, 8]), int),
        holdout_fracs=_as_tuple(raw.get("holdout_fracs", 0.1), float), holdouts=int(raw.get("holdouts", 10)),
        chain=raw.get("chain"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


def resolve_dataset(spec, seed: int, base: Path | None = None) -> tuple[str, Graph, NodeTable]:
    """A container path, or a synthetic spec regenerated per seed unless it pins its own."""
    if isinstance(spec, dict):
        s = SynthSpec(spec["family"], spec.get("params", {}), spec.get("seed", seed))
        g, t = generate(s)
        return spec.get("name", s.family), g, t
    path = Path(spec)
    if base is not None and not path.is_absolute():
        path = base / path
    g, t = load_graph(path)
    return path.name, g, t


def _smgrl_config(cfg: ExperimentConfig, seed: int, dim: int, ratio: float, combine: str) -> SmgrlConfig:
    return SmgrlConfig(arch=cfg.arch, layers=cfg.layers, dim=dim, ratio=ratio, k=cfg.k, combine=combine,
                       hidden=cfg.hidden, seed=seed, train=cfg.train_config(seed),
                       max_pass_reduction=cfg.max_pass_reduction)


def _rows_for(res, cfg, seed, dataset, variant, dim, ratio, combine, setting="") -> list[MetricRow]:
    common = dict(seed=seed, dataset=dataset, variant=variant, arch=cfg.arch, layers=cfg.layers, dim=dim,
                  ratio=ratio, combine=combine, train_seconds=res.timing.get("train_seconds", 0.0),
                  infer_seconds=res.timing.get("infer_seconds", 0.0), setting=setting)
    rows = [MetricRow(level=str(ell), macro_f1=s["macro_f1"], accuracy=s["accuracy"], **common)
            for ell, s in enumerate(res.per_level)]
    rows.append(MetricRow(level="combined", macro_f1=res.combined["macro_f1"],
                          accuracy=res.combined["accuracy"], **common))
    return rows


def _run_pipeline_cells(cfg: ExperimentConfig, base, runner, variant) -> list[MetricRow]:
    rows = []
    for seed in cfg.seeds:
        name, g, t = resolve_dataset(cfg.dataset, seed, base)
        for ratio in cfg.ratios:
            h = None
            for dim in cfg.dims:
                for combine in cfg.combine:
                    sc = _smgrl_config(cfg, seed, dim, ratio, combine)
                    if h is None:
                        h = build_hierarchy(g, t, ratio, cfg.k, **({} if cfg.max_pass_reduction is None
                                                                   else {"max_pass_reduction": cfg.max_pass_reduction}))
                    res = runner(g, t, sc, hierarchy=h)
                    rows += _rows_for(res, cfg, seed, name, variant, dim, ratio, combine)
    return rows


def _run_chain(cfg: ExperimentConfig, base) -> list[MetricRow]:
    rows = []
    params = dict(cfg.chain or {})
    for length in cfg.lengths:
        for seed in cfg.seeds:
            g, t = generate(SynthSpec("chain", {**params, "length": length}, seed))
            for ratio in cfg.ratios:
                for dim in cfg.dims:
                    for combine in cfg.combine:
                        res = run_smgrl(g, t, _smgrl_config(cfg, seed, dim, ratio, combine))
                        rows += _rows_for(res, cfg, seed, f"chain-L{length}", "smgrl", dim, ratio, combine,
                                          setting=f"length={length}")
    return rows


def partition_comparison(g: Graph, t: NodeTable, sc: SmgrlConfig):
    """Full versus parent-partitioned inference with the same trained encoder.

    The combine head is refit on the partitioned embeddings, as a deployment
    without full-graph inference would have to do.
    """
    full = run_smgrl(g, t, sc)
    t0 = time.perf_counter()
    emb = partitioned_inference(full.encoders[0], full.hierarchy)
    infer = time.perf_counter() - t0
    head, _ = train_head(emb, t, CombineSpec(sc.combine), replace(sc.train, seed=derive_seed(sc.seed, 1)))
    pred = head.predict(emb)
    part = {"macro_f1": macro_f1(pred, t.labels, t.test_mask), "accuracy": accuracy(pred, t.labels, t.test_mask)}
    return full, part, infer, partition_report(full.hierarchy)


def _run_partition(cfg: ExperimentConfig, base) -> list[MetricRow]:
    rows = []
    for seed in cfg.seeds:
        name, g, t = resolve_dataset(cfg.dataset, seed, base)
        for ratio in cfg.ratios:
            for dim in cfg.dims:
                for combine in cfg.combine:
                    sc = _smgrl_config(cfg, seed, dim, ratio, combine)
                    full, part, infer, _ = partition_comparison(g, t, sc)
                    common = dict(seed=seed, dataset=name, arch=cfg.arch, layers=cfg.layers, dim=dim, ratio=ratio,
                                  combine=combine, level="combined",
                                  train_seconds=full.timing["train_seconds"])
                    rows.append(MetricRow(variant="full", macro_f1=full.combined["macro_f1"],
                                          accuracy=full.combined["accuracy"],
                                          infer_seconds=full.timing["infer_seconds"], **common))
                    rows.append(MetricRow(variant="partitioned", macro_f1=part["macro_f1"],
                                          accuracy=part["accuracy"], infer_seconds=infer, **common))
    return rows


def inductive_trial(g: Graph, t: NodeTable, sc: SmgrlConfig, held: np.ndarray, full=None) -> dict:
    """Score held-out test nodes transductively and after inductive reinsertion.

    ``full`` may carry a precomputed full-graph run shared across trials.
    """
    full = run_smgrl(g, t, sc) if full is None else full
    trans_pred = full.head.predict(full.embeddings)
    mask = np.zeros(g.n_nodes, dtype=bool)
    mask[held] = True
    g_red, t_red, new, keep = remove_nodes(g, t, held)
    reduced = run_smgrl(g_red, t_red, sc)
    h_ext, new_ids = insert_nodes(reduced.hierarchy, new)
    t0 = time.perf_counter()
    emb = lift_all(h_ext, infer_levels(reduced.encoders[0], h_ext))
    infer = time.perf_counter() - t0
    ind_pred = reduced.head.predict(emb)[new_ids]
    truth = t.labels[held]
    return {
        "transductive_f1": macro_f1(trans_pred[held], truth),
        "inductive_f1": macro_f1(ind_pred, truth),
        "transductive_acc": accuracy(trans_pred[held], truth),
        "inductive_acc": accuracy(ind_pred, truth),
        "train_seconds": reduced.timing["train_seconds"],
        "infer_seconds": infer,
    }


def holdout_sets(t: NodeTable, frac: float, count: int, seed: int) -> list[np.ndarray]:
    test = np.flatnonzero(t.test_mask)
    size = max(1, int(round(frac * len(test))))
    return [np.sort(np.random.default_rng(derive_seed(seed, 7, i)).choice(test, size, replace=False))
            for i in range(count)]


def _run_inductive(cfg: ExperimentConfig, base) -> list[MetricRow]:
    rows = []
    for seed in cfg.seeds:
        name, g, t = resolve_dataset(cfg.dataset, seed, base)
        for ratio in cfg.ratios:
            for dim in cfg.dims:
                for combine in cfg.combine:
                    sc = _smgrl_config(cfg, seed, dim, ratio, combine)
                    full = run_smgrl(g, t, sc)
                    for frac in cfg.holdout_fracs:
                        for i, held in enumerate(holdout_sets(t, frac, cfg.holdouts, seed)):
                            r = inductive_trial(g, t, sc, held, full)
                            common = dict(seed=seed, dataset=name, arch=cfg.arch, layers=cfg.layers, dim=dim,
                                          ratio=ratio, combine=combine, level="combined",
                                          setting=f"frac={frac};holdout={i}")
                            rows.append(MetricRow(variant="transductive", macro_f1=r["transductive_f1"],
                                                  accuracy=r["transductive_acc"],
                                                  train_seconds=full.timing["train_seconds"],
                                                  infer_seconds=full.timing["infer_seconds"], **common))
                            rows.append(MetricRow(variant="inductive", macro_f1=r["inductive_f1"],
                                                  accuracy=r["inductive_acc"], train_seconds=r["train_seconds"],
                                                  infer_seconds=r["infer_seconds"], **common))
    return rows


def _run_dmgrl(cfg: ExperimentConfig, base) -> list[MetricRow]:
    rows = []
    for seed in cfg.seeds:
        name, g, t = resolve_dataset(cfg.dataset, seed, base)
        for dim in cfg.dims:
            for combine in cfg.combine:
                dc = DmgrlConfig(arch=cfg.arch, dim=dim, combine=combine, seed=seed, train=cfg.train_config(seed))
                res = dmgrl_run(g, t, dc)
                rows.append(MetricRow(seed=seed, dataset=name, variant="dmgrl", arch=cfg.arch, layers=1, dim=dim,
                                      ratio=0.0, combine=combine, level="combined",
                                      macro_f1=res.scores["macro_f1"], accuracy=res.scores["accuracy"],
                                      train_seconds=res.timing["train_seconds"], infer_seconds=0.0,
                                      setting=f"depth={res.partition.depth};frozen={len(res.frozen_subgraphs)}"))
    return rows


def run_cells(cfg: ExperimentConfig, base: Path | None = None) -> list[MetricRow]:
    if cfg.kind == "smgrl":
        return _run_pipeline_cells(cfg, base, run_smgrl, "smgrl")
    if cfg.kind == "separate":
        return _run_pipeline_cells(cfg, base, run_separate_gcns, "separate")
    if cfg.kind == "chain":
        return _run_chain(cfg, base)
    if cfg.kind == "partition":
        return _run_partition(cfg, base)
    if cfg.kind == "inductive":
        return _run_inductive(cfg, base)
    return _run_dmgrl(cfg, base)


def append_metrics(rows: list[MetricRow], path) -> Path:
    """Append rows, writing the header (and its checksum sidecar) on first use.

    An existing file whose header does not match the current columns is
    refused rather than extended.
    """
    path = Path(path)
    sidecar = path.with_name(path.name + ".sha256")
    if path.exists() and path.stat().st_size:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
        digest = hashlib.sha256(header.encode()).hexdigest()
        if digest != HEADER_SHA256:
            raise ValueError(f"{path}: header checksum mismatch, refusing to append")
        if sidecar.exists() and sidecar.read_text(encoding="utf-8").strip() != digest:
            raise ValueError(f"{path}: header checksum sidecar disagrees with the file")
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(HEADER + "\n", encoding="utf-8")
        sidecar.write_text(HEADER_SHA256 + "\n", encoding="utf-8")
    with open(path, "a", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            d = asdict(row)
            w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in COLUMNS])
    return path


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _x_and_series(cfg: ExperimentConfig, row: MetricRow) -> tuple[float, str]:
    if cfg.kind == "chain":
        return float(row.setting.split("=")[1]), f"ratio={row.ratio}"
    if cfg.kind == "partition":
        return row.ratio, row.variant
    if cfg.kind == "inductive":
        return float(row.setting.split(";")[0].split("=")[1]), row.variant
    if cfg.kind == "dmgrl":
        return float(row.dim), f"dmgrl-{row.combine}"
    return float(row.dim), f"{row.variant}-{row.combine}-r{row.ratio}-level{row.level}"


def plot_data(cfg: ExperimentConfig, rows: list[MetricRow]) -> list[dict]:
    """Long-format means with standard errors; y is accuracy for chains, macro F1 otherwise."""
    groups: dict[tuple[str, float], list[float]] = {}
    for row in rows:
        if cfg.kind == "chain" and row.level != "combined":
            continue
        x, series = _x_and_series(cfg, row)
        y = row.accuracy if cfg.kind == "chain" else row.macro_f1
        groups.setdefault((series, x), []).append(y)
    out = []
    for (series, x), ys in sorted(groups.items()):
        ys = np.asarray(ys)
        se = float(ys.std(ddof=1) / math.sqrt(len(ys))) if len(ys) > 1 else 0.0
        out.append({"x": x, "y": float(ys.mean()), "series": series, "stderr": se})
    return out


def write_plot_data(points: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["x", "y", "series", "stderr"], lineterminator="\n")
        w.writeheader()
        w.writerows(points)
    return path


def run_experiment(config, out_dir, base: Path | None = None) -> dict:
    """Run a config (path or dict), append to ``out_dir/metrics.csv``, write ``out_dir/plotdata.csv``."""
    if isinstance(config, (str, Path)):
        base = Path(config).resolve().parent if base is None else base
        cfg = load_config(config)
    else:
        cfg = parse_config(config)
    out = Path(out_dir)
    rows = run_cells(cfg, base)
    metrics_path = append_metrics(rows, out / "metrics.csv")
    plot_path = write_plot_data(plot_data(cfg, rows), out / "plotdata.csv")
    return {"name": cfg.name, "kind": cfg.kind, "rows": len(rows), "metrics": str(metrics_path),
            "plotdata": str(plot_path)}
