"""HTTP API over the library; one POST endpoint per CLI subcommand."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__, nn
from ..coarsen import build_hierarchy
from ..distributed import partitioned_inference
from ..dmgrl import DmgrlConfig, dmgrl_run, hierarchical_partition
from ..experiment import holdout_sets, inductive_trial, partition_comparison, run_experiment
from ..graph import GraphError
from ..io import load_checkpoint, load_graph, save_checkpoint, save_graph
from ..metrics import accuracy, macro_f1
from ..pipeline import SmgrlConfig, infer_levels, lift_all, run_smgrl
from ..synth import SynthSpec, generate
from . import schemas as s

app = FastAPI(title="smgrl", version=__version__)


def _error(status: int, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": type(exc).__name__, "detail": str(exc)})


@app.exception_handler(FileNotFoundError)
async def _missing(request: Request, exc: FileNotFoundError):
    return _error(404, exc)


@app.exception_handler(ValueError)
async def _invalid(request: Request, exc: ValueError):
    return _error(422, exc)


@app.exception_handler(RequestValidationError)
async def _bad_request(request: Request, exc: RequestValidationError):
    detail = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
    return JSONResponse(status_code=422, content={"error": "ValidationError", "detail": detail})


@app.exception_handler(Exception)
async def _internal(request: Request, exc: Exception):
    return _error(500, exc)


def _write_json(obj, path: Path) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return str(path)


def _write_ints(values, path: Path) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{int(v)}\n" for v in values), encoding="utf-8")
    return str(path)


def _smgrl_config(req: s.ModelOptions) -> SmgrlConfig:
    return SmgrlConfig(arch=req.arch, layers=req.layers, dim=req.dim, ratio=req.ratio, k=req.k,
                       combine=req.combine, hidden=req.hidden, seed=req.seed,
                       train=nn.TrainConfig(seed=req.seed, **req.train.model_dump()),
                       max_pass_reduction=req.max_pass_reduction)


def _hierarchy_kwargs(max_pass_reduction):
    return {} if max_pass_reduction is None else {"max_pass_reduction": max_pass_reduction}


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/synth", response_model=s.DatasetSummary)
def synth(req: s.SynthRequest):
    g, t = generate(SynthSpec(req.family, req.params, req.seed))
    path = save_graph(g, t, req.out, {"family": req.family, "params": req.params, "seed": req.seed})
    return s.DatasetSummary(path=str(path), n_nodes=g.n_nodes, n_edges=g.n_edges,
                            n_features=t.features.shape[1], n_classes=t.n_classes)


@app.post("/coarsen", response_model=s.CoarsenResponse)
def coarsen(req: s.CoarsenRequest):
    g, t = load_graph(req.dataset)
    h = build_hierarchy(g, t, req.ratio, req.k, **_hierarchy_kwargs(req.max_pass_reduction))
    out = Path(req.out) if req.out else Path(req.dataset)
    path = _write_json(h.to_dict(), out / "hierarchy.json")
    return s.CoarsenResponse(path=path, depth=h.depth, sizes=h.sizes(), diagnostics=h.diagnostics)


def _model_meta(req: s.ModelOptions, f_in: int, n_classes: int) -> dict:
    meta = req.model_dump(exclude={"out", "train"})
    meta.update({"f_in": f_in, "n_classes": n_classes})
    return meta


def _restore_encoder(meta: dict, tensors: dict) -> nn.Encoder:
    if meta["arch"] == "sage":
        layers = tuple({k: tensors[f"sage.{i}.{k}"] for k in ("w_self", "w_neigh", "bias")}
                       for i in range(meta["layers"]))
        return nn.SageParams(layers)
    return nn.AppnpParams(tensors["appnp.w"], tensors["appnp.bias"])


@app.post("/train", response_model=s.TrainResponse)
def train(req: s.TrainRequest):
    g, t = load_graph(req.dataset)
    config = _smgrl_config(req)
    res = run_smgrl(g, t, config)
    out = Path(req.out)
    encoder = res.encoders[0]
    tensors = {**encoder.tensors(), **res.head.tensors()}
    ckpt = save_checkpoint(tensors, out / "model.bin")
    _write_json(_model_meta(req, t.features.shape[1], t.n_classes), out / "model.json")
    hist = res.histories[0]
    history = out / "history.csv"
    history.write_text("epoch,train_loss,val_loss\n" + "".join(
        f"{e},{tl!r},{vl!r}\n" for e, tl, vl in hist.rows()), encoding="utf-8")
    _write_ints(res.head.predict(res.embeddings), out / "predictions.tsv")
    _write_ints(np.where(t.test_mask, t.labels, -1), out / "truth.tsv")
    _write_json({"combined": res.combined, "per_level": res.per_level, "timing": res.timing,
                 "diagnostics": res.diagnostics}, out / "scores.json")
    _write_json(res.hierarchy.to_dict(), out / "hierarchy.json")
    return s.TrainResponse(checkpoint=str(ckpt), history=str(history), epochs=hist.epochs,
                           best_epoch=hist.best_epoch, depth=res.hierarchy.depth,
                           coarsest_nodes=res.hierarchy.sizes()[-1])


@app.post("/embed", response_model=s.EmbedResponse)
def embed(req: s.EmbedRequest):
    g, t = load_graph(req.dataset)
    ckpt = Path(req.checkpoint)
    meta_path = ckpt.with_name("model.json")
    if not meta_path.is_file():
        raise FileNotFoundError(f"model metadata not found next to checkpoint: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta["f_in"] != t.features.shape[1]:
        raise ValueError(f"checkpoint expects {meta['f_in']} feature columns, dataset has {t.features.shape[1]}")
    encoder = _restore_encoder(meta, load_checkpoint(ckpt))
    h = build_hierarchy(g, t, meta["ratio"], meta["k"], **_hierarchy_kwargs(meta.get("max_pass_reduction")))
    e = partitioned_inference(encoder, h) if req.partitioned else lift_all(h, infer_levels(encoder, h))
    out = Path(req.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for ell, mat in enumerate(e.lifted):
        path = out / f"level{ell}.tsv"
        np.savetxt(path, mat, delimiter="\t", fmt="%.17g")
        files.append(str(path))
    return s.EmbedResponse(files=files, depth=h.depth, dim=e.dim)


def _read_ints(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {p}")
    vals = []
    for row, line in enumerate(p.read_text(encoding="utf-8").split(), start=1):
        try:
            vals.append(int(line))
        except ValueError:
            raise ValueError(f"{p} row {row}: not an integer label: {line!r}") from None
    return np.array(vals, dtype=np.int64)


@app.post("/evaluate", response_model=s.EvaluateResponse)
def evaluate(req: s.EvaluateRequest):
    pred, truth = _read_ints(req.pred), _read_ints(req.truth)
    if len(pred) != len(truth):
        raise ValueError(f"prediction has {len(pred)} rows, truth has {len(truth)}")
    mask = truth >= 0
    return s.EvaluateResponse(macro_f1=macro_f1(pred, truth, mask), accuracy=accuracy(pred, truth, mask),
                              n=int(mask.sum()))


@app.post("/experiment", response_model=s.ExperimentResponse)
def experiment(req: s.ExperimentRequest):
    summary = run_experiment(req.config, req.out, Path(req.base_dir) if req.base_dir else None)
    return s.ExperimentResponse(**summary)


@app.post("/partition-infer", response_model=s.PartitionResponse)
def partition_infer(req: s.PartitionRequest):
    g, t = load_graph(req.dataset)
    full, part, _, report = partition_comparison(g, t, _smgrl_config(req))
    path = _write_json(report, Path(req.out) / "partition_report.json") if req.out else None
    return s.PartitionResponse(full=full.combined, partitioned=part, report=report, report_path=path)


@app.post("/inductive", response_model=s.InductiveResponse)
def inductive(req: s.InductiveRequest):
    g, t = load_graph(req.dataset)
    config = _smgrl_config(req)
    full = run_smgrl(g, t, config)
    trials = [inductive_trial(g, t, config, held, full)
              for held in holdout_sets(t, req.holdout_frac, req.holdouts, req.seed)]
    trans = np.array([r["transductive_f1"] for r in trials])
    ind = np.array([r["inductive_f1"] for r in trials])
    body = dict(trials=trials, transductive_mean=float(trans.mean()), inductive_mean=float(ind.mean()),
                transductive_std=float(trans.std(ddof=1)) if len(trans) > 1 else 0.0,
                abs_gap=float(abs(trans.mean() - ind.mean())))
    path = _write_json(body, Path(req.out) / "inductive.json") if req.out else None
    return s.InductiveResponse(**body, results_path=path)


@app.post("/dmgrl", response_model=s.DmgrlResponse)
def dmgrl(req: s.DmgrlRequest):
    g, t = load_graph(req.dataset)
    config = DmgrlConfig(arch=req.arch, dim=req.dim, combine=req.combine, include_features=req.include_features,
                         seed=req.seed, train=nn.TrainConfig(seed=req.seed, **req.train.model_dump()))
    bottom = _read_ints(req.bottom_partition) if req.bottom_partition else None
    if bottom is not None and len(bottom) != g.n_nodes:
        raise GraphError(f"bottom partition has {len(bottom)} rows, graph has {g.n_nodes} nodes")
    part = hierarchical_partition(g, t, bottom=bottom, seed=req.seed)
    res = dmgrl_run(g, t, config, partition=part)
    report = part.report()
    report["frozen_subgraphs"] = [list(x) for x in res.frozen_subgraphs]
    path = _write_json(report, Path(req.out) / "partition_report.json") if req.out else None
    return s.DmgrlResponse(scores=res.scores, report=report, frozen_subgraphs=[list(x) for x in res.frozen_subgraphs],
                           max_nodes_materialized=res.max_nodes_materialized, report_path=path)
