"""Dataset container directories and small serialization helpers.

A container holds ``meta.json``, ``edges.tsv``, ``features.tsv``,
``labels.tsv`` and ``split.tsv``; see the README for the row formats.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, NodeTable, validate

SPLIT_NAMES = ("train", "val", "test", "none")
CONTAINER_FILES = ("meta.json", "edges.tsv", "features.tsv", "labels.tsv", "split.tsv")


class DatasetError(GraphError):
    pass


def _lines(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _fmt(x: float) -> str:
    return repr(float(x))


def load_graph(path) -> tuple[Graph, NodeTable]:
    """Read and validate a dataset container directory."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    for name in CONTAINER_FILES:
        if not (root / name).is_file():
            raise FileNotFoundError(f"missing {name} in {root}")
    meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    try:
        n = int(meta["n_nodes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"meta.json: bad or missing n_nodes ({exc})") from None
    directed = bool(meta.get("directed", False))

    us, vs, ws = [], [], []
    seen: dict[tuple[int, int], int] = {}
    for row, line in enumerate(_lines(root / "edges.tsv"), start=1):
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise DatasetError(f"edges.tsv row {row}: expected 'u\\tv[\\tw]', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise DatasetError(f"edges.tsv row {row}: malformed value in {line!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetError(f"edges.tsv row {row}: endpoint out of range [0, {n})")
        if u == v:
            raise DatasetError(f"edges.tsv row {row}: self-loop ({u}, {v}) rejected")
        if not w > 0:
            raise DatasetError(f"edges.tsv row {row}: non-positive weight {w}")
        key = (u, v) if directed else (min(u, v), max(u, v))
        if key in seen:
            raise DatasetError(f"edges.tsv row {row}: duplicate of row {seen[key]} ({u}, {v})")
        seen[key] = row
        us.append(u)
        vs.append(v)
        ws.append(w)
    g = Graph.from_edges(n, us, vs, ws, directed=directed)

    feat_rows = []
    for row, line in enumerate(_lines(root / "features.tsv"), start=1):
        try:
            feat_rows.append([float(x) for x in line.split()])
        except ValueError:
            raise DatasetError(f"features.tsv row {row}: malformed float in row") from None
        if feat_rows[-1] and len(feat_rows[-1]) != len(feat_rows[0]):
            raise DatasetError(f"features.tsv row {row}: expected {len(feat_rows[0])} columns")
    if len(feat_rows) != n:
        raise DatasetError(f"features.tsv: {len(feat_rows)} rows, expected {n}")
    features = np.array(feat_rows, dtype=np.float64).reshape(n, -1)
    if "n_features" in meta and features.shape[1] != int(meta["n_features"]):
        raise DatasetError(f"features.tsv: {features.shape[1]} columns, meta says {meta['n_features']}")

    labels = np.empty(n, dtype=np.int64)
    label_lines = _lines(root / "labels.tsv")
    if len(label_lines) != n:
        raise DatasetError(f"labels.tsv: {len(label_lines)} rows, expected {n}")
    n_classes = meta.get("n_classes")
    for row, line in enumerate(label_lines, start=1):
        try:
            labels[row - 1] = int(line.strip())
        except ValueError:
            raise DatasetError(f"labels.tsv row {row}: not an integer: {line!r}") from None
        if labels[row - 1] < -1 or (n_classes is not None and labels[row - 1] >= int(n_classes)):
            raise DatasetError(f"labels.tsv row {row}: label {labels[row - 1]} out of range")

    split_lines = [s.strip() for s in _lines(root / "split.tsv")]
    if len(split_lines) != n:
        raise DatasetError(f"split.tsv: {len(split_lines)} rows, expected {n}")
    for row, s in enumerate(split_lines, start=1):
        if s not in SPLIT_NAMES:
            raise DatasetError(f"split.tsv row {row}: unknown split {s!r}")
        if s != "none" and labels[row - 1] < 0:
            raise DatasetError(f"split.tsv row {row}: node in {s} split has no label")

    table = NodeTable.from_split(features, labels, np.array(split_lines))
    problems = validate(g, table)
    if problems:
        raise DatasetError("; ".join(problems))
    return g, table


def save_graph(g: Graph, t: NodeTable, path, extra_meta: dict | None = None) -> Path:
    """Write a container; edges are canonical (u < v, sorted), so output is stable."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    u, v, w = g.edge_list()
    weighted = bool(np.any(w != 1.0))
    with open(root / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for a, b, c in zip(u, v, w):
            fh.write(f"{a}\t{b}\t{_fmt(c)}\n" if weighted else f"{a}\t{b}\n")
    with open(root / "features.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for row in t.features:
            fh.write(" ".join(_fmt(x) for x in row) + "\n")
    with open(root / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{int(y)}\n" for y in t.labels)
    with open(root / "split.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{s}\n" for s in t.split_names())
    meta = {
        "n_nodes": g.n_nodes,
        "n_features": int(t.features.shape[1]),
        "n_classes": t.n_classes,
        "directed": False,
    }
    meta.update(extra_meta or {})
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root


def save_checkpoint(tensors: dict[str, np.ndarray], path) -> Path:
    """Flat little-endian float64 blob plus a JSON sidecar of names and shapes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    index, offset = [], 0
    with open(path, "wb") as fh:
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(arr.tobytes())
            index.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps({"dtype": "<f8", "tensors": index}, indent=2) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text(encoding="utf-8"))
    flat = np.fromfile(path, dtype="<f8")
    out = {}
    for entry in sidecar["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        out[entry["name"]] = flat[entry["offset"]:entry["offset"] + size].reshape(entry["shape"]).copy()
    return out


def import_linqs(content_path, cites_path, out_dir, seed: int = 0, per_class_train: int = 20,
                 n_val: int = 500, n_test: int = 1000) -> Path:
    """Convert a LINQS-style citation dump (``*.content`` + ``*.cites``) to a container.

    Citations become unweighted undirected edges; reciprocal citations and
    self-citations collapse or drop. Classes are numbered in sorted name
    order. The split takes ``per_class_train`` random nodes per class for
    training, then ``n_val`` and ``n_test`` random nodes from the rest.
    """
    ids, feats, names = [], [], []
    for row, line in enumerate(_lines(Path(content_path)), start=1):
        parts = line.split()
        if len(parts) < 3:
            raise DatasetError(f"{content_path} row {row}: expected id, features, label")
        ids.append(parts[0])
        feats.append([float(v) for v in parts[1:-1]])
        names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = np.array([classes.index(c) for c in names], dtype=np.int64)
    pairs = set()
    for row, line in enumerate(_lines(Path(cites_path)), start=1):
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError(f"{cites_path} row {row}: expected two paper ids")
        if parts[0] not in index or parts[1] not in index:
            continue
        u, v = index[parts[0]], index[parts[1]]
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    pairs = sorted(pairs)
    n = len(ids)
    g = Graph.from_edges(n, [p[0] for p in pairs], [p[1] for p in pairs])
    rng = np.random.default_rng(seed)
    split = np.full(n, "none", dtype=object)
    for c in range(len(classes)):
        members = rng.permutation(np.flatnonzero(labels == c))
        split[members[:per_class_train]] = "train"
    rest = rng.permutation(np.flatnonzero(split == "none"))
    split[rest[:n_val]] = "val"
    split[rest[n_val:n_val + n_test]] = "test"
    table = NodeTable.from_split(np.array(feats), labels, split)
    return save_graph(g, table, out_dir, {"classes": classes, "source": "linqs", "split_seed": seed})
