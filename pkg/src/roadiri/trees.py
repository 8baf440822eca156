"""From-scratch CART regression trees, bagged forests and least-squares boosting."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import CorruptModel, DegenerateData, ModelEmpty, SchemaVersionMismatch
from .spectral import FEATURE_NAMES, SegmentFeatures

MAGIC = "roadiri-ensemble"
VERSION = "v1"


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float  # rows with x[feature] <= threshold go left
    left: "Node"
    right: "Node"


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class FitConfig:
    n_trees: int = 300
    max_depth: int | None = 6
    min_samples_leaf: int = 5
    feature_subsample: float | None = None  # None: 1/3 bagged, 1.0 boosted
    row_subsample: float | None = None  # None: 1.0 bagged (with replacement), 0.8 boosted
    bootstrap: bool = True  # bagged only; False fits every tree on the full data
    learning_rate: float = 0.1
    seed: int = 0
    split_mode: str = "exact"  # or "hist"
    n_bins: int = 256

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        for name in ("feature_subsample", "row_subsample"):
            v = getattr(self, name)
            if v is not None and not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1]")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.split_mode not in ("exact", "hist"):
            raise ValueError("split_mode must be 'exact' or 'hist'")

    def resolved(self, mode: str) -> "FitConfig":
        fs = self.feature_subsample
        rs = self.row_subsample
        if fs is None:
            fs = 1.0 / 3.0 if mode == "bagged" else 1.0
        if rs is None:
            rs = 1.0 if mode == "bagged" else 0.8
        return replace(self, feature_subsample=fs, row_subsample=rs)


# split search -------------------------------------------------------------


def _midpoint(a: float, b: float) -> float:
    m = 0.5 * (a + b)
    return a if m >= b else m


def _best_exact(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (score, threshold) on one feature, score = SL^2/nL + SR^2/nR."""
    n = x.size
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    csum = np.cumsum(ys)
    i = np.arange(min_leaf, n - min_leaf + 1)
    valid = xs[i - 1] < xs[i]
    if not np.any(valid):
        return None
    i = i[valid]
    sl = csum[i - 1]
    sr = csum[-1] - sl
    score = sl * sl / i + sr * sr / (n - i)
    k = int(np.argmax(score))
    j = int(i[k])
    return float(score[k]), _midpoint(float(xs[j - 1]), float(xs[j]))


def _best_hist(codes: np.ndarray, edges: np.ndarray, y: np.ndarray, min_leaf: int):
    nb = edges.size + 1
    cnt = np.bincount(codes, minlength=nb)
    tot = np.bincount(codes, weights=y, minlength=nb)
    cc = np.cumsum(cnt)[:-1]
    cs = np.cumsum(tot)[:-1]
    n = y.size
    ok = (cc >= min_leaf) & (n - cc >= min_leaf) & (cnt[:-1] > 0)
    if not np.any(ok):
        return None
    sr = tot.sum() - cs
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(ok, cs * cs / cc + sr * sr / (n - cc), -np.inf)
    k = int(np.argmax(score))
    return float(score[k]), float(edges[k])


def _bin_edges(x: np.ndarray, n_bins: int) -> np.ndarray:
    u = np.unique(x)
    if u.size <= n_bins:
        return np.array([_midpoint(a, b) for a, b in zip(u[:-1], u[1:])])
    q = np.quantile(x, np.linspace(0, 1, n_bins + 1)[1:-1], method="lower")
    return np.unique(q)


class _Builder:
    def __init__(self, X, y, cfg: FitConfig, rng: np.random.Generator, feature_fraction: float):
        self.X, self.y, self.cfg, self.rng = X, y, cfg, rng
        p = X.shape[1]
        self.k_features = max(1, int(round(feature_fraction * p)))
        self.p = p
        if cfg.split_mode == "hist":
            self.edges = [_bin_edges(X[:, f], cfg.n_bins) for f in range(p)]
            self.codes = np.column_stack(
                [np.searchsorted(e, X[:, f], side="left") for f, e in enumerate(self.edges)]
            ) if p else np.empty((X.shape[0], 0), dtype=int)

    def features(self) -> np.ndarray:
        if self.k_features >= self.p:
            return np.arange(self.p)
        return np.sort(self.rng.choice(self.p, self.k_features, replace=False))

    def build(self, idx: np.ndarray, depth: int) -> Node:
        y = self.y[idx]
        n = idx.size
        leaf = Leaf(float(np.mean(y)))
        cfg = self.cfg
        if (cfg.max_depth is not None and depth >= cfg.max_depth) or n < 2 * cfg.min_samples_leaf:
            return leaf
        if np.all(y == y[0]):
            return leaf
        total = float(y.sum())
        parent = total * total / n
        best = None
        for f in self.features():
            if cfg.split_mode == "exact":
                r = _best_exact(self.X[idx, f], y, cfg.min_samples_leaf)
            else:
                r = _best_hist(self.codes[idx, f], self.edges[f], y, cfg.min_samples_leaf)
            if r is not None and (best is None or r[0] > best[0]):
                best = (r[0], int(f), r[1])
        if best is None or best[0] <= parent * (1 + 1e-12):
            return leaf
        _, f, thr = best
        go_left = self.X[idx, f] <= thr
        return Split(f, thr, self.build(idx[go_left], depth + 1), self.build(idx[~go_left], depth + 1))


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order that depends only on row contents (last key is primary)."""
    keys = [y] + [X[:, f] for f in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _check(X: np.ndarray, y: np.ndarray, cfg: FitConfig) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError("X must be (n, p) and y (n,)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in training data")
    if y.size < 2 * cfg.min_samples_leaf or y.size == 0:
        raise DegenerateData(f"{y.size} rows, need at least {2 * cfg.min_samples_leaf}")
    return X, y


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    cfg: FitConfig = FitConfig(),
    rng: np.random.Generator | None = None,
    feature_fraction: float = 1.0,
) -> Node:
    """Greedy CART minimising squared error.

    Ties in the split objective go to the lowest feature index, then the
    lowest threshold. Rows are put in canonical order first, so the result
    does not depend on the order of the training rows.
    """
    X, y = _check(X, y, cfg)
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    builder = _Builder(X, y, cfg, rng or np.random.default_rng(cfg.seed), feature_fraction)
    return builder.build(np.arange(y.size), 0)


def tree_predict(node: Node, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty(X.shape[0])
    _fill(node, X, np.arange(X.shape[0]), out)
    return out


def _fill(node: Node, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        out[idx] = node.value
        return
    left = X[idx, node.feature] <= node.threshold
    if np.any(left):
        _fill(node.left, X, idx[left], out)
    if not np.all(left):
        _fill(node.right, X, idx[~left], out)


def tree_value(node: Node, x) -> float:
    while isinstance(node, Split):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def tree_depth(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def used_features(node: Node) -> set[int]:
    if isinstance(node, Leaf):
        return set()
    return {node.feature} | used_features(node.left) | used_features(node.right)


# ensembles ----------------------------------------------------------------


@dataclass
class EnsembleModel:
    mode: str  # "bagged" | "boosted"
    trees: list[Node]
    learning_rate: float = 1.0
    base_score: float = 0.0
    feature_names: tuple[str, ...] = FEATURE_NAMES
    training_meta: dict = field(default_factory=dict)
    # transient training diagnostics, not serialized
    train_rmse: list[float] = field(default_factory=list, compare=False, repr=False)
    train_residuals: np.ndarray | None = field(default=None, compare=False, repr=False)

    def predict(self, X) -> np.ndarray:
        return predict_batch(self, X)


def fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    order = canonical_order(X, y)
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X[order], dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y[order], dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def _meta(cfg: FitConfig, X: np.ndarray, y: np.ndarray) -> dict:
    return {
        "seed": cfg.seed,
        "n_trees": cfg.n_trees,
        "max_depth": cfg.max_depth,
        "min_samples_leaf": cfg.min_samples_leaf,
        "feature_subsample": cfg.feature_subsample,
        "row_subsample": cfg.row_subsample,
        "bootstrap": cfg.bootstrap,
        "learning_rate": cfg.learning_rate,
        "split_mode": cfg.split_mode,
        "n_rows": int(y.size),
        "dataset": fingerprint(X, y),
    }


def _tree_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def fit_bagged(X, y, cfg: FitConfig = FitConfig()) -> EnsembleModel:
    """Average of trees grown on bootstrap resamples with per-split feature sampling.

    Each tree draws from its own RNG stream spawned from ``cfg.seed``, so
    trees could be grown in any order or in parallel with the same result.
    """
    cfg = cfg.resolved("bagged")
    X, y = _check(X, y, cfg)
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    n = y.size
    m = max(1, int(round(cfg.row_subsample * n)))
    if cfg.bootstrap and m < 2 * cfg.min_samples_leaf:
        raise DegenerateData("row subsample smaller than two leaves")
    trees = []
    for rng in _tree_rngs(cfg.seed, cfg.n_trees):
        if cfg.bootstrap:
            rows = rng.integers(0, n, m)
            trees.append(fit_tree(X[rows], y[rows], cfg, rng, cfg.feature_subsample))
        else:
            trees.append(fit_tree(X, y, cfg, rng, cfg.feature_subsample))
    model = EnsembleModel("bagged", trees, 1.0, 0.0, FEATURE_NAMES[: X.shape[1]], _meta(cfg, X, y))
    return model


def fit_boosted(X, y, cfg: FitConfig = FitConfig()) -> EnsembleModel:
    """Least-squares gradient boosting: F0 = mean(y), then trees on residuals."""
    cfg = cfg.resolved("boosted")
    X, y = _check(X, y, cfg)
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    n = y.size
    m = max(1, int(round(cfg.row_subsample * n)))
    if m < 2 * cfg.min_samples_leaf:
        raise DegenerateData("row subsample smaller than two leaves")
    base = float(np.mean(y))
    F = np.full(n, base)
    lr = cfg.learning_rate
    trees = []
    history = [float(np.sqrt(np.mean((y - F) ** 2)))]
    for rng in _tree_rngs(cfg.seed, cfg.n_trees):
        rows = np.arange(n) if m == n else np.sort(rng.choice(n, m, replace=False))
        resid = y - F
        tree = fit_tree(X[rows], resid[rows], cfg, rng, cfg.feature_subsample)
        trees.append(tree)
        F = F + lr * tree_predict(tree, X)
        history.append(float(np.sqrt(np.mean((y - F) ** 2))))
    model = EnsembleModel("boosted", trees, lr, base, FEATURE_NAMES[: X.shape[1]], _meta(cfg, X, y))
    model.train_rmse = history
    # residuals in the caller's row order
    resid = np.empty(n)
    resid[order] = y - F
    model.train_residuals = resid
    return model


def fit_single(X, y, cfg: FitConfig = FitConfig()) -> EnsembleModel:
    """One full-data CART wrapped as a bagged model of size one."""
    cfg = replace(cfg, n_trees=1, bootstrap=False, feature_subsample=1.0, row_subsample=1.0)
    return fit_bagged(X, y, cfg)


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, SegmentFeatures):
        return X.vector()[None, :]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], SegmentFeatures):
        return np.vstack([r.vector() for r in X])
    return np.atleast_2d(np.asarray(X, dtype=float))


def predict_batch(model: EnsembleModel, X) -> np.ndarray:
    if not model.trees:
        raise ModelEmpty("model has no trees")
    X = _as_matrix(X)
    if model.mode == "boosted":
        acc = np.full(X.shape[0], model.base_score)
        for t in model.trees:
            acc = acc + model.learning_rate * tree_predict(t, X)
        return acc
    acc = np.zeros(X.shape[0])
    for t in model.trees:
        acc = acc + tree_predict(t, X)
    return acc / len(model.trees)


def predict(model: EnsembleModel, x) -> float:
    """Prediction for one feature vector (or SegmentFeatures row), in/mi."""
    if not model.trees:
        raise ModelEmpty("model has no trees")
    v = x.vector() if isinstance(x, SegmentFeatures) else np.asarray(x, dtype=float)
    if model.mode == "boosted":
        acc = model.base_score
        for t in model.trees:
            acc = acc + model.learning_rate * tree_value(t, v)
        return float(acc)
    acc = 0.0
    for t in model.trees:
        acc = acc + tree_value(t, v)
    return float(acc / len(model.trees))


# serialization --------------------------------------------------------------


def _dump_node(node: Node, out: list[str]) -> None:
    if isinstance(node, Leaf):
        out.append(f"(L {node.value!r})")
        return
    out.append(f"(S {node.feature} {node.threshold!r} ")
    _dump_node(node.left, out)
    out.append(" ")
    _dump_node(node.right, out)
    out.append(")")


def dumps_tree(node: Node) -> str:
    parts: list[str] = []
    _dump_node(node, parts)
    return "".join(parts)


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def loads_tree(text: str) -> Node:
    tokens = _TOKEN.findall(text)
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise CorruptModel("tree line ends early")
        tok = tokens[pos]
        pos += 1
        return tok

    def node() -> Node:
        if take() != "(":
            raise CorruptModel("expected '('")
        kind = take()
        try:
            if kind == "L":
                out: Node = Leaf(float(take()))
            elif kind == "S":
                f = int(take())
                thr = float(take())
                out = Split(f, thr, node(), node())
            else:
                raise CorruptModel(f"unknown node kind {kind!r}")
        except ValueError as exc:
            raise CorruptModel(str(exc)) from None
        if take() != ")":
            raise CorruptModel("expected ')'")
        return out

    tree = node()
    if pos != len(tokens):
        raise CorruptModel("trailing tokens after tree")
    return tree


def save_model(model: EnsembleModel) -> bytes:
    lines = [
        f"{MAGIC} {VERSION}",
        f"mode {model.mode}",
        f"learning_rate {model.learning_rate!r}",
        f"base_score {model.base_score!r}",
        "features " + ",".join(model.feature_names),
        "meta " + json.dumps(model.training_meta, sort_keys=True),
        f"trees {len(model.trees)}",
    ]
    lines.extend(dumps_tree(t) for t in model.trees)
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_model(data: bytes | str) -> EnsembleModel:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.split("\n")
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != MAGIC:
        raise CorruptModel("not a model file")
    if head[1] != VERSION:
        raise SchemaVersionMismatch(f"model version {head[1]!r}, expected {VERSION!r}")

    def field_(i: int, key: str) -> str:
        if i >= len(lines) or not lines[i].startswith(key + " "):
            raise CorruptModel(f"missing {key!r} line")
        return lines[i][len(key) + 1 :]

    try:
        mode = field_(1, "mode")
        lr = float(field_(2, "learning_rate"))
        base = float(field_(3, "base_score"))
        names = tuple(field_(4, "features").split(","))
        meta = json.loads(field_(5, "meta"))
        n = int(field_(6, "trees"))
    except ValueError as exc:
        raise CorruptModel(str(exc)) from None
    if mode not in ("bagged", "boosted"):
        raise CorruptModel(f"unknown mode {mode!r}")
    body = lines[7 : 7 + n]
    if len(body) != n or len(lines) < 8 + n or lines[7 + n] != "end":
        raise CorruptModel("model file is truncated")
    trees = [loads_tree(b) for b in body]
    return EnsembleModel(mode, trees, lr, base, names, meta)
