"""Extremely randomized trees regression, feature importance, RFE and model files.

Trees are grown on the full training set (no bootstrap). At every node a
random subset of non-constant features is drawn, one threshold per feature is
drawn uniformly inside the feature's range at that node, and the candidate
with the largest variance reduction wins.
"""
from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

MAGIC = b"XTRM"
FORMAT_VERSION = 1
_LEAF = -1


class ModelFormatError(ValueError):
    """Corrupt or truncated model payload."""


class ModelVersionError(ModelFormatError):
    """Model payload written by an unknown format version."""


@dataclass(frozen=True)
class TreesParams:
    n_trees: int = 100
    min_samples_split: int = 2
    max_features: int | float | None = None  # None: all features; float: fraction
    max_depth: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    def n_candidates(self, n_features: int) -> int:
        mf = self.max_features
        if mf is None:
            k = n_features
        elif isinstance(mf, float):
            if not 0.0 < mf <= 1.0:
                raise ValueError("fractional max_features must lie in (0, 1]")
            k = max(1, int(round(mf * n_features)))
        else:
            k = int(mf)
        if not 1 <= k <= n_features:
            raise ValueError(f"max_features={mf} is invalid for {n_features} features")
        return k

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class TrainingMatrix:
    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    feature_names: tuple[str, ...] = ()
    target_name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.groups = np.asarray(self.groups, dtype=object).ravel()
        if self.X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if not (self.X.shape[0] == self.y.size == self.groups.size):
            raise ValueError("rows, targets and groups must have equal length")
        if not self.feature_names:
            self.feature_names = tuple(f"x{i}" for i in range(self.X.shape[1]))
        self.feature_names = tuple(self.feature_names)
        if len(self.feature_names) != self.X.shape[1]:
            raise ValueError("feature_names length does not match X")

    def __len__(self):
        return self.y.size

    def subset(self, rows) -> "TrainingMatrix":
        return TrainingMatrix(self.X[rows], self.y[rows], self.groups[rows], self.feature_names,
                              self.target_name, dict(self.meta))

    def select_features(self, cols: Sequence[int]) -> "TrainingMatrix":
        cols = list(cols)
        return TrainingMatrix(self.X[:, cols], self.y, self.groups,
                              tuple(self.feature_names[c] for c in cols), self.target_name, dict(self.meta))


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray    # int32, -1 at leaves
    threshold: np.ndarray  # float64; go left when x <= threshold
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64 node mean
    gain: np.ndarray       # float64 variance reduction of the split (0 at leaves)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != _LEAF
        while active.any():
            r, n = rows[active], node[active]
            f = self.feature[n]
            go_left = X[r, f] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != _LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(frozen=True)
class TreesModel:
    trees: tuple[Tree, ...]
    feature_names: tuple[str, ...]
    target_name: str = ""
    params: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        # mean as first tree + mean offset, so agreeing trees reproduce their value exactly
        first = self.trees[0].predict(X)
        acc = np.zeros(X.shape[0])
        for t in self.trees[1:]:
            acc += t.predict(X) - first
        out = first + acc / len(self.trees)
        return out[0] if single else out


def _canonical_order(X: np.ndarray, y: np.ndarray, groups: np.ndarray) -> np.ndarray:
    """Row order by (group id, row content hash), independent of ingestion order."""
    keys = []
    for i in range(X.shape[0]):
        digest = hashlib.sha1(X[i].tobytes() + y[i:i + 1].tobytes()).hexdigest()
        keys.append((str(groups[i]), digest))
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.int64)


@njit(cache=True)
def _grow(X, y, k, min_split, max_depth, seed):
    """Grow one tree; rows of each node occupy a contiguous slice of ``idx``."""
    np.random.seed(seed)
    n, d = X.shape
    cap = 2 * n
    feature = np.full(cap, _LEAF, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, _LEAF, np.int32)
    right = np.full(cap, _LEAF, np.int32)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    idx = np.arange(n)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)

    value[0] = y.mean()
    n_nodes = 1
    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, n, 0
    sp = 1
    while sp > 0:
        sp -= 1
        node, a, b, depth = st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp]
        m = b - a
        ymin, ymax, ysum = np.inf, -np.inf, 0.0
        for r in range(a, b):
            v = y[idx[r]]
            ysum += v
            ymin = min(ymin, v)
            ymax = max(ymax, v)
        if ymax == ymin:
            value[node] = ymin  # exact, free of summation rounding
            continue
        if m < min_split or (max_depth >= 0 and depth >= max_depth):
            continue

        order = np.random.permutation(d)
        chosen = 0
        best_score = -np.inf
        best_f, best_thr = -1, 0.0
        for f in order:
            if chosen == k:
                break
            lo, hi = np.inf, -np.inf
            for r in range(a, b):
                v = X[idx[r], f]
                lo = min(lo, v)
                hi = max(hi, v)
            if not hi > lo:
                continue
            chosen += 1
            thr = lo + np.random.random() * (hi - lo)
            nl = 0
            sl = 0.0
            for r in range(a, b):
                if X[idx[r], f] <= thr:
                    nl += 1
                    sl += y[idx[r]]
            nr = m - nl
            if nl == 0 or nr == 0:
                continue
            sr = ysum - sl
            score = sl * sl / nl + sr * sr / nr
            if score > best_score:
                best_score, best_f, best_thr = score, f, thr
        if best_f < 0:
            continue

        # stable partition: left rows first
        tmp = np.empty(m, np.int64)
        nl = 0
        for r in range(a, b):
            if X[idx[r], best_f] <= best_thr:
                tmp[nl] = idx[r]
                nl += 1
        j = nl
        for r in range(a, b):
            if not X[idx[r], best_f] <= best_thr:
                tmp[j] = idx[r]
                j += 1
        idx[a:b] = tmp
        mid = a + nl

        mean_p = ysum / m
        sl = 0.0
        for r in range(a, mid):
            sl += y[idx[r]]
        mean_l = sl / nl
        mean_r = (ysum - sl) / (m - nl)
        sse_p, sse_c = 0.0, 0.0
        for r in range(a, b):
            v = y[idx[r]]
            sse_p += (v - mean_p) ** 2
            sse_c += (v - (mean_l if r < mid else mean_r)) ** 2

        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = max(sse_p - sse_c, 0.0)
        ln, rn = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = ln, rn
        value[ln], value[rn] = mean_l, mean_r
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = rn, mid, b, depth + 1
        sp += 1
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = ln, a, mid, depth + 1
        sp += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], gain[:n_nodes])


def fit(data: TrainingMatrix, params: TreesParams = TreesParams()) -> TreesModel:
    if len(data) < 2:
        raise ValueError("need at least 2 training samples")
    if not (np.isfinite(data.X).all() and np.isfinite(data.y).all()):
        raise ValueError("training data contains non-finite values")
    order = _canonical_order(data.X, data.y, data.groups)
    X, y = np.ascontiguousarray(data.X[order]), data.y[order]
    k = params.n_candidates(X.shape[1])
    depth = -1 if params.max_depth is None else params.max_depth
    seeds = np.random.SeedSequence(params.rng_seed).generate_state(params.n_trees)
    trees = tuple(Tree(*_grow(X, y, k, params.min_samples_split, depth, int(s))) for s in seeds)
    return TreesModel(trees, tuple(data.feature_names), data.target_name, params.to_dict())


def predict(model: TreesModel, features) -> np.ndarray | float:
    return model.predict(features)


def feature_importance(model: TreesModel) -> np.ndarray:
    """Total variance reduction per feature, normalised to sum to 1 (zeros if no split)."""
    total = np.zeros(model.n_features)
    for t in model.trees:
        split = t.feature != _LEAF
        np.add.at(total, t.feature[split], t.gain[split])
    s = total.sum()
    return total / s if s > 0 else total


def rfe_select(data: TrainingMatrix, target_count: int = 9, params: TreesParams = TreesParams()) -> list[int]:
    """Recursive feature elimination down to ``target_count`` features.

    Each round refits on the surviving features and drops the one with the
    lowest importance (lowest original index on ties). Returns surviving
    column indices in ascending order.
    """
    d = data.X.shape[1]
    if target_count > d:
        raise ValueError(f"cannot select {target_count} of {d} features")
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    alive = list(range(d))
    while len(alive) > target_count:
        sub = data.select_features(alive)
        p = params if params.max_features is None or isinstance(params.max_features, float) \
            else TreesParams(**{**params.to_dict(), "max_features": min(params.max_features, len(alive))})
        imp = feature_importance(fit(sub, p))
        alive.pop(int(np.argmin(imp)))
    return alive


# -- persistence -------------------------------------------------------------

def save(model: TreesModel) -> bytes:
    """Serialise a model: magic, version, JSON header, little-endian tree arrays, CRC32."""
    header = json.dumps({"feature_names": list(model.feature_names), "target_name": model.target_name,
                         "params": model.params, "n_trees": len(model.trees)}).encode()
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(header)), header]
    for t in model.trees:
        parts.append(struct.pack("<I", t.n_nodes))
        parts += [t.feature.astype("<i4").tobytes(), t.threshold.astype("<f8").tobytes(),
                  t.left.astype("<i4").tobytes(), t.right.astype("<i4").tobytes(),
                  t.value.astype("<f8").tobytes(), t.gain.astype("<f8").tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def load(payload: bytes) -> TreesModel:
    if len(payload) < 14 or payload[:4] != MAGIC:
        raise ModelFormatError("not a trees model payload")
    version, hlen = struct.unpack_from("<HI", payload, 4)
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    body, crc = payload[:-4], payload[-4:]
    if len(crc) != 4 or struct.unpack("<I", crc)[0] != zlib.crc32(body):
        raise ModelFormatError("checksum mismatch: payload is corrupt or truncated")
    pos = 10
    try:
        header = json.loads(body[pos:pos + hlen].decode())
        pos += hlen
        trees = []
        for _ in range(header["n_trees"]):
            (n,) = struct.unpack_from("<I", body, pos)
            pos += 4
            arrays = []
            for dt in ("<i4", "<f8", "<i4", "<i4", "<f8", "<f8"):
                size = n * np.dtype(dt).itemsize
                if pos + size > len(body):
                    raise ModelFormatError("tree arrays truncated")
                arrays.append(np.frombuffer(body, dt, n, pos).astype(dt[1:]))
                pos += size
            trees.append(Tree(arrays[0].astype(np.int32), arrays[1].astype(np.float64), arrays[2].astype(np.int32),
                              arrays[3].astype(np.int32), arrays[4].astype(np.float64), arrays[5].astype(np.float64)))
    except (struct.error, KeyError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model payload: {exc}") from None
    if pos != len(body):
        raise ModelFormatError("trailing bytes after tree arrays")
    model = TreesModel(tuple(trees), tuple(header["feature_names"]), header["target_name"], header["params"])
    for t in model.trees:
        if (t.feature >= model.n_features).any() or not np.isfinite(t.value).all():
            raise ModelFormatError("tree references an unknown feature or holds non-finite leaves")
    return model


def save_file(model: TreesModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save(model))


def load_file(path) -> TreesModel:
    with open(path, "rb") as fh:
        return load(fh.read())
