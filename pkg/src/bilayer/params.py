"""Trainable parameter blocks, column bookkeeping, checkpoint serialization.

The embedding matrix holds one column per symbol that can fire in the index
layer: entities, classes, attributes, binary predicates, and instances.
Columns are kept in canonical order (entities, classes, attributes, binary
predicates, instances, each group in registration order), which is exactly the
order the vocabulary JSON preserves, so checkpoints align by name across
export/import even though integer ids are session local.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .vocab import Vocabulary

CHECKPOINT_FORMAT = "bilayer-checkpoint"
CHECKPOINT_VERSION = 1


class ParamError(ValueError):
    pass


class ColumnMap:
    """Symbol id <-> embedding column position, plus index-set column arrays."""

    def __init__(self, vocab: Vocabulary):
        entities = list(vocab.entities)
        classes = list(vocab.classes)
        attributes = list(vocab.attributes)
        predicates = list(vocab.binary_predicates)
        instances = list(vocab.instances)
        ids = entities + classes + attributes + predicates + instances
        self.ids = np.array(ids, dtype=np.int64)
        self.n_columns = len(ids)
        self.kind_counts = (
            len(entities), len(classes), len(attributes), len(predicates), len(instances),
        )
        self._pos = np.full(len(vocab), -1, dtype=np.int64)
        self._pos[self.ids] = np.arange(self.n_columns)

        n_e, n_c, n_a, n_p, n_t = self.kind_counts
        offsets = np.cumsum([0, n_e, n_c, n_a, n_p, n_t])
        self.entity_cols = np.arange(offsets[0], offsets[1])
        self.class_cols = np.arange(offsets[1], offsets[2])
        self.attribute_cols = np.arange(offsets[2], offsets[3])
        self.predicate_cols = np.arange(offsets[3], offsets[4])
        self.instance_cols = np.arange(offsets[4], offsets[5])
        self.concept_cols = np.arange(offsets[0], offsets[3])
        self.label_cols = np.arange(offsets[1], offsets[3])
        self.family_cols = {
            fam: np.sort(np.array([self.col_of(i) for i in members], dtype=np.int64))
            for fam, members in vocab.families.items()
        }
        # position of a column inside the concept / instance / predicate lists
        self._concept_pos = np.full(self.n_columns, -1, dtype=np.int64)
        self._concept_pos[self.concept_cols] = np.arange(self.concept_cols.size)
        self._instance_pos = np.full(self.n_columns, -1, dtype=np.int64)
        self._instance_pos[self.instance_cols] = np.arange(self.instance_cols.size)
        self._predicate_pos = np.full(self.n_columns, -1, dtype=np.int64)
        self._predicate_pos[self.predicate_cols] = np.arange(self.predicate_cols.size)

    def col_of(self, symbol_id: int) -> int:
        pos = int(self._pos[symbol_id])
        if pos < 0:
            raise ParamError(f"symbol id {symbol_id} has no embedding column")
        return pos

    def cols_of(self, symbol_ids) -> np.ndarray:
        pos = self._pos[np.asarray(symbol_ids, dtype=np.int64)]
        if np.any(pos < 0):
            raise ParamError("some symbol ids have no embedding column")
        return pos

    def id_of_col(self, col: int) -> int:
        return int(self.ids[col])

    def concept_pos(self, cols) -> np.ndarray:
        return self._concept_pos[np.asarray(cols, dtype=np.int64)]

    def instance_pos(self, cols) -> np.ndarray:
        return self._instance_pos[np.asarray(cols, dtype=np.int64)]

    def predicate_pos(self, cols) -> np.ndarray:
        return self._predicate_pos[np.asarray(cols, dtype=np.int64)]


@dataclass
class NetConfig:
    rep_dim: int = 64       # width of the representation layer
    ctx_dim: int = 32       # width of the recurrent context layer
    feature_dim: int = 48   # width of incoming perceptual feature vectors
    tied: bool = True       # shared up/down embedding matrix; False splits them
    dtype: str = "float32"

    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {
            "rep_dim": self.rep_dim,
            "ctx_dim": self.ctx_dim,
            "feature_dim": self.feature_dim,
            "tied": self.tied,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetConfig":
        return cls(**data)


def _kaiming(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class NetParams:
    config: NetConfig
    emb: np.ndarray          # (rep_dim, n_columns) shared embedding columns
    ctx_in: np.ndarray       # (ctx_dim, rep_dim)    representation -> context
    ctx_rec: np.ndarray      # (ctx_dim, ctx_dim)    recurrent context weights
    ctx_out: np.ndarray      # (rep_dim, ctx_dim)    context -> representation
    pooled: np.ndarray       # (rep_dim,)            stand-in instance embedding
    enc_w: np.ndarray        # (rep_dim, feature_dim) feature adapter
    enc_b: np.ndarray        # (rep_dim,)
    emb_up: np.ndarray | None = None  # untied readout matrix, same shape as emb
    kind_counts: tuple[int, int, int, int, int] = (0, 0, 0, 0, 0)

    @property
    def readout(self) -> np.ndarray:
        """Matrix whose columns score index units from a representation."""
        return self.emb if self.config.tied else self.emb_up

    @property
    def n_columns(self) -> int:
        return self.emb.shape[1]

    @classmethod
    def init(cls, vocab: Vocabulary, config: NetConfig, rng: np.random.Generator) -> "NetParams":
        cmap = ColumnMap(vocab)
        r, h, f = config.rep_dim, config.ctx_dim, config.feature_dim
        dt = config.np_dtype()
        emb = _kaiming(rng, (r, cmap.n_columns), r, dt)
        emb_up = None if config.tied else _kaiming(rng, (r, cmap.n_columns), r, dt)
        params = cls(
            config=config,
            emb=emb,
            ctx_in=_kaiming(rng, (h, r), r, dt),
            ctx_rec=_kaiming(rng, (h, h), h, dt),
            ctx_out=_kaiming(rng, (r, h), h, dt),
            pooled=np.zeros(r, dtype=dt),
            enc_w=_kaiming(rng, (r, f), f, dt),
            enc_b=np.zeros(r, dtype=dt),
            emb_up=emb_up,
            kind_counts=cmap.kind_counts,
        )
        if cmap.instance_cols.size:
            params.pooled[:] = emb[:, cmap.instance_cols].mean(axis=1)
        return params

    def blocks(self) -> dict[str, np.ndarray]:
        out = {
            "emb": self.emb,
            "ctx_in": self.ctx_in,
            "ctx_rec": self.ctx_rec,
            "ctx_out": self.ctx_out,
            "pooled": self.pooled,
            "enc_w": self.enc_w,
            "enc_b": self.enc_b,
        }
        if not self.config.tied:
            out["emb_up"] = self.emb_up
        return out

    def copy(self) -> "NetParams":
        return NetParams(
            config=self.config,
            emb=self.emb.copy(),
            ctx_in=self.ctx_in.copy(),
            ctx_rec=self.ctx_rec.copy(),
            ctx_out=self.ctx_out.copy(),
            pooled=self.pooled.copy(),
            enc_w=self.enc_w.copy(),
            enc_b=self.enc_b.copy(),
            emb_up=None if self.emb_up is None else self.emb_up.copy(),
            kind_counts=self.kind_counts,
        )

    def astype(self, dtype: str) -> "NetParams":
        dt = np.dtype(dtype)
        out = self.copy()
        out.config = NetConfig(**{**self.config.to_dict(), "dtype": dtype})
        for name, arr in out.blocks().items():
            setattr(out, name, arr.astype(dt))
        return out

    def grow(self, vocab: Vocabulary, rng: np.random.Generator) -> ColumnMap:
        """Add freshly initialized columns for symbols registered after init.

        Registration is append-only per kind, so every existing column keeps
        its values bit for bit; only new columns are inserted at their
        canonical positions.  Returns the new column map.
        """
        cmap = ColumnMap(vocab)
        old = self.kind_counts
        new = cmap.kind_counts
        if any(n < o for n, o in zip(new, old)):
            raise ParamError("vocabulary shrank; cannot grow parameters")
        dt = self.config.np_dtype()
        r = self.config.rep_dim

        def rebuild(mat: np.ndarray) -> np.ndarray:
            segments = []
            start = 0
            for n_old, n_new in zip(old, new):
                segments.append(mat[:, start:start + n_old])
                if n_new > n_old:
                    segments.append(_kaiming(rng, (r, n_new - n_old), r, dt))
                start += n_old
            return np.concatenate(segments, axis=1)

        self.emb = rebuild(self.emb)
        if self.emb_up is not None:
            self.emb_up = rebuild(self.emb_up)
        self.kind_counts = new
        return cmap


_TENSOR_ORDER = ("emb", "emb_up", "ctx_in", "ctx_rec", "ctx_out", "pooled", "enc_w", "enc_b")


def save_checkpoint(params: NetParams, vocab: Vocabulary, base_path: str) -> tuple[str, str]:
    """Write `<base>.json` (manifest) and `<base>.bin` (little-endian blob)."""
    manifest_path = base_path + ".json"
    blob_path = base_path + ".bin"
    tensors = []
    offset = 0
    chunks = []
    blocks = params.blocks()
    for name in _TENSOR_ORDER:
        arr = blocks.get(name)
        if arr is None:
            continue
        raw = np.ascontiguousarray(arr, dtype="<f4" if params.config.dtype == "float32" else "<f8")
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": raw.nbytes}
        )
        offset += raw.nbytes
        chunks.append(raw.tobytes())
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "kind_counts": list(params.kind_counts),
        "vocab_sha256": vocab.digest(),
        "tensors": tensors,
    }
    with open(manifest_path, "w", encoding="utf-8") as fp:
        json.dump(manifest, fp, indent=2, sort_keys=True)
        fp.write("\n")
    with open(blob_path, "wb") as fp:
        fp.write(b"".join(chunks))
    return manifest_path, blob_path


def load_checkpoint(base_path: str, vocab: Vocabulary) -> NetParams:
    manifest_path = base_path + ".json"
    blob_path = base_path + ".bin"
    if not (os.path.exists(manifest_path) and os.path.exists(blob_path)):
        raise ParamError(f"checkpoint {base_path!r} not found")
    with open(manifest_path, "r", encoding="utf-8") as fp:
        manifest = json.load(fp)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ParamError("not a checkpoint manifest")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ParamError(f"unsupported checkpoint version {manifest.get('version')!r}")
    if manifest["vocab_sha256"] != vocab.digest():
        raise ParamError("checkpoint was saved against a different vocabulary")
    config = NetConfig.from_dict(manifest["config"])
    with open(blob_path, "rb") as fp:
        blob = fp.read()
    wire = "<f4" if config.dtype == "float32" else "<f8"
    arrays: dict[str, np.ndarray] = {}
    for spec in manifest["tensors"]:
        raw = blob[spec["offset"]: spec["offset"] + spec["nbytes"]]
        arr = np.frombuffer(raw, dtype=wire).reshape(spec["shape"]).astype(config.np_dtype())
        arrays[spec["name"]] = arr
    expected = {"emb", "ctx_in", "ctx_rec", "ctx_out", "pooled", "enc_w", "enc_b"}
    if not config.tied:
        expected.add("emb_up")
    missing = expected.difference(arrays)
    if missing:
        raise ParamError(f"checkpoint missing tensors {sorted(missing)}")
    params = NetParams(
        config=config,
        emb=arrays["emb"],
        ctx_in=arrays["ctx_in"],
        ctx_rec=arrays["ctx_rec"],
        ctx_out=arrays["ctx_out"],
        pooled=arrays["pooled"],
        enc_w=arrays["enc_w"],
        enc_b=arrays["enc_b"],
        emb_up=arrays.get("emb_up"),
        kind_counts=tuple(manifest["kind_counts"]),
    )
    cmap = ColumnMap(vocab)
    if params.emb.shape != (config.rep_dim, cmap.n_columns):
        raise ParamError("checkpoint embedding shape does not match vocabulary")
    return params


def params_digest(params: NetParams) -> str:
    h = hashlib.sha256()
    for name in _TENSOR_ORDER:
        arr = params.blocks().get(name)
        if arr is None:
            continue
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
