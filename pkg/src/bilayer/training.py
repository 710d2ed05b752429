"""Training: example construction, Adam, self-labeled growth, consolidation.

Examples are per-statement: each unary quadruple contributes one family target
(plus the identity pseudo-statement tying an entity to itself at the instances
where it was observed), each binary quadruple one subject/object/predicate
chain.  Teacher forcing injects ground-truth indices at every commitment.

Generalized statements: with probability `inject_rho` the injected subject (or
object) index is swapped for one of the entity's own class/attribute labels and
the matching index target follows the swap, while family targets keep the
entity's actual labels.  Aggregated over entities this trains the label
conditionals P(c2 | c1).  Episodic batches are never swapped; they memorize.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from typing import Callable, IO

import numpy as np

from . import graph
from .graph import Batch
from .network import NumericsError, encode_input, context_step, context_out, index_scores, sigmoid
from .params import ColumnMap, NetParams
from .triple_store import UNKNOWN, TripleStore
from .vocab import IDENTITY_FAMILY, Kind, Vocabulary
from .world import GroundTruthWorld, substream


class TrainError(ValueError):
    pass


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, mode: str, detail: str):
        super().__init__(f"training diverged at epoch {epoch} ({mode}): {detail}")
        self.epoch = epoch
        self.mode = mode
        self.detail = detail


ALL_MODES = ("perception", "episodic", "semantic")


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    modes: tuple = ALL_MODES
    weight_perception: float = 1.0
    weight_episodic: float = 1.0
    weight_semantic: float = 1.0
    inject_rho: float = 0.5
    inject_semantic: bool = True
    dropout: float = 0.0
    direct: bool = False            # feature-only variant (perception heads only)
    hidden_families: tuple = ()     # kept out of perception targets
    excluded_families: tuple = ()   # kept out of every loss
    freeze_emb: bool = False
    freeze_ctx_in: bool = False
    freeze_ctx_rec: bool = False
    freeze_ctx_out: bool = False
    freeze_pooled: bool = False
    freeze_enc: bool = False
    ssl_learning_rate: float = 1e-5
    ssl_epochs: int = 20
    novelty_threshold: float = 0.6

    def __post_init__(self) -> None:
        if isinstance(self.modes, list):
            self.modes = tuple(self.modes)
        if isinstance(self.hidden_families, list):
            self.hidden_families = tuple(self.hidden_families)
        if isinstance(self.excluded_families, list):
            self.excluded_families = tuple(self.excluded_families)
        if self.learning_rate <= 0 or self.ssl_learning_rate <= 0:
            raise TrainError("learning rates must be positive")
        if self.batch_size < 1:
            raise TrainError("batch_size must be at least 1")
        if self.epochs < 0 or self.ssl_epochs < 0:
            raise TrainError("epoch counts must be nonnegative")
        if not 0.0 <= self.inject_rho <= 1.0:
            raise TrainError("inject_rho must be in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise TrainError("dropout must be in [0, 1)")
        bad = [m for m in self.modes if m not in ALL_MODES]
        if bad:
            raise TrainError(f"unknown modes {bad}")
        if self.direct and tuple(self.modes) != ("perception",):
            raise TrainError("the direct variant trains on perception batches only")

    def frozen_blocks(self) -> frozenset:
        out = set()
        if self.freeze_emb:
            out |= {"emb", "emb_up"}
        if self.freeze_ctx_in:
            out.add("ctx_in")
        if self.freeze_ctx_rec:
            out.add("ctx_rec")
        if self.freeze_ctx_out:
            out.add("ctx_out")
        if self.freeze_pooled:
            out.add("pooled")
        if self.freeze_enc:
            out |= {"enc_w", "enc_b"}
        return frozenset(out)

    def mode_weight(self, mode: str) -> float:
        return {
            "perception": self.weight_perception,
            "episodic": self.weight_episodic,
            "semantic": self.weight_semantic,
        }[mode]

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("modes", "hidden_families", "excluded_families"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


# -- example construction --------------------------------------------------------


def memory_examples(
    store: TripleStore, vocab: Vocabulary, excluded_families: tuple = ()
) -> tuple[list[dict], list[dict]]:
    """Per-statement examples from the store's positives, plus one identity
    pseudo-statement per (entity, instance) observation."""
    ha = vocab.has_attribute
    excluded = set(excluded_families)
    unary: list[dict] = []
    binary: list[dict] = []
    observed: set[tuple[int, int]] = set()
    for s, p, o, t in store.iter_positive():
        observed.add((s, t))
        if p == ha:
            fam = vocab.family_of(o)
            if fam in excluded:
                continue
            unary.append({"t": t, "s": s, "fam": fam, "o": o})
        else:
            if vocab.kind_of(o) is Kind.ENTITY:
                observed.add((o, t))
            binary.append({"t": t, "s": s, "p": p, "o": o})
    for s, t in sorted(observed):
        unary.append({"t": t, "s": s, "fam": IDENTITY_FAMILY, "o": s})
    return unary, binary


def perception_examples(
    world: GroundTruthWorld,
    vocab: Vocabulary,
    hidden_families: tuple = (),
    kinds: tuple = ("train", "ex_train"),
) -> tuple[list[dict], list[dict]]:
    """Feature-bearing examples from scenes that are registered instances."""
    hidden = set(hidden_families)
    unary: list[dict] = []
    binary: list[dict] = []
    for scene in world.scenes_of_kind(*kinds):
        if not scene.instance:
            continue
        t = vocab.id_of(scene.name)
        for m in scene.members:
            rec = world.entity_record(m)
            s = vocab.id_of(m)
            base = {"t": t, "s": s, "scene": scene.scene_key, "bb": scene.bb_key(m)}
            for fam, label in rec.labels.items():
                if fam in hidden:
                    continue
                unary.append({**base, "fam": fam, "o": vocab.id_of(label)})
            unary.append({**base, "fam": IDENTITY_FAMILY, "o": s})
        for i, (s, p, o) in enumerate(scene.binaries):
            binary.append(
                {
                    "t": t, "s": vocab.id_of(s), "p": vocab.id_of(p), "o": vocab.id_of(o),
                    "scene": scene.scene_key, "s_bb": scene.bb_key(s),
                    "o_bb": scene.bb_key(o), "rel": scene.rel_key(i),
                }
            )
    return unary, binary


def injection_pool(
    store: TripleStore, vocab: Vocabulary, excluded_families: tuple = ()
) -> dict[int, np.ndarray]:
    """Per entity: the labels eligible to replace its index in a swap."""
    ha = vocab.has_attribute
    excluded = set(excluded_families)
    pool: dict[int, set] = {}
    for s, p, o, t in store.iter_positive():
        if p == ha and vocab.family_of(o) not in excluded:
            pool.setdefault(s, set()).add(o)
    return {s: np.array(sorted(v), dtype=np.int64) for s, v in pool.items()}


def _chunks(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i: i + size]


def build_batches(
    unary: list[dict],
    binary: list[dict],
    *,
    mode: str,
    cmap: ColumnMap,
    batch_size: int,
    rng: np.random.Generator,
    rho: float = 0.0,
    pool: dict[int, np.ndarray] | None = None,
    features: dict[str, np.ndarray] | None = None,
    direct: bool = False,
) -> list[Batch]:
    """Shuffle, apply index swaps, resolve ids to columns, group into batches."""

    def swapped(eid: int) -> int:
        if rho > 0.0 and pool is not None and rng.random() < rho:
            options = pool.get(eid)
            if options is not None and options.size:
                return int(options[int(rng.integers(options.size))])
        return eid

    def stack(exs: list[dict], key: str) -> np.ndarray | None:
        if features is None:
            return None
        return np.stack([features[ex[key]] for ex in exs])

    batches: list[Batch] = []
    if unary:
        for chunk in _chunks(rng.permutation(len(unary)), batch_size):
            exs = [unary[int(i)] for i in chunk]
            inj = [ex["s"] if ex["fam"] == IDENTITY_FAMILY else swapped(ex["s"]) for ex in exs]
            fam_rows: dict[str, list[int]] = {}
            fam_targets: dict[str, list[int]] = {}
            for row, ex in enumerate(exs):
                fam_rows.setdefault(ex["fam"], []).append(row)
                fam_targets.setdefault(ex["fam"], []).append(ex["o"])
            batches.append(
                Batch(
                    mode=mode, arity="unary",
                    inst_cols=None if mode == "semantic" else cmap.cols_of([ex["t"] for ex in exs]),
                    subj_inject_cols=cmap.cols_of(inj),
                    fam_rows={f: np.asarray(r, dtype=np.int64) for f, r in fam_rows.items()},
                    fam_target_cols={f: cmap.cols_of(t) for f, t in fam_targets.items()},
                    feat_scene=stack(exs, "scene"),
                    feat_subj=stack(exs, "bb"),
                    direct=direct,
                )
            )
    if binary:
        for chunk in _chunks(rng.permutation(len(binary)), batch_size):
            exs = [binary[int(i)] for i in chunk]
            batches.append(
                Batch(
                    mode=mode, arity="binary",
                    inst_cols=None if mode == "semantic" else cmap.cols_of([ex["t"] for ex in exs]),
                    subj_inject_cols=cmap.cols_of([swapped(ex["s"]) for ex in exs]),
                    obj_inject_cols=cmap.cols_of([swapped(ex["o"]) for ex in exs]),
                    pred_cols=cmap.cols_of([ex["p"] for ex in exs]),
                    feat_scene=stack(exs, "scene"),
                    feat_subj=stack(exs, "s_bb"),
                    feat_obj=stack(exs, "o_bb"),
                    feat_pred=stack(exs, "rel"),
                    direct=direct,
                )
            )
    return batches


# -- optimizer ---------------------------------------------------------------------


class Adam:
    """Adam with bias correction; frozen blocks and masked embedding columns
    are skipped exactly (their parameters stay bit-identical)."""

    def __init__(
        self,
        params: NetParams,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = learning_rate
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.blocks().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.blocks().items()}

    def step(
        self,
        params: NetParams,
        grads: dict[str, np.ndarray],
        frozen: frozenset = frozenset(),
        emb_col_mask: np.ndarray | None = None,
    ) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in params.blocks().items():
            if name in frozen:
                continue
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if emb_col_mask is not None and name in ("emb", "emb_up"):
                update = update * emb_col_mask
            p -= update.astype(p.dtype)


# -- training loop -------------------------------------------------------------------


def train(
    params: NetParams,
    cmap: ColumnMap,
    vocab: Vocabulary,
    store: TripleStore,
    config: TrainConfig,
    world: GroundTruthWorld | None = None,
    emb_col_mask: np.ndarray | None = None,
    optimizer: Adam | None = None,
    pseudo: tuple[list[dict], list[dict]] | None = None,
) -> list[dict]:
    """Multi-task loop over the configured modes; params update in place.

    Returns one history row per (epoch, mode): epoch, split, loss, metric.
    `pseudo` substitutes a prebuilt (unary, binary) example pair for both the
    perception and episodic modes (self-labeled training).
    """
    if "perception" in config.modes and world is None and pseudo is None:
        raise TrainError("perception training needs a world with features")
    if store.total_statements() == 0 and pseudo is None:
        raise TrainError("empty store")

    if pseudo is not None:
        mem_unary, mem_binary = pseudo
        per_unary, per_binary = pseudo
        mem_pool: dict[int, np.ndarray] = {}
        per_pool: dict[int, np.ndarray] = {}
    else:
        mem_unary, mem_binary = memory_examples(store, vocab, config.excluded_families)
        mem_pool = injection_pool(store, vocab, config.excluded_families)
        if "perception" in config.modes:
            per_hidden = tuple(set(config.hidden_families) | set(config.excluded_families))
            per_unary, per_binary = perception_examples(world, vocab, per_hidden)
            per_pool = injection_pool(store, vocab, per_hidden)

    opt = optimizer or Adam(
        params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps
    )
    frozen = config.frozen_blocks()
    features = world.features if world is not None else None
    history: list[dict] = []

    for epoch in range(config.epochs):
        rng = substream(config.seed, "epoch", epoch)
        drop_rng = substream(config.seed, "dropout", epoch) if config.dropout > 0 else None
        tagged: list[tuple[str, Batch]] = []
        for mode in config.modes:
            if mode == "perception":
                bs = build_batches(
                    per_unary, per_binary, mode=mode, cmap=cmap,
                    batch_size=config.batch_size, rng=rng,
                    rho=config.inject_rho, pool=per_pool,
                    features=features, direct=config.direct,
                )
            elif mode == "episodic":
                bs = build_batches(
                    mem_unary, mem_binary, mode=mode, cmap=cmap,
                    batch_size=config.batch_size, rng=rng,
                )
            else:
                bs = build_batches(
                    mem_unary, mem_binary, mode=mode, cmap=cmap,
                    batch_size=config.batch_size, rng=rng,
                    rho=config.inject_rho if config.inject_semantic else 0.0,
                    pool=mem_pool,
                )
            tagged.extend((mode, b) for b in bs)

        sums = {m: [0.0, 0.0, 0] for m in config.modes}
        for bi in rng.permutation(len(tagged)):
            mode, batch = tagged[int(bi)]
            try:
                loss, cache = graph.forward(
                    params, cmap, batch, dropout=config.dropout, drop_rng=drop_rng
                )
            except NumericsError as exc:
                raise TrainingDiverged(epoch, mode, str(exc)) from exc
            grads = graph.backward(params, cmap, batch, cache)
            w = config.mode_weight(mode)
            if w != 1.0:
                for g in grads.values():
                    g *= w
            opt.step(params, grads, frozen, emb_col_mask)
            n = len(batch)
            sums[mode][0] += loss * n
            sums[mode][1] += graph.mean_head_accuracy(cache) * n
            sums[mode][2] += n
        for mode in config.modes:
            total, acc, n = sums[mode]
            if n:
                history.append(
                    {"epoch": epoch, "split": mode, "loss": total / n, "metric": acc / n}
                )
    return history


def write_history_csv(history: list[dict], fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["epoch", "split", "loss", "metric"])
    for row in history:
        writer.writerow(
            [row["epoch"], row["split"], f"{row['loss']:.6f}", f"{row['metric']:.6f}"]
        )


# -- self-labeled growth ---------------------------------------------------------------


def detect_novel_entity(entity_sigmoids: np.ndarray, threshold: float) -> bool:
    """True iff no known entity unit fires above threshold."""
    return bool(entity_sigmoids.size == 0 or float(entity_sigmoids.max()) < threshold)


@dataclass
class SslReport:
    new_instances: list[str] = field(default_factory=list)
    new_entities: list[str] = field(default_factory=list)
    recognized: dict[str, list[dict]] = field(default_factory=dict)  # scene -> member rows
    pseudo_unary: list[dict] = field(default_factory=list)
    pseudo_binary: list[dict] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)


def _ssl_subject_state(params, scene_feat, box_feat, t_col):
    """Context-aware subject pre-activation for one box in one scene."""
    rep_t = encode_input(params, scene_feat) + params.emb[:, t_col]
    ctx = context_step(params, np.zeros(params.config.ctx_dim, dtype=params.emb.dtype), rep_t)
    return context_out(params, ctx) + encode_input(params, box_feat), ctx


def ssl_step(
    params: NetParams,
    cmap: ColumnMap,
    vocab: Vocabulary,
    world: GroundTruthWorld,
    scene_names: list[str],
    config: TrainConfig,
    store: TripleStore | None = None,
) -> tuple[NetParams, ColumnMap, SslReport]:
    """Self-labeled growth on unlabeled scenes.

    Each scene gets a fresh instance index.  Every box is recognized with the
    current weights; if no known entity unit clears the novelty threshold a new
    entity index is allocated for it.  Winner-take-all labels and predicates
    become pseudo-observations, and only the entity and instance embedding
    columns train on them, at the dedicated low rate.  All other blocks stay
    bit-identical.
    """
    report = SslReport()
    scenes = [world.scene(n) for n in scene_names]
    for scene in scenes:
        if scene.scene_key not in world.features:
            raise TrainError(f"scene {scene.name!r} has no features")
        vocab.add_instance(scene.name)
        report.new_instances.append(scene.name)
    grow_rng = substream(config.seed, "ssl-grow")
    cmap = params.grow(vocab, grow_rng)

    # recognition pass: novelty detection per box with current weights
    label_families = sorted(f for f in cmap.family_cols if f != IDENTITY_FAMILY)
    hidden = set(config.hidden_families) | set(config.excluded_families)
    assignments: dict[str, list[dict]] = {}
    for scene in scenes:
        t_col = cmap.col_of(vocab.id_of(scene.name))
        rows = []
        for m in scene.members:
            rep, _ = _ssl_subject_state(
                params, world.features[scene.scene_key], world.features[scene.bb_key(m)], t_col
            )
            sig = sigmoid(index_scores(params, rep, cmap.entity_cols))
            novel = detect_novel_entity(sig, config.novelty_threshold)
            rows.append(
                {"box": m, "novel": novel,
                 "entity": None if novel else cmap.id_of_col(cmap.entity_cols[int(np.argmax(sig))]),
                 "max_activation": float(sig.max()) if sig.size else 0.0}
            )
        assignments[scene.name] = rows

    for scene in scenes:
        for i, row in enumerate(assignments[scene.name]):
            if row["novel"]:
                name = f"{scene.name}.{i}"
                row["entity"] = vocab.add_entity(name)
                report.new_entities.append(name)
    if report.new_entities:
        cmap = params.grow(vocab, grow_rng)

    # labeling pass: winner-take-all pseudo-statements through committed states
    ha = vocab.has_attribute
    for scene in scenes:
        t = vocab.id_of(scene.name)
        t_col = cmap.col_of(t)
        rows = assignments[scene.name]
        by_box = {row["box"]: row for row in rows}
        for row in rows:
            rep_tilde, _ = _ssl_subject_state(
                params, world.features[scene.scene_key],
                world.features[scene.bb_key(row["box"])], t_col,
            )
            rep = rep_tilde + params.emb[:, cmap.col_of(row["entity"])]
            base = {"t": t, "s": row["entity"], "scene": scene.scene_key,
                    "bb": scene.bb_key(row["box"])}
            for fam in label_families:
                if fam in hidden:
                    continue
                cols = cmap.family_cols[fam]
                label = cmap.id_of_col(cols[int(np.argmax(index_scores(params, rep, cols)))])
                report.pseudo_unary.append({**base, "fam": fam, "o": label})
                # two boxes may resolve to one entity; record each statement once
                if store is not None and store.truth_of(row["entity"], ha, label, t) is UNKNOWN:
                    store.add_observation(row["entity"], ha, label, t, True)
            report.pseudo_unary.append({**base, "fam": IDENTITY_FAMILY, "o": row["entity"]})
        for i, (s_box, _p, o_box) in enumerate(scene.binaries):
            s_row, o_row = by_box[s_box], by_box[o_box]
            rep_s_tilde, ctx = _ssl_subject_state(
                params, world.features[scene.scene_key],
                world.features[scene.bb_key(s_box)], t_col,
            )
            rep_s = rep_s_tilde + params.emb[:, cmap.col_of(s_row["entity"])]
            ctx = context_step(params, ctx, rep_s)
            rep_o = (
                context_out(params, ctx)
                + encode_input(params, world.features[scene.bb_key(o_box)])
                + params.emb[:, cmap.col_of(o_row["entity"])]
            )
            ctx = context_step(params, ctx, rep_o)
            rep_p = context_out(params, ctx) + encode_input(
                params, world.features[scene.rel_key(i)]
            )
            pcols = cmap.predicate_cols
            pred = cmap.id_of_col(pcols[int(np.argmax(index_scores(params, rep_p, pcols)))])
            report.pseudo_binary.append(
                {"t": t, "s": s_row["entity"], "p": pred, "o": o_row["entity"],
                 "scene": scene.scene_key, "s_bb": scene.bb_key(s_box),
                 "o_bb": scene.bb_key(o_box), "rel": scene.rel_key(i)}
            )
            if store is not None and (
                store.truth_of(s_row["entity"], pred, o_row["entity"], t) is UNKNOWN
            ):
                store.add_observation(s_row["entity"], pred, o_row["entity"], t, True)
        report.recognized[scene.name] = rows

    # train only entity and instance embedding columns on the pseudo-statements
    mask = np.zeros(cmap.n_columns, dtype=params.emb.dtype)
    mask[cmap.entity_cols] = 1.0
    mask[cmap.instance_cols] = 1.0
    ssl_config = TrainConfig(
        epochs=config.ssl_epochs,
        batch_size=config.batch_size,
        learning_rate=config.ssl_learning_rate,
        adam_beta1=config.adam_beta1,
        adam_beta2=config.adam_beta2,
        adam_eps=config.adam_eps,
        seed=config.seed,
        modes=("perception", "episodic"),
        inject_rho=0.0,
        inject_semantic=False,
        freeze_ctx_in=True, freeze_ctx_rec=True, freeze_ctx_out=True,
        freeze_pooled=True, freeze_enc=True,
    )
    report.history = train(
        params, cmap, vocab, store if store is not None else TripleStore(vocab),
        ssl_config, world=world, emb_col_mask=mask,
        pseudo=(report.pseudo_unary, report.pseudo_binary),
    )
    return params, cmap, report


# -- consolidation and forgetting -------------------------------------------------------


def consolidate(
    params: NetParams,
    cmap: ColumnMap,
    vocab: Vocabulary,
    instance_id: int,
    steps: int = 80,
    step_size: float = 0.5,
    rng: np.random.Generator | None = None,
) -> tuple[NetParams, ColumnMap, int]:
    """Replay an instance into a fresh duplicate index.

    Activating the instance evokes its representation (its own column); the new
    column regresses onto that evoked vector, so decoding through the duplicate
    reproduces the original's outputs.  Everything pre-existing is untouched.
    """
    if vocab.kind_of(instance_id) is not Kind.INSTANCE:
        raise TrainError("consolidation duplicates an instance index")
    if steps < 1 or not 0.0 < step_size <= 1.0:
        raise TrainError("need steps >= 1 and step_size in (0, 1]")
    name = vocab.name_of(instance_id)
    dup = vocab.add_instance(name + ".dup")
    cmap = params.grow(vocab, rng or substream(0, "consolidate"))
    evoked = params.emb[:, cmap.col_of(instance_id)]
    col = params.emb[:, cmap.col_of(dup)]
    for _ in range(steps):
        col += step_size * (evoked - col)
    return params, cmap, dup


def forgetting_probe(
    params: NetParams,
    cmap: ColumnMap,
    protected_ids: list[int],
    perturb: Callable[[], tuple[NetParams, ColumnMap]],
    recall: Callable[[NetParams, ColumnMap], float],
) -> dict:
    """Measure recall over protected ids before and after a perturbation
    (continued training, growth, ...), plus per-column embedding drift."""
    before = float(recall(params, cmap))
    saved = {
        pid: params.emb[:, cmap.col_of(pid)].astype(np.float64).copy()
        for pid in protected_ids
    }
    new_params, new_cmap = perturb()
    after = float(recall(new_params, new_cmap))
    drift = {
        pid: float(
            np.linalg.norm(new_params.emb[:, new_cmap.col_of(pid)].astype(np.float64) - saved[pid])
        )
        for pid in protected_ids
    }
    return {
        "recall_before": before,
        "recall_after": after,
        "delta": after - before,
        "column_drift": drift,
        "max_drift": max(drift.values(), default=0.0),
    }
