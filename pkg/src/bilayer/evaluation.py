"""Metrics and the experiment harness.

Experiments come in two styles.  Teacher-forced metrics run the training graph
with ground-truth commitments and read head accuracies (memory recall, ranking
quality given known subjects/objects).  Pipeline metrics run the decoder
end to end per box or per relation (perception variants, zero-shot, hidden
labels) so recognition errors propagate the way they would in use.

Every experiment is a pure function of (world, store, params, seed); reports
carry a fingerprint over those inputs so reruns are comparable.
"""
from __future__ import annotations

import copy
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import graph
from .graph import Batch
from .network import DecodeRequest, SceneInput, decode
from .params import ColumnMap, NetConfig, NetParams
from .triple_store import TripleStore, is_known
from .training import (
    TrainConfig,
    build_batches,
    consolidate,
    memory_examples,
    ssl_step,
    train,
)
from .vocab import IDENTITY_FAMILY, Vocabulary
from .world import GroundTruthWorld, substream


class EvalError(ValueError):
    pass


# -- elementary metrics ------------------------------------------------------------


def top1_accuracy(predictions: list, truths: list) -> float:
    if len(predictions) != len(truths):
        raise EvalError("predictions and truths differ in length")
    if not predictions:
        raise EvalError("empty prediction set")
    return sum(1 for p, t in zip(predictions, truths) if p == t) / len(predictions)


def hits_at_k(ranked: list[list], truths: list, k: int) -> float:
    """Fraction of truths appearing within the first k ranked candidates."""
    if k < 1:
        raise EvalError("k must be at least 1")
    if len(ranked) != len(truths):
        raise EvalError("rankings and truths differ in length")
    if not ranked:
        raise EvalError("empty ranking set")
    return sum(1 for row, t in zip(ranked, truths) if t in row[:k]) / len(ranked)


def ranked_cols(scores: np.ndarray) -> np.ndarray:
    """Deterministic descending rank order (ties toward lower index)."""
    return np.argsort(-scores, kind="stable")


# -- teacher-forced head metrics ------------------------------------------------------


def head_metrics(
    params: NetParams,
    cmap: ColumnMap,
    unary: list[dict],
    binary: list[dict],
    mode: str,
    features: dict | None = None,
    batch_size: int = 512,
    ks: tuple = (1, 10),
) -> dict:
    """Accuracy of each prediction head with ground truth committed upstream."""
    rng = substream(0, "eval-order")
    batches = build_batches(
        unary, binary, mode=mode, cmap=cmap, batch_size=batch_size, rng=rng, features=features
    )
    fam_hit: dict[str, int] = {}
    fam_n: dict[str, int] = {}
    head_hit: dict[str, int] = {}
    head_n: dict[str, int] = {}
    pred_hits = {k: 0 for k in ks}
    obj_hits = {k: 0 for k in ks}
    loss_sum = 0.0
    n_total = 0
    for batch in batches:
        loss, cache = graph.forward(params, cmap, batch)
        loss_sum += loss * len(batch)
        n_total += len(batch)
        for fam, h in cache["fam_heads"].items():
            hits = int((h["scores"].argmax(axis=1) == h["targets"]).sum())
            fam_hit[fam] = fam_hit.get(fam, 0) + hits
            fam_n[fam] = fam_n.get(fam, 0) + len(h["targets"])
        for name, h in cache["heads"].items():
            hits = int((h["scores"].argmax(axis=1) == h["targets"]).sum())
            head_hit[name] = head_hit.get(name, 0) + hits
            head_n[name] = head_n.get(name, 0) + len(h["targets"])
            if name in ("NP", "NO"):
                ranks = ranked_cols(h["scores"])
                into = pred_hits if name == "NP" else obj_hits
                for k in ks:
                    into[k] += int(
                        (ranks[:, :k] == h["targets"][:, None]).any(axis=1).sum()
                    )
    out: dict = {
        "loss": loss_sum / n_total if n_total else float("nan"),
        "families": {f: fam_hit[f] / fam_n[f] for f in fam_n},
        "heads": {h: head_hit[h] / head_n[h] for h in head_n},
        "n_unary": len(unary),
        "n_binary": len(binary),
    }
    label_hits = sum(v for f, v in fam_hit.items() if f != IDENTITY_FAMILY)
    label_n = sum(v for f, v in fam_n.items() if f != IDENTITY_FAMILY)
    out["unary_top1"] = label_hits / label_n if label_n else float("nan")
    if IDENTITY_FAMILY in fam_n:
        out["identity_top1"] = fam_hit[IDENTITY_FAMILY] / fam_n[IDENTITY_FAMILY]
    if head_n.get("NP"):
        out["predicate_hits"] = {str(k): pred_hits[k] / head_n["NP"] for k in ks}
    if head_n.get("NO"):
        out["object_hits"] = {str(k): obj_hits[k] / head_n["NO"] for k in ks}
    return out


def label_conditional_estimate(
    params: NetParams, cmap: ColumnMap, vocab: Vocabulary, c1: int, c2: int
) -> float:
    """Model probability of label c2 in its family, queried with subject c1
    through the pooled (pre-observation) pathway."""
    fam = vocab.family_of(c2)
    if fam is None:
        raise EvalError(f"{vocab.name_of(c2)} belongs to no label family")
    batch = Batch(
        mode="semantic",
        arity="unary",
        subj_inject_cols=cmap.cols_of([c1]),
        fam_rows={fam: np.array([0])},
        fam_target_cols={fam: cmap.cols_of([c2])},
    )
    _, cache = graph.forward(params, cmap, batch)
    head = cache["fam_heads"][fam]
    fcols = cmap.family_cols[fam]
    pos = int(np.searchsorted(fcols, cmap.col_of(c2)))
    return float(head["probs"][0, pos])


# -- decode pipelines ------------------------------------------------------------------


_VARIANTS = ("samp", "sa", "direct")


def _variant_request(variant: str, feats: SceneInput, attention_beta: float) -> DecodeRequest:
    if variant == "samp":
        return DecodeRequest(
            mode="perception", features=feats, winner_take_all=True,
            instance_attention=True, attention_beta=attention_beta,
            subject_support="entities", object_support="entities",
        )
    if variant == "sa":
        return DecodeRequest(
            mode="perception", features=feats, winner_take_all=True,
            instance_attention=True, concept_attention=True,
            attention_beta=attention_beta,
        )
    if variant == "direct":
        return DecodeRequest(
            mode="perception", features=feats, winner_take_all=True, direct=True,
            subject_support="entities", object_support="entities",
        )
    raise EvalError(f"unknown perception variant {variant!r}; choose from {_VARIANTS}")


def perception_unary_eval(
    params: NetParams,
    cmap: ColumnMap,
    vocab: Vocabulary,
    world: GroundTruthWorld,
    scenes: list,
    variant: str,
    families: tuple | None = None,
    attention_beta: float = 1.0,
) -> dict:
    """Per-box decoding: one pass per scene member, label accuracy per family."""
    rng = substream(0, "perception-eval")
    fams = tuple(families or [f for f in sorted(cmap.family_cols) if f != IDENTITY_FAMILY])
    hit = {f: 0 for f in fams}
    n = 0
    subj_hit = 0
    subj_known = 0
    for scene in scenes:
        for m in scene.members:
            feats = SceneInput(
                scene=world.features[scene.scene_key],
                subject_box=world.features[scene.bb_key(m)],
            )
            trace = decode(params, cmap, vocab, _variant_request(variant, feats, attention_beta), rng)
            rec = world.entity_record(m)
            for fam in fams:
                if fam in trace.labels and trace.labels[fam] == vocab.id_of(rec.labels[fam]):
                    hit[fam] += 1
            n += 1
            if m in vocab:
                subj_known += 1
                if trace.subject_id == vocab.id_of(m):
                    subj_hit += 1
    if n == 0:
        raise EvalError("no boxes to evaluate")
    out = {
        "families": {f: hit[f] / n for f in fams},
        "mean_unary": float(np.mean([hit[f] / n for f in fams])),
        "n_boxes": n,
    }
    if subj_known:
        out["subject_top1"] = subj_hit / subj_known
        out["n_known_subjects"] = subj_known
    return out


def perception_binary_eval(
    params: NetParams,
    cmap: ColumnMap,
    vocab: Vocabulary,
    world: GroundTruthWorld,
    examples: list[dict],
    variant: str,
    ks: tuple = (1, 10),
    attention_beta: float = 1.0,
) -> dict:
    """Full-chain decoding per relation example.

    Each example names feature keys (scene, s, o, rel) and the true predicate;
    subject and object commitments come from the model, predicate is ranked at
    the end.
    """
    rng = substream(0, "perception-eval")
    hits = {k: 0 for k in ks}
    pred_ids = [cmap.id_of_col(c) for c in cmap.predicate_cols]
    for ex in examples:
        feats = SceneInput(
            scene=world.features[ex["scene"]],
            subject_box=world.features[ex["s_bb"]],
            object_box=world.features[ex["o_bb"]],
            predicate_box=world.features[ex["rel"]],
        )
        trace = decode(params, cmap, vocab, _variant_request(variant, feats, attention_beta), rng)
        order = ranked_cols(trace.scores["predicate"])
        truth = vocab.id_of(ex["p"]) if isinstance(ex["p"], str) else ex["p"]
        ranked = [pred_ids[int(i)] for i in order]
        for k in ks:
            if truth in ranked[:k]:
                hits[k] += 1
    if not examples:
        raise EvalError("no relation examples to evaluate")
    n = len(examples)
    return {
        "predicate_hits": {str(k): hits[k] / n for k in ks},
        "chance": 1.0 / len(pred_ids),
        "n": n,
    }


# -- experiment harness ---------------------------------------------------------------


@dataclass
class MetricReport:
    experiment: str
    metrics: dict
    counts: dict
    fingerprint: str
    wall_clock_s: float

    def to_dict(self, volatile: bool = True) -> dict:
        out = {
            "experiment": self.experiment,
            "metrics": self.metrics,
            "counts": self.counts,
            "fingerprint": self.fingerprint,
        }
        if volatile:
            out["wall_clock_s"] = self.wall_clock_s
        return out

    def rows(self) -> list[tuple[str, str, float]]:
        """Flat (experiment, metric, value) rows for CSV output."""
        rows: list[tuple[str, str, float]] = []

        def _walk(prefix: str, value) -> None:
            if isinstance(value, dict):
                for key in sorted(value):
                    _walk(f"{prefix}.{key}" if prefix else str(key), value[key])
            elif isinstance(value, (int, float, bool, np.floating, np.integer)):
                rows.append((self.experiment, prefix, float(value)))

        _walk("", self.metrics)
        for key in sorted(self.counts):
            rows.append((self.experiment, f"n.{key}", float(self.counts[key])))
        return rows


@dataclass
class EvalContext:
    """Everything an experiment may need, with lazy model training and caching
    so scenarios sharing a model train it once."""

    world: GroundTruthWorld
    store: TripleStore
    vocab: Vocabulary
    params: NetParams | None = None
    cmap: ColumnMap | None = None
    net_config: NetConfig | None = None
    train_config: TrainConfig | None = None
    seed: int = 0
    attention_beta: float = 1.0
    conditional_pairs: tuple = (("Dog", "Mammal"),)
    _models: dict = field(default_factory=dict)

    def config_with(self, **overrides) -> TrainConfig:
        base = self.train_config.to_dict() if self.train_config else TrainConfig().to_dict()
        if self.train_config is None:
            base["seed"] = self.seed
        base.update(overrides)
        return TrainConfig.from_dict(base)

    def fresh_params(self) -> tuple[NetParams, ColumnMap]:
        net = self.net_config or NetConfig(feature_dim=self.world.config.feature_dim)
        if net.feature_dim != self.world.config.feature_dim:
            raise EvalError("network feature width does not match the world's")
        cmap = ColumnMap(self.vocab)
        params = NetParams.init(self.vocab, net, substream(self.seed, "init"))
        return params, cmap

    def model(self, key: str = "main", **overrides) -> tuple[NetParams, ColumnMap]:
        if key == "main" and self.params is not None:
            return self.params, self.cmap or ColumnMap(self.vocab)
        if key not in self._models:
            params, cmap = self.fresh_params()
            config = self.config_with(**overrides)
            train(params, cmap, self.vocab, self.store, config, world=self.world)
            self._models[key] = (params, cmap)
        return self._models[key]


def _visible_families(ctx: EvalContext) -> tuple:
    cfg = ctx.train_config or TrainConfig()
    out = [
        f
        for f in sorted(ctx.vocab.families)
        if f != IDENTITY_FAMILY
        and f not in cfg.hidden_families
        and f not in cfg.excluded_families
    ]
    return tuple(out)


def _experiment_episodic_recall(ctx: EvalContext) -> tuple[dict, dict]:
    params, cmap = ctx.model()
    unary, binary = memory_examples(ctx.store, ctx.vocab)
    m = head_metrics(params, cmap, unary, binary, "episodic")
    metrics = {
        "unary_top1": m["unary_top1"],
        "binary_hits1": m["heads"].get("NP", float("nan")),
        "subject_top1": m["heads"].get("NS", float("nan")),
        "object_hits": m.get("object_hits", {}),
        "predicate_hits": m.get("predicate_hits", {}),
        "families": m["families"],
    }
    return metrics, {"unary": m["n_unary"], "binary": m["n_binary"]}


def _experiment_semantic_recall(ctx: EvalContext) -> tuple[dict, dict]:
    params, cmap = ctx.model()
    unary, binary = memory_examples(ctx.store, ctx.vocab)
    m = head_metrics(params, cmap, unary, binary, "semantic")
    conditionals = {}
    for c1_name, c2_name in ctx.conditional_pairs:
        c1, c2 = ctx.vocab.id_of(c1_name), ctx.vocab.id_of(c2_name)
        estimate = label_conditional_estimate(params, cmap, ctx.vocab, c1, c2)
        oracle = ctx.store.label_conditional(c1, c2)
        oracle_val = float(oracle) if is_known(oracle) else float("nan")
        conditionals[f"{c1_name}->{c2_name}"] = {
            "estimate": estimate,
            "oracle": oracle_val,
            "abs_err": abs(estimate - oracle_val),
        }
    metrics = {
        "unary_top1": m["unary_top1"],
        "object_hits": m.get("object_hits", {}),
        "predicate_hits": m.get("predicate_hits", {}),
        "families": m["families"],
        "conditionals": conditionals,
    }
    return metrics, {"unary": m["n_unary"], "binary": m["n_binary"]}


def _experiment_perception_unary(ctx: EvalContext) -> tuple[dict, dict]:
    # every variant decodes through the same trained weights; "direct" only
    # changes the decode pathway, not the model
    params, cmap = ctx.model()
    fams = _visible_families(ctx)
    ex_scenes = ctx.world.scenes_of_kind("ex_test")
    e_scenes = ctx.world.scenes_of_kind("e_test")
    metrics: dict = {}
    counts: dict = {}
    for split, scenes in (("ex", ex_scenes), ("e", e_scenes)):
        if not scenes:
            continue
        per = {}
        for variant in _VARIANTS:
            per[variant] = perception_unary_eval(
                params, cmap, ctx.vocab, ctx.world, scenes, variant,
                families=fams, attention_beta=ctx.attention_beta,
            )
        metrics[split] = {v: per[v]["mean_unary"] for v in per}
        metrics[f"{split}_families"] = {v: per[v]["families"] for v in per}
        if "subject_top1" in per["samp"]:
            metrics[f"{split}_subject_top1"] = per["samp"]["subject_top1"]
        counts[split] = per["samp"]["n_boxes"]
    if "ex" in metrics:
        metrics["samp_minus_direct_ex"] = metrics["ex"]["samp"] - metrics["ex"]["direct"]
    if "e" in metrics:
        metrics["sa_minus_direct_e"] = metrics["e"]["sa"] - metrics["e"]["direct"]
    return metrics, counts


def _binary_examples_from_scenes(world: GroundTruthWorld, scenes: list) -> list[dict]:
    out = []
    for scene in scenes:
        for i, (s, p, o) in enumerate(scene.binaries):
            out.append(
                {
                    "scene": scene.scene_key, "s_bb": scene.bb_key(s),
                    "o_bb": scene.bb_key(o), "rel": scene.rel_key(i),
                    "s": s, "p": p, "o": o,
                }
            )
    return out


def _experiment_perception_binary(ctx: EvalContext) -> tuple[dict, dict]:
    params, cmap = ctx.model()
    metrics: dict = {}
    counts: dict = {}
    for split, kind in (("ex", "ex_test"), ("e", "e_test")):
        scenes = ctx.world.scenes_of_kind(kind)
        examples = _binary_examples_from_scenes(ctx.world, scenes)
        if not examples:
            continue
        per = {}
        for variant in _VARIANTS:
            per[variant] = perception_binary_eval(
                params, cmap, ctx.vocab, ctx.world, examples, variant,
                attention_beta=ctx.attention_beta,
            )
        metrics[split] = {v: per[v]["predicate_hits"] for v in per}
        metrics[f"{split}_chance"] = per["samp"]["chance"]
        counts[split] = per["samp"]["n"]
    return metrics, counts


def _experiment_hidden_label(
    ctx: EvalContext, family: str = "Risk", positive: str = "Dangerous"
) -> tuple[dict, dict]:
    if family not in ctx.vocab.families:
        raise EvalError(f"world has no {family!r} family")
    base_params, base_cmap = ctx.model("hidden-base", excluded_families=(family,))
    enriched_params, enriched_cmap = ctx.model("hidden-enriched", hidden_families=(family,))
    scenes = ctx.world.scenes_of_kind("ex_test") or ctx.world.scenes_of_kind("train")

    by_label: dict[str, list[tuple]] = {}
    for scene in scenes:
        for m in scene.members:
            label = ctx.world.entity_record(m).labels[family]
            by_label.setdefault(label, []).append((scene, m))
    if len(by_label) < 2:
        raise EvalError(f"evaluation scenes carry only one {family} label")
    take = min(len(v) for v in by_label.values())
    balanced: list[tuple] = []
    for label in sorted(by_label):
        balanced.extend(by_label[label][:take])

    def risk_accuracy(params, cmap) -> float:
        rng = substream(0, "hidden-label")
        hits = 0
        for scene, m in balanced:
            feats = SceneInput(
                scene=ctx.world.features[scene.scene_key],
                subject_box=ctx.world.features[scene.bb_key(m)],
            )
            trace = decode(
                params, cmap, ctx.vocab,
                _variant_request("samp", feats, ctx.attention_beta), rng,
            )
            truth = ctx.vocab.id_of(ctx.world.entity_record(m).labels[family])
            hits += int(trace.labels.get(family) == truth)
        return hits / len(balanced)

    metrics = {
        "base_acc": risk_accuracy(base_params, base_cmap),
        "enriched_acc": risk_accuracy(enriched_params, enriched_cmap),
        "chance": 1.0 / len(by_label),
        "family": family,
    }
    return metrics, {"balanced": len(balanced), "labels": len(by_label)}


def zero_shot_split(world: GroundTruthWorld) -> tuple[list, list]:
    """(combos usable in training, held-out combos); both deterministic."""
    all_combos = {
        (cs, p, co) for (cs, co), row in world.pair_table.items() for p, _ in row
    }
    if len(all_combos) < 2:
        raise EvalError("need at least two (class, predicate, class) combos")
    held = sorted(tuple(h) for h in world.heldout)
    train_combos = sorted(all_combos - set(held))
    return train_combos, held


def _training_combos(world: GroundTruthWorld) -> set:
    seen = set()
    for scene in world.scenes_of_kind("train", "ex_train"):
        for s, p, o in scene.binaries:
            seen.add(
                (
                    world.entity_record(s).labels["BClass"],
                    p,
                    world.entity_record(o).labels["BClass"],
                )
            )
    return seen


def _experiment_zero_shot(ctx: EvalContext) -> tuple[dict, dict]:
    params, cmap = ctx.model()
    _, held = zero_shot_split(ctx.world)
    leaked = set(held) & _training_combos(ctx.world)
    if leaked:
        raise EvalError(f"held-out combos appear in training scenes: {sorted(leaked)[:3]}")
    examples = [
        {
            "scene": f"{ex['key']}:scene", "s_bb": f"{ex['key']}:s",
            "o_bb": f"{ex['key']}:o", "rel": f"{ex['key']}:rel", "p": ex["p"],
        }
        for ex in ctx.world.zs_examples
    ]
    if not examples:
        raise EvalError("world has no held-out relation examples")
    m = perception_binary_eval(
        params, cmap, ctx.vocab, ctx.world, examples, "samp",
        attention_beta=ctx.attention_beta,
    )
    hits1 = m["predicate_hits"]["1"]
    metrics = {
        "hits": m["predicate_hits"],
        "chance": m["chance"],
        "ratio_vs_chance": hits1 / m["chance"],
        "held_out_combos": len(held),
    }
    return metrics, {"examples": m["n"]}


def _experiment_social_recall(ctx: EvalContext) -> tuple[dict, dict]:
    params, cmap = ctx.model()
    social_instances = {
        ctx.vocab.id_of(s.name) for s in ctx.world.scenes_of_kind("social")
    }
    if not social_instances:
        raise EvalError("world has no social instances")
    unary, binary = memory_examples(ctx.store, ctx.vocab)
    binary = [ex for ex in binary if ex["t"] in social_instances]
    unary = [ex for ex in unary if ex["t"] in social_instances]
    m = head_metrics(params, cmap, unary, binary, "episodic")
    metrics = {
        "object_hits": m.get("object_hits", {}),
        "predicate_top1": m["heads"].get("NP", float("nan")),
        "subject_top1": m["heads"].get("NS", float("nan")),
    }
    return metrics, {"edges": m["n_binary"]}


def _experiment_ssl(ctx: EvalContext) -> tuple[dict, dict]:
    unlabeled = [s.name for s in ctx.world.scenes_of_kind("unlabeled")]
    if not unlabeled:
        raise EvalError("world has no unlabeled shard (set unlabeled_fraction > 0)")
    params, cmap = ctx.model()
    vocab2 = copy.deepcopy(ctx.vocab)
    params2 = params.copy()

    unary, binary = memory_examples(ctx.store, ctx.vocab)

    def supervised_recall(p, c) -> float:
        return head_metrics(p, c, unary, binary, "episodic")["unary_top1"]

    def generalization(p, c) -> float:
        scenes = ctx.world.scenes_of_kind("e_test")
        if not scenes:
            return float("nan")
        return perception_unary_eval(
            p, c, vocab2, ctx.world, scenes, "sa",
            families=_visible_families(ctx), attention_beta=ctx.attention_beta,
        )["mean_unary"]

    before = supervised_recall(params, cmap)
    gen_before = generalization(params2, cmap)
    config = ctx.config_with()
    params3, cmap3, report = ssl_step(
        params2, ColumnMap(vocab2), vocab2, ctx.world, unlabeled, config
    )
    after = supervised_recall(params3, cmap3)
    gen_after = generalization(params3, cmap3)

    old_blocks = params.blocks()
    frozen_ok = all(
        np.array_equal(old_blocks[k], params3.blocks()[k])
        for k in ("ctx_in", "ctx_rec", "ctx_out", "pooled", "enc_w", "enc_b")
    )
    metrics = {
        "recall_before": before,
        "recall_after": after,
        "drop_points": (before - after) * 100.0,
        "generalization_before": gen_before,
        "generalization_after": gen_after,
        "new_entities": len(report.new_entities),
        "new_instances": len(report.new_instances),
        "frozen_blocks_bitwise": frozen_ok,
    }
    counts = {
        "unlabeled_scenes": len(unlabeled),
        "pseudo_unary": len(report.pseudo_unary),
        "pseudo_binary": len(report.pseudo_binary),
    }
    return metrics, counts


def _experiment_consolidation(ctx: EvalContext) -> tuple[dict, dict]:
    params, cmap = ctx.model()
    vocab2 = copy.deepcopy(ctx.vocab)
    candidates = ctx.store.observed_instances()
    if not candidates:
        raise EvalError("no instances to consolidate")
    target = max(candidates, key=lambda t: (len(ctx.store.positives_at(t)), -t))
    params2, cmap2, dup = consolidate(params.copy(), cmap, vocab2, target)

    subjects = sorted({s for s, _p, _o in ctx.store.positives_at(target)})
    rng = substream(0, "consolidation")
    matches = 0
    for s in subjects:
        outs = []
        for t in (target, dup):
            trace = decode(
                params2, cmap2, vocab2,
                DecodeRequest(mode="episodic", instance_id=t, subject_id=s, winner_take_all=True),
                rng,
            )
            outs.append((tuple(sorted(trace.labels.items())), trace.object_id, trace.predicate_id))
        matches += int(outs[0] == outs[1])

    old = params.blocks()
    new = params2.blocks()
    pre_bitwise = all(
        np.array_equal(old[k], new[k]) for k in old if k not in ("emb", "emb_up")
    )
    d_old = params.emb.shape[1]
    pre_bitwise = pre_bitwise and np.array_equal(params.emb, params2.emb[:, :d_old])
    metrics = {
        "match_fraction": matches / len(subjects) if subjects else float("nan"),
        "preexisting_bitwise": pre_bitwise,
        "instance": ctx.vocab.name_of(target),
    }
    return metrics, {"subjects": len(subjects)}


EXPERIMENTS = {
    "episodic-recall": _experiment_episodic_recall,
    "semantic-recall": _experiment_semantic_recall,
    "perception-unary": _experiment_perception_unary,
    "perception-binary": _experiment_perception_binary,
    "hidden-label-enrichment": _experiment_hidden_label,
    "zero-shot-binary": _experiment_zero_shot,
    "social-recall": _experiment_social_recall,
    "ssl-before-after": _experiment_ssl,
    "consolidation-fidelity": _experiment_consolidation,
}


def _fingerprint(ctx: EvalContext, name: str) -> str:
    h = hashlib.sha256()
    h.update(name.encode())
    h.update(ctx.vocab.digest().encode())
    h.update(json.dumps(ctx.world.config.to_dict(), sort_keys=True).encode())
    h.update(str(ctx.seed).encode())
    if ctx.params is not None:
        from .params import params_digest

        h.update(params_digest(ctx.params).encode())
    if ctx.train_config is not None:
        h.update(json.dumps(ctx.train_config.to_dict(), sort_keys=True).encode())
    return h.hexdigest()


def run_experiment(name: str, ctx: EvalContext) -> MetricReport:
    if name not in EXPERIMENTS:
        raise EvalError(
            f"unknown experiment {name!r}; valid names: {', '.join(sorted(EXPERIMENTS))}"
        )
    started = time.monotonic()
    metrics, counts = EXPERIMENTS[name](ctx)
    return MetricReport(
        experiment=name,
        metrics=metrics,
        counts=counts,
        fingerprint=_fingerprint(ctx, name),
        wall_clock_s=time.monotonic() - started,
    )
