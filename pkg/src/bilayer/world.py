"""Synthetic relational world: entities with layered labels, scenes, features.

The world stands in for an annotated image corpus.  Entities carry one label
per family: a base class, its parent class, its top class (closed upward
through a fixed subclass forest), an age, a color, and an activity, plus a
risk label derived from a hidden rule (living things are Dangerous).  Scenes
are sets of entities with a few binary statements whose predicate frequencies
depend on the (subject class, object class) pair, so class-level regularities
exist to be learned.

Feature vectors replace a vision backbone: a fixed random projection of the
entity's class prototype concatenated with its private latent vector, plus
fresh Gaussian noise per view.  Age and activity are deliberately absent from
features (a single view cannot show them; only memory can recover them) and
risk labels are never shown to perception.
"""
from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from .triple_store import TripleStore
from .vocab import Vocabulary


class WorldError(ValueError):
    pass


def substream(seed: int, *tags: str | int) -> np.random.Generator:
    """Deterministic named child generator."""
    parts = [seed & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, int):
            parts.append(tag & 0xFFFFFFFF)
        else:
            parts.append(zlib.crc32(tag.encode("utf-8")))
    return np.random.default_rng(parts)


@dataclass(frozen=True)
class Ontology:
    g_children: dict = field(default_factory=lambda: {
        "LivingBeing": ["Mammal", "Bird"],
        "NonLivingBeing": ["Vehicle", "Furniture"],
    })
    p_children: dict = field(default_factory=lambda: {
        "Mammal": ["Dog", "Cat", "Person"],
        "Bird": ["Sparrow", "Owl"],
        "Vehicle": ["Car", "Bus", "Bike"],
        "Furniture": ["Chair", "Table"],
    })
    ages: tuple = ("Young", "Old")
    colors: tuple = ("Black", "White", "Brown", "Green", "Gray")
    activities: tuple = ("Resting", "Moving", "Eating", "Watching")
    risks: tuple = ("Dangerous", "Harmless")
    risk_rule: dict = field(default_factory=lambda: {
        "LivingBeing": "Dangerous",
        "NonLivingBeing": "Harmless",
    })
    scene_predicates: tuple = (
        "near", "on", "under", "behind", "looksAt", "chases", "holds", "passes",
    )
    nonvisual_predicates: tuple = ("ownedBy", "lovedBy")
    social_predicate: str = "knows"
    owned_class: str = "Dog"
    owner_class: str = "Person"

    @property
    def b_classes(self) -> tuple:
        return tuple(b for ps in self.p_children.values() for b in ps)

    @property
    def p_classes(self) -> tuple:
        return tuple(self.p_children)

    @property
    def g_classes(self) -> tuple:
        return tuple(self.g_children)

    def parent_of(self, b: str) -> str:
        for p, bs in self.p_children.items():
            if b in bs:
                return p
        raise WorldError(f"{b!r} has no parent class")

    def top_of(self, p: str) -> str:
        for g, ps in self.g_children.items():
            if p in ps:
                return g
        raise WorldError(f"{p!r} has no top class")

    @property
    def label_families(self) -> tuple:
        return ("BClass", "PClass", "GClass", "Age", "Color", "Activity", "Risk")

    def family_members(self) -> dict[str, tuple]:
        return {
            "BClass": self.b_classes,
            "PClass": self.p_classes,
            "GClass": self.g_classes,
            "Age": self.ages,
            "Color": self.colors,
            "Activity": self.activities,
            "Risk": self.risks,
        }

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WorldConfig:
    n_entities: int = 300
    n_scenes: int = 120
    mean_entities_per_scene: float = 4.0
    binary_per_scene: int = 3
    feature_dim: int = 48
    proto_dim: int = 12
    noise_sigma: float = 0.3
    ex_noise_sigma: float | None = None   # re-render noise for ex_test views
    scene_noise_sigma: float = 0.15
    latent_scale: float = 1.0
    theme_bias: float = 0.7
    n_test_entities: int = 40
    n_test_scenes: int = 15
    ex_split: bool = True
    unlabeled_fraction: float = 0.0
    owners: bool = True
    social: bool = True
    social_k: int = 5
    social_beta: float = 1.0
    zero_shot_fraction: float = 0.10
    zero_shot_per_combo: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_entities < 1 or self.n_scenes < 1:
            raise WorldError("need at least one entity and one scene")
        if self.mean_entities_per_scene < 2:
            raise WorldError("scenes need two entities on average for binary statements")
        if not (0 <= self.unlabeled_fraction < 1):
            raise WorldError("unlabeled_fraction must be in [0, 1)")
        if not (0 <= self.zero_shot_fraction < 1):
            raise WorldError("zero_shot_fraction must be in [0, 1)")
        if self.noise_sigma < 0 or self.scene_noise_sigma < 0:
            raise WorldError("noise levels must be nonnegative")
        if self.ex_noise_sigma is not None and self.ex_noise_sigma < 0:
            raise WorldError("noise levels must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "WorldConfig":
        return cls(**data)


@dataclass
class EntityRecord:
    name: str
    labels: dict[str, str]  # family -> label name
    visual: bool = True
    latent: np.ndarray | None = None


@dataclass
class SceneRecord:
    name: str
    kind: str          # train | ex_train | ex_test | e_test | unlabeled | background | social
    instance: bool     # registered as an episodic instance
    members: list[str]
    binaries: list[tuple[str, str, str]]
    theme: str | None = None   # "family:label" composition bias

    @property
    def scene_key(self) -> str:
        return f"scene:{self.name}"

    def bb_key(self, entity: str) -> str:
        return f"bb:{self.name}:{entity}"

    def rel_key(self, i: int) -> str:
        return f"rel:{self.name}:{i}"


@dataclass
class GroundTruthWorld:
    config: WorldConfig
    ontology: Ontology
    vocab: Vocabulary
    entities: dict[str, EntityRecord]
    test_entities: dict[str, EntityRecord]
    scenes: list[SceneRecord]
    features: dict[str, np.ndarray]
    pair_table: dict[tuple[str, str], list[tuple[str, float]]]
    heldout: list[tuple[str, str, str]]
    zs_examples: list[dict]
    social_edges: list[tuple[str, str]]
    prototypes: dict[str, np.ndarray] | None = None
    _store: TripleStore | None = None

    def entity_record(self, name: str) -> EntityRecord:
        rec = self.entities.get(name) or self.test_entities.get(name)
        if rec is None:
            raise WorldError(f"unknown entity {name!r}")
        return rec

    def scenes_of_kind(self, *kinds: str) -> list[SceneRecord]:
        return [s for s in self.scenes if s.kind in kinds]

    def scene(self, name: str) -> SceneRecord:
        for s in self.scenes:
            if s.name == name:
                return s
        raise WorldError(f"unknown scene {name!r}")

    def build_store(self, duplicate_policy: str = "error") -> TripleStore:
        if self._store is None:
            self._store = _ingest(self, duplicate_policy)
        return self._store


# -- feature synthesis -----------------------------------------------------------


def entity_box_features(
    projection: np.ndarray,
    class_proto: np.ndarray,
    latent: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    base = projection @ np.concatenate([class_proto, latent])
    if sigma > 0:
        base = base + rng.normal(0.0, sigma, size=base.shape)
    return base.astype(np.float32)

def relation_box_features(
    projection: np.ndarray,
    latent_s: np.ndarray,
    latent_o: np.ndarray,
    pred_proto: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    base = projection @ np.concatenate([latent_s, latent_o, pred_proto])
    if sigma > 0:
        base = base + rng.normal(0.0, sigma, size=base.shape)
    return base.astype(np.float32)


def scene_features(
    member_boxes: list[np.ndarray], sigma: float, rng: np.random.Generator
) -> np.ndarray:
    base = np.mean(member_boxes, axis=0)
    if sigma > 0:
        base = base + rng.normal(0.0, sigma, size=base.shape)
    return base.astype(np.float32)


# -- generation --------------------------------------------------------------------


def _draw_entity(name: str, onto: Ontology, rng: np.random.Generator, protos, scale) -> EntityRecord:
    b = str(rng.choice(onto.b_classes))
    p = onto.parent_of(b)
    g = onto.top_of(p)
    labels = {
        "BClass": b,
        "PClass": p,
        "GClass": g,
        "Age": str(rng.choice(onto.ages)),
        "Color": str(rng.choice(onto.colors)),
        "Activity": str(rng.choice(onto.activities)),
        "Risk": onto.risk_rule[g],
    }
    latent = protos[labels["Color"]] + scale * rng.normal(size=protos[b].shape)
    return EntityRecord(name=name, labels=labels, visual=True, latent=latent)


def _build_pair_table(onto: Ontology, rng: np.random.Generator):
    weights = (0.70, 0.20, 0.10)
    table: dict[tuple[str, str], list[tuple[str, float]]] = {}
    preds = list(onto.scene_predicates)
    for cs in onto.b_classes:
        for co in onto.b_classes:
            picks = rng.choice(len(preds), size=min(3, len(preds)), replace=False)
            table[(cs, co)] = [(preds[int(i)], weights[j]) for j, i in enumerate(picks)]
    return table


def _hold_out(table, fraction, rng) -> list[tuple[str, str, str]]:
    combos = [(cs, p, co) for (cs, co), row in sorted(table.items()) for p, _ in row]
    n_hold = int(round(fraction * len(combos)))
    order = rng.permutation(len(combos))
    held: list[tuple[str, str, str]] = []
    removed: dict[tuple[str, str], int] = {}
    for idx in order:
        if len(held) >= n_hold:
            break
        cs, p, co = combos[int(idx)]
        pair = (cs, co)
        if len(table[pair]) - removed.get(pair, 0) <= 1:
            continue  # a pair must keep at least one expressible predicate
        removed[pair] = removed.get(pair, 0) + 1
        held.append((cs, p, co))
    return sorted(held)


def _sample_predicate(table, heldout_set, cs, co, rng) -> str | None:
    row = [(p, w) for p, w in table[(cs, co)] if (cs, p, co) not in heldout_set]
    if not row:
        return None
    weights = np.array([w for _, w in row], dtype=np.float64)
    weights /= weights.sum()
    return row[int(rng.choice(len(row), p=weights))][0]


def _compose_scene(
    name, kind, instance, pool, onto, config, table, heldout_set, rng
) -> SceneRecord:
    if rng.random() < 0.5:
        fam, name_ = "PClass", str(rng.choice(onto.p_classes))
    else:
        fam, name_ = "Color", str(rng.choice(onto.colors))
    theme = f"{fam}:{name_}"
    k = 2 + int(rng.poisson(config.mean_entities_per_scene - 2))
    k = min(k, len(pool))
    themed = [e for e in pool if e.labels[fam] == name_]
    members: list[str] = []
    chosen: set[str] = set()
    for _ in range(k):
        use_theme = themed and rng.random() < config.theme_bias
        options = [e for e in (themed if use_theme else pool) if e.name not in chosen]
        if not options:
            options = [e for e in pool if e.name not in chosen]
        if not options:
            break
        pick = options[int(rng.integers(len(options)))]
        members.append(pick.name)
        chosen.add(pick.name)
    by_name = {e.name: e for e in pool}
    binaries: list[tuple[str, str, str]] = []
    if len(members) >= 2:
        seen = set()
        for _ in range(config.binary_per_scene):
            for _try in range(10):
                i, j = rng.choice(len(members), size=2, replace=False)
                s, o = members[int(i)], members[int(j)]
                p = _sample_predicate(
                    table, heldout_set, by_name[s].labels["BClass"], by_name[o].labels["BClass"], rng
                )
                if p is not None and (s, p, o) not in seen:
                    seen.add((s, p, o))
                    binaries.append((s, p, o))
                    break
    return SceneRecord(
        name=name, kind=kind, instance=instance, members=members, binaries=binaries, theme=theme
    )


def _scene_view_features(world: GroundTruthWorld, scene: SceneRecord, rng) -> None:
    cfg = world.config
    protos = world.prototypes
    proj_ent = protos["_proj_entity"]
    proj_rel = protos["_proj_relation"]
    sigma = cfg.noise_sigma
    if scene.kind == "ex_test" and cfg.ex_noise_sigma is not None:
        sigma = cfg.ex_noise_sigma
    boxes = []
    for name in scene.members:
        rec = world.entity_record(name)
        feat = entity_box_features(
            proj_ent, protos[rec.labels["BClass"]], rec.latent, sigma, rng
        )
        world.features[scene.bb_key(name)] = feat
        boxes.append(feat.astype(np.float64))
    world.features[scene.scene_key] = scene_features(boxes, cfg.scene_noise_sigma, rng)
    for i, (s, p, o) in enumerate(scene.binaries):
        world.features[scene.rel_key(i)] = relation_box_features(
            proj_rel,
            world.entity_record(s).latent,
            world.entity_record(o).latent,
            protos[p],
            sigma,
            rng,
        )


def social_network(
    latents: dict[str, np.ndarray], k: int, beta: float, rng: np.random.Generator
) -> dict[str, list[tuple[str, str]]]:
    """Per person: k oriented acquaintance edges to the highest-scoring others.

    Candidate score is the inner product of the two vectors.  Each selected
    pair is oriented by sampling: orientation s->s' wins with probability
    w(s,s') / (w(s,s') + w(s',s)) where w(s,s') = exp(beta*|s|) / |s + s'|.
    """
    names = sorted(latents)
    if len(names) < k + 1:
        raise WorldError(f"need at least {k + 1} persons, have {len(names)}")
    mat = np.stack([latents[n] for n in names])
    scores = mat @ mat.T
    np.fill_diagonal(scores, -np.inf)
    out: dict[str, list[tuple[str, str]]] = {}
    norms = np.linalg.norm(mat, axis=1)
    for i, name in enumerate(names):
        top = np.argsort(-scores[i])[:k]
        edges = []
        for j in top:
            j = int(j)
            denom = max(float(np.linalg.norm(mat[i] + mat[j])), 1e-12)
            w_ij = float(np.exp(beta * norms[i])) / denom
            w_ji = float(np.exp(beta * norms[j])) / denom
            if rng.random() < w_ij / (w_ij + w_ji):
                edges.append((name, names[j]))
            else:
                edges.append((names[j], name))
        out[name] = edges
    return out


def orientation_probability(
    latent_a: np.ndarray, latent_b: np.ndarray, beta: float
) -> float:
    """Closed-form probability that the edge is oriented a -> b."""
    denom = max(float(np.linalg.norm(latent_a + latent_b)), 1e-12)
    w_ab = float(np.exp(beta * np.linalg.norm(latent_a))) / denom
    w_ba = float(np.exp(beta * np.linalg.norm(latent_b))) / denom
    return w_ab / (w_ab + w_ba)


def gen_world(config: WorldConfig, ontology: Ontology | None = None) -> GroundTruthWorld:
    onto = ontology or Ontology()
    seed = config.seed

    vocab = Vocabulary()
    members = onto.family_members()
    for fam in onto.label_families:
        for name in members[fam]:
            vocab.add_class(name) if fam in ("BClass", "PClass", "GClass") else vocab.add_attribute(name)
        vocab.define_family(fam, list(members[fam]))
    for p in onto.scene_predicates:
        vocab.add_predicate(p)
    for p in onto.nonvisual_predicates:
        vocab.add_predicate(p)
    vocab.add_predicate(onto.social_predicate)

    proto_rng = substream(seed, "prototypes")
    protos: dict[str, np.ndarray] = {}
    for name in (
        list(onto.b_classes) + list(onto.colors) + list(onto.activities)
        + list(onto.scene_predicates) + list(onto.nonvisual_predicates) + [onto.social_predicate]
    ):
        protos[name] = proto_rng.normal(size=config.proto_dim)
    protos["_proj_entity"] = proto_rng.normal(
        size=(config.feature_dim, 2 * config.proto_dim)
    ) / np.sqrt(2 * config.proto_dim)
    protos["_proj_relation"] = proto_rng.normal(
        size=(config.feature_dim, 3 * config.proto_dim)
    ) / np.sqrt(3 * config.proto_dim)

    ent_rng = substream(seed, "entities")
    entities: dict[str, EntityRecord] = {}
    for i in range(config.n_entities):
        rec = _draw_entity(f"e{i:04d}", onto, ent_rng, protos, config.latent_scale)
        entities[rec.name] = rec
        vocab.add_entity(rec.name)

    owners: list[tuple[str, str]] = []  # (owned entity, owner entity)
    if config.owners:
        own_rng = substream(seed, "owners")
        owned = [e for e in entities.values() if e.labels["BClass"] == onto.owned_class]
        for i, dog in enumerate(owned):
            rec = _draw_entity(f"w{i:04d}", onto, own_rng, protos, config.latent_scale)
            rec.labels["BClass"] = onto.owner_class
            rec.labels["PClass"] = onto.parent_of(onto.owner_class)
            rec.labels["GClass"] = onto.top_of(rec.labels["PClass"])
            rec.labels["Risk"] = onto.risk_rule[rec.labels["GClass"]]
            rec.visual = False
            entities[rec.name] = rec
            vocab.add_entity(rec.name)
            owners.append((dog.name, rec.name))

    test_rng = substream(seed, "test-entities")
    test_entities: dict[str, EntityRecord] = {}
    for i in range(config.n_test_entities):
        rec = _draw_entity(f"v{i:04d}", onto, test_rng, protos, config.latent_scale)
        test_entities[rec.name] = rec

    table_rng = substream(seed, "pair-table")
    table = _build_pair_table(onto, table_rng)
    heldout = _hold_out(table, config.zero_shot_fraction, substream(seed, "zero-shot"))
    heldout_set = set(heldout)

    scene_rng = substream(seed, "scenes")
    visual_pool = [e for e in entities.values() if e.visual]
    scenes: list[SceneRecord] = []
    n_unlabeled = int(round(config.unlabeled_fraction * config.n_scenes))
    for i in range(config.n_scenes):
        unlabeled = i >= config.n_scenes - n_unlabeled
        scenes.append(
            _compose_scene(
                f"u{i:04d}" if unlabeled else f"t{i:04d}",
                "unlabeled" if unlabeled else "train",
                not unlabeled,
                visual_pool,
                onto,
                config,
                table,
                heldout_set,
                scene_rng,
            )
        )
    test_pool = list(test_entities.values())
    for i in range(config.n_test_scenes):
        scenes.append(
            _compose_scene(
                f"g{i:04d}", "e_test", False, test_pool, onto, config, table, heldout_set, scene_rng
            )
        )

    if config.ex_split:
        for scene in [s for s in scenes if s.kind == "train"]:
            scenes.append(
                SceneRecord(
                    name="x" + scene.name[1:], kind="ex_train", instance=True,
                    members=list(scene.members), binaries=list(scene.binaries), theme=scene.theme,
                )
            )
            scenes.append(
                SceneRecord(
                    name="y" + scene.name[1:], kind="ex_test", instance=False,
                    members=list(scene.members), binaries=list(scene.binaries), theme=scene.theme,
                )
            )

    for i, (dog, owner) in enumerate(owners):
        binaries = [(dog, "ownedBy", owner)]
        if substream(seed, "affection", i).random() < 0.5:
            binaries.append((dog, "lovedBy", owner))
        scenes.append(
            SceneRecord(
                name=f"b{i:04d}", kind="background", instance=True,
                members=[dog, owner], binaries=binaries,
            )
        )

    social_edges: list[tuple[str, str]] = []
    persons = {
        name: rec.latent
        for name, rec in entities.items()
        if rec.labels["BClass"] == onto.owner_class
    }
    if config.social and len(persons) >= config.social_k + 1:
        per_person = social_network(
            persons, config.social_k, config.social_beta, substream(seed, "social")
        )
        for i, name in enumerate(sorted(per_person)):
            edges = per_person[name]
            friends = sorted({u for e in edges for u in e if u != name})
            scenes.append(
                SceneRecord(
                    name=f"s{i:04d}", kind="social", instance=True,
                    members=[name] + friends,
                    binaries=[(u, onto.social_predicate, v) for u, v in edges],
                )
            )
            social_edges.extend(edges)

    for scene in scenes:
        if scene.instance:
            vocab.add_instance(scene.name)

    world = GroundTruthWorld(
        config=config, ontology=onto, vocab=vocab,
        entities=entities, test_entities=test_entities, scenes=scenes,
        features={}, pair_table=table, heldout=heldout,
        zs_examples=[], social_edges=social_edges, prototypes=protos,
    )

    feat_rng = substream(seed, "features")
    for scene in scenes:
        if scene.kind in ("train", "ex_train", "ex_test", "e_test", "unlabeled"):
            _scene_view_features(world, scene, feat_rng)

    zs_rng = substream(seed, "zs-examples")
    by_class: dict[str, list[str]] = {}
    for rec in entities.values():
        if rec.visual:
            by_class.setdefault(rec.labels["BClass"], []).append(rec.name)
    idx = 0
    for cs, p, co in heldout:
        subj_pool, obj_pool = by_class.get(cs, []), by_class.get(co, [])
        if not subj_pool or not obj_pool:
            continue
        for _ in range(config.zero_shot_per_combo):
            s = subj_pool[int(zs_rng.integers(len(subj_pool)))]
            o = obj_pool[int(zs_rng.integers(len(obj_pool)))]
            if s == o:
                continue
            key = f"zs{idx:04d}"
            s_rec, o_rec = entities[s], entities[o]
            s_box = entity_box_features(
                protos["_proj_entity"], protos[cs], s_rec.latent, config.noise_sigma, zs_rng
            )
            o_box = entity_box_features(
                protos["_proj_entity"], protos[co], o_rec.latent, config.noise_sigma, zs_rng
            )
            world.features[f"{key}:s"] = s_box
            world.features[f"{key}:o"] = o_box
            world.features[f"{key}:scene"] = scene_features(
                [s_box.astype(np.float64), o_box.astype(np.float64)],
                config.scene_noise_sigma, zs_rng,
            )
            world.features[f"{key}:rel"] = relation_box_features(
                protos["_proj_relation"], s_rec.latent, o_rec.latent, protos[p],
                config.noise_sigma, zs_rng,
            )
            world.zs_examples.append({"key": key, "s": s, "p": p, "o": o,
                                      "s_class": cs, "o_class": co})
            idx += 1

    vocab.validate()
    return world


# -- store ingestion ---------------------------------------------------------------


def _ingest(world: GroundTruthWorld, duplicate_policy: str) -> TripleStore:
    v = world.vocab
    onto = world.ontology
    store = TripleStore(v, duplicate_policy=duplicate_policy)
    ha = v.has_attribute
    scene_preds = [v.id_of(p) for p in onto.scene_predicates]
    nonvisual_preds = [v.id_of(p) for p in onto.nonvisual_predicates]
    social_pred = [v.id_of(onto.social_predicate)]
    for scene in world.scenes:
        if not scene.instance:
            continue
        t = v.id_of(scene.name)
        member_ids = [v.id_of(m) for m in scene.members]
        if scene.kind in ("train", "ex_train", "background"):
            for name, e in zip(scene.members, member_ids):
                for fam in onto.label_families:
                    label = world.entity_record(name).labels[fam]
                    store.add_observation(e, ha, v.id_of(label), t, True)
        for s, p, o in scene.binaries:
            store.add_observation(v.id_of(s), v.id_of(p), v.id_of(o), t, True)
        if scene.kind in ("train", "ex_train"):
            store.lcwa_expand(t, member_ids, onto.label_families, scene_preds)
        elif scene.kind == "background":
            store.lcwa_expand(t, member_ids, onto.label_families, nonvisual_preds)
        elif scene.kind == "social":
            store.lcwa_expand(t, member_ids, [], social_pred)
    return store


# -- export / import -----------------------------------------------------------------


def write_features(features: dict[str, np.ndarray], base_path: str) -> None:
    manifest = []
    offset = 0
    chunks = []
    for key in sorted(features):
        arr = np.ascontiguousarray(features[key], dtype="<f4")
        manifest.append(
            {"key": key, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes}
        )
        offset += arr.nbytes
        chunks.append(arr.tobytes())
    with open(base_path + ".json", "w", encoding="utf-8") as fp:
        json.dump({"format": "bilayer-features", "version": 1, "tensors": manifest}, fp, indent=2)
        fp.write("\n")
    with open(base_path + ".bin", "wb") as fp:
        fp.write(b"".join(chunks))


def read_features(base_path: str) -> dict[str, np.ndarray]:
    with open(base_path + ".json", "r", encoding="utf-8") as fp:
        manifest = json.load(fp)
    if manifest.get("format") != "bilayer-features":
        raise WorldError("not a feature archive")
    with open(base_path + ".bin", "rb") as fp:
        blob = fp.read()
    out = {}
    for spec in manifest["tensors"]:
        raw = blob[spec["offset"]: spec["offset"] + spec["nbytes"]]
        out[spec["key"]] = np.frombuffer(raw, dtype="<f4").reshape(spec["shape"]).astype(np.float32)
    return out


def export_world(world: GroundTruthWorld, outdir: str) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    written = []

    def _write(name: str, text: str) -> None:
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8") as fp:
            fp.write(text)
        written.append(name)

    _write("config.json", json.dumps(
        {"world": world.config.to_dict(), "ontology": world.ontology.to_dict()},
        indent=2, sort_keys=True) + "\n")
    _write("vocab.json", world.vocab.dumps() + "\n")

    store = world.build_store()
    from .triple_store import write_jsonl  # local import to avoid cycle at module load

    import io
    buf = io.StringIO()
    write_jsonl(store, buf, truth=True)
    _write("triples.jsonl", buf.getvalue())
    buf = io.StringIO()
    write_jsonl(store, buf, truth=False)
    _write("negatives.jsonl", buf.getvalue())

    doc = {
        "entities": [
            {"name": r.name, "labels": r.labels, "visual": r.visual}
            for r in world.entities.values()
        ],
        "test_entities": [
            {"name": r.name, "labels": r.labels, "visual": r.visual}
            for r in world.test_entities.values()
        ],
        "scenes": [
            {
                "name": s.name, "kind": s.kind, "instance": s.instance,
                "members": s.members, "binaries": [list(b) for b in s.binaries],
                "theme": s.theme,
            }
            for s in world.scenes
        ],
        "pair_table": {
            f"{cs}|{co}": [[p, w] for p, w in row]
            for (cs, co), row in sorted(world.pair_table.items())
        },
        "heldout": [list(h) for h in world.heldout],
        "zs_examples": world.zs_examples,
        "social_edges": [list(e) for e in world.social_edges],
    }
    _write("world.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    write_features(world.features, os.path.join(outdir, "features"))
    written.extend(["features.json", "features.bin"])
    return written


def load_world(indir: str) -> GroundTruthWorld:
    with open(os.path.join(indir, "config.json"), "r", encoding="utf-8") as fp:
        cfg_doc = json.load(fp)
    config = WorldConfig.from_dict(cfg_doc["world"])
    onto_doc = cfg_doc["ontology"]
    for key in ("ages", "colors", "activities", "risks", "scene_predicates",
                "nonvisual_predicates"):
        onto_doc[key] = tuple(onto_doc[key])
    onto = Ontology(**onto_doc)
    with open(os.path.join(indir, "vocab.json"), "r", encoding="utf-8") as fp:
        vocab = Vocabulary.loads(fp.read())
    with open(os.path.join(indir, "world.json"), "r", encoding="utf-8") as fp:
        doc = json.load(fp)
    entities = {
        e["name"]: EntityRecord(name=e["name"], labels=e["labels"], visual=e["visual"])
        for e in doc["entities"]
    }
    test_entities = {
        e["name"]: EntityRecord(name=e["name"], labels=e["labels"], visual=e["visual"])
        for e in doc["test_entities"]
    }
    scenes = [
        SceneRecord(
            name=s["name"], kind=s["kind"], instance=s["instance"],
            members=list(s["members"]), binaries=[tuple(b) for b in s["binaries"]],
            theme=s.get("theme"),
        )
        for s in doc["scenes"]
    ]
    pair_table = {
        tuple(key.split("|")): [(p, float(w)) for p, w in row]
        for key, row in doc["pair_table"].items()
    }
    world = GroundTruthWorld(
        config=config, ontology=onto, vocab=vocab,
        entities=entities, test_entities=test_entities, scenes=scenes,
        features=read_features(os.path.join(indir, "features")),
        pair_table=pair_table,
        heldout=[tuple(h) for h in doc["heldout"]],
        zs_examples=doc["zs_examples"],
        social_edges=[tuple(e) for e in doc["social_edges"]],
        prototypes=None,
    )
    world._triples_dir = indir  # type: ignore[attr-defined]
    return world


def rebuild_store_from_files(world: GroundTruthWorld, indir: str) -> TripleStore:
    from .triple_store import read_jsonl

    store = TripleStore(world.vocab, duplicate_policy="error")
    with open(os.path.join(indir, "triples.jsonl"), "r", encoding="utf-8") as fp:
        read_jsonl(store, fp)
    with open(os.path.join(indir, "negatives.jsonl"), "r", encoding="utf-8") as fp:
        read_jsonl(store, fp)
    return store
