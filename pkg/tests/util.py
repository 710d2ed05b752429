"""Shared test helpers: a hand-rolled vocabulary builder and independent
brute-force reference implementations of every counting model.

The reference code here deliberately shares no logic with the package: it
scans flat observation records with nested loops so the fast incremental
counters in the store can be checked against first principles.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from bilayer.params import ColumnMap, NetConfig, NetParams
from bilayer.triple_store import TripleStore
from bilayer.vocab import Vocabulary
from bilayer.world import substream


def small_vocab(
    n_entities: int = 4,
    n_instances: int = 3,
    classes: tuple = ("Dog", "Cat", "Mammal"),
    attributes: tuple = ("Young", "Old"),
    predicates: tuple = ("near", "chases"),
    families: dict | None = None,
) -> Vocabulary:
    v = Vocabulary()
    for c in classes:
        v.add_class(c)
    for a in attributes:
        v.add_attribute(a)
    for p in predicates:
        v.add_predicate(p)
    for i in range(n_entities):
        v.add_entity(f"e{i}")
    for i in range(n_instances):
        v.add_instance(f"t{i}")
    if families is None:
        families = {"Species": ["Dog", "Cat"], "Rank": ["Mammal"], "Age": ["Young", "Old"]}
        families = {
            f: [m for m in members if m in v] for f, members in families.items()
        }
        families = {f: m for f, m in families.items() if m}
    for fam, members in families.items():
        v.define_family(fam, members)
    return v


def small_params(
    vocab: Vocabulary,
    rep_dim: int = 8,
    ctx_dim: int = 4,
    feature_dim: int = 6,
    seed: int = 0,
    dtype: str = "float32",
    tied: bool = True,
) -> tuple[NetParams, ColumnMap]:
    config = NetConfig(
        rep_dim=rep_dim, ctx_dim=ctx_dim, feature_dim=feature_dim, dtype=dtype, tied=tied
    )
    params = NetParams.init(vocab, config, substream(seed, "init"))
    return params, ColumnMap(vocab)


Record = tuple[int, int, int, int, bool]  # (s, p, o, t, truth)


def random_records(
    vocab: Vocabulary, rng: np.random.Generator, n_true: int, n_false: int
) -> list[Record]:
    """Random well-typed observation records without (quad, truth) conflicts."""
    entities = list(vocab.entities)
    instances = list(vocab.instances)
    preds = list(vocab.binary_predicates)
    labels = list(vocab.labels)
    ha = vocab.has_attribute
    seen: set[tuple[int, int, int, int]] = set()
    out: list[Record] = []
    want = [(True, n_true), (False, n_false)]
    for truth, n in want:
        made = 0
        while made < n:
            s = entities[int(rng.integers(len(entities)))]
            t = instances[int(rng.integers(len(instances)))]
            if rng.random() < 0.5:
                p, o = ha, labels[int(rng.integers(len(labels)))]
            else:
                p = preds[int(rng.integers(len(preds)))]
                o = entities[int(rng.integers(len(entities)))]
                if o == s:
                    continue
            if (s, p, o, t) in seen:
                continue
            seen.add((s, p, o, t))
            out.append((s, p, o, t, truth))
            made += 1
    return out


def store_from_records(vocab: Vocabulary, records: list[Record]) -> TripleStore:
    store = TripleStore(vocab)
    for s, p, o, t, truth in records:
        store.add_observation(s, p, o, t, truth)
    return store


# -- brute-force reference models (exact rational arithmetic) ----------------------


def brute_observation_dist(records: list[Record], t: int) -> dict:
    trues = [(s, p, o) for s, p, o, ti, y in records if ti == t and y]
    return {k: Fraction(trues.count(k), len(trues)) for k in set(trues)}


def brute_pooled_dist(records: list[Record]) -> dict:
    trues = [(s, p, o) for s, p, o, _, y in records if y]
    return {k: Fraction(trues.count(k), len(trues)) for k in set(trues)}


def brute_expected_truth(records: list[Record], s: int, p: int, o: int):
    pos = sum(1 for s2, p2, o2, _, y in records if (s2, p2, o2) == (s, p, o) and y)
    known = sum(1 for s2, p2, o2, _, y in records if (s2, p2, o2) == (s, p, o))
    if known == 0:
        return None
    return Fraction(pos, known)


def brute_label_conditional(records: list[Record], ha: int, c1: int, c2: int):
    sites = {(s, t) for s, p, o, t, y in records if (p, o) == (ha, c1) and y}
    num = den = 0
    for s, t in sites:
        for s2, p2, o2, t2, y in records:
            if (s2, p2, o2, t2) == (s, ha, c2, t):
                den += 1
                num += int(y)
                break
    if den == 0:
        return None
    return Fraction(num, den)
