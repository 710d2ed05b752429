"""Example construction, index swapping, the optimizer, the training loop,
self-labeled growth, and consolidation."""
from __future__ import annotations

import io

import numpy as np
import pytest

from bilayer.network import DecodeRequest, decode
from bilayer.params import NetConfig, NetParams
from bilayer.training import (
    Adam,
    TrainConfig,
    TrainError,
    TrainingDiverged,
    build_batches,
    consolidate,
    detect_novel_entity,
    forgetting_probe,
    injection_pool,
    memory_examples,
    perception_examples,
    ssl_step,
    train,
    write_history_csv,
)
from bilayer.triple_store import TripleStore
from bilayer.world import WorldConfig, gen_world, substream

from util import random_records, small_params, small_vocab, store_from_records


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(TrainError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(TrainError):
            TrainConfig(batch_size=0)
        with pytest.raises(TrainError):
            TrainConfig(inject_rho=1.5)
        with pytest.raises(TrainError):
            TrainConfig(dropout=1.0)
        with pytest.raises(TrainError):
            TrainConfig(modes=("episodic", "dreaming"))
        with pytest.raises(TrainError):
            TrainConfig(direct=True)  # direct needs perception-only modes
        TrainConfig(direct=True, modes=("perception",))

    def test_frozen_blocks(self):
        config = TrainConfig(freeze_emb=True, freeze_enc=True, freeze_pooled=True)
        assert config.frozen_blocks() == {"emb", "emb_up", "enc_w", "enc_b", "pooled"}
        assert TrainConfig().frozen_blocks() == frozenset()

    def test_round_trip(self):
        config = TrainConfig(epochs=3, modes=("episodic",), hidden_families=("Age",))
        again = TrainConfig.from_dict(config.to_dict())
        assert again == config


class TestExampleConstruction:
    def _toy_store(self, v):
        ha = v.has_attribute
        rows = [
            (v.id_of("e0"), ha, v.id_of("Dog"), v.id_of("t0"), True),
            (v.id_of("e0"), ha, v.id_of("Young"), v.id_of("t0"), True),
            (v.id_of("e1"), ha, v.id_of("Cat"), v.id_of("t1"), True),
            (v.id_of("e0"), v.id_of("near"), v.id_of("e1"), v.id_of("t0"), True),
            (v.id_of("e1"), ha, v.id_of("Old"), v.id_of("t1"), False),
        ]
        return store_from_records(v, rows)

    def test_memory_examples(self):
        v = small_vocab()
        store = self._toy_store(v)
        unary, binary = memory_examples(store, v)
        label_rows = [ex for ex in unary if ex["fam"] != "Identity"]
        ident_rows = [ex for ex in unary if ex["fam"] == "Identity"]
        # three positive labels; the negative contributes nothing
        assert {(ex["s"], ex["fam"], ex["o"]) for ex in label_rows} == {
            (v.id_of("e0"), "Species", v.id_of("Dog")),
            (v.id_of("e0"), "Age", v.id_of("Young")),
            (v.id_of("e1"), "Species", v.id_of("Cat")),
        }
        # identity rows: every (entity, instance) observation incl. binary objects
        assert {(ex["s"], ex["t"]) for ex in ident_rows} == {
            (v.id_of("e0"), v.id_of("t0")),
            (v.id_of("e1"), v.id_of("t0")),
            (v.id_of("e1"), v.id_of("t1")),
        }
        assert all(ex["o"] == ex["s"] for ex in ident_rows)
        assert binary == [
            {"t": v.id_of("t0"), "s": v.id_of("e0"), "p": v.id_of("near"), "o": v.id_of("e1")}
        ]

    def test_memory_examples_exclusions(self):
        v = small_vocab()
        store = self._toy_store(v)
        unary, _ = memory_examples(store, v, excluded_families=("Species",))
        fams = {ex["fam"] for ex in unary}
        assert "Species" not in fams
        assert "Age" in fams and "Identity" in fams

    def test_injection_pool(self):
        v = small_vocab()
        store = self._toy_store(v)
        pool = injection_pool(store, v)
        assert pool[v.id_of("e0")].tolist() == sorted([v.id_of("Dog"), v.id_of("Young")])
        assert pool[v.id_of("e1")].tolist() == [v.id_of("Cat")]
        no_species = injection_pool(store, v, excluded_families=("Species", "Age"))
        assert no_species == {}

    def test_perception_examples(self, tiny_world):
        v = tiny_world.vocab
        unary, binary = perception_examples(tiny_world, v)
        scenes = {s.name: s for s in tiny_world.scenes_of_kind("train", "ex_train")}
        assert unary and binary
        for ex in unary:
            assert v.name_of(ex["t"]) in scenes
            assert ex["scene"] in tiny_world.features and ex["bb"] in tiny_world.features
            if ex["fam"] == "Identity":
                assert ex["o"] == ex["s"]
            else:
                assert ex["o"] in v.families[ex["fam"]]
        for ex in binary:
            scene = scenes[v.name_of(ex["t"])]
            assert (v.name_of(ex["s"]), v.name_of(ex["p"]), v.name_of(ex["o"])) in scene.binaries
            assert ex["rel"] in tiny_world.features
        # every member of every instance scene gets an identity row
        want = sum(len(s.members) for s in scenes.values() if s.instance)
        assert sum(1 for ex in unary if ex["fam"] == "Identity") == want

    def test_perception_examples_hide_families(self, tiny_world):
        unary, _ = perception_examples(tiny_world, tiny_world.vocab, hidden_families=("Risk",))
        assert all(ex["fam"] != "Risk" for ex in unary)


class TestBuildBatches:
    def test_identity_rows_are_never_swapped(self):
        v = small_vocab()
        _, cmap = small_params(v)
        e0 = v.id_of("e0")
        pool = {e0: np.array([v.id_of("Young")], dtype=np.int64)}
        rows = [{"t": v.id_of("t0"), "s": e0, "fam": "Identity", "o": e0}]
        for seed in range(10):
            (batch,) = build_batches(
                rows, [], mode="episodic", cmap=cmap, batch_size=4,
                rng=substream(seed, "b"), rho=1.0, pool=pool,
            )
            assert batch.subj_inject_cols.tolist() == [cmap.col_of(e0)]

    def test_swap_moves_injection_but_not_family_target(self):
        v = small_vocab()
        _, cmap = small_params(v)
        e0, dog, young = v.id_of("e0"), v.id_of("Dog"), v.id_of("Young")
        pool = {e0: np.array([young], dtype=np.int64)}
        rows = [{"t": v.id_of("t0"), "s": e0, "fam": "Species", "o": dog}]
        (batch,) = build_batches(
            rows, [], mode="episodic", cmap=cmap, batch_size=4,
            rng=substream(0, "b"), rho=1.0, pool=pool,
        )
        # the injected index (also the subject-head target) follows the swap
        assert batch.subj_inject_cols.tolist() == [cmap.col_of(young)]
        # the family head still answers with the entity's real label
        assert batch.fam_target_cols["Species"].tolist() == [cmap.col_of(dog)]

    def test_zero_rho_keeps_subjects(self):
        v = small_vocab()
        _, cmap = small_params(v)
        e0 = v.id_of("e0")
        pool = {e0: np.array([v.id_of("Young")], dtype=np.int64)}
        rows = [{"t": v.id_of("t0"), "s": e0, "fam": "Species", "o": v.id_of("Dog")}]
        (batch,) = build_batches(
            rows, [], mode="episodic", cmap=cmap, batch_size=4,
            rng=substream(0, "b"), rho=0.0, pool=pool,
        )
        assert batch.subj_inject_cols.tolist() == [cmap.col_of(e0)]

    def test_binary_swaps_subject_and_object(self):
        v = small_vocab()
        _, cmap = small_params(v)
        e0, e1, young, old = (v.id_of(n) for n in ("e0", "e1", "Young", "Old"))
        pool = {
            e0: np.array([young], dtype=np.int64),
            e1: np.array([old], dtype=np.int64),
        }
        rows = [{"t": v.id_of("t0"), "s": e0, "p": v.id_of("near"), "o": e1}]
        (batch,) = build_batches(
            [], rows, mode="semantic", cmap=cmap, batch_size=4,
            rng=substream(1, "b"), rho=1.0, pool=pool,
        )
        assert batch.subj_inject_cols.tolist() == [cmap.col_of(young)]
        assert batch.obj_inject_cols.tolist() == [cmap.col_of(old)]
        assert batch.pred_cols.tolist() == [cmap.col_of(v.id_of("near"))]
        assert batch.inst_cols is None  # semantic batches carry no instance

    def test_chunking(self):
        v = small_vocab()
        _, cmap = small_params(v)
        rows = [
            {"t": v.id_of(f"t{i % 3}"), "s": v.id_of(f"e{i % 4}"), "fam": "Identity",
             "o": v.id_of(f"e{i % 4}")}
            for i in range(5)
        ]
        batches = build_batches(
            rows, [], mode="episodic", cmap=cmap, batch_size=2, rng=substream(0, "b")
        )
        assert [len(b) for b in batches] == [2, 2, 1]
        assert all(b.inst_cols is not None for b in batches)


class TestAdam:
    def test_single_step_closed_form(self):
        v = small_vocab()
        params, _ = small_params(v, dtype="float64")
        grads = {k: np.zeros_like(a) for k, a in params.blocks().items()}
        g = np.linspace(-1.0, 1.0, params.pooled.size)
        grads["pooled"] = g.copy()
        before = {k: a.copy() for k, a in params.blocks().items()}
        opt = Adam(params, learning_rate=0.1, eps=1e-8)
        opt.step(params, grads)
        # after one step the bias corrections cancel: update = lr * g / (|g| + eps)
        want = before["pooled"] - 0.1 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(params.pooled, want, rtol=1e-12)
        for name in before:
            if name != "pooled":
                np.testing.assert_array_equal(params.blocks()[name], before[name])

    def test_frozen_blocks_stay_bit_identical(self):
        v = small_vocab()
        params, _ = small_params(v)
        grads = {k: np.ones_like(a) for k, a in params.blocks().items()}
        before = {k: a.copy() for k, a in params.blocks().items()}
        opt = Adam(params, learning_rate=0.05)
        opt.step(params, grads, frozen=frozenset({"ctx_rec", "enc_b"}))
        np.testing.assert_array_equal(params.ctx_rec, before["ctx_rec"])
        np.testing.assert_array_equal(params.enc_b, before["enc_b"])
        assert not np.array_equal(params.ctx_in, before["ctx_in"])

    def test_column_mask_pins_embedding_columns(self):
        v = small_vocab()
        params, cmap = small_params(v)
        grads = {k: np.ones_like(a) for k, a in params.blocks().items()}
        before = params.emb.copy()
        mask = np.zeros(cmap.n_columns, dtype=params.emb.dtype)
        mask[cmap.entity_cols] = 1.0
        opt = Adam(params, learning_rate=0.05)
        opt.step(params, grads, emb_col_mask=mask)
        moved = cmap.entity_cols
        held = np.setdiff1d(np.arange(cmap.n_columns), moved)
        assert not np.array_equal(params.emb[:, moved], before[:, moved])
        np.testing.assert_array_equal(params.emb[:, held], before[:, held])


def _memory_setup(seed: int = 0):
    v = small_vocab(n_entities=6, n_instances=4)
    params, cmap = small_params(v, seed=seed)
    store = store_from_records(v, random_records(v, substream(seed, "rec"), 40, 10))
    return v, params, cmap, store


class TestTrainLoop:
    def test_rejects_empty_store(self):
        v = small_vocab()
        params, cmap = small_params(v)
        config = TrainConfig(epochs=1, modes=("episodic",))
        with pytest.raises(TrainError, match="empty"):
            train(params, cmap, v, TripleStore(v), config)

    def test_perception_needs_world(self):
        v, params, cmap, store = _memory_setup()
        config = TrainConfig(epochs=1, modes=("perception",))
        with pytest.raises(TrainError, match="world"):
            train(params, cmap, v, store, config)

    def test_seed_determinism_is_bitwise(self):
        v, params, cmap, store = _memory_setup(seed=3)
        config = TrainConfig(
            epochs=3, batch_size=16, learning_rate=1e-3, seed=11,
            modes=("episodic", "semantic"), dropout=0.2,
        )
        a = params.copy()
        b = params.copy()
        hist_a = train(a, cmap, v, store, config)
        hist_b = train(b, cmap, v, store, config)
        assert hist_a == hist_b
        for name, arr in a.blocks().items():
            np.testing.assert_array_equal(arr, b.blocks()[name])

    def test_loss_decreases(self):
        v, params, cmap, store = _memory_setup(seed=4)
        config = TrainConfig(
            epochs=10, batch_size=32, learning_rate=3e-3, seed=2, modes=("episodic",),
        )
        history = train(params, cmap, v, store, config)
        first = history[0]["loss"]
        last = history[-1]["loss"]
        assert last < first

    def test_history_covers_every_epoch_and_mode(self):
        v, params, cmap, store = _memory_setup(seed=5)
        config = TrainConfig(
            epochs=2, batch_size=32, learning_rate=1e-3, seed=0,
            modes=("episodic", "semantic"),
        )
        history = train(params, cmap, v, store, config)
        assert [(r["epoch"], r["split"]) for r in history] == [
            (0, "episodic"), (0, "semantic"), (1, "episodic"), (1, "semantic"),
        ]

    def test_frozen_blocks_survive_training(self):
        v, params, cmap, store = _memory_setup(seed=6)
        config = TrainConfig(
            epochs=2, batch_size=32, learning_rate=1e-2, seed=0, modes=("episodic",),
            freeze_ctx_in=True, freeze_ctx_rec=True, freeze_ctx_out=True,
        )
        before = {k: a.copy() for k, a in params.blocks().items()}
        train(params, cmap, v, store, config)
        for name in ("ctx_in", "ctx_rec", "ctx_out"):
            np.testing.assert_array_equal(params.blocks()[name], before[name])
        assert not np.array_equal(params.emb, before["emb"])

    def test_divergence_is_reported(self):
        v, params, cmap, store = _memory_setup(seed=7)
        params.emb[:] = np.nan
        config = TrainConfig(epochs=1, modes=("episodic",), learning_rate=1e-3)
        with pytest.raises(TrainingDiverged) as err:
            train(params, cmap, v, store, config)
        assert err.value.epoch == 0
        assert err.value.mode == "episodic"

    def test_history_csv(self):
        buf = io.StringIO()
        write_history_csv(
            [{"epoch": 0, "split": "episodic", "loss": 1.23456789, "metric": 0.5}], buf
        )
        assert buf.getvalue() == "epoch,split,loss,metric\n0,episodic,1.234568,0.500000\n"


SSL_WORLD = WorldConfig(
    n_entities=20,
    n_scenes=8,
    n_test_entities=3,
    n_test_scenes=1,
    feature_dim=24,
    proto_dim=8,
    unlabeled_fraction=0.3,
    zero_shot_per_combo=1,
    ex_split=False,
    owners=False,
    social=False,
    seed=12,
)


@pytest.fixture()
def ssl_world():
    return gen_world(SSL_WORLD)


class TestSelfLabeledGrowth:
    def test_novelty_detector(self):
        assert detect_novel_entity(np.array([0.2, 0.5]), 0.6)
        assert not detect_novel_entity(np.array([0.2, 0.7]), 0.6)
        assert detect_novel_entity(np.array([]), 0.6)

    def test_ssl_step_grows_and_freezes(self, ssl_world):
        from bilayer.params import ColumnMap

        v = ssl_world.vocab
        net = NetConfig(rep_dim=16, ctx_dim=8, feature_dim=24)
        params = NetParams.init(v, net, substream(0, "init"))
        cmap = ColumnMap(v)
        store = ssl_world.build_store()
        unlabeled = sorted(s.name for s in ssl_world.scenes_of_kind("unlabeled"))
        assert unlabeled, "world must produce unlabeled scenes for this test"

        frozen_before = {
            k: a.copy() for k, a in params.blocks().items() if k != "emb"
        }
        concepts = list(v.labels) + list(v.binary_predicates)
        concept_cols = {sid: params.emb[:, cmap.col_of(sid)].copy() for sid in concepts}
        n_statements_before = store.total_statements()
        config = TrainConfig(
            seed=1, batch_size=16, ssl_epochs=2, ssl_learning_rate=1e-4,
            novelty_threshold=0.6,
        )
        params, cmap, report = ssl_step(params, cmap, v, ssl_world, unlabeled, config, store)

        assert report.new_instances == unlabeled
        for name in unlabeled:
            assert name in v  # registered as instances
        for name in report.new_entities:
            scene_part, idx = name.rsplit(".", 1)
            assert scene_part in unlabeled and idx.isdigit()
            assert name in v
        # recognition covered every box of every scene
        for name in unlabeled:
            boxes = {row["box"] for row in report.recognized[name]}
            assert boxes == set(ssl_world.scene(name).members)
            for row in report.recognized[name]:
                assert row["entity"] is not None

        # one pseudo-statement per (box, family) plus one identity row per box,
        # one per scene relation
        fams = [f for f in v.families if f != "Identity"]
        n_boxes = sum(len(ssl_world.scene(n).members) for n in unlabeled)
        n_rels = sum(len(ssl_world.scene(n).binaries) for n in unlabeled)
        assert len(report.pseudo_unary) == n_boxes * (len(fams) + 1)
        assert len(report.pseudo_binary) == n_rels
        assert store.total_statements() > n_statements_before

        # everything except entity/instance embedding columns is bit-frozen
        for name, before in frozen_before.items():
            np.testing.assert_array_equal(params.blocks()[name], before)
        for sid, before in concept_cols.items():
            np.testing.assert_array_equal(params.emb[:, cmap.col_of(sid)], before)
        assert report.history  # the low-rate pseudo-training actually ran

    def test_ssl_step_rejects_featureless_scene(self, ssl_world):
        from bilayer.params import ColumnMap

        v = ssl_world.vocab
        params = NetParams.init(
            v, NetConfig(rep_dim=16, ctx_dim=8, feature_dim=24), substream(0, "init")
        )
        scene = ssl_world.scenes_of_kind("unlabeled")[0]
        del ssl_world.features[scene.scene_key]
        with pytest.raises(TrainError, match="features"):
            ssl_step(
                params, ColumnMap(v), v, ssl_world, [scene.name], TrainConfig(seed=0)
            )


class TestConsolidation:
    def test_validations(self):
        v = small_vocab()
        params, cmap = small_params(v)
        with pytest.raises(TrainError, match="instance"):
            consolidate(params, cmap, v, v.id_of("e0"))
        with pytest.raises(TrainError, match="steps"):
            consolidate(params, cmap, v, v.id_of("t0"), steps=0)
        with pytest.raises(TrainError, match="step_size"):
            consolidate(params, cmap, v, v.id_of("t0"), step_size=1.5)

    def test_duplicate_reproduces_the_original(self):
        v = small_vocab()
        params, cmap = small_params(v, seed=30)
        tid = v.id_of("t1")
        pre = {
            sid: params.emb[:, cmap.col_of(sid)].copy() for sid in cmap.ids
        }
        orig_trace = decode(
            params, cmap, v,
            DecodeRequest(mode="episodic", instance_id=tid, winner_take_all=True),
            substream(0, "c"),
        )
        params, cmap, dup = consolidate(params, cmap, v, tid)
        assert v.name_of(dup) == "t1.dup"
        np.testing.assert_allclose(
            params.emb[:, cmap.col_of(dup)],
            params.emb[:, cmap.col_of(tid)],
            atol=2e-7, rtol=0,
        )
        for sid, before in pre.items():
            np.testing.assert_array_equal(params.emb[:, cmap.col_of(sid)], before)
        dup_trace = decode(
            params, cmap, v,
            DecodeRequest(mode="episodic", instance_id=dup, winner_take_all=True),
            substream(0, "c"),
        )
        assert dup_trace.subject_id == orig_trace.subject_id
        assert dup_trace.labels == orig_trace.labels
        assert dup_trace.object_id == orig_trace.object_id
        assert dup_trace.predicate_id == orig_trace.predicate_id


class TestForgettingProbe:
    def test_null_perturbation(self):
        v = small_vocab()
        params, cmap = small_params(v)
        out = forgetting_probe(
            params, cmap,
            protected_ids=[v.id_of("e0"), v.id_of("t0")],
            perturb=lambda: (params, cmap),
            recall=lambda p, c: 0.75,
        )
        assert out["recall_before"] == out["recall_after"] == 0.75
        assert out["delta"] == 0.0
        assert out["max_drift"] == 0.0
        assert set(out["column_drift"]) == {v.id_of("e0"), v.id_of("t0")}

    def test_detects_drift(self):
        v = small_vocab()
        params, cmap = small_params(v)
        e0 = v.id_of("e0")

        def perturb():
            params.emb[:, cmap.col_of(e0)] += 1.0
            return params, cmap

        out = forgetting_probe(
            params, cmap, [e0], perturb, recall=lambda p, c: 0.5
        )
        expected = float(np.sqrt(params.emb.shape[0]))
        assert abs(out["max_drift"] - expected) < 1e-5
