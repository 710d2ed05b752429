"""Column bookkeeping, parameter init, checkpoint round trips, vocabulary growth."""
from __future__ import annotations

import json

import numpy as np
import pytest

from bilayer.params import (
    ColumnMap,
    NetConfig,
    NetParams,
    ParamError,
    load_checkpoint,
    save_checkpoint,
)
from bilayer.world import substream

from util import small_params, small_vocab


class TestColumnMap:
    def test_canonical_column_order(self):
        v = small_vocab()
        cmap = ColumnMap(v)
        expected = (
            [v.id_of(f"e{i}") for i in range(4)]
            + [v.id_of(c) for c in ("Dog", "Cat", "Mammal")]
            + [v.id_of(a) for a in ("Young", "Old")]
            + [v.id_of(p) for p in ("near", "chases")]
            + [v.id_of(f"t{i}") for i in range(3)]
        )
        assert cmap.ids.tolist() == expected
        assert cmap.n_columns == len(expected)
        assert cmap.kind_counts == (4, 3, 2, 2, 3)
        for col, sid in enumerate(expected):
            assert cmap.col_of(sid) == col
            assert cmap.id_of_col(col) == sid

    def test_has_attribute_gets_no_column(self):
        v = small_vocab()
        cmap = ColumnMap(v)
        with pytest.raises(ParamError):
            cmap.col_of(v.has_attribute)
        with pytest.raises(ParamError):
            cmap.cols_of([v.id_of("Dog"), v.has_attribute])

    def test_index_set_spans(self):
        v = small_vocab()
        cmap = ColumnMap(v)
        assert cmap.entity_cols.tolist() == [0, 1, 2, 3]
        assert cmap.class_cols.tolist() == [4, 5, 6]
        assert cmap.attribute_cols.tolist() == [7, 8]
        assert cmap.predicate_cols.tolist() == [9, 10]
        assert cmap.instance_cols.tolist() == [11, 12, 13]
        assert cmap.concept_cols.tolist() == list(range(9))
        assert cmap.label_cols.tolist() == [4, 5, 6, 7, 8]

    def test_family_cols_sorted(self):
        v = small_vocab()
        cmap = ColumnMap(v)
        for cols in cmap.family_cols.values():
            assert np.all(np.diff(cols) > 0)
        species = {cmap.id_of_col(c) for c in cmap.family_cols["Species"]}
        assert species == {v.id_of("Dog"), v.id_of("Cat")}
        identity = {cmap.id_of_col(c) for c in cmap.family_cols["Identity"]}
        assert identity == set(v.entities)

    def test_positions_within_index_sets(self):
        v = small_vocab()
        cmap = ColumnMap(v)
        assert cmap.concept_pos(cmap.concept_cols).tolist() == list(range(9))
        assert cmap.instance_pos(cmap.instance_cols).tolist() == [0, 1, 2]
        assert cmap.predicate_pos(cmap.predicate_cols).tolist() == [0, 1]
        # a column outside the set maps to the -1 sentinel
        assert cmap.instance_pos([0])[0] == -1


class TestNetConfig:
    def test_round_trip(self):
        config = NetConfig(rep_dim=24, ctx_dim=12, feature_dim=10, tied=False, dtype="float64")
        assert NetConfig.from_dict(config.to_dict()) == config

    def test_defaults_round_trip(self):
        assert NetConfig.from_dict(NetConfig().to_dict()) == NetConfig()


class TestNetParams:
    def test_init_shapes(self):
        v = small_vocab()
        params, cmap = small_params(v, rep_dim=8, ctx_dim=4, feature_dim=6)
        assert params.emb.shape == (8, cmap.n_columns)
        assert params.ctx_in.shape == (4, 8)
        assert params.ctx_rec.shape == (4, 4)
        assert params.ctx_out.shape == (8, 4)
        assert params.pooled.shape == (8,)
        assert params.enc_w.shape == (8, 6)
        assert params.enc_b.shape == (8,)
        assert params.kind_counts == cmap.kind_counts
        assert params.emb.dtype == np.float32

    def test_pooled_is_instance_mean(self):
        v = small_vocab()
        params, cmap = small_params(v)
        want = params.emb[:, cmap.instance_cols].mean(axis=1)
        np.testing.assert_array_equal(params.pooled, want)

    def test_init_deterministic(self):
        v = small_vocab()
        a = NetParams.init(v, NetConfig(rep_dim=8, ctx_dim=4, feature_dim=6), substream(7, "x"))
        b = NetParams.init(v, NetConfig(rep_dim=8, ctx_dim=4, feature_dim=6), substream(7, "x"))
        for name, arr in a.blocks().items():
            np.testing.assert_array_equal(arr, b.blocks()[name])

    def test_tied_readout_is_embedding(self):
        v = small_vocab()
        params, _ = small_params(v, tied=True)
        assert params.emb_up is None
        assert params.readout is params.emb

    def test_untied_readout_is_separate(self):
        v = small_vocab()
        params, _ = small_params(v, tied=False)
        assert params.emb_up is not None
        assert params.readout is params.emb_up
        assert not np.array_equal(params.emb, params.emb_up)

    def test_copy_is_deep_for_arrays(self):
        v = small_vocab()
        params, _ = small_params(v)
        dup = params.copy()
        dup.emb[0, 0] += 1.0
        assert params.emb[0, 0] != dup.emb[0, 0]

    def test_astype_converts_every_block(self):
        v = small_vocab()
        params, _ = small_params(v, dtype="float32")
        wide = params.astype("float64")
        assert wide.config.dtype == "float64"
        for arr in wide.blocks().values():
            assert arr.dtype == np.float64
        np.testing.assert_allclose(wide.emb, params.emb)


class TestCheckpoint:
    @pytest.mark.parametrize("dtype", ["float32", "float64"])
    @pytest.mark.parametrize("tied", [True, False])
    def test_round_trip_bit_identical(self, tmp_path, dtype, tied):
        v = small_vocab()
        params, _ = small_params(v, dtype=dtype, tied=tied, seed=5)
        base = str(tmp_path / "ck")
        manifest_path, blob_path = save_checkpoint(params, v, base)
        assert manifest_path.endswith(".json") and blob_path.endswith(".bin")
        loaded = load_checkpoint(base, v)
        assert loaded.config == params.config
        assert loaded.kind_counts == params.kind_counts
        for name, arr in params.blocks().items():
            got = loaded.blocks()[name]
            assert got.dtype == arr.dtype
            np.testing.assert_array_equal(got, arr)

    def test_missing_files(self, tmp_path):
        v = small_vocab()
        with pytest.raises(ParamError, match="not found"):
            load_checkpoint(str(tmp_path / "absent"), v)

    def test_rejects_other_vocabulary(self, tmp_path):
        v = small_vocab()
        params, _ = small_params(v)
        base = str(tmp_path / "ck")
        save_checkpoint(params, v, base)
        other = small_vocab(n_entities=5)
        with pytest.raises(ParamError, match="vocabulary"):
            load_checkpoint(base, other)

    def test_rejects_foreign_manifest(self, tmp_path):
        v = small_vocab()
        params, _ = small_params(v)
        base = str(tmp_path / "ck")
        save_checkpoint(params, v, base)
        with open(base + ".json") as fp:
            manifest = json.load(fp)
        manifest["format"] = "something-else"
        with open(base + ".json", "w") as fp:
            json.dump(manifest, fp)
        with pytest.raises(ParamError, match="manifest"):
            load_checkpoint(base, v)

    def test_rejects_unknown_version(self, tmp_path):
        v = small_vocab()
        params, _ = small_params(v)
        base = str(tmp_path / "ck")
        save_checkpoint(params, v, base)
        with open(base + ".json") as fp:
            manifest = json.load(fp)
        manifest["version"] = 99
        with open(base + ".json", "w") as fp:
            json.dump(manifest, fp)
        with pytest.raises(ParamError, match="version"):
            load_checkpoint(base, v)


class TestGrow:
    def test_existing_columns_survive_bitwise(self):
        v = small_vocab()
        params, old_cmap = small_params(v, seed=9)
        snapshot = {int(sid): params.emb[:, old_cmap.col_of(sid)].copy() for sid in old_cmap.ids}
        ctx_in_before = params.ctx_in.copy()
        pooled_before = params.pooled.copy()

        v.add_entity("e_new")
        v.add_instance("t_new")
        new_cmap = params.grow(v, substream(9, "grow"))

        assert isinstance(new_cmap, ColumnMap)
        assert params.kind_counts == new_cmap.kind_counts
        assert params.emb.shape[1] == old_cmap.n_columns + 2
        for sid, col_vals in snapshot.items():
            np.testing.assert_array_equal(params.emb[:, new_cmap.col_of(sid)], col_vals)
        # only embedding columns change; the rest of the network is untouched
        np.testing.assert_array_equal(params.ctx_in, ctx_in_before)
        np.testing.assert_array_equal(params.pooled, pooled_before)
        # the fresh columns are live, not zero padding
        assert np.any(params.emb[:, new_cmap.col_of(v.id_of("e_new"))] != 0)

    def test_grow_without_new_symbols_is_identity(self):
        v = small_vocab()
        params, _ = small_params(v)
        before = params.emb.copy()
        params.grow(v, substream(0, "grow"))
        np.testing.assert_array_equal(params.emb, before)

    def test_grow_untied_rebuilds_both_matrices(self):
        v = small_vocab()
        params, old_cmap = small_params(v, tied=False)
        up_snapshot = params.emb_up[:, old_cmap.col_of(v.id_of("Dog"))].copy()
        v.add_entity("e_new")
        new_cmap = params.grow(v, substream(1, "grow"))
        assert params.emb_up.shape == params.emb.shape
        np.testing.assert_array_equal(
            params.emb_up[:, new_cmap.col_of(v.id_of("Dog"))], up_snapshot
        )

    def test_rejects_shrunk_vocabulary(self):
        v = small_vocab()
        params, _ = small_params(v)
        smaller = small_vocab(n_entities=2)
        with pytest.raises(ParamError, match="shrank"):
            params.grow(smaller, substream(0, "grow"))
