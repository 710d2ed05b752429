import pytest

from bilayer.params import ColumnMap, NetConfig, NetParams
from bilayer.training import TrainConfig, train
from bilayer.world import WorldConfig, gen_world, substream


@pytest.fixture(scope="session")
def tiny_world():
    """Small but fully featured: every scene kind present, held-out combos,
    an unlabeled shard, owners and a social network."""
    config = WorldConfig(
        n_entities=60,
        n_scenes=12,
        n_test_entities=6,
        n_test_scenes=2,
        zero_shot_per_combo=2,
        unlabeled_fraction=0.2,
        seed=3,
    )
    return gen_world(config)


@pytest.fixture(scope="session")
def tiny_store(tiny_world):
    return tiny_world.build_store()


@pytest.fixture(scope="session")
def tiny_net_config(tiny_world):
    return NetConfig(rep_dim=16, ctx_dim=8, feature_dim=tiny_world.config.feature_dim)


@pytest.fixture(scope="session")
def tiny_train_config():
    return TrainConfig(epochs=6, batch_size=64, learning_rate=3e-3, seed=1)


@pytest.fixture(scope="session")
def tiny_model(tiny_world, tiny_store, tiny_net_config, tiny_train_config):
    """A briefly trained model: structured enough for decode and metric tests.
    Tests must not mutate it; anything destructive works on a copy."""
    cmap = ColumnMap(tiny_world.vocab)
    params = NetParams.init(tiny_world.vocab, tiny_net_config, substream(0, "init"))
    history = train(
        params, cmap, tiny_world.vocab, tiny_store, tiny_train_config, world=tiny_world
    )
    return params, cmap, history
