import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualnet import tensor as T
from dualnet.config import ArchitectureConfig, TrainConfig
from dualnet.exceptions import ConfigError, ShapeError
from dualnet.network import (DenseBlock, PlainBlock, ResidualBlock, build_dense_block, build_network,
                             build_transition_block, count_params, dense_width, expected_params)
from dualnet.tensor import Tensor


def feats(rng, b=2, L=12, c=8):
    return Tensor(rng.standard_normal((b, L, c)))


@pytest.mark.parametrize("k", range(1, 7))
def test_dense_block_width(k, rng):
    cfg = ArchitectureConfig(family="dense")
    block = build_dense_block(8, k, cfg, rng)
    assert block.c_out == (k + 1) * 8
    assert block(feats(rng)).shape == (2, 12, (k + 1) * 8)


@pytest.mark.parametrize("k", [1, 2, 4])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_stacked_dense_blocks_without_transitions(k, m, rng):
    cfg = ArchitectureConfig(family="dense")
    h, width = feats(rng, c=2), 2
    for _ in range(m):
        # each dense block's plain blocks emit c_base=2, input width grows
        block = DenseBlock(width, k, cfg, rng)
        h = block(h)
        width = block.c_out
    assert width == dense_width(2, k, m) == (k + 1) ** m * 2
    assert h.shape[-1] == width


def test_transition_restores_base_width(rng):
    cfg = ArchitectureConfig(family="dense")
    dense = build_dense_block(4, 3, cfg, rng)
    trans = build_transition_block(dense.c_out, 4, cfg, rng)
    assert trans(dense(feats(rng, c=4))).shape[-1] == 4


def test_dense_add_keeps_width(rng):
    cfg = ArchitectureConfig(family="dense", connectivity="add")
    block = DenseBlock(8, 3, cfg, rng)
    assert block.c_out == 8
    assert block(feats(rng)).shape == (2, 12, 8)


def test_residual_block(rng):
    cfg = ArchitectureConfig(family="residual")
    block = ResidualBlock(8, cfg, rng)
    x = feats(rng)
    y = block(x)
    np.testing.assert_allclose(y.data, (T.add(x, block.plain(x))).data)
    with pytest.raises(ConfigError):
        ResidualBlock(8, cfg, rng, c_out=4)


@pytest.mark.parametrize("family,n,layers", [
    ("residual", 4, 31), ("residual", 8, 59), ("residual", 12, 87),
    ("dense", 1, 31), ("dense", 2, 66), ("dense", 3, 101),
])
def test_layer_count_law(family, n, layers):
    _, plan = build_network(ArchitectureConfig(family=family, n_blocks=n, growth_rate=4))
    assert plan.n_layers == layers


def test_dualnet_adds_one_attention_layer():
    _, dense = build_network(ArchitectureConfig(family="dense", n_blocks=3, growth_rate=4))
    _, dual = build_network(ArchitectureConfig(family="dualnet", n_blocks=3, growth_rate=4))
    assert dual.n_layers == dense.n_layers + 1 == 102
    assert dual.n_param_layers == dense.n_param_layers + 1


@pytest.mark.parametrize("family,n,param_layers", [
    ("residual", 4, 17), ("residual", 8, 33), ("dense", 1, 17), ("dense", 3, 57), ("plainstack", 10, 41),
])
def test_parameter_layer_count(family, n, param_layers):
    # four parameterized layers per plain block (DSC, GRU, BN, bridge) plus the head
    _, plan = build_network(ArchitectureConfig(family=family, n_blocks=n, growth_rate=4))
    assert plan.n_param_layers == param_layers


def test_attention_parameter_difference_is_3cd():
    base = ArchitectureConfig(family="dense", n_blocks=1, growth_rate=2, stem_width=8)
    no_att, _ = build_network(base)
    att, _ = build_network(base.replace(family="dualnet"))
    c = 3 * 8
    assert count_params(att) - count_params(no_att) == 3 * c * c


CONFIGS = st.builds(
    ArchitectureConfig,
    family=st.sampled_from(["plainstack", "residual", "dense", "dualnet"]),
    n_blocks=st.integers(1, 3),
    growth_rate=st.integers(1, 3),
    stem_width=st.integers(1, 6),
    kernel_size=st.sampled_from([1, 3, 5]),
    attention_width=st.one_of(st.none(), st.integers(1, 6)),
    n_classes=st.integers(2, 4),
)


@settings(max_examples=40, deadline=None)
@given(CONFIGS)
def test_expected_params_matches_built_network(cfg):
    if cfg.family == "plainstack":
        cfg = cfg.replace(connectivity="concat")
    net, plan = build_network(cfg)
    assert plan.n_params == count_params(net) == expected_params(cfg)


@settings(max_examples=20, deadline=None)
@given(CONFIGS, st.integers(1, 9))
def test_forward_shapes(cfg, L):
    net, _ = build_network(cfg)
    x = np.random.default_rng(0).random((3, L))
    probs, w = net(x, return_attention=True)
    assert probs.shape == (3, cfg.n_classes)
    np.testing.assert_allclose(probs.data.sum(axis=1), 1.0)
    assert (w is None) == (cfg.family != "dualnet")
    if w is not None:
        assert w.shape == (3, L, L)


def test_network_parameter_names_are_hierarchical():
    net, _ = build_network(ArchitectureConfig.tiny())
    names = [n for n, _ in net.named_parameters()]
    assert names[0] == "stem.weight"
    assert "b0.0.dsc.depthwise" in names
    assert "b0.1.gru.u" in names
    assert names[-1] == "head.bias"
    assert len(names) == len(set(names))


def test_same_seed_same_network():
    a, _ = build_network(ArchitectureConfig.tiny(seed=3))
    b, _ = build_network(ArchitectureConfig.tiny(seed=3))
    c, _ = build_network(ArchitectureConfig.tiny(seed=4))
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))
    assert not all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), c.parameters()))


def test_input_width_checked():
    net, _ = build_network(ArchitectureConfig.tiny(n_features=12))
    with pytest.raises(ShapeError, match="12"):
        net(np.zeros((2, 11)))
    with pytest.raises(ShapeError):
        net(np.zeros(12))


def test_strided_pool_shortens_sequence():
    net, _ = build_network(ArchitectureConfig(family="plainstack", n_blocks=1, stem_width=2,
                                              pool_stride=2, attention=True))
    _, w = net(np.zeros((2, 12)), return_attention=True)
    assert w.shape == (2, 6, 6)
    with pytest.raises(ConfigError, match="length-preserving"):
        ArchitectureConfig(family="dense", pool_stride=2)


@pytest.mark.parametrize("bad", [
    dict(family="mlp"), dict(n_blocks=0), dict(kernel_size=2), dict(dropout_rate=1.0),
    dict(connectivity="mul"), dict(family="plainstack", connectivity="add"), dict(n_classes=1),
    dict(attention_width=0), dict(bn_momentum=1.0), dict(pool_stride=2),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ArchitectureConfig(**bad)


def test_family_normalization():
    assert ArchitectureConfig(family="dualnet", attention=False).attention is True
    assert ArchitectureConfig(family="residual").connectivity == "add"


def test_config_json_round_trip(tmp_path):
    cfg = ArchitectureConfig.tiny(n_features=12, seed=7)
    path = tmp_path / "arch.json"
    cfg.save(path)
    assert ArchitectureConfig.load(path) == cfg
    assert ArchitectureConfig.load(path).fingerprint() == cfg.fingerprint()
    d = json.loads(path.read_text())
    d["unknown"] = 1
    with pytest.raises(ConfigError):
        ArchitectureConfig.from_dict(d)
    d.pop("unknown")
    d["version"] = 99
    with pytest.raises(ConfigError):
        ArchitectureConfig.from_dict(d)


def test_train_config_round_trip_and_validation(tmp_path):
    tc = TrainConfig(epochs=3, batch_size=16, seed=5, precision="single")
    tc.save(tmp_path / "t.json")
    assert TrainConfig.load(tmp_path / "t.json") == tc
    for bad in (dict(batch_size=1), dict(learning_rate=0), dict(precision="half"), dict(task="ranking")):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_plan_summary_lists_blocks():
    _, plan = build_network(ArchitectureConfig(family="dense", n_blocks=2, growth_rate=2))
    text = plan.summary()
    assert "transition" in text and "dense" in text
    assert [b.kind for b in plan.blocks] == ["dense", "transition", "dense"]


def test_plain_block_count_formula():
    cfg = ArchitectureConfig(family="plainstack")
    assert PlainBlock(5, 3, cfg, np.random.default_rng(0)).num_params() == PlainBlock.count(5, 3, 3)
