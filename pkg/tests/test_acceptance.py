"""Acceptance criteria, one marker per criterion; the summary prints a pass/fail line for each."""
import csv
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from dualnet import tensor as T
from dualnet.checkpoint import load_checkpoint, save_checkpoint
from dualnet.cli import main
from dualnet.config import ArchitectureConfig, TrainConfig
from dualnet.data import Preprocessor, Schema, builtin_schema, load_csv, stratified_kfold
from dualnet.exceptions import DataError
from dualnet.explain import attention_importance, attention_weights, importance_from_weights
from dualnet.gradcheck import gradient_check
from dualnet.layers import GRU, BatchNorm, ClassifierHead, DepthwiseSeparableConv1d, Linear, SelfAttention
from dualnet.metrics import ConfusionCounts, metrics
from dualnet.network import DenseBlock, build_dense_block, build_network, build_transition_block, dense_width
from dualnet.synthetic import make_blobs, make_planted
from dualnet.tensor import Tensor
from dualnet.training import predict, predict_proba, sparse_ce_loss, train

C1 = "metric oracle reproduces DR/FAR of all 10 comparison rows within 0.01 pp"
C2 = "gradient suite: every parameterized layer and DualNet-tiny end to end, max rel err < 1e-3"
C3 = "dense-block width laws"
C4 = "layer-count law 31/59/87 residual, 31/66/101 dense"
C5 = "attention rows and importance vector sum to 1 within 1e-6"
C6 = "learnability: >= 95% training accuracy within 30 epochs, < 2 min"
C7 = "planted feature ranked in the top 2 across 3 seeds"
C8 = "pipeline properties"
C9 = "determinism and persistence"
C10 = "experiment harness sweeps at desk scale"

# (TP, FN, TN, FP, DR %, FAR %) as printed for UNSW-NB15
ROWS = [
    (10156, 6311, 8716, 584, 61.67, 6.28), (15365, 1102, 7170, 2130, 93.31, 22.90),
    (13463, 3004, 8639, 661, 81.76, 7.11), (15318, 1149, 8629, 671, 93.02, 7.22),
    (15080, 1387, 8773, 527, 91.58, 5.67), (15250, 1217, 8691, 609, 92.61, 6.55),
    (15462, 1005, 8517, 783, 93.90, 8.42), (15332, 1135, 8639, 661, 93.11, 7.11),
    (15306, 1161, 8774, 526, 92.95, 5.66), (15555, 912, 8816, 484, 94.46, 5.20),
]


@pytest.fixture(scope="module")
def blobs1000():
    raw = make_blobs(1000, seed=0)
    return Preprocessor().fit(raw).encode(raw)


# 1

@pytest.mark.criterion(1, C1)
def test_c1_metric_oracle():
    start = time.perf_counter()
    for tp, fn, tn, fp, dr, far in ROWS:
        _, got_dr, got_far = metrics(ConfusionCounts(tp, fn, tn, fp))
        assert abs(100 * got_dr - dr) <= 0.01
        assert abs(100 * got_far - far) <= 0.01
    assert time.perf_counter() - start < 1.0


# 2

def proj_loss(y, seed=5):
    c = np.random.default_rng(seed).standard_normal(y.shape)
    return T.sum_all(T.mul(y, T.constant(c)))


LAYERS = {
    "dsc": lambda: DepthwiseSeparableConv1d(4, 3, 3, np.random.default_rng(0)),
    "gru": lambda: GRU(4, 3, np.random.default_rng(1)),
    "batchnorm": lambda: BatchNorm(4),
    "linear": lambda: Linear(4, 3, np.random.default_rng(2)),
    "attention": lambda: SelfAttention(4, 3, rng=np.random.default_rng(3)),
}


@pytest.mark.criterion(2, C2)
@pytest.mark.parametrize("name", list(LAYERS))
def test_c2_layer_gradients(name):
    layer = LAYERS[name]()
    x = Tensor(np.random.default_rng(9).standard_normal((3, 6, 4)), requires_grad=True)
    pick = (lambda y: y[0]) if name == "attention" else (lambda y: y)
    for training in (True, False):
        rep = gradient_check(lambda: proj_loss(pick(layer(x, training=training))),
                             {"x": x, **dict(layer.named_parameters())}, relative_step=True, step=1e-5)
        assert rep.max_rel_err < 1e-3, str(rep)


@pytest.mark.criterion(2, C2)
def test_c2_head_gradients():
    head = ClassifierHead(4, 3, np.random.default_rng(4))
    x = Tensor(np.random.default_rng(9).standard_normal((5, 4)), requires_grad=True)
    rep = gradient_check(lambda: proj_loss(head(x)), {"x": x, **dict(head.named_parameters())})
    assert rep.max_rel_err < 1e-3, str(rep)


@pytest.mark.criterion(2, C2)
def test_c2_dualnet_tiny_end_to_end():
    cfg = ArchitectureConfig(family="dualnet", n_blocks=1, growth_rate=2, stem_width=8, attention_width=8,
                             n_classes=2, n_features=12, seed=0)
    net, _ = build_network(cfg)
    rng = np.random.default_rng(1)
    X, y = rng.random((4, 12)), np.array([0, 1, 1, 0])

    def loss():
        # same dropout mask on every evaluation
        return sparse_ce_loss(net(X, training=True, rng=np.random.default_rng(7)), y)

    rep = gradient_check(loss, dict(net.named_parameters()), relative_step=True, step=1e-4)
    assert rep.max_rel_err < 1e-3, str(rep)


# 3

@pytest.mark.criterion(3, C3)
@pytest.mark.parametrize("k", range(1, 7))
def test_c3_dense_width(k):
    rng = np.random.default_rng(0)
    cfg = ArchitectureConfig(family="dense")
    block = build_dense_block(4, k, cfg, rng)
    assert block(Tensor(rng.standard_normal((2, 5, 4)))).shape[-1] == (k + 1) * 4
    trans = build_transition_block(block.c_out, 4, cfg, rng)
    assert trans(block(Tensor(rng.standard_normal((2, 5, 4))))).shape[-1] == 4


@pytest.mark.criterion(3, C3)
@pytest.mark.parametrize("k,m", [(k, m) for k in (1, 2, 3) for m in (1, 2, 3)])
def test_c3_stacked_width(k, m):
    rng = np.random.default_rng(0)
    cfg = ArchitectureConfig(family="dense")
    h, width = Tensor(rng.standard_normal((2, 5, 2))), 2
    for _ in range(m):
        block = DenseBlock(width, k, cfg, rng)
        h, width = block(h), block.c_out
    assert h.shape[-1] == width == dense_width(2, k, m) == (k + 1) ** m * 2


# 4

@pytest.mark.criterion(4, C4)
@pytest.mark.parametrize("family,n,layers", [
    ("residual", 4, 31), ("residual", 8, 59), ("residual", 12, 87),
    ("dense", 1, 31), ("dense", 2, 66), ("dense", 3, 101),
])
def test_c4_layer_counts(family, n, layers):
    _, plan = build_network(ArchitectureConfig(family=family, n_blocks=n, growth_rate=4))
    assert plan.n_layers == layers


# 5

@pytest.mark.criterion(5, C5)
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 16), st.sampled_from(["mean", "max"]))
def test_c5_attention_normalization(seed, n_features, reduce):
    rng = np.random.default_rng(seed)
    net, _ = build_network(ArchitectureConfig.tiny(n_features=n_features, seed=seed))
    X = rng.random((5, n_features))
    w = attention_weights(net, X)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)
    assert abs(importance_from_weights(w, reduce).sum() - 1.0) < 1e-6


# 6

@pytest.mark.criterion(6, C6)
def test_c6_learnability(blobs1000):
    start = time.perf_counter()
    net, _ = build_network(ArchitectureConfig.tiny(n_features=blobs1000.n_features, seed=0))
    hist = train(net, blobs1000.X, blobs1000.y, TrainConfig(epochs=30, batch_size=32, seed=0))
    preds, _ = predict(net, blobs1000.X)
    assert (preds == blobs1000.y).mean() >= 0.95
    assert max(hist.accuracy) >= 0.95
    assert time.perf_counter() - start < 120


# 7

@pytest.mark.criterion(7, C7)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_c7_planted_feature(seed):
    raw = make_planted(1000, seed=seed)
    ds = Preprocessor().fit(raw).encode(raw)
    net, _ = build_network(ArchitectureConfig.tiny(n_features=ds.n_features, seed=seed))
    train(net, ds.X, ds.y, TrainConfig(epochs=60, batch_size=32, seed=seed))
    rep = attention_importance(net, ds.X, ds.feature_names, ds.groups)
    assert rep.rank_of("f3") <= 2, rep.top(4)


# 8

@pytest.mark.criterion(8, C8)
def test_c8_encoding_ranges(blobs1000):
    assert blobs1000.X.min() >= 0.0 and blobs1000.X.max() <= 1.0
    for name, (lo, hi) in blobs1000.groups.items():
        if hi - lo > 1:
            assert set(np.unique(blobs1000.X[:, lo:hi].sum(axis=1))) <= {0.0, 1.0}


@pytest.mark.criterion(8, C8)
@pytest.mark.parametrize("counts", [(90, 10), (86, 10), (500, 500), (97, 13, 11)])
def test_c8_stratified_folds(counts):
    labels = np.concatenate([np.full(n, c) for c, n in enumerate(counts)])
    folds = stratified_kfold(labels, k=10, seed=0)
    assert sorted(np.concatenate([te for _, te in folds])) == list(range(len(labels)))
    for c, n in enumerate(counts):
        for _, te in folds:
            assert abs((labels[te] == c).sum() - n / 10) <= 1


@pytest.mark.criterion(8, C8)
def test_c8_small_class_rejected():
    with pytest.raises(DataError, match="attack"):
        stratified_kfold(np.array([0] * 86 + [1] * 9), k=10, seed=0, class_names=["normal", "attack"])


@pytest.mark.criterion(8, C8)
def test_c8_width_formula_on_fixture():
    raw = load_csv(FIXTURES / "width7.csv", Schema.load(FIXTURES / "width7_schema.json"))
    ds = Preprocessor().fit(raw).encode(raw)
    assert ds.n_features == 2 + 3 + 2 == 7


@pytest.mark.criterion(8, C8)
@pytest.mark.parametrize("env,schema,width", [("DUALNET_NSL_KDD", "nsl-kdd", 122),
                                              ("DUALNET_UNSW_NB15", "unsw-nb15", 196)])
def test_c8_full_dataset_widths(env, schema, width):
    paths = [p for p in os.environ.get(env, "").split(os.pathsep) if p]
    if not paths:
        pytest.skip(f"set {env} to the dataset CSV path(s)")
    sch = builtin_schema(schema)
    raws = [load_csv(p, sch) for p in paths]
    prep = Preprocessor().fit(raws[0])
    assert prep.encode(raws[0]).n_features == width


# 9

@pytest.mark.criterion(9, C9)
def test_c9_determinism_and_persistence(blobs1000, tmp_path):
    X, y = blobs1000.X[:300], blobs1000.y[:300]
    cfg, tc = ArchitectureConfig.tiny(n_features=12, seed=4), TrainConfig(epochs=3, batch_size=32, seed=4)
    a, _ = build_network(cfg)
    b, _ = build_network(cfg)
    assert train(a, X, y, tc).to_dict() == train(b, X, y, tc).to_dict()
    save_checkpoint(tmp_path / "m.ckpt", a)
    loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
    assert np.array_equal(predict_proba(a, X), predict_proba(loaded, X))
    full = predict_proba(a, X, batch_size=len(X))
    for bs in (1, 13, 64):
        np.testing.assert_allclose(predict_proba(a, X, batch_size=bs), full, rtol=0, atol=1e-12)


# 10

def check_sweep(out, kind, n_rows):
    with (out / f"sweep_{kind}.csv").open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == n_rows
    assert list(rows[0]) == ["config_id", "x", "seed", "acc", "dr", "far", "params", "wall_time"]
    for r in rows:
        assert 0.0 <= float(r["acc"]) <= 1.0
    for series in ("acc", "params"):
        with (out / f"series_{kind}_{series}.csv").open(newline="") as fh:
            lines = list(csv.reader(fh))
        assert lines[0] == ["x", series] and len(lines) == n_rows + 1
    assert (out / "manifest.json").is_file()
    return [int(r["params"]) for r in rows]


@pytest.mark.criterion(10, C10)
@pytest.mark.slow
def test_c10_growth_sweep(tmp_path):
    assert main(["sweep", "growth", "--out", str(tmp_path)]) == 0
    params = check_sweep(tmp_path, "growth", 6)
    assert all(a < b for a, b in zip(params, params[1:]))


@pytest.mark.criterion(10, C10)
@pytest.mark.slow
def test_c10_plainstack_sweep(tmp_path):
    assert main(["sweep", "plainstack", "--out", str(tmp_path)]) == 0
    params = check_sweep(tmp_path, "plainstack", 10)
    assert all(a < b for a, b in zip(params, params[1:]))


@pytest.mark.criterion(10, C10)
@pytest.mark.slow
def test_c10_connectivity_sweep(tmp_path):
    assert main(["sweep", "connectivity", "--out", str(tmp_path)]) == 0
    concat, add = check_sweep(tmp_path, "connectivity", 2)
    assert concat > add
