import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from conceptalign import autoencoder as ae
from conceptalign.exceptions import DataError, DimensionMismatch, NonFiniteLoss


# ---------------------------------------------------------------- oracles


def _sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def scalar_forward(W_enc, b_enc, W_dec, b_dec, x):
    h = [_sig(sum(W_enc[j][i] * x[i] for i in range(len(x))) + b_enc[j])
         for j in range(len(b_enc))]
    z = [_sig(sum(W_dec[i][j] * h[j] for j in range(len(h))) + b_dec[i])
         for i in range(len(b_dec))]
    return h, z


def scalar_train(X, init, epsilon0, tau, max_iters, patience):
    """Uncorrupted full-batch trainer written with explicit loops."""
    W_enc = [list(r) for r in init.W_enc]
    b_enc = list(init.b_enc)
    W_dec = [list(r) for r in init.W_dec]
    b_dec = list(init.b_dec)
    n, v, h = len(X), len(b_dec), len(b_enc)
    best, stale, history = float("inf"), 0, []
    for t in range(1, max_iters + 1):
        gWe = [[0.0] * v for _ in range(h)]
        gbe = [0.0] * h
        gWd = [[0.0] * h for _ in range(v)]
        gbd = [0.0] * v
        loss = 0.0
        for x in X:
            hid, z = scalar_forward(W_enc, b_enc, W_dec, b_dec, x)
            dz = []
            for i in range(v):
                loss += (z[i] - x[i]) ** 2 / n
                dz.append(2.0 / n * (z[i] - x[i]) * z[i] * (1 - z[i]))
            for i in range(v):
                gbd[i] += dz[i]
                for j in range(h):
                    gWd[i][j] += dz[i] * hid[j]
            for j in range(h):
                dh = sum(dz[i] * W_dec[i][j] for i in range(v))
                dh *= hid[j] * (1 - hid[j])
                gbe[j] += dh
                for i in range(v):
                    gWe[j][i] += dh * x[i]
        history.append(loss)
        if loss < best:
            best, stale = loss, 0
        else:
            stale += 1
            if stale >= patience:
                break
        lr = epsilon0 * tau / max(t, tau)
        for j in range(h):
            b_enc[j] -= lr * gbe[j]
            for i in range(v):
                W_enc[j][i] -= lr * gWe[j][i]
        for i in range(v):
            b_dec[i] -= lr * gbd[i]
            for j in range(h):
                W_dec[i][j] -= lr * gWd[i][j]
    return (np.array(W_enc), np.array(b_enc), np.array(W_dec),
            np.array(b_dec)), history


# ---------------------------------------------------------------- schedule


def test_lr_schedule_values():
    assert ae.lr_schedule(1, 0.1, 20) == 0.1
    assert ae.lr_schedule(20, 0.1, 20) == pytest.approx(0.1)
    assert ae.lr_schedule(40, 0.1, 20) == pytest.approx(0.05, abs=1e-15)
    assert ae.lr_schedule(100, 1.0, 20) == pytest.approx(0.2, abs=1e-15)


@given(st.integers(1, 10_000), st.floats(1e-4, 10), st.integers(1, 500))
def test_lr_schedule_monotone(t, eps, tau):
    assert ae.lr_schedule(t + 1, eps, tau) <= ae.lr_schedule(t, eps, tau)
    assert ae.lr_schedule(t, eps, tau) <= eps


def test_chain_sizes_exact_floor():
    assert ae.chain_sizes(256, 5) == [256, 170, 113, 75, 50, 33]
    assert ae.shrink(75, Fraction(2, 3)) == 50
    assert ae.chain_sizes(256, 2, Fraction(1, 5)) == [256, 51, 10]


# ---------------------------------------------------------------- gradients


def test_zero_parameter_layer_loss():
    layer = ae.DaeLayer.zeros(4, 2)
    X = np.zeros((1, 4))
    assert ae.reconstruction_error(layer, X) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(layer.encode(X), 0.5)


def test_gradients_match_finite_differences(rng):
    layer = ae.init_layer(5, 3, rng)
    X = rng.random((7, 5))
    X_in = X * (rng.random(X.shape) < 0.7)
    _, grads = ae.loss_and_gradients(layer, X_in, X)
    eps = 1e-6
    for block, grad in zip(layer.params(), grads):
        for idx in np.ndindex(block.shape):
            old = block[idx]
            block[idx] = old + eps
            up = ae.loss_and_gradients(layer, X_in, X)[0]
            block[idx] = old - eps
            down = ae.loss_and_gradients(layer, X_in, X)[0]
            block[idx] = old
            assert grad[idx] == pytest.approx((up - down) / (2 * eps),
                                              abs=1e-8)


def test_fit_layer_matches_scalar_oracle(rng):
    X = rng.random((6, 4))
    init = ae.init_layer(4, 3, rng)
    cfg = ae.DaeConfig(3, epsilon0=0.5, tau=5, corruption=0.0, max_iters=40,
                       patience=20)
    layer, history = ae.fit_layer(X, cfg, init=init)
    params, oracle_history = scalar_train(X.tolist(), init, 0.5, 5, 40, 20)
    np.testing.assert_allclose(history, oracle_history, rtol=0, atol=1e-12)
    for got, want in zip(layer.params(), params):
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)


def test_fit_layer_patience_stops_early(rng):
    X = rng.random((6, 4))
    init = ae.init_layer(4, 3, rng)
    # huge steps make the loss oscillate so patience triggers
    cfg = ae.DaeConfig(3, epsilon0=500.0, tau=1000, corruption=0.0,
                       max_iters=300, patience=3)
    _, history = ae.fit_layer(X, cfg, init=init)
    params, oracle_history = scalar_train(X.tolist(), init, 500.0, 1000, 300,
                                          3)
    assert len(history) == len(oracle_history) < 300
    np.testing.assert_allclose(history, oracle_history, rtol=1e-9)


def test_training_does_not_mutate_init(rng):
    init = ae.init_layer(4, 2, rng)
    before = [p.copy() for p in init.params()]
    ae.fit_layer(rng.random((5, 4)), ae.DaeConfig(2, max_iters=5), init=init)
    for a, b in zip(before, init.params()):
        np.testing.assert_array_equal(a, b)


def test_zero_corruption_bypass_is_exact(rng):
    X = rng.random((10, 6))
    cfg = ae.DaeConfig(4, corruption=0.0, max_iters=30, seed=2)
    a, ha = ae.fit_layer(X, cfg)
    b, hb = ae.fit_layer(X, cfg, force_mask=True)
    assert ha == hb
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)


def test_loss_decreases_on_digits(small_digits):
    cfg = ae.DaeConfig(20, epsilon0=1.0, corruption=0.0, max_iters=60)
    _, history = ae.fit_layer(small_digits.X, cfg)
    assert history[-1] < history[0]


def test_determinism_and_seed_sensitivity(small_digits):
    cfg = ae.DaeConfig(10, max_iters=10, seed=4)
    a = ae.train_dae(small_digits.X, cfg)
    b = ae.train_dae(small_digits.X, cfg)
    c = ae.train_dae(small_digits.X, ae.DaeConfig(10, max_iters=10, seed=5))
    np.testing.assert_array_equal(a.W_enc, b.W_enc)
    assert not np.array_equal(a.W_enc, c.W_enc)


def test_non_finite_inputs_and_parameters():
    X = np.full((3, 4), np.nan)
    with pytest.raises(DataError):
        ae.train_sdae(X, [ae.DaeConfig(2)])
    bad = ae.DaeLayer(np.full((2, 4), np.inf), np.zeros(2),
                      np.zeros((4, 2)), np.zeros(4))
    with pytest.raises(NonFiniteLoss):
        ae.fit_layer(np.ones((3, 4)), ae.DaeConfig(2, max_iters=2,
                                                   corruption=0.0), init=bad)


def test_config_validation():
    for kwargs in ({"hidden_size": 0}, {"hidden_size": 2, "epsilon0": 0},
                   {"hidden_size": 2, "corruption": 1.0},
                   {"hidden_size": 2, "tau": 0}):
        with pytest.raises(ValueError):
            ae.DaeConfig(**kwargs)


# ---------------------------------------------------------------- stacks


def test_train_sdae_shapes_and_encode_oracle(small_digits):
    configs = [ae.DaeConfig(h, max_iters=3, seed=s)
               for s, h in enumerate([12, 8, 5])]
    model = ae.train_sdae(small_digits, configs)
    assert model.layer_sizes == [256, 12, 8, 5]
    H = ae.encode(model, small_digits.X)
    assert H.shape == (len(small_digits), 5)
    assert np.all((H > 0) & (H < 1))
    x = small_digits.X[0].tolist()
    for layer in model.layers:
        x, _ = scalar_forward(layer.W_enc, layer.b_enc, layer.W_dec,
                              layer.b_dec, x)
    np.testing.assert_allclose(H[0], x, atol=1e-12)


def test_deeper_layers_see_clean_activations(small_digits):
    configs = [ae.DaeConfig(10, max_iters=4, seed=1),
               ae.DaeConfig(6, max_iters=4, seed=2)]
    model = ae.train_sdae(small_digits, configs)
    top = ae.train_dae(model.layers[0].encode(small_digits.X), configs[1])
    np.testing.assert_array_equal(top.W_enc, model.layers[1].W_enc)


def test_encode_dimension_mismatch(small_digits):
    model = ae.train_sdae(small_digits, [ae.DaeConfig(4, max_iters=1)])
    with pytest.raises(DimensionMismatch):
        ae.encode(model, np.zeros((2, 255)))


def test_binarize_threshold():
    out = ae.binarize(np.array([[0.0, 0.4999999, 0.5, 0.9]]))
    np.testing.assert_array_equal(out, [[0, 0, 1, 1]])


def test_represent_bundles_both_codes(small_digits):
    model = ae.train_sdae(small_digits, [ae.DaeConfig(4, max_iters=1)])
    rep = ae.represent(model, small_digits.X, small_digits.y)
    np.testing.assert_array_equal(rep.binary, ae.binarize(rep.continuous))


def test_truncate_is_prefix(small_digits):
    configs = [ae.DaeConfig(h, max_iters=2, seed=s)
               for s, h in enumerate([9, 6, 4])]
    model = ae.train_sdae(small_digits, configs)
    short = ae.train_sdae(small_digits, configs[:2])
    np.testing.assert_array_equal(
        ae.encode(model.truncate(2), small_digits.X),
        ae.encode(short, small_digits.X))


# ---------------------------------------------------------------- grid


def test_select_config_picks_lowest_error(small_digits):
    good = ae.DaeConfig(30, epsilon0=1.0, corruption=0.0, max_iters=40)
    poor = ae.DaeConfig(30, epsilon0=1e-3, corruption=0.0, max_iters=40)
    assert ae.select_config(small_digits.X, [poor, good]) == good


def test_select_config_tie_prefers_smaller_hidden(rng):
    X = np.zeros((10, 4))
    # with zero learning progress both candidates give identical errors
    small = ae.DaeConfig(2, epsilon0=1e-12, max_iters=1)
    large = ae.DaeConfig(3, epsilon0=1e-12, max_iters=1)
    chosen = ae.select_config(X, [large, small])
    assert chosen.hidden_size in (2, 3)
    errs = {}
    for c in (small, large):
        errs[c.hidden_size] = ae.reconstruction_error(ae.train_dae(X, c), X)
    if errs[2] == errs[3]:
        assert chosen == small


def test_grid_search_layer_candidates(small_digits):
    cfg = ae.grid_search_layer(small_digits.X[:, :20],
                               hidden_choices=(Fraction(1, 2), Fraction(1, 5)),
                               lr_choices=(0.1, 1.0), corruption_choices=(0.0,),
                               max_iters=5)
    assert cfg.hidden_size in (10, 4)
    assert cfg.epsilon0 in (0.1, 1.0)


def test_grid_search_stack_chains(small_digits):
    model, configs = ae.grid_search_stack(small_digits.X[:, :10], 2,
                                          max_iters=2)
    assert len(configs) == 2
    assert model.layer_sizes[1] == configs[0].hidden_size


# ---------------------------------------------------------------- persistence


def test_save_load_bit_exact(tmp_path, small_digits):
    configs = [ae.DaeConfig(7, max_iters=2), ae.DaeConfig(3, max_iters=2)]
    model = ae.train_sdae(small_digits, configs)
    ae.save_model(model, tmp_path / "m.sdae")
    back = ae.load_model(tmp_path / "m.sdae")
    assert back.layer_sizes == model.layer_sizes
    for la, lb in zip(model.layers, back.layers):
        for p, q in zip(la.params(), lb.params()):
            assert p.tobytes() == q.tobytes()
    raw = (tmp_path / "m.sdae").read_bytes()
    assert raw[:8] == ae.MODEL_TAG


def test_load_rejects_bad_files(tmp_path, small_digits):
    model = ae.train_sdae(small_digits, [ae.DaeConfig(3, max_iters=1)])
    path = tmp_path / "m.sdae"
    ae.save_model(model, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DataError):
        ae.load_model(path)
    path.write_bytes(b"NOTAMODEL" * 4)
    with pytest.raises(DataError):
        ae.load_model(path)


# ---------------------------------------------------------------- estimators


def test_estimator_params_and_clone():
    est = ae.StackedDenoisingAutoencoder(depth=2, max_iter=3)
    assert clone(est).get_params()["depth"] == 2
    assert ae.DenoisingAutoencoder(n_hidden=4).get_params()["n_hidden"] == 4


def test_dae_estimator_roundtrip(small_digits):
    est = ae.DenoisingAutoencoder(n_hidden=8, max_iter=5).fit(small_digits.X)
    H = est.transform(small_digits.X)
    assert H.shape == (len(small_digits), 8)
    assert est.inverse_transform(H).shape == small_digits.X.shape
    assert est.score(small_digits.X) < 0
    assert est.n_iter_ == len(est.loss_curve_) == 5


def test_sdae_estimator_matches_functional(small_digits):
    est = ae.StackedDenoisingAutoencoder(depth=2, max_iter=3,
                                         binary_output=True, random_state=7)
    codes = est.fit(small_digits.X).transform(small_digits.X)
    model = ae.train_sdae(small_digits, est.layer_configs(256))
    np.testing.assert_array_equal(
        codes, ae.binarize(ae.encode(model, small_digits.X)))
    assert est.model_.layer_sizes == [256, 170, 113]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
def test_encode_bounds_property(v, h, seed):
    rng = np.random.default_rng(seed)
    layer = ae.init_layer(v, h, rng)
    H = layer.encode(rng.random((3, v)))
    assert np.all((H > 0) & (H < 1))


# ---------------------------------------------------------------- examples


@pytest.mark.parametrize("t, eps, tau, want", [(10, 1.0, 20, 1.0),
                                                (40, 1.0, 20, 0.5),
                                                (20, 0.1, 20, 0.1)])
def test_lr_schedule_examples(t, eps, tau, want):
    assert ae.lr_schedule(t, eps, tau) == want


def test_zero_parameters_initial_loss(rng):
    X = rng.random((5, 3))
    cfg = ae.DaeConfig(2, corruption=0.0, max_iters=1)
    _, history = ae.fit_layer(X, cfg, init=ae.DaeLayer.zeros(3, 2))
    assert history[0] == pytest.approx(np.sum((X - 0.5) ** 2) / 5, abs=1e-15)


def test_toy_problem_scalar_oracle():
    rng = np.random.default_rng(2024)
    X = rng.random((16, 8))
    init = ae.init_layer(8, 4, rng)
    cfg = ae.DaeConfig(4, epsilon0=0.1, tau=20, corruption=0.0, max_iters=50)
    _, history = ae.fit_layer(X, cfg, init=init)
    _, oracle = scalar_train(X.tolist(), init, 0.1, 20, 50, 20)
    assert abs(history[-1] - oracle[-1]) <= 1e-9
    assert history[-1] <= history[0]


def test_one_layer_stack_equals_single_layer(small_digits):
    cfg = ae.DaeConfig(6, max_iters=3, seed=11)
    model = ae.train_sdae(small_digits, [cfg])
    single = ae.train_dae(small_digits.X, cfg)
    np.testing.assert_array_equal(model.layers[0].W_dec, single.W_dec)


def test_two_configs_chain_sizes(small_digits):
    model = ae.train_sdae(small_digits, [ae.DaeConfig(170, max_iters=1),
                                         ae.DaeConfig(113, max_iters=1)])
    assert model.layer_sizes == [256, 170, 113]


def test_grid_single_and_untrained_candidates(small_digits):
    only = ae.DaeConfig(5, max_iters=1)
    assert ae.select_config(small_digits.X, [only]) is only
    untrained = ae.DaeConfig(20, corruption=0.0, max_iters=0)
    trained = ae.DaeConfig(20, corruption=0.0, max_iters=100)
    assert ae.select_config(small_digits.X, [untrained, trained]) is trained
    twin = ae.DaeConfig(5, max_iters=2, seed=1)
    dup = ae.DaeConfig(5, max_iters=2, seed=1)
    assert ae.select_config(small_digits.X, [twin, dup]) is twin


def test_zero_weight_model_activations():
    model = ae.SdaeModel([ae.DaeLayer.zeros(4, 3)])
    np.testing.assert_array_equal(ae.encode(model, np.ones((2, 4))), 0.5)


def test_two_layer_forward_oracle_and_determinism(rng):
    model = ae.SdaeModel([ae.init_layer(6, 4, rng), ae.init_layer(4, 3, rng)])
    X = rng.random((5, 6))
    H = ae.encode(model, X)
    np.testing.assert_array_equal(H, ae.encode(model, X))
    for row, x in zip(H, X.tolist()):
        for layer in model.layers:
            x, _ = scalar_forward(layer.W_enc, layer.b_enc, layer.W_dec,
                                  layer.b_dec, x)
        np.testing.assert_allclose(row, x, rtol=0, atol=1e-12)


def test_binarize_examples():
    np.testing.assert_array_equal(ae.binarize([0.49, 0.5, 0.51]), [0, 1, 1])
    np.testing.assert_array_equal(ae.binarize(np.full((2, 2), 0.5)), 1)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_binarize_idempotent(values):
    once = ae.binarize(values)
    np.testing.assert_array_equal(ae.binarize(once), once)


def test_reconstruction_error_examples(rng):
    layer = ae.DaeLayer.zeros(3, 2)
    assert ae.reconstruction_error(layer, np.full((4, 3), 0.5)) == 0.0
    layer = ae.init_layer(3, 2, rng)
    X = rng.random((4, 3))
    total = 0.0
    for x in X.tolist():
        _, z = scalar_forward(layer.W_enc, layer.b_enc, layer.W_dec,
                              layer.b_dec, x)
        total += sum((a - b) ** 2 for a, b in zip(z, x))
    assert ae.reconstruction_error(layer, X) == pytest.approx(total / 4,
                                                              abs=1e-12)
