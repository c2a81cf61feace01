from dataclasses import replace

import numpy as np
import pytest

from ngr import net
from ngr.errors import FormatError
from ngr.net import AdamState, NetConfig
from ngr.tensor import make_rng

TINY = NetConfig(blocks=2, width=4, precision="float64", architecture="flat").resolved(2)


def tiny_problem(seed=0, cfg=TINY, shape=(6, 6)):
    rng = make_rng(seed)
    x = net.init_input(rng, (*shape, cfg.input_channels), amplitude=1.0)
    params = net.init_params(rng, cfg)
    # nonzero biases so every parameter has a generic gradient
    params = {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in params.items()}
    target = tuple(rng.standard_normal((*shape, cfg.output_channels)) for _ in range(3))
    return params, x, target


def test_param_shapes_order_and_sizes():
    shapes = net.param_shapes(TINY)
    assert list(shapes) == [
        "trunk0.weight", "trunk0.bias", "trunk1.weight", "trunk1.bias",
        "head_h.weight", "head_h.bias", "head_v.weight", "head_v.bias",
        "head_t.weight", "head_t.bias",
    ]
    assert shapes["trunk0.weight"] == (3, 3, 2, 4)
    assert shapes["head_t.weight"] == (3, 3, 4, 2)


def test_unresolved_config_rejected():
    with pytest.raises(ValueError):
        net.param_shapes(NetConfig())


@pytest.mark.parametrize(
    "kwargs",
    [dict(kernel=4), dict(blocks=0), dict(width=0), dict(leaky_slope=1.0),
     dict(normalization="batch"), dict(precision="float16"), dict(input_channels=0)],
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        NetConfig(**kwargs)


def test_forward_shapes_and_determinism():
    cfg = NetConfig(blocks=3, width=8).resolved(3)
    rng = make_rng(1)
    x = net.init_input(rng, (10, 12, 3))
    params = net.init_params(rng, cfg)
    a = net.forward(params, cfg, x)
    b = net.forward(params, cfg, x)
    assert len(a) == 3
    for ga, gb in zip(a, b):
        assert ga.shape == (10, 12, 3)
        assert ga.dtype == np.float64
        np.testing.assert_array_equal(ga, gb)


def test_input_channel_mismatch():
    params, x, _ = tiny_problem()
    with pytest.raises(ValueError):
        net.forward(params, TINY, x[:, :, :1])


def test_init_statistics():
    cfg = NetConfig(blocks=2, width=64, precision="float64").resolved(16)
    params = net.init_params(make_rng(2), cfg)
    w = params["trunk1.weight"]
    fan_in = 3 * 3 * 64
    # sample variance of 36864 normals: relative std error ~ sqrt(2/n) ~ 0.7%
    assert abs(w.var() * fan_in / 2.0 - 1.0) < 0.05
    assert not params["trunk0.bias"].any()
    x = net.init_input(make_rng(3), (50, 50, 4), amplitude=0.1)
    assert x.min() >= 0 and x.max() < 0.1


def test_loss_zero_iff_target_matches():
    params, x, _ = tiny_problem()
    pred = net.forward(params, TINY, x)
    loss, grads = net.loss_and_grad(params, TINY, x, pred, (1, 1, 1))
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())
    shifted = (pred[0] + 1e-3, pred[1], pred[2])
    loss, _ = net.loss_and_grad(params, TINY, x, shifted, (1, 1, 1))
    assert loss > 0


def test_negative_weight_rejected():
    params, x, target = tiny_problem()
    with pytest.raises(ValueError):
        net.loss_and_grad(params, TINY, x, target, (1, -1, 1))


def fd_max_relative_error(params, cfg, x, target, weights, h=1e-5):
    _, grads = net.loss_and_grad(params, cfg, x, target, weights)
    worst = 0.0
    for name, p in params.items():
        for idx in np.ndindex(p.shape):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            lp = net.loss_from_prediction(net.forward(plus, cfg, x), target, weights)
            lm = net.loss_from_prediction(net.forward(minus, cfg, x), target, weights)
            fd = (lp - lm) / (2 * h)
            a = grads[name][idx]
            # the floor keeps exactly-zero gradients (pre-normalization biases) from
            # turning roundoff in the difference quotient into a huge relative error
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-3))
    return worst


@pytest.mark.parametrize(
    "cfg",
    [
        TINY,
        NetConfig(blocks=2, width=4, normalization="none", precision="float64").resolved(2),
        NetConfig(blocks=3, width=3, skip=False, precision="float64").resolved(2),
        NetConfig(blocks=1, width=3, kernel=1, precision="float64").resolved(2),
    ],
)
def test_backprop_matches_finite_differences(cfg):
    params, x, target = tiny_problem(4, cfg)
    assert fd_max_relative_error(params, cfg, x, target, (1.0, 0.5, 2.0)) <= 1e-4


def test_pre_norm_bias_gradient_is_exactly_zero():
    params, x, target = tiny_problem(5)
    _, grads = net.loss_and_grad(params, TINY, x, target, (1, 1, 1))
    assert not grads["trunk0.bias"].any() and not grads["trunk1.bias"].any()
    # shifting the bias really does not move the loss
    shifted = dict(params, **{"trunk0.bias": params["trunk0.bias"] + 0.3})
    before = net.loss_from_prediction(net.forward(params, TINY, x), target, (1, 1, 1))
    after = net.loss_from_prediction(net.forward(shifted, TINY, x), target, (1, 1, 1))
    assert after == pytest.approx(before, rel=1e-9)


def test_bias_gradient_without_normalization():
    cfg = NetConfig(blocks=2, width=4, precision="float64", normalization="none").resolved(2)
    params, x, target = tiny_problem(5, cfg)
    _, grads = net.loss_and_grad(params, cfg, x, target, (1, 1, 1))
    assert np.abs(grads["trunk0.bias"]).max() > 1e-6


def test_float32_gradients_close_to_float64():
    cfg64 = NetConfig(blocks=3, width=8, precision="float64").resolved(3)
    cfg32 = NetConfig(blocks=3, width=8, precision="float32").resolved(3)
    params, x, target = tiny_problem(6, cfg64, shape=(12, 12))
    _, g64 = net.loss_and_grad(params, cfg64, x, target, (1, 1, 1))
    _, g32 = net.loss_and_grad(params, cfg32, x, target, (1, 1, 1))
    # measured against the whole gradient, so tiny components don't dominate
    scale = np.sqrt(sum(np.sum(g**2) for g in g64.values()))
    for name in g64:
        assert g32[name].dtype == np.float64
        assert np.linalg.norm(g32[name] - g64[name]) / scale < 1e-4


# theta <- Adam on f(theta) = (theta - 3)^2 / 2 from theta = 0, lr 0.1, default betas.
# Rows: (theta_t, m_t, v_t), computed with a plain-float loop independent of numpy.
ADAM_TABLE = [
    (0.09999999966666669, -0.29999999999999993, 0.009000000000000008),
    (0.19989729224944813, -0.5600000000333332, 0.01740100000193335),
    (0.2996184760421757, -0.784010270805055, 0.025224174175883397),
    (0.3990864682638486, -0.975647396120332, 0.0324910103766403),
    (0.49822054291736, -1.138174009681914, 0.039223270565831886),
]


def test_adam_scalar_trajectory():
    params = {"theta": np.array(0.0)}
    state = AdamState(lr=0.1)
    for theta, m, v in ADAM_TABLE:
        grads = {"theta": params["theta"] - 3.0}
        params, state = net.adam_step(params, grads, state)
        assert abs(float(params["theta"]) - theta) <= 1e-12
        assert abs(float(state.m["theta"]) - m) <= 1e-12
        assert abs(float(state.v["theta"]) - v) <= 1e-12
    assert state.t == 5


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([2.0, -5.0, 1e-3])}
    new, _ = net.adam_step(params, {"w": np.array([0.3, -7.0, 1.0])}, AdamState(lr=0.01))
    np.testing.assert_allclose(new["w"] - params["w"], [-0.01, 0.01, -0.01], rtol=1e-6)


def test_adam_is_functional():
    params = {"w": np.ones(3)}
    state = AdamState()
    new, new_state = net.adam_step(params, {"w": np.ones(3)}, state)
    assert state.t == 0 and state.m is None
    np.testing.assert_array_equal(params["w"], np.ones(3))
    assert new_state.t == 1


def test_adam_decreases_loss_linear_net():
    # a one-block net without normalization or skip is linear up to the leaky unit
    cfg = NetConfig(blocks=1, width=4, normalization="none", skip=False, precision="float64").resolved(2)
    params, x, target = tiny_problem(7, cfg)
    loss0, grads = net.loss_and_grad(params, cfg, x, target, (1, 1, 1))
    new, _ = net.adam_step(params, grads, AdamState(lr=1e-4))
    loss1, _ = net.loss_and_grad(new, cfg, x, target, (1, 1, 1))
    assert loss1 < loss0


def test_checkpoint_round_trip(tmp_path):
    cfg = NetConfig(blocks=2, width=5).resolved(3)
    params = net.init_params(make_rng(8), cfg)
    path = tmp_path / "w.bin"
    net.save_params(params, cfg, path)
    stored_cfg, loaded = net.read_checkpoint(path)
    assert stored_cfg == cfg
    for name in params:
        assert loaded[name].tobytes() == params[name].tobytes()
    raw = path.read_bytes()
    assert raw[:4] == b"NGRW"
    assert int.from_bytes(raw[4:8], "little") == 1


def test_checkpoint_errors(tmp_path):
    cfg = NetConfig(blocks=2, width=5).resolved(3)
    params = net.init_params(make_rng(9), cfg)
    path = tmp_path / "w.bin"
    net.save_params(params, cfg, path)
    raw = path.read_bytes()

    truncated = tmp_path / "t.bin"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        net.read_checkpoint(truncated)

    bad_magic = tmp_path / "m.bin"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        net.read_checkpoint(bad_magic)

    with pytest.raises(FormatError):
        net.load_params(path, NetConfig(blocks=2, width=6).resolved(3))
    assert net.load_params(path, cfg).keys() == params.keys()


def test_dilated_backprop_matches_finite_differences():
    cfg = NetConfig(blocks=3, width=3, dilation_growth=2, precision="float64").resolved(2)
    params, x, target = tiny_problem(10, cfg, shape=(9, 9))
    assert fd_max_relative_error(params, cfg, x, target, (1.0, 1.0, 1.0)) <= 1e-4


@pytest.mark.parametrize("shape", [(8, 8), (7, 9), (5, 6)])
@pytest.mark.parametrize("skip", [True, False])
@pytest.mark.parametrize("blocks", [5, 6])
def test_hourglass_backprop_matches_finite_differences(shape, skip, blocks):
    cfg = NetConfig(blocks=blocks, width=3, architecture="hourglass", skip=skip,
                    precision="float64").resolved(2)
    params, x, target = tiny_problem(11, cfg, shape=shape)
    triple = net.forward(params, cfg, x)
    assert triple[0].shape == (*shape, 2)
    assert fd_max_relative_error(params, cfg, x, target, (1.0, 0.7, 1.3)) <= 1e-4


def test_pool_and_upsample_adjoints():
    rng = make_rng(12)
    for shape in [(6, 4, 2), (5, 7, 3), (1, 3, 1)]:
        a = rng.standard_normal(shape)
        small = net._pool(a)
        d = rng.standard_normal(small.shape)
        lhs = np.sum(small * d)
        rhs = np.sum(a * net._pool_backward(d, shape))
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
        up = net._upsample(small, shape)
        e = rng.standard_normal(shape)
        assert abs(np.sum(up * e) - np.sum(small * net._upsample_backward(e, small.shape))) <= 1e-12 * (
            1 + abs(np.sum(up * e))
        )


def test_hourglass_levels():
    assert [NetConfig(blocks=b).levels for b in (1, 2, 3, 5, 6)] == [0, 0, 1, 2, 2]
    assert NetConfig(blocks=5, architecture="flat").levels == 0
    with pytest.raises(ValueError):
        NetConfig(architecture="pyramid")


def test_head_gain_scales_only_heads():
    base = NetConfig(blocks=2, width=4, head_gain=1.0).resolved(3)
    a = net.init_params(make_rng(13), base)

    b = net.init_params(make_rng(13), replace(base, head_gain=0.01))
    for name in a:
        factor = 0.01 if name.startswith("head_") and name.endswith("weight") else 1.0
        np.testing.assert_allclose(b[name], a[name] * factor)


def test_checkpoint_records_architecture(tmp_path):
    cfg = NetConfig(blocks=3, width=4, architecture="hourglass", head_gain=0.5).resolved(3)
    params = net.init_params(make_rng(14), cfg)
    net.save_params(params, cfg, tmp_path / "w.bin")
    stored, _ = net.read_checkpoint(tmp_path / "w.bin")
    assert stored == cfg

    with pytest.raises(FormatError):
        net.load_params(tmp_path / "w.bin", replace(cfg, architecture="flat"))
