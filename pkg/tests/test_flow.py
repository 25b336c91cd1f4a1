import numpy as np
import pytest
import torch

from goalflow.errors import DomainError, NonFiniteGradient, NonFiniteState, ParseError, ShapeMismatch
from goalflow.flow import (
    NetConfig,
    TrainConfig,
    TrainState,
    VelocityNet,
    backward_and_step,
    euler_sample,
    fm_loss,
    learning_rate,
    load_checkpoint,
    read_header,
    save_checkpoint,
    time_embedding,
)
from goalflow.flow.gradcheck import relative_errors

torch.set_num_threads(1)
SMALL = NetConfig(channels=3, widths=(8, 16, 16, 8))
DEFAULT_WIDTHS = NetConfig(channels=3)


def _randomize_output(net, seed=0):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        net.out.weight.copy_(torch.randn(net.out.weight.shape, generator=g) * 0.1)
        net.out.bias.copy_(torch.randn(net.out.bias.shape, generator=g) * 0.1)
    return net


def test_zero_initialized_output():
    net = VelocityNet(SMALL)
    x = torch.randn(2, 3, 16, 16)
    assert not net(x, 0.3).any()
    assert net(x, 0.3).shape == x.shape


def test_forward_deterministic_and_time_sensitive():
    torch.manual_seed(0)
    net = _randomize_output(VelocityNet(SMALL)).eval()
    x = torch.randn(2, 3, 12, 12)
    assert torch.equal(net(x, 0.5), net(x, 0.5))
    assert not torch.allclose(net(x, 0.0), net(x, 1.0))
    assert torch.equal(net(x, 0.5), net(x, torch.tensor([0.5, 0.5])))
    with pytest.raises(ShapeMismatch):
        net(torch.zeros(1, 4, 8, 8), 0.0)
    assert net(torch.randn(1, 3, 9, 7), 0.2).shape == (1, 3, 9, 7)


def test_time_embedding_shape_and_range():
    e = time_embedding(torch.tensor([0.0, 0.5, 1.0]), 32)
    assert e.shape == (3, 32) and e.abs().max() <= 1.0
    assert torch.equal(e[0, :16], torch.zeros(16)) and torch.equal(e[0, 16:], torch.ones(16))


def test_fm_loss_closed_forms():
    x0, x1 = torch.randn(2, 3, 8, 8), torch.randn(2, 3, 8, 8)
    t = torch.tensor([0.2, 0.7])
    zero = VelocityNet(SMALL)
    assert torch.allclose(fm_loss(zero, x0, x1, t), ((x1 - x0) ** 2).mean())
    oracle = lambda x, tt: x1 - x0  # noqa: E731
    assert fm_loss(oracle, x0, x1, t) == 0
    assert fm_loss(_randomize_output(VelocityNet(SMALL)), x0, x1, t) >= 0


def test_learning_rate_schedule():
    cfg = TrainConfig(lr=1.0, epochs=10, warmup_epochs=2, steps_per_epoch=10)
    assert learning_rate(cfg, 0) < learning_rate(cfg, 19)
    assert learning_rate(cfg, 19) == pytest.approx(1.0)
    assert learning_rate(cfg, 20) == pytest.approx(1.0)
    assert learning_rate(cfg, 60) == pytest.approx(0.5)
    assert learning_rate(cfg, 100) == pytest.approx(0.0, abs=1e-12)
    lrs = [learning_rate(cfg, s) for s in range(20, 101)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    defaults = TrainConfig()
    assert (defaults.lr, defaults.betas, defaults.weight_decay, defaults.ema_decay) == \
        (1.5e-4, (0.9, 0.999), 0.01, 0.999)
    with pytest.raises(DomainError):
        TrainConfig(warmup_epochs=30)


def _batch(seed=0, b=2, size=8):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(b, 3, size, size, generator=g), torch.randn(b, 3, size, size, generator=g)


@pytest.mark.parametrize("decay", [1.0, 0.0])
def test_ema_extremes(decay):
    state = TrainState.create(SMALL, TrainConfig(ema_decay=decay, lr=1e-2, warmup_epochs=0), seed=1)
    before = [p.clone() for p in state.ema.parameters()]
    x0, x1 = _batch()
    backward_and_step(state, x0, x1)
    for b, s, p in zip(before, state.ema.parameters(), state.net.parameters()):
        if decay == 1.0:
            assert torch.equal(s, b)
        else:
            assert torch.equal(s, p)


def test_ema_update_rule():
    state = TrainState.create(SMALL, TrainConfig(lr=1e-2, warmup_epochs=0), seed=2)
    shadow = [p.clone() for p in state.ema.parameters()]
    backward_and_step(state, *_batch())
    for s0, s, p in zip(shadow, state.ema.parameters(), state.net.parameters()):
        assert torch.allclose(s, 0.999 * s0 + 0.001 * p, atol=1e-7)


def test_overfit_single_coupling():
    cfg = TrainConfig(lr=1e-3, epochs=10, warmup_epochs=1, steps_per_epoch=20, batch_size=1)
    state = TrainState.create(DEFAULT_WIDTHS, cfg, seed=0)
    x0, x1 = _batch(3, b=1, size=16)
    t = torch.tensor([0.5])
    losses = [backward_and_step(state, x0, x1, t) for _ in range(cfg.total_steps)]
    assert len(losses) == 200
    assert losses[-1] * 10 <= losses[0]


def test_null_transport_drives_prediction_to_zero():
    cfg = TrainConfig(lr=1e-3, epochs=10, warmup_epochs=1, steps_per_epoch=20)
    state = TrainState.create(DEFAULT_WIDTHS, cfg, seed=4)
    x, _ = _batch(5)
    with torch.no_grad():  # start from a net that predicts something
        _randomize_output(state.net, 9)
    start = state.net(x, 0.5).abs().mean().item()
    losses = [backward_and_step(state, x, x) for _ in range(cfg.total_steps)]
    assert losses[-1] * 10 <= losses[0]
    assert state.net(x, 0.5).abs().mean().item() < start / 4


def test_nonfinite_gradient_leaves_weights_untouched():
    state = TrainState.create(SMALL, TrainConfig(), seed=0)
    before = [p.clone() for p in state.net.parameters()]
    x0, x1 = _batch()
    x1[0, 0, 0, 0] = float("nan")
    with pytest.raises(NonFiniteGradient):
        backward_and_step(state, x0, x1)
    assert state.step == 0
    assert all(torch.equal(a, b) for a, b in zip(before, state.net.parameters()))


@pytest.mark.parametrize("n", [1, 2, 96])
def test_euler_oracle_transport(n):
    x0, x1 = _batch(6)
    out = euler_sample(lambda x, t: x1 - x0, x0, n)
    assert (out - x1).abs().max() <= 1e-5


def test_euler_time_grid_and_errors():
    seen = []
    euler_sample(lambda x, t: seen.append(t) or torch.zeros_like(x), torch.zeros(1, 1, 2, 2), 4)
    assert seen == [0.25, 0.5, 0.75, 1.0]
    with pytest.raises(DomainError):
        euler_sample(lambda x, t: x, torch.zeros(1), 0)
    with pytest.raises(NonFiniteState):
        euler_sample(lambda x, t: torch.full_like(x, float("inf")), torch.zeros(1, 1, 2, 2), 3)


def test_euler_step_refinement_converges():
    torch.manual_seed(1)
    net = _randomize_output(VelocityNet(SMALL)).eval()
    x0, _ = _batch(7)
    s = {n: euler_sample(net, x0, n) for n in (12, 24, 96, 192)}
    assert (s[96] - s[192]).abs().max() <= (s[12] - s[24]).abs().max()
    assert torch.equal(euler_sample(net, x0, 12), s[12])


def test_checkpoint_roundtrip(tmp_path):
    state = TrainState.create(SMALL, TrainConfig(lr=1e-2, warmup_epochs=0, ema_decay=0.5), seed=3)
    backward_and_step(state, *_batch())
    save_checkpoint(tmp_path / "ck", state.net, state.ema, state.step, extra={"note": 1})
    header = read_header(tmp_path / "ck")
    assert header["step"] == 1 and header["ema"] and header["extra"] == {"note": 1}
    raw = load_checkpoint(tmp_path / "ck", use_ema=False)
    ema = load_checkpoint(tmp_path / "ck")
    for a, b in zip(raw.parameters(), state.net.parameters()):
        assert torch.equal(a, b)
    for a, b in zip(ema.parameters(), state.ema.parameters()):
        assert torch.equal(a, b)
    (tmp_path / "ck" / "header.json").write_text('{"format": "other"}')
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "ck")


def _gradcheck(widths, size, seed=0):
    torch.manual_seed(seed)
    net = _randomize_output(VelocityNet(NetConfig(channels=3, widths=widths)), seed).double()
    g = torch.Generator().manual_seed(seed)
    x0 = torch.randn(2, 3, size, size, generator=g, dtype=torch.float64)
    x1 = torch.randn(2, 3, size, size, generator=g, dtype=torch.float64)
    t = torch.tensor([0.3, 0.8], dtype=torch.float64)
    return np.concatenate(list(relative_errors(net, x0, x1, t).values()))


def test_gradients_match_finite_differences_small_net():
    err = _gradcheck((4, 8, 8, 4), 4)
    assert err.max() <= 1e-3


@pytest.mark.slow
def test_gradients_match_finite_differences_default_width():
    err = _gradcheck((32, 64, 64, 32), 4)
    assert err.max() <= 1e-3
