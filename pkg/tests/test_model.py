import math

import numpy as np
import pytest

from cadbconformer.model import (
    ABLATIONS,
    CheckpointError,
    ConfigError,
    ModelConfig,
    band_branch_forward,
    cadb_block_forward,
    cfb_forward,
    conv_forward_block,
    count_parameters,
    decoders_forward,
    dilated_dense_forward,
    encoder_forward,
    identity_forward,
    init_parameters,
    load_checkpoint,
    model_forward,
    parameter_breakdown,
    parameter_layout,
    reconstruct,
    save_checkpoint,
    self_channel_attention,
)
from cadbconformer.model import layers
from cadbconformer.model.gradcheck import is_structural_zero, model_gradcheck
from cadbconformer.numerics import ShapeError, Tensor
from cadbconformer.signal import StftConfig, pack_input, stft

SMALL = ModelConfig(channels=8, num_blocks=1, attention_heads=2, conformer_kernel=5)
TINY_STFT = StftConfig(n_fft=64, win_length=64, hop_length=16)
TINY = ModelConfig(channels=4, num_blocks=1, f_bins=33, attention_heads=2, conformer_kernel=5)


def rand(shape, seed=0, dtype=np.float64):
    return Tensor(np.random.default_rng(seed).standard_normal(shape).astype(dtype))


def randomized(cfg, seed=0):
    """Parameters with non-trivial biases, gains and slopes."""
    p = init_parameters(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    for name, t in p.items():
        if name.endswith(".bias") or name.endswith(".gain") or name.endswith(".slope"):
            t.data = t.data + 0.3 * rng.standard_normal(t.shape)
    return p


# -- config ------------------------------------------------------------------------

def test_config_invariants():
    cfg = ModelConfig()
    assert cfg.f_half == 101 and cfg.num_blocks == 4 and cfg.alpha == cfg.beta == 0.5
    with pytest.raises(ConfigError):
        ModelConfig(dilations=(1, 2))
    with pytest.raises(ConfigError):
        ModelConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        ModelConfig(enable_cfb=False, enable_t_conformer=False, enable_f_conformer=False)


def test_ablation_names_roundtrip():
    for name in ABLATIONS:
        assert ModelConfig().with_ablation(name).ablation == name


# -- dilated dense / encoder --------------------------------------------------------

def test_dense_zero_input_zero_output():
    p = init_parameters(SMALL, dtype=np.float64)
    out = dilated_dense_forward(Tensor(np.zeros((2, 8, 10, 101))), p, "encoder")
    assert out.shape == (2, 8, 10, 101)
    assert not out.data.any()


def test_dense_shape_preserved():
    p = init_parameters(SMALL, dtype=np.float64)
    assert dilated_dense_forward(rand((2, 8, 10, 101)), p, "encoder").shape == (2, 8, 10, 101)


def test_dense_single_block_identity_kernel():
    cfg = ModelConfig(channels=3, num_blocks=0, dense_depth=1, dilations=(1,), attention_heads=1)
    p = randomized(cfg)
    w = np.zeros((3, 3, 2, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0  # current frame, centre bin
    p["encoder.dense.0.conv.weight"].data = w
    p["encoder.dense.0.conv.bias"].data = np.zeros(3)
    x = rand((2, 3, 6, 5), seed=4).data
    out = dilated_dense_forward(Tensor(x), p, "encoder", (1,)).data
    g, b = p["encoder.dense.0.norm.gain"].data, p["encoder.dense.0.norm.bias"].data
    a = p["encoder.dense.0.prelu.slope"].data
    expected = np.empty_like(x)
    for n in range(2):
        for c in range(3):
            v = x[n, c]
            z = (v - v.mean()) / math.sqrt(v.var() + 1e-5) * g[c] + b[c]
            expected[n, c] = np.where(z >= 0, z, a[c] * z)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_dense_is_causal_in_time():
    p = randomized(SMALL)
    x = rand((1, 8, 12, 9), seed=1).data
    y = x.copy()
    y[:, :, 8:] += 1.0
    a = dilated_dense_forward(Tensor(x), p, "encoder").data
    b = dilated_dense_forward(Tensor(y), p, "encoder").data
    # instance norm statistics span all frames, so only the pre-norm path is causal; check the first conv
    w, bias = p["encoder.dense.0.conv.weight"], p["encoder.dense.0.conv.bias"]
    from cadbconformer.numerics import conv2d
    ca = conv2d(Tensor(x), w, bias, dilation=(1, 1), padding=((1, 0), (1, 1))).data
    cb = conv2d(Tensor(y), w, bias, dilation=(1, 1), padding=((1, 0), (1, 1))).data
    np.testing.assert_array_equal(ca[:, :, :8], cb[:, :, :8])
    assert not np.array_equal(a, b)


def test_encoder_shape():
    cfg = ModelConfig(channels=8, num_blocks=1, attention_heads=2)
    out = encoder_forward(rand((1, 10, 201, 3)), init_parameters(cfg, dtype=np.float64), cfg)
    assert out.shape == (1, 8, 10, 101)


def test_encoder_zero_input():
    cfg = ModelConfig(channels=8, num_blocks=1, attention_heads=2)
    out = encoder_forward(Tensor(np.zeros((1, 10, 201, 3))), init_parameters(cfg, dtype=np.float64), cfg)
    assert not out.data.any()


def test_encoder_rejects_wrong_bins():
    cfg = ModelConfig(channels=8, num_blocks=1, attention_heads=2)
    with pytest.raises(ConfigError):
        encoder_forward(rand((1, 10, 129, 3)), init_parameters(cfg), cfg)


def test_first_conv_parameter_count_scales_with_c():
    def first(c):
        return sum(s.size for s in parameter_layout(ModelConfig(channels=c, attention_heads=1))
                   if s.name.startswith("encoder.in_conv"))
    assert first(8) == 3 * 8 + 8 == 32
    assert first(16) == 2 * first(8)


# -- self channel attention ---------------------------------------------------------

def _sca_params(c, seed=0):
    cfg = ModelConfig(channels=c, num_blocks=1, attention_heads=1)
    return randomized(cfg, seed)


def test_sca_single_channel_doubles_input():
    p = _sca_params(1)
    x = rand((2, 1, 35), seed=3)
    out, w = self_channel_attention(x, p, "blocks.0.cfb.sca", return_weights=True)
    np.testing.assert_array_equal(w.data, np.ones((2, 1, 1)))
    np.testing.assert_array_equal(out.data, 2 * x.data)


def test_sca_shapes():
    p = _sca_params(8)
    out, w = self_channel_attention(rand((2, 8, 1010)), p, "blocks.0.cfb.sca", return_weights=True)
    assert out.shape == (2, 8, 1010) and w.shape == (2, 8, 8)


@pytest.mark.parametrize("t,f", [(5, 7), (10, 101)])
def test_sca_rows_sum_to_one(t, f):
    p = _sca_params(8, seed=t)
    _, w = self_channel_attention(rand((2, 8, t * f), seed=f), p, "blocks.0.cfb.sca", return_weights=True)
    assert w.shape == (2, 8, 8)
    np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-6)


def test_sca_zero_gates_match_loop_oracle():
    p = _sca_params(3)
    for g in ("q_gate", "k_gate"):
        p[f"blocks.0.cfb.sca.{g}.weight"].data[:] = 0
        p[f"blocks.0.cfb.sca.{g}.bias"].data[:] = 0
    x = rand((2, 3, 4), seed=7).data
    out = self_channel_attention(Tensor(x), p, "blocks.0.cfb.sca").data
    b, c, n = x.shape
    expected = np.empty_like(x)
    for k in range(b):
        q = x[k] / n
        s = np.zeros((c, c))
        for i in range(c):
            for j in range(c):
                for m in range(n):
                    s[i, j] += q[i, m] * q[j, m]
        w = np.exp(s - s.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        for i in range(c):
            for m in range(n):
                expected[k, i, m] = sum(w[i, j] * x[k, j, m] for j in range(c)) + x[k, i, m]
    np.testing.assert_allclose(out, expected, atol=1e-6)


# -- ConvForward / CFB ----------------------------------------------------------------

def test_conv_forward_zero_weights_is_identity():
    p = init_parameters(SMALL, dtype=np.float64)
    for k in ("pw1", "dw", "pw2"):
        p[f"blocks.0.cfb.ff1.{k}.weight"].data[:] = 0
    x = rand((1, 8, 50))
    out = conv_forward_block(x, p, "blocks.0.cfb.ff1")
    assert out.shape == (1, 8, 50)
    np.testing.assert_array_equal(out.data, x.data)


def test_conv_forward_single_channel_trace():
    p = randomized(ModelConfig(channels=1, num_blocks=1, attention_heads=1))
    pre = "blocks.0.cfb.ff1"
    p[f"{pre}.pw1.weight"].data = np.array([[1.0], [0.0]])
    p[f"{pre}.pw1.bias"].data = np.zeros(2)
    p[f"{pre}.dw.weight"].data = np.zeros((2, 3))
    p[f"{pre}.dw.bias"].data = np.array([0.4, -1.0])
    p[f"{pre}.pw2.weight"].data = np.array([[1.0, 2.0]])
    p[f"{pre}.pw2.bias"].data = np.array([0.1])
    x = np.array([[[0.5, -1.0, 2.0]]])
    out = conv_forward_block(Tensor(x), p, pre).data

    def swish(v):
        return v / (1 + math.exp(-v))
    expected = x + swish(0.4) + 2 * swish(-1.0) + 0.1
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_conv_forward_identity_taps():
    p = randomized(ModelConfig(channels=1, num_blocks=1, attention_heads=1))
    pre = "blocks.0.cfb.ff1"
    p[f"{pre}.pw1.weight"].data = np.array([[1.0], [0.0]])
    p[f"{pre}.pw1.bias"].data = np.zeros(2)
    p[f"{pre}.dw.weight"].data = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    p[f"{pre}.dw.bias"].data = np.zeros(2)
    p[f"{pre}.pw2.weight"].data = np.array([[1.0, 0.0]])
    p[f"{pre}.pw2.bias"].data = np.zeros(1)
    x = np.array([[[0.5, -1.0, 2.0]]])
    out = conv_forward_block(Tensor(x), p, pre).data
    np.testing.assert_allclose(out, x + x / (1 + np.exp(-x)), atol=1e-12)


def test_cfb_unfolds():
    p = randomized(SMALL)
    assert cfb_forward(rand((1, 8, 10, 101)), p, "blocks.0.cfb").shape == (1, 8, 1010)


def test_cfb_is_composition():
    p = randomized(SMALL)
    x = rand((2, 8, 5, 7), seed=2)
    h = Tensor(x.data.reshape(2, 8, 35))
    expected = conv_forward_block(self_channel_attention(conv_forward_block(h, p, "blocks.0.cfb.ff1"), p,
                                                         "blocks.0.cfb.sca"), p, "blocks.0.cfb.ff2")
    np.testing.assert_array_equal(cfb_forward(x, p, "blocks.0.cfb").data, expected.data)


def _zero_cfb(p):
    for name, t in p.items():
        if name.startswith("blocks.0.cfb."):
            t.data[:] = 0


def test_cfb_zero_weights_reduces_to_channel_attention():
    p = init_parameters(SMALL, dtype=np.float64)
    _zero_cfb(p)
    x = rand((1, 8, 4, 5), seed=5)
    flat = Tensor(x.data.reshape(1, 8, 20))
    np.testing.assert_allclose(cfb_forward(x, p, "blocks.0.cfb").data,
                               self_channel_attention(flat, p, "blocks.0.cfb.sca").data, atol=1e-12)


@pytest.mark.xfail(strict=True, reason="channel attention has no value weights: W.F_in + F_in survives zero weights")
def test_cfb_zero_weights_is_identity():
    p = init_parameters(SMALL, dtype=np.float64)
    _zero_cfb(p)
    x = rand((1, 8, 4, 5), seed=5)
    np.testing.assert_allclose(cfb_forward(x, p, "blocks.0.cfb").data, x.data.reshape(1, 8, 20), atol=1e-6)


# -- band branch / block ---------------------------------------------------------------

def _np_ln(v, g, b):
    mu = v.mean(-1, keepdims=True)
    return (v - mu) / np.sqrt(v.var(-1, keepdims=True) + 1e-5) * g + b


def _np_swish(v):
    return v / (1 + np.exp(-v))


def _np_conformer_len1(x, f, p, pre):
    def P(n):
        return p[f"{pre}.{n}"].data

    def ffn(v, k):
        h = _np_swish(_np_ln(v, P(f"{k}.norm.gain"), P(f"{k}.norm.bias")) @ P(f"{k}.lin1.weight").T + P(f"{k}.lin1.bias"))
        return v + 0.5 * (h @ P(f"{k}.lin2.weight").T + P(f"{k}.lin2.bias"))

    xf = ffn(x, "ffn1")
    f = xf if f is None else f
    v = f @ P("attn.v.weight").T + P("attn.v.bias")  # one key: attention weight is exactly 1
    h = xf + v @ P("attn.out.weight").T + P("attn.out.bias")
    g = _np_ln(h, P("conv.norm.gain"), P("conv.norm.bias")) @ P("conv.pw1.weight").T + P("conv.pw1.bias")
    c = g.shape[-1] // 2
    g = g[..., :c] / (1 + np.exp(-g[..., c:]))
    k = P("conv.dw.weight").shape[1]
    g = g * P("conv.dw.weight")[:, k // 2] + P("conv.dw.bias")
    g = _np_swish(_np_ln(g, P("conv.dw_norm.gain"), P("conv.dw_norm.bias")))
    h = h + g @ P("conv.pw2.weight").T + P("conv.pw2.bias")
    h = ffn(h, "ffn2")
    return _np_ln(h, P("final_norm.gain"), P("final_norm.bias"))


@pytest.mark.parametrize("with_cfb", [True, False])
def test_band_branch_singleton_oracle(with_cfb):
    cfg = ModelConfig(channels=4, num_blocks=1, attention_heads=1, conformer_kernel=5, enable_cfb=with_cfb)
    p = randomized(cfg, seed=9)
    x = rand((2, 4, 1, 1), seed=1)
    f_out = rand((2, 4, 1), seed=2) if with_cfb else None
    out = band_branch_forward(x, f_out, p, "blocks.0", cfg).data
    seq = x.data.reshape(2, 1, 4)
    fs = None if f_out is None else f_out.data.reshape(2, 1, 4)
    h = _np_conformer_len1(seq, fs, p, "blocks.0.t_conformer")
    h = _np_conformer_len1(h, fs, p, "blocks.0.f_conformer")
    np.testing.assert_allclose(out, h.reshape(2, 4, 1, 1), atol=1e-10)


def test_band_branch_without_cfb_alpha1_beta0():
    cfg = ModelConfig(channels=8, num_blocks=1, attention_heads=2, conformer_kernel=5, alpha=1.0, beta=0.0,
                      enable_cfb=False)
    out = band_branch_forward(rand((1, 8, 10, 101)), None, randomized(cfg), "blocks.0", cfg)
    assert out.shape == (1, 8, 10, 101)


def test_band_branch_layout_mismatch():
    p = randomized(SMALL)
    with pytest.raises(ShapeError):
        band_branch_forward(rand((1, 8, 5, 7)), rand((1, 8, 36)), p, "blocks.0", SMALL)


def test_block_shape_all_on():
    assert cadb_block_forward(rand((1, 8, 10, 101)), SMALL, randomized(SMALL), "blocks.0").shape == (1, 8, 10, 101)


def test_cfb_evaluated_once_per_block(monkeypatch):
    calls = []
    real = layers.cfb_forward

    def counting(*args, **kwargs):
        calls.append(1)
        return real(*args, **kwargs)

    monkeypatch.setattr(layers, "cfb_forward", counting)
    cfg = ModelConfig(channels=4, num_blocks=3, f_bins=33, attention_heads=2, conformer_kernel=5)
    model_forward(np.random.default_rng(0).standard_normal(256), cfg, init_parameters(cfg), TINY_STFT)
    assert len(calls) == 3


def test_no_cfb_differs_from_full():
    x = rand((1, 8, 6, 9), seed=3)
    p = randomized(SMALL)
    full = cadb_block_forward(x, SMALL, p, "blocks.0")
    ablated = cadb_block_forward(x, SMALL.with_ablation("no_cfb"), p, "blocks.0")
    assert full.shape == ablated.shape
    assert not np.allclose(full.data, ablated.data)


def test_no_bfb_is_residual_cfb():
    cfg = SMALL.with_ablation("no_bfb")
    p = randomized(cfg)
    x = rand((1, 8, 4, 5), seed=8)
    expected = x.data + cfb_forward(x, p, "blocks.0.cfb").data.reshape(x.shape)
    np.testing.assert_allclose(cadb_block_forward(x, cfg, p, "blocks.0").data, expected, atol=1e-12)


# -- decoders / reconstruction -------------------------------------------------------

def test_decoder_shapes():
    cfg = ModelConfig(channels=8, num_blocks=1, attention_heads=2)
    mask, cplx = decoders_forward(rand((1, 8, 10, 101)), randomized(cfg), cfg)
    assert mask.shape == (1, 10, 201) and cplx.shape == (1, 10, 201, 2)


def test_decoder_zero_input():
    cfg = ModelConfig(channels=8, num_blocks=1, attention_heads=2)
    mask, cplx = decoders_forward(Tensor(np.zeros((1, 8, 10, 101))), init_parameters(cfg, dtype=np.float64), cfg)
    assert not mask.data.any() and not cplx.data.any()


def test_reconstruct_rejects_misaligned():
    cfg = StftConfig()
    with pytest.raises(ShapeError):
        reconstruct(Tensor(np.ones((1, 5, 201))), Tensor(np.zeros((1, 5, 200, 2))), np.zeros((1, 5, 201)),
                    np.zeros((1, 5, 201)), 0.3, cfg, 400)


def _recon(x, mask_value, c):
    cfg = StftConfig()
    net = pack_input(stft(x, cfg), c)
    shape = net.phase.shape
    return reconstruct(Tensor(np.full(shape, mask_value)), Tensor(np.zeros(shape + (2,))), net.phase,
                       net.packed[..., 0], c, cfg, x.size).data[0]


@pytest.mark.parametrize("length", [400, 6400, 64000])
def test_unit_mask_identity(length):
    x = np.random.default_rng(length).uniform(-1, 1, length)
    assert np.max(np.abs(_recon(x, 1.0, 0.3) - x)) < 1e-5
    y = identity_forward(x, ModelConfig(), StftConfig()).data[0]
    assert np.max(np.abs(y - x)) < 1e-5


def test_zero_mask_silence():
    x = np.random.default_rng(0).uniform(-1, 1, 1600)
    assert not _recon(x, 0.0, 0.3).any()


def test_half_mask_linear_domain():
    x = np.random.default_rng(1).uniform(-1, 1, 1600)
    np.testing.assert_allclose(_recon(x, 0.5, 1.0), 0.5 * x, atol=1e-5)


# -- full model ------------------------------------------------------------------------

@pytest.mark.parametrize("length", [400, 6400, 64000])
def test_model_preserves_length(length):
    cfg = ModelConfig(channels=4, num_blocks=1, attention_heads=1, conformer_kernel=5)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, length)
    out = model_forward(x, cfg, init_parameters(cfg), StftConfig())
    assert out.shape == (1, length)
    assert np.all(np.isfinite(out.data))


def test_model_forward_deterministic():
    p = init_parameters(TINY, seed=3)
    x = np.random.default_rng(0).standard_normal((2, 512))
    a = model_forward(x, TINY, p, TINY_STFT).data
    b = model_forward(x, TINY, p, TINY_STFT).data
    assert np.array_equal(a, b)


def test_model_gradcheck_full():
    report = model_gradcheck(TINY, TINY_STFT)
    assert report.passed, (report.worst_param, report.worst_error)
    assert report.checked >= 32


def test_structural_zero_gradients_are_zero():
    from cadbconformer.numerics import tape
    from cadbconformer.objectives import si_snr_loss
    p = init_parameters(TINY, seed=0, dtype=np.float64)
    rng = np.random.default_rng(0)
    clean = np.sin(np.arange(512) * 0.3)
    with tape() as t:
        loss = si_snr_loss(model_forward(clean + 0.3 * rng.standard_normal(512), TINY, p, TINY_STFT), clean[None])
        t.backward(loss)
    names = [n for n in p.names() if is_structural_zero(n)]
    assert names
    for n in names:
        assert np.max(np.abs(p[n].grad)) < 1e-9, n
    assert all(np.any(p[n].grad != 0) for n in p.names() if not is_structural_zero(n) and "weight" in n)


# -- parameter counting / init ----------------------------------------------------------

def _hand_count(cfg):
    c, k, h = cfg.channels, cfg.conformer_kernel, cfg.ffn_mult * cfg.channels
    dense = sum(c * c * (i + 1) * 6 + c + 3 * c for i in range(cfg.dense_depth))
    encoder = (3 * c + c) + 3 * c + dense + (c * c * 3 + c) + 3 * c
    conv_fwd = (2 * c * c + 2 * c) + (2 * c * 3 + 2 * c) + (2 * c * c + c)
    cfb = 2 * conv_fwd + 2 * (3 * c + c)
    ffn = 2 * c + (c * h + h) + (h * c + c)
    conformer = 2 * ffn + 2 * c + 4 * (c * c + c) + 2 * c + (2 * c * c + 2 * c) + (c * k + c) + 2 * c \
        + (c * c + c) + 2 * c
    block = cfb * cfg.enable_cfb + conformer * (cfg.enable_t_conformer + cfg.enable_f_conformer)
    mask = dense + (c * c * 3 + c) + 2 * c + c + (c + 1) + 1
    cplx = dense + (c * c * 3 + c) + 2 * c + c + (2 * c + 2)
    return encoder + cfg.num_blocks * block + mask + cplx


@pytest.mark.parametrize("name", ABLATIONS)
def test_toy_count_matches_hand_arithmetic(name):
    cfg = ModelConfig(channels=8, num_blocks=1, attention_heads=2, conformer_kernel=7, f_bins=129).with_ablation(name)
    assert count_parameters(cfg) == _hand_count(cfg)
    assert sum(parameter_breakdown(cfg).values()) == count_parameters(cfg)


def test_large_scale_budget_and_ablation_order():
    from cadbconformer import configfile
    cfg = configfile.load("large").model
    counts = {n: count_parameters(cfg.with_ablation(n)) for n in ABLATIONS}
    assert 1_700_000 <= counts["full"] <= 2_300_000
    assert counts["full"] > counts["no_cfb"] > counts["no_t_conformer"] > counts["no_bfb"]
    assert counts["no_t_conformer"] == counts["no_f_conformer"]


def test_init_deterministic_and_seeded():
    a, b, c = init_parameters(TINY, seed=1), init_parameters(TINY, seed=1), init_parameters(TINY, seed=2)
    assert a.equals(b)
    assert not a.equals(c)
    assert a.all_finite()
    assert len(set(a.names())) == len(a)


def test_kaiming_std():
    cfg = ModelConfig(channels=64, num_blocks=1)
    w = init_parameters(cfg, seed=0)["blocks.0.t_conformer.attn.q.weight"].data
    assert w.shape == (64, 64)
    bound = math.sqrt(6 / 64)
    assert abs(w.std() / (bound / math.sqrt(3)) - 1) < 0.2


# -- checkpoints --------------------------------------------------------------------------

def test_checkpoint_roundtrip_bitwise_forward(tmp_path):
    p = init_parameters(TINY, seed=5)
    x = np.random.default_rng(1).standard_normal(512)
    before = model_forward(x, TINY, p, TINY_STFT).data
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, p, TINY, TINY_STFT)
    q, cfg, st = load_checkpoint(path, expected=TINY)
    assert cfg == TINY and st == TINY_STFT and q.equals(p)
    assert np.array_equal(model_forward(x, cfg, q, st).data, before)


def test_checkpoint_rejects_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, init_parameters(TINY), TINY, TINY_STFT)
    with pytest.raises(CheckpointError, match="expected"):
        load_checkpoint(path, expected=TINY.with_ablation("no_cfb"))
    raw = path.read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "cut.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"hello\nend\n")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad.ckpt")
    text = raw.replace(b"model.channels = 4", b"model.channels = 8")
    (tmp_path / "edit.ckpt").write_bytes(text)
    with pytest.raises(CheckpointError, match="manifest"):
        load_checkpoint(tmp_path / "edit.ckpt")
