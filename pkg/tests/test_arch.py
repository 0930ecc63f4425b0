import numpy as np
import pytest

from met2net import diffcore as dc
from met2net.arch import (ConfigError, ModelConfig, ModuleSet, SpatioTemporalBlock, VariableAttention,
                          attention_matrix, decode_all, encode_all, forward_end_to_end, forward_inference,
                          probe_activations, translate, variable_attention)
from met2net.diffcore import ShapeError, Tensor
from met2net.diffcore.gradcheck import check_gradients

from conftest import tiny_model_config


def batch(rng, cfg, B=2, frames=None):
    frames = frames or cfg.in_frames
    shape = (B, frames, cfg.n_vars, cfg.max_channels, cfg.height, cfg.width)
    return rng.standard_normal(shape).astype(np.float64 if cfg.dtype == "f64" else np.float32)


def test_encode_shape_arithmetic(rng):
    cfg = ModelConfig(n_vars=4, channels_per_var=[1, 1, 1, 1], in_frames=12, out_frames=12, height=32, width=64,
                      latent_dim=8, down_factor=2, enc_depth=2, translator_depth=1)
    ms = ModuleSet(cfg, seed=0)
    with dc.no_grad():
        z = encode_all(ms, batch(rng, cfg))
    assert z.shape == (2, 4, 96, 8, 16)


def test_single_variable_encoding(rng):
    cfg = tiny_model_config(n_vars=1, channels_per_var=[1])
    ms = ModuleSet(cfg, seed=0)
    x = batch(rng, cfg)
    z = encode_all(ms, x).data
    direct = ms.encoders[0](Tensor(x[:, :, 0].reshape(-1, 1, 8, 8))).data
    assert z.shape == (2, 1, 8, 4, 4)
    assert np.array_equal(z[:, 0], direct.reshape(2, 8, 4, 4))


def test_encoders_are_independent(rng):
    cfg = tiny_model_config()
    ms = ModuleSet(cfg, seed=1)
    x = batch(rng, cfg)
    z0 = encode_all(ms, x).data
    x2 = x.copy()
    x2[:, :, 1] = rng.standard_normal(x2[:, :, 1].shape)
    z1 = encode_all(ms, x2).data
    assert np.array_equal(z0[:, 0], z1[:, 0]) and np.array_equal(z0[:, 2], z1[:, 2])
    assert not np.array_equal(z0[:, 1], z1[:, 1])


def test_decoders_are_independent(rng):
    cfg = tiny_model_config()
    ms = ModuleSet(cfg, seed=1)
    z = rng.standard_normal((2, 3, 8, 4, 4)).astype(np.float32)
    y0 = decode_all(ms, Tensor(z)).data
    z[:, 2] += 1.0
    y1 = decode_all(ms, Tensor(z)).data
    assert y0.shape == (2, 2, 3, 1, 8, 8)
    assert np.array_equal(y0[:, :, :2], y1[:, :, :2])
    assert not np.array_equal(y0[:, :, 2], y1[:, :, 2])


def test_mixed_channel_counts_are_padded(rng):
    cfg = tiny_model_config(channels_per_var=[1, 2, 1])
    ms = ModuleSet(cfg, seed=0)
    y = forward_end_to_end(ms, batch(rng, cfg)).data
    assert y.shape == (2, 2, 3, 2, 8, 8)
    assert np.all(y[:, :, 0, 1] == 0) and np.all(y[:, :, 2, 1] == 0)


def test_attention_singleton_is_value_projection(rng):
    att = VariableAttention(rng, 8, 4, 1, np.float64)
    att.value.weight.data = rng.standard_normal(att.value.weight.shape)
    z = Tensor(rng.standard_normal((3, 1, 8, 4, 4)))
    out, a = att(z, return_attention=True)
    assert np.array_equal(a.data, np.ones((3, 1, 1, 1)))
    v = att.value(z.reshape(3, 8, 4, 4)).data.reshape(3, 1, 8, 4, 4)
    assert np.array_equal(out.data, v)


def test_attention_matches_hand_softmax(rng):
    width = 2
    att = VariableAttention(rng, width, width, 1, np.float64)
    for conv in (att.query, att.key):
        conv.weight.data = np.eye(width).reshape(width, width, 1, 1)
    z = rng.standard_normal((1, 3, width, 2, 2)) * 0.5
    _, a = att(Tensor(z), return_attention=True)
    flat = z[0].reshape(3, -1)
    scores = flat @ flat.T / np.sqrt(flat.shape[1])
    expect = np.exp(scores - scores.max(axis=1, keepdims=True))
    expect /= expect.sum(axis=1, keepdims=True)
    assert np.max(np.abs(a.data[0, 0] - expect)) < 1e-6


def test_attention_rows_stochastic(rng):
    cfg = tiny_model_config(heads=2)
    ms = ModuleSet(cfg, seed=0)
    z = Tensor(rng.standard_normal((4, 3, 8, 4, 4)).astype(np.float32) * 3)
    _, a = variable_attention(ms, z)
    assert a.shape == (4, 2, 3, 3)
    assert np.all(a.data >= 0)
    assert np.max(np.abs(a.data.sum(axis=-1) - 1)) < 1e-6


def test_attention_matrix_helper():
    q = Tensor(np.zeros((1, 2, 3)))
    assert np.allclose(attention_matrix(q, q).data, 0.5)


def test_block_identity_at_init_and_gradient(rng):
    cfg = tiny_model_config(dtype="f64")
    block = SpatioTemporalBlock(rng, 8, cfg, np.float64)
    x = Tensor(rng.standard_normal((2, 8, 4, 4)), requires_grad=True)
    assert np.array_equal(block(x).data, x.data)
    block.proj.weight.data = rng.standard_normal(block.proj.weight.shape) * 0.3
    block.ffn_out.weight.data = rng.standard_normal(block.ffn_out.weight.shape) * 0.3
    out = block(x)
    assert out.shape == x.shape
    assert check_gradients(lambda: block(x), [x, block.local.weight, block.gate_in.weight, block.norm1.gamma]) < 1e-4


def test_translate_identity_without_attention(rng):
    z = Tensor(rng.standard_normal((2, 3, 8, 4, 4)).astype(np.float32))
    for depth in (0, 2):
        ms = ModuleSet(tiny_model_config(variable_attention=False, translator_depth=depth), seed=0)
        assert np.array_equal(translate(ms, z).data, z.data)


def test_translate_maps_horizons(rng):
    ms = ModuleSet(tiny_model_config(in_frames=3, out_frames=2), seed=0)
    z = Tensor(rng.standard_normal((2, 3, 12, 4, 4)).astype(np.float32))
    assert translate(ms, z).shape == (2, 3, 8, 4, 4)
    with pytest.raises(ShapeError):
        translate(ms, Tensor(np.zeros((2, 3, 8, 4, 4), np.float32)))


def test_shape_contract_and_input_check(rng):
    cfg = tiny_model_config(in_frames=3, out_frames=4)
    ms = ModuleSet(cfg, seed=0)
    assert forward_inference(ms, batch(rng, cfg)).shape == (2, 4, 3, 1, 8, 8)
    with pytest.raises(ShapeError):
        forward_inference(ms, np.zeros((2, 3, 3, 1, 8, 7), np.float32))


def test_shadows_start_equal_and_frozen():
    ms = ModuleSet(tiny_model_config(), seed=4)
    prim = dict(ms.named_parameters())
    for path, p in prim.items():
        if path.startswith("shadow."):
            twin = prim[path[len("shadow."):]]
            assert np.array_equal(p.data, twin.data) and p.data is not twin.data
            assert not p.trainable
    assert all(p.trainable for p in ms.primary_parameters())
    paths = [p.path for p in ms.parameters()]
    assert len(paths) == len(set(paths))


def test_inference_ignores_poisoned_shadows(rng):
    cfg = tiny_model_config()
    ms = ModuleSet(cfg, seed=2)
    x = batch(rng, cfg)
    before = forward_inference(ms, x)
    for p in ms.shadow_parameters():
        p.data[...] = np.nan
    after = forward_inference(ms, x)
    assert np.all(np.isfinite(after)) and np.array_equal(before, after)


def test_inference_is_pure(rng):
    cfg = tiny_model_config()
    ms = ModuleSet(cfg, seed=2)
    x = batch(rng, cfg)
    assert np.array_equal(forward_inference(ms, x), forward_inference(ms, x))


def test_inference_parameter_count_excludes_shadows():
    ms = ModuleSet(tiny_model_config(), seed=0)
    total = sum(p.size for p in ms.parameters())
    assert ms.inference_parameter_count() * 2 == total
    e2e = ModuleSet(tiny_model_config(), seed=5)
    assert ms.inference_parameter_count() == e2e.inference_parameter_count()


def test_shared_encoder_mode(rng):
    cfg = tiny_model_config(multi_encoder_decoder=False)
    ms = ModuleSet(cfg, seed=0)
    assert len(ms.encoders) == 1 and len(ms.decoders) == 1
    x = batch(rng, cfg)
    z = encode_all(ms, x).data
    one = ms.encoders[0](Tensor(x[:, :, 2].reshape(-1, 1, 8, 8))).data.reshape(2, 8, 4, 4)
    assert np.array_equal(z[:, 2], one)


def test_probe_points_cover_all_sections(rng):
    cfg = tiny_model_config(translator_depth=2)
    ms = ModuleSet(cfg, seed=0)
    names = [n for n, _ in probe_activations(ms, batch(rng, cfg))]
    assert names == ["encoder_stage_0", "latent", "attention", "block_0", "block_1", "translator_output"]
    deeper = ModuleSet(tiny_model_config(enc_depth=2), seed=0)
    names = [n for n, a in probe_activations(deeper, batch(rng, cfg))]
    assert names[-1] == "decoder_stage_0"


@pytest.mark.parametrize("bad", [dict(n_vars=2), dict(height=9), dict(heads=3), dict(enc_depth=0),
                                 dict(multi_encoder_decoder=False, channels_per_var=[1, 2, 1]),
                                 dict(dtype="f16")])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        tiny_model_config(**bad)
