import numpy as np
import pytest

from mixitse import autodiff as ad
from mixitse.dsp import ComplexSpectrogram, StftConfig
from mixitse.errors import ConfigError, InvalidInputError
from mixitse.losses import LossConfig, MixtureBatch, unsupervised_loss
from mixitse.model import (
    ModelConfig,
    ModelParams,
    enhance,
    features,
    forward,
    identity_params,
    init_params,
    load_checkpoint,
    mask_to_complex,
    param_shapes,
    save_checkpoint,
)

SMALL = ModelConfig(num_layers=3, base_channels=4, num_gru=2, freq_bins=32, num_decoder_branches=3)
TINY = ModelConfig(num_layers=2, base_channels=4, num_gru=2, freq_bins=32, num_decoder_branches=3)


def random_input(cfg, frames=16, batch=None, seed=0):
    rng = np.random.default_rng(seed)
    shape = (2, cfg.freq_bins, frames) if batch is None else (batch, 2, cfg.freq_bins, frames)
    return rng.standard_normal(shape)


def test_parameter_shapes_match_closed_form():
    # L=3, base 4: channels 4-8-16; 32 bins halve three times to 4; bottleneck 16*4 = 64 split over 2 GRUs
    expected = {
        "enc0.weight": (4, 2, 2, 3), "enc0.bias": (4,),
        "enc1.weight": (8, 4, 2, 3), "enc1.bias": (8,),
        "enc2.weight": (16, 8, 2, 3), "enc2.bias": (16,),
    }
    for j in range(2):
        expected.update({f"gru{j}.w_x": (32, 96), f"gru{j}.w_h": (32, 96), f"gru{j}.b_x": (96,), f"gru{j}.b_h": (96,)})
    for b in ("speech", "noise1", "noise2"):
        expected.update({
            f"{b}.skip0.weight": (16, 16, 1, 1), f"{b}.skip0.bias": (16,),
            f"{b}.dec0.weight": (16, 8, 2, 3), f"{b}.dec0.bias": (8,),
            f"{b}.skip1.weight": (8, 8, 1, 1), f"{b}.skip1.bias": (8,),
            f"{b}.dec1.weight": (8, 4, 2, 3), f"{b}.dec1.bias": (4,),
            f"{b}.skip2.weight": (4, 4, 1, 1), f"{b}.skip2.bias": (4,),
            f"{b}.dec2.weight": (4, 2, 2, 3), f"{b}.dec2.bias": (2,),
        })
    params = init_params(SMALL, 0)
    assert {k: t.shape for k, t in params.tensors.items()} == expected
    assert param_shapes(SMALL) == expected


def test_init_determinism():
    a, b, c = init_params(SMALL, 1), init_params(SMALL, 1), init_params(SMALL, 2)
    for name in a.names():
        np.testing.assert_array_equal(a[name].data, b[name].data)
    assert any(not np.array_equal(a[n].data, c[n].data) for n in a.names())


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(num_decoder_branches=2)
    with pytest.raises(ConfigError):
        ModelConfig(input_channels=3)
    with pytest.raises(ConfigError):
        ModelConfig(num_layers=0)
    with pytest.raises(ConfigError):
        ModelConfig(base_channels=3, num_gru=5, freq_bins=32)  # 12*4 = 48 features not divisible by 5
    paper_scale = ModelConfig(num_layers=4, base_channels=16, num_gru=4, freq_bins=257)
    assert paper_scale.encoder_channels == [16, 32, 64, 128]
    assert paper_scale.padded_bins == 272


@pytest.mark.parametrize("cfg", [TINY, SMALL, ModelConfig(freq_bins=129, num_decoder_branches=3)])
def test_mask_shapes_equal_input_shape(cfg):
    params = init_params(cfg, 0)
    x = random_input(cfg, 16)
    masks = forward(params, x)
    assert len(masks) == 3
    assert all(m.shape == x.shape for m in masks)
    batched = forward(params, random_input(cfg, 16, batch=3))
    assert all(m.shape == (3, 2, cfg.freq_bins, 16) for m in batched)


def test_three_branches_differ_with_random_params():
    masks = forward(init_params(TINY, 0), random_input(TINY))
    assert not np.allclose(masks[0].data, masks[1].data)
    assert not np.allclose(masks[1].data, masks[2].data)


def test_zeroed_decoder_branch_outputs_its_final_bias():
    params = init_params(TINY, 0)
    for d in range(TINY.num_layers):
        params[f"noise1.dec{d}.weight"].data[...] = 0.0
    final_bias = np.array([0.37, -1.25])
    params["noise1.dec1.bias"].data[...] = final_bias
    mask = forward(params, random_input(TINY))[1].data
    # the last transposed conv with zero kernel emits only its bias at every position
    np.testing.assert_array_equal(mask[0], np.full(mask.shape[1:], final_bias[0]))
    np.testing.assert_array_equal(mask[1], np.full(mask.shape[1:], final_bias[1]))


def test_batched_forward_equals_per_item_forward():
    params = init_params(TINY, 3)
    x = random_input(TINY, 10, batch=2)
    batched = forward(params, x)[0].data
    for i in range(2):
        np.testing.assert_allclose(batched[i], forward(params, x[i])[0].data, atol=1e-12)


def test_forward_is_causal_in_time():
    params = init_params(TINY, 4)
    x = random_input(TINY, 12)
    y = x.copy()
    y[:, :, 8:] += 1.0
    a, b = forward(params, x)[0].data, forward(params, y)[0].data
    np.testing.assert_array_equal(a[:, :, :8], b[:, :, :8])
    assert not np.allclose(a[:, :, 8:], b[:, :, 8:])


def test_gru_makes_output_depend_on_frame_order():
    params = init_params(TINY, 5)
    x = random_input(TINY, 12)
    perm = np.random.default_rng(0).permutation(12)
    out = forward(params, x)[0].data
    out_perm = forward(params, x[:, :, perm])[0].data
    assert not np.allclose(out[:, :, perm], out_perm)


def test_input_validation():
    params = init_params(TINY, 0)
    with pytest.raises(InvalidInputError):
        forward(params, np.zeros((2, 31, 8)))
    with pytest.raises(InvalidInputError):
        forward(params, np.zeros((3, 32, 8)))
    with pytest.raises(InvalidInputError):
        forward(params, np.zeros((32, 8)))
    with pytest.raises(InvalidInputError):
        forward(init_params(ModelConfig(freq_bins=32), 0), np.zeros((2, 32, 8)), branches=("noise1",))


def _spec(cfg_stft, frames=12, seed=0):
    rng = np.random.default_rng(seed)
    k = cfg_stft.num_bins
    return ComplexSpectrogram(rng.standard_normal((k, frames)) + 1j * rng.standard_normal((k, frames)), 8000, cfg_stft)


def test_identity_params_return_input():
    st = StftConfig(62, 31)
    cfg = ModelConfig(num_layers=2, freq_bins=32)
    Y = _spec(st)
    np.testing.assert_array_equal(enhance(identity_params(cfg), Y).bins, Y.bins)


def test_zero_input_gives_zero_output():
    st = StftConfig(62, 31)
    Y = ComplexSpectrogram(np.zeros((32, 6)), 8000, st)
    assert not np.any(enhance(init_params(TINY, 0), Y).bins)


def test_enhance_ignores_noise_branches():
    st = StftConfig(62, 31)
    params = init_params(TINY, 0)
    Y = _spec(st)
    before = enhance(params, Y).bins
    rng = np.random.default_rng(9)
    for name in params.names():
        if name.startswith("noise"):
            params[name].data[...] = rng.standard_normal(params[name].shape) * 10
    np.testing.assert_array_equal(enhance(params, Y).bins, before)


def test_every_parameter_receives_gradient():
    params = init_params(TINY, 0)
    rng = np.random.default_rng(1)
    c = lambda: rng.standard_normal((2, 32, 8)) + 1j * rng.standard_normal((2, 32, 8))
    batch = MixtureBatch.from_parts(c(), c())
    Yc = ad.Complex.constant(batch.Y)
    outs = [mask_to_complex(m) * Yc for m in forward(params, features(batch.Y))]
    loss = unsupervised_loss(outs, batch, None, LossConfig(alpha_e=0.0, alpha_d=0.0))
    grads = params.grads(loss)
    assert all(np.any(g != 0) for g in grads.values()), [k for k, g in grads.items() if not np.any(g)]


def test_checkpoint_round_trip(tmp_path):
    params = init_params(SMALL, 7)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params, 42, {"note": "x"})
    loaded, step, meta = load_checkpoint(path)
    assert step == 42 and meta == {"note": "x"}
    assert loaded.config == SMALL
    for name in params.names():
        np.testing.assert_array_equal(loaded[name].data, params[name].data)


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(InvalidInputError):
        load_checkpoint(path)


def test_from_arrays_validation():
    arrays = init_params(TINY, 0).arrays()
    arrays["enc0.bias"] = np.zeros(5)
    with pytest.raises(InvalidInputError):
        ModelParams.from_arrays(TINY, arrays)
    arrays = init_params(TINY, 0).arrays()
    arrays["enc0.bias"][0] = np.nan
    with pytest.raises(InvalidInputError):
        ModelParams.from_arrays(TINY, arrays)
