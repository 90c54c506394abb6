import json

import numpy as np
import pytest
import torch

from radsynth.checkpoint import (
    SCHEMA_VERSION,
    load_checkpoint,
    restore_module,
    save_checkpoint,
)
from radsynth.denoiser import ToyDenoiser
from radsynth.errors import DataError
from radsynth.sr import DiscriminatorConfig, UNetDiscriminator


def small_denoiser(seed=0, widths=(4, 8)):
    torch.manual_seed(seed)
    return ToyDenoiser(total_steps=50, widths=widths)


def test_round_trip_is_exact(tmp_path):
    model = small_denoiser(seed=1)
    path = tmp_path / "weights.npz"
    save_checkpoint(path, "denoiser", model, meta={"T": "50"})
    ckpt = load_checkpoint(path)
    fresh = small_denoiser(seed=2)
    restore_module(fresh, ckpt.live)
    for (ka, va), (kb, vb) in zip(model.state_dict().items(),
                                  fresh.state_dict().items()):
        assert ka == kb
        assert torch.equal(va, vb)


def test_header_fields(tmp_path):
    model = small_denoiser()
    path = tmp_path / "weights.npz"
    save_checkpoint(path, "denoiser", model, meta={"seed": "7"})
    ckpt = load_checkpoint(path)
    assert ckpt.kind == "denoiser"
    assert ckpt.version == SCHEMA_VERSION
    assert ckpt.meta == {"seed": "7"}
    assert ckpt.ema is None


def test_ema_weights_round_trip(tmp_path):
    live = small_denoiser(seed=3)
    ema = small_denoiser(seed=4)
    path = tmp_path / "weights.npz"
    save_checkpoint(path, "denoiser", live, ema=ema)
    ckpt = load_checkpoint(path)
    assert ckpt.ema is not None
    for name, tensor in ema.state_dict().items():
        assert np.array_equal(ckpt.ema[name], tensor.numpy())


def test_buffers_survive_round_trip(tmp_path):
    torch.manual_seed(5)
    disc = UNetDiscriminator(DiscriminatorConfig(base_channels=4, depth=2))
    with torch.no_grad():
        disc(torch.randn(1, 1, 8, 8))  # move u, v off their init
    path = tmp_path / "disc.npz"
    save_checkpoint(path, "sr-discriminator", disc)
    torch.manual_seed(6)
    fresh = UNetDiscriminator(DiscriminatorConfig(base_channels=4, depth=2))
    restore_module(fresh, load_checkpoint(path).live)
    assert torch.equal(fresh.stem.u, disc.stem.u)


def test_no_tmp_file_left_behind(tmp_path):
    save_checkpoint(tmp_path / "w.npz", "denoiser", small_denoiser())
    assert [p.name for p in tmp_path.iterdir()] == ["w.npz"]


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "absent.npz")


def test_plain_npz_rejected(tmp_path):
    path = tmp_path / "plain.npz"
    np.savez(path, a=np.zeros(3))
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_unsupported_version(tmp_path):
    header = {"version": SCHEMA_VERSION + 1, "kind": "x", "meta": {},
              "shapes": {}, "has_ema": False}
    path = tmp_path / "future.npz"
    np.savez(path, __header__=np.frombuffer(json.dumps(header).encode(),
                                            dtype=np.uint8))
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_shape_tamper_detected(tmp_path):
    model = small_denoiser()
    path = tmp_path / "w.npz"
    save_checkpoint(path, "denoiser", model)
    with np.load(path) as archive:
        arrays = {k: archive[k] for k in archive.files}
    name = next(k for k in arrays if k.startswith("live.") and arrays[k].ndim >= 1)
    arrays[name] = arrays[name][..., :-1]
    np.savez(path, **arrays)
    with pytest.raises(DataError):
        load_checkpoint(path)


def test_restore_rejects_foreign_weights(tmp_path):
    path = tmp_path / "w.npz"
    save_checkpoint(path, "denoiser", small_denoiser())
    ckpt = load_checkpoint(path)
    other = UNetDiscriminator(DiscriminatorConfig(base_channels=4, depth=2))
    with pytest.raises(DataError):
        restore_module(other, ckpt.live)


def test_restore_rejects_wrong_widths(tmp_path):
    path = tmp_path / "w.npz"
    save_checkpoint(path, "denoiser", small_denoiser(widths=(4, 8)))
    ckpt = load_checkpoint(path)
    wider = small_denoiser(widths=(8, 16))
    with pytest.raises(DataError):
        restore_module(wider, ckpt.live)
