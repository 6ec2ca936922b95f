import pytest
import torch

from _fd import analytic_grad, directional_check, numeric_grad, rel_err
from hazedepth.config import ConfigError, EncoderConfig
from hazedepth.encoder import CouplingEncoder, MSFMBlock, PatchMerge, StructuralError, encode


def test_msfm_zero_projection_is_identity():
    blk = MSFMBlock(8)
    with torch.no_grad():
        blk.proj.weight.zero_()
        blk.proj.bias.zero_()
    x = torch.randn(2, 8, 16, 16)
    assert torch.equal(blk(x), x)


@pytest.mark.parametrize("kernels", [[3], [3, 5], [3, 5, 7], [1, 9]])
def test_msfm_shape(kernels):
    blk = MSFMBlock(6, expansion=2, kernel_sizes=kernels)
    assert blk(torch.randn(1, 6, 16, 16)).shape == (1, 6, 16, 16)


def test_msfm_channel_mismatch():
    with pytest.raises(StructuralError):
        MSFMBlock(8)(torch.randn(1, 4, 8, 8))


def test_msfm_gradient_matches_fd():
    torch.manual_seed(0)
    blk = MSFMBlock(3, expansion=2, kernel_sizes=(3, 5)).double()
    x = torch.randn(1, 3, 4, 4, dtype=torch.float64)
    f = lambda z: blk(z).sum()
    assert rel_err(analytic_grad(f, x), numeric_grad(f, x)) < 1e-6


def test_msfm_gradient_float32():
    torch.manual_seed(1)
    blk = MSFMBlock(3, kernel_sizes=(3, 5))
    x = torch.randn(1, 3, 4, 4)
    f = lambda z: (blk(z) ** 2).mean()
    assert rel_err(analytic_grad(f, x), numeric_grad(f, x, h=1e-2)) < 1e-3


def test_patch_merge_shapes():
    pm = PatchMerge(5, 7)
    assert pm(torch.randn(1, 5, 32, 32)).shape == (1, 7, 16, 16)
    pm2 = PatchMerge(7, 3)
    assert pm2(pm(torch.randn(1, 5, 64, 64))).shape == (1, 3, 16, 16)


def test_patch_merge_all_ones_kernel():
    # 3×3 window, stride 2, pad 1 on a 4×4 grid: output (i, j) covers input
    # rows 2i-1..2i+1; only output (1, 1) has a full 3×3 window inside the grid
    c, cin = 0.5, 2
    pm = PatchMerge(cin, 1)
    with torch.no_grad():
        pm.conv.weight.fill_(1.0)
        pm.conv.bias.zero_()
    out = pm(torch.full((1, cin, 4, 4), c))[0, 0]
    counts = torch.tensor([[4.0, 6.0], [6.0, 9.0]])  # window overlap with the grid
    assert torch.allclose(out, c * counts * cin)
    assert out[1, 1].item() == pytest.approx(c * 9 * cin)


def test_patch_merge_odd_dims():
    with pytest.raises(StructuralError):
        PatchMerge(3, 3)(torch.randn(1, 3, 5, 6))


@pytest.mark.parametrize("size", [64, 128])
def test_encode_stage_schedule(size):
    cfg = EncoderConfig(channels=[8, 16, 24, 32])
    enc = CouplingEncoder(cfg)
    stem, pyr = enc(torch.rand(1, 3, size, size))
    assert stem.shape == (1, 8, size, size)
    assert [tuple(p.shape[1:]) for p in pyr] == [
        (c, size // 2 ** (i + 1), size // 2 ** (i + 1)) for i, c in enumerate(cfg.channels)
    ]


def test_encode_256_final_stage():
    enc = CouplingEncoder(EncoderConfig(channels=[4, 8, 12, 16], blocks_per_stage=1))
    pyr = encode(torch.rand(3, 256, 256), enc)
    assert pyr[-1].shape == (16, 16, 16)


def test_encode_rejects_indivisible():
    enc = CouplingEncoder(EncoderConfig(channels=[4, 8, 12, 16]))
    with pytest.raises(StructuralError):
        enc(torch.rand(1, 3, 40, 48))


def test_batched_equals_looped():
    torch.manual_seed(0)
    enc = CouplingEncoder(EncoderConfig(channels=[4, 8, 12, 16]))
    x = torch.rand(3, 3, 32, 32)
    _, batched = enc(x)
    for b in range(3):
        _, single = enc(x[b:b + 1])
        for pb, ps in zip(batched, single):
            assert (pb[b] - ps[0]).abs().max() < 1e-6


def test_batch_permutation():
    torch.manual_seed(0)
    enc = CouplingEncoder(EncoderConfig(channels=[4, 8, 12, 16]))
    x = torch.rand(4, 3, 32, 32)
    perm = torch.tensor([2, 0, 3, 1])
    _, a = enc(x)
    _, b = enc(x[perm])
    for pa, pb in zip(a, b):
        assert torch.allclose(pa[perm], pb, atol=1e-6)


def test_zeroed_msfm_reduces_to_merge_chain():
    enc = CouplingEncoder(EncoderConfig(channels=[4, 8, 12, 16]))
    with torch.no_grad():
        for stage in enc.stages:
            for blk in stage:
                blk.proj.weight.zero_()
                blk.proj.bias.zero_()
    x = torch.rand(1, 3, 32, 32)
    stem, pyr = enc(x)
    h = enc.stem(x)
    for down, p in zip(enc.downs, pyr):
        h = down(h)
        assert torch.equal(h, p)


def test_encoder_input_gradient_fd():
    torch.manual_seed(0)
    enc = CouplingEncoder(EncoderConfig(channels=[2, 3, 4, 5], blocks_per_stage=1, kernel_sizes=[3])).double()
    x = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    f = lambda z: sum((p ** 2).sum() for p in enc(z)[1])
    assert directional_check(f, x, directions=4) < 1e-6


# 8×8 crops are below the 16-pixel divisibility floor of a 4-stage encoder;
# a 3-stage encoder exercises the same gradient path at that size.
def test_encoder_gradient_8x8_three_stages():
    torch.manual_seed(0)
    cfg = EncoderConfig(stages=3, channels=[2, 3, 4], blocks_per_stage=1, kernel_sizes=[3])
    enc = CouplingEncoder(cfg).double()
    x = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    f = lambda z: sum(p.sum() for p in enc(z)[1])
    assert rel_err(analytic_grad(f, x), numeric_grad(f, x)) < 1e-6


@pytest.mark.parametrize("kwargs", [dict(channels=[8, 8, 16, 32]), dict(kernel_sizes=[3, 4]), dict(channels=[8, 16])])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EncoderConfig(**kwargs)
