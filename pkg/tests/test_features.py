import pytest
import torch

from hazedepth.features import RandomConvExtractor, build_extractor


@pytest.fixture(scope="module")
def ext():
    return RandomConvExtractor(seed=1234)


def test_unit_norm(ext):
    z = ext(torch.rand(5, 3, 32, 32))
    assert z.shape == (5, 128)
    assert torch.allclose((z * z).sum(1), torch.ones(5), atol=1e-6)


def test_continuity(ext):
    x = torch.rand(1, 3, 32, 32, dtype=torch.float64)
    e64 = RandomConvExtractor(seed=1234).double()
    diff = (e64(x + 1e-6) - e64(x)).norm()
    assert diff < 1e-3


def test_black_vs_white(ext):
    black, white = torch.zeros(1, 3, 32, 32), torch.ones(1, 3, 32, 32)
    assert float((ext(black) * ext(white)).sum()) < 0.99


def test_same_seed_same_embedding():
    x = torch.rand(2, 3, 16, 16)
    assert torch.equal(RandomConvExtractor(7)(x), RandomConvExtractor(7)(x))
    assert not torch.equal(RandomConvExtractor(7)(x), RandomConvExtractor(8)(x))


def test_frozen_but_input_differentiable(ext):
    assert ext.frozen
    x = torch.rand(1, 3, 16, 16, requires_grad=True)
    ext(x).sum().backward()
    assert x.grad.norm() > 0
    assert all(p.grad is None for p in ext.parameters())


def test_frozen_through_training_steps(ext):
    x = torch.rand(1, 3, 16, 16)
    before = ext(x).clone()
    model = torch.nn.Conv2d(3, 3, 1)
    opt = torch.optim.Adam(list(model.parameters()) + list(ext.parameters()), lr=0.1)
    for _ in range(3):
        opt.zero_grad()
        (ext(model(x)) ** 2).sum().backward()
        opt.step()
    ext.train()
    assert not ext.training
    assert torch.equal(ext(x), before)


def test_build_extractor():
    assert build_extractor("random-conv", 3).seed == 3
    with pytest.raises(FileNotFoundError):
        build_extractor("vgg19")
    with pytest.raises(ValueError):
        build_extractor("nope")
