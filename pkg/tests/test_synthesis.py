import json

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hazedepth.config import AirlightConfig
from hazedepth.imageio import read_rgb, to_uint8
from hazedepth.synthesis import (
    CorpusIntegrityError,
    DegenerateTransmissionError,
    ParameterDomainError,
    compose_haze,
    generate_dataset,
    invert_haze,
    load_manifest,
    recompose_sample,
    sample_scatter_params,
    transmission_from_depth,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_transmission_zero_depth():
    t = transmission_from_depth(np.zeros((4, 5, 1)), 3.7)
    assert np.all(t == 1.0)


def test_transmission_tiny_beta():
    t = transmission_from_depth(np.full((3, 3, 1), 10.0), 1e-12)
    assert np.allclose(t, 1.0, atol=1e-9, rtol=0)


def test_transmission_value():
    expected = float(mpmath.exp(-mpmath.mpf("0.5") * 2))
    t = transmission_from_depth(np.array([[[2.0]]]), 0.5)
    assert abs(t.item() - expected) < 1e-12
    assert abs(t.item() - 0.36787944) < 1e-8


@pytest.mark.parametrize("depth,beta", [(-0.1, 1.0), (1.0, 0.0), (1.0, -1.0)])
def test_transmission_domain_errors(depth, beta):
    with pytest.raises(ParameterDomainError):
        transmission_from_depth(np.full((2, 2, 1), depth), beta)


@given(arrays(np.float64, (6,), elements=st.floats(0, 50)), st.floats(1e-3, 5))
def test_transmission_monotone(depths, beta):
    d = np.sort(depths)
    t = transmission_from_depth(d, beta)
    assert np.all(np.diff(t) <= 0)


def test_compose_identity_and_pure_airlight(rng):
    J = rng.random((5, 6, 3))
    A = np.array([0.2, 0.7, 0.9])
    assert np.array_equal(compose_haze(J, np.ones((5, 6, 1)), A), J)
    assert np.array_equal(compose_haze(J, np.zeros((5, 6, 1)), A), np.broadcast_to(A, J.shape))


def test_compose_scalar_example():
    out = compose_haze(np.full((1, 1, 3), 0.8), np.full((1, 1, 1), 0.5), [0.6, 0.6, 0.6])
    assert np.allclose(out, 0.8 * 0.5 + 0.6 * 0.5, atol=1e-15)
    assert np.allclose(out, 0.70)


def test_compose_accepts_airlight_field(rng):
    J = rng.random((4, 4, 3))
    A = rng.random((4, 4, 3))
    t = rng.random((4, 4, 1))
    assert np.allclose(compose_haze(J, t, A), J * t + A * (1 - t))


def test_compose_shape_mismatch():
    with pytest.raises(ValueError):
        compose_haze(np.zeros((4, 4, 3)), np.ones((4, 5, 1)), [0, 0, 0])


@given(arrays(np.float64, (3, 4, 3), elements=st.floats(-2, 3)),
       arrays(np.float64, (3, 4, 1), elements=unit),
       arrays(np.float64, (3,), elements=unit))
def test_compose_range_safety(J, t, A):
    out = compose_haze(J, t, A)
    assert out.min() >= 0 and out.max() <= 1


def test_invert_examples():
    A = np.array([0.6, 0.6, 0.6])
    out = invert_haze(np.full((1, 1, 3), 0.70), np.full((1, 1, 1), 0.5), A)
    assert np.allclose(out, (0.70 - 0.30) / 0.5)
    assert np.allclose(out, 0.80)
    same = invert_haze(np.broadcast_to(A, (2, 2, 3)), np.ones((2, 2, 1)), A)
    assert np.array_equal(same, np.broadcast_to(A, (2, 2, 3)))


def test_invert_floor():
    with pytest.raises(DegenerateTransmissionError):
        invert_haze(np.zeros((2, 2, 3)), np.full((2, 2, 1), 0.04), [0.5] * 3)
    invert_haze(np.zeros((2, 2, 3)), np.full((2, 2, 1), 0.04), [0.5] * 3, t_min=0.01)


@settings(max_examples=200)
@given(arrays(np.float64, (4, 4, 3), elements=unit),
       arrays(np.float64, (4, 4, 1), elements=st.floats(0.05, 1.0)),
       arrays(np.float64, (3,), elements=unit))
def test_round_trip(J, t, A):
    hazy = compose_haze(J, t, A, clip=False)
    back = invert_haze(hazy, t, A, clip=False)
    assert np.max(np.abs(back - J)) < 1e-6


def test_sample_params_degenerate_ranges():
    import colorsys

    cfg = AirlightConfig(hue_range=(0.3, 0.3), saturation_range=(0.5, 0.5), value_range=(0.8, 0.8), beta_range=(0.7, 0.7))
    for seed in (0, 1, 99):
        p = sample_scatter_params(seed, cfg)
        assert p.beta == 0.7
        assert p.airlight == tuple(colorsys.hsv_to_rgb(0.3, 0.5, 0.8))


def test_sample_params_deterministic():
    assert sample_scatter_params(42) == sample_scatter_params(42)
    assert sample_scatter_params(42) != sample_scatter_params(43)


def test_sample_params_beta_mean():
    cfg = AirlightConfig(beta_range=(0.4, 1.2))
    betas = np.array([sample_scatter_params(s, cfg).beta for s in range(10_000)])
    assert abs(betas.mean() - 0.8) < 0.02
    assert betas.min() >= 0.4 and betas.max() <= 1.2


def test_airlight_config_validation():
    from hazedepth.config import ConfigError

    with pytest.raises(ConfigError):
        AirlightConfig(hue_range=(0.6, 0.2))
    with pytest.raises(ConfigError):
        AirlightConfig(value_range=(0.0, 0.5))
    with pytest.raises(ConfigError):
        AirlightConfig(beta_range=(0.0, 1.0))


def test_generate_empty(tmp_path, toy_data):
    m = generate_dataset(toy_data["corpus"], None, 0, 1, tmp_path / "out")
    assert m["samples"] == []
    assert not list((tmp_path / "out" / "hazy").iterdir())
    assert load_manifest(tmp_path / "out")["count"] == 0


def test_generate_deterministic(tmp_path, toy_data):
    generate_dataset(toy_data["corpus"], None, 4, 7, tmp_path / "a")
    generate_dataset(toy_data["corpus"], None, 4, 7, tmp_path / "b")
    for sub in ("hazy", "clean", "depth", "meta"):
        fa = sorted((tmp_path / "a" / sub).iterdir())
        fb = sorted((tmp_path / "b" / sub).iterdir())
        assert [f.name for f in fa] == [f.name for f in fb]
        assert all(x.read_bytes() == y.read_bytes() for x, y in zip(fa, fb))


def test_generate_recompose_exact(toy_data):
    manifest = load_manifest(toy_data["train"])
    for rec in manifest["samples"]:
        stored = to_uint8(read_rgb(toy_data["train"] / "hazy" / f"{rec['id']}.png"))
        assert np.array_equal(recompose_sample(toy_data["train"], rec), stored)
        assert set(rec) >= {"beta", "airlight_rgb", "depth_scale", "seed"}


def test_generate_missing_depth(tmp_path, toy_data):
    import shutil

    corpus = tmp_path / "corpus"
    shutil.copytree(toy_data["corpus"], corpus)
    next((corpus / "depth").iterdir()).unlink()
    with pytest.raises(CorpusIntegrityError):
        generate_dataset(corpus, None, 2, 0, tmp_path / "out")


def test_manifest_is_json(toy_data):
    data = json.loads((toy_data["train"] / "meta" / "manifest.json").read_text())
    assert data["count"] == len(data["samples"]) == 8
