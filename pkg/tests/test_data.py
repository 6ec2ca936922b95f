import numpy as np
import pytest

from hazedepth.data import (
    BatchStream,
    DataConfigError,
    SampleRecord,
    apply_dihedral,
    augment,
    load_dataset,
    load_real,
    make_batches,
    random_crop,
)
from hazedepth.imageio import to_uint8
from hazedepth.synthesis import synthesize


def _grid_sample(S=4):
    base = np.arange(S * S, dtype=np.float64).reshape(S, S) / (S * S)
    return SampleRecord(hazy=np.stack([base] * 3, -1), clean=np.stack([base + 1] * 3, -1),
                        depth=(base + 2)[..., None], id="grid")


def test_identity_transform():
    s = _grid_sample()
    t = apply_dihedral(s, 0, False)
    assert all(np.array_equal(getattr(t, f), getattr(s, f)) for f in ("hazy", "clean", "depth"))


def test_four_rotations_identity():
    s = _grid_sample()
    t = s
    for _ in range(4):
        t = apply_dihedral(t, 1, False)
    assert np.array_equal(t.hazy, s.hazy) and np.array_equal(t.depth, s.depth)


def test_rotation_index_mapping():
    S = 4
    s = _grid_sample(S)
    t = apply_dihedral(s, 1, False)
    for r in range(S):
        for c in range(S):
            for f in ("hazy", "clean", "depth"):
                assert np.array_equal(getattr(t, f)[c, S - 1 - r], getattr(s, f)[r, c])


def test_augment_deterministic_and_covers_group():
    s = _grid_sample()
    assert np.array_equal(augment(s, 5).hazy, augment(s, 5).hazy)
    seen = {augment(s, seed).hazy.tobytes() for seed in range(200)}
    assert len(seen) == 8


def test_non_square_rotation_error():
    s = SampleRecord(np.zeros((4, 6, 3)), np.zeros((4, 6, 3)), np.zeros((4, 6, 1)), "r")
    apply_dihedral(s, 2, True)
    with pytest.raises(ValueError):
        apply_dihedral(s, 1, False)


def test_crop_identity_and_determinism(toy_data):
    s = load_dataset(toy_data["train"])[0]
    full = random_crop(s, 32, 0)
    assert np.array_equal(full.hazy, s.hazy)
    big = SampleRecord(np.random.rand(48, 40, 3), np.random.rand(48, 40, 3), np.random.rand(48, 40, 1), "b")
    a, b = random_crop(big, 32, 11), random_crop(big, 32, 11)
    assert a.origin == b.origin
    top, left = a.origin
    assert np.array_equal(a.hazy, big.hazy[top:top + 32, left:left + 32])
    assert np.array_equal(a.depth, big.depth[top:top + 32, left:left + 32])
    with pytest.raises(ValueError):
        random_crop(big, 64, 0)
    with pytest.raises(ValueError):
        random_crop(big, 24, 0)


def test_augmentation_keeps_physics(toy_data):
    for s in load_dataset(toy_data["train"])[:4]:
        for seed in range(8):
            t = augment(s, seed)
            hazy = to_uint8(synthesize(t.clean, t.depth, t.params).hazy)
            assert np.array_equal(hazy, to_uint8(t.hazy))


def test_stream_ratio_and_sizes(toy_data):
    labeled, real = load_dataset(toy_data["train"]), load_real(toy_data["real"])
    stream = BatchStream(labeled, real, batch_size=4, ratio=1, seed=0, patch=32)
    b = stream.batch(0)
    assert len(b.labeled) == 4 and len(b.real_negatives) == 4
    t = b.tensors()
    assert t["hazy"].shape == (4, 3, 32, 32) and t["depth"].shape == (4, 1, 32, 32)
    assert t["negatives"].shape == (4, 3, 32, 32)


def test_stream_empty_real_dir(toy_data, tmp_path):
    batches = list(make_batches(toy_data["train"], tmp_path, batch_size=3, ratio=1, seed=0))
    assert all(len(b.real_negatives) == 0 for b in batches)
    assert batches[0].tensors()["negatives"].shape[0] == 0


def test_stream_epoch_coverage(toy_data):
    labeled = load_dataset(toy_data["train"])
    stream = BatchStream(labeled, [], batch_size=3, seed=1, augment=False)
    assert stream.batches_per_epoch == 3
    for epoch in range(3):
        ids = [s.id for b in stream.epoch(epoch) for s in b.labeled]
        assert sorted(ids) == sorted(s.id for s in labeled)


def test_stream_deterministic(toy_data):
    def run():
        return [(tuple(s.id for s in b.labeled), b.labeled[0].hazy.tobytes(),
                 tuple(n.tobytes() for n in b.real_negatives))
                for b in make_batches(toy_data["train"], toy_data["real"], 4, 1.0, seed=9, patch=16, epochs=2)]
    assert run() == run()


def test_negatives_without_replacement(toy_data):
    labeled, real = load_dataset(toy_data["train"]), load_real(toy_data["real"])
    stream = BatchStream(labeled, real, batch_size=4, ratio=1, seed=0)
    used = []
    for i in range(2):  # 2 batches × 4 negatives = one full pass over 8 images
        used += [n.tobytes() for n in stream.batch(i).real_negatives]
    assert len(set(used)) == len(real)


def test_batch_is_pure_function_of_index(toy_data):
    labeled, real = load_dataset(toy_data["train"]), load_real(toy_data["real"])
    a = BatchStream(labeled, real, 4, 1, seed=2, patch=16)
    b = BatchStream(labeled, real, 4, 1, seed=2, patch=16)
    seq = [a.batch(i) for i in range(7)]
    late = b.batch(6)
    assert [s.id for s in late.labeled] == [s.id for s in seq[6].labeled]
    assert all(np.array_equal(x, y) for x, y in zip(late.real_negatives, seq[6].real_negatives))


def test_empty_labeled_error():
    with pytest.raises(DataConfigError):
        BatchStream([], [], 2)
