"""Dataset loading, joint dihedral augmentation, and semi-supervised batching."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np
import torch

from .imageio import list_images, read_depth16, read_rgb
from .synthesis import ScatterParams, load_manifest

log = logging.getLogger(__name__)


class DataConfigError(ValueError):
    pass


@dataclass
class SampleRecord:
    hazy: np.ndarray  # H×W×3
    clean: np.ndarray  # H×W×3
    depth: np.ndarray  # H×W×1, normalized
    id: str
    params: ScatterParams | None = None
    depth_scale: float = 1.0
    origin: tuple[int, int] = (0, 0)  # top-left of the crop in the stored image

    def __post_init__(self):
        if not (self.hazy.shape == self.clean.shape and self.hazy.shape[:2] == self.depth.shape[:2]):
            raise ValueError(f"{self.id}: misaligned arrays {self.hazy.shape}, {self.clean.shape}, {self.depth.shape}")


@dataclass
class SemiBatch:
    labeled: list[SampleRecord]
    real_negatives: list[np.ndarray] = field(default_factory=list)
    index: int = 0  # global batch index in the stream

    def tensors(self, dtype=torch.float32):
        def stack(arrs):
            return torch.from_numpy(np.stack([a.transpose(2, 0, 1) for a in arrs])).to(dtype)

        out = {
            "hazy": stack([s.hazy for s in self.labeled]),
            "clean": stack([s.clean for s in self.labeled]),
            "depth": stack([s.depth for s in self.labeled]),
        }
        if self.real_negatives:
            out["negatives"] = stack(self.real_negatives)
        else:
            out["negatives"] = torch.zeros((0,) + tuple(out["hazy"].shape[1:]), dtype=dtype)
        return out


def load_dataset(dataset_dir, limit: int | None = None) -> list[SampleRecord]:
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    records = manifest["samples"][:limit] if limit is not None else manifest["samples"]
    out = []
    for rec in records:
        sid = rec["id"]
        out.append(SampleRecord(
            hazy=read_rgb(dataset_dir / "hazy" / f"{sid}.png"),
            clean=read_rgb(dataset_dir / "clean" / f"{sid}.png"),
            depth=read_depth16(dataset_dir / "depth" / f"{sid}.png"),
            id=sid,
            params=ScatterParams(rec["beta"], tuple(rec["airlight_rgb"])),
            depth_scale=rec["depth_scale"],
        ))
    return out


def load_real(real_dir) -> list[np.ndarray]:
    if real_dir is None:
        return []
    return [read_rgb(p) for p in list_images(real_dir)]


def dihedral(arr: np.ndarray, rotation: int, flip: bool) -> np.ndarray:
    """Horizontal flip (optional) then ``rotation`` clockwise quarter turns.

    One clockwise quarter turn of an S×S grid sends pixel (r, c) to (c, S-1-r).
    """
    if rotation % 2 and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"90/270 degree rotation needs a square crop, got {arr.shape[:2]}")
    if flip:
        arr = arr[:, ::-1]
    return np.ascontiguousarray(np.rot90(arr, k=-(rotation % 4), axes=(0, 1)))


def apply_dihedral(sample: SampleRecord, rotation: int, flip: bool) -> SampleRecord:
    return replace(sample, hazy=dihedral(sample.hazy, rotation, flip),
                   clean=dihedral(sample.clean, rotation, flip),
                   depth=dihedral(sample.depth, rotation, flip))


def augment(sample: SampleRecord, seed) -> SampleRecord:
    """One of the 8 dihedral transforms, drawn from ``seed``, applied to all three arrays."""
    k = int(np.random.default_rng(seed).integers(8))
    return apply_dihedral(sample, k % 4, bool(k // 4))


def crop_window(shape, size: int, seed) -> tuple[int, int]:
    H, W = shape[:2]
    if size > min(H, W):
        raise ValueError(f"crop {size} larger than image {H}×{W}")
    rng = np.random.default_rng(seed)
    return int(rng.integers(H - size + 1)), int(rng.integers(W - size + 1))


def random_crop(sample: SampleRecord, size: int, seed) -> SampleRecord:
    if size % 16:
        raise ValueError(f"crop size {size} must be divisible by 16")
    top, left = crop_window(sample.hazy.shape, size, seed)
    sl = (slice(top, top + size), slice(left, left + size))
    return replace(sample, hazy=sample.hazy[sl], clean=sample.clean[sl], depth=sample.depth[sl],
                   origin=(sample.origin[0] + top, sample.origin[1] + left))


class BatchStream:
    """Deterministic semi-supervised batch stream.

    Epoch ``e`` visits every labeled sample exactly once in an order drawn
    from ``(seed, e)``. Real negatives come from one endless sequence of
    shuffled passes over the pool, so the contents of batch ``b`` are a pure
    function of ``(seed, b)`` and a resumed run sees the same batches.
    Negatives are cropped but not rotated.
    """

    def __init__(self, labeled: list[SampleRecord], real: list[np.ndarray], batch_size: int,
                 ratio: float = 1.0, seed: int = 0, patch: int | None = None, augment: bool = True):
        if not labeled:
            raise DataConfigError("labeled set is empty")
        if batch_size < 1:
            raise DataConfigError("batch_size must be >= 1")
        self.labeled, self.real = labeled, real
        self.batch_size, self.seed, self.patch, self.do_augment = batch_size, seed, patch, augment
        self.ratio = ratio if real else 0.0
        if real and ratio > 0 and patch is not None and any(min(r.shape[:2]) < patch for r in real):
            raise DataConfigError(f"real negatives smaller than patch {patch}")
        self._neg_perms: dict[int, np.ndarray] = {}

    @property
    def batches_per_epoch(self) -> int:
        return -(-len(self.labeled) // self.batch_size)

    def _negative_indices(self, start: int, count: int) -> list[int]:
        n = len(self.real)
        out = []
        for pos in range(start, start + count):
            rnd, j = divmod(pos, n)
            if rnd not in self._neg_perms:
                self._neg_perms = {rnd: np.random.default_rng([self.seed, 1, rnd]).permutation(n)}
            out.append(int(self._neg_perms[rnd][j]))
        return out

    def negatives_per_batch(self, labeled_count: int) -> int:
        return int(round(self.ratio * labeled_count))

    def batch(self, index: int) -> SemiBatch:
        epoch, b = divmod(index, self.batches_per_epoch)
        order = np.random.default_rng([self.seed, 0, epoch]).permutation(len(self.labeled))
        chosen = order[b * self.batch_size:(b + 1) * self.batch_size]
        labeled = []
        for pos, i in enumerate(chosen):
            s = self.labeled[int(i)]
            key = [self.seed, 2, index, pos]
            if self.patch is not None:
                s = random_crop(s, self.patch, key + [0])
            if self.do_augment:
                s = augment(s, key + [1])
            labeled.append(s)
        negatives = []
        k = self.negatives_per_batch(len(labeled))
        if k:
            # offset into the negative stream: full batches before this one
            start = self._negatives_before(index)
            for j, ni in enumerate(self._negative_indices(start, k)):
                img = self.real[ni]
                if self.patch is not None:
                    top, left = crop_window(img.shape, self.patch, [self.seed, 3, index, j])
                    img = img[top:top + self.patch, left:left + self.patch]
                negatives.append(img)
        return SemiBatch(labeled=labeled, real_negatives=negatives, index=index)

    def _negatives_before(self, index: int) -> int:
        per_epoch_sizes = [min(self.batch_size, len(self.labeled) - b * self.batch_size)
                           for b in range(self.batches_per_epoch)]
        counts = [self.negatives_per_batch(c) for c in per_epoch_sizes]
        epoch, b = divmod(index, self.batches_per_epoch)
        return epoch * sum(counts) + sum(counts[:b])

    def epoch(self, epoch: int) -> Iterator[SemiBatch]:
        for b in range(self.batches_per_epoch):
            yield self.batch(epoch * self.batches_per_epoch + b)


def make_batches(labeled_dir, real_dir, batch_size: int, ratio: float = 1.0, seed: int = 0,
                 patch: int | None = None, epochs: int = 1, augment: bool = True) -> Iterator[SemiBatch]:
    """Stream of SemiBatch over ``epochs`` epochs from on-disk datasets."""
    labeled = load_dataset(labeled_dir)
    real = load_real(real_dir)
    if not real:
        log.info("no real negatives found; contrastive term will be zero")
    stream = BatchStream(labeled, real, batch_size, ratio, seed, patch, augment)
    for e in range(epochs):
        yield from stream.epoch(e)
