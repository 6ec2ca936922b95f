"""PNG read/write helpers. Images are float arrays in [0,1], HWC, RGB."""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def to_uint16(depth: np.ndarray) -> np.ndarray:
    return np.round(np.clip(depth, 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_rgb(path, img: np.ndarray) -> None:
    arr = img if img.dtype == np.uint8 else to_uint8(img)
    if not cv2.imwrite(str(path), cv2.cvtColor(arr, cv2.COLOR_RGB2BGR)):
        raise OSError(f"failed to write {path}")


def read_rgb(path) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if arr is None:
        raise OSError(f"cannot read image {path}")
    return cv2.cvtColor(arr, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0


def write_depth16(path, depth: np.ndarray) -> None:
    """Write a normalized [0,1] depth map as a 16-bit single-channel PNG."""
    d = depth[..., 0] if depth.ndim == 3 else depth
    arr = d if d.dtype == np.uint16 else to_uint16(d)
    if not cv2.imwrite(str(path), arr):
        raise OSError(f"failed to write {path}")


def read_depth16(path) -> np.ndarray:
    """Read a 16-bit depth PNG back to an H×W×1 float array in [0,1]."""
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise OSError(f"cannot read depth {path}")
    if arr.ndim == 3:
        arr = arr[..., 0]
    scale = 65535.0 if arr.dtype == np.uint16 else 255.0
    return (arr.astype(np.float64) / scale)[..., None]


def read_depth_any(path) -> np.ndarray:
    """Depth from ``.npy`` (raw units) or PNG (normalized units), as H×W×1 float."""
    path = Path(path)
    if path.suffix == ".npy":
        d = np.load(path).astype(np.float64)
        return d[..., None] if d.ndim == 2 else d
    return read_depth16(path)


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
