"""Varicolored haze synthesis with the atmospheric scattering model.

A hazy observation is ``I = J * t + A * (1 - t)`` with transmission
``t = exp(-beta * d)``. Airlight ``A`` is one RGB color per image.
"""
from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import AirlightConfig
from .imageio import list_images, read_depth16, read_depth_any, read_rgb, to_uint8, to_uint16, write_depth16, write_rgb

T_MIN = 0.05
MANIFEST_VERSION = 1


class ParameterDomainError(ValueError):
    pass


class DegenerateTransmissionError(ValueError):
    pass


class CorpusIntegrityError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScatterParams:
    beta: float
    airlight: tuple[float, float, float]

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterDomainError(f"beta must be > 0, got {self.beta}")
        if len(self.airlight) != 3 or any(not 0.0 <= a <= 1.0 for a in self.airlight):
            raise ParameterDomainError(f"airlight must be a 3-vector in [0,1], got {self.airlight}")


@dataclass
class HazePair:
    hazy: np.ndarray
    clean: np.ndarray
    depth: np.ndarray
    transmission: np.ndarray
    params: ScatterParams


def transmission_from_depth(depth, beta: float) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if not beta > 0:
        raise ParameterDomainError(f"beta must be > 0, got {beta}")
    if np.any(depth < 0):
        raise ParameterDomainError("depth must be non-negative")
    return np.exp(-beta * depth)


def _as_t(transmission: np.ndarray, shape) -> np.ndarray:
    t = np.asarray(transmission, dtype=np.float64)
    if t.ndim == 2:
        t = t[..., None]
    if t.shape[:2] != tuple(shape[:2]) or t.shape[-1] != 1:
        raise ValueError(f"transmission shape {t.shape} does not match image {shape}")
    return t


def _as_airlight(airlight, shape) -> np.ndarray:
    # a 3-vector broadcasts; an H×W×3 field is accepted as-is
    a = np.asarray(airlight, dtype=np.float64)
    if a.shape == (3,) or a.shape == tuple(shape):
        return a
    raise ValueError(f"airlight shape {a.shape} must be (3,) or {tuple(shape)}")


def compose_haze(clean, transmission, airlight, clip: bool = True) -> np.ndarray:
    """Apply the scattering model to a clean image."""
    clean = np.asarray(clean, dtype=np.float64)
    if clean.ndim != 3 or clean.shape[-1] != 3:
        raise ValueError(f"clean image must be H×W×3, got {clean.shape}")
    t = _as_t(transmission, clean.shape)
    a = _as_airlight(airlight, clean.shape)
    out = clean * t + a * (1.0 - t)
    return np.clip(out, 0.0, 1.0) if clip else out


def invert_haze(hazy, transmission, airlight, t_min: float = T_MIN, clip: bool = True) -> np.ndarray:
    """Recover the clean image given known transmission and airlight."""
    hazy = np.asarray(hazy, dtype=np.float64)
    if hazy.ndim != 3 or hazy.shape[-1] != 3:
        raise ValueError(f"hazy image must be H×W×3, got {hazy.shape}")
    t = _as_t(transmission, hazy.shape)
    if np.any(t < t_min):
        raise DegenerateTransmissionError(f"transmission below floor {t_min} (min {t.min():.3g})")
    a = _as_airlight(airlight, hazy.shape)
    out = (hazy - a * (1.0 - t)) / t
    return np.clip(out, 0.0, 1.0) if clip else out


def sample_scatter_params(seed: int, config: AirlightConfig | None = None) -> ScatterParams:
    config = config or AirlightConfig()
    rng = np.random.default_rng(seed)
    h = rng.uniform(*config.hue_range)
    s = rng.uniform(*config.saturation_range)
    v = rng.uniform(*config.value_range)
    beta = rng.uniform(*config.beta_range)
    rgb = colorsys.hsv_to_rgb(h, s, v)
    return ScatterParams(beta=float(beta), airlight=tuple(float(min(max(c, 0.0), 1.0)) for c in rgb))


def synthesize(clean, depth, params: ScatterParams) -> HazePair:
    t = transmission_from_depth(depth, params.beta)
    hazy = compose_haze(clean, t, params.airlight)
    return HazePair(hazy=hazy, clean=np.asarray(clean, dtype=np.float64),
                    depth=np.asarray(depth, dtype=np.float64), transmission=t, params=params)


def sample_seed(seed: int, index: int) -> int:
    """Per-sample RNG seed derived from (seed, index), independent of schedule."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint32)[0])


def _corpus_pairs(corpus_dir: Path) -> list[tuple[Path, Path]]:
    clean_dir, depth_dir = corpus_dir / "clean", corpus_dir / "depth"
    pairs = []
    for img in list_images(clean_dir):
        partners = [depth_dir / (img.stem + s) for s in (".npy", ".png")]
        found = next((p for p in partners if p.exists()), None)
        if found is None:
            raise CorpusIntegrityError(f"no depth map for {img.name} under {depth_dir}")
        pairs.append((img, found))
    return pairs


def recompose_sample(dataset_dir, record: dict) -> np.ndarray:
    """Rebuild the 8-bit hazy image of one manifest record from stored clean + depth."""
    dataset_dir = Path(dataset_dir)
    clean = read_rgb(dataset_dir / "clean" / f"{record['id']}.png")
    depth = read_depth16(dataset_dir / "depth" / f"{record['id']}.png")
    params = ScatterParams(record["beta"], tuple(record["airlight_rgb"]))
    return to_uint8(synthesize(clean, depth, params).hazy)


def generate_dataset(corpus_dir, config: AirlightConfig | None, count: int, seed: int, out) -> dict:
    """Write a paired hazy/clean/depth dataset and return its manifest.

    Corpus layout is ``clean/<name>.png`` with ``depth/<name>.npy`` (raw units)
    or ``depth/<name>.png``. Samples cycle through the corpus when ``count``
    exceeds its size. The hazy image is composed from the quantized clean and
    depth that are written to disk, so recomposing from stored files is exact.
    """
    config = config or AirlightConfig()
    corpus_dir, out = Path(corpus_dir), Path(out)
    pairs = _corpus_pairs(corpus_dir) if count > 0 else []
    if count > 0 and not pairs:
        raise CorpusIntegrityError(f"no clean images under {corpus_dir / 'clean'}")
    for sub in ("hazy", "clean", "depth", "meta"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    samples = []
    for i in range(count):
        img_path, depth_path = pairs[i % len(pairs)]
        clean = read_rgb(img_path)
        depth = read_depth_any(depth_path)
        if depth.shape[:2] != clean.shape[:2]:
            raise CorpusIntegrityError(f"{img_path.name}: depth {depth.shape} vs image {clean.shape}")
        if np.any(depth < 0):
            raise CorpusIntegrityError(f"{depth_path.name}: negative depth")
        scale = float(depth.max()) or 1.0
        depth_q = to_uint16(depth / scale)
        clean_q = to_uint8(clean)

        s = sample_seed(seed, i)
        params = sample_scatter_params(s, config)
        sid = f"{i:06d}"
        write_rgb(out / "clean" / f"{sid}.png", clean_q)
        write_depth16(out / "depth" / f"{sid}.png", depth_q)
        hazy = synthesize(clean_q / 255.0, depth_q / 65535.0, params).hazy
        write_rgb(out / "hazy" / f"{sid}.png", to_uint8(hazy))
        samples.append({
            "id": sid,
            "source": img_path.stem,
            "beta": params.beta,
            "airlight_rgb": list(params.airlight),
            "depth_scale": scale,
            "seed": s,
        })
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "count": count,
        "airlight_config": {k: list(v) for k, v in asdict(config).items()},
        "samples": samples,
    }
    (out / "meta" / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "meta" / "manifest.json"
    if not path.exists():
        raise CorpusIntegrityError(f"missing manifest {path}")
    return json.loads(path.read_text())
