# Haze synthesis walkthrough
#
# A hazy image is a blend of the clean scene and a colored airlight, weighted
# by how much light survives the trip through the fog: t = exp(-beta * depth).
# This script builds one procedural scene, hazes it, inverts it again, and then
# writes a small paired dataset to disk.

import tempfile
from pathlib import Path

import numpy as np

from hazedepth.config import AirlightConfig
from hazedepth.scenes import make_scene, write_corpus
from hazedepth.synthesis import (compose_haze, generate_dataset, invert_haze, load_manifest,
                                 sample_scatter_params, transmission_from_depth)

# A scene: sky band, ground plane, a few boxes. Depth is in arbitrary units,
# so normalize it before choosing beta.
clean, depth = make_scene(np.random.default_rng(0), size=64)
depth = depth / depth.max()
print("clean", clean.shape, "depth range", depth.min().round(3), depth.max())

# Draw a varicolored airlight and a scattering coefficient from one seed.
params = sample_scatter_params(seed=7, config=AirlightConfig())
print("airlight RGB", np.round(params.airlight, 3), "beta", round(params.beta, 3))

t = transmission_from_depth(depth, params.beta)
hazy = compose_haze(clean, t, params.airlight)
print("transmission in", t.min().round(3), "to", t.max().round(3))

# Knowing t and A, the blend can be undone exactly.
recovered = invert_haze(hazy, t, params.airlight, clip=False)
print("round-trip max error", np.abs(recovered - clean).max())

# A paired dataset: hazy/, clean/, depth/ (16-bit) and meta/manifest.json.
root = Path(tempfile.mkdtemp())
write_corpus(root / "corpus", count=4, size=64, seed=0)
generate_dataset(root / "corpus", None, count=4, seed=0, out=root / "ds")
for rec in load_manifest(root / "ds")["samples"]:
    print(rec["id"], "beta", round(rec["beta"], 3), "airlight", np.round(rec["airlight_rgb"], 2))
print("dataset written to", root / "ds")
