# A short training run on a desk-sized synthetic set
#
# Builds 16 procedural pairs plus a pool of stand-in "real" hazy negatives from
# a separate airlight band, trains the toy preset for a few epochs, and scores
# the result. Pass a step count to train longer: python 04_toy_training.py 400

import sys
import tempfile
from pathlib import Path

from hazedepth.config import toy_config
from hazedepth.scenes import write_corpus, write_pseudo_real
from hazedepth.synthesis import generate_dataset
from hazedepth.training import fit, read_log

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 64
root = Path(tempfile.mkdtemp())
write_corpus(root / "corpus", 16, size=64, seed=0)
generate_dataset(root / "corpus", None, 16, 0, root / "ds")
write_pseudo_real(root / "real", 16, size=64)

cfg = toy_config()
steps_per_epoch = -(-16 // cfg.train.batch)
cfg.train.epochs = max(1, steps // steps_per_epoch)
ckpt = fit(cfg, {"train": root / "ds", "real": root / "real"}, root / "run")

log = read_log(root / "run" / "train_log.csv")
for row in log[:: max(1, len(log) // 8)] + [log[-1]]:
    print(f"step {row['step']:5d}  total {row['total']:.4f}  dehaze {row['dehaze_char']:.4f}  "
          f"depth {row['depth_char']:.4f}  lr {row['lr']:.2e}")

print((root / "run" / "eval.csv").read_text().splitlines()[-1])
print("checkpoint:", ckpt)
