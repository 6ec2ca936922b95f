"""Training loop: two forward passes per step (hazy input for the supervised
and contrastive terms, clean input for depth consistency), Adam with a
triangular cyclic learning rate, per-step logging and checkpoints."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import torch

from .checkpoint import read_checkpoint, restore, save_checkpoint
from .config import RunConfig, TrainConfig
from .data import BatchStream, SemiBatch, load_dataset, load_real
from .decoders import JointModel
from .features import build_extractor
from .inference import evaluate, write_metrics_csv
from .losses import LossReport, total_loss

log = logging.getLogger(__name__)

LOG_COLUMNS = ["step", *LossReport.COLUMNS, "lr", "wall_ms"]
PSEUDO_REAL_MARKER = "PSEUDO_REAL"


class NonFiniteLossError(FloatingPointError):
    def __init__(self, terms, step):
        super().__init__(f"non-finite loss at step {step}: {', '.join(terms)}")
        self.terms, self.step = terms, step


def cycle_length(cfg: TrainConfig, steps_per_epoch: int) -> int:
    return cfg.cycle_steps if cfg.cycle_steps else max(2, 2 * steps_per_epoch)


def lr_at(step: int, cfg: TrainConfig, steps_per_epoch: int = 1) -> float:
    """Triangular cycle: min_lr at step 0, max_lr at half period, min_lr again at the period."""
    period = cycle_length(cfg, steps_per_epoch)
    phase = (step % period) / period
    tri = 1.0 - abs(2.0 * phase - 1.0)
    return cfg.min_lr + (cfg.max_lr - cfg.min_lr) * tri


def build_model(cfg: RunConfig) -> JointModel:
    torch.manual_seed(cfg.train.seed)
    return JointModel(cfg)


def make_optimizer(model, cfg: TrainConfig):
    return torch.optim.Adam(model.parameters(), lr=cfg.base_lr, betas=cfg.betas)


@dataclass
class StepResult:
    report: dict[str, float]
    lr: float
    clipped: bool


class Trainer:
    def __init__(self, cfg: RunConfig, model: JointModel | None = None, steps_per_epoch: int = 1):
        self.cfg = cfg
        self.model = model if model is not None else build_model(cfg)
        self.extractor = build_extractor(cfg.extractor, cfg.extractor_seed)
        self.optimizer = make_optimizer(self.model, cfg.train)
        self.steps_per_epoch = steps_per_epoch
        self.step = 0

    def losses(self, batch: SemiBatch) -> LossReport:
        t = batch.tensors()
        tc = self.cfg.train
        out_hazy = self.model(t["hazy"])
        # only the depth of the clean pass feeds a loss
        depth_clean = self.model(t["clean"]).depth
        return total_loss(out_hazy, depth_clean, t["clean"], t["depth"], t["negatives"],
                          tc.weights, self.extractor, tc.temperature, norm=tc.consistency_norm)

    def train_step(self, batch: SemiBatch) -> StepResult:
        tc = self.cfg.train
        self.model.train()
        lr = lr_at(self.step, tc, self.steps_per_epoch)
        for g in self.optimizer.param_groups:
            g["lr"] = lr
        report = self.losses(batch)
        bad = report.nonfinite_terms()
        if bad:
            raise NonFiniteLossError(bad, self.step)
        self.optimizer.zero_grad(set_to_none=False)
        report.total.backward()
        clipped = False
        if tc.grad_clip:
            norm = torch.nn.utils.clip_grad_norm_(self.model.parameters(), tc.grad_clip)
            clipped = bool(norm > tc.grad_clip)
            if clipped:
                log.debug("step %d: grad norm %.3g clipped to %g", self.step, float(norm), tc.grad_clip)
        self.optimizer.step()
        self.step += 1
        return StepResult(report.as_floats(), lr, clipped)

    def save(self, path, extra=None):
        return save_checkpoint(path, self.model, self.optimizer, self.step, self.cfg.to_dict(), extra=extra)

    def load(self, path):
        meta = restore(path, self.model, self.optimizer)
        self.step = meta["step"]
        torch.set_rng_state(meta["rng_state"])
        return meta


def train_step(trainer: Trainer, batch: SemiBatch) -> StepResult:
    return trainer.train_step(batch)


def _log_row(step, result: StepResult, wall_ms: float) -> list[str]:
    r = result.report
    return [str(step)] + [repr(r[c]) for c in LossReport.COLUMNS] + [repr(result.lr), f"{wall_ms:.3f}"]


def _truncate_log(path: Path, keep_through_step: int):
    rows = path.read_text().splitlines()
    kept = [rows[0]] + [r for r in rows[1:] if int(r.split(",")[0]) <= keep_through_step]
    path.write_text("\n".join(kept) + "\n")


def latest_checkpoint(out_dir) -> Path | None:
    ckpts = sorted((Path(out_dir) / "checkpoints").glob("step_*.ckpt"))
    return ckpts[-1] if ckpts else None


def fit(cfg: RunConfig, data_dirs: dict, out_dir, resume: bool = False,
        max_steps: int | None = None, evaluate_at_end: bool = True) -> Path:
    """Train, writing ``train_log.csv``, ``checkpoints/`` and ``eval.csv`` into ``out_dir``.

    ``data_dirs`` takes ``train`` (dataset directory), optional ``real``
    (flat directory of unlabeled hazy images) and optional ``eval`` (held-out
    dataset; the training set is scored when absent). Log row ``k`` records
    the losses of the ``k``-th update (1-based). ``max_steps`` stops early, as
    if interrupted. Returns the final checkpoint path.
    """
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    cfg.dump(out_dir / "config.json")
    tc = cfg.train

    labeled = load_dataset(data_dirs["train"])
    real_dir = data_dirs.get("real")
    real = load_real(real_dir)
    if real_dir and (Path(real_dir) / PSEUDO_REAL_MARKER).exists():
        log.warning("negative pool %s is synthetic (pseudo-real)", real_dir)
    stream = BatchStream(labeled, real, tc.batch, tc.neg_ratio, tc.seed, tc.patch, tc.augment)
    spe = stream.batches_per_epoch
    total_steps = tc.epochs * spe

    trainer = Trainer(cfg, steps_per_epoch=spe)
    log_path = out_dir / "train_log.csv"
    start = 0
    ckpt = latest_checkpoint(out_dir) if resume else None
    if ckpt is not None:
        trainer.load(ckpt)
        start = trainer.step
        _truncate_log(log_path, start)
        log.info("resumed from %s at step %d", ckpt, start)
    else:
        with log_path.open("w", newline="") as fh:
            csv.writer(fh).writerow(LOG_COLUMNS)
        ckpt = trainer.save(out_dir / "checkpoints" / "step_00000000.ckpt")

    stop = total_steps if max_steps is None else min(total_steps, max_steps)
    every = tc.checkpoint_every or spe
    with log_path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        for step in range(start, stop):
            t0 = time.perf_counter()
            result = trainer.train_step(stream.batch(step))
            writer.writerow(_log_row(trainer.step, result, 1000 * (time.perf_counter() - t0)))
            fh.flush()
            done = trainer.step
            if done % every == 0 or done == stop:
                ckpt = trainer.save(out_dir / "checkpoints" / f"step_{done:08d}.ckpt")

    if evaluate_at_end and trainer.step == total_steps:
        eval_set = load_dataset(data_dirs["eval"]) if data_dirs.get("eval") else labeled
        write_metrics_csv(out_dir / "eval.csv", evaluate(trainer.model, eval_set))
    return ckpt


def read_log(path) -> list[dict]:
    with Path(path).open() as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def load_model(path) -> tuple[JointModel, RunConfig, dict]:
    """Model in eval mode plus its config, rebuilt from a checkpoint."""
    meta, state, _ = read_checkpoint(path)
    cfg = RunConfig.from_dict(meta["config"])
    model = JointModel(cfg)
    model.load_state_dict(state)
    model.eval()
    return model, cfg, meta
