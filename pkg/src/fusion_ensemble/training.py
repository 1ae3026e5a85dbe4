"""AdamW + cosine schedule training loop, checkpoints and evaluation reports."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .data import SEED_SHUFFLE, DatasetManifest, batch_iterator, seed_sequence
from .ensemble import EnsembleOutput, confusion_matrix, top1_accuracy
from .errors import ConfigurationError, TrainingError, UsageError
from .model import FusionEnsembleNet, ModelConfig
from .tensor import Tape, backward, fent, no_grad

log = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
INDEX_NAME = "index.json"


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    base_lr: float = 1e-3
    min_lr: float = 0.0
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    checkpoint_dir: Optional[str] = None

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if self.epochs < 1:
            raise ConfigurationError(f"train.epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.min_lr <= self.base_lr:
            raise ConfigurationError(f"train: need 0 <= min_lr <= base_lr, got {self.min_lr} / {self.base_lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"train.batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"train: unknown fields {sorted(unknown)}")
        return cls(**doc)


# ---------------------------------------------------------------- optimiser + schedule

def cosine_lr(t: float, total_steps: int, base_lr: float, min_lr: float = 0.0) -> float:
    """Cosine annealing from ``base_lr`` at t=0 to ``min_lr`` at t=total_steps (clamped after)."""
    if t >= total_steps:
        return min_lr
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * t / total_steps))


def adamw_step(params, grads, moments, t: int, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.01, names=None):
    """One in-place AdamW update with decoupled weight decay.

    ``params``, ``grads`` are parallel lists of arrays; ``moments`` is a pair of
    lists ``(m, v)`` updated in place. Returns ``(params, moments)``.
    """
    if t < 1:
        raise UsageError(f"AdamW step counter starts at 1, got {t}")
    b1, b2 = betas
    m_list, v_list = moments
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p)
        if not np.all(np.isfinite(g)):
            name = names[i] if names is not None else f"#{i}"
            raise TrainingError(f"non-finite gradient in parameter {name} at step {t}")
        dt = p.dtype.type
        m, v = m_list[i], v_list[i]
        m *= dt(b1)
        m += dt(1 - b1) * g
        v *= dt(b2)
        v += dt(1 - b2) * g * g
        m_hat = m / dt(1 - b1 ** t)
        v_hat = v / dt(1 - b2 ** t)
        p -= dt(lr) * (m_hat / (np.sqrt(v_hat) + dt(eps)) + dt(weight_decay) * p)
    return params, moments


class AdamW:
    def __init__(self, model, config: TrainConfig):
        self.named = list(model.named_parameters())
        self.config = config
        self.t = 0
        self.m = [np.zeros_like(p.data) for _, p in self.named]
        self.v = [np.zeros_like(p.data) for _, p in self.named]

    def step(self, lr: float) -> None:
        self.t += 1
        cfg = self.config
        adamw_step([p.data for _, p in self.named], [p.grad for _, p in self.named], (self.m, self.v), self.t, lr,
                   cfg.betas, cfg.eps, cfg.weight_decay, names=[n for n, _ in self.named])


# ---------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    model_config: dict
    train_config: dict
    params: "OrderedDict[str, np.ndarray]"
    moments_m: dict = field(default_factory=dict)
    moments_v: dict = field(default_factory=dict)
    step: int = 0
    epoch: int = 0
    rng_state: Optional[dict] = None
    classes: list = field(default_factory=list)
    manifest_path: Optional[str] = None
    best_valid: float = -1.0
    log: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return ModelConfig.from_dict(self.model_config).digest()

    def build_model(self) -> FusionEnsembleNet:
        model = FusionEnsembleNet(ModelConfig.from_dict(self.model_config))
        model.load_state_dict(self.params)
        return model

    def save(self, directory: str | os.PathLike) -> None:
        d = Path(directory)
        try:
            (d / "params").mkdir(parents=True, exist_ok=True)
            (d / "moments").mkdir(parents=True, exist_ok=True)
            for name, arr in self.params.items():
                fent.save(d / "params" / f"{name}.fent", arr)
            for name, arr in self.moments_m.items():
                fent.save(d / "moments" / f"{name}.m.fent", arr)
            for name, arr in self.moments_v.items():
                fent.save(d / "moments" / f"{name}.v.fent", arr)
            index = {
                "config_hash": self.config_hash,
                "model_config": self.model_config,
                "train_config": self.train_config,
                "param_names": list(self.params),
                "has_moments": bool(self.moments_m),
                "step": self.step,
                "epoch": self.epoch,
                "rng_state": self.rng_state,
                "classes": self.classes,
                "manifest_path": self.manifest_path,
                "best_valid": self.best_valid,
                "log": self.log,
            }
            tmp = d / (INDEX_NAME + ".tmp")
            tmp.write_text(json.dumps(index, indent=1), encoding="utf-8")
            tmp.replace(d / INDEX_NAME)
        except OSError as exc:
            raise OSError(f"failed to write checkpoint {d}: {exc}") from exc

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "Checkpoint":
        d = Path(directory)
        index_path = d / INDEX_NAME
        if not index_path.is_file():
            raise FileNotFoundError(f"no checkpoint index at {index_path}")
        index = json.loads(index_path.read_text(encoding="utf-8"))
        names = index["param_names"]
        params = OrderedDict((n, fent.load(d / "params" / f"{n}.fent")) for n in names)
        m, v = {}, {}
        if index.get("has_moments"):
            m = {n: fent.load(d / "moments" / f"{n}.m.fent") for n in names}
            v = {n: fent.load(d / "moments" / f"{n}.v.fent") for n in names}
        ckpt = cls(index["model_config"], index["train_config"], params, m, v, index["step"], index["epoch"],
                   index.get("rng_state"), index.get("classes", []), index.get("manifest_path"),
                   index.get("best_valid", -1.0), index.get("log", []))
        if ckpt.config_hash != index["config_hash"]:
            raise ConfigurationError(f"{index_path}: config_hash does not match the stored model config")
        return ckpt


# ---------------------------------------------------------------- evaluation

def run_split(model: FusionEnsembleNet, manifest: DatasetManifest, split: str, batch_size: int = 4) -> tuple:
    """Ensemble outputs and labels for a whole split (no recording, no mutation)."""
    cfg = model.config
    outs, labels = [], []
    with no_grad():
        for rgb, rdm, y in batch_iterator(manifest, split, batch_size, None,
                                          (cfg.rgb_size, cfg.rgb_size), (cfg.rdm_size, cfg.rdm_size)):
            outs.append(model(rgb, rdm))
            labels.append(y)
    return outs, np.concatenate(labels)


def evaluate_model(model: FusionEnsembleNet, manifest: DatasetManifest, split: str, batch_size: int = 4) -> dict:
    outs, y = run_split(model, manifest, split, batch_size)
    y_hat = np.concatenate([o.y_hat for o in outs])
    per_head = [
        top1_accuracy(np.concatenate([np.argmax(o.per_head_probs[i], axis=-1) for o in outs]), y)
        for i in range(model.num_heads)
    ]
    return {
        "split": split,
        "n_samples": int(y.size),
        "top1_ensemble": top1_accuracy(y_hat, y),
        "top1_per_head": per_head,
        "confusion_matrix": confusion_matrix(y_hat, y, model.config.num_classes).tolist(),
    }


def check_compatible(checkpoint: Checkpoint, manifest: DatasetManifest) -> None:
    k = checkpoint.model_config.get("num_classes")
    if k != manifest.num_classes:
        raise ConfigurationError(f"num_classes: checkpoint has {k}, dataset has {manifest.num_classes}")
    if checkpoint.classes and list(checkpoint.classes) != list(manifest.classes):
        raise ConfigurationError("classes: checkpoint class names differ from the dataset's")


def evaluate(checkpoint: Checkpoint, manifest: DatasetManifest, split: str, batch_size: int = 4) -> dict:
    check_compatible(checkpoint, manifest)
    return evaluate_model(checkpoint.build_model(), manifest, split, batch_size)


# ---------------------------------------------------------------- training loop

@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    log: list


def _snapshot(model, opt, epoch, rng, model_cfg, train_cfg, manifest, best_valid, history, manifest_path):
    return Checkpoint(
        model_config=model_cfg.to_dict(),
        train_config=train_cfg.to_dict(),
        params=OrderedDict((n, p.data.copy()) for n, p in model.named_parameters()),
        moments_m={n: m.copy() for (n, _), m in zip(opt.named, opt.m)},
        moments_v={n: v.copy() for (n, _), v in zip(opt.named, opt.v)},
        step=opt.t,
        epoch=epoch,
        rng_state=rng.bit_generator.state,
        classes=list(manifest.classes),
        manifest_path=manifest_path,
        best_valid=best_valid,
        log=list(history),
    )


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    manifest: DatasetManifest,
    out_dir: Optional[str | os.PathLike] = None,
    resume: Optional[Checkpoint] = None,
    on_step: Optional[Callable] = None,
    stop_after_epoch: Optional[int] = None,
) -> TrainResult:
    """Train end-to-end, keeping the best-validation and the latest checkpoint.

    ``on_step(epoch, step, model, loss)`` is called after each backward pass,
    before the optimiser update. ``stop_after_epoch`` ends the run early (the
    schedule still assumes ``train_config.epochs``).
    """
    for split in ("train", "valid"):
        if not manifest.split(split):
            raise UsageError(f"manifest has no {split!r} samples")
    if model_config.num_classes != manifest.num_classes:
        raise ConfigurationError(f"num_classes: model has {model_config.num_classes}, dataset has {manifest.num_classes}")
    cfg = train_config
    model = FusionEnsembleNet(model_config, seed=cfg.seed)
    opt = AdamW(model, cfg)
    rng = np.random.default_rng(seed_sequence(cfg.seed, SEED_SHUFFLE))
    history: list = []
    best_valid, best = -1.0, None
    start = 1
    if resume is not None:
        if resume.config_hash != model_config.digest():
            raise ConfigurationError("model_config: resume checkpoint was trained with a different model config")
        model.load_state_dict(resume.params)
        opt.t = resume.step
        opt.m = [np.array(resume.moments_m[n]) for n, _ in opt.named]
        opt.v = [np.array(resume.moments_v[n]) for n, _ in opt.named]
        rng.bit_generator.state = resume.rng_state
        history = list(resume.log)
        best_valid = resume.best_valid
        start = resume.epoch + 1
    out = Path(out_dir) if out_dir is not None else (Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None)
    manifest_path = str(Path(manifest.root).resolve() / "manifest.json")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if resume is None:
            (out / LOG_NAME).write_text("", encoding="utf-8")
        elif (out / "checkpoints" / "best" / INDEX_NAME).is_file():
            best = Checkpoint.load(out / "checkpoints" / "best")
    hw = (model_config.rgb_size, model_config.rgb_size)
    rdm_hw = (model_config.rdm_size, model_config.rdm_size)
    last = None
    final_epoch = cfg.epochs if stop_after_epoch is None else min(cfg.epochs, stop_after_epoch)

    for epoch in range(start, final_epoch + 1):
        tic = time.perf_counter()
        lr = cosine_lr(epoch - 1, cfg.epochs, cfg.base_lr, cfg.min_lr)
        shuffle_seed = int(rng.integers(0, 2**63 - 1))
        losses, sizes = [], []
        for step, (rgb, rdm, y) in enumerate(batch_iterator(manifest, "train", cfg.batch_size, shuffle_seed, hw, rdm_hw)):
            model.zero_grad()
            with Tape() as tape:
                loss = model.loss(rgb, rdm, y)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            backward(loss, tape)
            if on_step is not None:
                on_step(epoch, step, model, value)
            opt.step(lr)
            losses.append(value)
            sizes.append(len(y))
        valid = evaluate_model(model, manifest, "valid", cfg.batch_size)
        record = {
            "epoch": epoch,
            "lr": lr,
            # per-sample mean, so the value does not depend on how the epoch was batched
            "train_loss": float(np.dot(losses, sizes) / np.sum(sizes)),
            "valid_top1_ensemble": valid["top1_ensemble"],
            "valid_top1_heads": valid["top1_per_head"],
            "seconds": time.perf_counter() - tic,
        }
        history.append(record)
        log.info("epoch %d lr %.3g loss %.4f valid %.4f", epoch, lr, record["train_loss"], record["valid_top1_ensemble"])
        improved = valid["top1_ensemble"] > best_valid
        if improved:
            best_valid = valid["top1_ensemble"]
        last = _snapshot(model, opt, epoch, rng, model_config, cfg, manifest, best_valid, history, manifest_path)
        if improved:
            best = last
        if out is not None:
            with open(out / LOG_NAME, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
            if improved:
                last.save(out / "checkpoints" / "best")
            last.save(out / "checkpoints" / "last")

    if last is None:  # resumed at or past the final epoch
        last = resume
    if best is None:
        best = last
    return TrainResult(best=best, last=last, log=history)


def read_log(path: str | os.PathLike) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
