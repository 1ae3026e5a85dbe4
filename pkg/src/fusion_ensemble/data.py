"""Multimodal samples, preprocessing, the on-disk dataset and a synthetic generator.

A sample pairs an RGB clip laid out ``[T, 3, H, W]`` with three synchronous
range-Doppler clips ``[A=3, T, 1, H_r, W_d]``. Batching prepends ``B``.

The synthetic generator draws a Gaussian blob that moves across the frame
with a class-specific heading. The radar maps of the same sample show one bump
per frame whose row tracks the blob's distance from the frame centre and whose
column tracks its radial speed, so both modalities carry the class.
"""

from __future__ import annotations

import functools
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, UsageError
from .tensor import Tensor, fent

NUM_ANTENNAS = 3
RGB_CHANNELS = 3
RDM_CHANNELS = 1
SPLITS = ("train", "valid", "test")
VARIANCE_FLOOR = 1e-6
DEFAULT_BATCH_SIZE = 4
MANIFEST_NAME = "manifest.json"

# SeedSequence spawn keys; one per consumer of randomness
SEED_INIT, SEED_DATA, SEED_SHUFFLE = 0, 1, 2


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


@dataclass
class MultimodalSample:
    rgb: np.ndarray  # [T, C_rgb, H, W]
    rdm: np.ndarray  # [A, T, C_rdm, H_r, W_d]
    label: int
    id: str = ""

    def __post_init__(self):
        if self.rgb.ndim != 4 or self.rdm.ndim != 5:
            raise DataError(f"sample {self.id}: rgb must be 4-d and rdm 5-d, got {self.rgb.shape} / {self.rdm.shape}")
        if self.rdm.shape[0] != NUM_ANTENNAS:
            raise DataError(f"sample {self.id}: expected {NUM_ANTENNAS} antennas, got {self.rdm.shape[0]}")
        if self.rgb.shape[0] != self.rdm.shape[1]:
            raise DataError(f"sample {self.id}: RGB has {self.rgb.shape[0]} frames, RDM has {self.rdm.shape[1]}")


# ---------------------------------------------------------------- preprocessing

def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row i holds the weights of output pixel i (half-pixel centres, edge clamp)."""
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = min(max((i + 0.5) * n_in / n_out - 0.5, 0.0), n_in - 1)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m


def resize_bilinear(frames: np.ndarray, target_hw: Sequence[int]) -> np.ndarray:
    """Resize the trailing two axes of ``frames`` to ``target_hw``."""
    h, w = frames.shape[-2:]
    th, tw = (int(v) for v in target_hw)
    if (h, w) == (th, tw):
        return frames.copy()
    rh = _bilinear_matrix(h, th)
    rw = _bilinear_matrix(w, tw)
    out = np.einsum("ih,...hw,jw->...ij", rh, frames.astype(np.float64), rw)
    return out.astype(frames.dtype)


def _standardize(x: np.ndarray, axes: tuple, what: str) -> np.ndarray:
    x64 = x.astype(np.float64)
    mu = x64.mean(axis=axes, keepdims=True)
    var = x64.var(axis=axes, keepdims=True)
    if np.any(var < VARIANCE_FLOOR):
        warnings.warn(f"{what}: constant channel standardized to zeros", RuntimeWarning, stacklevel=3)
    return ((x64 - mu) / np.sqrt(np.maximum(var, VARIANCE_FLOOR))).astype(x.dtype)


def preprocess(raw: MultimodalSample, target_hw: Sequence[int], rdm_hw: Optional[Sequence[int]] = None) -> MultimodalSample:
    """Resize both modalities and standardize every channel of the clip.

    RGB is standardized per channel over (T, H, W); each antenna's RDM clip
    per channel over (T, H_r, W_d). ``rdm_hw`` defaults to ``target_hw``.
    """
    if not (np.all(np.isfinite(raw.rgb)) and np.all(np.isfinite(raw.rdm))):
        raise DataError(f"sample {raw.id}: non-finite values")
    rgb = resize_bilinear(raw.rgb, target_hw)
    rdm = resize_bilinear(raw.rdm, rdm_hw if rdm_hw is not None else target_hw)
    rgb = _standardize(rgb, (0, 2, 3), f"sample {raw.id} rgb")
    rdm = _standardize(rdm, (1, 3, 4), f"sample {raw.id} rdm")
    return MultimodalSample(rgb=rgb, rdm=rdm, label=raw.label, id=raw.id)


# ---------------------------------------------------------------- synthetic data

@dataclass
class SynthSpec:
    num_classes: int = 8
    frames: int = 8
    rgb_size: int = 16
    rdm_size: int = 16
    train_per_class: int = 40
    valid_per_class: int = 10
    test_per_class: int = 10
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        for name in ("frames", "rgb_size", "rdm_size"):
            if getattr(self, name) < 4:
                raise ConfigurationError(f"{name} must be >= 4, got {getattr(self, name)}")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be non-negative")

    def per_class(self, split: str) -> int:
        return getattr(self, f"{split}_per_class")


def blob_position(spec: SynthSpec, k: int, t: float) -> np.ndarray:
    """(x, y) pixel position of class ``k``'s blob at frame ``t``."""
    h = spec.rgb_size
    centre = (h - 1) / 2.0
    speed = h / (2.0 * spec.frames)
    theta = 2.0 * math.pi * k / spec.num_classes
    # start offset breaks the rotational symmetry that would make range/speed class-blind
    phi = math.pi / (2.0 * spec.num_classes)
    off = h / 8.0
    tau = t - (spec.frames - 1) / 2.0
    return np.array([
        centre + off * math.cos(phi) + speed * math.cos(theta) * tau,
        centre + off * math.sin(phi) + speed * math.sin(theta) * tau,
    ])


def rdm_bump_center(spec: SynthSpec, k: int, t: float, antenna: int) -> tuple[float, float]:
    """(row, column) of the radar bump for class ``k``, frame ``t``, antenna ``antenna``."""
    h = spec.rgb_size
    centre = (h - 1) / 2.0
    speed = h / (2.0 * spec.frames)
    theta = 2.0 * math.pi * k / spec.num_classes
    rel = blob_position(spec, k, t) - centre
    rng_ = float(np.hypot(rel[0], rel[1]))
    vel = speed * np.array([math.cos(theta), math.sin(theta)])
    radial = float(rel @ vel) / rng_ if rng_ > 0 else 0.0
    n = spec.rdm_size
    row = rng_ / (h / 2.0) * (n - 1)
    col = (n - 1) / 2.0 + radial / speed * ((n - 1) / 2.0 - 2.0) + (antenna - 1)
    return row, col


def _gaussian_frame(n: int, cx: float, cy: float, sigma: float) -> np.ndarray:
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64)
    return np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))


def render_clean(spec: SynthSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free (rgb [T,3,H,W], rdm [3,T,1,H_r,W_d]) clip for class ``k``."""
    h, n, T = spec.rgb_size, spec.rdm_size, spec.frames
    rgb = np.zeros((T, RGB_CHANNELS, h, h))
    rdm = np.zeros((NUM_ANTENNAS, T, RDM_CHANNELS, n, n))
    for t in range(T):
        x, y = blob_position(spec, k, t)
        rgb[t, :] = _gaussian_frame(h, x, y, h / 8.0)
        for a in range(NUM_ANTENNAS):
            row, col = rdm_bump_center(spec, k, t, a)
            rdm[a, t, 0] = _gaussian_frame(n, col, row, n / 10.0)
    return rgb, rdm


def generate_synthetic(spec: SynthSpec, out_dir: str | os.PathLike) -> "DatasetManifest":
    """Write a synthetic dataset under ``out_dir`` and return its manifest."""
    out = Path(out_dir)
    try:
        for split in SPLITS:
            (out / split).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    classes = [f"class_{k:02d}" for k in range(spec.num_classes)]
    clean = [render_clean(spec, k) for k in range(spec.num_classes)]
    samples = []
    for s_idx, split in enumerate(SPLITS):
        for k in range(spec.num_classes):
            for i in range(spec.per_class(split)):
                sid = f"{split}-{k:03d}-{i:04d}"
                rgb, rdm = clean[k]
                if spec.noise_sigma > 0:
                    rng = np.random.default_rng(seed_sequence(spec.seed, SEED_DATA, s_idx, k, i))
                    rgb = rgb + rng.normal(0.0, spec.noise_sigma, rgb.shape)
                    rdm = rdm + rng.normal(0.0, spec.noise_sigma, rdm.shape)
                rel_rgb = f"{split}/{sid}.rgb.fent"
                rel_rdm = [f"{split}/{sid}.rdm{a}.fent" for a in range(NUM_ANTENNAS)]
                fent.save(out / rel_rgb, rgb.astype(np.float32))
                for a in range(NUM_ANTENNAS):
                    fent.save(out / rel_rdm[a], rdm[a].astype(np.float32))
                samples.append(SampleRecord(sid, k, rel_rgb, rel_rdm, split))
    manifest = DatasetManifest(classes=classes, samples=samples, generator_seed=spec.seed,
                               synth_spec=asdict(spec), root=out)
    manifest.save(out / MANIFEST_NAME)
    return manifest


# ---------------------------------------------------------------- manifest

@dataclass
class SampleRecord:
    id: str
    label: int
    rgb_path: str
    rdm_paths: list
    split: str


@dataclass
class DatasetManifest:
    classes: list
    samples: list = field(default_factory=list)
    generator_seed: Optional[int] = None
    synth_spec: Optional[dict] = None
    root: Path = field(default=Path("."), repr=False, compare=False)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def split(self, name: str) -> list:
        return [s for s in self.samples if s.split == name]

    def find(self, sample_id: str) -> SampleRecord:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise UsageError(f"no sample with id {sample_id!r} in manifest")

    def to_json(self) -> dict:
        doc = {"classes": list(self.classes), "samples": [asdict(s) for s in self.samples]}
        if self.generator_seed is not None:
            doc["generator_seed"] = self.generator_seed
        if self.synth_spec is not None:
            doc["synth_spec"] = self.synth_spec
        return doc

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            samples = [SampleRecord(s["id"], int(s["label"]), s["rgb_path"], list(s["rdm_paths"]), s["split"])
                       for s in doc["samples"]]
            return cls(classes=list(doc["classes"]), samples=samples, generator_seed=doc.get("generator_seed"),
                       synth_spec=doc.get("synth_spec"), root=path.parent)
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: malformed manifest ({exc})") from exc

    def validate(self, check_files: bool = True) -> None:
        k = self.num_classes
        seen: dict = {}
        for s in self.samples:
            if not 0 <= s.label < k:
                raise DataError(f"sample {s.id}: label {s.label} outside [0, {k})")
            if s.split not in SPLITS:
                raise DataError(f"sample {s.id}: unknown split {s.split!r}")
            if s.id in seen:
                raise DataError(f"sample id {s.id} appears in splits {seen[s.id]} and {s.split}")
            seen[s.id] = s.split
            if len(s.rdm_paths) != NUM_ANTENNAS:
                raise DataError(f"sample {s.id}: expected {NUM_ANTENNAS} rdm paths")
            if check_files:
                load_sample(self, s)


def load_sample(manifest: DatasetManifest, record: SampleRecord) -> MultimodalSample:
    """Read one raw (unprocessed) sample from disk."""
    root = Path(manifest.root)
    try:
        rgb = fent.load(root / record.rgb_path)
        rdm = np.stack([fent.load(root / p) for p in record.rdm_paths])
    except fent.FentError as exc:
        raise DataError(f"sample {record.id}: {exc}") from exc
    if rgb.ndim != 4 or rgb.shape[1] != RGB_CHANNELS:
        raise DataError(f"sample {record.id}: rgb layout {rgb.shape} is not [T, 3, H, W]")
    if rdm.ndim != 5 or rdm.shape[2] != RDM_CHANNELS:
        raise DataError(f"sample {record.id}: rdm layout {rdm.shape} is not [3, T, 1, H_r, W_d]")
    return MultimodalSample(rgb=rgb, rdm=rdm, label=record.label, id=record.id)


@functools.lru_cache(maxsize=4096)
def _cached_preprocessed(root: str, record_key: tuple, target_hw: Optional[tuple], rdm_hw: Optional[tuple]):
    sid, label, rgb_path, rdm_paths, split = record_key
    manifest = DatasetManifest(classes=[], root=Path(root))
    raw = load_sample(manifest, SampleRecord(sid, label, rgb_path, list(rdm_paths), split))
    if target_hw is None:
        target_hw = raw.rgb.shape[-2:]
        rdm_hw = rdm_hw or raw.rdm.shape[-2:]
    s = preprocess(raw, target_hw, rdm_hw)
    s.rgb.setflags(write=False)
    s.rdm.setflags(write=False)
    return s


def load_preprocessed(manifest: DatasetManifest, record: SampleRecord, target_hw=None, rdm_hw=None) -> MultimodalSample:
    """Load + preprocess with an in-process cache. ``target_hw=None`` keeps native sizes."""
    key = (record.id, record.label, record.rgb_path, tuple(record.rdm_paths), record.split)
    return _cached_preprocessed(str(Path(manifest.root).resolve()), key,
                                tuple(target_hw) if target_hw is not None else None,
                                tuple(rdm_hw) if rdm_hw is not None else None)


def batch_iterator(
    manifest: DatasetManifest,
    split: str,
    batch_size: int = DEFAULT_BATCH_SIZE,
    shuffle_seed: Optional[int] = None,
    target_hw: Optional[Sequence[int]] = None,
    rdm_hw: Optional[Sequence[int]] = None,
) -> Iterator[tuple[Tensor, Tensor, np.ndarray]]:
    """Yield ``(V_RGB [B,T,C,H,W], V_RDM [B,A,T,C,H_r,W_d], labels [B])`` covering the split once."""
    records = manifest.split(split)
    if not records:
        raise UsageError(f"split {split!r} is empty")
    if batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(records))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(records))
    for start in range(0, len(order), batch_size):
        chunk = [load_preprocessed(manifest, records[i], target_hw, rdm_hw) for i in order[start:start + batch_size]]
        rgb = np.stack([s.rgb for s in chunk])
        rdm = np.stack([s.rdm for s in chunk])
        labels = np.array([s.label for s in chunk], dtype=np.int64)
        yield Tensor(rgb), Tensor(rdm), labels
