"""Micro-benchmarks for trend tracking (never pass/fail).

Each run times one registered operation on a fixed shape preset and appends a
:class:`BenchReport` as one JSON line to a log file. Kernel-level ops can be
timed on either the compiled or the numpy unfold backend, which is how the two
are compared.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import UsageError
from .tensor import Tape, Tensor, backward, kernels, ops

MIN_ITERATIONS = 30
DEFAULT_WARMUP = 3
DEFAULT_LOG = "bench_log.jsonl"

# First-run pin for one full-model forward+backward step (batch 4, toy
# default config, float32) on the reference single-core machine: ~0.08 s.
# The budget leaves ample headroom; it exists to catch order-of-magnitude
# regressions, not to gate on hardware speed.
MODEL_STEP_BUDGET_SECONDS = 0.5


@dataclass
class BenchReport:
    op: str
    preset: str
    shape: list
    mean_seconds: float
    std_seconds: float
    iterations: int
    warmup: int
    backend: str
    build_hash: str
    timestamp: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def build_hash() -> str:
    """Digest of the package version, the active kernel backend and the kernel sources/binaries."""
    h = hashlib.sha256(f"{__version__}:{kernels.BACKEND}".encode())
    tensor_dir = Path(kernels.__file__).parent
    for path in sorted(tensor_dir.glob("*.py")) + sorted(tensor_dir.glob("_vol2col*.so")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- registered ops

PRESETS = {
    "conv3d": {"toy": (4, 16, 8, 8, 8), "small": (2, 3, 8, 16, 16)},
    "conv3d_backward": {"toy": (4, 16, 8, 8, 8), "small": (2, 3, 8, 16, 16)},
    "vol2col": {"toy": (4, 16, 8, 8, 8), "small": (2, 3, 8, 16, 16)},
    "col2vol": {"toy": (4, 16, 8, 8, 8), "small": (2, 3, 8, 16, 16)},
    "model_step": {"toy": (4,), "small": (1,)},
}
KERNEL_OPS = ("conv3d", "conv3d_backward", "vol2col", "col2vol")


def _conv_case(shape, rng):
    b, c, t, h, w = shape
    x = Tensor(rng.normal(size=shape).astype(np.float32))
    weight = Tensor(rng.normal(size=(32, c, 3, 3, 3)).astype(np.float32) * 0.1)
    bias = Tensor(np.zeros(32, np.float32))
    return x, weight, bias


def _make_conv3d(shape, backend, rng) -> Callable[[], object]:
    x, weight, bias = _conv_case(shape, rng)
    return lambda: ops.conv3d(x, weight, bias, (1, 2, 2), (1, 1, 1), backend=backend)


def _make_conv3d_backward(shape, backend, rng) -> Callable[[], object]:
    x, weight, bias = _conv_case(shape, rng)
    for t in (x, weight, bias):
        t.requires_grad = True

    def run():
        for t in (x, weight, bias):
            t.grad = None
        with Tape() as tape:
            loss = ops.sum_all(ops.conv3d(x, weight, bias, (1, 2, 2), (1, 1, 1), backend=backend))
        backward(loss, tape)

    return run


def _padded(shape, rng):
    b, c, t, h, w = shape
    return np.ascontiguousarray(rng.normal(size=(b, c, t + 2, h + 2, w + 2)).astype(np.float32))


def _make_vol2col(shape, backend, rng):
    impl = kernels.get_backend(backend)
    xp = _padded(shape, rng)
    return lambda: impl.vol2col(xp, 3, 3, 3, 1, 2, 2)


def _make_col2vol(shape, backend, rng):
    impl = kernels.get_backend(backend)
    xp = _padded(shape, rng)
    cols = impl.vol2col(xp, 3, 3, 3, 1, 2, 2)
    return lambda: impl.col2vol(cols, xp.shape, 3, 3, 3, 1, 2, 2)


def _make_model_step(shape, backend, rng):
    from .data import NUM_ANTENNAS
    from .model import FusionEnsembleNet, ModelConfig

    (b,) = shape
    cfg = ModelConfig()
    model = FusionEnsembleNet(cfg, seed=0)
    rgb = Tensor(rng.normal(size=(b, 8, cfg.rgb_channels, cfg.rgb_size, cfg.rgb_size)).astype(np.float32))
    rdm = Tensor(rng.normal(size=(b, NUM_ANTENNAS, 8, cfg.rdm_channels, cfg.rdm_size, cfg.rdm_size)).astype(np.float32))
    labels = np.arange(b) % cfg.num_classes

    def run():
        model.zero_grad()
        with Tape() as tape:
            loss = model.loss(rgb, rdm, labels)
        backward(loss, tape)

    return run


FACTORIES = {
    "conv3d": _make_conv3d,
    "conv3d_backward": _make_conv3d_backward,
    "vol2col": _make_vol2col,
    "col2vol": _make_col2vol,
    "model_step": _make_model_step,
}


def registered_ops() -> list:
    return sorted(FACTORIES)


# ---------------------------------------------------------------- runner

def time_callable(fn: Callable[[], object], iterations: int, warmup: int) -> np.ndarray:
    for _ in range(warmup):
        fn()
    times = np.empty(iterations)
    for i in range(iterations):
        tic = time.perf_counter()
        fn()
        times[i] = time.perf_counter() - tic
    return times


def bench(op: str, preset: str = "toy", iterations: int = MIN_ITERATIONS, warmup: int = DEFAULT_WARMUP,
          backend: Optional[str] = None, log_path: Optional[str | os.PathLike] = None) -> BenchReport:
    """Time ``op`` on ``preset`` and append the report to ``log_path`` (if given)."""
    if op not in FACTORIES:
        raise UsageError(f"unknown benchmark op {op!r}; registered: {registered_ops()}")
    if preset not in PRESETS[op]:
        raise UsageError(f"unknown preset {preset!r} for {op}; available: {sorted(PRESETS[op])}")
    if iterations < MIN_ITERATIONS:
        raise UsageError(f"iterations must be >= {MIN_ITERATIONS}, got {iterations}")
    if backend is not None and op not in KERNEL_OPS:
        raise UsageError(f"{op} always runs on the active backend; --backend applies to {KERNEL_OPS}")
    try:
        kernels.get_backend(backend)
    except (ImportError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    shape = PRESETS[op][preset]
    fn = FACTORIES[op](shape, backend, np.random.default_rng(0))
    times = time_callable(fn, iterations, warmup)
    report = BenchReport(
        op=op,
        preset=preset,
        shape=list(shape),
        mean_seconds=float(times.mean()),
        std_seconds=float(times.std()),
        iterations=iterations,
        warmup=warmup,
        backend=backend or kernels.BACKEND,
        build_hash=build_hash(),
        timestamp=time.time(),
    )
    if log_path is not None:
        append_report(log_path, report)
    return report


def compare_backends(op: str = "conv3d", preset: str = "toy", iterations: int = MIN_ITERATIONS,
                     log_path: Optional[str | os.PathLike] = None) -> dict:
    """Time a kernel op on every available backend; returns reports and the speedup."""
    if op not in KERNEL_OPS:
        raise UsageError(f"backend comparison needs a kernel op, one of {KERNEL_OPS}")
    backends = ["python"] + (["compiled"] if kernels.compiled_backend is not None else [])
    reports = {b: bench(op, preset, iterations, backend=b, log_path=log_path) for b in backends}
    out = {"op": op, "preset": preset, "reports": {b: asdict(r) for b, r in reports.items()}}
    if "compiled" in reports:
        out["speedup"] = reports["python"].mean_seconds / reports["compiled"].mean_seconds
    return out


def append_report(path: str | os.PathLike, report: BenchReport) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")


def read_reports(path: str | os.PathLike) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
