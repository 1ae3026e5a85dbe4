import pytest

from fusion_ensemble.data import SynthSpec, generate_synthetic
from fusion_ensemble.model import ModelConfig

TINY_MODEL = dict(num_classes=3, feature_dim=8, temporal_dim=8, widths=[4, 6], rgb_size=8, rdm_size=8)


def tiny_model_config(**kw) -> ModelConfig:
    return ModelConfig(**{**TINY_MODEL, **kw})


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """3 classes, 4 frames, 8x8 maps; 6/3/3 samples per split."""
    spec = SynthSpec(num_classes=3, frames=4, rgb_size=8, rdm_size=8, train_per_class=2, valid_per_class=1,
                     test_per_class=1, noise_sigma=0.05, seed=11)
    return generate_synthetic(spec, tmp_path_factory.mktemp("tiny"))


# ---------------------------------------------------------------- acceptance verdict lines

CRITERIA = {
    1: "gradient suite (64-bit central differences, rel err < 1e-4, < 5 min)",
    2: "equation conformance (antenna mean, attention, loss sum, averaging, argmax)",
    3: "toy end-to-end run (test ensemble top-1 >= 0.95 within 30 epochs, <= 20 min)",
    4: "ensemble benefit over 5 seeds at noise 0.3",
    5: "determinism and persistence",
    6: "oracle equivalence",
}
_VERDICTS: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _VERDICTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n in _VERDICTS:
            passed, detail = _VERDICTS[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'} - {CRITERIA[n]} :: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n}: NOT RUN - {CRITERIA[n]}")
