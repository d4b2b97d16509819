"""Run configuration: one JSON document drives the whole pipeline.

Every stochastic choice is pinned by the single seed (the train/validation
shuffle is the only randomized step; training itself is deterministic).
Output files embed the configuration hash for provenance.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .dataset import GridSpec, SplitSpec
from .device import DeviceParams
from .quantizer import QuantSpec
from .trainer import SBSSpec, TrainHyper


@dataclass(frozen=True)
class DataPaths:
    train_images: str = "data/train-images-idx3-ubyte.gz"
    train_labels: str = "data/train-labels-idx1-ubyte.gz"
    test_images: str = "data/t10k-images-idx3-ubyte.gz"
    test_labels: str = "data/t10k-labels-idx1-ubyte.gz"


@dataclass(frozen=True)
class LineDefaults:
    c_line: float = 10e-15
    t_precharge: float = 2e-9
    t_classify: float = 2e-9
    dt: float = 10e-12


@dataclass(frozen=True)
class EvalSpec:
    mode: str = "digital-quantized"
    subset: int | None = None   # evaluate the first N test digits; None = all
    trace_digits: int = 10      # vote/trace records exported by `simulate`


@dataclass(frozen=True)
class RunConfig:
    data: DataPaths = DataPaths()
    split: SplitSpec = SplitSpec()
    grid: GridSpec = GridSpec()
    feature_space: int = 64     # 64 = downsampled grid, 784 = full images
    hyper: TrainHyper = TrainHyper()
    sbs: SBSSpec = SBSSpec()
    quant: QuantSpec = QuantSpec()
    device: DeviceParams = DeviceParams()
    line: LineDefaults = LineDefaults()
    evaluate: EvalSpec = EvalSpec()
    out_dir: str = "out"
    seed: int = 42

    def __post_init__(self):
        if self.feature_space not in (64, 784):
            raise ValueError("feature_space must be 64 or 784")
        # The global seed pins the split shuffle.
        object.__setattr__(self, "split",
                           dataclasses.replace(self.split, shuffle_seed=self.seed))


_SECTIONS = {
    "data": DataPaths,
    "split": SplitSpec,
    "grid": GridSpec,
    "hyper": TrainHyper,
    "sbs": SBSSpec,
    "quant": QuantSpec,
    "device": DeviceParams,
    "line": LineDefaults,
    "evaluate": EvalSpec,
}

_TUPLE_FIELDS = {"row_indices", "col_indices", "p_window", "n_window"}


def _build_section(cls, values: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    coerced = {k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
               for k, v in values.items()}
    return cls(**coerced)


def config_from_dict(doc: dict) -> RunConfig:
    """Build a RunConfig from a (possibly partial) JSON document."""
    kwargs = {}
    top_names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - top_names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key, value in doc.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value)
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    with open(path) as f:
        return config_from_dict(json.load(f))


def config_to_dict(cfg: RunConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    for name in _TUPLE_FIELDS:
        for section in doc.values():
            if isinstance(section, dict) and name in section:
                section[name] = list(section[name])
    return doc


def config_hash(cfg: RunConfig) -> str:
    """Short provenance hash over the canonical config JSON.

    The output directory is excluded: where artifacts land does not change
    what they contain.
    """
    doc = config_to_dict(cfg)
    doc.pop("out_dir", None)
    canonical = json.dumps(doc, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
