"""Run manifests: flat ``key = value`` files describing a prepare/train run.

Lines starting with ``#`` are comments. Relative paths resolve against the
manifest's directory. Keys not given fall back to the dataset kind's
defaults (window, step, split, preset, L2 weight).

Example::

    dataset_kind = v1_split
    dataset_path = WISDM_ar_v1.1_raw.txt
    epochs = 50
    seed = 7

Layer lists use ``|`` between layers::

    layers = DL 3x10 32 d1x2 | SL 1x4 32 s1x4 | FL 1024 | FL 6

``FL 1024 none`` drops the ReLU after a hidden dense layer.
"""
from __future__ import annotations

import dataclasses
import os
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .data import ALIASES_V2, DATASET_KINDS, LABELS_V1, SegmentSpec
from .errors import ConfigError
from .model import DL, FL, PRESETS, SL, LayerSpec, NetworkConfig, preset
from .optim import TrainConfig
from .tensor import Shape4

KINDS = ("v1_split", "v1_individual", "v2", "custom")

# L2 weight for each published network
DEFAULT_L2 = {"v1_split": 1e-3, "v1_individual": 1e-5, "v2": 1e-5}


def parse_int_list(text: str) -> tuple[int, ...]:
    """``"1-3, 7"`` -> ``(1, 2, 3, 7)``."""
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        m = re.fullmatch(r"(-?\d+)-(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _pair(tok: str, prefix: str = "") -> tuple[int, int]:
    m = re.fullmatch(rf"{prefix}(\d+)x(\d+)", tok)
    if not m:
        raise ConfigError(f"expected {prefix}<rows>x<cols>, got {tok!r}")
    return int(m.group(1)), int(m.group(2))


def parse_layers(text: str) -> list[LayerSpec]:
    layers = []
    explicit = False
    for chunk in text.split("|"):
        toks = chunk.split()
        if not toks:
            continue
        kind = toks[0].upper()
        try:
            if kind == "DL":
                fr, fc = _pair(toks[1])
                dil = _pair(toks[3], "d") if len(toks) > 3 else (1, 1)
                layers.append(DL(fr, fc, int(toks[2]), dil))
            elif kind == "SL":
                fr, fc = _pair(toks[1])
                stride = _pair(toks[3], "s") if len(toks) > 3 else (1, fc)
                layers.append(SL(fr, fc, int(toks[2]), stride))
            elif kind == "FL":
                layers.append(FL(int(toks[1]), toks[2] if len(toks) > 2 else "relu"))
            else:
                raise ConfigError(f"unknown layer kind {toks[0]!r}")
        except (IndexError, ValueError) as e:
            raise ConfigError(f"cannot parse layer {chunk.strip()!r}: {e}") from None
        explicit = kind == "FL" and len(toks) > 2
    if not layers:
        raise ConfigError("empty layer list")
    last = layers[-1]
    # the output layer feeds softmax; no activation unless spelled out
    if last.kind == "FL" and not explicit:
        layers[-1] = FL(last.units, "none")
    return layers


@dataclass
class RunManifest:
    dataset_path: str = ""
    dataset_kind: str = "v1_split"
    window: int | None = None
    step: int | None = None
    split_mode: str | None = None
    train_frac: float | None = None
    train_users: tuple[int, ...] | None = None
    test_users: tuple[int, ...] | None = None
    gap_threshold_ms: float | None = None
    labels: tuple[str, ...] | None = None
    normalize: str = "none"
    preset: str | None = None
    layers: str | None = None
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 256
    l2_lambda: float | None = None
    epochs: int = 50
    seed: int = 0
    selection: str = "best"
    out: str = "runs/default"
    cache: str | None = None
    format: str = "plain_table"
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        if self.dataset_kind not in KINDS:
            raise ConfigError(f"unknown dataset_kind {self.dataset_kind!r}; choose from {KINDS}")
        if self.normalize not in ("none", "per_channel_standardize"):
            raise ConfigError(f"unknown normalize mode {self.normalize!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")

    def _kind(self) -> dict:
        return DATASET_KINDS.get(self.dataset_kind, {})

    def resolve(self, path: str | None) -> Path | None:
        if not path:
            return None
        p = Path(os.path.expanduser(path))
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def label_names(self) -> tuple[str, ...]:
        return tuple(self.labels or self._kind().get("labels", LABELS_V1))

    @property
    def label_aliases(self) -> dict:
        return self._kind().get("aliases", ALIASES_V2 if self.dataset_kind == "v2" else {})

    def segment_spec(self) -> SegmentSpec:
        kind = self._kind()
        window = self.window or kind.get("window")
        if window is None:
            raise ConfigError("custom datasets need a window length")
        gap = None if self.gap_threshold_ms is None else int(self.gap_threshold_ms * 1_000_000)
        return SegmentSpec(
            window=window,
            step=self.step or kind.get("step", window),
            split_mode=self.split_mode or kind.get("split_mode", "random"),
            train_frac=self.train_frac if self.train_frac is not None else kind.get("train_frac", 0.8),
            train_users=self.train_users if self.train_users is not None else kind.get("train_users", ()),
            test_users=self.test_users if self.test_users is not None else kind.get("test_users", ()),
            gap_threshold_ns=gap,
        )

    def network(self) -> NetworkConfig:
        if self.layers:
            spec = self.segment_spec()
            return NetworkConfig(Shape4(1, 1, 3, spec.window), tuple(parse_layers(self.layers)),
                                 len(self.label_names))
        name = self.preset or (self.dataset_kind if self.dataset_kind in PRESETS else None)
        if name is None:
            raise ConfigError("custom datasets need a preset or an explicit layer list")
        return preset(name)

    def train_config(self) -> TrainConfig:
        lam = self.l2_lambda
        if lam is None:
            lam = DEFAULT_L2.get(self.preset or self.dataset_kind, 0.0)
        return TrainConfig(self.learning_rate, self.beta1, self.beta2, self.epsilon, self.batch_size, lam,
                           self.epochs, self.seed, self.selection)

    @property
    def out_dir(self) -> Path:
        return self.resolve(self.out)

    @property
    def cache_path(self) -> Path:
        return self.resolve(self.cache) if self.cache else self.out_dir / "segments.bin"


_CONVERTERS = {
    int: int,
    float: float,
    str: str,
    tuple[int, ...]: parse_int_list,
    tuple[str, ...]: lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
}


def _field_types() -> dict:
    hints = typing.get_type_hints(RunManifest)
    out = {}
    for name, tp in hints.items():
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if typing.get_origin(tp) is typing.Union or type(tp).__name__ == "UnionType":
            tp = args[0]
        out[name] = tp
    return out


def parse_manifest_text(text: str, base_dir: str = ".", overrides: dict | None = None) -> RunManifest:
    types = _field_types()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"manifest line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types or key == "base_dir":
            raise ConfigError(f"manifest line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[types[key]](value)
        except ValueError as e:
            raise ConfigError(f"manifest line {lineno}: bad value for {key}: {e}") from None
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return RunManifest(base_dir=base_dir, **values)


def load_manifest(path, overrides: dict | None = None) -> RunManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"manifest not found: {path}") from None
    return parse_manifest_text(text, str(path.parent), overrides)


def dump_manifest(m: RunManifest) -> str:
    lines = []
    for f in dataclasses.fields(m):
        if f.name == "base_dir":
            continue
        v = getattr(m, f.name)
        if v is None:
            continue
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
