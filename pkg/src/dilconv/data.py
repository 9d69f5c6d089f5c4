"""WISDM parsing, windowing into one-channel images, splitting, and caching."""
from __future__ import annotations

import io
import logging
import os
import struct
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import ConfigError, FormatError

log = logging.getLogger(__name__)

LABELS_V1 = ("Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing")
LABELS_V2 = ("Walking", "Jogging", "Stairs", "Sitting", "Standing", "Lying Down")
# v2 reports a single stairs class
ALIASES_V2 = {"upstairs": "Stairs", "downstairs": "Stairs"}

SAMPLE_PERIOD_NS = 50_000_000  # 20 Hz


def _label_key(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


@dataclass(frozen=True)
class Sample:
    user_id: int
    activity: int
    timestamp: int
    x: float
    y: float
    z: float


@dataclass
class SampleTable:
    """Parsed samples in file order, stored column-wise.

    Behaves as a read-only sequence of :class:`Sample`.
    """

    user: np.ndarray
    activity: np.ndarray
    timestamp: np.ndarray
    xyz: np.ndarray
    label_names: tuple[str, ...]
    skipped: int = 0
    skipped_lines: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.user)

    def __getitem__(self, i) -> Sample:
        x, y, z = self.xyz[i]
        return Sample(int(self.user[i]), int(self.activity[i]), int(self.timestamp[i]), float(x), float(y), float(z))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], label_names: Sequence[str]) -> "SampleTable":
        n = len(samples)
        return cls(
            user=np.fromiter((s.user_id for s in samples), np.int64, n),
            activity=np.fromiter((s.activity for s in samples), np.int64, n),
            timestamp=np.fromiter((s.timestamp for s in samples), np.int64, n),
            xyz=np.array([(s.x, s.y, s.z) for s in samples], dtype=np.float64).reshape(n, 3),
            label_names=tuple(label_names),
        )


def _read_text(source) -> tuple[str, str]:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8", errors="replace"), "<bytes>"
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read().decode("utf-8", errors="replace"), os.fspath(source)
    data = source.read()
    name = getattr(source, "name", "<stream>")
    return (data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data), str(name)


def parse_wisdm(source, label_names: Sequence[str] = LABELS_V1, aliases: dict[str, str] | None = None,
                max_skipped_lines: int = 20) -> SampleTable:
    """Parse raw ``user,activity,timestamp,x,y,z;`` records.

    ``source`` is raw bytes, a path, or a readable file object. Records end at
    ``;`` or a newline, so lines carrying several records are handled. Records
    with the wrong field count, empty or non-numeric fields, non-finite values
    or an activity outside ``label_names`` are skipped and counted.

    Acceleration values are rounded to float32 precision so a cached
    segment set round-trips bit-exactly.
    """
    text, name = _read_text(source)
    lookup = {_label_key(n): i for i, n in enumerate(label_names)}
    for alias, target in (aliases or {}).items():
        lookup[_label_key(alias)] = label_names.index(target)

    users, acts, stamps, vals = [], [], [], []
    skipped = 0
    skipped_lines = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for rec in line.split(";"):
            rec = rec.strip()
            if not rec:
                continue
            parts = rec.split(",")
            try:
                if len(parts) != 6 or any(not p.strip() for p in parts):
                    raise ValueError
                act = lookup[_label_key(parts[1])]
                u = int(parts[0])
                ts = int(parts[2])
                x, y, z = float(parts[3]), float(parts[4]), float(parts[5])
                if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
                    raise ValueError
            except (ValueError, KeyError, OverflowError):
                skipped += 1
                if len(skipped_lines) < max_skipped_lines:
                    skipped_lines.append(lineno)
                continue
            users.append(u)
            acts.append(act)
            stamps.append(ts)
            vals.append((x, y, z))

    if not users:
        raise FormatError(f"{name}: no valid WISDM records found ({skipped} malformed)")
    if skipped:
        log.info("%s: skipped %d malformed records (first at lines %s)", name, skipped, skipped_lines[:5])
    xyz = np.array(vals, dtype=np.float32).astype(np.float64)
    return SampleTable(np.array(users, np.int64), np.array(acts, np.int64), np.array(stamps, np.int64),
                       xyz, tuple(label_names), skipped, skipped_lines)


SplitMode = Literal["random", "by_user"]


@dataclass(frozen=True)
class SegmentSpec:
    window: int
    step: int
    variates: int = 3
    split_mode: SplitMode = "random"
    train_frac: float = 0.8
    train_users: tuple[int, ...] = ()
    test_users: tuple[int, ...] = ()
    gap_threshold_ns: int | None = None

    def __post_init__(self):
        if self.window <= 0:
            raise ConfigError(f"window length must be >= 1, got {self.window}")
        if not 1 <= self.step <= self.window:
            raise ConfigError(f"step must lie in [1, {self.window}], got {self.step}")
        if self.variates != 3:
            raise ConfigError("WISDM records carry exactly 3 variates")
        if self.split_mode == "random":
            if not 0 < self.train_frac < 1:
                raise ConfigError(f"train_frac must lie in (0, 1), got {self.train_frac}")
        elif self.split_mode == "by_user":
            overlap = set(self.train_users) & set(self.test_users)
            if overlap:
                raise ConfigError(f"users in both train and test lists: {sorted(overlap)}")
        else:
            raise ConfigError(f"unknown split mode {self.split_mode!r}")


@dataclass(frozen=True)
class Segment:
    image: np.ndarray  # [1, M, K], rows x, y, z
    label: int
    user_id: int


@dataclass
class Segments:
    """Stacked segments: ``images`` [N, 1, M, K], ``labels`` [N], ``users`` [N]."""

    images: np.ndarray
    labels: np.ndarray
    users: np.ndarray

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> Segment:
        return Segment(self.images[i], int(self.labels[i]), int(self.users[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, idx) -> "Segments":
        idx = np.asarray(idx, dtype=np.intp)
        return Segments(self.images[idx], self.labels[idx], self.users[idx])

    @classmethod
    def empty(cls, m: int, k: int) -> "Segments":
        return cls(np.zeros((0, 1, m, k)), np.zeros(0, np.int64), np.zeros(0, np.int64))

    @classmethod
    def concat(cls, parts: Iterable["Segments"]) -> "Segments":
        parts = list(parts)
        return cls(np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.users for p in parts]))


@dataclass
class SegmentSet:
    train: Segments
    test: Segments
    label_names: tuple[str, ...]

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.train.images.shape[2], self.train.images.shape[3]


def runs(samples: SampleTable, gap_threshold_ns: int | None = None) -> list[tuple[int, int]]:
    """Maximal ``[start, stop)`` stretches with one user and one activity, in canonical order."""
    n = len(samples)
    if n == 0:
        return []
    brk = (samples.user[1:] != samples.user[:-1]) | (samples.activity[1:] != samples.activity[:-1])
    if gap_threshold_ns is not None:
        brk |= np.abs(np.diff(samples.timestamp)) > gap_threshold_ns
    starts = np.concatenate([[0], np.flatnonzero(brk) + 1])
    stops = np.concatenate([starts[1:], [n]])
    order = np.argsort(samples.user[starts], kind="stable")
    return [(int(starts[i]), int(stops[i])) for i in order]


def segment(samples, spec: SegmentSpec, label_names: Sequence[str] | None = None) -> Segments:
    """Slide a window over every run; windows never cross user or activity changes."""
    if not isinstance(samples, SampleTable):
        samples = SampleTable.from_samples(list(samples), label_names or LABELS_V1)
    K, step = spec.window, spec.step
    starts = []
    for a, b in runs(samples, spec.gap_threshold_ns):
        length = b - a
        if length >= K:
            starts.append(a + step * np.arange((length - K) // step + 1))
    if not starts:
        return Segments.empty(3, K)
    starts = np.concatenate(starts)
    idx = starts[:, None] + np.arange(K)
    images = samples.xyz[idx].transpose(0, 2, 1)[:, None, :, :]
    return Segments(np.ascontiguousarray(images), samples.activity[starts].copy(), samples.user[starts].copy())


def split(segments: Segments, spec: SegmentSpec, seed: int, label_names: Sequence[str] = LABELS_V1) -> SegmentSet:
    n = len(segments)
    if spec.split_mode == "random":
        perm = np.random.default_rng(seed).permutation(n)
        n_train = int(round(spec.train_frac * n))
        train, test = segments.take(perm[:n_train]), segments.take(perm[n_train:])
    else:
        train_u, test_u = set(spec.train_users), set(spec.test_users)
        if train_u & test_u:
            raise ConfigError(f"users in both train and test lists: {sorted(train_u & test_u)}")
        missing = set(np.unique(segments.users).tolist()) - train_u - test_u
        if missing:
            raise ConfigError(f"users not assigned to train or test: {sorted(missing)}")
        in_train = np.isin(segments.users, list(train_u))
        train, test = segments.take(np.flatnonzero(in_train)), segments.take(np.flatnonzero(~in_train))
    return SegmentSet(train, test, tuple(label_names))


def channel_stats(s: Segments) -> tuple[np.ndarray, np.ndarray]:
    """Per-variate mean and standard deviation; zero deviations become 1 with a warning."""
    mean = s.images.mean(axis=(0, 1, 3))
    sd = s.images.std(axis=(0, 1, 3))
    if np.any(sd == 0):
        warnings.warn(f"zero-variance variate(s) {np.flatnonzero(sd == 0).tolist()}; dividing by 1",
                      RuntimeWarning, stacklevel=3)
        sd = np.where(sd == 0, 1.0, sd)
    return mean, sd


def standardize(ss: SegmentSet, mean, sd) -> SegmentSet:
    mean = np.asarray(mean, dtype=np.float64).reshape(1, 1, -1, 1)
    sd = np.asarray(sd, dtype=np.float64).reshape(1, 1, -1, 1)

    def apply(s: Segments) -> Segments:
        return replace(s, images=(s.images - mean) / sd)

    return SegmentSet(apply(ss.train), apply(ss.test), ss.label_names)


def normalize(ss: SegmentSet, mode: str = "none") -> SegmentSet:
    """Optionally standardize each variate with train-set statistics."""
    if mode == "none":
        return ss
    if mode != "per_channel_standardize":
        raise ConfigError(f"unknown normalization mode {mode!r}")
    return standardize(ss, *channel_stats(ss.train))


# dataset protocols: window, step, split
DATASET_KINDS = {
    "v1_split": dict(window=100, step=100, split_mode="random", train_frac=0.8, labels=LABELS_V1),
    "v1_individual": dict(window=200, step=20, split_mode="by_user", train_users=tuple(range(1, 29)),
                          test_users=tuple(range(29, 37)), labels=LABELS_V1),
    "v2": dict(window=200, step=200, split_mode="random", train_frac=0.8, labels=LABELS_V2, aliases=ALIASES_V2),
}


CACHE_MAGIC = b"DCSEGSET"
CACHE_VERSION = 1
_HEAD = struct.Struct("<8sIIIQQI")


def _write_block(fh, s: Segments):
    fh.write(s.images.astype("<f4").tobytes())
    fh.write(s.labels.astype("<i4").tobytes())
    fh.write(s.users.astype("<i4").tobytes())


def dump_segment_set(ss: SegmentSet) -> bytes:
    m, k = ss.image_shape if len(ss.train) else ss.test.images.shape[2:]
    fh = io.BytesIO()
    fh.write(_HEAD.pack(CACHE_MAGIC, CACHE_VERSION, m, k, len(ss.train), len(ss.test), len(ss.label_names)))
    for name in ss.label_names:
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)) + raw)
    _write_block(fh, ss.train)
    _write_block(fh, ss.test)
    return fh.getvalue()


def save_segment_set(path, ss: SegmentSet):
    with open(path, "wb") as fh:
        fh.write(dump_segment_set(ss))


def _read_block(buf: memoryview, pos: int, n: int, m: int, k: int):
    size = n * m * k * 4
    images = np.frombuffer(buf, "<f4", n * m * k, pos).astype(np.float64).reshape(n, 1, m, k)
    pos += size
    labels = np.frombuffer(buf, "<i4", n, pos).astype(np.int64)
    pos += 4 * n
    users = np.frombuffer(buf, "<i4", n, pos).astype(np.int64)
    pos += 4 * n
    return Segments(images, labels, users), pos


def load_segment_set(source) -> SegmentSet:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if len(data) < _HEAD.size:
        raise FormatError("segment cache truncated")
    magic, version, m, k, n_train, n_test, n_labels = _HEAD.unpack_from(data, 0)
    if magic != CACHE_MAGIC:
        raise FormatError("not a segment cache file (bad magic)")
    if version != CACHE_VERSION:
        raise FormatError(f"unsupported segment cache version {version}")
    pos = _HEAD.size
    names = []
    for _ in range(n_labels):
        (ln,) = struct.unpack_from("<H", data, pos)
        names.append(data[pos + 2:pos + 2 + ln].decode("utf-8"))
        pos += 2 + ln
    expected = pos + (n_train + n_test) * (m * k * 4 + 8)
    if len(data) != expected:
        raise FormatError(f"segment cache size {len(data)} != expected {expected}")
    buf = memoryview(data)
    train, pos = _read_block(buf, pos, n_train, m, k)
    test, pos = _read_block(buf, pos, n_test, m, k)
    return SegmentSet(train, test, tuple(names))
