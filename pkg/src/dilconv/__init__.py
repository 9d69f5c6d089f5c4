"""Dilated/strided convolution networks for accelerometer activity recognition.

NumPy-only forward and backward passes, Adam, a WISDM parsing and windowing
pipeline, and the three published network stacks (``v1_split``,
``v1_individual``, ``v2``). Hot loops run in a compiled extension when it is
built and fall back to numpy otherwise; see :mod:`dilconv.backend`.
"""
from .data import LABELS_V1, LABELS_V2, SegmentSet, SegmentSpec, load_segment_set, parse_wisdm, segment, split
from .errors import (ConfigError, DilconvError, DivergenceError, FormatError, LabelError, ShapeError,
                     StateError)
from .metrics import EvalReport, format_report
from .model import (NetworkConfig, forward, backward, init_params, load_checkpoint, predict, preset,
                    save_checkpoint, shape_check)
from .optim import AdamState, TrainConfig, adam_step
from .train import RunLog, evaluate, train

__version__ = "0.1.0"
