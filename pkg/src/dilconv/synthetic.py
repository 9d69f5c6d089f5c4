"""Synthetic accelerometer recordings in the raw WISDM text format.

Used by tests and the demo manifest when the real dataset is not at hand.
Each activity gets its own gravity orientation and gait rhythm, so the
classes are separable but not trivially so.
"""
from __future__ import annotations

import numpy as np

from .data import LABELS_V1, SAMPLE_PERIOD_NS

# (gravity direction, step frequency Hz, gait amplitude m/s^2)
_PROFILES = {
    "walking": ((0.0, 9.5, 1.0), 1.9, 3.0),
    "jogging": ((0.0, 9.0, 2.0), 2.8, 7.5),
    "upstairs": ((1.5, 9.2, 1.5), 1.6, 2.5),
    "downstairs": ((-1.5, 9.2, 1.0), 2.2, 3.5),
    "stairs": ((1.0, 9.2, 1.5), 1.8, 3.0),
    "sitting": ((6.5, 2.0, 7.0), 0.0, 0.0),
    "standing": ((0.5, 9.7, 0.5), 0.0, 0.0),
    "lyingdown": ((0.5, 0.5, 9.7), 0.0, 0.0),
}


def _profile(name: str):
    return _PROFILES["".join(ch for ch in name.lower() if ch.isalnum())]


def synthesize_wisdm(users=range(1, 5), bouts_per_user: int = 6, bout_samples=(300, 900),
                     labels=LABELS_V1, seed: int = 0, noise: float = 0.6,
                     malformed_every: int = 0) -> str:
    """Return raw ``user,activity,timestamp,x,y,z;`` text.

    Every user records ``bouts_per_user`` bouts with activities cycling
    through ``labels``; bout lengths are uniform in ``bout_samples``. With
    ``malformed_every > 0`` a broken record is inserted after that many
    good ones.
    """
    rng = np.random.default_rng(seed)
    lines = []
    good = 0
    for user in users:
        t = int(rng.integers(10**12, 10**13)) * 1000
        for b in range(bouts_per_user):
            label = labels[(b + user) % len(labels)]
            gravity, freq, amp = _profile(label)
            n = int(rng.integers(bout_samples[0], bout_samples[1] + 1))
            tt = np.arange(n) * (SAMPLE_PERIOD_NS / 1e9)
            phase = rng.uniform(0, 2 * np.pi)
            user_gain = 1.0 + 0.1 * rng.standard_normal()
            gait = amp * user_gain * np.sin(2 * np.pi * freq * tt + phase)
            harmonic = 0.4 * amp * np.sin(4 * np.pi * freq * tt + 2 * phase)
            xyz = np.empty((n, 3))
            xyz[:, 0] = gravity[0] + 0.5 * gait + noise * rng.standard_normal(n)
            xyz[:, 1] = gravity[1] + gait + harmonic + noise * rng.standard_normal(n)
            xyz[:, 2] = gravity[2] + 0.3 * harmonic + noise * rng.standard_normal(n)
            for i in range(n):
                lines.append(f"{user},{label},{t},{xyz[i, 0]:.2f},{xyz[i, 1]:.2f},{xyz[i, 2]:.2f};")
                t += SAMPLE_PERIOD_NS
                good += 1
                if malformed_every and good % malformed_every == 0:
                    lines.append(f"{user},{label},,,;")
    return "\n".join(lines) + "\n"
