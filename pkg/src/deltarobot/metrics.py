"""Error statistics over a time window of a run log."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .telemetry import TelemetryLog


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class RunMetrics:
    window: tuple[float, float]
    samples: int
    position_rms: tuple[float, float, float]
    position_max: tuple[float, float, float]
    orientation_rms: tuple[float, float, float]
    orientation_max: tuple[float, float, float]
    tilt_error_rms: float
    tilt_error_max: float
    mean_speed: float
    thrust_sum_mean: float
    thrust_sum: tuple[tuple[float, float], ...]
    mode_timeline: tuple[tuple[float, str], ...]
    slip_steps: int
    max_penetration: float
    degraded_steps: int

    def to_dict(self) -> dict:
        return asdict(self)


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x)))


def _stats(cols):
    return tuple(rms(c) for c in cols), tuple(float(np.max(np.abs(c))) for c in cols)


def mode_timeline(t, modes) -> tuple[tuple[float, str], ...]:
    out = []
    for ti, m in zip(t, modes):
        if not out or out[-1][1] != m:
            out.append((float(ti), str(m)))
    return tuple(out)


def compute_metrics(log: TelemetryLog, window: tuple[float, float] | None = None) -> RunMetrics:
    """RMS and max statistics between ``window[0]`` and ``window[1]`` (inclusive)."""
    if len(log) == 0:
        raise MetricsError("empty log")
    t = log.column("t")
    lo, hi = (float(t[0]), float(t[-1])) if window is None else (float(window[0]), float(window[1]))
    sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
    n = int(np.count_nonzero(sel))
    if n == 0:
        raise MetricsError(f"no samples in window [{lo}, {hi}]")

    def col(name):
        return log.column(name)[sel]

    pos_rms, pos_max = _stats([col("ex"), col("ey"), col("ez")])
    att_rms, att_max = _stats([col("e_roll"), col("e_pitch"), col("e_yaw")])
    e_tilt = col("e_tilt")
    speed = np.hypot(col("vx"), col("vy"))
    thrust = col("thrust1") + col("thrust2") + col("thrust3")
    return RunMetrics(
        window=(lo, hi),
        samples=n,
        position_rms=pos_rms,
        position_max=pos_max,
        orientation_rms=att_rms,
        orientation_max=att_max,
        tilt_error_rms=rms(e_tilt),
        tilt_error_max=float(np.max(np.abs(e_tilt))),
        mean_speed=float(np.mean(speed)),
        thrust_sum_mean=float(np.mean(thrust)),
        thrust_sum=tuple((float(a), float(b)) for a, b in zip(t[sel], thrust)),
        mode_timeline=mode_timeline(t, log.column("mode")),
        slip_steps=int(np.count_nonzero(col("slip"))),
        max_penetration=float(np.max(col("penetration"))),
        degraded_steps=int(np.count_nonzero(col("degraded"))),
    )
