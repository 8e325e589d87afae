"""Run metrics computed from the CSV log alone.

Mechanical cost of transport uses positive joint power only; braking work is not
credited back::

    COT = mean_t( sum_j max(tau_j * qd_j, 0) ) / (m * |g| * mean_t |v_com,xy|)

A log whose mean horizontal COM speed is (numerically) zero has no COT; it is reported
as ``None`` ("not applicable").
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

SPEED_EPS = 1e-6


class LogError(ValueError):
    """Unreadable or incomplete run log."""


@dataclass(frozen=True)
class Metrics:
    cot: float | None              # dimensionless; None when the robot did not move
    mean_speed: float              # m/s, horizontal COM speed
    max_speed: float
    com_rmse: float                # m, |com - com_ref|
    min_zmp_margin: float          # m, signed distance to the support polygon edge
    positive_work: float           # J, sum over joints of the positive mechanical work
    mean_power: float              # W, mean positive mechanical power
    duration: float                # s

    def to_dict(self):
        return asdict(self)


@dataclass
class Log:
    columns: tuple
    data: np.ndarray

    def __post_init__(self):
        self.index = {c: i for i, c in enumerate(self.columns)}

    def column(self, name):
        try:
            return self.data[:, self.index[name]]
        except KeyError:
            raise LogError(f"log has no column {name!r}") from None

    def columns_like(self, prefix):
        return [c for c in self.columns if c.startswith(prefix)]


def read_log(path) -> Log:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise LogError(f"{path}: empty log")
            rows = [[float(x) for x in r] for r in reader if r]
    except OSError as exc:
        raise LogError(f"{path}: {exc}") from exc
    except ValueError as exc:
        raise LogError(f"{path}: non-numeric entry ({exc})") from exc
    if any(len(r) != len(header) for r in rows):
        raise LogError(f"{path}: ragged rows")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return Log(tuple(header), data)


def _time_weights(t):
    """Rectangle-rule interval lengths (the last sample closes no interval)."""
    if len(t) < 2:
        return np.zeros(len(t))
    w = np.diff(t)
    return np.append(w, 0.0)


def compute_metrics(log: Log, mass=None, gravity=None) -> Metrics:
    """Metrics of a run log (``Log`` or anything exposing ``column(name)`` and ``columns``)."""
    t = log.column("t")
    if len(t) == 0:
        raise LogError("log has no samples")
    if mass is None:
        mass = float(log.column("mass")[0])
    if gravity is None:
        gravity = float(log.column("gravity")[0])
    power_cols = [c for c in log.columns if c.startswith("power_")]
    if not power_cols:
        raise LogError("log has no power columns")
    p = np.column_stack([log.column(c) for c in power_cols])
    p_pos = np.maximum(p, 0.0).sum(axis=1)
    speed = np.hypot(log.column("com_vx"), log.column("com_vy"))
    err = np.column_stack([log.column(f"com_{a}") - log.column(f"com_ref_{a}") for a in "xyz"])
    margin = log.column("zmp_margin")
    margin = margin[np.isfinite(margin)]

    mean_speed = float(np.mean(speed))
    mean_power = float(np.mean(p_pos))
    cot = None
    if mean_speed > SPEED_EPS:
        cot = mean_power / (mass * gravity * mean_speed)
    return Metrics(
        cot=cot,
        mean_speed=mean_speed,
        max_speed=float(np.max(speed)),
        com_rmse=float(np.sqrt(np.mean(np.sum(err ** 2, axis=1)))),
        min_zmp_margin=float(margin.min()) if margin.size else math.nan,
        positive_work=float(np.sum(p_pos * _time_weights(t))),
        mean_power=mean_power,
        duration=float(t[-1] - t[0]),
    )
