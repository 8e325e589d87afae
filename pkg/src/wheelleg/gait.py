"""Periodic contact scheduling from a small gait library."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LEGS

MERGE_TOL = 1e-9


@dataclass(frozen=True)
class GaitPattern:
    """Swing windows ``[lift-off, touch-down)`` per leg in normalized stride phase."""
    name: str
    stride: float
    swing: tuple = ((), (), (), ())

    def __post_init__(self):
        if self.stride <= 0:
            raise ValueError("stride duration must be positive")
        if len(self.swing) != 4:
            raise ValueError("need swing windows for all four legs")
        for windows in self.swing:
            last = -1.0
            for lo, td in sorted(windows):
                if not (0.0 <= lo < td <= 1.0):
                    raise ValueError(f"invalid swing window ({lo}, {td})")
                if lo < last:
                    raise ValueError("overlapping swing windows")
                last = td

    @property
    def is_driving(self):
        return not any(self.swing)

    def duty_factor(self, leg):
        return 1.0 - sum(td - lo for lo, td in self.swing[leg])

    def events(self):
        """Sorted normalized phases at which some leg lifts off or touches down."""
        ev = {0.0}
        for windows in self.swing:
            for lo, td in windows:
                ev.add(lo % 1.0)
                ev.add(td % 1.0)
        return sorted(ev)


def drive(stride=1.0):
    return GaitPattern("drive", stride)


def trot(stride=0.8, duty=0.5):
    s = 1.0 - duty
    # LF & RH swing first, then RF & LH
    return GaitPattern("trot", stride, (((0.0, s),), ((0.5, 0.5 + s),), ((0.5, 0.5 + s),), ((0.0, s),)))


def crawl(stride=2.0, duty=0.85):
    s = 1.0 - duty
    # one leg at a time, evenly spaced over the stride: LF, RH, RF, LH
    order = (0, 3, 1, 2)
    offsets = {leg: 0.25 * k for k, leg in enumerate(order)}
    return GaitPattern("crawl", stride, tuple(((offsets[i], offsets[i] + s),) for i in range(4)))


GAITS = {"drive": drive, "trot": trot, "crawl": crawl}


def make_gait(spec) -> GaitPattern:
    """Build a pattern from a name or a dict ``{"name": ..., "stride": ..., "duty": ...}``
    or an explicit ``{"name", "stride", "swing": {"LF": [[lo, td]], ...}}``."""
    if isinstance(spec, GaitPattern):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name", "drive")
    if "swing" in spec:
        sw = spec["swing"]
        windows = tuple(tuple(tuple(w) for w in sw.get(leg, ())) for leg in LEGS)
        return GaitPattern(name, float(spec.get("stride", 1.0)), windows)
    if name not in GAITS:
        raise ValueError(f"unknown gait '{name}' (known: {sorted(GAITS)})")
    return GAITS[name](**spec)


def contact_flags(gait: GaitPattern, t: float) -> tuple:
    phase = (t / gait.stride) % 1.0
    # guard against phase = 1 - tiny after float modulo of exact multiples
    if abs(phase - 1.0) < 1e-12:
        phase = 0.0
    return tuple(not any(lo <= phase < td for lo, td in windows) for windows in gait.swing)


@dataclass(frozen=True)
class ContactSchedule:
    t0: float
    horizon: float
    phases: tuple            # ((flags, duration), ...)

    def __post_init__(self):
        if abs(sum(d for _, d in self.phases) - self.horizon) > 1e-9:
            raise ValueError("phase durations must sum to the horizon")

    @property
    def start_times(self):
        return np.concatenate([[0.0], np.cumsum([d for _, d in self.phases])[:-1]]) + self.t0

    def flags_at(self, t):
        for (flags, d), ts in zip(self.phases, self.start_times):
            if t < ts + d:
                return flags
        return self.phases[-1][0]


def schedule_horizon(gait: GaitPattern, t0: float, tau: float, min_phase: float = 0.0) -> ContactSchedule:
    """Split ``[t0, t0 + tau]`` at every lift-off / touch-down event.

    Phases shorter than ``min_phase`` are merged into their predecessor (or successor,
    for a leading sliver), so flags of very short phases are dropped.
    """
    if tau <= 0:
        raise ValueError("horizon must be positive")
    if gait.is_driving:
        return ContactSchedule(t0, tau, (((True,) * 4, tau),))
    S = gait.stride
    ev = gait.events()
    k0 = int(np.floor(t0 / S)) - 1
    times = []
    k = k0
    while True:
        base = k * S
        for e in ev:
            te = base + e * S
            if t0 + MERGE_TOL < te < t0 + tau - MERGE_TOL:
                times.append(te)
        if base > t0 + tau:
            break
        k += 1
    bounds = [t0] + sorted(set(times)) + [t0 + tau]
    phases = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        flags = contact_flags(gait, 0.5 * (a + b))
        if phases and phases[-1][0] == flags:
            phases[-1] = (flags, phases[-1][1] + (b - a))
        else:
            phases.append((flags, b - a))
    if min_phase > 0 and len(phases) > 1:
        merged = []
        for flags, d in phases:
            if merged and d < min_phase:
                merged[-1] = (merged[-1][0], merged[-1][1] + d)
            elif merged and merged[-1][1] < min_phase:
                merged[-1] = (flags, merged[-1][1] + d)
            else:
                merged.append((flags, d))
        phases = []
        for flags, d in merged:
            if phases and phases[-1][0] == flags:
                phases[-1] = (flags, phases[-1][1] + d)
            else:
                phases.append((flags, d))
    # absorb rounding so the durations sum exactly
    total = sum(d for _, d in phases)
    flags, d = phases[-1]
    phases[-1] = (flags, d + (tau - total))
    return ContactSchedule(t0, tau, tuple(phases))
