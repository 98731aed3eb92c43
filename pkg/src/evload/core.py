"""Time discretization, demand profiles and summary metrics.

A :class:`DemandProfile` holds one power value (kW) per slot of a
:class:`TimeGrid`. Profiles are immutable; arithmetic returns new objects.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, GridMismatchError

_REL_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform slotting of the scheduling horizon.

    ``circular`` grids wrap time modulo ``horizon_hours`` so that windows
    crossing midnight land on the right slots.
    """

    horizon_hours: float = 24.0
    resolution_hours: float = 1.0
    circular: bool = True
    slot_count: int = field(init=False)

    def __post_init__(self):
        if not (self.horizon_hours > 0 and math.isfinite(self.horizon_hours)):
            raise ConfigError(f"grid.horizon_hours must be positive, got {self.horizon_hours}")
        if not (self.resolution_hours > 0 and math.isfinite(self.resolution_hours)):
            raise ConfigError(
                f"grid.resolution_hours must be positive, got {self.resolution_hours}"
            )
        ratio = self.horizon_hours / self.resolution_hours
        n = round(ratio)
        if abs(n * self.resolution_hours - self.horizon_hours) > _REL_TOL * self.horizon_hours:
            raise ConfigError(
                f"grid.resolution_hours={self.resolution_hours} does not divide "
                f"horizon {self.horizon_hours} h"
            )
        if n < 2:
            raise ConfigError(f"grid needs at least 2 slots, got {n}")
        object.__setattr__(self, "slot_count", int(n))

    @property
    def starts(self) -> np.ndarray:
        """Slot start times in hours."""
        return np.arange(self.slot_count) * self.resolution_hours

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.slot_count) + 0.5) * self.resolution_hours

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.slot_count + 1) * self.resolution_hours

    def slot_of(self, t: float) -> int:
        """Index of the slot containing time ``t`` (wrapped if circular)."""
        if self.circular:
            t = t % self.horizon_hours
        k = int(math.floor(t / self.resolution_hours + 1e-12))
        if not 0 <= k < self.slot_count:
            raise DomainError(f"time {t} h is outside the {self.horizon_hours} h horizon")
        return k

    def occupancy(self, start, duration) -> np.ndarray:
        """Hours of overlap between ``[start, start + duration)`` and each slot.

        Vectorized over ``start``/``duration`` (broadcast together); the slot
        axis is last. On circular grids the interval wraps, possibly several
        times, so the row sum always equals ``duration`` exactly up to
        rounding. On linear grids the interval is clipped to the horizon.
        """
        start = np.asarray(start, dtype=float)[..., None]
        duration = np.asarray(duration, dtype=float)[..., None]
        edges = self.edges
        h = self.horizon_hours
        if not self.circular:
            cover = np.clip(edges - start, 0.0, duration)
            return np.diff(cover, axis=-1)
        s = np.mod(start, h)
        wraps = np.floor(duration / h)
        rest = duration - wraps * h
        # coverage of [0, x) by the wrapped interval, evaluated at slot edges
        cover = (
            wraps * edges
            + np.clip(edges - s, 0.0, rest)
            + np.minimum(edges, np.maximum(0.0, s + rest - h))
        )
        return np.diff(cover, axis=-1)


@dataclass(frozen=True, eq=False)
class DemandProfile:
    """Per-slot power values in kW over one horizon."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.shape[0] != self.grid.slot_count:
            raise GridMismatchError(
                f"profile has {v.shape[0]} values but grid has {self.grid.slot_count} slots"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("profile values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: TimeGrid) -> DemandProfile:
        return cls(grid, np.zeros(grid.slot_count))

    @classmethod
    def constant(cls, grid: TimeGrid, kw: float) -> DemandProfile:
        return cls(grid, np.full(grid.slot_count, float(kw)))

    def __len__(self):
        return self.grid.slot_count

    def __add__(self, other: DemandProfile) -> DemandProfile:
        return add(self, other)

    def __sub__(self, other: DemandProfile) -> DemandProfile:
        return add(self, scale(other, -1.0))

    def __mul__(self, k: float) -> DemandProfile:
        return scale(self, k)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, DemandProfile):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def peak(self) -> float:
        return float(self.values.max())

    def allclose(self, other: DemandProfile, atol: float = 1e-9) -> bool:
        _check_grids(self, other)
        return bool(np.allclose(self.values, other.values, rtol=0.0, atol=atol))


def _check_grids(a: DemandProfile, b: DemandProfile) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


def energy(profile: DemandProfile) -> float:
    """Energy in kWh delivered by ``profile``."""
    return float(np.sum(profile.values) * profile.grid.resolution_hours)


def par(profile: DemandProfile) -> float:
    """Peak-to-average ratio."""
    mean = float(np.mean(profile.values))
    if not mean > 0:
        raise DomainError(f"PAR undefined for non-positive mean load ({mean})")
    return float(profile.values.max()) / mean


def add(a: DemandProfile, b: DemandProfile) -> DemandProfile:
    _check_grids(a, b)
    return DemandProfile(a.grid, a.values + b.values)


def scale(a: DemandProfile, k: float) -> DemandProfile:
    return DemandProfile(a.grid, a.values * float(k))


def total(profiles: Sequence[DemandProfile], grid: TimeGrid | None = None) -> DemandProfile:
    """Slot-wise sum of ``profiles`` (all on the same grid)."""
    if not profiles:
        if grid is None:
            raise ValueError("need a grid to sum an empty sequence")
        return DemandProfile.zeros(grid)
    g = profiles[0].grid
    for p in profiles:
        if p.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {p.grid}")
    return DemandProfile(g, np.sum([p.values for p in profiles], axis=0))


# -- CSV ---------------------------------------------------------------------

def fmt_number(x: float) -> str:
    s = f"{x:.6g}"
    return "0" if s == "-0" else s


def profile_to_csv(
    profile: DemandProfile,
    path: str | Path | None = None,
    stderr: np.ndarray | None = None,
) -> str:
    """Serialize as ``time_hours,value_kw[,stderr_kw]`` with 6 significant digits.

    Returns the text; also writes it to ``path`` when given.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["time_hours", "value_kw"]
    if stderr is not None:
        stderr = np.asarray(stderr, dtype=float)
        if stderr.shape != profile.values.shape:
            raise GridMismatchError("stderr length differs from profile length")
        header.append("stderr_kw")
    w.writerow(header)
    for i, (t, v) in enumerate(zip(profile.grid.starts, profile.values)):
        row = [fmt_number(t), fmt_number(v)]
        if stderr is not None:
            row.append(fmt_number(stderr[i]))
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def profile_from_csv(path: str | Path, circular: bool = True) -> DemandProfile:
    """Read a file written by :func:`profile_to_csv`."""
    return parse_profile_csv(Path(path).read_text(), circular=circular)


def parse_profile_csv(text: str, circular: bool = True) -> DemandProfile:
    """Parse CSV text; the grid is inferred from the time column."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header[:2] != ["time_hours", "value_kw"]:
        raise ConfigError(f"unexpected CSV header {header}")
    times = np.array([float(r[0]) for r in body])
    values = np.array([float(r[1]) for r in body])
    if len(times) < 2:
        raise ConfigError("profile CSV needs at least 2 rows")
    res = float(times[1] - times[0])
    grid = TimeGrid(horizon_hours=res * len(times), resolution_hours=res, circular=circular)
    return DemandProfile(grid, values)
