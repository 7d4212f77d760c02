"""Trajectory and ensemble statistics: increments, correlations, window averages.

Structure functions come in two flavours per separation l and order p:
signed moments integral (delta_l u)^p dx (integer p only) and absolute
moments integral |delta_l u|^p dx.  Separations are snapped to the sample
grid (l' = round(l n)/n) and the snapped value is what gets reported.

Long-run averages follow the double-bracket convention: time-average over
the window [T, T + sigma] along each trajectory (trapezoid rule on the
sample grid), then an ensemble mean with a standard error across
trajectories.  MomentAccumulator implements the across-trajectory part as a
mergeable Welford recursion so partial results from worker processes can be
combined in any grouping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralField, to_physical
from .godunov import GridField


@dataclass(frozen=True)
class BracketSpec:
    """Window [burn_in, burn_in + window] for stationary averages."""

    burn_in: float
    window: float

    def __post_init__(self):
        if self.burn_in < 0 or self.window <= 0:
            raise ValueError("burn_in must be >= 0 and window > 0")


class MomentAccumulator:
    """Running mean / M2 over samples of a fixed array shape (Welford).

    merge() implements the parallel-variance combination, so accumulating
    a stream in one object or splitting it across many and merging gives
    the same result up to rounding.
    """

    def __init__(self, shape=()):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    @property
    def shape(self):
        return self.mean.shape

    def add(self, sample) -> "MomentAccumulator":
        sample = np.asarray(sample, dtype=np.float64)
        if sample.shape != self.mean.shape:
            raise ValueError(f"sample shape {sample.shape} != accumulator {self.mean.shape}")
        self.count += 1
        delta = sample - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (sample - self.mean)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.shape != self.shape:
            raise ValueError(f"cannot merge shapes {other.shape} and {self.shape}")
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / total)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / total)
        self.count = total
        return self

    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.full(self.shape, np.nan)
        return self.m2 / (self.count - 1)

    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance() / self.count)

    def to_dict(self, prefix: str = "") -> dict:
        return {
            f"{prefix}count": np.int64(self.count),
            f"{prefix}mean": self.mean,
            f"{prefix}m2": self.m2,
        }

    @classmethod
    def from_dict(cls, data, prefix: str = "") -> "MomentAccumulator":
        out = cls(np.asarray(data[f"{prefix}mean"]).shape)
        out.count = int(data[f"{prefix}count"])
        out.mean = np.asarray(data[f"{prefix}mean"], dtype=np.float64)
        out.m2 = np.asarray(data[f"{prefix}m2"], dtype=np.float64)
        return out


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """Combined accumulator, inputs untouched."""
    out = MomentAccumulator(a.shape)
    out.merge(a)
    out.merge(b)
    return out


@dataclass
class StructureTable:
    """Ensemble structure functions: across-trajectory accumulators of
    window-averaged increment moments, indexed by (order, separation)."""

    p_list: tuple
    l: np.ndarray
    signed: MomentAccumulator  # (len(p_list), len(l))
    absolute: MomentAccumulator
    pos_cubed: MomentAccumulator  # (len(l),)

    @classmethod
    def empty(cls, p_list, l) -> "StructureTable":
        l = np.asarray(l, dtype=np.float64)
        shape = (len(p_list), l.size)
        return cls(tuple(p_list), l, MomentAccumulator(shape), MomentAccumulator(shape), MomentAccumulator(l.size))

    def _row(self, p: float) -> int:
        for i, q in enumerate(self.p_list):
            if abs(q - p) < 1e-12:
                return i
        raise KeyError(f"order p={p} not tabulated (have {self.p_list})")

    def signed_mean(self, p) -> np.ndarray:
        return self.signed.mean[self._row(p)]

    def signed_stderr(self, p) -> np.ndarray:
        return self.signed.stderr()[self._row(p)]

    def absolute_mean(self, p) -> np.ndarray:
        return self.absolute.mean[self._row(p)]

    def absolute_stderr(self, p) -> np.ndarray:
        return self.absolute.stderr()[self._row(p)]

    @property
    def trajectories(self) -> int:
        return self.signed.count

    def add_trajectory(self, signed, absolute, pos_cubed) -> "StructureTable":
        self.signed.add(signed)
        self.absolute.add(absolute)
        self.pos_cubed.add(pos_cubed)
        return self

    def merge(self, other: "StructureTable") -> "StructureTable":
        if other.p_list != self.p_list or not np.array_equal(other.l, self.l):
            raise ValueError("cannot merge tables over different (p, l) grids")
        self.signed.merge(other.signed)
        self.absolute.merge(other.absolute)
        self.pos_cubed.merge(other.pos_cubed)
        return self


def render(field_or_values, n: int | None = None) -> np.ndarray:
    """Physical samples of a field: grid cells as-is, spectral via transform."""
    if isinstance(field_or_values, SpectralField):
        return to_physical(field_or_values, n or (2 * field_or_values.K + 1))
    if isinstance(field_or_values, GridField):
        return field_or_values.cells
    return np.asarray(field_or_values, dtype=np.float64)


def separation_grid(n: int, per_decade: int = 32, l_min: float | None = None, l_max: float = 0.25) -> np.ndarray:
    """Log-spaced separations snapped to multiples of 1/n, deduplicated."""
    if l_min is None:
        l_min = 4.0 / n
    if not 2.0 / n <= l_min < l_max:
        raise ValueError(f"need 2/n <= l_min < l_max (minimum resolvable is {2.0 / n:.3g})")
    count = max(2, int(np.ceil(per_decade * np.log10(l_max / l_min))) + 1)
    raw = np.geomspace(l_min, l_max, count)
    m = np.unique(np.rint(raw * n).astype(np.int64))
    return m[m >= 2] / n


@dataclass
class IncrementMoments:
    """Spatial moments of increments u(x + l) - u(x) for one snapshot."""

    l_request: np.ndarray
    l_eff: np.ndarray
    p_list: tuple
    signed: np.ndarray  # (len(p_list), len(l)); NaN rows for non-integer p
    absolute: np.ndarray
    pos_cubed: np.ndarray  # (len(l),) mean of ((delta u)^+)^3


def increment_moments(field_or_values, l_grid, p_list=(0.5, 1, 2, 3, 4, 5), n: int | None = None) -> IncrementMoments:
    u = render(field_or_values, n)
    ngrid = u.size
    l_grid = np.atleast_1d(np.asarray(l_grid, dtype=np.float64))
    shifts = np.rint(l_grid * ngrid).astype(np.int64)
    if np.any(shifts < 2):
        bad = l_grid[shifts < 2]
        raise ValueError(
            f"separations {bad} below the minimum resolvable {2.0 / ngrid:.3g} on {ngrid} samples"
        )
    p_arr = np.asarray(p_list, dtype=np.float64)
    signed = np.full((p_arr.size, shifts.size), np.nan)
    absolute = np.empty((p_arr.size, shifts.size))

    idx = (np.arange(ngrid)[None, :] + shifts[:, None]) % ngrid
    delta = u[idx] - u[None, :]  # (nl, n)
    adelta = np.abs(delta)
    d2 = delta * delta
    # build the common powers once instead of calling pow per order
    signed_pow = {1: delta, 2: d2, 3: d2 * delta, 4: d2 * d2}
    signed_pow[5] = signed_pow[4] * delta
    abs_pow = {0.5: np.sqrt(adelta), 1: adelta, 2: d2, 3: d2 * adelta, 4: d2 * d2}
    abs_pow[5] = abs_pow[4] * adelta
    for i, p in enumerate(p_arr):
        if float(p).is_integer():
            ip = int(p)
            sp = signed_pow.get(ip, delta**ip)
            signed[i] = sp.mean(axis=1)
            absolute[i] = abs_pow[ip].mean(axis=1) if ip in abs_pow else np.abs(sp).mean(axis=1)
        else:
            ap = abs_pow.get(float(p), adelta**p)
            absolute[i] = ap.mean(axis=1)
    pos_cubed = 0.5 * (signed_pow[3].mean(axis=1) + abs_pow[3].mean(axis=1))
    return IncrementMoments(
        l_request=l_grid,
        l_eff=shifts / ngrid,
        p_list=tuple(p_arr.tolist()),
        signed=signed,
        absolute=absolute,
        pos_cubed=pos_cubed,
    )


def correlation_from_spectrum(energies: np.ndarray, l_grid) -> tuple:
    """Two-point correlation f(l) = sum_k E_k cos(2 pi k l) and its first two
    l-derivatives, computed exactly from per-wavenumber energies (no finite
    differences)."""
    energies = np.asarray(energies, dtype=np.float64)
    k = 2.0 * np.pi * np.arange(1, energies.size + 1)
    larr = np.atleast_1d(np.asarray(l_grid, dtype=np.float64))
    phase = larr[:, None] * k[None, :]
    f = np.cos(phase) @ energies
    df = -np.sin(phase) @ (k * energies)
    d2f = -np.cos(phase) @ (k**2 * energies)
    return f, df, d2f


def correlation_fl(field: SpectralField, l_grid) -> tuple:
    return correlation_from_spectrum(field.mode_energies(), l_grid)


def sobolev_norm(field: SpectralField, m: int = 0) -> float:
    return field.norm(m)


def dissipation_rate(field: SpectralField, nu: float) -> float:
    """Instantaneous nu ||u||_1^2 (the energy dissipation of the snapshot)."""
    return nu * field.norm(1) ** 2


@dataclass
class OleinikDiagnostics:
    max_pos_slope: float
    sup_abs: float
    total_variation: float
    max_up_jump: float
    max_up_jump_index: int

    def max_pos_slope_excluding_jump(self, values) -> float:
        """Positive slope max with the largest upward jump cell masked out."""
        d = np.roll(values, -1) - values
        d[self.max_up_jump_index] = -np.inf
        return float(np.max(d)) * values.size


def oleinik_diagnostics(field_or_values, n: int | None = None) -> OleinikDiagnostics:
    """One-sided slope, sup and variation diagnostics on the sample grid."""
    u = render(field_or_values, n)
    d = np.roll(u, -1) - u
    j = int(np.argmax(d))
    return OleinikDiagnostics(
        max_pos_slope=float(np.max(d)) * u.size,
        sup_abs=float(np.max(np.abs(u))),
        total_variation=float(np.sum(np.abs(d))),
        max_up_jump=float(d[j]),
        max_up_jump_index=j,
    )


def window_average(times: np.ndarray, series: np.ndarray, bracket: BracketSpec) -> np.ndarray:
    """Trapezoid time-average of series over [burn_in, burn_in + window].

    times must cover the window; series has time on axis 0.
    """
    times = np.asarray(times, dtype=np.float64)
    series = np.asarray(series, dtype=np.float64)
    if times.ndim != 1 or series.shape[0] != times.size:
        raise ValueError("series axis 0 must match times")
    lo, hi = bracket.burn_in, bracket.burn_in + bracket.window
    eps = 1e-9 * max(1.0, hi)
    mask = (times >= lo - eps) & (times <= hi + eps)
    sel = np.where(mask)[0]
    if sel.size < 2:
        raise ValueError(f"window [{lo}, {hi}] contains {sel.size} samples; need >= 2")
    tw = times[sel]
    if tw[0] > lo + eps or tw[-1] < hi - eps:
        raise ValueError(f"samples cover [{tw[0]}, {tw[-1]}], not the window [{lo}, {hi}]")
    return np.trapezoid(series[sel], tw, axis=0) / (tw[-1] - tw[0])


def bracket_average(times: np.ndarray, per_trajectory: np.ndarray, bracket: BracketSpec) -> MomentAccumulator:
    """Double-bracket average: window-average each trajectory, then accumulate
    the ensemble (axis 0 of per_trajectory indexes trajectories)."""
    per_trajectory = np.asarray(per_trajectory, dtype=np.float64)
    acc = MomentAccumulator(per_trajectory.shape[2:])
    for traj in per_trajectory:
        acc.add(window_average(times, traj, bracket))
    return acc
