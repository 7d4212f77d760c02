"""White-in-time random forcing with a fixed spatial spectrum.

The stirring is sum_s b_s dbeta_s(t) e_s(x) over a finite set of nonzero
integer modes s, written in the real trigonometric basis

    e_k(x)  = sqrt(2) cos(2 pi k x),   k >= 1
    e_-k(x) = sqrt(2) sin(2 pi k x),

so each mode carries unit L2 norm.  The spectral weights
B_m = sum_s |2 pi s|^(2m) b_s^2 set the energy input rate (B_0 / 2) and the
small-separation expansion of the forcing correlation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class ForcingSpec:
    """Finite forcing spectrum: sorted (mode, amplitude) pairs, modes != 0."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(s), float(b)) for s, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        modes = [s for s, _ in pairs]
        if not modes:
            raise ValueError("forcing support is empty")
        if 0 in modes:
            raise ValueError("mode 0 is not allowed (zero-mean forcing)")
        if len(set(modes)) != len(modes):
            raise ValueError("duplicate forcing modes")
        if list(modes) != sorted(modes):
            raise ValueError("forcing modes must be sorted")
        if not all(np.isfinite(b) for _, b in pairs):
            raise ValueError("forcing amplitudes must be finite")
        if all(b == 0.0 for _, b in pairs):
            raise ValueError("forcing spectrum is identically zero")

    @classmethod
    def from_dict(cls, coefficients: Mapping[int, float]) -> "ForcingSpec":
        return cls(tuple(sorted((int(s), float(b)) for s, b in coefficients.items())))

    @classmethod
    def power_law(cls, decay: float = 2.0, s_max: int = 8, intensity: float = 1.0) -> "ForcingSpec":
        """b_s = A |s|^-decay on 1 <= |s| <= s_max, A fixed so that B_0 = intensity."""
        if s_max < 1:
            raise ValueError("s_max must be >= 1")
        if intensity <= 0:
            raise ValueError("intensity (B_0) must be positive")
        raw = {s: abs(s) ** -float(decay) for k in range(1, s_max + 1) for s in (k, -k)}
        norm = sum(b * b for b in raw.values())
        scale = np.sqrt(intensity / norm)
        return cls.from_dict({s: scale * b for s, b in raw.items()})

    @property
    def modes(self) -> np.ndarray:
        return _support(self)[0]

    @property
    def amplitudes(self) -> np.ndarray:
        return _support(self)[1]

    @property
    def s_max(self) -> int:
        return int(np.max(np.abs(self.modes)))

    @property
    def b0(self) -> float:
        return spectral_weight(self, 0)

    def to_dict(self) -> dict:
        return {int(s): float(b) for s, b in self.pairs}


@dataclass(frozen=True)
class NoiseIncrement:
    """One Wiener increment of the forcing, aligned with spec.modes."""

    modes: np.ndarray
    values: np.ndarray
    dt: float


@lru_cache(maxsize=64)
def _support(spec: ForcingSpec):
    modes = np.array([s for s, _ in spec.pairs], dtype=np.int64)
    amps = np.array([b for _, b in spec.pairs], dtype=np.float64)
    return modes, amps


def spectral_weight(spec: ForcingSpec, m: int) -> float:
    """B_m = sum_s |2 pi s|^(2m) b_s^2 (m = 0 gives the energy input B_0)."""
    modes, amps = _support(spec)
    return float(np.sum(np.abs(2.0 * np.pi * modes) ** (2 * m) * amps**2))


def correlation(spec: ForcingSpec, l) -> np.ndarray | float:
    """Spatial correlation of the forcing at separation l: sum_s b_s^2 cos(2 pi s l)."""
    modes, amps = _support(spec)
    larr = np.asarray(l, dtype=np.float64)
    out = np.cos(2.0 * np.pi * larr[..., None] * modes) @ (amps**2)
    return out if larr.ndim else float(out)


def integrated_correlation(spec: ForcingSpec, l) -> np.ndarray | float:
    """Antiderivative of the correlation from 0 to l: sum_s b_s^2 sin(2 pi s l)/(2 pi s)."""
    modes, amps = _support(spec)
    larr = np.asarray(l, dtype=np.float64)
    out = np.sin(2.0 * np.pi * larr[..., None] * modes) @ (amps**2 / (2.0 * np.pi * modes))
    return out if larr.ndim else float(out)


def sample_normals(spec: ForcingSpec, stream, step: int) -> np.ndarray:
    """One standard normal per supported mode, in spec.modes order.

    This is the single randomness entry point: every scheme scales these
    draws by its own per-mode factor, so runs with the same (seed,
    trajectory, step) see the same underlying Wiener path regardless of
    solver or resolution.
    """
    modes, _ = _support(spec)
    return stream.normals(step, modes.size)


def sample_increment(spec: ForcingSpec, dt: float, stream, step: int) -> NoiseIncrement:
    """Draw the Wiener increment b_s sqrt(dt) g_s for every supported mode."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    modes, amps = _support(spec)
    g = sample_normals(spec, stream, step)
    return NoiseIncrement(modes=modes, values=amps * np.sqrt(dt) * g, dt=float(dt))
