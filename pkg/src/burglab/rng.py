"""Counter-based Gaussian streams for reproducible ensembles.

Every trajectory owns a Philox stream keyed by (seed, trajectory id).  Each
time step reserves a disjoint 2**128 segment of the counter space, so the
draws for step k depend only on (seed, trajectory, k) and never on how many
draws earlier steps consumed, which solver asked for them, or which worker
process ran the trajectory.
"""

from __future__ import annotations

import numpy as np

# one Philox segment per step; 2**128 draws is unreachable within a step
_STEP_STRIDE = 1 << 128


class NoiseStream:
    """Deterministic standard-normal source addressed by step index."""

    def __init__(self, seed: int, trajectory: int):
        if trajectory < 0:
            raise ValueError("trajectory id must be non-negative")
        self.seed = int(seed)
        self.trajectory = int(trajectory)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.trajectory,))
        self._key = ss.generate_state(2, dtype=np.uint64)

    def normals(self, step: int, count: int) -> np.ndarray:
        """Standard normals for the given step, in a fixed draw order."""
        if step < 0:
            raise ValueError("step index must be non-negative")
        bg = np.random.Philox(counter=step * _STEP_STRIDE, key=self._key)
        return np.random.Generator(bg).standard_normal(count)

    def __repr__(self):  # pragma: no cover
        return f"NoiseStream(seed={self.seed}, trajectory={self.trajectory})"
