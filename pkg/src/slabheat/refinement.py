"""Refinement targets that track a moving heat source.

The target assigns every space-time point a real-valued desired tree depth.
Close behind the beam the depth is largest; it decays with the time elapsed
since the beam passed and with the distance to the track.  Both the decay
depth and the spatial width follow a tabulated schedule interpolated in the
elapsed time, so coarsening behind the pool and the growth of the heat
affected zone are captured with a handful of rows.

A cell is split when the rounded maximum of the target over a closed sample
grid on the cell exceeds the cell's level; see ``grid.build_slab_mesh``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import LaserPath

__all__ = [
    "SourceSchedule",
    "COARSE_SCHEDULE",
    "FINE_SCHEDULE",
    "source_target",
]


@dataclass(frozen=True)
class SourceSchedule:
    """Tabulated refinement depth around a moving source.

    Rows are sampled at increasing ``delays`` (seconds since the source
    passed).  ``depths`` is the peak target level on the track, ``sigmas``
    the Gaussian decay length away from it, and ``depth_stretch`` rescales
    the vertical axis so early rows refine a shallow boat-shaped region.
    Between rows all three are interpolated linearly; past the last row the
    contribution vanishes.
    """

    delays: tuple
    depths: tuple
    sigmas: tuple
    depth_stretch: tuple

    def __post_init__(self):
        n = len(self.delays)
        if not (len(self.depths) == len(self.sigmas) == len(self.depth_stretch) == n):
            raise ValueError("schedule columns must have equal length")
        if n < 1:
            raise ValueError("schedule needs at least one row")
        d = np.asarray(self.delays)
        if d[0] != 0.0 or np.any(np.diff(d) <= 0):
            raise ValueError("delays must start at 0 and increase strictly")
        if min(self.sigmas) <= 0 or min(self.depth_stretch) <= 0:
            raise ValueError("sigmas and depth_stretch must be positive")

    @property
    def horizon(self) -> float:
        return self.delays[-1]

    def evaluate(self, path: LaserPath, pts: np.ndarray,
                 surface: float = 0.0) -> np.ndarray:
        """Target level at space-time points (time last column).

        For every path segment the in-plane closest point on the segment
        gives both the distance and the moment the source was nearest; the
        row values at the elapsed time since that moment weight a Gaussian
        of the distance.  The result is the maximum over segments, so a
        serpentine track re-refines where a later pass comes close again.
        """
        pts = np.asarray(pts, dtype=float)
        dim = pts.shape[1]
        d = dim - 1
        x_plane = pts[:, : d - 1]
        depth = (pts[:, d - 1] - surface) if d >= 1 else np.zeros(len(pts))
        t = pts[:, d]
        delays = np.asarray(self.delays)
        best = np.zeros(len(pts))
        for p0, p1, t0, t1 in path.segments():
            seg = p1 - p0
            s = (x_plane - p0) @ seg / (seg @ seg)
            np.clip(s, 0.0, 1.0, out=s)
            nearest = p0 + s[:, None] * seg
            dt = t - (t0 + s * (t1 - t0))
            live = (dt >= 0.0) & (dt <= self.horizon)
            if not np.any(live):
                continue
            dtl = dt[live]
            level = np.interp(dtl, delays, self.depths)
            sig = np.interp(dtl, delays, self.sigmas)
            stretch = np.interp(dtl, delays, self.depth_stretch)
            r2 = np.sum((x_plane[live] - nearest[live]) ** 2, axis=1)
            r2 = r2 + (depth[live] / stretch) ** 2
            val = level * np.exp(-0.5 * r2 / (sig * sig))
            best[live] = np.maximum(best[live], val)
        return best


def source_target(schedule: SourceSchedule, path: LaserPath, surface: float = 0.0):
    """Vectorized target callable for ``grid.build_slab_mesh``."""
    def target(pts: np.ndarray) -> np.ndarray:
        return schedule.evaluate(path, pts, surface)
    return target


#: Schedule matched to a millimetre-scale single track at moderate resolution.
COARSE_SCHEDULE = SourceSchedule(
    delays=(0.0, 1.2e-3, 6e-3, 30e-3, 100e-3),
    depths=(5.4, 3.5, 2.5, 1.5, 1.0),
    sigmas=(180e-6, 240e-6, 400e-6, 900e-6, 1100e-6),
    depth_stretch=(0.5, 0.5, 0.8, 1.0, 1.0),
)

#: Deeper, narrower schedule resolving the melt pool rim.
FINE_SCHEDULE = SourceSchedule(
    delays=(0.0, 0.08e-3, 0.47e-3, 1.2e-3, 4e-3, 16e-3),
    depths=(6.0, 5.3, 4.5, 3.5, 2.5, 0.5),
    sigmas=(100e-6, 120e-6, 150e-6, 160e-6, 200e-6, 240e-6),
    depth_stretch=(0.5, 0.5, 0.5, 0.8, 1.0, 1.0),
)
