"""Material behaviour and the moving heat source.

Temperatures are degrees Celsius, everything else SI.  Latent heat of fusion
enters through an apparent heat capacity: the liquid fraction is a smoothed
step between solidus and liquidus, and its derivative times ``rho * L`` is
added to the sensible volumetric capacity.  The smoothing width can be
stretched by ``mushy_scale`` to trade sharpness against Newton behaviour.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Material",
    "phase_fraction",
    "heat_capacity",
    "conductivity",
    "Beam",
    "LaserPath",
    "beam_source",
]


@dataclass(frozen=True)
class Material:
    """Temperature-dependent thermal properties of a powder-bed alloy.

    Specific heat and conductivity grow linearly with temperature up to the
    solidus and are held constant above it.  Defaults are a nickel superalloy.
    """

    density: float = 8440.0            # kg/m^3
    latent_heat: float = 2.8e5         # J/kg
    solidus: float = 1290.0            # degC
    liquidus: float = 1350.0           # degC
    mushy_scale: float = 1.0           # widens the phase transition interval
    specific_heat_ref: float = 405.0   # J/(kg K) at 0 degC
    specific_heat_slope: float = 0.247
    conductivity_ref: float = 9.5      # W/(m K) at 0 degC
    conductivity_slope: float = 0.015

    def __post_init__(self):
        if self.liquidus <= self.solidus:
            raise ValueError("liquidus must exceed solidus")
        if self.mushy_scale <= 0:
            raise ValueError("mushy_scale must be positive")

    @property
    def melt_center(self) -> float:
        return 0.5 * (self.solidus + self.liquidus)

    @property
    def melt_width(self) -> float:
        return 0.5 * self.mushy_scale * (self.liquidus - self.solidus)

    def with_mushy_scale(self, scale: float) -> "Material":
        return dataclasses.replace(self, mushy_scale=scale)

    def without_latent_heat(self) -> "Material":
        return dataclasses.replace(self, latent_heat=0.0)


def phase_fraction(mat: Material, u):
    """Liquid fraction and its first two temperature derivatives."""
    w = mat.melt_width
    theta = np.tanh((np.asarray(u, dtype=float) - mat.melt_center) / w)
    f = 0.5 * (theta + 1.0)
    df = (1.0 - theta * theta) / (2.0 * w)
    d2f = theta * (theta * theta - 1.0) / (w * w)
    return f, df, d2f


def heat_capacity(mat: Material, u):
    """Apparent volumetric heat capacity ``c(u)`` and ``dc/du``.

    ``c = rho * (c_s(u) + L * f'(u))`` with the sensible part clamped above
    the solidus.
    """
    u = np.asarray(u, dtype=float)
    below = u < mat.solidus
    cs = mat.specific_heat_ref + mat.specific_heat_slope * np.minimum(u, mat.solidus)
    dcs = np.where(below, mat.specific_heat_slope, 0.0)
    if mat.latent_heat != 0.0:
        _, df, d2f = phase_fraction(mat, u)
        c = mat.density * (cs + mat.latent_heat * df)
        dc = mat.density * (dcs + mat.latent_heat * d2f)
    else:
        c = mat.density * cs
        dc = mat.density * dcs
    return c, dc


def conductivity(mat: Material, u):
    """Thermal conductivity ``k(u)`` and ``dk/du``, clamped above solidus."""
    u = np.asarray(u, dtype=float)
    below = u < mat.solidus
    k = mat.conductivity_ref + mat.conductivity_slope * np.minimum(u, mat.solidus)
    dk = np.where(below, mat.conductivity_slope, 0.0)
    return k, dk


@dataclass(frozen=True)
class Beam:
    """Gaussian laser beam with an exponentially decaying absorption depth.

    In-plane the intensity is a normalized 2D Gaussian of the transverse
    distance to the beam axis; in depth it follows a half-Gaussian below the
    powder surface and is zero above.  The product integrates to
    ``power * absorptivity`` over the half space.
    """

    power: float = 179.2               # W
    absorptivity: float = 0.32
    spot_d4sigma: float = 170e-6       # beam diameter, 4 sigma convention
    depth_sigma_factor: float = 0.28   # penetration sigma / spot sigma
    surface: float = 0.0               # depth axis coordinate of the surface
    cutoff_sigmas: float = 6.0

    @property
    def sigma(self) -> float:
        return 0.25 * self.spot_d4sigma

    @property
    def depth_sigma(self) -> float:
        return self.depth_sigma_factor * self.sigma

    @property
    def absorbed_power(self) -> float:
        return self.power * self.absorptivity


@dataclass(frozen=True)
class LaserPath:
    """Piecewise-linear beam trajectory in the surface plane.

    ``points`` has one row per vertex (d - 1 in-plane coordinates), ``times``
    the matching monotone arrival times.  Outside ``[times[0], times[-1]]``
    the beam is off.
    """

    points: tuple
    times: tuple

    def __post_init__(self):
        points = tuple(tuple(float(c) for c in p) for p in self.points)
        times = tuple(float(t) for t in self.times)
        if len(points) != len(times):
            raise ValueError("one arrival time per path vertex required")
        if len(points) < 2:
            raise ValueError("a path needs at least two vertices")
        if np.any(np.diff(times) <= 0):
            raise ValueError("arrival times must be strictly increasing")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "times", times)

    @staticmethod
    def from_polyline(points, speed: float, start_time: float = 0.0) -> "LaserPath":
        """Path traversing a polyline at constant speed."""
        pts = np.asarray(points, dtype=float)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg == 0.0):
            raise ValueError("polyline contains a zero-length segment")
        times = start_time + np.concatenate(([0.0], np.cumsum(seg / speed)))
        return LaserPath(tuple(map(tuple, pts)), tuple(times))

    @property
    def end_time(self) -> float:
        return self.times[-1]

    @property
    def total_length(self) -> float:
        pts = np.asarray(self.points)
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    def position(self, t):
        """Beam center at times ``t`` plus an on/off mask, vectorized."""
        t = np.asarray(t, dtype=float)
        times = np.asarray(self.times)
        pts = np.asarray(self.points)
        on = (t >= times[0]) & (t <= times[-1])
        seg = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
        t0 = times[seg]
        t1 = times[seg + 1]
        w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        pos = pts[seg] + w[..., None] * (pts[seg + 1] - pts[seg])
        return pos, on

    def segments(self):
        """(start point, end point, start time, end time) per path segment."""
        pts = np.asarray(self.points)
        return [
            (pts[i], pts[i + 1], self.times[i], self.times[i + 1])
            for i in range(len(self.times) - 1)
        ]


def beam_source(beam: Beam, path: LaserPath, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Volumetric heat input at space-time points.

    ``x`` is (N, d) with the depth axis last, ``t`` is (N,).  The last axis is
    measured against ``beam.surface``; the remaining d - 1 axes are matched
    with the in-plane path coordinates.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    n, d = x.shape
    center, on = path.position(t)
    if center.shape[-1] != d - 1:
        raise ValueError("path coordinates must have one dimension fewer than x")
    sig = beam.sigma
    sig_z = beam.depth_sigma
    r2 = np.sum((x[:, : d - 1] - center) ** 2, axis=-1)
    z = x[:, d - 1] - beam.surface
    cut = beam.cutoff_sigmas
    live = on & (z <= 0.0) & (z >= -cut * sig_z) & (r2 <= (cut * sig) ** 2)
    q = np.zeros(n)
    if np.any(live):
        amp = beam.absorbed_power / (2.0 * np.pi * sig * sig)
        depth = 2.0 / (np.sqrt(2.0 * np.pi) * sig_z)
        q[live] = (amp * depth
                   * np.exp(-0.5 * r2[live] / sig**2)
                   * np.exp(-0.5 * (z[live] / sig_z) ** 2))
    return q
