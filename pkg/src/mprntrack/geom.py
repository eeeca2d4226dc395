"""Coordinate conventions, bistatic range geometry and beam membership.

Angles follow the plane-based beam description used throughout the package:
azimuth is measured in the XY-plane (``atan2(y, x)``) and elevation in the
XZ-plane (``atan2(z, x)``).  A beam is therefore the product of two wedges
around the +X boresight.  Pass ``convention="conventional"`` to use the usual
``atan2(z, hypot(x, y))`` elevation instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

XZ = "xz"
CONVENTIONAL = "conventional"
_CONVENTIONS = (XZ, CONVENTIONAL)

# slack on angular boundary tests, absorbs trig round-off
ANGLE_EPS = 1e-12


def as_position(x: Sequence[float]) -> np.ndarray:
    """Return ``x`` as a finite float64 vector of length 3."""
    p = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"position must be finite, got {p}")
    return p


def wrap_angle(a):
    """Wrap angle(s) to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class NodeGeometry:
    """One transmitter and ``S`` receivers; receiver 1 is the monostatic radar."""

    tx_position: np.ndarray
    rx_positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        tx = as_position(self.tx_position)
        rx = np.asarray(self.rx_positions, dtype=float)
        if rx.ndim != 2 or rx.shape[1] != 3 or rx.shape[0] < 1:
            raise ValueError("rx_positions must be an (S, 3) array with S >= 1")
        if not np.all(np.isfinite(rx)):
            raise ValueError("rx_positions must be finite")
        if not np.allclose(rx[0], tx, rtol=0.0, atol=1e-9):
            raise ValueError(
                "monostatic invariant violated: receiver 1 must be co-located "
                f"with the transmitter (tx={tx.tolist()}, rx1={rx[0].tolist()})"
            )
        tx.setflags(write=False)
        rx = rx.copy()
        rx.setflags(write=False)
        object.__setattr__(self, "tx_position", tx)
        object.__setattr__(self, "rx_positions", rx)

    @property
    def n_receivers(self) -> int:
        return self.rx_positions.shape[0]

    def baseline(self, receiver: int) -> float:
        """Transmitter-receiver distance for a 1-based receiver index."""
        return float(np.linalg.norm(self.tx_position - self.rx_positions[receiver - 1]))

    def baselines(self) -> np.ndarray:
        return np.linalg.norm(self.rx_positions - self.tx_position, axis=1)


@dataclass(frozen=True)
class BeamConstraint:
    """Azimuth/elevation wedges plus a monostatic range interval.

    Angles are in radians, ranges in meters.  ``range_max`` may be ``inf``.
    """

    azimuth_center: float
    azimuth_halfwidth: float
    elevation_center: float
    elevation_halfwidth: float
    range_min: float = 0.0
    range_max: float = math.inf

    def __post_init__(self):
        if not (self.azimuth_halfwidth >= 0 and self.elevation_halfwidth >= 0):
            raise ValueError("beam halfwidths must be >= 0")
        if not (0 <= self.range_min <= self.range_max):
            raise ValueError(
                f"need 0 <= range_min <= range_max, got [{self.range_min}, {self.range_max}]"
            )

    @classmethod
    def from_degrees(cls, az_center, az_half, el_center, el_half, range_min=0.0, range_max=math.inf):
        return cls(
            math.radians(az_center),
            math.radians(az_half),
            math.radians(el_center),
            math.radians(el_half),
            float(range_min),
            float(range_max),
        )

    @property
    def azimuth_interval(self) -> tuple[float, float]:
        return (self.azimuth_center - self.azimuth_halfwidth, self.azimuth_center + self.azimuth_halfwidth)

    @property
    def elevation_interval(self) -> tuple[float, float]:
        return (
            self.elevation_center - self.elevation_halfwidth,
            self.elevation_center + self.elevation_halfwidth,
        )

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper bounds in (range, azimuth, elevation) order."""
        lo = np.array([self.range_min, self.azimuth_interval[0], self.elevation_interval[0]])
        hi = np.array([self.range_max, self.azimuth_interval[1], self.elevation_interval[1]])
        return lo, hi

    def with_range(self, range_min: float, range_max: float) -> "BeamConstraint":
        return replace(self, range_min=float(range_min), range_max=float(range_max))

    def widened(self, factor: float) -> "BeamConstraint":
        """Scale both angular halfwidths by ``factor``."""
        return replace(
            self,
            azimuth_halfwidth=self.azimuth_halfwidth * factor,
            elevation_halfwidth=self.elevation_halfwidth * factor,
        )


def bistatic_range(x, tx, rx) -> float:
    """Transmitter-target-receiver path length ``|x - tx| + |x - rx|``."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - np.asarray(tx, float)) + np.linalg.norm(x - np.asarray(rx, float)))


def bistatic_ranges(points: np.ndarray, tx, rx) -> np.ndarray:
    """Vectorised :func:`bistatic_range` over an ``(N, 3)`` array."""
    points = np.asarray(points, dtype=float)
    return np.linalg.norm(points - tx, axis=-1) + np.linalg.norm(points - rx, axis=-1)


def cart_to_sph(x, convention: str = XZ) -> tuple[float, float, float]:
    """Return ``(range, azimuth, elevation)`` of a Cartesian offset."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("degenerate direction: cannot convert the origin to spherical")
    az = math.atan2(x[1], x[0])
    if convention == XZ:
        el = math.atan2(x[2], x[0])
    elif convention == CONVENTIONAL:
        el = math.atan2(x[2], math.hypot(x[0], x[1]))
    else:
        raise ValueError(f"unknown elevation convention {convention!r}")
    return r, az, el


def cart_to_sph_many(points: np.ndarray, convention: str = XZ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=float)
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    az = np.arctan2(y, x)
    if convention == XZ:
        el = np.arctan2(z, x)
    elif convention == CONVENTIONAL:
        el = np.arctan2(z, np.hypot(x, y))
    else:
        raise ValueError(f"unknown elevation convention {convention!r}")
    return r, az, el


def sph_to_cart(rng, azimuth, elevation, convention: str = XZ) -> np.ndarray:
    """Inverse of :func:`cart_to_sph`; broadcasts over array inputs.

    For the XZ convention the inverse is exact for ``|azimuth|, |elevation| < pi/2``.
    """
    rng = np.asarray(rng, dtype=float)
    ca, sa = np.cos(azimuth), np.sin(azimuth)
    ce, se = np.cos(elevation), np.sin(elevation)
    if convention == XZ:
        # direction is proportional to (1, tan az, tan el), scaled by cos(az) cos(el)
        d = np.stack(np.broadcast_arrays(ca * ce, sa * ce, se * ca), axis=-1)
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    elif convention == CONVENTIONAL:
        d = np.stack(np.broadcast_arrays(ce * ca, ce * sa, se), axis=-1)
    else:
        raise ValueError(f"unknown elevation convention {convention!r}")
    return rng[..., None] * d


def in_beam(x, beam: BeamConstraint, origin=(0.0, 0.0, 0.0), convention: str = XZ) -> bool:
    """True iff ``x`` lies inside the beam's angular wedges and range interval (inclusive)."""
    r, az, el = cart_to_sph(np.asarray(x, float) - np.asarray(origin, float), convention)
    return bool(
        abs(float(wrap_angle(az - beam.azimuth_center))) <= beam.azimuth_halfwidth + ANGLE_EPS
        and abs(float(wrap_angle(el - beam.elevation_center))) <= beam.elevation_halfwidth + ANGLE_EPS
        and beam.range_min * (1 - 1e-12) <= r <= beam.range_max * (1 + 1e-12)
    )


def in_beam_many(points, beam: BeamConstraint, origin=(0.0, 0.0, 0.0), convention: str = XZ) -> np.ndarray:
    r, az, el = cart_to_sph_many(np.asarray(points, float) - np.asarray(origin, float), convention)
    return (
        (np.abs(wrap_angle(az - beam.azimuth_center)) <= beam.azimuth_halfwidth + ANGLE_EPS)
        & (np.abs(wrap_angle(el - beam.elevation_center)) <= beam.elevation_halfwidth + ANGLE_EPS)
        & (r >= beam.range_min * (1 - 1e-12))
        & (r <= beam.range_max * (1 + 1e-12))
    )


def _intersect_interval(a_lo, a_hi, b_lo, b_hi):
    lo, hi = max(a_lo, b_lo), min(a_hi, b_hi)
    if lo <= hi:
        return lo, hi
    # empty: collapse onto a's boundary closest to b's center
    b_mid = 0.5 * (b_lo + b_hi)
    edge = a_hi if b_mid > a_hi else a_lo
    return edge, edge


def _intersect_angles(ca, ha, cb, hb):
    # express b relative to a's center so the seam never splits an interval
    rel = float(wrap_angle(cb - ca))
    lo, hi = _intersect_interval(-ha, ha, rel - hb, rel + hb)
    return ca + 0.5 * (lo + hi), 0.5 * (hi - lo)


def intersect_beams(a: BeamConstraint, b: BeamConstraint) -> BeamConstraint:
    """Axis-wise intersection; an empty axis collapses to a zero-width interval on ``a``'s edge."""
    az_c, az_h = _intersect_angles(a.azimuth_center, a.azimuth_halfwidth, b.azimuth_center, b.azimuth_halfwidth)
    el_c, el_h = _intersect_angles(
        a.elevation_center, a.elevation_halfwidth, b.elevation_center, b.elevation_halfwidth
    )
    r_lo, r_hi = _intersect_interval(a.range_min, a.range_max, b.range_min, b.range_max)
    return BeamConstraint(az_c, az_h, el_c, el_h, r_lo, r_hi)
