"""Unit-ball geometry: escape times, boundary rays, quadrature rules.

The spatial domain is the open unit ball in R^n (n = 2 or 3) and the
velocity space is the unit sphere.  On the unit ball the escape times
have closed forms, so no root finding is ever needed:

    tau_plus(x, v)  = -x.v + sqrt(1 - |x|^2 + (x.v)^2)
    tau_minus(x, v) = tau_plus(x, -v)

Boundary rays carry the flux weight |v.nu(x)| of the measure
d_xi = |v.nu| dmu(x) dv, with nu(x) = x on the unit sphere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimension, OutsideDomain
from .numerics import gauss_legendre_01

BOUNDARY_TOL = 1e-10
_DOMAIN_SLACK = 1e-12

INCOMING = "incoming"
OUTGOING = "outgoing"


@dataclass(frozen=True)
class Domain:
    """The unit ball in R^n with its velocity sphere."""

    dimension: int
    radius: float = 1.0
    diameter: float = 2.0

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise InvalidDimension(f"dimension must be 2 or 3, got {self.dimension}")
        if abs(self.diameter - 2.0 * self.radius) > 1e-15:
            raise ValueError("diameter must equal twice the radius")

    @property
    def sphere_measure(self) -> float:
        """|S^{n-1}|, the total velocity measure."""
        return 2.0 * np.pi if self.dimension == 2 else 4.0 * np.pi

    @property
    def volume(self) -> float:
        return np.pi if self.dimension == 2 else 4.0 * np.pi / 3.0


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if np.linalg.norm(x) > 1.0 + _DOMAIN_SLACK:
            raise OutsideDomain(f"|x| = {np.linalg.norm(x)} exceeds 1")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("v must be a unit vector")


@dataclass(frozen=True)
class BoundaryRay:
    """A point of Gamma_- or Gamma_+ together with its d_xi density factor."""

    x: np.ndarray
    v: np.ndarray
    side: str = field(default="")

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if abs(np.linalg.norm(x) - 1.0) > BOUNDARY_TOL:
            raise OutsideDomain("boundary ray must sit on the unit sphere")
        dot = float(np.dot(v, x))
        side = INCOMING if dot < 0 else OUTGOING
        if self.side and self.side != side:
            raise ValueError(f"declared side {self.side!r} inconsistent with v.nu = {dot}")
        object.__setattr__(self, "side", side)

    @property
    def xi_weight(self) -> float:
        return abs(float(np.dot(self.v, self.x)))


def _check_inside(x: np.ndarray):
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 > (1.0 + _DOMAIN_SLACK) ** 2):
        raise OutsideDomain("point outside the closed unit ball")


def tau_plus(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Forward escape time from x along v; closed form on the unit ball."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_inside(x)
    dot = np.sum(x * v, axis=-1)
    disc = 1.0 - np.sum(x * x, axis=-1) + dot * dot
    return -dot + np.sqrt(np.maximum(disc, 0.0))


def tau_minus(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Backward escape time; shares the tau_plus implementation exactly."""
    return tau_plus(x, -np.asarray(v, dtype=float))


def chord_length(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return tau_plus(x, v) + tau_minus(x, v)


def geodesic_distance(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Great-circle distance between unit vectors (boundary points)."""
    dot = np.clip(np.sum(np.asarray(x1) * np.asarray(x2), axis=-1), -1.0, 1.0)
    return np.arccos(dot)


def velocity_angle(v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    return geodesic_distance(v1, v2)


def ground_distance(x1, v1, x2, v2) -> np.ndarray:
    """Metric on boundary rays: boundary geodesic plus velocity angle.

    This additive geodesic/angle form satisfies the metric axioms exactly
    and is bi-Lipschitz equivalent (factor <= pi/2) to the ambient norms
    |x-x'| + |v-v'|.
    """
    return geodesic_distance(x1, x2) + velocity_angle(v1, v2)


def rotate2(u: np.ndarray, angle) -> np.ndarray:
    """Rotate planar vectors by the given angle (broadcasts over leading axes)."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty(np.broadcast_shapes(u.shape[:-1], angle.shape) + (2,))
    out[..., 0] = c * u[..., 0] - s * u[..., 1]
    out[..., 1] = s * u[..., 0] + c * u[..., 1]
    return out


def rotate_about_axis(u: np.ndarray, axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation of 3-vectors about a unit axis."""
    angle = np.asarray(angle, dtype=float)[..., None]
    axis = np.asarray(axis, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    cross = np.cross(np.broadcast_to(axis, u.shape), u)
    dot = np.sum(axis * u, axis=-1, keepdims=True)
    return u * c + cross * s + axis * dot * (1.0 - c)


def tangent_frame(nu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal tangent basis at unit vectors nu (n=3)."""
    nu = np.asarray(nu, dtype=float)
    ref = np.zeros_like(nu)
    use_z = np.abs(nu[..., 2]) < 0.9
    ref[..., 2] = np.where(use_z, 1.0, 0.0)
    ref[..., 0] = np.where(use_z, 0.0, 1.0)
    e1 = np.cross(nu, ref)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(nu, e1)
    return e1, e2


@dataclass
class QuadratureRule:
    """Nodes and nonnegative weights discretizing X x V or Gamma_+-/Gamma_-.

    For boundary rules the |v.nu| factor of d_xi is folded into the
    weights, so sum(w) approximates the total d_xi measure of the side.
    """

    x: np.ndarray
    v: np.ndarray
    w: np.ndarray
    side: str | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.w.shape[0]

    @property
    def total(self) -> float:
        return float(np.sum(self.w))


def boundary_xi_measure(dimension: int) -> float:
    """Exact d_xi measure of one side: 4*pi in n=2, 4*pi^2 in n=3."""
    return 4.0 * np.pi if dimension == 2 else 4.0 * np.pi ** 2


def boundary_quadrature(dimension: int, side: str, resolution: int) -> QuadratureRule:
    """Deterministic product rule over one boundary side.

    resolution is the node count per angular dimension (minimum 8).
    Positions use uniform midpoints in the periodic angles and
    Gauss-Legendre in the polar coordinate; the incidence cosine of
    d_xi is absorbed by a change of variables so constant integrands
    are integrated exactly.
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8 nodes per angular dimension")
    if side not in (INCOMING, OUTGOING):
        raise ValueError(f"unknown side {side!r}")
    sign = -1.0 if side == INCOMING else 1.0

    if dimension == 2:
        n_pos = 2 * resolution
        theta = (np.arange(n_pos) + 0.5) * (2.0 * np.pi / n_pos)
        nu = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        # beta = angle from the (anti-)normal; substitute u = sin(beta) so the
        # cos(beta) incidence factor becomes the flat du measure.
        u01, w01 = gauss_legendre_01(resolution)
        u = 2.0 * u01 - 1.0
        wu = 2.0 * w01
        beta = np.arcsin(u)
        tang = np.stack([-nu[:, 1], nu[:, 0]], axis=-1)
        cosb, sinb = np.cos(beta), np.sin(beta)
        x = np.repeat(nu, resolution, axis=0)
        t = np.repeat(tang, resolution, axis=0)
        cb = np.tile(cosb, n_pos)[:, None]
        sb = np.tile(sinb, n_pos)[:, None]
        v = sign * cb * x + sb * t
        w = np.tile(wu, n_pos) * (2.0 * np.pi / n_pos)
        meta = {"shape": (n_pos, resolution), "theta": theta, "beta": beta}
        return QuadratureRule(x=x, v=v, w=w, side=side, meta=meta)

    if dimension == 3:
        n_lat, n_lon = resolution, 2 * resolution
        zq, wz = gauss_legendre_01(n_lat)
        z = 2.0 * zq - 1.0
        wz = 2.0 * wz
        lon = (np.arange(n_lon) + 0.5) * (2.0 * np.pi / n_lon)
        rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        pos = np.stack(
            [
                np.outer(rho, np.cos(lon)).ravel(),
                np.outer(rho, np.sin(lon)).ravel(),
                np.repeat(z, n_lon),
            ],
            axis=-1,
        )
        wpos = np.repeat(wz, n_lon) * (2.0 * np.pi / n_lon)

        # velocity hemisphere about the (anti-)normal: |v.nu| = u with
        # u = cos(polar); substitute s = u^2 so the u du measure flattens.
        n_vp, n_va = resolution, 2 * resolution
        sq, ws = gauss_legendre_01(n_vp)
        uu = np.sqrt(sq)
        wuu = 0.5 * ws
        az = (np.arange(n_va) + 0.5) * (2.0 * np.pi / n_va)
        waz = 2.0 * np.pi / n_va

        e1, e2 = tangent_frame(pos)
        ca, sa = np.cos(az), np.sin(az)

        n_b = pos.shape[0]
        n_v = n_vp * n_va
        x = np.repeat(pos, n_v, axis=0)
        uu_full = np.tile(np.repeat(uu, n_va), n_b)
        sin_full = np.sqrt(np.maximum(1.0 - uu_full**2, 0.0))
        ca_full = np.tile(np.tile(ca, n_vp), n_b)
        sa_full = np.tile(np.tile(sa, n_vp), n_b)
        e1f = np.repeat(e1, n_v, axis=0)
        e2f = np.repeat(e2, n_v, axis=0)
        v = (
            sign * uu_full[:, None] * x
            + sin_full[:, None] * (ca_full[:, None] * e1f + sa_full[:, None] * e2f)
        )
        w = np.repeat(wpos, n_v) * np.tile(np.repeat(wuu, n_va), n_b) * waz
        meta = {"shape": (n_lat, n_lon, n_vp, n_va)}
        return QuadratureRule(x=x, v=v, w=w, side=side, meta=meta)

    raise InvalidDimension(f"dimension must be 2 or 3, got {dimension}")


def interior_quadrature(dimension: int, n_r: int, n_pos: int, n_vel: int) -> QuadratureRule:
    """Product rule over X x V: radial shells x position angles x velocities."""
    if dimension == 2:
        uq, wu = gauss_legendre_01(n_r)
        r = np.sqrt(uq)          # u = r^2 flattens the r dr measure
        wr = 0.5 * wu
        th = (np.arange(n_pos) + 0.5) * (2.0 * np.pi / n_pos)
        ph = (np.arange(n_vel) + 0.5) * (2.0 * np.pi / n_vel)
        R, T, P = np.meshgrid(r, th, ph, indexing="ij")
        x = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=-1)
        v = np.stack([np.cos(P).ravel(), np.sin(P).ravel()], axis=-1)
        WR = np.repeat(wr, n_pos * n_vel)
        w = WR * np.tile(np.full(n_pos * n_vel, (2 * np.pi / n_pos) * (2 * np.pi / n_vel)), n_r)
        meta = {"shape": (n_r, n_pos, n_vel), "r": r, "theta": th, "psi": ph}
        return QuadratureRule(x=x, v=v, w=w, side=None, meta=meta)

    if dimension == 3:
        uq, wu = gauss_legendre_01(n_r)
        r = uq ** (1.0 / 3.0)     # u = r^3 flattens r^2 dr
        wr = wu / 3.0
        zq, wz = gauss_legendre_01(n_pos)
        z = 2.0 * zq - 1.0
        wz = 2.0 * wz
        lon = (np.arange(2 * n_pos) + 0.5) * (np.pi / n_pos)
        wlon = np.pi / n_pos
        vzq, wvz = gauss_legendre_01(n_vel)
        vz = 2.0 * vzq - 1.0
        wvz = 2.0 * wvz
        vlon = (np.arange(2 * n_vel) + 0.5) * (np.pi / n_vel)
        wvlon = np.pi / n_vel

        rho = np.sqrt(np.maximum(1 - z * z, 0))
        pos_dir = np.stack(
            [
                np.outer(rho, np.cos(lon)).ravel(),
                np.outer(rho, np.sin(lon)).ravel(),
                np.repeat(z, lon.size),
            ],
            axis=-1,
        )
        wposdir = np.repeat(wz, lon.size) * wlon
        vrho = np.sqrt(np.maximum(1 - vz * vz, 0))
        vel = np.stack(
            [
                np.outer(vrho, np.cos(vlon)).ravel(),
                np.outer(vrho, np.sin(vlon)).ravel(),
                np.repeat(vz, vlon.size),
            ],
            axis=-1,
        )
        wvel = np.repeat(wvz, vlon.size) * wvlon

        n_p, n_v = pos_dir.shape[0], vel.shape[0]
        x = (r[:, None, None] * pos_dir[None, :, :]).reshape(-1, 3)
        x = np.repeat(x, n_v, axis=0)
        v = np.tile(vel, (n_r * n_p, 1))
        w = np.repeat(np.outer(wr, wposdir).ravel(), n_v) * np.tile(wvel, n_r * n_p)
        meta = {"shape": (n_r, n_p, n_v)}
        return QuadratureRule(x=x, v=v, w=w, side=None, meta=meta)

    raise InvalidDimension(f"dimension must be 2 or 3, got {dimension}")


def random_boundary_rays(dimension: int, side: str, count: int, rng: np.random.Generator):
    """Uniform-ish random rays on one side, for sampling-based checks."""
    sign = -1.0 if side == INCOMING else 1.0
    if dimension == 2:
        th = rng.uniform(0, 2 * np.pi, count)
        beta = np.arcsin(rng.uniform(-1, 1, count))
        x = np.stack([np.cos(th), np.sin(th)], axis=-1)
        t = np.stack([-x[:, 1], x[:, 0]], axis=-1)
        v = sign * np.cos(beta)[:, None] * x + np.sin(beta)[:, None] * t
        return x, v
    z = rng.uniform(-1, 1, count)
    lon = rng.uniform(0, 2 * np.pi, count)
    rho = np.sqrt(1 - z * z)
    x = np.stack([rho * np.cos(lon), rho * np.sin(lon), z], axis=-1)
    u = np.sqrt(rng.uniform(0, 1, count))
    az = rng.uniform(0, 2 * np.pi, count)
    e1, e2 = tangent_frame(x)
    sin_p = np.sqrt(1 - u * u)
    v = sign * u[:, None] * x + sin_p[:, None] * (
        np.cos(az)[:, None] * e1 + np.sin(az)[:, None] * e2
    )
    return x, v
