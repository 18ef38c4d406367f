"""Coefficient models (absorption sigma, scattering k) and their certificates.

A medium bundles vectorized evaluators for sigma(x, v), k(x, v', v) and the
angular integral sigma_p(x, v') = int_V k dv, together with Lipschitz
metadata and the radial support margin r0 of k (k vanishes for
|x| > 1 - r0, so scattering never touches the boundary).

The built-in library keeps every Lipschitz constant and sigma_p in closed
form: constant / radial-polynomial / Gaussian-bump absorption, isotropic
and Henyey-Greenstein angular scattering, all times a smooth radial
cutoff honoring the support margin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidDimension, NotSubcritical
from .geometry import Domain, chord_length
from .numerics import gauss_legendre_01, halton_sample


@dataclass(frozen=True)
class OpticalMedium:
    domain: Domain
    sigma: Callable
    k: Callable
    sigma_p: Callable
    lipschitz_bound: float
    k_support_margin: float
    sigma_sup: float
    k_sup: float
    spec: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.domain.dimension


@dataclass(frozen=True)
class SubcriticalityCertificate:
    """Outcome of sampling the two subcriticality conditions.

    mode is the strongest condition that held on the sample: absorption
    dominating scattering, or sup tau*sigma_p < 1.  series_ratio is the
    contraction estimate q < 1 used to bound collision-series tails.
    """

    mode: str
    margin: float
    series_ratio: float
    tau_sigma_p_sup: float
    sample_count: int

    def tail_bound(self, truncation_order: int, input_mass: float = 1.0) -> float:
        q = self.series_ratio
        return input_mass * q ** (truncation_order + 1) / (1.0 - q)


# --- smooth radial cutoff -------------------------------------------------

def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


_SMOOTHSTEP_LIP = 1.5  # max of d/dt [3t^2 - 2t^3] on [0,1]


def radial_cutoff(r: np.ndarray, margin: float) -> np.ndarray:
    """1 on r <= 1-2*margin, 0 on r >= 1-margin, smooth in between."""
    if margin <= 0.0:
        return np.ones_like(np.asarray(r, dtype=float))
    return _smoothstep((1.0 - margin - np.asarray(r, dtype=float)) / margin)


def cutoff_lipschitz(margin: float) -> float:
    return 0.0 if margin <= 0.0 else _SMOOTHSTEP_LIP / margin


# --- absorption families --------------------------------------------------

def sigma_constant(value: float):
    def f(x, v=None):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(value))

    return f, float(value), float(value), 0.0


def sigma_radial_poly(base: float, amplitude: float):
    """sigma(x) = base + amplitude * (1 - |x|^2)."""

    def f(x, v=None):
        x = np.asarray(x, dtype=float)
        return base + amplitude * (1.0 - np.sum(x * x, axis=-1))

    sup = base + max(amplitude, 0.0)
    return f, sup, base + amplitude, 2.0 * abs(amplitude)


def sigma_gaussian(amplitude: float, width: float, center):
    center = np.asarray(center, dtype=float)

    def f(x, v=None):
        x = np.asarray(x, dtype=float)
        d2 = np.sum((x - center) ** 2, axis=-1)
        return amplitude * np.exp(-d2 / width**2)

    lip = abs(amplitude) * np.sqrt(2.0) * np.exp(-0.5) / width
    return f, abs(amplitude), amplitude, lip


# --- scattering families --------------------------------------------------

def _hg_phase(dimension: int, g: float, cosang: np.ndarray) -> np.ndarray:
    """Henyey-Greenstein phase function, normalized over S^{n-1}."""
    if dimension == 2:
        return (1.0 - g * g) / (2.0 * np.pi * (1.0 + g * g - 2.0 * g * cosang))
    return (1.0 - g * g) / (4.0 * np.pi * (1.0 + g * g - 2.0 * g * cosang) ** 1.5)


def make_medium(
    domain: Domain,
    sigma_spec: dict,
    k_spec: dict,
) -> OpticalMedium:
    """Build a medium from declarative specs (the config-file format).

    sigma_spec kinds: constant {value}, radial_poly {base, amplitude},
    gaussian {amplitude, width, center}, zero.
    k_spec kinds: zero, isotropic {value, margin}, henyey_greenstein
    {value, g, margin}.  `value` is the pointwise kernel magnitude for
    isotropic scattering and the scattering rate sigma_p for HG.
    """
    kind = sigma_spec.get("kind", "zero")
    if kind == "zero":
        sfun, s_sup, _, s_lip = sigma_constant(0.0)
    elif kind == "constant":
        sfun, s_sup, _, s_lip = sigma_constant(sigma_spec["value"])
    elif kind == "radial_poly":
        sfun, s_sup, _, s_lip = sigma_radial_poly(sigma_spec["base"], sigma_spec["amplitude"])
    elif kind == "gaussian":
        sfun, s_sup, _, s_lip = sigma_gaussian(
            sigma_spec["amplitude"], sigma_spec["width"], sigma_spec["center"]
        )
    else:
        raise ConfigError(f"unknown sigma kind {kind!r}")
    if s_sup < 0:
        raise ConfigError("sigma must be nonnegative")

    kkind = k_spec.get("kind", "zero")
    sphere = domain.sphere_measure
    margin = float(k_spec.get("margin", 0.1))
    cut_lip = cutoff_lipschitz(margin)

    if kkind == "zero":
        def kfun(x, vp, v):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1])

        def spfun(x, vp=None):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1])

        k_sup, k_lip, margin = 0.0, 0.0, 1.0
    elif kkind == "isotropic":
        value = float(k_spec["value"])
        if value < 0:
            raise ConfigError("k must be nonnegative")

        def kfun(x, vp, v, _c=value, _m=margin):
            x = np.asarray(x, dtype=float)
            r = np.linalg.norm(x, axis=-1)
            return _c * radial_cutoff(r, _m)

        def spfun(x, vp=None, _c=value, _m=margin, _s=sphere):
            x = np.asarray(x, dtype=float)
            r = np.linalg.norm(x, axis=-1)
            return _c * _s * radial_cutoff(r, _m)

        k_sup, k_lip = value, value * cut_lip
    elif kkind == "henyey_greenstein":
        rate = float(k_spec["value"])
        gpar = float(k_spec.get("g", 0.5))
        if not (0.0 <= abs(gpar) < 1.0):
            raise ConfigError("|g| must be below 1")
        phase_sup = _hg_phase(domain.dimension, gpar, np.array(1.0 if gpar >= 0 else -1.0))

        def kfun(x, vp, v, _r=rate, _g=gpar, _m=margin, _d=domain.dimension):
            x = np.asarray(x, dtype=float)
            rr = np.linalg.norm(x, axis=-1)
            mu = np.clip(np.sum(np.asarray(vp) * np.asarray(v), axis=-1), -1.0, 1.0)
            return _r * radial_cutoff(rr, _m) * _hg_phase(_d, _g, mu)

        def spfun(x, vp=None, _r=rate, _m=margin):
            x = np.asarray(x, dtype=float)
            rr = np.linalg.norm(x, axis=-1)
            return _r * radial_cutoff(rr, _m)

        k_sup = rate * float(phase_sup)
        # phase-function angular derivative bound plus radial cutoff slope
        denom = (1.0 - abs(gpar)) ** (3 if domain.dimension == 2 else 4)
        phase_lip = 2.0 * abs(gpar) * (1 + abs(gpar)) / (np.pi * denom)
        k_lip = rate * (cut_lip * float(phase_sup) + phase_lip)
    else:
        raise ConfigError(f"unknown k kind {kkind!r}")

    return OpticalMedium(
        domain=domain,
        sigma=sfun,
        k=kfun,
        sigma_p=spfun,
        lipschitz_bound=float(max(s_lip, k_lip)),
        k_support_margin=margin,
        sigma_sup=float(s_sup),
        k_sup=float(k_sup),
        spec={"dimension": domain.dimension, "sigma": dict(sigma_spec), "k": dict(k_spec)},
    )


def medium_from_spec(spec: dict) -> OpticalMedium:
    try:
        dim = int(spec["dimension"])
        return make_medium(Domain(dim), spec["sigma"], spec["k"])
    except KeyError as exc:
        raise ConfigError(f"medium spec missing field {exc}") from exc


def conservative_medium(domain: Domain, rate: float, margin: float = 0.1) -> OpticalMedium:
    """Absorption-free medium: sigma equals sigma_p pointwise.

    Every collision redistributes the particle without loss, so the total
    outgoing mass equals the incoming mass.
    """
    base = make_medium(
        domain,
        {"kind": "zero"},
        {"kind": "isotropic", "value": rate / domain.sphere_measure, "margin": margin},
    )
    return OpticalMedium(
        domain=domain,
        sigma=base.sigma_p,
        k=base.k,
        sigma_p=base.sigma_p,
        lipschitz_bound=base.lipschitz_bound * (1.0 + domain.sphere_measure),
        k_support_margin=margin,
        sigma_sup=rate,
        k_sup=base.k_sup,
        spec={"conservative": True, **base.spec},
    )


# --- certification --------------------------------------------------------

def _phase_samples(dimension: int, count: int):
    """Deterministic low-discrepancy samples over X x V."""
    if dimension == 2:
        u = halton_sample(4, count)
        r = np.sqrt(u[:, 0])
        th = 2 * np.pi * u[:, 1]
        x = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        ph = 2 * np.pi * u[:, 2]
        v = np.stack([np.cos(ph), np.sin(ph)], axis=-1)
        return x, v
    u = halton_sample(6, count)
    r = u[:, 0] ** (1.0 / 3.0)
    z = 2 * u[:, 1] - 1
    lon = 2 * np.pi * u[:, 2]
    rho = np.sqrt(1 - z * z)
    x = r[:, None] * np.stack([rho * np.cos(lon), rho * np.sin(lon), z], axis=-1)
    vz = 2 * u[:, 3] - 1
    vlon = 2 * np.pi * u[:, 4]
    vrho = np.sqrt(1 - vz * vz)
    v = np.stack([vrho * np.cos(vlon), vrho * np.sin(vlon), vz], axis=-1)
    return x, v


def certify(medium: OpticalMedium, sample_count: int = 100_000) -> SubcriticalityCertificate:
    """Sample the subcriticality conditions on a deterministic grid.

    Returns the strongest mode that holds: absorption dominance
    (sigma - sigma_p >= 0 everywhere) is reported first, otherwise
    sup tau*sigma_p < 1.  Raises NotSubcritical when neither holds, or
    when no contraction ratio q < 1 can be certified (the collision
    series then has no geometric tail certificate).
    """
    x, v = _phase_samples(medium.dimension, sample_count)
    sig = medium.sigma(x, v)
    sig_p = medium.sigma_p(x, v)
    tau = chord_length(x, v)

    hsc1_margin = float(np.min(sig - sig_p))
    tau_sp = float(np.max(tau * sig_p))

    ratios = []
    if tau_sp < 1.0:
        ratios.append(tau_sp)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(sig_p > 0, sig_p / np.where(sig > 0, sig, np.inf), 0.0)
    frac_sup = float(np.max(frac)) if frac.size else 0.0
    if hsc1_margin >= 0.0 and frac_sup < 1.0:
        ratios.append(frac_sup)

    if hsc1_margin >= -1e-12:
        mode, margin = "HSC1", max(hsc1_margin, 0.0)
        if not ratios and frac_sup <= 1.0:
            # conservative boundary case: accept q = frac_sup when it is
            # strictly below 1 + roundoff only via tau_sp; otherwise no
            # geometric certificate exists.
            if tau_sp < 1.0:
                ratios.append(tau_sp)
    elif tau_sp < 1.0:
        mode, margin = "HSC2", 1.0 - tau_sp
    else:
        raise NotSubcritical(
            f"neither condition holds on {sample_count} samples: "
            f"min(sigma - sigma_p) = {hsc1_margin:.3g}, sup tau*sigma_p = {tau_sp:.3g}"
        )

    if not ratios:
        raise NotSubcritical(
            "medium is subcritical but no contraction ratio q < 1 is certifiable "
            f"(sup tau*sigma_p = {tau_sp:.3g}, sup sigma_p/sigma = {frac_sup:.3g})"
        )

    return SubcriticalityCertificate(
        mode=mode,
        margin=margin,
        series_ratio=min(ratios),
        tau_sigma_p_sup=tau_sp,
        sample_count=sample_count,
    )


# --- gauge representative -------------------------------------------------

def gauge_representative_diff(
    medium1: OpticalMedium,
    medium2: OpticalMedium,
    x: np.ndarray,
    v: np.ndarray,
    npts: int = 48,
) -> np.ndarray:
    """Chord average of sigma1 - sigma2 through (x, v).

    This is the absorption difference after moving medium1 to the gauge
    representative whose chord integrals match the data: the full-chord
    integral of (sigma1 - sigma2) divided by the chord length.
    """
    if medium1.dimension != medium2.dimension:
        raise InvalidDimension("media live in different dimensions")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    from .geometry import tau_minus, tau_plus  # local import avoids cycle at module load

    tm = tau_minus(x, v)
    tp = tau_plus(x, v)
    tau = tm + tp
    t01, w01 = gauss_legendre_01(npts)
    s = -tm[..., None] + tau[..., None] * t01
    pts = x[..., None, :] + s[..., None] * v[..., None, :]
    vv = np.broadcast_to(v[..., None, :], pts.shape)
    diff = medium1.sigma(pts, vv) - medium2.sigma(pts, vv)
    integral = tau * np.sum(diff * w01, axis=-1)
    return integral / np.where(tau > 0, tau, 1.0)
