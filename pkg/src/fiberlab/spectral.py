"""Spectral measures of the unperturbed fibered operator.

For a state ``phi`` with mean ``m`` and centred spectral density ``C^phi``,
the spectral measure of ``|xi + k|^2 - |k|^2`` is an atom ``|m|^2`` at zero
plus the pushforward of ``(2 pi)^{-d} C^phi(xi) dxi`` under the symbol. Writing
``nu([0, t]) = (2 pi)^{-d} C^phi(ball of radius t about -k)``, the absolutely
continuous part has density ``nu'(sqrt(E + |k|^2)) / (2 sqrt(E + |k|^2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, signal

from .covariance import CovarianceModel
from .errors import PreconditionError
from .fermi import sphere_integral

Density = Callable[[np.ndarray], np.ndarray]


class _DensityModel:
    """Minimal adapter so that ``sphere_integral`` accepts a bare density."""

    def __init__(self, density: Density, dim: int):
        self.spectral_density = density
        self.dim = dim


def _kvec(k, dim):
    kv = np.atleast_1d(np.asarray(k, dtype=float))
    if kv.shape != (dim,):
        raise PreconditionError(f"wave vector must have {dim} components")
    return kv


def nu_k(density: Density, k, t: float, dim: int = 1) -> float:
    """Cumulative radial mass ``(2 pi)^{-d} int_{|xi + k| <= t} density``."""
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    kv = _kvec(k, dim)
    if t == 0:
        return 0.0
    if dim == 1:
        c = -kv[0]
        val = integrate.quad(lambda x: float(density(np.array(x))), c - t, c + t, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        return val / (2.0 * math.pi)
    dm = _DensityModel(density, dim)
    val = integrate.quad(lambda r: sphere_integral(dm, kv, r), 0.0, t, epsabs=1e-14, epsrel=1e-11, limit=200)[0]
    return val / (2.0 * math.pi) ** dim


def nu_density(density: Density, k, t: float, dim: int = 1) -> float:
    """``d nu / dt = (2 pi)^{-d}`` times the sphere integral at radius ``t``."""
    return sphere_integral(_DensityModel(density, dim), _kvec(k, dim), t) / (2.0 * math.pi) ** dim


def ac_density(density: Density, k, E: float, dim: int = 1) -> float:
    """Density of the absolutely continuous spectral measure at energy ``E > -|k|^2``."""
    kv = _kvec(k, dim)
    k2 = float(kv @ kv)
    if not E > -k2:
        raise PreconditionError(f"E must exceed the band edge -|k|^2 = {-k2}")
    t = math.sqrt(E + k2)
    return nu_density(density, kv, t, dim) / (2.0 * t)


@dataclass(frozen=True)
class SpectralMeasureRepr:
    """Atom at zero plus an absolutely continuous density on ``(-|k|^2, inf)``."""

    k: np.ndarray
    dim: int
    atom_at_zero: float
    ac_density: Callable[[float], float]
    continuous_mass: float
    edge_exponent: float
    regularized_density: Callable[[float], float]

    @property
    def total_mass(self) -> float:
        return self.atom_at_zero + self.continuous_mass

    @property
    def band_edge(self) -> float:
        return -float(self.k @ self.k)


def spectral_measure(density: Density, k, mean: complex = 0.0, dim: int = 1) -> SpectralMeasureRepr:
    """Spectral measure of a state with the given mean and centred spectral density.

    ``edge_exponent`` records the behaviour ``(E + |k|^2)^{edge_exponent}`` of
    the density at the band edge: ``-1/2`` in d=1 and ``0`` in d=2 whenever the
    density does not vanish at ``-k``.
    """
    kv = _kvec(k, dim)
    k2 = float(kv @ kv)
    mass = nu_k(density, kv, _radius_cut(density, kv, dim), dim)
    edge = -0.5 if dim == 1 else 0.0

    def regular(E):
        # density times (E + |k|^2)^{-edge}, continuous up to the edge
        t = math.sqrt(max(E + k2, 0.0))
        if dim == 1:
            return nu_density(density, kv, t, dim) / 2.0
        return ac_density(density, kv, E, dim) if t > 0 else sphere_integral(
            _DensityModel(density, dim), kv, 0.0) / (2.0 * (2.0 * math.pi) ** dim)

    return SpectralMeasureRepr(
        k=kv,
        dim=dim,
        atom_at_zero=float(abs(mean) ** 2),
        ac_density=lambda E: ac_density(density, kv, E, dim),
        continuous_mass=mass,
        edge_exponent=edge,
        regularized_density=regular,
    )


def _radius_cut(density: Density, kv, dim, rel=1e-16) -> float:
    """Radius beyond which the density is negligible, found by doubling."""
    r = 1.0 + float(np.linalg.norm(kv))
    ref = max(abs(nu_density(density, kv, t, dim)) for t in np.linspace(0.0, r, 33)) or 1.0
    while abs(nu_density(density, kv, r, dim)) > rel * ref or abs(nu_density(density, kv, 1.5 * r, dim)) > rel * ref:
        r *= 1.5
        if r > 1e6:
            raise PreconditionError("density does not decay")
    return 1.5 * r


def pushforward_integral(g: Callable[[float], float], density: Density, k, dim: int = 1) -> float:
    """``int g(t^2 - |k|^2) d nu(t)``; the continuous part of ``int g d mu``."""
    kv = _kvec(k, dim)
    k2 = float(kv @ kv)
    T = _radius_cut(density, kv, dim)
    return integrate.quad(lambda t: g(t * t - k2) * nu_density(density, kv, t, dim), 0.0, T,
                          epsabs=1e-13, epsrel=1e-11, limit=400)[0]


def energy_integral(g: Callable[[float], float], measure: SpectralMeasureRepr) -> float:
    """``int g dmu`` using the energy-side density; the edge singularity is integrated with an algebraic weight."""
    E0 = measure.band_edge
    dens = measure.ac_density
    hi = E0 + 1.0
    while True:
        ref = abs(dens(E0 + 1e-3))
        if abs(dens(hi)) < 1e-17 * max(ref, 1.0) and abs(dens(2 * hi - E0)) < 1e-17 * max(ref, 1.0):
            break
        hi = E0 + 2.0 * (hi - E0)
    split = E0 + 1.0
    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=400)
    reg = measure.regularized_density
    w = measure.edge_exponent
    head = integrate.quad(lambda E: g(E) * reg(E), E0, split, weight="alg", wvar=(w, 0.0), **opts)[0]
    tail = integrate.quad(lambda E: g(E) * dens(E), split, hi, **opts)[0]
    return measure.atom_at_zero * g(0.0) + head + tail


def direct_symbol_integral(g: Callable[[float], float], density: Density, k, dim: int = 1, R: float = 40.0) -> float:
    """Reference route without the pushforward: ``(2 pi)^{-d} int g(|xi + k|^2 - |k|^2) density(xi) dxi``."""
    kv = _kvec(k, dim)
    k2 = float(kv @ kv)
    if dim == 1:
        val = integrate.quad(lambda x: g((x + kv[0]) ** 2 - k2) * float(density(np.array(x))), -R, R,
                             points=[-kv[0]], epsabs=1e-14, epsrel=1e-11, limit=400)[0]
        return val / (2.0 * math.pi)
    val = integrate.dblquad(lambda y, x: g((x + kv[0]) ** 2 + (y + kv[1]) ** 2 - k2) * float(density(np.array([x, y]))),
                            -R, R, -R, R, epsabs=1e-12, epsrel=1e-10)[0]
    return val / (2.0 * math.pi) ** 2


def gaussian_moment(j: int, sigma2: float) -> float:
    """``E[V^j]`` for ``V ~ N(0, sigma2)``."""
    if j % 2:
        return 0.0
    return float(math.prod(range(j - 1, 0, -2))) * sigma2 ** (j // 2) if j else 1.0


@dataclass(frozen=True)
class PowerSpectrum:
    """Spectral density of ``V^n - E[V^n]`` sampled on a symmetric grid."""

    xi: np.ndarray
    density: np.ndarray
    n: int

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    def mass(self) -> float:
        return float(np.sum(self.density) * self.dxi / (2.0 * math.pi))

    def __call__(self, xi):
        return np.interp(xi, self.xi, self.density, left=0.0, right=0.0)


def covariance_of_power(model: CovarianceModel, n: int, xi_max: float | None = None, dxi: float | None = None) -> PowerSpectrum:
    """Wick expansion ``sum_{m>=1} m! binom(n, m)^2 E[V^{n-m}]^2 (C0^)^{*m}`` with convolutions in ``dxi / (2 pi)``.

    Convolution powers are computed by FFT on a symmetric grid wide enough to
    hold the ``n``-fold Minkowski sum of the density's effective support.
    """
    if model.dim != 1:
        raise PreconditionError("covariance_of_power samples d=1 models")
    if not 1 <= n <= 5:
        raise PreconditionError("n must lie in 1..5")
    ell = model.length_scale
    if xi_max is None:
        xi_max = 14.0 * math.sqrt(n) / ell
    if dxi is None:
        dxi = 0.01 / ell
    half = int(math.ceil(xi_max / dxi))
    xi = np.arange(-half, half + 1) * dxi
    base = np.asarray(model.spectral_density(xi), dtype=float)
    total = np.zeros_like(xi)
    power = None
    for m in range(1, n + 1):
        power = base.copy() if power is None else signal.fftconvolve(power, base, mode="same") * dxi / (2.0 * math.pi)
        coeff = math.factorial(m) * math.comb(n, m) ** 2 * gaussian_moment(n - m, model.variance) ** 2
        if coeff:
            total += coeff * power
    return PowerSpectrum(xi=xi, density=total, n=n)


def variance_of_power(n: int, sigma2: float) -> float:
    """``Var[V^n] = E[V^{2n}] - E[V^n]^2`` for a centred Gaussian."""
    return gaussian_moment(2 * n, sigma2) - gaussian_moment(n, sigma2) ** 2
