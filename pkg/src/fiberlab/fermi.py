"""Golden-rule decay rates and level shifts of the vacuum of the fibered operator.

With ``S(t)`` the integral of the spectral density over the sphere of radius
``t`` centred at ``-k`` (surface measure; in d=1 the two points ``-k +- t``):

* ``alpha_k = pi S(|k|) / (2 (2 pi)^d |k|)``,
* ``beta_k = -(2 pi)^{-d} p.v. int_0^inf S(t) / (t^2 - |k|^2) dt``,

and both arise as ``alpha_k + i beta_k = lim_{eps -> 0} (1/i) L(eps)`` with the
regularized pairing ``L(eps) = (2 pi)^{-d} int C0^(y) / (|y + k|^2 - |k|^2 - i eps) dy``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .covariance import CovarianceModel
from .errors import NumericalFailure, PreconditionError


def _as_vector(k, dim: int) -> np.ndarray:
    kv = np.atleast_1d(np.asarray(k, dtype=float))
    if kv.shape != (dim,):
        raise PreconditionError(f"wave vector must have {dim} components, got {kv.shape}")
    return kv


def _nonzero(k, dim: int) -> tuple[np.ndarray, float]:
    kv = _as_vector(k, dim)
    kn = float(np.linalg.norm(kv))
    if kn == 0.0:
        raise PreconditionError("k = 0 is excluded: the rate degenerates at the origin")
    return kv, kn


def sphere_integral(model: CovarianceModel, k, t: float, density=None) -> float:
    """Surface integral of ``density`` (default: the model's spectral density) over the sphere ``|xi + k| = t``.

    d=1 uses the counting measure on the two points ``-k +- t``; d=2 uses
    adaptive quadrature over the angle.
    """
    dim = model.dim
    f = model.spectral_density if density is None else density
    kv = _as_vector(k, dim)
    if t < 0:
        raise PreconditionError("radius must be nonnegative")
    if dim == 1:
        return float(f(np.array(-kv[0] + t)) + f(np.array(-kv[0] - t)))

    def integrand(theta):
        p = -kv + t * np.array([math.cos(theta), math.sin(theta)])
        return float(f(p)) * t

    val, err = integrate.quad(integrand, 0.0, 2.0 * math.pi, epsabs=0.0, epsrel=1e-11, limit=200)
    return float(val)


def alpha_k(model: CovarianceModel, k, method: str = "auto") -> float:
    """Decay rate; ``method`` is ``closed`` (d=1 only), ``sphere`` (generic path) or ``auto``."""
    kv, kn = _nonzero(k, model.dim)
    if method == "auto":
        method = "closed" if model.dim == 1 else "sphere"
    if method == "closed":
        if model.dim != 1:
            raise PreconditionError("the closed form exists in d=1 only")
        f = model.spectral_density
        return float((f(np.array(0.0)) + f(np.array(2.0 * kv[0]))) / (4.0 * kn))
    if method == "sphere":
        s = sphere_integral(model, kv, kn)
        return math.pi * s / (2.0 * (2.0 * math.pi) ** model.dim * kn)
    raise PreconditionError(f"unknown method {method!r}")


def _tail_radius(model: CovarianceModel, kv: np.ndarray, kn: float, rel: float = 1e-12) -> float:
    """Radius beyond which the sphere integral stays below ``rel`` times its running maximum."""
    step = 0.25 * model.length_scale if math.isfinite(model.length_scale) else 0.25
    smax = 0.0
    t = 0.0
    below = 0
    # density decays; stop after a sustained run below threshold
    while t < 1e4:
        s = abs(sphere_integral(model, kv, t))
        smax = max(smax, s)
        if smax > 0 and s < rel * smax:
            below += 1
            if below >= 8 and t > 2.0 * kn:
                return t
        else:
            below = 0
        t += step
    raise NumericalFailure("spectral density does not decay; tail cut not found")


@dataclass(frozen=True)
class PrincipalValue:
    value: float
    error: float
    delta: float


def _pv_excised(f, c: float, a: float, b: float, delta: float, tol: float) -> float:
    """p.v. int_a^b f(t)/(t - c) dt by excising (c - delta, c + delta) and integrating the regular remainder there."""
    fc = f(c)
    opts = dict(epsabs=tol, epsrel=tol, limit=400)
    left, _ = integrate.quad(lambda t: f(t) / (t - c), a, c - delta, **opts)
    right, _ = integrate.quad(lambda t: f(t) / (t - c), c + delta, b, **opts)

    def inner(t):
        u = t - c
        if u == 0.0:
            return 0.0
        return (f(t) - fc) / u

    # the odd part fc/(t - c) integrates to zero on the symmetric window
    mid, _ = integrate.quad(inner, c - delta, c + delta, points=[c], **opts)
    return left + mid + right


def beta_k_detailed(model: CovarianceModel, k, delta: float | None = None, tol: float = 1e-11) -> PrincipalValue:
    """Level shift with an error estimate from halving the excision width."""
    kv, kn = _nonzero(k, model.dim)
    T = _tail_radius(model, kv, kn)

    def f(t):
        return sphere_integral(model, kv, t) / (t + kn)

    if delta is None:
        delta = 0.5 * kn
    delta = min(delta, 0.5 * kn)
    v1 = _pv_excised(f, kn, 0.0, T, delta, tol)
    v2 = _pv_excised(f, kn, 0.0, T, delta / 2.0, tol)
    err = abs(v1 - v2)
    scale = max(1.0, abs(v2))
    if not math.isfinite(v2) or err > 1e-7 * scale:
        raise NumericalFailure(f"principal value unstable under delta-halving (diff {err:.3g})")
    c = -(2.0 * math.pi) ** (-model.dim)
    return PrincipalValue(c * v2, abs(c) * err, delta / 2.0)


def beta_k(model: CovarianceModel, k) -> float:
    return beta_k_detailed(model, k).value


def resolvent_pairing(model: CovarianceModel, k, eps: float, tol: float = 1e-10) -> complex:
    """``(2 pi)^{-d} int C0^(y) / (|y + k|^2 - |k|^2 - i eps) dy`` by adaptive quadrature.

    In d=1 the integral runs directly over ``y`` with breakpoints clustered at
    the two zeros of the symbol; in d=2 it runs in polar coordinates about ``-k``.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    if model.variance == 0:
        return 0j
    dim = model.dim
    kv = _as_vector(k, dim)
    kn = float(np.linalg.norm(kv))
    f = model.spectral_density
    if dim == 1:
        k1 = kv[0]
        R = _tail_radius(model, np.array([0.0]), 1.0) + abs(k1) + 1.0
        poles = sorted({0.0, -2.0 * k1})
        width = eps / max(2.0 * abs(k1), math.sqrt(eps))
        pts = set()
        for p in poles:
            for c in (0.0, 1.0, 4.0, 16.0, 64.0, 256.0, 1024.0):
                for sgn in (-1.0, 1.0):
                    q = p + sgn * c * width
                    if -R < q < R:
                        pts.add(q)
        pts = sorted(pts)
        edges = [-R] + pts + [R]

        def sym(y):
            return y * (y + 2.0 * k1)

        def re_f(y):
            h = sym(y)
            return float(f(np.array(y))) * h / (h * h + eps * eps)

        def im_f(y):
            h = sym(y)
            return float(f(np.array(y))) * eps / (h * h + eps * eps)

        re = im = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            re += integrate.quad(re_f, a, b, epsabs=tol * 1e-2, epsrel=tol, limit=200)[0]
            im += integrate.quad(im_f, a, b, epsabs=tol * 1e-2, epsrel=tol, limit=200)[0]
        return complex(re, im) / (2.0 * math.pi)

    T = _tail_radius(model, kv, max(kn, 1e-12))

    def sph(t):
        return sphere_integral(model, kv, t)

    pts = [kn] if kn > 0 else None
    re = integrate.quad(lambda t: sph(t) * (t * t - kn * kn) / ((t * t - kn * kn) ** 2 + eps * eps),
                        0.0, T, points=pts, epsrel=tol, limit=400)[0]
    im = integrate.quad(lambda t: sph(t) * eps / ((t * t - kn * kn) ** 2 + eps * eps),
                        0.0, T, points=pts, epsrel=tol, limit=400)[0]
    return complex(re, im) / (2.0 * math.pi) ** dim


def richardson_zero(eps_values, values) -> complex:
    """Polynomial extrapolation of ``values(eps)`` to ``eps = 0`` through all given nodes (Neville)."""
    x = [float(e) for e in eps_values]
    p = [complex(v) for v in values]
    n = len(x)
    if n < 1 or len(p) != n:
        raise PreconditionError("need matching, nonempty node lists")
    for m in range(1, n):
        for i in range(n - m):
            p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i])
    return p[0]


def extrapolated_rates(model: CovarianceModel, k, eps_values=(1e-2, 1e-3, 1e-4)) -> complex:
    """``(1/i) L(eps)`` extrapolated to ``eps = 0``; approximates ``alpha_k + i beta_k``."""
    vals = [resolvent_pairing(model, k, e) / 1j for e in eps_values]
    return richardson_zero(eps_values, vals)


@dataclass(frozen=True)
class FermiCondition:
    holds: bool
    margin: float


def fermi_condition(model: CovarianceModel, k, threshold: float = 1e-12) -> FermiCondition:
    """Whether the spectral density charges the resonant sphere ``|xi + k| = |k|``.

    The margin is the sphere integral itself, ``2 (2 pi)^d |k| alpha_k / pi``.
    """
    kv, kn = _nonzero(k, model.dim)
    margin = sphere_integral(model, kv, kn)
    return FermiCondition(bool(margin > threshold), float(margin))


@dataclass
class ResonanceData:
    k: np.ndarray
    alpha_k: float
    beta_k: float
    resolvent_limit: complex
    beta_error: float = 0.0
    rs_coefficients: list = field(default_factory=list)


def resonance_data(model: CovarianceModel, k, eps_values=(1e-2, 1e-3, 1e-4)) -> ResonanceData:
    kv, _ = _nonzero(k, model.dim)
    b = beta_k_detailed(model, kv)
    return ResonanceData(
        k=kv,
        alpha_k=alpha_k(model, kv),
        beta_k=b.value,
        resolvent_limit=extrapolated_rates(model, kv, eps_values),
        beta_error=b.error,
    )
