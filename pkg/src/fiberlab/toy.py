"""Exactly solvable transport model ``(1/i) d/dx + lam V`` in d=1.

The flow is ``u^t(x) = u0(x - t) exp(-i lam int_0^t V(x - s) ds)`` and the
fibered vacuum evolution is the phase ``psi^t = exp((lam/i) int_0^t V(-s) ds)``.
Gaussian integration by parts gives every correlation of polynomial
observables in closed recursive form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy import integrate, special

from .covariance import CovarianceModel
from .errors import NumericalFailure, PreconditionError
from .fieldgen import FieldRealization, FieldSampler, GridSpec
from .flow import WaveState

MAX_DEGREE = 6


def _check_1d(model: CovarianceModel) -> None:
    if model.dim != 1:
        raise PreconditionError("the transport model is implemented in d=1")


def c0_antiderivative(model: CovarianceModel):
    """``A`` with ``A' = C0``; closed form for the shipped families, quadrature otherwise."""
    _check_1d(model)
    s2, ell = model.sigma2, model.length_scale
    if model.family == "gaussian":
        c = s2 * ell * math.sqrt(math.pi / 2.0)
        return lambda u: c * special.erf(np.asarray(u, dtype=float) / (math.sqrt(2.0) * ell))
    if model.family == "triangular":
        def A(u):
            u = np.clip(np.asarray(u, dtype=float), -ell, ell)
            return s2 * (u - np.sign(u) * u * u / (2.0 * ell))
        return A

    def A_quad(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.array([integrate.quad(lambda s: float(model.c0(np.array(s))), 0.0, v, limit=200)[0] for v in u])
        return out if out.size > 1 else out[0]
    return A_quad


def c0_line_integral(model: CovarianceModel, x: float, a: float, b: float) -> float:
    """``int_a^b C0(x + s) ds``; ``b`` may be ``inf`` (``A`` is odd with limit ``alpha0``)."""
    A = c0_antiderivative(model)
    hi = toy_alpha0(model) if math.isinf(b) else float(A(x + b))
    return float(hi - A(x + a))


def toy_alpha0(model: CovarianceModel) -> float:
    """``int_0^inf C0(s) ds`` by adaptive quadrature."""
    _check_1d(model)
    f = lambda s: float(model.c0(np.array(s)))
    cut = model.correlation_length if math.isfinite(model.correlation_length) else 8.0 * model.length_scale
    head, _ = integrate.quad(f, 0.0, cut, epsabs=0.0, epsrel=1e-12, limit=400,
                             points=[model.length_scale] if model.length_scale < cut else None)
    tail, _ = integrate.quad(f, cut, np.inf, epsabs=1e-15, epsrel=1e-12, limit=400)
    val = head + tail
    if not math.isfinite(val):
        raise NumericalFailure("covariance is not integrable along the line")
    return float(val)


def first_moment(model: CovarianceModel) -> float:
    """``int_0^inf s C0(s) ds``."""
    _check_1d(model)
    f = lambda s: s * float(model.c0(np.array(s)))
    cut = model.correlation_length if math.isfinite(model.correlation_length) else 8.0 * model.length_scale
    head, _ = integrate.quad(f, 0.0, cut, epsrel=1e-12, limit=400)
    tail, _ = integrate.quad(f, cut, np.inf, epsabs=1e-15, epsrel=1e-12, limit=400)
    return float(head + tail)


@dataclass(frozen=True)
class ToyResonance:
    alpha_circ: float
    z_res: complex
    gauge_prefactor: float
    lam: float


def toy_resonance(model: CovarianceModel, lam: float) -> ToyResonance:
    """Pole ``-i lam^2 alpha0`` and the per-state gauge factor ``exp(lam^2/2 int s C0)``."""
    a0 = toy_alpha0(model)
    return ToyResonance(a0, complex(0.0, -lam * lam * a0), math.exp(0.5 * lam * lam * first_moment(model)), lam)


def _phase_exponent(model: CovarianceModel, t: float) -> float:
    """``int_0^t (t - s) C0(s) ds = t A(t) - int_0^t s C0(s) ds``."""
    f = lambda s: (t - s) * float(model.c0(np.array(s)))
    pts = [model.length_scale] if model.length_scale < t else None
    val, _ = integrate.quad(f, 0.0, t, epsabs=1e-15, epsrel=1e-12, limit=400, points=pts)
    return float(val)


def mean_phase_factor(model: CovarianceModel, lam: float, t: float) -> complex:
    """``E[psi^t] = exp(-lam^2 int_0^t (t - s) C0(s) ds)``."""
    _check_1d(model)
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    if t == 0 or lam == 0:
        return 1.0 + 0.0j
    return complex(math.exp(-lam * lam * _phase_exponent(model, t)))


def resonant_pairing(model: CovarianceModel, lam: float, sign: int, points) -> complex:
    """``<Psi^{o,sign}, prod_j V(x_j)>`` by the two-term recursion on the first point.

    ``<., prod V(x_j)> = sum_{l >= 2} C0(x_1 - x_l) <., prod_{j != 1, l}>
    - sign (lam/i) int_0^inf C0(x_1 + sign s) ds <., prod_{j >= 2}>``, base value 1.
    """
    _check_1d(model)
    if sign not in (1, -1):
        raise PreconditionError("sign must be +1 or -1")
    pts = tuple(float(x) for x in points)
    A = c0_antiderivative(model)
    a0 = toy_alpha0(model)
    c0 = model.c0

    def tail(x):
        # int_0^inf C0(x + sign s) ds
        return a0 - float(A(x)) if sign > 0 else a0 + float(A(x))

    @lru_cache(maxsize=None)
    def rec(idx: frozenset) -> complex:
        if not idx:
            return 1.0 + 0.0j
        order = sorted(idx)
        first, rest = order[0], order[1:]
        total = 0.0 + 0.0j
        for l in rest:
            total += float(c0(np.array(pts[first] - pts[l]))) * rec(idx - {first, l})
        total += -sign * (lam / 1j) * tail(pts[first]) * rec(idx - {first})
        return total

    return complex(rec(frozenset(range(len(pts)))))


def isserlis_moment(model: CovarianceModel, points) -> float:
    """``E[prod_j V(x_j)]`` by summing over perfect matchings."""
    pts = list(points)
    if len(pts) % 2:
        return 0.0
    if not pts:
        return 1.0
    x0 = pts[0]
    total = 0.0
    for l in range(1, len(pts)):
        rest = pts[1:l] + pts[l + 1:]
        total += float(model.c0(np.array(x0 - pts[l]))) * isserlis_moment(model, rest)
    return total


def first_order_pairing(model: CovarianceModel, lam: float, sign: int, points) -> complex:
    """``E[phi] + sign i lam int_0^inf E[V(-sign s) phi] ds`` for ``phi = prod V(x_j)``."""
    pts = list(points)
    base = isserlis_moment(model, pts)
    f = lambda s: isserlis_moment(model, [-sign * s] + pts)
    cut = 8.0 * model.length_scale + max((abs(x) for x in pts), default=0.0)
    val = integrate.quad(f, 0.0, cut, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    val += integrate.quad(f, cut, np.inf, epsabs=1e-15, limit=200)[0]
    return complex(base, sign * lam * val)


def correlation(model: CovarianceModel, left_points, right_points, lam: float, t: float) -> complex:
    """``E[conj(phi') e^{-itH}phi]`` for ``phi' = prod V(y_j)``, ``phi = prod V(x_j)``.

    Gaussian integration by parts over the point list ``[y..., x - t]``: each
    step removes the first point ``p`` through the pairings ``C0(p - q)`` and the
    tail ``(lam/i) int_0^t C0(p + s) ds``; the empty list gives ``E[psi^t]``.
    """
    _check_1d(model)
    if len(left_points) > MAX_DEGREE or len(right_points) > MAX_DEGREE:
        raise PreconditionError(f"monomial degree exceeds {MAX_DEGREE}")
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    pts = tuple(float(y) for y in left_points) + tuple(float(x) - t for x in right_points)
    A = c0_antiderivative(model)
    c0 = model.c0
    base = mean_phase_factor(model, lam, t)

    @lru_cache(maxsize=None)
    def rec(idx: frozenset) -> complex:
        if not idx:
            return base
        order = sorted(idx)
        first, rest = order[0], order[1:]
        p = pts[first]
        total = 0.0 + 0.0j
        for l in rest:
            total += float(c0(np.array(p - pts[l]))) * rec(idx - {first, l})
        total += (lam / 1j) * float(A(p + t) - A(p)) * rec(idx - {first})
        return total

    return complex(rec(frozenset(range(len(pts)))))


def residue_ratio(model: CovarianceModel, left_points, right_points, lam: float, t: float) -> tuple[complex, complex]:
    """``(correlation / E[psi^t], conj<Psi^{o,+}, phi'> <Psi^{o,-}, phi>)``."""
    lhs = correlation(model, left_points, right_points, lam, t) / mean_phase_factor(model, lam, t)
    rhs = np.conj(resonant_pairing(model, lam, +1, left_points)) * resonant_pairing(model, lam, -1, right_points)
    return complex(lhs), complex(rhs)


# sampled fields: spectral evaluation and line integrals

class SpectralLine:
    """Trigonometric interpolant of sampled fields and its antiderivative (d=1)."""

    def __init__(self, grid: GridSpec):
        if grid.d != 1:
            raise PreconditionError("line integrals are taken in d=1")
        self.grid = grid
        n = grid.n
        self.xi = 2.0 * math.pi * np.fft.rfftfreq(n, d=grid.h)
        w = np.full(self.xi.shape, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        self._w = w / n
        self._x0 = grid.axis()[0]

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfft(values, axis=-1)

    def evaluate(self, coef: np.ndarray, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        E = np.exp(1j * np.outer(x - self._x0, self.xi))
        return np.real((coef * self._w) @ E.T)

    def antiderivative(self, coef: np.ndarray, x) -> np.ndarray:
        """``F(x) - F(x_ref)`` with ``F' = interpolant`` and ``x_ref`` the grid origin ``-L/2``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = x - self._x0
        xi = self.xi.copy()
        xi[0] = 1.0
        E = (np.exp(1j * np.outer(u, self.xi)) - 1.0) / (1j * xi)
        E[:, 0] = u
        if self.grid.n % 2 == 0:
            E[:, -1] = np.sin(self.xi[-1] * u) / self.xi[-1]
        return np.real((coef * self._w) @ E.T)

    def integral(self, coef: np.ndarray, a, b) -> np.ndarray:
        """``int_a^b`` of the interpolant."""
        return self.antiderivative(coef, b) - self.antiderivative(coef, a)


def exact_flow(V: FieldRealization, u0: WaveState, lam: float, t: float) -> WaveState:
    """``u^t(x) = u0(x - t) exp(-i lam int_0^t V(x - s) ds)`` with spectral shift and antiderivative."""
    grid = V.grid
    if grid.d != 1 or u0.grid != grid:
        raise PreconditionError("exact_flow works on a shared d=1 grid")
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    x = grid.axis()
    dens = np.abs(u0.psi) ** 2
    # seam opposite the reference centre, where minimal-image distances jump
    rel = (x - u0.center + grid.L / 2) % grid.L - grid.L / 2
    seam = np.abs(np.abs(rel) - grid.L / 2) <= 4 * grid.h
    xi = grid.freqs()
    moved = sfft.ifft(sfft.fft(u0.psi) * np.exp(-1j * xi * t))
    if t >= grid.L / 2 - 4 * grid.h or float(np.sum(np.abs(moved[seam]) ** 2)) > 1e-6 * float(np.sum(dens)):
        raise PreconditionError("translated packet reaches the torus seam")
    line = SpectralLine(grid)
    coef = line.coefficients(V.values)
    # int_0^t V(x - s) ds = F(x) - F(x - t)
    phase = line.integral(coef, x - t, x)
    return WaveState(grid, moved * np.exp(-1j * lam * phase), u0.t + t, u0.center)


@dataclass
class PhaseSamples:
    times: np.ndarray
    values: np.ndarray  # (M, T) complex

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        M = self.values.shape[0]
        v = self.values
        return np.sqrt((np.var(v.real, axis=0, ddof=1) + np.var(v.imag, axis=0, ddof=1)) / M)


def default_line_grid(model: CovarianceModel, t_max: float) -> GridSpec:
    """Power-of-two grid with ``h <= ell/8`` and room for the line ``[-t_max, 0]`` plus correlations."""
    need = max(16.0 * model.correlation_length, 2.0 * t_max + 4.0 * model.correlation_length)
    h = model.length_scale / 8.0
    n = 1 << int(math.ceil(math.log2(need / h)))
    return GridSpec(1, n * h, n)


def mc_correlation(model: CovarianceModel, lam: float, times, M: int, seed: int,
                   left_points=(), right_points=(), grid: GridSpec | None = None, chunk: int = 1000) -> PhaseSamples:
    """Per-field samples of ``prod V(y_j) prod V(x_j - t) psi^t`` with ``psi^t = exp((lam/i) int_0^t V(-s) ds)``."""
    _check_1d(model)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if grid is None:
        grid = default_line_grid(model, float(times.max()) + max([abs(x) for x in right_points], default=0.0))
    sampler = FieldSampler(model, grid)
    line = SpectralLine(grid)
    out = np.empty((M, times.size), dtype=complex)
    for start in range(0, M, chunk):
        ids = range(start, min(M, start + chunk))
        V = sampler.values(seed, ids)
        coef = line.coefficients(V)
        # int_0^t V(-s) ds = F(0) - F(-t)
        integ = line.integral(coef, -times, np.zeros_like(times))
        vals = np.exp(-1j * lam * integ).astype(complex)
        if left_points:
            vals *= np.prod(line.evaluate(coef, list(left_points)), axis=1)[:, None]
        for x in right_points:
            vals *= line.evaluate(coef, x - times)
        out[start:start + len(ids)] = vals
    return PhaseSamples(times, out)


@dataclass(frozen=True)
class RateFit:
    rate: float
    stderr: float
    intercept: float


def fit_log_rate(times, values) -> RateFit:
    """Ordinary least squares of ``log|values|`` against ``times``; returns ``-slope``."""
    t = np.asarray(times, dtype=float)
    y = np.log(np.abs(np.asarray(values)))
    A = np.stack([np.ones_like(t), t], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return RateFit(float(-coef[1]), 0.0, float(coef[0]))


def mc_rate(samples: PhaseSamples, n_blocks: int = 20) -> RateFit:
    """Fitted rate of ``|mean|`` with a delete-one-block jackknife error over realizations."""
    v = samples.values
    M = v.shape[0]
    if M < n_blocks:
        raise PreconditionError("fewer realizations than jackknife blocks")
    full = fit_log_rate(samples.times, v.mean(axis=0))
    blocks = np.array_split(np.arange(M), n_blocks)
    total = v.sum(axis=0)
    reps = []
    for b in blocks:
        reps.append(fit_log_rate(samples.times, (total - v[b].sum(axis=0)) / (M - b.size)).rate)
    reps = np.asarray(reps)
    err = math.sqrt((n_blocks - 1) / n_blocks * float(np.sum((reps - reps.mean()) ** 2)))
    return RateFit(full.rate, err, full.intercept)


def pairing_exponent(model: CovarianceModel, sign: int, points, lams) -> float:
    """Slope of ``log|pairing - first-order expansion|`` against ``log lam``."""
    lams = np.asarray(lams, dtype=float)
    res = np.array([abs(resonant_pairing(model, l, sign, points) - first_order_pairing(model, l, sign, points))
                    for l in lams])
    if np.any(res == 0):
        raise NumericalFailure("residual vanishes identically; no exponent to fit")
    slope = np.polyfit(np.log(lams), np.log(res), 1)[0]
    return float(slope)
