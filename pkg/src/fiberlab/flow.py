"""Split-step wave propagation on the periodized torus and the ensemble decay experiment.

The Schrodinger step is Strang splitting ``K(dt/2) P(dt) K(dt/2)`` with the
exact spectral kinetic factor ``exp(-i dt |xi|^2)`` and the pointwise potential
factor ``exp(-i lam V dt)``, so the free flow of lattice modes is exact. Mode
amplitudes use the continuum normalization ``u^(k) ~ h sum_j u_j e^{-i k x_j}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .covariance import CovarianceModel
from .errors import NumericalFailure, PreconditionError
from .fieldgen import FieldRealization, FieldSampler, GridSpec


@dataclass
class WaveState:
    grid: GridSpec
    psi: np.ndarray
    t: float = 0.0
    center: float = 0.0

    def norm(self) -> float:
        return float(math.sqrt(np.sum(np.abs(self.psi) ** 2) * self.grid.h ** self.grid.d))


def kinetic_symbol(grid: GridSpec, kind: str = "schrodinger") -> np.ndarray:
    """``|xi|^2`` for the Laplacian or ``xi_1`` for the advection ``(1/i) d/dx_1``, in FFT layout."""
    f = grid.freqs()
    if grid.d == 1:
        F = [f]
    else:
        F = np.meshgrid(f, f, indexing="ij")
    if kind == "schrodinger":
        return sum(Fi * Fi for Fi in F)
    if kind == "advection":
        return F[0]
    raise PreconditionError(f"unknown kinetic term {kind!r}")


def max_step(grid: GridSpec, lam: float, vmax: float) -> float:
    """``min(h^2/pi, 0.1/(lam max|V|))``."""
    bound = grid.h ** 2 / math.pi
    if lam * vmax > 0:
        bound = min(bound, 0.1 / (lam * vmax))
    return bound


def _advance(psi, kin, pot, t, dt, axes, workers):
    """Strang steps of equal length covering ``t`` with consecutive half-kinetic factors merged."""
    n = int(math.ceil(t / dt - 1e-12)) if t > 0 else 0
    if n == 0:
        return psi
    h = t / n
    half = np.exp(-0.5j * h * kin)
    full = half * half
    spec = sfft.fftn(psi, axes=axes, workers=workers) * half
    for i in range(n):
        psi = sfft.ifftn(spec, axes=axes, workers=workers)
        if pot is not None:
            psi = psi * pot
        spec = sfft.fftn(psi, axes=axes, workers=workers)
        spec *= full if i < n - 1 else half
    return sfft.ifftn(spec, axes=axes, workers=workers)


def evolve(V: FieldRealization | None, psi0: WaveState, lam: float, t_final: float, dt: float,
           kinetic: str = "schrodinger", workers: int = 1) -> WaveState:
    """Evolve ``i d_t psi = (K + lam V) psi`` to ``psi0.t + t_final``.

    ``V`` may be ``None`` for the free flow. The step actually used is
    ``t_final / ceil(t_final / dt)``.
    """
    grid = psi0.grid
    if t_final < 0:
        raise PreconditionError("t_final must be nonnegative")
    vals = None
    vmax = 0.0
    if V is not None:
        if V.grid != grid:
            raise PreconditionError("field and wave live on different grids")
        vals = np.asarray(V.values, dtype=float)
        vmax = float(np.max(np.abs(vals))) if vals.size else 0.0
    limit = max_step(grid, lam, vmax) if kinetic == "schrodinger" else (0.1 / (lam * vmax) if lam * vmax > 0 else math.inf)
    if not 0 < dt <= limit * (1 + 1e-12):
        raise PreconditionError(f"dt={dt} exceeds the stability bound {limit:.4g}")
    kin = kinetic_symbol(grid, kinetic)
    pot = None if (vals is None or lam == 0) else np.exp(-1j * lam * dt_eff(t_final, dt) * vals)
    axes = tuple(range(-grid.d, 0))
    psi = _advance(np.asarray(psi0.psi, dtype=complex), kin, pot, t_final, dt, axes, workers)
    return WaveState(grid, psi, psi0.t + t_final, psi0.center)


def dt_eff(t: float, dt: float) -> float:
    n = int(math.ceil(t / dt - 1e-12)) if t > 0 else 0
    return t / n if n else 0.0


def mode_amplitudes(psi: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Continuum-normalized transform ``h^d sum_j psi_j e^{-i xi x_j}`` in FFT layout (trailing axes)."""
    axes = tuple(range(-grid.d, 0))
    n = grid.n
    ax = grid.axis()
    # phase from the grid origin at -L/2 (index shift n//2)
    phase = np.exp(-1j * grid.freqs() * ax[0])
    spec = sfft.fftn(psi, axes=axes) * grid.h ** grid.d
    if grid.d == 1:
        return spec * phase
    return spec * phase[:, None] * phase[None, :]


def packet_from_spectrum(grid: GridSpec, profile, x0: float = 0.0) -> np.ndarray:
    """Normalized d=1 packet with ``u^(k)`` proportional to ``profile(k) e^{-i k x0}`` on lattice modes."""
    if grid.d != 1:
        raise PreconditionError("packets are built in d=1")
    xi = grid.freqs()
    amp = np.asarray(profile(xi), dtype=complex) * np.exp(-1j * xi * x0)
    ax = grid.axis()
    spec = amp * np.exp(1j * xi * ax[0]) / grid.h
    psi = sfft.ifft(spec)
    nrm = math.sqrt(np.sum(np.abs(psi) ** 2) * grid.h)
    if nrm == 0:
        raise PreconditionError("packet profile vanishes on the lattice")
    return psi / nrm


def cos2_bump(lo: float, hi: float):
    """``cos^2`` bump supported on ``[lo, hi]``."""
    c = 0.5 * (lo + hi)
    w = 0.5 * (hi - lo)

    def f(k):
        k = np.asarray(k, dtype=float)
        return np.where(np.abs(k - c) < w, np.cos(0.5 * math.pi * (k - c) / w) ** 2, 0.0)

    return f


@dataclass(frozen=True)
class DecayExperimentConfig:
    model: CovarianceModel
    grid: GridSpec
    lam: float
    s_list: tuple
    k_lo: float = 0.8
    k_hi: float = 1.6
    M: int = 2500
    seed: int = 0
    x0: float | None = None
    dt: float | None = None
    chunk: int = 250
    workers: int = 1

    def times(self) -> np.ndarray:
        return np.asarray(self.s_list, dtype=float) / self.lam ** 2 if self.lam > 0 else np.asarray(self.s_list, dtype=float)

    def validate(self) -> None:
        if not 0 <= self.lam <= 0.5:
            raise PreconditionError("coupling must lie in [0, 0.5]")
        if self.M < 16:
            raise PreconditionError("ensemble size M must be at least 16")
        if self.grid.d != 1:
            raise PreconditionError("the decay experiment runs in d=1")
        if not 0 < self.k_lo < self.k_hi:
            raise PreconditionError("packet support must be an interval away from k=0")
        s = np.asarray(self.s_list, dtype=float)
        if s.size == 0 or np.any(s < 0) or np.any(np.diff(s) <= 0):
            raise PreconditionError("s_list must be increasing and nonnegative")
        self.grid.validate(self.model)
        front = 2.0 * max(abs(self.k_lo), abs(self.k_hi)) * float(self.times().max())
        if front > self.grid.L / 2:
            raise PreconditionError(f"ballistic front {front:.4g} exceeds L/2 = {self.grid.L / 2:.4g}")

    def describe(self) -> dict:
        return {
            "model": self.model.describe(),
            "grid": self.grid.describe(),
            "lam": self.lam,
            "s_list": list(self.s_list),
            "packet": {"shape": "cos2", "k_lo": self.k_lo, "k_hi": self.k_hi, "x0": self.x0},
            "M": self.M,
            "seed": self.seed,
            "dt": self.dt,
        }


@dataclass
class EnsembleAverage:
    modes: np.ndarray
    times: np.ndarray
    lam: float
    mean_hat: np.ndarray
    stderr: np.ndarray
    M: int
    u0_hat: np.ndarray
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def s(self) -> np.ndarray:
        return self.lam ** 2 * self.times

    def mode_index(self, k: float) -> int:
        i = int(np.argmin(np.abs(self.modes - k)))
        if abs(self.modes[i] - k) > 1e-9 * max(1.0, abs(k)):
            raise PreconditionError(f"k={k} is not a retained mode")
        return i

    def normalized(self) -> np.ndarray:
        """``mean_hat e^{i t k^2} / u0_hat``; equals ``E[e^{-itH_k}1]`` when the fibration holds."""
        return self.mean_hat * np.exp(1j * np.outer(self.modes ** 2, self.times)) / self.u0_hat[:, None]


def _stderr_complex(x: np.ndarray) -> np.ndarray:
    """Standard error of the complex mean along axis 0; the jackknife reduces to this for means."""
    M = x.shape[0]
    if M < 2:
        return np.zeros(x.shape[1:])
    var = np.var(x.real, axis=0, ddof=1) + np.var(x.imag, axis=0, ddof=1)
    return np.sqrt(var / M)


def ensemble_average(config: DecayExperimentConfig, keep_samples: bool = False) -> EnsembleAverage:
    """Average mode amplitudes of the evolved packet over ``M`` independent fields.

    Realization ``i`` uses the field drawn from ``SeedSequence([seed, i])``; per
    realization amplitudes are stored and reduced in index order, so the result
    does not depend on the chunk size or on ``workers``.
    """
    config.validate()
    grid = config.grid
    model = config.model
    lam = config.lam
    x0 = -grid.L / 4 if config.x0 is None else config.x0
    profile = cos2_bump(config.k_lo, config.k_hi)
    psi0 = packet_from_spectrum(grid, profile, x0)
    u0_all = mode_amplitudes(psi0, grid)
    xi = grid.freqs()
    keep = np.abs(u0_all) >= 1e-3 * np.max(np.abs(u0_all))
    idx = np.nonzero(keep)[0]
    idx = idx[np.argsort(xi[idx])]
    modes = xi[idx]
    u0_hat = u0_all[idx]
    times = config.times()
    sampler = FieldSampler(model, grid)
    kin = kinetic_symbol(grid)
    phase0 = np.exp(-1j * xi * grid.axis()[0]) * grid.h
    if model.sigma2 > 0:
        vmax_guess = 8.0 * math.sqrt(model.sigma2)
    else:
        vmax_guess = 0.0
    dt = config.dt if config.dt is not None else max_step(grid, lam, vmax_guess)
    amps = np.empty((config.M, idx.size, times.size), dtype=complex)
    for start in range(0, config.M, config.chunk):
        ids = range(start, min(config.M, start + config.chunk))
        V = sampler.values(config.seed, ids) if lam > 0 else None
        if V is not None and lam * float(np.max(np.abs(V))) * dt > 0.1 * (1 + 1e-12):
            raise NumericalFailure("field excursion exceeds the step bound; pass a smaller dt")
        pot_cache = {}
        psi = np.broadcast_to(psi0, (len(ids), grid.n)).astype(complex)
        now = 0.0
        for j, t in enumerate(times):
            span = t - now
            if span > 0:
                h = dt_eff(span, dt)
                if V is not None:
                    key = round(h, 15)
                    if key not in pot_cache:
                        pot_cache[key] = np.exp(-1j * lam * h * V)
                    pot = pot_cache[key]
                else:
                    pot = None
                psi = _advance(psi, kin, pot, span, dt, (-1,), config.workers)
            now = t
            spec = sfft.fft(psi, axis=-1, workers=config.workers) * phase0
            amps[start:start + len(ids), :, j] = spec[:, idx]
    mean = np.mean(amps, axis=0)
    # the free flow is deterministic
    stderr = _stderr_complex(amps) if lam > 0 else np.zeros(mean.shape)
    return EnsembleAverage(modes, times, lam, mean, stderr, config.M, u0_hat, amps if keep_samples else None)


@dataclass(frozen=True)
class DecayFit:
    alpha: float
    beta: float
    alpha_err: float
    beta_err: float
    residual: float
    variable: str


def _wls(x, y, sigma):
    w = 1.0 / sigma ** 2
    A = np.stack([np.ones_like(x), x], axis=1)
    Aw = A * w[:, None]
    cov = np.linalg.inv(A.T @ Aw)
    coef = cov @ (Aw.T @ y)
    res = y - A @ coef
    return coef, cov, res


def decay_fit(series: EnsembleAverage, k: float, variable: str = "s") -> DecayFit:
    """Weighted log-linear fits of ``|m|`` and of the unwrapped ``arg m``, ``m = mean e^{itk^2}/u0``.

    Returns ``alpha = -d log|m| / dv`` and ``beta = -d arg m / dv`` with
    ``v = s`` (kinetic time) or ``v = t``. Weights are ``(|m| / stderr)^2``;
    with a zero standard error the fit is unweighted.
    """
    i = series.mode_index(k)
    m = series.normalized()[i]
    se = series.stderr[i] / np.abs(series.u0_hat[i])
    if variable == "s":
        if series.lam == 0:
            raise PreconditionError("kinetic time is degenerate at lam = 0; fit in t")
        x = series.s
    elif variable == "t":
        x = series.times
    else:
        raise PreconditionError("variable must be 's' or 't'")
    good = np.abs(m) > 3.0 * se
    if np.count_nonzero(good) < 4:
        raise NumericalFailure("insufficient ensemble: fewer than 4 points above the noise floor")
    x, m, se = x[good], m[good], se[good]
    sig = se / np.abs(m)
    if np.all(sig == 0):
        sig = np.ones_like(sig)
    else:
        sig = np.maximum(sig, 1e-300)
    ca, cova, ra = _wls(x, np.log(np.abs(m)), sig)
    cb, covb, rb = _wls(x, np.unwrap(np.angle(m)), sig)
    resid = float(max(np.max(np.abs(ra)), np.max(np.abs(rb))))
    return DecayFit(-ca[1], -cb[1], float(math.sqrt(cova[1, 1])), float(math.sqrt(covb[1, 1])), resid, variable)


def ballistic_moment(state: WaveState) -> float:
    """``(1/t) ||(x - center) psi||`` with minimal-image distances on the torus."""
    if not state.t > 0:
        raise PreconditionError("ballistic moment needs t > 0")
    grid = state.grid
    L = grid.L
    ax = grid.axis()
    dx = (ax - state.center + L / 2) % L - L / 2
    dens = np.abs(state.psi) ** 2
    if grid.d == 1:
        r2 = dx * dx
        seam = np.abs(np.abs(dx) - L / 2) <= 4 * grid.h
    else:
        DX, DY = np.meshgrid(dx, dx, indexing="ij")
        r2 = DX ** 2 + DY ** 2
        seam = (np.abs(np.abs(DX) - L / 2) <= 4 * grid.h) | (np.abs(np.abs(DY) - L / 2) <= 4 * grid.h)
    total = float(np.sum(dens))
    if total == 0:
        raise PreconditionError("zero state")
    if float(np.sum(dens[seam])) > 1e-6 * total:
        raise PreconditionError("wave packet reaches the torus seam")
    vol = grid.h ** grid.d
    return float(math.sqrt(np.sum(r2 * dens) * vol)) / state.t


def free_gaussian_ballistic(k: float, sigma0: float, t: float) -> float:
    """Exact ``(1/t) ||x psi_t||`` for ``|psi_0|^2`` Gaussian of variance ``sigma0^2`` with momentum ``k``."""
    return math.sqrt(4.0 * k * k + 1.0 / sigma0 ** 2 + sigma0 ** 2 / t ** 2)


def gaussian_packet(grid: GridSpec, k: float, sigma0: float, x0: float = 0.0) -> WaveState:
    x = grid.axis()
    psi = (2.0 * math.pi * sigma0 ** 2) ** (-0.25) * np.exp(-((x - x0) ** 2) / (4 * sigma0 ** 2) + 1j * k * x)
    return WaveState(grid, psi.astype(complex), 0.0, x0)
