"""Covariance models of a stationary Gaussian potential.

Every model carries the covariance ``c0``, its spectral density
``spectral_density`` (Fourier convention ``f^(xi) = int e^{-i xi.x} f(x) dx``),
the convolution root ``kernel_root`` with ``c0 = root * root`` and the root's
transform ``kernel_root_hat = sqrt(spectral_density)`` (up to sign for models
whose root transform changes sign).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import PreconditionError

ArrayFn = Callable[[np.ndarray], np.ndarray]


def sq_norm(x, dim: int) -> np.ndarray:
    """Squared Euclidean norm; in d=1 points are scalars, in d=2 the last axis has length 2."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return x * x
    if x.shape[-1] != dim:
        raise PreconditionError(f"expected last axis of length {dim}, got shape {x.shape}")
    return np.sum(x * x, axis=-1)


@dataclass(frozen=True)
class CovarianceModel:
    """Analytically linked covariance data of a stationary Gaussian field."""

    dim: int
    family: str
    length_scale: float
    sigma2: float
    c0: ArrayFn = field(repr=False)
    spectral_density: ArrayFn = field(repr=False)
    kernel_root: ArrayFn = field(repr=False)
    kernel_root_hat: ArrayFn = field(repr=False)
    correlation_length: float = 0.0

    @property
    def variance(self) -> float:
        return float(self.sigma2)

    @property
    def model_id(self) -> str:
        return f"{self.family}(d={self.dim},ell={self.length_scale!r},sigma2={self.sigma2!r})"

    def describe(self) -> dict:
        """JSON-serializable provenance record."""
        return {
            "family": self.family,
            "d": self.dim,
            "ell": self.length_scale,
            "sigma2": self.sigma2,
            "correlation_length": self.correlation_length,
        }


def _check_common(d: int, ell: float, sigma2: float, allow_zero_variance: bool = True) -> None:
    if d not in (1, 2):
        raise PreconditionError(f"dimension must be 1 or 2, got {d}")
    if not (ell > 0 and math.isfinite(ell)):
        raise PreconditionError(f"length scale must be positive, got {ell}")
    if not math.isfinite(sigma2) or sigma2 < 0 or (sigma2 == 0 and not allow_zero_variance):
        raise PreconditionError(f"variance must be positive, got {sigma2}")


def make_gaussian_model(d: int, ell: float, sigma2: float, allow_degenerate: bool = False) -> CovarianceModel:
    """Gaussian covariance ``sigma2 * exp(-|x|^2 / (2 ell^2))``.

    The root is the Gaussian of width ``ell/sqrt(2)`` carrying the matching
    amplitude. ``sigma2 = 0`` is rejected unless ``allow_degenerate`` is set,
    in which case the model describes the zero field.
    """
    _check_common(d, ell, sigma2, allow_zero_variance=allow_degenerate)
    ell = float(ell)
    sigma2 = float(sigma2)
    sigma = math.sqrt(sigma2)
    shat0 = sigma2 * (2.0 * math.pi * ell * ell) ** (d / 2)
    root_hat0 = sigma * (2.0 * math.pi * ell * ell) ** (d / 4)
    root_amp = sigma * 2.0 ** (d / 4) * (math.pi * ell * ell) ** (-d / 4)

    def c0(x):
        return sigma2 * np.exp(-sq_norm(x, d) / (2.0 * ell * ell))

    def spectral_density(xi):
        return shat0 * np.exp(-ell * ell * sq_norm(xi, d) / 2.0)

    def kernel_root(x):
        return root_amp * np.exp(-sq_norm(x, d) / (ell * ell))

    def kernel_root_hat(xi):
        return root_hat0 * np.exp(-ell * ell * sq_norm(xi, d) / 4.0)

    return CovarianceModel(
        dim=d,
        family="gaussian",
        length_scale=ell,
        sigma2=sigma2,
        c0=c0,
        spectral_density=spectral_density,
        kernel_root=kernel_root,
        kernel_root_hat=kernel_root_hat,
        correlation_length=8.0 * ell,
    )


def make_triangular_model(ell: float, sigma2: float) -> CovarianceModel:
    """Compactly supported d=1 covariance ``sigma2 * max(0, 1 - |x|/ell)``.

    Its root is the box ``sigma/sqrt(ell) * 1_{|x| <= ell/2}`` and its spectral
    density is the Fejer-type kernel ``sigma2 * ell * sinc^2(ell xi / 2)``.
    """
    _check_common(1, ell, sigma2)
    ell = float(ell)
    sigma2 = float(sigma2)
    sigma = math.sqrt(sigma2)

    def _sinc(u):
        # np.sinc is sin(pi u)/(pi u)
        return np.sinc(np.asarray(u, dtype=float) / math.pi)

    def c0(x):
        return sigma2 * np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float)) / ell)

    def spectral_density(xi):
        return sigma2 * ell * _sinc(ell * np.asarray(xi, dtype=float) / 2.0) ** 2

    def kernel_root(x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= ell / 2.0, sigma / math.sqrt(ell), 0.0)

    def kernel_root_hat(xi):
        return sigma * math.sqrt(ell) * _sinc(ell * np.asarray(xi, dtype=float) / 2.0)

    return CovarianceModel(
        dim=1,
        family="triangular",
        length_scale=ell,
        sigma2=sigma2,
        c0=c0,
        spectral_density=spectral_density,
        kernel_root=kernel_root,
        kernel_root_hat=kernel_root_hat,
        correlation_length=ell,
    )


def make_spectral_model(spectral_density: ArrayFn, xi_max: float, name: str = "spectral") -> CovarianceModel:
    """d=1 model given only through an even, nonnegative spectral density supported in ``|xi| <= xi_max``.

    The covariance and the root are obtained by cosine-transform quadrature,
    so this family is meant for spectral-side experiments only.
    """
    if xi_max <= 0:
        raise PreconditionError("xi_max must be positive")

    def _cos_transform(f, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for i, xv in enumerate(x.ravel()):
            val, _ = integrate.quad(lambda u: float(f(u)), 0.0, xi_max, weight="cos", wvar=xv, limit=200)
            out.ravel()[i] = val / math.pi
        return out

    def root_hat(xi):
        return np.sqrt(np.maximum(spectral_density(xi), 0.0))

    sigma2 = float(_cos_transform(spectral_density, 0.0)[0])
    return CovarianceModel(
        dim=1,
        family=name,
        length_scale=math.pi / xi_max,
        sigma2=sigma2,
        c0=lambda x: _cos_transform(spectral_density, x),
        spectral_density=spectral_density,
        kernel_root=lambda x: _cos_transform(root_hat, x),
        kernel_root_hat=root_hat,
        correlation_length=float("inf"),
    )


def make_model(family: str, d: int, ell: float, sigma2: float) -> CovarianceModel:
    """Construct a model by config name."""
    if family == "gaussian":
        return make_gaussian_model(d, ell, sigma2)
    if family == "triangular":
        if d != 1:
            raise PreconditionError("triangular model exists in d=1 only")
        return make_triangular_model(ell, sigma2)
    raise PreconditionError(f"unknown covariance family {family!r}")


@dataclass(frozen=True)
class ConsistencyReport:
    """Max-norm residuals of the analytic identities on a sampling grid."""

    convolution: float
    spectral_fft: float
    plancherel_fourier: float
    plancherel_root: float
    positivity: float
    fft_min: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def verify_consistency(model: CovarianceModel, step: float, extent: float) -> ConsistencyReport:
    """Check ``C0 = root * root``, ``C0^ = FFT(C0)`` and the Plancherel masses in d=1.

    The grid covers ``[-extent/2, extent/2)`` with spacing ``step``. Residuals:

    * ``convolution``: sup |h (r * r)(x_j) - c0(x_j)| using discrete circular convolution;
    * ``spectral_fft``: sup |h FFT(c0) - C0^| on the discrete dual grid;
    * ``plancherel_fourier``: |(2 pi)^-1 sum C0^ dxi - C0(0)| over a wide dual grid;
    * ``plancherel_root``: |h sum r^2 - C0(0)|;
    * ``positivity``: max(0, -min C0^) on the dual grid (analytic density);
    * ``fft_min``: smallest FFT-computed spectral value (reported, not thresholded).
    """
    if model.dim != 1:
        raise PreconditionError("verify_consistency samples d=1 models")
    if step <= 0 or extent <= 0:
        raise PreconditionError("step and extent must be positive")
    n = int(round(extent / step))
    x = (np.arange(n) - n // 2) * step
    c = np.asarray(model.c0(x), dtype=float)
    r = np.asarray(model.kernel_root(x), dtype=float)

    # circular convolution centred at index n//2
    rr = np.fft.ifftshift(r)
    conv = np.real(np.fft.ifft(np.fft.fft(rr) ** 2)) * step
    conv = np.fft.fftshift(conv)
    res_conv = float(np.max(np.abs(conv - c)))

    xi = 2.0 * np.pi * np.fft.fftfreq(n, d=step)
    chat_fft = np.real(np.fft.fft(np.fft.ifftshift(c))) * step
    chat = np.asarray(model.spectral_density(xi), dtype=float)
    res_fft = float(np.max(np.abs(chat_fft - chat)))

    dxi = 2.0 * np.pi / (n * step)
    xi_wide = (np.arange(-8 * n, 8 * n + 1)) * dxi
    mass = float(np.sum(model.spectral_density(xi_wide)) * dxi / (2.0 * np.pi))
    var = float(model.c0(np.array(0.0)))
    res_pf = abs(mass - var)
    res_pr = abs(float(np.sum(r * r) * step) - var)
    positivity = float(max(0.0, -np.min(chat)))
    return ConsistencyReport(
        convolution=res_conv,
        spectral_fft=res_fft,
        plancherel_fourier=res_pf,
        plancherel_root=res_pr,
        positivity=positivity,
        fft_min=float(np.min(chat_fft)),
    )
