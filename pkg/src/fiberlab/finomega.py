"""Exact finite probability space: a periodic potential with a uniformly random shift.

``Omega = Z_N`` with the uniform measure, the shift ``tau_x omega = omega + x/h``
and the potential ``V(x, omega) = v[(omega + x/h) mod N]``. Random variables
are ``N``-vectors, ``E[f] = mean(f)``, and the stationary derivative is the
spectral derivative on ``Z_N`` with period ``L = N h``. Fibered operators are
dense Hermitian matrices, so every fibration identity holds to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError


def _symmetric_modes(n: int) -> np.ndarray:
    """Integer mode numbers in FFT order covering ``[-n/2, n/2)``."""
    return np.fft.fftfreq(n, d=1.0 / n).round().astype(int)


@dataclass(frozen=True)
class FiniteOmegaModel:
    N: int
    h: float
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (self.N,):
            raise PreconditionError("v must have length N")
        if not self.h > 0:
            raise PreconditionError("h must be positive")
        object.__setattr__(self, "v", v - v.mean())

    @property
    def L(self) -> float:
        return self.N * self.h

    @property
    def xi(self) -> np.ndarray:
        """Dual lattice of ``Z_N`` with period ``L`` in FFT order."""
        return 2.0 * math.pi * _symmetric_modes(self.N) / self.L

    @property
    def dft(self) -> np.ndarray:
        """Unitary DFT matrix ``F[m, w] = exp(-i xi_m w h) / sqrt(N)``."""
        w = np.arange(self.N)
        return np.exp(-1j * np.outer(self.xi, w) * self.h) / math.sqrt(self.N)

    @property
    def shift(self) -> np.ndarray:
        """Permutation matrix of ``(tau f)(omega) = f(omega + 1)``."""
        return np.roll(np.eye(self.N), 1, axis=1)

    @property
    def derivative(self) -> np.ndarray:
        """Spectral derivative ``F^* diag(i xi) F``; skew-Hermitian, commutes with the shift."""
        F = self.dft
        return F.conj().T @ np.diag(1j * self.xi) @ F

    def expectation(self, f: np.ndarray) -> complex:
        return complex(np.mean(f))

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        """``E[conj(f) g]``."""
        return complex(np.vdot(f, g) / self.N)


def random_model(rng: np.random.Generator, N: int, h: float, smooth: float | None = None) -> FiniteOmegaModel:
    """Mean-zero random potential; optional Gaussian low-pass of width ``smooth`` in wave number."""
    v = rng.standard_normal(N)
    if smooth is not None:
        xi = 2.0 * math.pi * _symmetric_modes(N) / (N * h)
        v = np.real(np.fft.ifft(np.fft.fft(v) * np.exp(-(xi / smooth) ** 2)))
    return FiniteOmegaModel(N, h, v)


def fiber_modes(model: FiniteOmegaModel, k: float) -> np.ndarray:
    """Dual-lattice representatives ``xi_m`` (FFT order of residues) with ``xi_m + k`` in ``[-pi/h, pi/h)``.

    Centring the mode window on ``-k`` keeps the truncation covariant under
    ``k -> k + 2 pi / L``, so the discrete fibration is exactly periodic.
    """
    N = model.N
    j = np.arange(N)
    shift = k * model.L / (2.0 * math.pi)
    m = j - N * np.floor((j + shift + N / 2.0) / N)
    return 2.0 * math.pi * m / model.L


def fibered_operator(model: FiniteOmegaModel, k: float, lam: float) -> np.ndarray:
    """``-(D + i k)^2 - k^2 + lam V`` with ``D`` the spectral derivative, as an ``N x N`` matrix."""
    xi = fiber_modes(model, k)
    w = np.arange(model.N)
    F = np.exp(-1j * np.outer(xi, w) * model.h) / math.sqrt(model.N)
    sym = (xi + k) ** 2 - k * k
    H = F.conj().T @ (sym[:, None] * F) + lam * np.diag(model.v)
    return 0.5 * (H + H.conj().T)


def free_eigenvalues(model: FiniteOmegaModel, k: float) -> np.ndarray:
    """``|xi_m + k|^2 - k^2`` over the fiber's mode window, sorted."""
    xi = fiber_modes(model, k)
    return np.sort((xi + k) ** 2 - k * k)


def _evolution(H: np.ndarray, t: float) -> np.ndarray:
    w, U = np.linalg.eigh(H)
    return (U * np.exp(-1j * t * w)) @ U.conj().T


@dataclass(frozen=True)
class FibrationCheck:
    residual: float
    relative: float


def direct_evolution(model: FiniteOmegaModel, u0: np.ndarray, lam: float, t: float) -> np.ndarray:
    """``exp(-i t (-Laplacian + lam V(., omega))) u0`` on the big torus for every shift ``omega``.

    Returns an array of shape ``(N, R N)`` indexed by ``(omega, x)``.
    """
    n_big = u0.shape[0]
    if n_big % model.N:
        raise PreconditionError("big torus size must be a multiple of N")
    xi_big = 2.0 * math.pi * _symmetric_modes(n_big) / (n_big * model.h)
    j = np.arange(n_big)
    F = np.exp(-1j * np.outer(xi_big, j * model.h)) / math.sqrt(n_big)
    K = F.conj().T @ np.diag(xi_big ** 2) @ F
    out = np.empty((model.N, n_big), dtype=complex)
    for om in range(model.N):
        Vx = model.v[(om + j) % model.N]
        H = K + lam * np.diag(Vx)
        H = 0.5 * (H + H.conj().T)
        out[om] = _evolution(H, t) @ u0
    return out


def fibered_reconstruction(model: FiniteOmegaModel, u0: np.ndarray, lam: float, t: float) -> np.ndarray:
    """Rebuild the same array from the fibered evolutions of the constant state.

    With ``u0 = sum_j c_j e^{i xi_j x}``, each big-torus wave number
    ``xi_j = kappa + xi_m`` is reduced to its fiber ``kappa`` through
    ``H_{kappa + xi_m} = e_m^{-1} H_kappa e_m - (|kappa + xi_m|^2 - |kappa|^2)``, and
    ``u(x, omega) = sum_j c_j e^{i xi_j x - i t xi_j^2} (e^{-i t H_{xi_j}} 1)(omega + x/h)``.
    """
    n_big = u0.shape[0]
    N = model.N
    if n_big % N:
        raise PreconditionError("big torus size must be a multiple of N")
    R = n_big // N
    h = model.h
    modes_big = _symmetric_modes(n_big)
    xi_big = 2.0 * math.pi * modes_big / (n_big * h)
    jx = np.arange(n_big)
    c = np.exp(-1j * np.outer(xi_big, jx * h)) @ u0 / n_big
    w = np.arange(N)
    out = np.zeros((N, n_big), dtype=complex)
    cache = {}
    for idx, mb in enumerate(modes_big):
        r = int(mb % R)
        m = (int(mb) - r) // R
        kappa = 2.0 * math.pi * r / (n_big * h)
        xi_m = 2.0 * math.pi * m / model.L
        if r not in cache:
            cache[r] = _evolution(fibered_operator(model, kappa, lam), t)
        U = cache[r]
        em = np.exp(1j * xi_m * w * h)
        k_full = kappa + xi_m
        phi = np.exp(1j * t * (k_full ** 2 - kappa ** 2)) * np.conj(em) * (U @ em)
        # phi = e^{-i t H_{k_full}} 1 on Omega
        wave = c[idx] * np.exp(1j * k_full * jx * h - 1j * t * k_full ** 2)
        out += wave[None, :] * phi[(w[:, None] + jx[None, :]) % N]
    return out


def check_fibration(model: FiniteOmegaModel, u0: np.ndarray, lam: float, t: float) -> FibrationCheck:
    """Max residual between the direct big-torus evolution and the fibered reconstruction."""
    a = direct_evolution(model, u0, lam, t)
    b = fibered_reconstruction(model, u0, lam, t)
    res = float(np.max(np.abs(a - b)))
    return FibrationCheck(res, res / max(float(np.max(np.abs(a))), 1e-300))


@dataclass(frozen=True)
class AtomList:
    energies: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))


def _group(E: np.ndarray, w: np.ndarray, tol: float) -> AtomList:
    order = np.argsort(E, kind="stable")
    E = E[order]
    w = w[order]
    outE, outW = [], []
    for e, wt in zip(E, w):
        if outE and abs(e - outE[-1]) <= tol * max(1.0, abs(e)):
            outW[-1] += wt
        else:
            outE.append(e)
            outW.append(wt)
    return AtomList(np.array(outE), np.array(outW))


def exact_spectral_measure(model: FiniteOmegaModel, phi: np.ndarray, k: float, lam: float = 0.0,
                           tol: float = 1e-9) -> AtomList:
    """Atoms ``(E_j, |<psi_j, phi>|^2)`` from a full eigendecomposition; degenerate levels merged."""
    H = fibered_operator(model, k, lam)
    E, U = np.linalg.eigh(H)
    w = np.abs(U.conj().T @ np.asarray(phi, dtype=complex)) ** 2 / model.N
    return _group(E, w, tol)


def pushforward_spectral_measure(model: FiniteOmegaModel, phi: np.ndarray, k: float, tol: float = 1e-9) -> AtomList:
    """Atoms at ``|xi_m + k|^2 - k^2`` with weights ``|phi^_m|^2`` from the DFT of ``phi``."""
    xi = fiber_modes(model, k)
    w = np.arange(model.N)
    coeff = np.exp(-1j * np.outer(xi, w) * model.h) @ np.asarray(phi, dtype=complex) / model.N
    E = (xi + k) ** 2 - k * k
    return _group(E, np.abs(coeff) ** 2, tol)


def compare_atoms(a: AtomList, b: AtomList, tol: float = 1e-9) -> float:
    """Max discrepancy in energies and weights after pairing atoms; ``inf`` if the supports differ."""
    keep_a = a.weights > tol
    keep_b = b.weights > tol
    Ea, Wa = a.energies[keep_a], a.weights[keep_a]
    Eb, Wb = b.energies[keep_b], b.weights[keep_b]
    if Ea.shape != Eb.shape:
        return math.inf
    return float(max(np.max(np.abs(Ea - Eb), initial=0.0), np.max(np.abs(Wa - Wb), initial=0.0)))


def big_torus_datum(model: FiniteOmegaModel, R: int, rng: np.random.Generator) -> np.ndarray:
    """Random smooth datum on the big torus of ``R N`` points."""
    n_big = R * model.N
    modes = _symmetric_modes(n_big)
    xi = 2.0 * math.pi * modes / (n_big * model.h)
    coef = (rng.standard_normal(n_big) + 1j * rng.standard_normal(n_big)) * np.exp(-0.5 * (xi * model.h) ** 2)
    u = np.fft.ifft(coef)
    return u / np.linalg.norm(u)
