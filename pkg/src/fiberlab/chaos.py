"""Truncated Wiener-chaos (Fock-space) representation of the fibered operators in d=1.

A state is a stack of symmetric kernels ``u_p`` on the product grid
``(xi_1, ..., xi_p)``, ``xi_i`` in ``{-n dxi, ..., n dxi}``. Sums over the grid
carry the weight ``w = dxi / (2 pi)``, so the weighted inner product is
``<u, v> = sum_p p! sum conj(u_p) v_p w^p``. With ``g`` the transform of the
convolution root, multiplication by the potential acts as ``a + a*`` with

* ``(a*_p u)(xi_1..xi_{p+1}) = (p+1)^{-1} sum_j g(xi_j) u(omit j)``,
* ``(a_p u)(xi_1..xi_p) = (p+1) sum_xi g(xi) u(xi, xi_1..xi_p) w``,

and the unperturbed fibered operator is diagonal with symbol ``|sum xi + k|^2 - |k|^2``.
On the grid the commutation relation holds exactly with constant ``sum g^2 w``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel
from .errors import NumericalFailure, PreconditionError
from .fermi import richardson_zero


@dataclass(frozen=True)
class ChaosGrid:
    """Symmetric one-dimensional Fourier grid ``[-xi_max, xi_max]`` with spacing ``dxi``."""

    xi_max: float
    dxi: float

    def __post_init__(self):
        if not (self.dxi > 0 and self.xi_max > 0):
            raise PreconditionError("grid spacing and extent must be positive")

    @property
    def n_half(self) -> int:
        return int(round(self.xi_max / self.dxi))

    @property
    def size(self) -> int:
        return 2 * self.n_half + 1

    @property
    def xi(self) -> np.ndarray:
        return np.arange(-self.n_half, self.n_half + 1) * self.dxi

    @property
    def weight(self) -> float:
        return self.dxi / (2.0 * math.pi)


def symbol_T(k, *xi) -> np.ndarray:
    """``|xi_1 + ... + xi_p + k|^2 - |k|^2``; scalars or broadcastable arrays, any dimension via the last axis."""
    kv = np.asarray(k, dtype=float)
    if len(xi) == 0:
        return np.zeros(())
    s = sum(np.asarray(x, dtype=float) for x in xi) + kv
    if kv.ndim == 0:
        return s * s - kv * kv
    return np.sum(s * s, axis=-1) - float(kv @ kv)


@dataclass
class ChaosState:
    """Kernels ``u_0, ..., u_P``; ``u_0`` is a 0-d array."""

    kernels: list
    k: float
    grid: ChaosGrid

    @property
    def P(self) -> int:
        return len(self.kernels) - 1

    def copy(self) -> "ChaosState":
        return ChaosState([u.copy() for u in self.kernels], self.k, self.grid)

    def inner(self, other: "ChaosState") -> complex:
        w = self.grid.weight
        total = 0.0 + 0.0j
        for p in range(min(self.P, other.P) + 1):
            total += math.factorial(p) * np.vdot(self.kernels[p], other.kernels[p]) * w ** p
        return complex(total)

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    def padded(self, P: int) -> "ChaosState":
        M = self.grid.size
        ks = [u.copy() for u in self.kernels[: P + 1]]
        for p in range(len(ks), P + 1):
            ks.append(np.zeros((M,) * p, dtype=complex))
        return ChaosState(ks, self.k, self.grid)

    def asymmetry(self) -> float:
        """Largest deviation of any kernel from its symmetrization."""
        return max((float(np.max(np.abs(u - symmetrize(u)))) for u in self.kernels if u.ndim > 1), default=0.0)

    @property
    def vacuum_amplitude(self) -> complex:
        return complex(self.kernels[0])


def symmetrize(u: np.ndarray) -> np.ndarray:
    p = u.ndim
    if p < 2:
        return u.copy()
    perms = list(itertools.permutations(range(p)))
    return sum(np.transpose(u, q) for q in perms) / len(perms)


class FockSpace:
    """Ladder operators and symbols for one covariance model on one grid (d=1)."""

    def __init__(self, model: CovarianceModel, grid: ChaosGrid):
        if model.dim != 1:
            raise PreconditionError("the chaos representation is implemented in d=1")
        self.model = model
        self.grid = grid
        self.g = np.asarray(model.kernel_root_hat(grid.xi), dtype=float)
        self.w = grid.weight

    @property
    def variance(self) -> float:
        """Commutator constant on the grid, ``sum g^2 w``; approximates ``C0(0)``."""
        return float(np.sum(self.g ** 2) * self.w)

    def symbol(self, k: float, p: int) -> np.ndarray:
        xi = self.grid.xi
        if p == 0:
            return np.zeros(())
        axes = [xi.reshape((-1,) + (1,) * (p - 1 - j)) for j in range(p)]
        return symbol_T(k, *axes)

    def vacuum(self, P: int, k: float) -> ChaosState:
        M = self.grid.size
        ks = [np.ones((), dtype=complex)] + [np.zeros((M,) * p, dtype=complex) for p in range(1, P + 1)]
        return ChaosState(ks, k, self.grid)

    def random_state(self, rng: np.random.Generator, P: int, k: float, envelope: float = 3.0) -> ChaosState:
        """Symmetric random kernels with a Gaussian envelope of width ``envelope``."""
        xi = self.grid.xi
        M = self.grid.size
        ks = [np.asarray(rng.standard_normal() + 1j * rng.standard_normal())]
        env1 = np.exp(-0.5 * (xi / envelope) ** 2)
        for p in range(1, P + 1):
            u = rng.standard_normal((M,) * p) + 1j * rng.standard_normal((M,) * p)
            for j in range(p):
                u = u * env1.reshape((-1,) + (1,) * (p - 1 - j))
            ks.append(symmetrize(u))
        return ChaosState(ks, k, self.grid)


def apply_creation(space: FockSpace, u: np.ndarray, P: int | None = None) -> np.ndarray:
    """``a*_p u`` for a kernel of order ``p = u.ndim``."""
    p = u.ndim
    if P is not None and p >= P:
        raise PreconditionError(f"creation from order {p} overflows the truncation P={P}")
    g = space.g
    out = np.zeros((space.grid.size,) * (p + 1), dtype=np.result_type(u, complex))
    for j in range(p + 1):
        gj = g.reshape((1,) * j + (-1,) + (1,) * (p - j))
        out += gj * np.expand_dims(u, j)
    return out / (p + 1)


def apply_annihilation(space: FockSpace, u: np.ndarray) -> np.ndarray:
    """``a_p u`` for a kernel of order ``p + 1 = u.ndim >= 1``; contracts the first slot."""
    q = u.ndim
    if q < 1:
        raise PreconditionError("annihilation needs a kernel of order at least 1")
    return q * space.w * np.tensordot(space.g, u, axes=(0, 0))


def apply_ladder(space: FockSpace, state: ChaosState) -> ChaosState:
    """``(a + a*) u`` truncated at the state's order ``P``."""
    P = state.P
    out = []
    for p in range(P + 1):
        term = np.zeros_like(state.kernels[p], dtype=complex)
        if p >= 1:
            term = term + apply_creation(space, state.kernels[p - 1])
        if p < P:
            term = term + apply_annihilation(space, state.kernels[p + 1])
        out.append(term)
    return ChaosState(out, state.k, state.grid)


def _axpy(a: complex, x: ChaosState, y: ChaosState) -> ChaosState:
    return ChaosState([a * u + v for u, v in zip(x.kernels, y.kernels)], y.k, y.grid)


def check_resonant_coverage(space: FockSpace, k: float, rel: float = 1e-6) -> None:
    """Reject grids that do not contain the resonant shell ``{0, -2k}`` with a negligible tail beyond."""
    g = np.abs(space.g)
    gmax = float(np.max(g)) if g.size else 0.0
    if space.grid.xi_max < 2.0 * abs(k) + 1.0:
        raise PreconditionError(f"xi_max={space.grid.xi_max} does not cover the resonant shell at -2k={-2 * k}")
    if gmax > 0 and max(g[0], g[-1]) > rel * gmax:
        raise PreconditionError("root transform is not negligible at the grid edge")


@dataclass
class TruncatedEvolution:
    times: np.ndarray
    vacuum: np.ndarray
    norms: np.ndarray
    final: ChaosState = field(repr=False)


def evolve_truncated(space: FockSpace, k: float, lam: float, t, P: int, dt: float) -> TruncatedEvolution:
    """Flow of the chaos-truncated fibered operator from the vacuum.

    ``t`` is a final time or an increasing sequence of output times. Each step
    is a Strang splitting: half-step exact diagonal phase, one RK4 step of the
    ladder ``lam (a + a*)``, half-step phase. Intervals between output times
    are divided into equal steps no longer than ``dt``.
    """
    if not 0 <= P <= 3:
        raise PreconditionError("P must lie in 0..3 at desk scale")
    if lam < 0:
        raise PreconditionError("coupling must be nonnegative")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise PreconditionError("output times must be nonnegative and increasing")
    if lam > 0:
        check_resonant_coverage(space, k)
    ladder_norm = 2.0 * math.sqrt(max(P, 1) * space.variance)
    if not dt > 0 or lam * ladder_norm * dt > 0.5:
        raise PreconditionError(f"dt={dt} violates lam*||a + a*||*dt <= 0.5")

    state = space.vacuum(P, k)
    symbols = [space.symbol(k, p) for p in range(P + 1)]
    vac = np.empty(times.shape, dtype=complex)
    norms = np.empty(times.shape)
    now = 0.0

    def ladder(s):
        return ChaosState([-1j * lam * u for u in apply_ladder(space, s).kernels], s.k, s.grid)

    for i, target in enumerate(times):
        span = target - now
        n = int(math.ceil(span / dt - 1e-12)) if span > 0 else 0
        h = span / n if n else 0.0
        half = [np.exp(-0.5j * h * s) for s in symbols]
        for _ in range(n):
            state = ChaosState([f * u for f, u in zip(half, state.kernels)], k, state.grid)
            if lam > 0:
                k1 = ladder(state)
                k2 = ladder(_axpy(0.5 * h, k1, state))
                k3 = ladder(_axpy(0.5 * h, k2, state))
                k4 = ladder(_axpy(h, k3, state))
                state = ChaosState(
                    [u + h / 6.0 * (a + 2 * b + 2 * c + d) for u, a, b, c, d in
                     zip(state.kernels, k1.kernels, k2.kernels, k3.kernels, k4.kernels)], k, state.grid)
            state = ChaosState([f * u for f, u in zip(half, state.kernels)], k, state.grid)
        now = target
        vac[i] = state.vacuum_amplitude
        norms[i] = state.norm()
    if not np.all(np.isfinite(vac)):
        raise NumericalFailure("truncated evolution produced non-finite values")
    return TruncatedEvolution(times, vac, norms, state)


def duhamel_bound(lam: float, t: float, N: int, variance: float) -> float:
    """``2 (e sqrt(variance) lam t)^{N+1} / sqrt((N+1)!)``."""
    if N < 0:
        raise PreconditionError("N must be nonnegative")
    x = math.e * math.sqrt(variance) * lam * abs(t)
    return 2.0 * x ** (N + 1) / math.sqrt(math.factorial(N + 1))


@dataclass
class RSResult:
    states: list
    nu: list
    eps: float


def rs_recurrence(space: FockSpace, k: float, eps: float, n: int) -> RSResult:
    """Regularized Rayleigh-Schrodinger recurrence for the outgoing family ``phi^{m, eps, -}``.

    ``(H + i eps) phi^{m+1} = -V phi^m + sum_{l=1}^{m} E[V phi^l] phi^{m-l}`` with
    ``phi^0 = 1``; the chaos-0 part of the right side cancels, and each
    ``phi^m`` (``m >= 1``) lives in chaoses ``1..m``. Returns ``nu^m = E[V conj(phi^m)]``
    for ``m = 1..n``.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    if not 1 <= n <= 3:
        raise PreconditionError("order n must lie in 1..3")
    check_resonant_coverage(space, k)
    P = n
    symbols = [space.symbol(k, p) for p in range(P + 1)]
    phis = [space.vacuum(P, k)]
    expect = [0.0 + 0.0j]  # E[V phi^0] = E[V] = 0
    nus = []
    for m in range(n):
        rhs = apply_ladder(space, phis[m])
        rhs = ChaosState([-u for u in rhs.kernels], k, space.grid)
        for l in range(1, m + 1):
            rhs = _axpy(expect[l], phis[m - l], rhs)
        ks = [np.zeros((), dtype=complex)]
        for p in range(1, P + 1):
            ks.append(rhs.kernels[p] / (symbols[p] + 1j * eps))
        phi = ChaosState(ks, k, space.grid)
        phis.append(phi)
        e_v = complex(apply_annihilation(space, phi.kernels[1]))
        expect.append(e_v)
        nus.append(complex(np.sum(space.g * np.conj(phi.kernels[1])) * space.w))
    return RSResult(phis, nus, eps)


def first_order_coefficient(model: CovarianceModel, k: float, eps_values=None,
                            xi_max: float | None = None, points_per_width: float = 5.0) -> complex:
    """``nu^1`` extrapolated to ``eps = 0`` on chaos-1 grids fine enough to resolve each Lorentzian.

    Default regularizations are ``(0.08, 0.04, 0.02) * min(1, k^2)``, since the
    shell curvature sets the scale on which ``nu^1(eps)`` varies.
    """
    if k == 0:
        raise PreconditionError("k = 0 is excluded")
    if eps_values is None:
        eps_values = tuple(e * min(1.0, k * k) for e in (0.08, 0.04, 0.02))
    if xi_max is None:
        xi_max = 2.0 * abs(k) + 12.0 / model.length_scale
    vals = []
    for eps in eps_values:
        dxi = min(0.05, eps / (2.0 * abs(k) * points_per_width))
        space = FockSpace(model, ChaosGrid(xi_max, dxi))
        vals.append(rs_recurrence(space, k, eps, 1).nu[0])
    return richardson_zero(eps_values, vals)
