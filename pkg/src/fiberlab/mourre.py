"""Regularized maximum functions and the positive-commutator check on low chaoses.

The cut-off is the quintic ``chi(s) = (15 s - 10 s^3 + 3 s^5) / 8`` on ``[-1, 1]``,
extended by ``+-1``. For ``z_1..z_p`` with ``a = max z``, ``b = min z``:

* ``m_p = max|z_j| * sgn(a + b)``,
* ``m~_p = (a + b)/2 + (a - b)/2 * chi((a + b)/(a - b))``, equal to the common
  value when ``a = b``, and ``m~_0 = 0``.

Along the diagonal direction ``(1, ..., 1)`` the derivative of ``m~_p`` is
``1 + chi'((a + b)/(a - b))`` for ``p >= 2`` and ``1`` for ``p = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import PreconditionError
from .fieldgen import GridSpec

CHI_COEFFS = (Fraction(0), Fraction(15, 8), Fraction(0), Fraction(-10, 8), Fraction(0), Fraction(3, 8))
CHI_PRIME_MAX = 15.0 / 8.0


def chi(s):
    s = np.asarray(s, dtype=float)
    c = np.clip(s, -1.0, 1.0)
    return (15.0 * c - 10.0 * c ** 3 + 3.0 * c ** 5) / 8.0


def chi_prime(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    return np.where(inside, 15.0 * (1.0 - s * s) ** 2 / 8.0, 0.0)


# exact polynomial arithmetic on coefficient tuples (lowest degree first)

def _trim(a):
    a = list(a)
    while a and a[-1] == 0:
        a.pop()
    return tuple(a)


def _padd(a, b):
    n = max(len(a), len(b))
    return _trim((a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n))


def _pmul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1) if a and b else []
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _trim(out)


def _pscale(a, c):
    return _trim(c * x for x in a)


def _pder(a):
    return _trim(i * a[i] for i in range(1, len(a)))


def _peval(a, s):
    return sum(c * s ** i for i, c in enumerate(a))


@dataclass(frozen=True)
class ChiConstraints:
    odd: bool
    endpoint_values: bool
    endpoint_flat: bool
    derivative_factorization: bool
    derivative_bound: bool
    comparison_factorization: bool

    @property
    def all_hold(self) -> bool:
        return all(self.__dict__.values())


def chi_constraints() -> ChiConstraints:
    """Each cut-off requirement reduced to an exact identity between rational polynomials.

    * oddness: every even coefficient vanishes;
    * ``chi(+-1) = +-1`` and ``chi'(+-1) = 0`` (so the extension by ``+-1`` is C^1);
    * ``chi' = 15 (1 - s^2)^2 / 8``, hence ``chi' >= 0``;
    * ``2 - chi' = (1 + 15 s^2 (2 - s^2)) / 8``, nonnegative on ``[-1, 1]``, hence ``chi' <= 2``;
    * ``chi(s) - s = s (3 s^2 - 7)(s^2 - 1) / 8``, which has the sign of ``s`` on ``[-1, 1]``.
    """
    c = _trim(CHI_COEFFS)
    one = Fraction(1)
    odd = all(c[i] == 0 for i in range(0, len(c), 2))
    ends = _peval(c, one) == 1 and _peval(c, -one) == -1
    d = _pder(c)
    flat = _peval(d, one) == 0 and _peval(d, -one) == 0
    one_minus_s2 = (one, Fraction(0), -one)
    fact = d == _pscale(_pmul(one_minus_s2, one_minus_s2), Fraction(15, 8))
    two_minus = _padd((Fraction(2),), _pscale(d, -one))
    s2 = (Fraction(0), Fraction(0), one)
    two_minus_s2 = (Fraction(2), Fraction(0), -one)
    bound = two_minus == _pscale(_padd((one,), _pscale(_pmul(s2, two_minus_s2), Fraction(15))), Fraction(1, 8))
    diff = _padd(c, (Fraction(0), -one))
    target = _pscale(_pmul(_pmul((Fraction(0), one), (Fraction(-7), Fraction(0), Fraction(3))), (-one, Fraction(0), one)),
                     Fraction(1, 8))
    comp = diff == target
    return ChiConstraints(odd, ends, flat, fact, bound, comp)


def chi_exact(s: Fraction) -> Fraction:
    """``chi`` at a rational point, in exact arithmetic."""
    s = Fraction(s)
    if s >= 1:
        return Fraction(1)
    if s <= -1:
        return Fraction(-1)
    return _peval(CHI_COEFFS, s)


def m_p(*z) -> float:
    """``max|z_j| * sgn(max + min)``."""
    if not z:
        return 0.0
    a = max(z)
    b = min(z)
    return float(max(abs(a), abs(b)) * np.sign(a + b))


def m_tilde(z) -> np.ndarray:
    """Vectorized ``m~_p`` over the last axis of ``z``; an empty last axis gives 0."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] == 0:
        return np.zeros(z.shape[:-1])
    a = z.max(axis=-1)
    b = z.min(axis=-1)
    gap = a - b
    safe = np.where(gap > 0, gap, 1.0)
    reg = np.where(gap > 0, 0.5 * gap * chi((a + b) / safe), 0.0)
    return 0.5 * (a + b) + reg


def m_tilde_p(*z) -> float:
    return float(m_tilde(np.array(z, dtype=float)))


def lipschitz_insertion_check(rng: np.random.Generator, n_samples: int = 100_000, p_max: int = 6,
                              box: float = 5.0) -> float:
    """Largest ``|m~_{p+1}(z, z_1..z_p) - m~_p(z_1..z_p)| / |z|`` over uniform samples, ``p = 0..p_max``."""
    worst = 0.0
    per = max(1, n_samples // (p_max + 1))
    for p in range(p_max + 1):
        Z = rng.uniform(-box, box, size=(per, p + 1))
        z = Z[:, 0]
        keep = np.abs(z) > 0
        ratio = np.abs(m_tilde(Z) - m_tilde(Z[:, 1:])) / np.where(keep, np.abs(z), 1.0)
        worst = max(worst, float(np.max(ratio[keep])))
    return worst


def _near_kink(z: np.ndarray, h: float) -> bool:
    """Whether the argmax or the argmin is ambiguous within ``2 h``."""
    if z.size < 2:
        return False
    s = np.sort(z)
    return bool(s[-1] - s[-2] <= 2.0 * h or s[1] - s[0] <= 2.0 * h)


def grad_sum(z, h: float = 1e-6) -> float:
    """Central difference of ``m~_p`` along ``(1, ..., 1)``."""
    z = np.asarray(z, dtype=float)
    if _near_kink(z, h):
        raise PreconditionError("sample lies within the step of a max/min kink")
    return float((m_tilde(z + h) - m_tilde(z - h)) / (2.0 * h))


def grad_sum_exact(z) -> float:
    """``1 + chi'((max + min)/(max - min))`` for ``p >= 2``; ``1`` for ``p = 1``."""
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        return 1.0
    a, b = z.max(), z.min()
    if a == b:
        return 1.0
    return float(1.0 + chi_prime((a + b) / (a - b)))


def grad_sum_samples(rng: np.random.Generator, n_samples: int = 10_000, p_max: int = 4, box: float = 5.0,
                     h: float = 1e-6, budget: int = 100, unregularized: bool = False) -> np.ndarray:
    """Finite-difference grad-sums at random points, resampling near kinks."""
    out = np.empty(n_samples)
    retries = 0
    for i in range(n_samples):
        p = 1 + i % p_max
        while True:
            z = rng.uniform(-box, box, size=p)
            if not _near_kink(z, h):
                break
            retries += 1
            if retries > budget:
                raise PreconditionError("kink-proximity resample budget exhausted")
        if unregularized:
            out[i] = (m_p(*(z + h)) - m_p(*(z - h))) / (2.0 * h)
        else:
            out[i] = grad_sum(z, h)
    return out


# commutator forms on chaoses p = 1, 2 in d = 1

@dataclass(frozen=True)
class CommutatorForms:
    lhs: float
    rhs: float
    h1_norm2: float
    l2_norm2: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


def _weight_field(p: int, k: float, x: np.ndarray) -> np.ndarray:
    """``M' - 2`` on the product grid, with ``M'`` the grad-sum of ``m~_p`` at ``(k x_1, ..., k x_p)``."""
    if p == 1:
        return -np.ones_like(x)
    X = np.meshgrid(*([x] * p), indexing="ij")
    Z = np.stack([k * Xi for Xi in X], axis=-1)
    a = Z.max(axis=-1)
    b = Z.min(axis=-1)
    gap = a - b
    # on the diagonal m~ is locally max or min, so chi' vanishes there
    r = np.where(gap > 0, (a + b) / np.where(gap > 0, gap, 1.0), 2.0)
    return chi_prime(r) - 1.0


def _diag_derivative(phi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``sum_j d/dx_j`` by FFT over all axes."""
    p = phi.ndim
    axes = tuple(range(p))
    spec = np.fft.fftn(phi, axes=axes)
    total = sum(xi.reshape((1,) * j + (-1,) + (1,) * (p - 1 - j)) for j in range(p))
    return np.fft.ifftn(1j * total * spec, axes=axes)


def _partial_sq_norm(phi: np.ndarray, xi: np.ndarray) -> float:
    p = phi.ndim
    spec = np.fft.fftn(phi)
    tot = 0.0
    for j in range(p):
        xj = xi.reshape((1,) * j + (-1,) + (1,) * (p - 1 - j))
        tot += float(np.sum(np.abs(xj * spec) ** 2))
    return tot / phi.size


def check_support(phi: np.ndarray, band: float = 0.05, rel: float = 1e-10) -> None:
    """Reject kernels with mass near the grid boundary on any axis."""
    n = phi.shape[0]
    m = max(1, int(math.ceil(band * n)))
    amp = np.abs(phi)
    ref = float(amp.max()) if amp.size else 0.0
    for ax in range(phi.ndim):
        edge = np.concatenate([np.take(amp, range(m), axis=ax).ravel(), np.take(amp, range(n - m, n), axis=ax).ravel()])
        if ref > 0 and float(edge.max()) > rel * ref:
            raise PreconditionError("kernel support touches the grid boundary")


def commutator_form(p: int, k: float, grid: GridSpec, phi: np.ndarray) -> CommutatorForms:
    """Quadratic forms of the commutator identity and of its lower bound on chaos ``p``.

    With ``G = sum_j d/dx_j + i k`` and ``W = M' - 2``:

    * ``lhs = <phi, -2 G^2 phi> - i k/2 <phi, (G W + W G) phi> = 2 ||G phi||^2 + k Im<W phi, G phi>``,
    * ``rhs = <phi, (-G^2 - k^2/4) phi>``.

    Inner products are grid sums times ``h^p``.
    """
    if p not in (1, 2):
        raise PreconditionError("commutator_form supports p in {1, 2}")
    if grid.d != 1:
        raise PreconditionError("commutator_form works in d=1")
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (grid.n,) * p:
        raise PreconditionError("kernel shape does not match the grid")
    check_support(phi)
    x = grid.axis()
    xi = grid.freqs()
    vol = grid.h ** p
    Gphi = _diag_derivative(phi, xi) + 1j * k * phi
    W = _weight_field(p, k, x)
    l2 = float(np.vdot(phi, phi).real) * vol
    g2 = float(np.vdot(Gphi, Gphi).real) * vol
    cross = complex(np.vdot(W * phi, Gphi)) * vol
    lhs = 2.0 * g2 + k * cross.imag
    rhs = g2 - 0.25 * k * k * l2
    h1 = l2 + _partial_sq_norm(phi, xi) * vol
    return CommutatorForms(lhs, rhs, h1, l2)


def plane_wave_symbol(k: float, xi: float) -> float:
    """Limit of ``lhs / ||phi||^2`` for a widely windowed mode ``e^{i xi x}`` on chaos 1: ``2 (xi + k)^2 - k (xi + k)``."""
    return 2.0 * (xi + k) ** 2 - k * (xi + k)


def random_smooth_kernel(rng: np.random.Generator, grid: GridSpec, p: int, n_bumps: int = 3,
                         width: tuple = (0.5, 2.0), inner: float = 0.3) -> np.ndarray:
    """Sum of modulated Gaussian bumps centred in the inner ``inner * L`` of each axis, symmetrized for p=2."""
    x = grid.axis()
    L = grid.L
    X = np.meshgrid(*([x] * p), indexing="ij")
    out = np.zeros((grid.n,) * p, dtype=complex)
    for _ in range(n_bumps):
        c = rng.uniform(-inner * L / 2, inner * L / 2, size=p)
        s = rng.uniform(*width)
        q = rng.uniform(-3.0, 3.0, size=p)
        amp = rng.standard_normal() + 1j * rng.standard_normal()
        r2 = sum((Xi - ci) ** 2 for Xi, ci in zip(X, c))
        out += amp * np.exp(-r2 / (2 * s * s) + 1j * sum(qi * Xi for qi, Xi in zip(q, X)))
    if p == 2:
        out = 0.5 * (out + out.T)
    return out
