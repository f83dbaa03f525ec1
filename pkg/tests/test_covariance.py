import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fiberlab.covariance import make_gaussian_model, make_model, make_triangular_model, verify_consistency
from fiberlab.errors import PreconditionError


def test_gaussian_spectral_density_symbolic(gauss):
    x, xi = sp.symbols("x xi", real=True)
    ft = sp.integrate(sp.exp(-x ** 2 / 2) * sp.exp(-sp.I * xi * x), (x, -sp.oo, sp.oo))
    f = sp.lambdify(xi, sp.simplify(ft), "numpy")
    grid = np.linspace(-6, 6, 49)
    assert np.max(np.abs(np.real(f(grid)) - gauss.spectral_density(grid))) < 1e-13


def test_gaussian_spectral_density_fft(gauss):
    h, n = 0.05, 4096
    x = (np.arange(n) - n // 2) * h
    fft = np.real(np.fft.fft(np.fft.ifftshift(gauss.c0(x)))) * h
    xi = 2 * np.pi * np.fft.fftfreq(n, d=h)
    assert np.max(np.abs(fft - gauss.spectral_density(xi))) < 1e-12


def test_variance_and_root_norm(gauss):
    assert gauss.variance == 1.0
    assert float(gauss.c0(np.array(0.0))) == 1.0
    val = integrate.quad(lambda x: float(gauss.kernel_root(np.array(x))) ** 2, -np.inf, np.inf, epsabs=1e-13)[0]
    assert abs(val - 1.0) < 1e-10


def test_consistency_residuals_gaussian(gauss):
    rep = verify_consistency(gauss, 0.05, 40.0)
    assert max(rep.as_dict()[k] for k in ("convolution", "spectral_fft", "plancherel_fourier",
                                          "plancherel_root", "positivity")) <= 1e-6


def test_consistency_triangular_positivity(tri):
    rep = verify_consistency(tri, 0.05, 40.0)
    assert rep.positivity == 0.0
    assert tri.spectral_density(np.linspace(-50, 50, 2001)).min() >= 0.0


def test_residuals_scale_with_variance():
    a = verify_consistency(make_gaussian_model(1, 1.0, 1.0), 0.05, 40.0).as_dict()
    b = verify_consistency(make_gaussian_model(1, 1.0, 3.0), 0.05, 40.0).as_dict()
    for key in a:
        assert abs(b[key] - 3.0 * a[key]) <= 1e-12


def test_triangular_closed_forms(tri):
    assert float(tri.c0(np.array(0.5))) == 0.5
    assert float(tri.c0(np.array(1.5))) == 0.0
    xi = np.array([0.7, 2.0])
    assert np.allclose(tri.spectral_density(xi), (np.sin(xi / 2) / (xi / 2)) ** 2, atol=1e-14)


def test_2d_gaussian_plancherel():
    m = make_gaussian_model(2, 1.0, 1.0)
    val = integrate.dblquad(lambda y, x: float(m.spectral_density(np.array([x, y]))), -12, 12, -12, 12)[0]
    assert abs(val / (2 * math.pi) ** 2 - 1.0) < 1e-8


@pytest.mark.parametrize("args", [(3, 1.0, 1.0), (1, 0.0, 1.0), (1, 1.0, -1.0), (1, 1.0, 0.0)])
def test_rejections(args):
    with pytest.raises(PreconditionError):
        make_gaussian_model(*args)


def test_degenerate_allowed():
    m = make_gaussian_model(1, 1.0, 0.0, allow_degenerate=True)
    assert float(m.c0(np.array(0.3))) == 0.0
    with pytest.raises(PreconditionError):
        make_model("triangular", 2, 1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(ell=st.floats(0.2, 5.0), s2=st.floats(0.1, 10.0), x=st.floats(-30, 30), xi=st.floats(-30, 30))
def test_bochner_evenness_and_bound(ell, s2, x, xi):
    for m in (make_gaussian_model(1, ell, s2), make_triangular_model(ell, s2)):
        c = m.c0(np.array(x))
        assert float(c) == float(m.c0(np.array(-x)))
        assert abs(float(c)) <= m.variance
        assert float(m.spectral_density(np.array(xi))) >= -1e-12
