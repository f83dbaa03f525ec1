import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import dawsn, ive

from fiberlab.covariance import make_gaussian_model, make_spectral_model
from fiberlab.errors import PreconditionError
from fiberlab.fermi import (alpha_k, beta_k, extrapolated_rates, fermi_condition, resolvent_pairing,
                            richardson_zero)


def alpha_oracle(k):
    # d=1 sphere = two points xi = 0 and xi = -2k
    return math.sqrt(2 * math.pi) * (1 + math.exp(-2 * k * k)) / (4 * abs(k))


def beta_oracle(k):
    # partial fractions plus the Hilbert transform of a Gaussian (Dawson function)
    return dawsn(math.sqrt(2) * k) / (math.sqrt(2) * k)


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_rates_against_closed_forms(gauss, k):
    assert abs(alpha_k(gauss, k) - alpha_oracle(k)) <= 1e-10
    assert abs(beta_k(gauss, k) - beta_oracle(k)) <= 1e-9


def test_frozen_k1_values(gauss):
    assert abs(alpha_k(gauss, 1.0) - 0.7114658805) <= 1e-9
    assert abs(beta_k(gauss, 1.0) - 0.3199940373) <= 1e-9


def test_sphere_route_matches_closed(gauss):
    for k in (0.5, 1.0, 2.0):
        assert abs(alpha_k(gauss, k, "sphere") - alpha_k(gauss, k, "closed")) <= 1e-10


@pytest.mark.parametrize("k", [0.5, 1.0])
def test_two_dimensional_alpha(k):
    m = make_gaussian_model(2, 1.0, 1.0)
    expected = 0.5 * math.pi * ive(0, k * k)  # angular integral gives a Bessel I0
    assert abs(alpha_k(m, [k, 0.0]) - expected) <= 1e-9
    assert abs(alpha_k(m, [0.6 * k, 0.8 * k]) - expected) <= 1e-9


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_resolvent_extrapolation(gauss, k):
    z = extrapolated_rates(gauss, k)
    assert abs(z - complex(alpha_k(gauss, k), beta_k(gauss, k))) <= 1e-3


def test_resolvent_at_eps_1e3(gauss):
    L = resolvent_pairing(gauss, 1.0, 1e-3)
    assert abs(L / 1j - complex(alpha_oracle(1.0), beta_oracle(1.0))) <= 1e-3


def test_resolvent_large_eps(gauss):
    for eps in (1e3, 1e4):
        # L ~ C0(0) / (-i eps)
        assert abs(eps * resolvent_pairing(gauss, 1.0, eps) - 1j) <= 5.0 / eps


def test_resolvent_zero_density():
    m = make_gaussian_model(1, 1.0, 0.0, allow_degenerate=True)
    assert resolvent_pairing(m, 1.0, 1e-2) == 0


def test_richardson_exact_on_linear_data():
    eps = [1e-2, 1e-3, 1e-4]
    assert abs(richardson_zero(eps, [2 + 3j + 5 * e for e in eps]) - (2 + 3j)) < 1e-12


def test_fermi_condition_gaussian(gauss):
    for k in (0.3, 1.0, 4.0):
        fc = fermi_condition(gauss, k)
        assert fc.holds
        assert abs(fc.margin * math.pi / (2 * 2 * math.pi * k) - alpha_k(gauss, k)) <= 1e-10


def test_fermi_condition_fails_for_band_pass():
    # density vanishes on |xi| < 0.5 and |xi| > 1; the resonant set {0, -2k} misses it for k=10
    bump = lambda xi: np.where((np.abs(xi) > 0.5) & (np.abs(xi) < 1.0),
                               np.sin(2 * math.pi * (np.abs(xi) - 0.5)) ** 2, 0.0)
    m = make_spectral_model(bump, 1.0)
    fc = fermi_condition(m, 10.0)
    assert not fc.holds and fc.margin == 0.0
    assert fermi_condition(m, 0.4).holds  # xi = -0.8 lies in the band


def test_k_zero_rejected(gauss):
    with pytest.raises(PreconditionError):
        alpha_k(gauss, 0.0)
    with pytest.raises(PreconditionError):
        resolvent_pairing(gauss, 1.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(k=st.floats(0.2, 3.0), s2=st.floats(0.2, 5.0))
def test_symmetry_and_linearity(k, s2):
    base = make_gaussian_model(1, 1.0, 1.0)
    scaled = make_gaussian_model(1, 1.0, s2)
    assert math.isclose(alpha_k(base, -k), alpha_k(base, k), rel_tol=1e-12)
    assert math.isclose(beta_k(base, -k), beta_k(base, k), rel_tol=1e-8, abs_tol=1e-12)
    assert math.isclose(alpha_k(scaled, k), s2 * alpha_k(base, k), rel_tol=1e-12)
    assert math.isclose(beta_k(scaled, k), s2 * beta_k(base, k), rel_tol=1e-8, abs_tol=1e-12)
