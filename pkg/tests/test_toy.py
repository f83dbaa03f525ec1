import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erf

from fiberlab.covariance import make_gaussian_model, make_triangular_model
from fiberlab.errors import PreconditionError
from fiberlab.fieldgen import FieldRealization, GridSpec, sample_field
from fiberlab.flow import ballistic_moment, evolve, gaussian_packet
from fiberlab.toy import (correlation, exact_flow, first_order_pairing, fit_log_rate, isserlis_moment,
                          mc_correlation, mc_rate, mean_phase_factor, pairing_exponent, residue_ratio,
                          resonant_pairing, toy_alpha0, toy_resonance)

ROOT_HALF_PI = math.sqrt(math.pi / 2)


def test_alpha0_values(gauss, tri):
    assert abs(toy_alpha0(gauss) - ROOT_HALF_PI) <= 1e-10 * ROOT_HALF_PI
    assert abs(toy_alpha0(tri) - 0.5) <= 1e-10
    assert abs(toy_alpha0(make_gaussian_model(1, 1.0, 2.5)) - 2.5 * ROOT_HALF_PI) <= 1e-9


def test_resonance_record(gauss):
    r = toy_resonance(gauss, 0.3)
    assert r.z_res.imag < 0 and abs(r.z_res + 0.09j * ROOT_HALF_PI) <= 1e-12
    assert abs(r.gauge_prefactor - math.exp(0.5 * 0.09)) <= 1e-12  # int s C0 = sigma^2 ell^2


def test_mean_phase_closed_form(gauss):
    bracket = 2 * ROOT_HALF_PI * erf(math.sqrt(2)) - (1 - math.exp(-2))
    assert abs(mean_phase_factor(gauss, 0.5, 2.0) - math.exp(-0.25 * bracket)) <= 1e-12
    assert abs(mean_phase_factor(gauss, 0.5, 2.0) - 0.68251) <= 1e-5
    assert mean_phase_factor(gauss, 0.5, 0.0) == 1.0
    assert mean_phase_factor(gauss, 0.0, 7.0) == 1.0


def test_mean_phase_monte_carlo(gauss):
    s = mc_correlation(gauss, 0.5, [2.0], 10_000, 17)
    assert abs(s.mean[0] - mean_phase_factor(gauss, 0.5, 2.0)) <= 3 * s.stderr[0]


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.01, 1.0), t1=st.floats(0.0, 20.0), dt=st.floats(0.0, 5.0))
def test_mean_phase_monotone(lam, t1, dt):
    g = make_gaussian_model(1, 1.0, 1.0)
    a, b = mean_phase_factor(g, lam, t1), mean_phase_factor(g, lam, t1 + dt)
    assert 0 < b.real <= a.real + 1e-15 and a.imag == 0


@pytest.mark.parametrize("lam", [0.2, 0.5])
def test_gauge_limit(gauss, tri, lam):
    # E[psi] e^{lam^2 t alpha0} -> exp(lam^2 int s C0) = gauge_prefactor^2
    for model, t in ((gauss, 12.0), (tri, 3.0)):
        r = toy_resonance(model, lam)
        val = mean_phase_factor(model, lam, t).real * math.exp(lam * lam * t * r.alpha_circ)
        tail = lam * lam * t * (r.alpha_circ - float(_head(model, t)))
        assert abs(val - r.gauge_prefactor ** 2) <= abs(tail) * val + 1e-12


def _head(model, t):
    from fiberlab.toy import c0_antiderivative
    return c0_antiderivative(model)(t)


def test_pairing_first_values(gauss):
    assert abs(resonant_pairing(gauss, 0.3, 1, [0.0]) - 0.3j * ROOT_HALF_PI) <= 1e-14
    assert abs(resonant_pairing(gauss, 0.0, 1, [0.3, 1.0]) - math.exp(-0.245)) <= 1e-15
    assert resonant_pairing(gauss, 0.0, -1, [0.3, 1.0, 2.0]) == 0


@settings(max_examples=25, deadline=None)
@given(pts=st.lists(st.floats(-3, 3), min_size=0, max_size=5), lam=st.floats(0, 1), sign=st.sampled_from([1, -1]),
       rnd=st.randoms())
def test_pairing_permutation_and_wick(pts, lam, sign, rnd):
    g = make_gaussian_model(1, 1.0, 1.0)
    shuffled = list(pts)
    rnd.shuffle(shuffled)
    a = resonant_pairing(g, lam, sign, pts)
    assert abs(a - resonant_pairing(g, lam, sign, shuffled)) <= 1e-12 * max(1.0, abs(a))
    assert abs(resonant_pairing(g, 0.0, sign, pts) - isserlis_moment(g, pts)) <= 1e-12


@pytest.mark.parametrize("sign", [1, -1])
def test_first_order_consistency(gauss, sign):
    # degree 1: the expansion is exact in lam
    for pts in ([0.4], [-1.1]):
        lam = 0.3
        assert abs(resonant_pairing(gauss, lam, sign, pts) - first_order_pairing(gauss, lam, sign, pts)) <= 1e-10
    # degree 2: the remainder is O(lam^2)
    lams = np.geomspace(0.01, 0.2, 8)
    for pts in ([0.2, 0.9], [-0.5, 0.5]):
        assert abs(pairing_exponent(gauss, sign, pts, lams) - 2.0) <= 0.1


def test_correlation_reduces_to_mean_phase(gauss):
    for t in (0.0, 3.0, 9.0):
        assert abs(correlation(gauss, [], [], 0.3, t) - mean_phase_factor(gauss, 0.3, t)) <= 1e-15


def test_rate_fit_closed_form(gauss):
    t = np.linspace(5, 15, 11)
    fit = fit_log_rate(t, [correlation(gauss, [], [], 0.3, ti) for ti in t])
    target = 0.09 * ROOT_HALF_PI
    assert abs(fit.rate - target) <= 0.02 * target


def test_correlation_monte_carlo(gauss):
    left, right, lam = [0.2, 0.7], [0.1], 0.3
    t = [2.0, 4.0]
    s = mc_correlation(gauss, lam, t, 10_000, 8, left_points=left, right_points=right)
    exact = np.array([correlation(gauss, left, right, lam, ti) for ti in t])
    assert np.all(np.abs(s.mean - exact) <= 3 * s.stderr)


def test_mc_rate_jackknife(gauss):
    t = np.linspace(5, 15, 11)
    r = mc_rate(mc_correlation(gauss, 0.3, t, 10_000, 7))
    assert abs(r.rate - 0.09 * ROOT_HALF_PI) <= 3 * r.stderr


def test_residue_factorization_compact(tri):
    for left, right in (([0.2, 0.7], [0.1, -0.4, 0.3]), ([0.5], [0.0]), ([], [0.3, 0.6])):
        lhs, rhs = residue_ratio(tri, left, right, 0.4, 6.0)
        assert abs(lhs - rhs) <= 1e-3


def test_residue_factorization_gaussian_tail(gauss):
    lhs, rhs = residue_ratio(gauss, [0.2, 0.7], [0.1], 0.3, 12.0)
    assert abs(lhs - rhs) <= 1e-3


def test_degree_overflow(gauss):
    with pytest.raises(PreconditionError):
        correlation(gauss, [0.0] * 7, [], 0.3, 1.0)


@pytest.fixture(scope="module")
def flow_setup():
    g = make_gaussian_model(1, 1.0, 1.0)
    grid = GridSpec(1, 256.0, 2048)
    return grid, sample_field(g, grid, 3), gaussian_packet(grid, 0.0, 2.0, -60.0)


def test_exact_flow_translation(flow_setup):
    grid, V, u0 = flow_setup
    out = exact_flow(V, u0, 0.0, 40.0)
    assert np.max(np.abs(out.psi - gaussian_packet(grid, 0.0, 2.0, -20.0).psi)) <= 1e-10
    moved = exact_flow(V, u0, 0.7, 40.0)
    assert np.max(np.abs(np.abs(moved.psi) - np.abs(out.psi))) <= 1e-12


def test_exact_flow_line_integral_accuracy():
    grid = GridSpec(1, 64.0, 512)
    x = grid.axis()
    q = 2 * math.pi * 5 / grid.L
    V = FieldRealization(grid, np.cos(q * x), 0, 0, "cos")
    u0 = gaussian_packet(grid, 0.0, 2.0, -10.0)
    lam, t = 0.8, 7.3
    out = exact_flow(V, u0, lam, t)
    phase = (np.sin(q * x) - np.sin(q * (x - t))) / q
    ref = exact_flow(V, u0, 0.0, t).psi * np.exp(-1j * lam * phase)
    assert np.max(np.abs(out.psi - ref)) <= 1e-8


def test_exact_flow_vs_advection_solver(flow_setup):
    grid, V, u0 = flow_setup
    a = exact_flow(V, u0, 0.3, 50.0)
    b = evolve(V, u0, 0.3, 50.0, 0.005, kinetic="advection")
    assert math.sqrt(np.sum(np.abs(a.psi - b.psi) ** 2) * grid.h) <= 1e-6


def test_toy_ballistic_transport(flow_setup):
    grid, V, u0 = flow_setup
    vals = [ballistic_moment(exact_flow(V, u0, 0.5, t)) for t in (20.0, 50.0, 100.0)]
    errs = [abs(v - 1.0) for v in vals]
    assert errs[2] < errs[1] < errs[0] and errs[2] <= 1e-3


def test_exact_flow_seam_guard(flow_setup):
    grid, V, u0 = flow_setup
    with pytest.raises(PreconditionError):
        exact_flow(V, u0, 0.3, 180.0)
