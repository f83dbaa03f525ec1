import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fiberlab.chaos import (ChaosGrid, FockSpace, apply_annihilation, apply_creation, apply_ladder,
                            check_resonant_coverage, duhamel_bound, evolve_truncated, first_order_coefficient,
                            rs_recurrence, symbol_T, symmetrize)
from fiberlab.covariance import make_gaussian_model
from fiberlab.errors import PreconditionError
from fiberlab.fermi import alpha_k, beta_k


@pytest.fixture(scope="module")
def space():
    return FockSpace(make_gaussian_model(1, 1.0, 1.0), ChaosGrid(7.5, 0.15))


def test_symbol_values():
    assert symbol_T(1.0, 0.0) == 0.0
    assert symbol_T(1.0, -2.0) == 0.0
    assert symbol_T(1.0, 1.0, 1.0) == 8.0
    assert symbol_T(0.5) == 0.0


def test_creation_on_vacuum(space):
    u1 = apply_creation(space, np.ones((), dtype=complex))
    assert np.max(np.abs(u1 - space.g)) == 0.0
    assert abs(np.sum(np.abs(u1) ** 2) * space.w - 1.0) <= 1e-12


def test_annihilation_of_root(space):
    u0 = apply_annihilation(space, space.g.astype(complex))
    assert abs(complex(u0) - space.variance) <= 1e-14
    assert abs(space.variance - 1.0) <= 1e-10


def test_zero_kernels(space):
    z = np.zeros((space.grid.size,) * 2, dtype=complex)
    assert not np.any(apply_creation(space, z))
    assert not np.any(apply_annihilation(space, z))


def test_adjointness_and_ccr_many_states(space):
    rng = np.random.default_rng(0)
    worst_adj = worst_ccr = 0.0
    for _ in range(100):
        u = space.random_state(rng, 3, 1.0)
        v = space.random_state(rng, 3, 1.0)
        worst_adj = max(worst_adj, abs(apply_ladder(space, u).inner(v) - u.inner(apply_ladder(space, v))))
        for p in (1, 2):
            up = u.kernels[p]
            c = apply_annihilation(space, apply_creation(space, up)) - apply_creation(space, apply_annihilation(space, up))
            worst_ccr = max(worst_ccr, float(np.max(np.abs(c - space.variance * up))))
    assert worst_adj <= 1e-10
    assert worst_ccr <= 1e-8


def test_ladder_preserves_symmetry(space):
    u = space.random_state(np.random.default_rng(5), 3, 1.0)
    assert apply_ladder(space, u).asymmetry() <= 1e-12


def test_free_flow_fixes_vacuum(space):
    ev = evolve_truncated(space, 1.0, 0.0, [1.0, 5.0], 2, 0.1)
    assert np.all(ev.vacuum == 1.0)
    assert all(not np.any(u) for u in ev.final.kernels[1:])


def test_norm_conservation(space):
    ev = evolve_truncated(space, 1.0, 0.3, [2.0, 4.0], 2, 0.02)
    assert np.max(np.abs(ev.norms - 1.0)) <= 1e-9


def test_coverage_check():
    sp = FockSpace(make_gaussian_model(1, 1.0, 1.0), ChaosGrid(2.0, 0.1))
    with pytest.raises(PreconditionError):
        check_resonant_coverage(sp, 1.0)
    with pytest.raises(PreconditionError):
        evolve_truncated(sp, 1.0, 0.3, 1.0, 1, 0.05)


def test_step_size_guard(space):
    with pytest.raises(PreconditionError):
        evolve_truncated(space, 1.0, 0.3, 1.0, 2, 2.0)
    with pytest.raises(PreconditionError):
        evolve_truncated(space, 1.0, 0.3, 1.0, 4, 0.01)


def test_duhamel_bound_values():
    assert duhamel_bound(0.0, 3.0, 0, 1.0) == 0.0
    assert abs(duhamel_bound(0.1, 10.0, 5, 1.0) - 2 * math.e ** 6 / math.sqrt(720)) <= 1e-12
    assert abs(duhamel_bound(0.1, 10.0, 5, 1.0) - 30.07) <= 0.01


def test_truncation_gap_below_duhamel(space):
    lam = 0.3
    for t in (1.0, 3.3):
        a = evolve_truncated(space, 1.0, lam, t, 1, 0.05).final.padded(3)
        b = evolve_truncated(space, 1.0, lam, t, 3, 0.05).final
        diff = b.copy()
        diff.kernels = [x - y for x, y in zip(b.kernels, a.kernels)]
        assert diff.norm() <= duhamel_bound(lam, t, 1, space.variance)


def test_first_order_state_formula(space):
    eps = 0.1
    rs = rs_recurrence(space, 1.0, eps, 1)
    phi1 = rs.states[1].kernels[1]
    assert np.max(np.abs(phi1 + space.g / (space.symbol(1.0, 1) + 1j * eps))) <= 1e-14
    assert rs.states[1].kernels[0] == 0


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_first_order_coefficient_matches_rates(k):
    m = make_gaussian_model(1, 1.0, 1.0)
    nu = first_order_coefficient(m, k)
    assert abs(nu - complex(beta_k(m, k), -alpha_k(m, k))) <= 1e-2


def test_kinetic_decay_truncated():
    sp = FockSpace(make_gaussian_model(1, 1.0, 1.0), ChaosGrid(9.0, 0.05))
    lam = 0.3
    s = np.array([0.3, 0.4, 0.5, 0.6, 0.8])
    ev = evolve_truncated(sp, 1.0, lam, s / lam ** 2, 2, 0.02)
    rate = -np.log(np.abs(ev.vacuum)) / s
    a1 = alpha_k(make_gaussian_model(1, 1.0, 1.0), 1.0)
    assert np.all(np.abs(rate - a1) <= 0.1 * a1)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_symmetrize_is_projection(seed):
    u = np.random.default_rng(seed).standard_normal((5, 5, 5))
    s = symmetrize(u)
    assert np.allclose(symmetrize(s), s, atol=1e-14)
    assert np.allclose(s, np.transpose(s, (2, 0, 1)), atol=1e-14)
