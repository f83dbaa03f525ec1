import math

import numpy as np
import pytest

from fiberlab.covariance import make_gaussian_model
from fiberlab.errors import NumericalFailure, PreconditionError
from fiberlab.fermi import alpha_k
from fiberlab.fieldgen import FieldRealization, GridSpec, sample_field
from fiberlab.flow import (DecayExperimentConfig, EnsembleAverage, WaveState, ballistic_moment, cos2_bump,
                           decay_fit, ensemble_average, evolve, free_gaussian_ballistic, gaussian_packet,
                           packet_from_spectrum)

GRID = GridSpec(1, 2 * math.pi * 21, 1024)


def test_plane_wave_exact():
    x = GRID.axis()
    k = 1.0
    w = WaveState(GRID, np.exp(1j * k * x) / math.sqrt(GRID.L))
    out = evolve(None, w, 0.0, 3.0, 0.005)
    assert np.max(np.abs(out.psi - np.exp(1j * k * x - 3j * k * k) / math.sqrt(GRID.L))) <= 1e-10


def test_constant_potential_gauge():
    V = FieldRealization(GRID, np.full(GRID.n, 0.7), 0, 0, "const")
    w = WaveState(GRID, packet_from_spectrum(GRID, cos2_bump(0.8, 1.6)))
    a = evolve(V, w, 0.3, 2.0, 0.005)
    b = evolve(None, w, 0.3, 2.0, 0.005)
    assert np.max(np.abs(a.psi - np.exp(-1j * 0.3 * 0.7 * 2.0) * b.psi)) <= 1e-10


def test_second_order_self_convergence(gauss):
    V = sample_field(gauss, GRID, 5)
    w = WaveState(GRID, packet_from_spectrum(GRID, cos2_bump(0.8, 1.6)))
    dt = GRID.h ** 2 / math.pi
    r = [evolve(V, w, 0.3, 1.0, d).psi for d in (dt, dt / 2, dt / 4)]
    ratio = np.linalg.norm(r[0] - r[1]) / np.linalg.norm(r[1] - r[2])
    assert abs(ratio - 4.0) <= 0.3
    assert abs(evolve(V, w, 0.3, 1.0, dt).norm() - w.norm()) <= 1e-12


def test_step_bound_enforced(gauss):
    V = sample_field(gauss, GRID, 5)
    w = WaveState(GRID, packet_from_spectrum(GRID, cos2_bump(0.8, 1.6)))
    with pytest.raises(PreconditionError):
        evolve(V, w, 0.3, 1.0, 0.5)


def test_free_ensemble_is_deterministic(gauss):
    cfg = DecayExperimentConfig(gauss, GRID, 0.0, (0.0, 1.0, 2.0, 3.0), M=16, seed=1)
    ea = ensemble_average(cfg)
    assert np.max(np.abs(np.abs(ea.mean_hat) - np.abs(ea.u0_hat)[:, None])) <= 1e-12
    assert np.all(ea.stderr == 0.0)
    fit = decay_fit(ea, float(ea.modes[5]), "t")
    assert abs(fit.alpha) <= 1e-12


def test_kinetic_time_fit_rejected_at_zero_coupling(gauss):
    ea = ensemble_average(DecayExperimentConfig(gauss, GRID, 0.0, (0.0, 1.0, 2.0, 3.0), M=16))
    with pytest.raises(PreconditionError):
        decay_fit(ea, float(ea.modes[0]), "s")


def _synthetic(a, b, lam=0.3, k=1.0, stderr=0.0):
    s = np.linspace(0.1, 0.9, 9)
    t = s / lam ** 2
    u0 = np.array([0.4 - 0.2j])
    mean = u0[:, None] * np.exp(-s * (a + 1j * b) - 1j * t * k * k)[None, :]
    return EnsembleAverage(np.array([k]), t, lam, mean, np.full((1, s.size), stderr), 100, u0)


def test_decay_fit_exact_synthetic():
    fit = decay_fit(_synthetic(0.7, -0.2), 1.0)
    assert abs(fit.alpha - 0.7) <= 1e-12 and abs(fit.beta + 0.2) <= 1e-12


def test_decay_fit_noise_floor():
    with pytest.raises(NumericalFailure):
        decay_fit(_synthetic(0.7, -0.2, stderr=1.0), 1.0)


def test_decay_fit_on_toy_series(gauss):
    from fiberlab.toy import mean_phase_factor, toy_alpha0
    lam = 0.3
    t = np.linspace(5, 15, 11)
    mean = np.array([[mean_phase_factor(gauss, lam, ti) for ti in t]])
    series = EnsembleAverage(np.array([0.0]), t, lam, mean, np.zeros_like(mean, dtype=float), 1, np.array([1.0 + 0j]))
    fit = decay_fit(series, 0.0, "t")
    assert abs(fit.alpha - lam ** 2 * toy_alpha0(gauss)) <= 0.02 * lam ** 2 * toy_alpha0(gauss)


def test_ensemble_decay_small(gauss):
    cfg = DecayExperimentConfig(gauss, GRID, 0.3, (0.5,), M=300, seed=3)
    ea = ensemble_average(cfg)
    m = ea.normalized()[:, 0]
    sig = ea.stderr[:, 0] / np.abs(ea.mean_hat[:, 0])
    i = ea.mode_index(1.0)
    pred = math.exp(-0.5 * alpha_k(gauss, 1.0))
    assert abs(abs(m[i]) - pred) <= 3 * sig[i] * abs(m[i]) + 0.15 * pred


def test_stderr_scaling_and_chunk_independence(gauss):
    base = dict(model=gauss, grid=GRID, lam=0.3, s_list=(0.3,), seed=9)
    a = ensemble_average(DecayExperimentConfig(M=100, **base))
    b = ensemble_average(DecayExperimentConfig(M=400, **base))
    ratio = np.median(a.stderr / b.stderr)
    assert abs(ratio - 2.0) <= 0.2 * 2.0
    c = ensemble_average(DecayExperimentConfig(M=100, chunk=37, **base))
    assert np.array_equal(a.mean_hat, c.mean_hat)


def test_config_rejections(gauss):
    with pytest.raises(PreconditionError):
        DecayExperimentConfig(gauss, GRID, 0.3, (0.2, 8.0), M=100).validate()
    with pytest.raises(PreconditionError):
        DecayExperimentConfig(gauss, GRID, 0.9, (0.2,), M=100).validate()
    with pytest.raises(PreconditionError):
        DecayExperimentConfig(gauss, GRID, 0.3, (0.4, 0.2), M=100).validate()


def test_free_gaussian_ballistic():
    grid = GridSpec(1, 800.0, 4096)
    k, sigma0 = 1.5, 3.0
    w = gaussian_packet(grid, k, sigma0, -100.0)
    for t in (20.0, 50.0):
        out = evolve(None, w, 0.0, t, 0.01)
        bm = ballistic_moment(out)
        assert abs(bm - free_gaussian_ballistic(k, sigma0, t)) <= 1e-8
        assert abs(bm - 2 * k) <= 0.05 * 2 * k


def test_ballistic_rejects_t0_and_seam():
    grid = GridSpec(1, 100.0, 1024)
    with pytest.raises(PreconditionError):
        ballistic_moment(gaussian_packet(grid, 1.0, 2.0))
    w = gaussian_packet(grid, 2.0, 2.0)
    with pytest.raises(PreconditionError):
        ballistic_moment(evolve(None, w, 0.0, 20.0, 0.002))
