import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qmetro.fock import FockBasis, StateVector, build_mode_operators, build_povm, coherent_state, fock_state, vacuum
from qmetro.models import (
    DensityModel, DiscreteModel, GaussianModel, NonCommutingGeneratorsError, ParamPoint, UnitaryModel,
    draw_outcomes, error_propagation, fd_step, sample, state_at, state_derivative,
)
from qmetro.scenarios import coherent_intensity_model, mzi_probabilities, squeezed_mzi_model


def mzi_generator_model():
    b = FockBasis(2, 1)
    n0 = build_mode_operators(b, 0)["number"].matrix
    n1 = build_mode_operators(b, 1)["number"].matrix
    start = StateVector(b, (fock_state(b, (1, 0)).amplitudes + fock_state(b, (0, 1)).amplitudes))
    return UnitaryModel([(n1 - n0) / 2], start)


def test_param_point_validation():
    p = ParamPoint(("a", "b"), [1.0, 2.0])
    assert p.as_dict() == {"a": 1.0, "b": 2.0}
    with pytest.raises(ValueError):
        ParamPoint(("a",), [1.0, 2.0])
    with pytest.raises(ValueError):
        ParamPoint(("a", "a"), [1.0, 2.0])


def test_state_at_zero_is_initial():
    model = mzi_generator_model()
    np.testing.assert_allclose(state_at(model, [0.0]).matrix, model.initial.dm().matrix, atol=1e-15)


def test_mzi_generator_at_pi_gives_antisymmetric_state():
    model = mzi_generator_model()
    rho = state_at(model, [math.pi]).matrix
    b = model.basis
    # diagonal exponential oracle: exp(-i pi (n1 - n0)/2) multiplies |1,0> by e^{i pi/2}, |0,1> by e^{-i pi/2}
    amps = np.zeros(b.dim, complex)
    amps[b.index((1, 0))] = np.exp(1j * math.pi / 2) / math.sqrt(2)
    amps[b.index((0, 1))] = np.exp(-1j * math.pi / 2) / math.sqrt(2)
    np.testing.assert_allclose(rho, np.outer(amps, amps.conj()), atol=1e-14)
    target = np.zeros(b.dim, complex)
    target[b.index((1, 0))], target[b.index((0, 1))] = 1 / math.sqrt(2), -1 / math.sqrt(2)
    assert abs(np.vdot(target, amps)) == pytest.approx(1.0)


def test_displacement_generators_give_coherent_state():
    b = FockBasis(1, 30)
    ops = build_mode_operators(b, 0)
    model = UnitaryModel([math.sqrt(2) * ops["p"].matrix, -math.sqrt(2) * ops["x"].matrix], vacuum(b))
    psi = model.ket_at([0.6, -0.3]).amplitudes
    fid = abs(np.vdot(coherent_state(b, 0.6 - 0.3j).amplitudes, psi)) ** 2
    assert fid == pytest.approx(1.0, abs=1e-8)


def test_non_commuting_generators_rejected():
    b = FockBasis(1, 6)
    ops = build_mode_operators(b, 0)
    with pytest.raises(NonCommutingGeneratorsError):
        UnitaryModel([ops["number"].matrix, ops["x"].matrix], vacuum(b))


def test_constant_model_has_zero_derivative():
    b = FockBasis(1, 3)
    rho = coherent_state(b, 0.1, tail_tol=1e-3).dm()
    model = DensityModel(lambda p: rho, ("phi",))
    np.testing.assert_array_equal(state_derivative(model, [0.4]), 0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.0, 3.0))
def test_finite_difference_matches_commutator(phi):
    um = mzi_generator_model()
    dm = DensityModel(lambda p: um.ket_at(p), um.names)
    exact = um.derivative([phi], 0)
    approx = dm.derivative([phi], 0)
    assert np.linalg.norm(approx - exact) <= 1e-6 * max(1.0, np.linalg.norm(exact))
    assert abs(np.trace(approx)) < 1e-9
    np.testing.assert_allclose(approx, approx.conj().T, atol=1e-15)


def test_single_photon_derivative_overlap():
    t = 0.6
    r = math.sqrt(1 - t * t)
    b = FockBasis(2, 1)
    amps = np.zeros(4, complex)
    amps[b.index((1, 0))], amps[b.index((0, 1))] = t, r
    n1 = build_mode_operators(b, 1)["number"].matrix
    model = UnitaryModel([-n1], StateVector(b, amps))
    raw = -1j * (-n1) @ model.ket_at([0.7]).amplitudes
    assert np.vdot(raw, raw).real == pytest.approx(r * r)


def test_fd_step_rule():
    assert fd_step(0.2) == pytest.approx(1e-5)
    assert fd_step(30.0) == pytest.approx(3e-4)
    with pytest.raises(ValueError):
        fd_step(1.0, rel=1e-14)


def test_discrete_model_checks_normalisation():
    bad = DiscreteModel(lambda p: np.array([0.5, 0.6]), ("phi",))
    with pytest.raises(ValueError):
        bad.probabilities([0.0])


def test_measured_model_matches_closed_form():
    um = mzi_generator_model()
    b = um.basis
    from qmetro.scenarios import recombiner_povm

    measured = DiscreteModel.measured(um, recombiner_povm(b))
    p = measured.probabilities([0.9])
    assert sorted(p[p > 1e-14]) == pytest.approx(sorted([math.cos(0.45) ** 2, math.sin(0.45) ** 2]))


# ---------------------------------------------------------------- sampling


def test_deterministic_distribution_sample():
    model = DiscreteModel(lambda p: np.array([1.0, 0.0]), ("phi",))
    s = sample(model, [0.0], 500, seed=3)
    assert s.M == 500
    assert np.all(s.outcomes == 0)


def test_sample_is_reproducible_and_seed_sensitive():
    model = mzi_probabilities()
    a = sample(model, [1.0], 1000, seed=11)
    b = sample(model, [1.0], 1000, seed=11)
    c = sample(model, [1.0], 1000, seed=12)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)
    assert not np.array_equal(a.outcomes, c.outcomes)


def test_sample_frequency_at_half_fringe():
    s = sample(mzi_probabilities(), [math.pi / 2], 100_000, seed=2024)
    freq = np.mean(s.outcomes == 0)
    assert abs(freq - 0.5) < 0.005


def test_sample_chi_square_goodness_of_fit():
    model = DiscreteModel(lambda p: np.array([0.1, 0.2, 0.3, 0.4]), ("phi",))
    s = sample(model, [0.0], 100_000, seed=5)
    _, pval = stats.chisquare(s.counts(4), 100_000 * np.array([0.1, 0.2, 0.3, 0.4]))
    assert pval > 1e-3


def test_sample_independent_of_split():
    probs = np.array([0.3, 0.7])
    whole = draw_outcomes(probs, 10_000, seed=9)
    # blocks are seeded by position, so a shorter run is a prefix of a longer one
    np.testing.assert_array_equal(draw_outcomes(probs, 4096, seed=9), whole[:4096])
    np.testing.assert_array_equal(draw_outcomes(probs, 8192, seed=9), whole[:8192])


def test_sample_rejects_empty():
    with pytest.raises(ValueError):
        sample(mzi_probabilities(), [0.0], 0, seed=1)
    with pytest.raises(ValueError):
        draw_outcomes(np.zeros(2), 10, seed=1)


def test_quantum_model_needs_measurement():
    um = mzi_generator_model()
    with pytest.raises(TypeError):
        sample(um, [0.0], 10, seed=1)
    s = sample(um, [0.0], 10, seed=1, measurement=build_povm("photon_number", um.basis))
    assert s.M == 10


def test_gaussian_sample_moments():
    model = GaussianModel(lambda p: 2.0, lambda p: 0.25)
    s = sample(model, [0.0], 50_000, seed=4)
    assert s.outcomes.mean() == pytest.approx(2.0, abs=0.01)
    assert s.outcomes.var() == pytest.approx(0.25, rel=0.03)


# ---------------------------------------------------------------- error propagation


@pytest.mark.parametrize("alpha", [1.0, 3.0, 10.0])
def test_coherent_error_propagation(alpha):
    assert math.sqrt(error_propagation(coherent_intensity_model(alpha), [math.pi / 2])) == pytest.approx(1 / alpha)


def test_squeezed_error_propagation():
    alpha, s = 10.0, 1.0
    assert error_propagation(squeezed_mzi_model(alpha, s), [0.0]) == pytest.approx(math.exp(-2 * s) / alpha**2)
    eta = 0.8
    expected = (math.exp(-2 * s) + (1 - eta) / eta) / alpha**2
    assert error_propagation(squeezed_mzi_model(alpha, s, eta), [0.0]) == pytest.approx(expected, rel=1e-14)


def test_flat_mean_gives_infinite_variance():
    model = GaussianModel(lambda p: 1.0, lambda p: 1.0, mean_derivative=lambda p: 0.0)
    assert error_propagation(model, [0.3]) == math.inf


def test_gaussian_variance_must_be_positive():
    with pytest.raises(ValueError):
        GaussianModel(lambda p: 0.0, lambda p: 0.0).variance([0.0])
