import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import finitecollapse as fc
from finitecollapse.errors import DomainError, InvalidStateError, InvalidSystemError


def test_two_level_weights():
    system = fc.build_system([0.0, 1.0], [np.sqrt(0.3), np.sqrt(0.7)])
    assert system.n_levels == 2
    assert np.allclose(system.born_weights, [0.3, 0.7], atol=1e-14)


def test_degenerate_merge():
    system = fc.build_system([1.0, 1.0, 2.0], [0.5, 0.5, 1 / np.sqrt(2)], 1e-9)
    assert system.n_levels == 2
    assert np.allclose(system.born_weights, [0.5, 0.5], atol=1e-14)
    phi = system.lueders_states[0]
    assert np.allclose(phi, [1 / np.sqrt(2), 1 / np.sqrt(2), 0.0], atol=1e-14)


def test_single_level():
    system = fc.build_system([5.0], [1.0])
    assert system.n_levels == 1
    assert system.born_weights[0] == 1.0


def test_unnormalized_input_forced():
    system = fc.build_system([0.0, 1.0], [1.0, 1.0])
    assert np.allclose(fc.born_weights(system), [0.5, 0.5], atol=1e-14)


def test_empty_input_rejected():
    with pytest.raises(InvalidSystemError):
        fc.build_system([], [])


def test_length_mismatch_rejected():
    with pytest.raises(InvalidSystemError):
        fc.build_system([0.0, 1.0], [1.0])


def test_zero_norm_rejected():
    with pytest.raises(InvalidStateError):
        fc.build_system([0.0, 1.0], [0.0, 0.0])


def test_energy_moments_two_point(desk_system):
    mean, var = fc.energy_moments(desk_system)
    assert mean == pytest.approx(0.7, abs=1e-14)
    assert var == pytest.approx(0.21, abs=1e-14)


def test_energy_moments_single_level(single_level_system):
    mean, var = fc.energy_moments(single_level_system)
    assert mean == 5.0
    assert var == 0.0


def test_energy_moments_symmetric():
    system = fc.build_system([-1.0, 1.0], [1.0, 1.0])
    mean, var = fc.energy_moments(system)
    assert mean == pytest.approx(0.0, abs=1e-15)
    assert var == pytest.approx(1.0, abs=1e-14)


def test_reduction_timescale_reference():
    # one second exactly at the pinned energy scale
    assert abs(fc.reduction_timescale(2.8) - 1.0) <= 1e-15


@pytest.mark.parametrize("delta,expected", [(1.4, 4.0), (0.28, 100.0)])
def test_reduction_timescale_inverse_square(delta, expected):
    assert fc.reduction_timescale(delta) == pytest.approx(expected, rel=1e-12)


def test_reduction_timescale_domain():
    with pytest.raises(DomainError):
        fc.reduction_timescale(0.0)
    with pytest.raises(DomainError):
        fc.reduction_timescale(-1.0)


@st.composite
def random_systems(draw):
    n = draw(st.integers(min_value=1, max_value=6))
    energies = draw(
        st.lists(
            st.floats(-5, 5, allow_nan=False, allow_infinity=False),
            min_size=n,
            max_size=n,
        )
    )
    re = draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n))
    im = draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n))
    amps = np.array(re) + 1j * np.array(im)
    assume(np.linalg.norm(amps) > 1e-6)
    return fc.build_system(energies, amps)


@given(random_systems())
@settings(max_examples=80)
def test_weights_form_simplex(system):
    pi = system.born_weights
    assert np.all(pi >= 0)
    assert abs(pi.sum() - 1.0) <= 1e-12


@given(random_systems())
@settings(max_examples=80)
def test_level_partition(system):
    spectrum = system.spectrum
    assert np.all(np.diff(spectrum.distinct_energies) > 0)
    all_indices = np.concatenate(spectrum.level_index_sets)
    assert sorted(all_indices) == list(range(spectrum.n_basis))


@given(random_systems())
@settings(max_examples=80)
def test_lueders_states_orthonormal(system):
    states = [phi for phi in system.lueders_states if phi is not None]
    for i, a in enumerate(states):
        assert abs(np.linalg.norm(a) - 1.0) <= 1e-12
        for b in states[i + 1 :]:
            assert abs(np.vdot(a, b)) <= 1e-12


@given(random_systems())
@settings(max_examples=80)
def test_initial_state_reconstruction(system):
    # weighted projected states recombine into the normalized input
    rebuilt = np.zeros(system.n_basis, dtype=complex)
    for w, phi in zip(system.born_weights, system.lueders_states):
        if phi is not None:
            rebuilt += np.sqrt(w) * phi
    assert np.max(np.abs(rebuilt - system.initial.amplitudes)) <= 1e-12
