"""Tests for the collective nuclear-spin erasure machinery.

The brute-force oracle (exact eigendecomposition of the full 2^(N+1)
electron-nuclear space) is the reference for every closed-form collective
map; the closed forms are exact for zero or one excitation and approximate
at order n/N beyond that.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinheat.constants import HBAR_SI, MU_N_SI
from spinheat.errors import ConfigError
from spinheat.hyperfine import (
    ELECTRON_DN,
    ELECTRON_UP,
    CollectiveNuclearState,
    CouplingProfile,
    ExcitationApproximationWarning,
    LatticeSpec,
    PulseSpec,
    Term,
    apply_pulse,
    brute_force_oracle,
    collective_lowering_matrix,
    collective_raising,
    collective_to_vector,
    continuum_gamma,
    coupling_profile,
    electron_up_population,
    erasure_step,
    evolve_collective,
    flop_duration,
    gamma_tilde,
    initial_collective_state,
    matching_field,
    pulse_feasibility,
    state_from_terms,
    with_pulse_rates,
)

SIGMA = 5.0  # nm, electron wavefunction spread used across the chain tests


def chain_profile(n=8, envelope="gaussian", scale=0.05, phi=None, offset_rate=0.0):
    """N nuclei on the x axis spanning [-2 sigma, 2 sigma]."""
    x = np.linspace(-2 * SIGMA, 2 * SIGMA, n)
    positions = np.zeros((n, 3))
    positions[:, 0] = x
    if envelope == "gaussian":
        couplings = scale * np.exp(-x**2 / (4 * SIGMA**2))
    else:
        couplings = np.full(n, scale)
    rates = phi * x + offset_rate if phi is not None else None
    return CouplingProfile(positions=positions, couplings=couplings,
                           pulse_rates=rates, sigma=SIGMA)


def gradient_profile_for(phi_tau_sigma, tau_ps, envelope="gaussian", n=8):
    phi = phi_tau_sigma / (tau_ps * SIGMA)
    return chain_profile(n=n, envelope=envelope, phi=phi)


def raw_pulse(duration_ps):
    """PulseSpec used only as a duration carrier (rates preset on the profile)."""
    return PulseSpec(gradient=0.0, offset=0.0, duration=duration_ps * 1e-3)


def fidelity(u, v):
    return abs(np.vdot(u, v)) ** 2 / (np.vdot(u, u).real * np.vdot(v, v).real)


class TestOracle:
    def test_single_nucleus_exchange_oscillation(self):
        a = 0.3
        profile = CouplingProfile(positions=np.zeros((1, 3)),
                                  couplings=np.array([a]), sigma=SIGMA)
        init = initial_collective_state(ELECTRON_DN)
        flipped = collective_to_vector(
            state_from_terms([(ELECTRON_UP, (0.0,), 1.0)]), profile)
        for t in np.linspace(0.0, 2 * np.pi / a, 17):
            vec = brute_force_oracle(profile, [("exchange", t)], init)
            assert abs(abs(np.vdot(flipped, vec)) ** 2 - np.sin(a * t) ** 2) < 1e-12

    def test_unitarity_through_mixed_schedule(self):
        profile = chain_profile(n=6, phi=0.4)
        init = initial_collective_state(ELECTRON_DN)
        schedule = [("exchange", 3.7), ("pulse", 1.2), ("exchange", 0.9),
                    ("pulse", 0.3), ("exchange", 11.0)]
        vec = brute_force_oracle(profile, schedule, init)
        assert abs(np.vdot(vec, vec).real - 1.0) < 1e-12

    def test_full_flip_uniform_couplings(self):
        profile = chain_profile(envelope="uniform")
        t_flip = flop_duration(profile)
        vec = brute_force_oracle(profile, [("exchange", t_flip)],
                                 initial_collective_state(ELECTRON_DN))
        target = -1j * collective_to_vector(
            state_from_terms([(ELECTRON_UP, (0.0,), 1.0)]), profile)
        assert np.linalg.norm(vec - target) < 1e-10

    def test_full_flip_nonuniform_couplings(self):
        profile = chain_profile(envelope="gaussian")
        vec = brute_force_oracle(profile, [("exchange", flop_duration(profile))],
                                 initial_collective_state(ELECTRON_DN))
        target = -1j * collective_to_vector(
            state_from_terms([(ELECTRON_UP, (0.0,), 1.0)]), profile)
        assert np.linalg.norm(vec - target) < 1e-10

    def test_up_zero_is_fixed_point(self):
        profile = chain_profile()
        init = initial_collective_state(ELECTRON_UP)
        vec = brute_force_oracle(profile, [("exchange", 25.0)], init)
        assert np.linalg.norm(vec - collective_to_vector(init, profile)) < 1e-12

    def test_oracle_rejects_large_n(self):
        positions = np.zeros((13, 3))
        positions[:, 0] = np.arange(13.0)
        profile = CouplingProfile(positions=positions,
                                  couplings=np.full(13, 0.1), sigma=SIGMA)
        with pytest.raises(ValueError):
            brute_force_oracle(profile, [("exchange", 1.0)],
                               initial_collective_state(ELECTRON_UP))


class TestCollectiveAlgebra:
    def test_lowering_appends_zero_history(self):
        profile = chain_profile(phi=0.25)
        lower = collective_lowering_matrix(profile)
        nuclear_dim = lower.shape[0]
        history = (0.7, 1.3, 0.4)
        for n in range(4):
            state = state_from_terms([(ELECTRON_UP, history[:n], 1.0)])
            vec = collective_to_vector(state, profile)[:nuclear_dim]
            target = collective_to_vector(
                state_from_terms([(ELECTRON_UP, history[:n] + (0.0,), 1.0)]),
                profile)[:nuclear_dim]
            assert np.linalg.norm(lower @ vec - target) < 1e-12

    def test_pulse_phase_on_unflipped_state(self):
        profile = chain_profile(phi=0.3, offset_rate=0.11)
        tau = 2.1
        state = initial_collective_state(ELECTRON_UP)
        pulsed = apply_pulse(state, raw_pulse(tau), profile)
        theta_total = 0.5 * profile.pulse_rates.sum()
        assert len(pulsed.terms) == 1
        assert abs(pulsed.terms[0].amplitude - np.exp(-1j * theta_total * tau)) < 1e-12
        oracle = brute_force_oracle(profile, [("pulse", tau)], state)
        assert np.linalg.norm(collective_to_vector(pulsed, profile) - oracle) < 1e-12

    def test_pulse_on_single_flip_matches_oracle(self):
        profile = chain_profile(phi=0.3, offset_rate=0.07)
        tau = 1.7
        state = state_from_terms([(ELECTRON_UP, (0.0,), 1.0)])
        pulsed = apply_pulse(state, raw_pulse(tau), profile)
        assert pulsed.terms[0].history == (tau,)
        assert abs(pulsed.terms[0].amplitude - 1.0) < 1e-12
        oracle = brute_force_oracle(profile, [("pulse", tau)], state)
        assert np.linalg.norm(collective_to_vector(pulsed, profile) - oracle) < 1e-12

    def test_pulse_extends_newest_history_entry(self):
        profile = chain_profile(phi=0.2)
        state = state_from_terms([(ELECTRON_DN, (0.9, 0.6), 1.0)])
        pulsed = apply_pulse(state, raw_pulse(0.5), profile)
        assert pulsed.terms[0].history == (0.9, 0.6 + 0.5)
        oracle = brute_force_oracle(profile, [("pulse", 0.5)], state)
        assert np.linalg.norm(collective_to_vector(pulsed, profile) - oracle) < 1e-11

    def test_exact_raising_single_excitation(self):
        profile = chain_profile(phi=0.35, offset_rate=0.04)
        t1 = 1.9
        gt = gamma_tilde(profile, t1).discrete
        theta_total = 0.5 * profile.pulse_rates.sum()
        state = state_from_terms([(ELECTRON_UP, (t1,), 1.0)])
        raised = collective_raising(state, profile)
        assert len(raised.terms) == 1
        assert raised.terms[0].history == ()
        expected = np.exp(-1j * theta_total * t1) * np.conj(gt) / profile.gamma
        assert abs(raised.terms[0].amplitude - expected) < 1e-12
        # exact check against the oracle representation
        raise_op = collective_lowering_matrix(profile).conj().T
        nuclear_dim = raise_op.shape[0]
        vec = collective_to_vector(state, profile)[:nuclear_dim]
        approx = collective_to_vector(raised, profile)[:nuclear_dim]
        assert np.linalg.norm(raise_op @ vec - approx) < 1e-12

    def test_raising_merge_rules_two_excitations(self):
        # f(t, m): m=1 drops t1 (leaving its global phase), m=2 merges t1+t2
        profile = chain_profile(phi=0.35)
        t = (0.9, 0.6)
        state = state_from_terms([(ELECTRON_UP, t, 1.0)])
        raised = collective_raising(state, profile)
        histories = sorted(term.history for term in raised.terms)
        assert histories == [(0.6,), (1.5,)]

    def test_raising_error_shrinks_with_nucleus_count(self):
        # Error is measured against the prepared ket, not the raised image:
        # pulse dephasing shrinks the image itself, which would inflate a
        # relative-to-image residual without the map getting any worse.
        t = (0.9, 0.6)
        residuals = {}
        for n in (4, 8, 12):
            profile = chain_profile(n=n, envelope="uniform", phi=0.35)
            state = state_from_terms([(ELECTRON_UP, t, 1.0)])
            raise_op = collective_lowering_matrix(profile).conj().T
            nuclear_dim = raise_op.shape[0]
            vec = collective_to_vector(state, profile)[:nuclear_dim]
            approx = collective_to_vector(collective_raising(state, profile),
                                          profile)[:nuclear_dim]
            exact = raise_op @ vec
            residuals[n] = np.linalg.norm(exact - approx) / np.linalg.norm(vec)
            assert residuals[n] <= 2 * len(t) / n
        assert residuals[12] < residuals[4]

    def test_fixed_point_residual_bound(self):
        # post-pulse single-flip states stay put up to 2|gamma_tilde|/gamma
        for phi_tau_sigma in (2.0, 4.0, 8.0):
            tau = 1.0
            profile = gradient_profile_for(phi_tau_sigma, tau)
            state = apply_pulse(state_from_terms([(ELECTRON_UP, (0.0,), 1.0)]),
                                raw_pulse(tau), profile)
            vec = collective_to_vector(state, profile)
            bound = 2 * abs(gamma_tilde(profile, tau).discrete) / profile.gamma
            period = 2 * np.pi / np.sqrt(profile.gamma)
            worst = 0.0
            for t in np.linspace(0.0, 1.1 * period, 45):
                evolved = brute_force_oracle(profile, [("exchange", t)], state)
                worst = max(worst, np.linalg.norm(evolved - vec))
            assert worst <= bound + 1e-9
            # the bound is saturated at the half period of the exchange rotation
            half = brute_force_oracle(
                profile, [("exchange", np.pi / np.sqrt(profile.gamma))], state)
            assert np.linalg.norm(half - vec) >= 0.98 * bound

    def test_evolve_collective_exact_for_fresh_spin_down(self):
        profile = chain_profile(phi=0.3)
        state = initial_collective_state(ELECTRON_DN)
        for t in (0.0, 2.5, flop_duration(profile)):
            mapped = collective_to_vector(evolve_collective(state, profile, t),
                                          profile)
            oracle = brute_force_oracle(profile, [("exchange", t)], state)
            assert np.linalg.norm(mapped - oracle) < 1e-10

    def test_evolve_collective_multistep_overlap(self):
        tau = 1.0
        profile = gradient_profile_for(8.0, tau)
        pulse = raw_pulse(tau)
        ratio = abs(gamma_tilde(profile, tau).discrete) / profile.gamma
        t1, t2 = 0.4 * flop_duration(profile), 0.6 * flop_duration(profile)
        state = initial_collective_state(ELECTRON_DN)
        start = collective_to_vector(state, profile)
        state = apply_pulse(evolve_collective(state, profile, t1), pulse, profile)
        with pytest.warns(ExcitationApproximationWarning):
            state = evolve_collective(state, profile, t2)
        state = apply_pulse(state, pulse, profile)
        oracle = brute_force_oracle(
            profile,
            [("exchange", t1), ("pulse", tau), ("exchange", t2), ("pulse", tau)],
            start)
        n_max = max(term.n for term in state.terms)
        bound = 1 - 5 * (ratio + n_max / profile.count)
        assert fidelity(collective_to_vector(state, profile), oracle) >= bound
        assert fidelity(collective_to_vector(state, profile), oracle) >= 0.9

    def test_evolve_warns_on_high_excitation(self):
        profile = chain_profile()
        state = state_from_terms([(ELECTRON_DN, (1.0,), 1.0)])
        with pytest.warns(ExcitationApproximationWarning):
            evolve_collective(state, profile, 1.0)


class TestGammaTilde:
    def test_zero_duration_gives_gamma(self):
        profile = chain_profile(phi=0.4)
        assert gamma_tilde(profile, 0.0).discrete == pytest.approx(profile.gamma)

    def test_offset_only_changes_phase(self):
        base = chain_profile(phi=0.4)
        shifted = chain_profile(phi=0.4, offset_rate=0.8)
        tau = 1.3
        a = gamma_tilde(base, tau).discrete
        b = gamma_tilde(shifted, tau).discrete
        assert abs(abs(a) - abs(b)) < 1e-14

    def test_requires_pulse_rates(self):
        with pytest.raises(ValueError):
            gamma_tilde(chain_profile(), 1.0)

    def test_continuum_agreement_on_fine_lattice(self):
        sigma = 3.0
        lattice = LatticeSpec(spacing=sigma / 4, half_width=4 * sigma)
        profile = coupling_profile(sigma, hyperfine_energy=1e-4,
                                   unit_cell_volume=0.05, lattice=lattice)
        tau = 1.0
        phi = 4.0 / (tau * sigma)
        profile = CouplingProfile(positions=profile.positions,
                                  couplings=profile.couplings,
                                  pulse_rates=phi * profile.positions[:, 0],
                                  sigma=sigma)
        result = gamma_tilde(profile, tau)
        assert abs(result.continuum / profile.gamma - np.exp(-4.0)) < 1e-12
        assert abs(result.discrete - result.continuum) <= 0.05 * abs(result.continuum)

    @given(st.integers(2, 7), st.floats(0.1, 30.0))
    @settings(max_examples=40, deadline=None)
    def test_modulus_never_exceeds_gamma(self, n, tau):
        rng = np.random.default_rng(n)
        positions = np.zeros((n, 3))
        positions[:, 0] = np.sort(rng.uniform(-10, 10, n))
        profile = CouplingProfile(positions=positions,
                                  couplings=rng.uniform(0.01, 0.4, n),
                                  pulse_rates=rng.uniform(-1, 1, n), sigma=SIGMA)
        assert abs(gamma_tilde(profile, tau).discrete) <= profile.gamma + 1e-12


class TestErasureStep:
    def test_spin_up_branch_is_fixed(self):
        tau = 1.0
        profile = gradient_profile_for(8.0, tau)
        mixture = [(1.0, initial_collective_state(ELECTRON_UP))]
        out = erasure_step(mixture, profile, raw_pulse(tau))
        assert len(out) == 1
        weight, state = out[0]
        assert weight == 1.0
        assert len(state.terms) == 1
        term = state.terms[0]
        assert term.electron == ELECTRON_UP and term.n == 0
        assert abs(abs(term.amplitude) - 1.0) < 1e-12

    def test_spin_down_branch_exact(self):
        tau = 1.0
        profile = gradient_profile_for(8.0, tau)
        out = erasure_step([(1.0, initial_collective_state(ELECTRON_DN))],
                           profile, raw_pulse(tau))
        _, state = out[0]
        assert len(state.terms) == 1
        term = state.terms[0]
        assert term.electron == ELECTRON_UP and term.history == (tau,)
        assert abs(term.amplitude + 1j) < 1e-12
        oracle = brute_force_oracle(
            profile, [("exchange", flop_duration(profile)), ("pulse", tau)],
            initial_collective_state(ELECTRON_DN))
        assert np.linalg.norm(collective_to_vector(state, profile) - oracle) < 1e-10

    def test_balanced_mixture_erases(self):
        tau = 1.0
        profile = gradient_profile_for(8.0, tau)
        pulse = raw_pulse(tau)
        ratio = abs(gamma_tilde(profile, tau).discrete) / profile.gamma
        mixture = [(0.5, initial_collective_state(ELECTRON_UP)),
                   (0.5, initial_collective_state(ELECTRON_DN))]
        out = erasure_step(mixture, profile, pulse)
        assert all(term.electron == ELECTRON_UP
                   for _, state in out for term in state.terms)
        up_pop = 0.0
        for (weight, state), start in zip(out, mixture):
            oracle = brute_force_oracle(
                profile, [("exchange", flop_duration(profile)), ("pulse", tau)],
                start[1])
            assert fidelity(collective_to_vector(state, profile), oracle) >= 0.99
            up_pop += weight * electron_up_population(oracle)
        assert up_pop >= 1 - 2 * ratio

    def test_second_cycle_fidelity_bound(self):
        # Chain sizes are chosen so the sampled gradient phases do not alias
        # into a coherent revival (a 6-site chain at this gradient lands on
        # |gamma_tilde|/gamma ~ 0.99 and is legitimately rejected).
        tau = 1.0
        fidelities = {}
        for n_spins in (4, 8, 10):
            profile = gradient_profile_for(8.0, tau, n=n_spins)
            pulse = raw_pulse(tau)
            ratio = abs(gamma_tilde(profile, tau).discrete) / profile.gamma
            start = state_from_terms([(ELECTRON_DN, (tau,), 1.0)])
            with pytest.warns(ExcitationApproximationWarning):
                out = erasure_step([(1.0, start)], profile, pulse)
            _, state = out[0]
            oracle = brute_force_oracle(
                profile, [("exchange", flop_duration(profile)), ("pulse", tau)],
                start)
            n_max = max(term.n for term in state.terms)
            bound = 1 - 5 * (ratio + n_max / n_spins)
            fidelities[n_spins] = fidelity(
                collective_to_vector(state, profile), oracle)
            assert fidelities[n_spins] >= bound
        assert fidelities[10] >= 0.9

    def test_ineffective_pulse_rejected(self):
        profile = chain_profile(phi=0.0, offset_rate=0.5)
        mixture = [(1.0, initial_collective_state(ELECTRON_DN))]
        with pytest.raises(ConfigError):
            erasure_step(mixture, profile, raw_pulse(1.0))

    def test_long_pulse_warns(self):
        tau = 0.5 * flop_duration(chain_profile())
        profile = gradient_profile_for(8.0, tau)
        with pytest.warns(UserWarning, match="flop"):
            apply_pulse(initial_collective_state(ELECTRON_UP),
                        raw_pulse(tau), profile)


class TestStateBookkeeping:
    def test_history_length_must_match_count(self):
        with pytest.raises(ValueError):
            CollectiveNuclearState(terms=(Term(ELECTRON_UP, 2, (1.0,), 1.0),))

    def test_norm_square(self):
        state = state_from_terms([(ELECTRON_UP, (), 0.6), (ELECTRON_DN, (), 0.8)])
        assert state.norm_square() == pytest.approx(1.0)

    @given(st.floats(0.05, 3.0), st.floats(0.05, 3.0))
    @settings(max_examples=25, deadline=None)
    def test_evolution_preserves_bookkeeping_norm(self, t1, t2):
        profile = chain_profile(n=4, phi=0.3)
        state = initial_collective_state(ELECTRON_DN)
        state = evolve_collective(state, profile, t1)
        state = apply_pulse(state, raw_pulse(0.7), profile)
        state = evolve_collective(state, profile, t2)
        assert abs(state.norm_square() - 1.0) < 1e-10


class TestCouplingProfile:
    def test_single_nucleus_value(self):
        sigma, energy, v0 = 4.0, 2e-4, 0.05
        lattice = LatticeSpec(spacing=1.0, half_width=0.0)
        profile = coupling_profile(sigma, energy, v0, lattice)
        psi_sq = (2 * np.pi * sigma**2) ** -1.5
        from spinheat.constants import HBAR
        assert profile.couplings[0] == pytest.approx(
            0.5 * energy * v0 * psi_sq / HBAR)

    def test_continuum_gamma_convergence(self):
        sigma, energy, v0 = 3.0, 1e-4, 0.05
        lattice = LatticeSpec(spacing=sigma / 5, half_width=4 * sigma)
        profile = coupling_profile(sigma, energy, v0, lattice)
        summed = profile.gamma * lattice.spacing**3
        assert summed == pytest.approx(continuum_gamma(energy, v0, sigma),
                                       rel=0.01)

    def test_doubling_sigma_scales_gamma(self):
        energy, v0 = 1e-4, 0.05
        assert continuum_gamma(energy, v0, 6.0) == pytest.approx(
            continuum_gamma(energy, v0, 3.0) / 8)

    def test_small_box_rejected(self):
        sigma = 3.0
        lattice = LatticeSpec(spacing=sigma / 3, half_width=3 * sigma)
        with pytest.raises(ValueError, match="box"):
            coupling_profile(sigma, 1e-4, 0.05, lattice)

    def test_couplings_must_be_positive(self):
        with pytest.raises(ValueError):
            CouplingProfile(positions=np.zeros((2, 3)),
                            couplings=np.array([0.1, -0.1]), sigma=SIGMA)


class TestMatchingField:
    def test_unpolarized_gives_zero(self):
        profile = chain_profile()
        assert matching_field(profile, 0.0, g_star=2.0, g_n=5.0) == 0.0

    def test_fully_polarized_value(self):
        profile = chain_profile()
        from spinheat.constants import MU_B_SI
        b0 = matching_field(profile, 0.5, g_star=2.0, g_n=5.0)
        energy_sum = HBAR_SI * 1e12 * profile.couplings.sum()
        expected = 0.5 * energy_sum / (2.0 * MU_B_SI - 5.0 * MU_N_SI)
        assert b0 == pytest.approx(expected, rel=1e-12)

    def test_sign_flip(self):
        profile = chain_profile()
        assert matching_field(profile, -0.5, 2.0, 5.0) == pytest.approx(
            -matching_field(profile, 0.5, 2.0, 5.0))

    def test_singular_matching_rejected(self):
        profile = chain_profile()
        g_star_singular = 5.0 * MU_N_SI / 9.2740100783e-24
        with pytest.raises(ValueError):
            matching_field(profile, 0.5, g_star_singular, 5.0)


class TestPulseFeasibility:
    def test_threshold_numbers(self):
        pulse = PulseSpec(gradient=1.0, offset=0.0, duration=1.0, g_n=5.0)
        report = pulse_feasibility(pulse, sigma=5.0, wire_radius=5.0, standoff=5.0)
        assert report.gradient_time_threshold == pytest.approx(
            0.4175873963379625, rel=1e-12)
        assert report.current_time_threshold == pytest.approx(
            4.175873963379625e-10, rel=1e-12)
        assert report.current_threshold == pytest.approx(
            0.4175873963379625, rel=1e-12)

    def test_doubling_sigma_halves_gradient_threshold(self):
        pulse = PulseSpec(gradient=1.0, offset=0.0, duration=1.0, g_n=5.0)
        a = pulse_feasibility(pulse, 5.0, 5.0, 5.0)
        b = pulse_feasibility(pulse, 10.0, 5.0, 5.0)
        assert b.gradient_time_threshold == pytest.approx(
            a.gradient_time_threshold / 2)

    def test_margin_ratio(self):
        # gradient of 1 T/nm for 1 ns = 1 T s / m against the quoted threshold
        pulse = PulseSpec(gradient=1.0, offset=0.0, duration=1.0, g_n=5.0)
        report = pulse_feasibility(pulse, 5.0, 5.0, 5.0)
        assert report.margin_ratio == pytest.approx(
            1.0 / (2 * 0.4175873963379625), rel=1e-12)

    def test_suppression_parameter(self):
        pulse = PulseSpec(gradient=1.0, offset=0.0, duration=1.0, g_n=5.0)
        report = pulse_feasibility(pulse, 5.0, 5.0, 5.0)
        phi = 5.0 * MU_N_SI / HBAR_SI * 1e-12 * 1.0
        assert report.suppression_parameter == pytest.approx(phi * 1e3 * 5.0)
        assert report.continuum_suppression == pytest.approx(
            np.exp(-report.suppression_parameter**2 / 4))
