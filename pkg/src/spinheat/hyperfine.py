"""Collective nuclear-spin erasure: exchange flip-flops and gradient pulses.

The electron exchanges spin with N polarized nuclei through contact
couplings a_j. Collective states are tracked symbolically as kets |n>_t:
n excitations created by alternating collective lowering operators and
field-gradient pulses, labeled by the pulse-history vector t (newest entry
last). The closed-form maps implemented here are exact for n <= 1 and
accurate to O(n/N) beyond; an exact brute-force verifier over the full
2^(N+1) space arbitrates every approximation.

Unit conventions: couplings and pulse rates in rad/ps, positions and sigma
in nm, internal times in ps. PulseSpec carries its duration in ns and field
parameters in tesla; SI constants enter only there and in the feasibility
estimates.
"""

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from .constants import (
    HBAR, HBAR_SI, MU_0_SI, MU_B_SI, MU_N_SI, NUCLEAR_RATE_PER_TESLA,
)
from .errors import ConfigError

ELECTRON_UP = 0
ELECTRON_DN = 1

AMPLITUDE_PRUNE = 1e-12
EXCITATION_WARN_FRACTION = 0.05
SHORT_PULSE_FRACTION = 0.1
INEFFECTIVE_RATIO = 0.9
MAX_ORACLE_SPINS = 12  # full space is 2^(N+1) <= 8192
BOUNDARY_WEIGHT_LIMIT = 1e-6  # largest tolerated boundary share of a_j^2


class ExcitationApproximationWarning(UserWarning):
    """The closed-form collective maps carry O(n/N) error; n/N grew large."""


class Term(NamedTuple):
    electron: int
    n: int
    history: tuple
    amplitude: complex


@dataclass(frozen=True)
class CollectiveNuclearState:
    """Superposition over electron x |n>_t kets."""

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            if term.electron not in (ELECTRON_UP, ELECTRON_DN):
                raise ValueError(f"unknown electron label {term.electron!r}")
            if len(term.history) != term.n:
                raise ValueError(
                    f"history {term.history} has {len(term.history)} entries "
                    f"for excitation count {term.n}")

    def norm_square(self):
        return float(sum(abs(t.amplitude) ** 2 for t in self.terms))

    def electron_up_probability(self):
        return float(sum(abs(t.amplitude) ** 2 for t in self.terms
                         if t.electron == ELECTRON_UP))

    def excitation_distribution(self):
        dist = {}
        for term in self.terms:
            dist[term.n] = dist.get(term.n, 0.0) + abs(term.amplitude) ** 2
        return dist


def state_from_terms(entries):
    return CollectiveNuclearState(terms=tuple(
        Term(electron, len(history), tuple(history), complex(amplitude))
        for electron, history, amplitude in entries))


def initial_collective_state(electron=ELECTRON_UP):
    return state_from_terms([(electron, (), 1.0)])


def _merged(entries):
    """Merge amplitude contributions sharing (electron, history); prune tiny."""
    acc = {}
    for electron, history, amplitude in entries:
        key = (electron, history)
        acc[key] = acc.get(key, 0.0) + amplitude
    return CollectiveNuclearState(terms=tuple(
        Term(e, len(h), h, a) for (e, h), a in acc.items()
        if abs(a) > AMPLITUDE_PRUNE))


@dataclass(frozen=True, eq=False)
class CouplingProfile:
    """Hyperfine contact couplings and, optionally, pulse precession rates."""

    positions: np.ndarray  # (count, 3), nm
    couplings: np.ndarray  # rad/ps
    sigma: float  # nm
    pulse_rates: Optional[np.ndarray] = None  # rad/ps

    def __post_init__(self):
        positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        couplings = np.asarray(self.couplings, dtype=float)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "couplings", couplings)
        if positions.shape != (couplings.size, 3):
            raise ValueError(
                f"positions shape {positions.shape} does not match "
                f"{couplings.size} couplings")
        if not np.all(np.isfinite(couplings)) or np.any(couplings <= 0):
            raise ValueError("couplings must be positive and finite")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.pulse_rates is not None:
            rates = np.asarray(self.pulse_rates, dtype=float)
            if rates.size != couplings.size:
                raise ValueError("pulse_rates length does not match couplings")
            object.__setattr__(self, "pulse_rates", rates)

    @property
    def count(self):
        return self.couplings.size

    @property
    def gamma(self):
        """Sum of squared couplings, rad^2/ps^2."""
        return float(np.sum(self.couplings ** 2))


def flop_duration(profile):
    """Electron spin flop time pi/(2 sqrt(gamma)), ps."""
    return float(np.pi / (2 * np.sqrt(profile.gamma)))


@dataclass(frozen=True)
class LatticeSpec:
    """Simple cubic sampling lattice, centered on the electron."""

    spacing: float  # nm
    half_width: Optional[float] = None  # nm; defaults to 4 sigma

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")


def coupling_profile(sigma, hyperfine_energy, unit_cell_volume, lattice):
    """Sample contact couplings from a spherical Gaussian envelope.

    hyperfine_energy (meV) and unit_cell_volume (nm^3) set the scale
    a_j = energy * volume * |psi(r_j)|^2 / 2 converted to rad/ps. The box
    must be wide enough that the boundary carries a negligible share of
    sum a_j^2.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half_width = 4 * sigma if lattice.half_width is None else lattice.half_width
    n_half = int(np.floor(half_width / lattice.spacing + 1e-9))
    offsets = np.arange(-n_half, n_half + 1) * lattice.spacing
    grid = np.meshgrid(offsets, offsets, offsets, indexing="ij")
    positions = np.stack([g.ravel() for g in grid], axis=1)
    r_sq = np.sum(positions ** 2, axis=1)
    psi_sq = (2 * np.pi * sigma**2) ** -1.5 * np.exp(-r_sq / (2 * sigma**2))
    couplings = 0.5 * hyperfine_energy * unit_cell_volume * psi_sq / HBAR
    if n_half > 0:
        edge = n_half * lattice.spacing
        on_boundary = np.max(np.abs(positions), axis=1) >= edge - 1e-9
        weight_ratio = (couplings[on_boundary].max() / couplings.max()) ** 2
        if weight_ratio > BOUNDARY_WEIGHT_LIMIT:
            raise ValueError(
                f"lattice box too small: boundary carries {weight_ratio:.2e} "
                f"of the peak coupling weight (limit {BOUNDARY_WEIGHT_LIMIT})")
    return CouplingProfile(positions=positions, couplings=couplings,
                           sigma=sigma)


def continuum_gamma(hyperfine_energy, unit_cell_volume, sigma):
    """Volume-integral limit of (sum a_j^2) * spacing^3, (rad/ps)^2 nm^3."""
    scale = hyperfine_energy * unit_cell_volume / HBAR
    return scale**2 / (32 * np.pi**1.5 * sigma**3)


@dataclass(frozen=True)
class PulseSpec:
    """Linear-gradient magnetic pulse along x: B(r) = gradient*x + offset."""

    gradient: float  # T/nm
    offset: float  # T
    duration: float  # ns
    g_n: float = 5.0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"duration must be nonnegative, got {self.duration}")

    @property
    def duration_ps(self):
        return self.duration * 1e3

    @property
    def phi(self):
        """Precession-rate gradient g_n mu_n B'/hbar, rad/(ps nm)."""
        return self.g_n * NUCLEAR_RATE_PER_TESLA * self.gradient

    @property
    def offset_rate(self):
        return self.g_n * NUCLEAR_RATE_PER_TESLA * self.offset


def with_pulse_rates(profile, pulse):
    """Attach per-nucleus precession rates theta_j for the pulse's field."""
    rates = pulse.phi * profile.positions[:, 0] + pulse.offset_rate
    return replace(profile, pulse_rates=rates)


def _require_rates(profile, pulse=None):
    if profile.pulse_rates is not None:
        return profile.pulse_rates
    if pulse is not None:
        return with_pulse_rates(profile, pulse).pulse_rates
    raise ValueError("profile has no pulse rates set")


@dataclass(frozen=True)
class GammaTildeResult:
    """Pulse-weighted coupling sum, discrete and in the continuum limit."""

    discrete: complex
    continuum: complex
    gamma: float

    @property
    def ratio(self):
        return abs(self.discrete) / self.gamma


def gamma_tilde(profile, tau):
    """Sum a_j^2 e^{-i theta_j tau} and its Gaussian continuum reference.

    tau is in ps. The continuum value gamma * exp(-phi^2 tau^2 sigma^2 / 4)
    recovers the rate gradient phi from the stored rates by linear fit.
    """
    rates = _require_rates(profile)
    weights = profile.couplings ** 2
    discrete = complex(np.sum(weights * np.exp(-1j * rates * tau)))
    x = profile.positions[:, 0]
    x_var = np.sum((x - x.mean()) ** 2)
    if x_var > 0:
        phi = np.sum((rates - rates.mean()) * (x - x.mean())) / x_var
    else:
        phi = 0.0
    gamma = profile.gamma
    continuum = gamma * np.exp(-(phi * tau * profile.sigma) ** 2 / 4)
    return GammaTildeResult(discrete=discrete, continuum=complex(continuum),
                            gamma=gamma)


def matching_field(profile, iz_mean, g_star, g_n):
    """Static field cancelling the Overhauser shift, tesla.

    iz_mean is the mean nuclear I_z in hbar units (scalar for uniform
    polarization or one value per nucleus). Matching fails when the
    electron and nuclear Zeeman rates coincide.
    """
    denominator = g_star * MU_B_SI - g_n * MU_N_SI
    scale = abs(g_star * MU_B_SI) + abs(g_n * MU_N_SI)
    if abs(denominator) < 1e-12 * scale:
        raise ValueError(
            "singular matching: electron and nuclear Zeeman rates coincide")
    iz = np.broadcast_to(np.asarray(iz_mean, dtype=float), (profile.count,))
    overhauser_energy = HBAR_SI * 1e12 * float(np.sum(profile.couplings * iz))
    return overhauser_energy / denominator


def _warn_if_excited(state, profile):
    n_max = max((term.n for term in state.terms), default=0)
    if n_max / profile.count > EXCITATION_WARN_FRACTION:
        warnings.warn(
            f"collective map error grows as n/N = {n_max}/{profile.count}",
            ExcitationApproximationWarning, stacklevel=3)


def evolve_collective(state, profile, t):
    """Closed-form exchange evolution for duration t (ps).

    Spin-up terms are fixed points; spin-down terms rotate into the ket
    with one more excitation and a fresh zero history entry. Exact for
    n = 0, accurate to O(gamma_tilde/gamma) + O(n/N) otherwise.
    """
    _warn_if_excited(state, profile)
    angle = np.sqrt(profile.gamma) * t
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    entries = []
    for term in state.terms:
        if term.electron == ELECTRON_UP:
            entries.append((ELECTRON_UP, term.history, term.amplitude))
        else:
            entries.append((ELECTRON_DN, term.history, term.amplitude * cos_a))
            entries.append((ELECTRON_UP, term.history + (0.0,),
                            -1j * sin_a * term.amplitude))
    return _merged(entries)


def apply_pulse(state, pulse, profile):
    """Gradient-pulse unitary in the collective bookkeeping.

    Extends each ket's newest history entry by the pulse duration; the
    history-free ket picks up the explicit phase exp(-i Theta tau). This is
    exact: the same phase on excited kets is absorbed by the history
    extension.
    """
    rates = _require_rates(profile, pulse)
    tau = pulse.duration_ps
    flop = flop_duration(profile)
    if tau > SHORT_PULSE_FRACTION * flop:
        warnings.warn(
            f"pulse duration {tau:.3g} ps is not short against the spin "
            f"flop time {flop:.3g} ps; the sudden approximation degrades",
            UserWarning, stacklevel=2)
    theta_total = 0.5 * float(np.sum(rates))
    entries = []
    for term in state.terms:
        if term.n == 0:
            entries.append((term.electron, term.history,
                            term.amplitude * np.exp(-1j * theta_total * tau)))
        else:
            extended = term.history[:-1] + (term.history[-1] + tau,)
            entries.append((term.electron, extended, term.amplitude))
    return _merged(entries)


def collective_raising(state, profile):
    """Closed-form collective raising, accurate to O(n/N).

    Each n-excitation ket maps to a sum over which excitation is removed:
    slot m contributes conj(gamma_tilde(T_m))/gamma with T_m the history
    suffix sum, merging the freed duration into the previous entry (the
    oldest slot instead leaves its global phase behind).
    """
    rates = _require_rates(profile)
    theta_total = 0.5 * float(np.sum(rates))
    gamma = profile.gamma
    entries = []
    for term in state.terms:
        if term.n == 0:
            continue
        history = term.history
        for m in range(1, term.n + 1):
            suffix = sum(history[m - 1:])
            weights = profile.couplings ** 2
            coeff = complex(np.sum(weights * np.exp(1j * rates * suffix))) / gamma
            if m == 1:
                coeff *= np.exp(-1j * theta_total * history[0])
                merged_history = history[1:]
            else:
                merged_history = (history[:m - 2]
                                  + (history[m - 2] + history[m - 1],)
                                  + history[m:])
            entries.append((term.electron, merged_history,
                            term.amplitude * coeff))
    return _merged(entries)


def erasure_step(mixture, profile, pulse):
    """One erasure round: exchange for a quarter flop period, then the pulse.

    mixture is a list of (weight, CollectiveNuclearState) branches. Fails
    when the pulse leaves |gamma_tilde|/gamma near unity, since the newly
    written excitation would not become a fixed point.
    """
    rates = _require_rates(profile, pulse)
    working = profile if profile.pulse_rates is not None else replace(
        profile, pulse_rates=rates)
    result = gamma_tilde(working, pulse.duration_ps)
    if result.ratio > INEFFECTIVE_RATIO:
        raise ConfigError(
            f"pulse ineffective: |gamma_tilde|/gamma = {result.ratio:.3f} "
            f"leaves the written excitation mobile")
    t_flop = flop_duration(working)
    return [(weight, apply_pulse(evolve_collective(branch, working, t_flop),
                                 pulse, working))
            for weight, branch in mixture]


def _nuclear_dimension(profile):
    if profile.count > MAX_ORACLE_SPINS:
        raise ValueError(
            f"{profile.count} nuclei exceed the exact-verifier limit "
            f"{MAX_ORACLE_SPINS}")
    return 1 << profile.count


def collective_lowering_matrix(profile):
    """Sparse collective lowering operator on the 2^N nuclear space."""
    dim = _nuclear_dimension(profile)
    configs = np.arange(dim)
    rows, cols, data = [], [], []
    scale = profile.couplings / np.sqrt(profile.gamma)
    for j in range(profile.count):
        unflipped = configs[(configs >> j) & 1 == 0]
        rows.append(unflipped | (1 << j))
        cols.append(unflipped)
        data.append(np.full(unflipped.size, scale[j]))
    return sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim))


def _pulse_diagonal(profile):
    """Eigenvalues of the pulse generator on nuclear configurations, rad/ps."""
    dim = _nuclear_dimension(profile)
    if profile.pulse_rates is None:
        return np.zeros(dim)
    configs = np.arange(dim)
    bits = (configs[:, None] >> np.arange(profile.count)[None, :]) & 1
    theta_total = 0.5 * profile.pulse_rates.sum()
    return theta_total - bits @ profile.pulse_rates


def collective_to_vector(state, profile):
    """Exact 2^(N+1) vector of a collective state, electron block first."""
    dim = _nuclear_dimension(profile)
    lower = collective_lowering_matrix(profile)
    diag = _pulse_diagonal(profile)
    if profile.pulse_rates is None and any(
            entry != 0.0 for term in state.terms for entry in term.history):
        raise ValueError("nonzero pulse history requires pulse rates")
    full = np.zeros(2 * dim, dtype=complex)
    for term in state.terms:
        vec = np.zeros(dim, dtype=complex)
        vec[0] = 1.0
        for entry in term.history:
            vec = lower @ vec
            if entry != 0.0:
                vec = np.exp(-1j * diag * entry) * vec
        block = term.electron * dim
        full[block:block + dim] += term.amplitude * vec
    return full


def electron_up_population(vector):
    half = vector.size // 2
    return float(np.sum(np.abs(vector[:half]) ** 2))


def brute_force_oracle(profile, schedule, initial):
    """Exact evolution over the full electron-nuclear space.

    schedule is a sequence of ("exchange", t_ps) and ("pulse", tau_ps)
    segments; initial is a CollectiveNuclearState or a raw vector. The
    exchange generator is diagonalized once and reused across segments.
    """
    dim = _nuclear_dimension(profile)
    if isinstance(initial, CollectiveNuclearState):
        vec = collective_to_vector(initial, profile)
    else:
        vec = np.asarray(initial, dtype=complex).copy()
        if vec.size != 2 * dim:
            raise ValueError(
                f"initial vector has size {vec.size}, expected {2 * dim}")
    configs = np.arange(dim)
    rows, cols, data = [], [], []
    for j, a_j in enumerate(profile.couplings):
        unflipped = configs[(configs >> j) & 1 == 0]
        rows.append(unflipped | (1 << j))  # electron up, nucleus flipped
        cols.append(unflipped + dim)  # electron down, nucleus unflipped
        data.append(np.full(unflipped.size, a_j))
    half = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * dim, 2 * dim)).toarray()
    exchange = half + half.T
    eigenvalues, eigenvectors = np.linalg.eigh(exchange)
    pulse_diag = np.tile(_pulse_diagonal(profile), 2)
    for kind, duration in schedule:
        if kind == "exchange":
            weights = eigenvectors.T @ vec
            vec = eigenvectors @ (np.exp(-1j * eigenvalues * duration) * weights)
        elif kind == "pulse":
            if profile.pulse_rates is None:
                raise ValueError("pulse segment requires pulse rates")
            vec = np.exp(-1j * pulse_diag * duration) * vec
        else:
            raise ValueError(f"unknown schedule segment {kind!r}")
    return vec


@dataclass(frozen=True)
class FeasibilityReport:
    """Gradient-pulse requirements for a current-carrying nanowire."""

    gradient_time_product: float  # T s / m
    gradient_time_threshold: float  # T s / m
    required_current: float  # A, to produce the pulse's gradient
    current_time_product: float  # A s
    current_time_threshold: float  # A s
    current_threshold: float  # A, threshold at the pulse's duration
    suppression_parameter: float  # phi tau sigma
    continuum_suppression: float  # exp(-(phi tau sigma)^2 / 4)
    margin_ratio: float


def pulse_feasibility(pulse, sigma, wire_radius, standoff):
    """Feasibility of driving the pulse with a nanowire current.

    Geometry in nm. The wire carries current I at distance
    (wire_radius + standoff); linearizing its field gives the gradient
    mu_0 I / (2 pi d^2). The current-time threshold quotes the level at
    suppression parameter phi tau sigma = 1, twice the bare gradient-time
    threshold; the margin ratio is measured against it.
    """
    if sigma <= 0 or wire_radius <= 0 or standoff < 0:
        raise ValueError("geometry must be positive")
    sigma_m = sigma * 1e-9
    distance_m = (wire_radius + standoff) * 1e-9
    tau_s = pulse.duration * 1e-9
    gradient_si = pulse.gradient * 1e9  # T/m
    wire_factor = 2 * np.pi * distance_m**2 / MU_0_SI  # A per (T/m)
    gradient_time_threshold = HBAR_SI / (2 * pulse.g_n * MU_N_SI * sigma_m)
    current_time_threshold = wire_factor * 2 * gradient_time_threshold
    required_current = wire_factor * gradient_si
    current_time_product = required_current * tau_s
    parameter = pulse.phi * pulse.duration_ps * sigma
    return FeasibilityReport(
        gradient_time_product=gradient_si * tau_s,
        gradient_time_threshold=gradient_time_threshold,
        required_current=required_current,
        current_time_product=current_time_product,
        current_time_threshold=current_time_threshold,
        current_threshold=(current_time_threshold / tau_s if tau_s > 0
                           else np.inf),
        suppression_parameter=parameter,
        continuum_suppression=float(np.exp(-parameter**2 / 4)),
        margin_ratio=current_time_product / current_time_threshold,
    )
