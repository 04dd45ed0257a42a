"""Flat key=value run configuration with per-parameter provenance.

Every key carries a unit suffix and a literature default; a resolved
config remembers which values the user supplied, so output headers can
distinguish defaults from overrides. Dot-dynamics runs (stage1, cycle,
sweep, check) and erasure runs use separate key tables; supplying a key
from the wrong table is reported as such rather than as an unknown key.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .engine import EngineConfig
from .errors import ConfigError


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    value_type: type
    default: object
    description: str
    check: Optional[Callable] = None


def _positive(name, value):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")


def _nonnegative(name, value):
    if value < 0:
        raise ConfigError(f"{name} must be nonnegative, got {value}")


def _negative(name, value):
    if value >= 0:
        raise ConfigError(f"{name} must be negative, got {value}")


def _nonzero(name, value):
    if value == 0:
        raise ConfigError(f"{name} must be nonzero")


def _choice(*options):
    def check(name, value):
        if value not in options:
            raise ConfigError(
                f"{name} must be one of {', '.join(options)}, got {value!r}")
    return check


def _int_range(lo, hi):
    def check(name, value):
        if not lo <= value <= hi:
            raise ConfigError(f"{name} must be in [{lo}, {hi}], got {value}")
    return check


_DOT_SPECS = (
    ParameterSpec("temperature_K", float, 60.0,
                  "phonon bath temperature", _positive),
    ParameterSpec("gamma_ph_meV", float, 0.001,
                  "effective-mode friction, as hbar*gamma_ph", _nonnegative),
    ParameterSpec("gamma_R_meV", float, 6.6e-4,
                  "radiative decay per ground state, as hbar*gamma_R",
                  _nonnegative),
    ParameterSpec("omega_b_meV", float, 1.48,
                  "spectral-density cutoff quantum", _positive),
    ParameterSpec("alpha_p_over_4pi2_ps2", float, 0.06,
                  "phonon coupling strength alpha_p/(2 pi)^2", _nonnegative),
    ParameterSpec("omega1_tilde_meV", float, math.sqrt(5.0),
                  "effective-mode quantum", _positive),
    ParameterSpec("hbar_omega1_meV", float, 0.75,
                  "stage-1 Rabi energy", _positive),
    ParameterSpec("hbar_omega2_meV", float, 4.316,
                  "stage-2 Rabi energy", _positive),
    ParameterSpec("energy_gap_meV", float, 2.0,
                  "stage-1 red detuning; per-transfer energy gain",
                  _nonnegative),
    ParameterSpec("n_levels", int, 15,
                  "oscillator truncation level", _int_range(2, 60)),
    ParameterSpec("stage1_duration_ps", float, 20.0,
                  "stage-1 window and switch search range", _positive),
    ParameterSpec("grid_dt_ps", float, 0.05,
                  "output grid spacing", _positive),
    ParameterSpec("detuning_reference", str, "relaxed",
                  "zero-detuning reference line: relaxed or vertical",
                  _choice("relaxed", "vertical")),
    ParameterSpec("positivity_abort", float, -1e-3,
                  "abort when a density-matrix eigenvalue drops below this",
                  _negative),
)

_ERASURE_SPECS = (
    ParameterSpec("nucleus_count", int, 8,
                  "nuclei in the chain; exact verifier caps at 12",
                  _int_range(1, 12)),
    ParameterSpec("sigma_nm", float, 5.0,
                  "electron envelope width", _positive),
    ParameterSpec("coupling_scale_rad_per_ps", float, 0.05,
                  "peak hyperfine coupling", _positive),
    ParameterSpec("coupling_envelope", str, "gaussian",
                  "coupling profile along the chain: gaussian or uniform",
                  _choice("gaussian", "uniform")),
    ParameterSpec("suppression_phi_tau_sigma", float, 8.0,
                  "pulse suppression parameter phi*tau*sigma", _nonnegative),
    ParameterSpec("pulse_duration_ps", float, 1.0,
                  "gradient-pulse duration used in the erasure step",
                  _positive),
    ParameterSpec("lattice_jitter_nm", float, 0.0,
                  "uniform random site displacement half-width; 0 disables",
                  _nonnegative),
    ParameterSpec("seed", int, 0,
                  "random seed for lattice jitter", _nonnegative),
    ParameterSpec("g_n", float, 5.0,
                  "nuclear g-factor", _nonzero),
    ParameterSpec("pulse_gradient_T_per_nm", float, 1.0,
                  "physical pulse gradient for the feasibility report",
                  _positive),
    ParameterSpec("pulse_duration_ns", float, 1.0,
                  "physical pulse duration for the feasibility report",
                  _positive),
    ParameterSpec("wire_radius_nm", float, 5.0,
                  "nanowire radius", _positive),
    ParameterSpec("standoff_nm", float, 5.0,
                  "wire-to-dot standoff", _nonnegative),
)

DOT_KINDS = ("stage1", "cycle", "sweep", "check")
RUN_KINDS = DOT_KINDS + ("erasure",)

# The check suite targets the oracle-equivalence budget, which is stated
# at a reduced truncation level.
_CHECK_DEFAULTS = {"n_levels": 8}

SWEEP_AXES = ("temperature_K", "gamma_ph_meV", "hbar_omega1_meV",
              "energy_gap_meV", "n_levels")


def parameter_table(kind):
    if kind not in RUN_KINDS:
        raise ConfigError(f"unknown run kind {kind!r}")
    specs = _ERASURE_SPECS if kind == "erasure" else _DOT_SPECS
    table = {}
    for spec in specs:
        default = _CHECK_DEFAULTS.get(spec.name) if kind == "check" else None
        if default is not None:
            spec = ParameterSpec(spec.name, spec.value_type, default,
                                 spec.description, spec.check)
        table[spec.name] = spec
    return table


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters for one run kind."""

    kind: str
    values: dict
    provenance: dict  # parameter name -> "default" | "user"

    def __getitem__(self, key):
        return self.values[key]


def split_assignment(text, origin):
    key, separator, raw = text.partition("=")
    if not separator or not key.strip():
        raise ConfigError(f"{origin} entry {text!r} is not of the form key=value")
    return key.strip(), raw.strip()


def _read_config_file(path):
    try:
        with open(path) as handle:
            lines = handle.readlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    entries = []
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        entries.append(split_assignment(stripped, f"{path}:{number}"))
    return entries


def convert_value(spec, raw):
    if spec.value_type is str:
        value = raw
    elif spec.value_type is int:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(
                f"{spec.name} expects an integer, got {raw!r}") from None
    else:
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(
                f"{spec.name} expects a number, got {raw!r}") from None
        if not math.isfinite(value):
            raise ConfigError(f"{spec.name} must be finite, got {raw!r}")
    if spec.check is not None:
        spec.check(spec.name, value)
    return value


def _other_table_hint(kind, key):
    other = _DOT_SPECS if kind == "erasure" else _ERASURE_SPECS
    if any(spec.name == key for spec in other):
        usage = "erasure runs" if kind != "erasure" else "dot-dynamics runs"
        return f"config key {key} applies to {usage}, not kind={kind}"
    return f"unknown config key {key}"


def parse_config(kind, config_path=None, overrides=()):
    """Resolve defaults, a config file, and --set overrides, in that order."""
    table = parameter_table(kind)
    values = {name: spec.default for name, spec in table.items()}
    provenance = {name: "default" for name in table}
    missing = [name for name, value in values.items() if value is None]
    entries = []
    if config_path is not None:
        entries.extend(_read_config_file(config_path))
    for text in overrides:
        entries.append(split_assignment(text, "--set"))
    for key, raw in entries:
        spec = table.get(key)
        if spec is None:
            raise ConfigError(_other_table_hint(kind, key))
        values[key] = convert_value(spec, raw)
        provenance[key] = "user"
    still_missing = [name for name in missing if values[name] is None]
    if still_missing:
        raise ConfigError(
            "missing required config keys: " + ", ".join(sorted(still_missing)))
    return RunConfig(kind=kind, values=values, provenance=provenance)


def to_engine_config(run_config):
    v = run_config.values
    return EngineConfig(
        temperature=v["temperature_K"],
        n_levels=v["n_levels"],
        omega1_energy=v["omega1_tilde_meV"],
        omega_b_energy=v["omega_b_meV"],
        alpha_p=v["alpha_p_over_4pi2_ps2"],
        gamma_ph_energy=v["gamma_ph_meV"],
        gamma_R_energy=v["gamma_R_meV"],
        energy_gap=v["energy_gap_meV"],
        rabi1_energy=v["hbar_omega1_meV"],
        rabi2_energy=v["hbar_omega2_meV"],
        stage1_duration=v["stage1_duration_ps"],
        grid_dt=v["grid_dt_ps"],
        detuning_reference=v["detuning_reference"],
        positivity_abort=v["positivity_abort"],
    )
