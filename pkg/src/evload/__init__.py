"""Residential EV charging demand: expected profiles, Monte Carlo fleets and
autonomous demand response with optional vehicle-to-grid."""

from .analytic import (
    ChargerModel,
    expected_profile,
    expected_profile_uniform_closed_form,
    peak_time,
    wrap_mod24,
)
from .core import DemandProfile, TimeGrid, add, energy, par, scale
from .distributions import (
    Exponential,
    Gaussian,
    Rician,
    TruncatedGaussian,
    Uniform,
    match_moments,
    stream,
)
from .dr import DrConfig, DrOutcome, best_response, run_dr, uncoordinated_schedule
from .errors import (
    ConfigError,
    DomainError,
    EvloadError,
    GridMismatchError,
    InfeasibleError,
    NumericalError,
    SamplingError,
)
from .montecarlo import (
    EvSession,
    FleetSpec,
    empirical_expected_profile,
    realize_demand,
    sample_fleet,
    sample_session,
)
from .scenario import ScenarioConfig, default_scenario, load_config, run_cases, synth_baseline
from .special import bessel_i0, q_function

__version__ = "0.1.0"
