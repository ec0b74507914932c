"""rwdre: random walks in dynamic random environments, as a simulation lab.

Environments (zero-range, exclusion, constant baselines) are realized from
seeded per-site substreams; walks are built on top by Poisson thinning; the
estimator layer measures box-crossing probabilities, speed brackets,
decoupling gaps and trap/threat diagnostics.
"""

from .boxes import BoxIndex, Region, ScaleSequence, build_scales, check_distance_condition, children
from .environments import (
    AsepParams,
    ClassRegions,
    ConstantEnvironment,
    RateFunction,
    ZrParams,
    asep_assign_classes,
    asep_class_events,
    asep_evolve,
    asep_sample_initial,
    zr_density,
    zr_evolve,
    zr_fugacity,
    zr_partition,
    zr_sample_initial,
)
from .estimators import (
    BallisticityParams,
    BoxFunctional,
    CascadeParams,
    DecayParams,
    DecouplingParams,
    EnvironmentSpec,
    Estimate,
    RealizationFactory,
    Realization,
    TrapParams,
    ballisticity_curve,
    classify_cascading,
    decoupling_gap,
    derived_decay_params,
    estimate_pH,
    estimate_ptildeH,
    estimate_speed_bracket,
    event_A,
    event_Atilde,
    event_D,
    is_threatened,
    is_trapped,
    lln_curve,
    verify_threat_dichotomy,
    wilson_interval,
)
from .deviation import (
    drift_margin,
    exact_poisson_tail,
    poisson_chernoff,
    submartingale_deviation_fit,
)
from .noise import MarkedPoint, NoiseField, SpaceTimeWindow, marked_points_in
from .streams import StreamId, StreamKind, SubStream, derive_key, derive_stream, poisson_times
from .trajectory import EnvTrajectory, OccupancyConfig, ParticleTrack
from .walker import (
    CoverageError,
    RateBoundError,
    RateModel,
    StartPoint,
    WalkPath,
    dominating_count,
    run_family,
    run_walk,
    thin_rates,
)

__version__ = "0.1.0"
