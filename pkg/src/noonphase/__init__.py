"""Bayesian phase estimation with NOON / Schrodinger-cat interferometers."""
from .fringe import (
    CalibrationTable,
    FringeModel,
    Outcome,
    load_calibration,
    noon_overlap_oracle,
    prob_no,
    prob_yes,
)
from .montecarlo import EnsembleStats, SeedSpec, TrialResult, run_ensemble, run_trial
from .posterior import (
    LogPosterior,
    PhaseGrid,
    PosteriorSummary,
    asymptotic_posterior,
    confidence_interval,
    map_estimate,
    normalize,
    uniform_prior,
    update,
)
from .schedule import Schedule, arithmetic, fixed, geometric, ion_sequence, parse_schedule, single

__version__ = "0.1.0"

__all__ = [
    "CalibrationTable", "FringeModel", "Outcome", "load_calibration", "noon_overlap_oracle",
    "prob_no", "prob_yes", "EnsembleStats", "SeedSpec", "TrialResult", "run_ensemble", "run_trial",
    "LogPosterior", "PhaseGrid", "PosteriorSummary", "asymptotic_posterior", "confidence_interval",
    "map_estimate", "normalize", "uniform_prior", "update", "Schedule", "arithmetic", "fixed",
    "geometric", "ion_sequence", "parse_schedule", "single",
]
