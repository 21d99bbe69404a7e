"""Simulation and analysis of light-noise storage in a precessing collective spin."""
from .analytic import (
    bana_closed_form,
    infer_pna,
    pna_closed_form,
    spectrum_phi,
    spin_transfer,
    technical_area,
    variance_budget,
)
from .params import (
    CONVENTION_TAG,
    ExperimentParams,
    Spectrum,
    Trajectory,
    default_params,
    unit_convert,
    validate,
)
from .sde import SimConfig, decay_autocorrelation, simulate, simulate_ensemble
from .spectral import (
    LorentzianFit,
    NoiseAreas,
    decompose,
    estimate_psd,
    fit_lorentzian,
    infer_pna_from_measurement,
)

__version__ = "0.1.0"
