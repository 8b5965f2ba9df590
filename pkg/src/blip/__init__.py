"""Compressed quantitative MRI with Bloch response dictionaries.

The pipeline simulates IR-SSFP fingerprints (:mod:`blip.bloch`), samples
k-space with randomly shifted EPI lines (:mod:`blip.sampling`) and
recovers per-voxel tissue parameters by projected Landweber iteration
onto the dictionary cone (:mod:`blip.recon`, :mod:`blip.projection`).
"""

from .analysis import flatness, map_errors, scaling_study, ser_db
from .bloch import (
    BlochDictionary,
    ExcitationSequence,
    ParameterGrid,
    TissueParams,
    build_dictionary,
    default_grid,
    random_excitation,
    simulate_response,
    simulate_responses,
)
from .errors import (
    BlipError,
    ConfigurationError,
    DegenerateSamplingError,
    DimensionError,
    DivergenceError,
    DomainError,
    IngestionError,
    SimulationError,
    StagnationError,
)
from .phantom import PhantomDefinition, TissueSpec, default_tissues, ground_truth_sequence, synth_phantom
from .projection import ParameterMaps, project_image, project_voxel
from .recon import ReconConfig, ReconTrace, blip, mrf_baseline
from .sampling import KSpaceData, SamplingPlan, adjoint, empirical_rip_probe, forward, make_plan

__version__ = "0.1.0"

__all__ = [
    "BlipError",
    "BlochDictionary",
    "ConfigurationError",
    "DegenerateSamplingError",
    "DimensionError",
    "DivergenceError",
    "DomainError",
    "ExcitationSequence",
    "IngestionError",
    "KSpaceData",
    "ParameterGrid",
    "ParameterMaps",
    "PhantomDefinition",
    "ReconConfig",
    "ReconTrace",
    "SamplingPlan",
    "SimulationError",
    "StagnationError",
    "TissueParams",
    "TissueSpec",
    "adjoint",
    "blip",
    "build_dictionary",
    "default_grid",
    "default_tissues",
    "empirical_rip_probe",
    "flatness",
    "forward",
    "ground_truth_sequence",
    "make_plan",
    "map_errors",
    "mrf_baseline",
    "project_image",
    "project_voxel",
    "random_excitation",
    "scaling_study",
    "ser_db",
    "simulate_response",
    "simulate_responses",
    "synth_phantom",
]
