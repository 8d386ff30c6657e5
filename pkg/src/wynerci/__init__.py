"""Exact and variational solvers for Wyner common information on finite alphabets."""
from .bipartite import BipartiteConfig, SolveTrace, kappa_from_beta
from .bipartite import solve as solve_bipartite
from .errors import (ConsistencyError, DomainError, FusionDegenerateError, InvalidArgumentError,
                     InvalidDistributionError, InvalidSpecError, TooLargeError, WynerError)
from .metrics import InfoReport, entropy, info_report, kl_divergence, mutual_information
from .prob import Bipartition, Encoder, JointDist, SourceSpec, enumerate_bipartitions
from .synth import SynthSpec, build_joint, invertible_spec, noninvertible_spec, sample_dataset
from .variational import VIConfig, VIParams
from .variational import solve as solve_vi

__version__ = "0.1.0"

__all__ = [
    "BipartiteConfig", "Bipartition", "ConsistencyError", "DomainError", "Encoder",
    "FusionDegenerateError", "InfoReport", "InvalidArgumentError", "InvalidDistributionError",
    "InvalidSpecError", "JointDist", "SolveTrace", "SourceSpec", "SynthSpec", "TooLargeError",
    "VIConfig", "VIParams", "WynerError", "build_joint", "entropy", "enumerate_bipartitions",
    "info_report", "invertible_spec", "kappa_from_beta", "kl_divergence", "mutual_information",
    "noninvertible_spec", "sample_dataset", "solve_bipartite", "solve_vi",
]
