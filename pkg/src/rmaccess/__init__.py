"""Second-order Reed-Muller sequences for grant-free multiple access."""

__version__ = "0.1.0"

from .codebook import Codebook, RmParams, codebook, coherence, rm_sequence
from .detector import DetectionReport, DetectorConfig, sic_detect
from .gf import FieldContext, field_context, gf2_rank
from .sim import ChannelModel, ExperimentConfig, collision_rate_formula, run_experiment
from .transforms import fwht, shift_by_unit

__all__ = [
    "ChannelModel",
    "Codebook",
    "DetectionReport",
    "DetectorConfig",
    "ExperimentConfig",
    "FieldContext",
    "RmParams",
    "codebook",
    "coherence",
    "collision_rate_formula",
    "field_context",
    "fwht",
    "gf2_rank",
    "rm_sequence",
    "run_experiment",
    "shift_by_unit",
    "sic_detect",
]
