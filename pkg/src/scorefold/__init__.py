"""Score-based Calpha structure optimisation by annealed Langevin dynamics."""

__version__ = "0.1.0"

from .conditioning import ConditioningBundle, assemble, load_predictions, save_predictions
from .errors import (
    ConfigError,
    DataError,
    DegenerateGeometryError,
    FormatError,
    HandednessUndecidableError,
    InvalidDistanceMatrixError,
    InvalidInputError,
    SamplingError,
    ScoreFoldError,
    TrainingError,
)
from .geometry import (
    Structure,
    center,
    dihedral,
    distance_matrix,
    kabsch_superpose,
    mirror,
    reconstruct_from_distances,
)
from .io import parse_pdb_ca, read_tensor, write_ca_pdb, write_tensor
from .metrics import gdt_ts, lddt_ca, rmsd
from .net import PairwiseScoreNet, load_checkpoint, save_checkpoint
from .noise import NoiseSchedule, geometric_schedule, perturb, true_score
from .sampler import (
    DihedralHistogram,
    SamplerConfig,
    anneal_sample,
    build_reference_histogram,
    kl_divergence,
    langevin_step,
    resolve_handedness,
    sample_decoys,
    step_size,
)
from .score import chain_rule_gradients, dsm_loss, net_score, oracle_score
from .training import TrainConfig, make_net, train

__all__ = [name for name in dir() if not name.startswith("_")]
