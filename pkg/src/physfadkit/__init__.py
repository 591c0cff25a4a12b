"""physfadkit: physics-compliant coupled-dipole simulator for RIS-parametrized
wireless channels, with Born / Born-like series expansions, certified truncation
bounds, and the linearity metric for cascaded-model validity."""

__version__ = "0.1.0"

from . import analysis, channels, cli, errors, experiments, metrics, numerics, physics
from .channels import (
    CascadedModel,
    ChannelMatrix,
    RisChannelSolver,
    SeriesTruncation,
    antenna_self_inverse_series,
    cascaded_from_blocks,
    cascaded_predict,
    channel_exact,
    channel_frequency_sweep,
    generic_series_rt,
    mimo_series_rt,
    ris_free_space_series,
    wss_inverse_series,
)
from .numerics import (
    BlockIndexMap,
    bessel_j0,
    bessel_y0,
    hankel0_2,
    invert,
    neumann_partial_sum,
    spectral_norm,
    spectral_radius_estimate,
)
from .physics import (
    DEFAULT_CONSTANTS,
    Dipole,
    PhysicalConstants,
    RisConfiguration,
    Scene,
    apply_ris_config,
    assemble_interaction_matrix,
    green,
    inverse_polarizability,
    load_scene,
    save_scene,
)
