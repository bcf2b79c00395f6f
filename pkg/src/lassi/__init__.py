"""Low-rank plus adaptive dictionary-sparse dynamic image reconstruction."""

from .containers import read_array, read_mask, read_sequence, read_tensor, write_tensor
from .dictlearn import (
    Dictionary,
    SparseCodeMatrix,
    atom_update,
    init_dictionary,
    nsre,
    soup_bcd,
    sparse_code_l0,
    sparse_code_l1,
)
from .model import (
    Decomposition,
    DynamicSequence,
    KtSpaceData,
    MetricsTrace,
    SamplingMask,
    nrmse,
    per_frame_nrmse,
    reshape_r1,
    unreshape_r1,
)
from .patches import PatchConfig, aggregate_patches, count_coverage, extract_patches
from .phantom import (
    Ellipse,
    PhantomSpec,
    default_acceptance_spec,
    make_coil_maps,
    make_phantom,
)
from .recon import (
    ReconConfig,
    gradient,
    prox_gradient_p4,
    prox_xl,
    prox_xs,
    run_dinokat,
    run_lassi,
    run_lps_baseline,
)
from .sensing import (
    SensingOperator,
    estimate_norm,
    make_cartesian_mask,
    make_operator,
    make_pseudoradial_mask,
    zerofill_baseline,
)
from .shrinkage import ShrinkageSpec, hard_sv_threshold, optshrink, schatten_prox, svt

__version__ = "0.1.0"
