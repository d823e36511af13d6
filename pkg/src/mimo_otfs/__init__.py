"""Low-complexity ZF/MMSE detection for MIMO-OTFS.

The channel is handled through its eigenvalue block matrix ``D`` (one
length-``MN`` diagonal per antenna pair); Gram inverses use the
partition-and-backtrack algorithm on those diagonals.
"""

from .blockmat import (
    BlockEigenMatrix,
    GramMatrix,
    PartitionStack,
    SingularBlockError,
    bd_add,
    bd_adjoint,
    bd_invert,
    bd_mul,
    dense_expand,
    dense_invert,
    gram,
    schur_step,
)
from .channel import (
    ChannelRealization,
    ConfigurationError,
    CsiErrorModel,
    DelayDopplerProfile,
    NoiseModel,
    Tap,
    apply_transform,
    build_dense_channel,
    eigen_matrix,
    perturb_csi,
    sample_channel,
    table2_profile,
    transmit,
)
from .complexity import OpCounter, complexity_report, measure_ops, predict_ops
from .frame import SymbolFrame
from .receivers import (
    BPSK,
    QPSK,
    Constellation,
    conventional_equalize,
    demap,
    equalize,
    equalize_with_csi_error,
    las_refine,
    modulate,
)
from .sinr import analytic_ber, lm_noise_cov, lm_sinr, lz_noise_cov, lz_sinr, q_function

__version__ = "0.1.0"
