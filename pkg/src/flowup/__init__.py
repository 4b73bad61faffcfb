"""Point-cloud upsampling by flow matching from midpoint-densified inputs."""

from .config import RunConfig
from .densify import DensifyConfig, midpoint_densify
from .errors import (
    CheckpointError,
    ConvergenceError,
    DegenerateInputError,
    FileFormatError,
    FlowupError,
    InvalidArgumentError,
    NumericalError,
    ParseError,
)
from .flow import ScheduleConfig, euler_sample, fm_loss, interpolate, sample_t, velocity_target
from .geometry import NormParams, fps, knn, knn_graph, normalize
from .metrics import chamfer, evaluate, hausdorff, point_to_face
from .net import NetArch, NetParams, backward, forward, init_params
from .transport import Assignment, assign, assign_auction, assign_exact, emd_align

__version__ = "0.1.0"
