"""Point-cloud convolution with MLP-generated cubic kernels, on a small numpy autodiff engine."""

from .config import ConfigError, RunConfig
from .conv import CKConvLayer, ckconv_forward, conv3d_forward, point_conv
from .kernel import CubicKernel, kernel_forward, norm_l2, norm_st, normalize
from .lsa import LsaHead, apply_attention, lsa_forward
from .network import Classifier, ClassifierConfig, StageConfig, classify_forward, cross_entropy
from .pointcloud import LocalPointSet, PointCloud, farthest_point_sampling, radius_neighbors
from .tensor import ContractError, DimensionError, DomainError, NumericError, Tensor

__version__ = "0.1.0"
