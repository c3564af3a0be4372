"""Sequential, residual and multipath graph convolutional networks on a numpy autodiff tape."""

from .graph_core import CsrMatrix, EdgeList, add_self_loops, build_csr, spmm, symmetric_normalize
from .model import ModelSpec, Parameters, forward, init_params, param_count
from .training import RunMetrics, TrainConfig, repeat_runs, train_run

__all__ = [
    "CsrMatrix",
    "EdgeList",
    "ModelSpec",
    "Parameters",
    "RunMetrics",
    "TrainConfig",
    "add_self_loops",
    "build_csr",
    "forward",
    "init_params",
    "param_count",
    "repeat_runs",
    "spmm",
    "symmetric_normalize",
    "train_run",
]
