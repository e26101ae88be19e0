from .autodiff import Tensor, gather_rows, parameter
from .model import (BlockConfig, PointConvConfig, PointConvModel, farthest_point_sample, knn,
                    paper_scale_config, pointconv_block, toy_config)
from .train import TrainConfig, TrainResult, sh_l2_loss, train

__all__ = [
    "Tensor", "gather_rows", "parameter", "BlockConfig", "PointConvConfig", "PointConvModel",
    "farthest_point_sample", "knn", "paper_scale_config", "pointconv_block", "toy_config",
    "TrainConfig", "TrainResult", "sh_l2_loss", "train",
]
