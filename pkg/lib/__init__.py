from .tensor import Tape, Tensor, backward, precision
from .nn import BatchNorm, Conv2d, Linear, Module
from .optim import SGD, OptimizerState, lr_at_epoch, sgd_momentum_step
from .checkpoint import load_checkpoint, save_checkpoint
from .backbone import Backbone, BackboneConfig, backbone_classify, backbone_forward
from .viewpoints import circular_viewpoints, cube_viewpoints, layout_viewpoints
from .ViewGraph import ViewGraph, RelationMLP, knn_sparsify, learned_adjacency, relation_vector
from .sampling import furthest_point_sampling, selective_view_sample
from .gcn import (
    LevelState,
    MaxPoolClassifier,
    TactileViewGCN,
    ViewGCN,
    ViewGCNConfig,
    classify,
    fuse_messages,
    local_graph_conv,
    nonlocal_messages,
    shape_descriptor,
    total_loss,
)
from .config import RunConfig
