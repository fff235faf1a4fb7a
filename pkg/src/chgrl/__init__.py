"""Causal heterogeneous graph learning for comorbidity risk prediction."""

from .csinlf import (
    FactorModel,
    KnownEntrySet,
    csinlf_gradient,
    csinlf_objective,
    delta_map,
    fit,
    impute,
)
from .graph import (
    DEFAULT_RELATIONS,
    DISEASE,
    PATIENT,
    HeteroGraph,
    Relation,
    load_graph,
    load_graph_dir,
    make_graph,
    save_graph,
)
from .metrics import accuracy, aggregate, auc, emit_report, f1_weighted
from .model import (
    ChgrlParams,
    LossBreakdown,
    backward,
    causal_attention,
    causal_strength,
    classify,
    forward_baseline_rgcn,
    forward_full,
    fuse,
    hetero_conv,
    init_params,
    intervene,
    predict_proba,
    propagate_and_aggregate,
    total_loss,
)
from .synth import GenConfig, GroundTruth, generate, label_recoverability_check
from .training import RunResult, TrainConfig, resume, split_nodes, train

__version__ = "0.1.0"
