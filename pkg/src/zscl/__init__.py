"""Continual learning for a desk-scale two-tower contrastive model:
reference-set distillation plus weight-space consolidation and ensembling,
with a synthetic multi-domain benchmark and Transfer/Avg/Last metrics.
"""

from .benchmark import (
    AccuracyMatrix,
    DomainSpec,
    MetricReport,
    TaskData,
    build_matrix,
    compute_metrics,
    evaluate,
    gen_domain,
    pretrain_toy,
)
from .contlearn import (
    OptState,
    ReferenceSet,
    ReplayMemory,
    optimizer_step,
    sample_ref_batch,
    select_teacher,
    train_task,
    update_replay_memory,
)
from .losses import (
    Batch,
    GradResult,
    LossValue,
    RefBatch,
    ce_loss,
    distill_image_loss,
    distill_text_loss,
    feature_distance_loss,
    smooth_targets,
    total_loss,
    wc_loss,
)
from .model import (
    Arch,
    ParamLayout,
    ParamVector,
    TwoTowerModel,
    init_params,
    load_checkpoint,
    logits,
    predict,
    save_checkpoint,
    similarity_matrix,
)
from .numerics import cosine_sim, cross_entropy, finite_diff_grad, softmax
from .recipe import PRESETS, TrainRecipe, make_recipe
from .weightspace import EnsembleState, we_init, we_should_sample, we_update, wise_interpolate

__version__ = "0.1.0"
