"""semfuse: unified multi-view representation learning with
semantic-consistency contrastive alignment, built on numpy.
"""

__version__ = "0.1.0"

from .data import (MultiViewDataset, SynthSpec, batch_iter, load_dataset,
                   normalize, synth_multiview, write_dataset)
from .evaluate import (EvalProtocol, evaluate_representation, fusion_baseline,
                       hungarian_acc, kmeans, knn_classify, nmi, pairwise_fscore)
from .model import (LossBreakdown, ModelConfig, MultiViewModel, ablation_variant,
                    classify, column_cosine, contrastive_f_values, encode,
                    init_unified, mean_label_entropy_penalty,
                    pairwise_contrastive_loss, reconstruction_loss,
                    degradation_loss, semantic_loss, total_loss)
from .nn import (AdamState, GradTape, Mlp, adam_step, finite_diff_check,
                 mlp_backward, mlp_forward, softmax_rows)
from .training import (TrainReport, TrainSchedule, initialize_h, joint_train,
                       pretrain, run_training)

__all__ = [name for name in dir() if not name.startswith("_")]
