"""Domain-adversarial training with label-proportion estimation (DAN-LPE).

Under label shift the source and target domains share p(x|y) but differ in
p(y).  DAN-LPE trains a domain-adversarial network whose domain loss
reweights source samples by estimated target label proportions, and
re-estimates those proportions from the classifier's confusion matrix as
training proceeds.  DNN, DANN and BBSE baselines are included.
"""

from .baselines import BbseResult, bbse_estimate
from .data import (
    LabeledDataset,
    SyntheticSpec,
    UnlabeledDataset,
    generate_synthetic,
    load_dataset,
    make_synthetic_spec,
    save_dataset,
    split_validation,
)
from .distributions import (
    JointConfusion,
    RowConditional,
    SimplexVector,
    empirical_prior,
    estimate_joint_confusion,
    prediction_histogram,
    row_normalize,
)
from .lpe import (
    DegenerateSimplexError,
    LpeConfig,
    LpeState,
    estimate_proportions,
    lpe_gradient,
    lpe_loss,
    run_lpe_updates,
    smoothness_step,
    solve_exact,
)
from .training import (
    HyperParams,
    TrainReport,
    dan_lpe,
    dann_baseline,
    dnn_baseline,
    step1_train,
    step2_train,
)

__version__ = "0.1.0"
