"""Text-guided diffusion makeup removal with age and identity evaluation."""

from .age import AgeRegressor, SelfAdjustingBeta, TrainConfig, predict_age, smoothed_l1, train_age_estimator, update_beta, weighted_loss
from .diffusion import DiffusionSchedule, ToyNoisePredictor, ddim_invert, ddim_sample, make_cosine_schedule, make_step_grid
from .evaluation import (
    EstimationShift,
    EvalReport,
    RocCurve,
    ScoreSet,
    age_group_accuracy,
    demographic_slice,
    mae,
    minor_adult_accuracy,
    roc,
    shift_stats,
    t_confidence_interval,
    tmr_at_fmr,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    PromptPair,
    clip_age_loss,
    clip_directional_loss,
    identity_loss,
    perceptual_loss,
    pixel_l1_loss,
    ssrnet_age_loss,
    total_loss,
)
from .pipeline import Backends, FinetuneConfig, RunManifest, batch_clean, finetune, remove_makeup
from .types import AgeGroupBins, ImageTensor, MakeupPair, convert_range, default_age_bins, validate_image

__version__ = "0.1.0"
