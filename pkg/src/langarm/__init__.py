"""Desk-scale lab for language-supervised tabletop manipulation.

Humans (or the scripted expert) steer a simulated arm with plain language,
demonstrations are augmented by stochastic trajectory resampling, a tiny
dual encoder trains with a contrastive imitation loss, and the resulting
discriminative policy runs closed-loop over a fixed motion vocabulary with
optional advisor guidance and per-step human corrections.
"""

from .actions import (
    GRIP_CLOSE,
    GRIP_NOOP,
    GRIP_OPEN,
    Axis,
    LowLevelAction,
    MotionPrimitive,
    PrimitiveVocabulary,
    action_to_primitive,
    action_token_vocabulary,
    canonical_vocabulary,
    expand_paraphrases,
    primitive_to_action,
)
from .world import (
    Observation,
    TaskSpec,
    WorldState,
    apply_action,
    check_success,
    get_task,
    init_world,
    render,
)
from .teleop import (
    Episode,
    Session,
    Transition,
    save_episode,
    load_episode,
    start_session,
    step_session,
    translate_supervision,
)
from .augment import augment_trajectory, find_waypoints
from .encoders import Batch, BatchItem, EncoderParams, cil_grad, cil_loss, context
from .training import TrainConfig, train
from .control import (
    ControlConfig,
    GuidanceVerdict,
    ScoreVector,
    apply_guidance,
    run_episode,
    score_primitives,
    scripted_advisor,
    select_action,
)
from .data import build_dataset, fit_axis_kmeans, quantize_dataset

__version__ = "0.1.0"
