from .ppo import (
    EnvRunner,
    PpoAgent,
    PpoConfig,
    RolloutBuffer,
    make_ppo,
    ppo_collect,
    ppo_update,
    surrogate_loss_and_grads,
    value_loss_and_grads,
)
from .replay import Batch, ReplayBuffer
from .td3 import (
    Td3Agent,
    Td3Config,
    actor_loss_and_grads,
    critic_loss_and_grads,
    critic_targets,
    make_td3,
    td3_select_action,
    td3_update,
)
from .train import ALGO_KINDS, CurvePoint, EvalSummary, TrainOutcome, evaluate, run_episode, train
