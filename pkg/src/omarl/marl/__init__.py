"""Multi-agent learners: discrete SAC, DQN and their conservative offline variants."""
from .agents import (ALGO_SCOPE, OFFLINE_ALGOS, ONLINE_ALGOS, AgentNets, ModelPolicy, act,
                     build_agent_nets)
from .buffer import ReplayBuffer
from .codec import JointActionCodec
from .losses import (cql_penalty, critic_loss, ctde_eval_loss, dqn_loss, improve_losses,
                     sac_eval_loss_centralized, sac_eval_loss_independent, sac_improve_loss,
                     soft_value)
from .train import Learner, TrainerConfig, TrainResult, epsilon_at, train_offline, train_online
