"""Highway overtaking decisions with DQN and dueling DQN, built on numpy."""

from .agent import (
    AgentConfig,
    DQNAgent,
    EpsilonSchedule,
    ReplayBuffer,
    bellman_target,
    discounted_return,
    epsilon_at,
    select_action,
    sync_target,
    td_update,
)
from .config import RunConfig, load_config
from .env import Action, EnvConfig, HighwayEnv, RewardConfig, TrafficConfig
from .kinematics import KinematicsParams, VehicleState, integrate_step, relative_state, slip_angle
from .nn import OptimizerState, QFunctionNet, backward, init_network, optimizer_step, q_values

__version__ = "0.1.0"
