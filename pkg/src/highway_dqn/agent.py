"""Replay buffer, exploration schedule, Bellman targets and the TD update."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import OptimizerState, QFunctionNet, backward, init_network, optimizer_step, q_values


@dataclass(frozen=True)
class EpsilonSchedule:
    eps_start: float = 1.0
    eps_end: float = 0.05
    tau: float = 6000.0  # environment steps

    def __post_init__(self):
        if not self.eps_start >= self.eps_end > 0 or self.tau <= 0:
            raise ValueError("need eps_start >= eps_end > 0 and tau > 0")


def epsilon_at(step: int, schedule: EpsilonSchedule = EpsilonSchedule()) -> float:
    if step < 0:
        raise ValueError("step must be non-negative")
    return schedule.eps_end + (schedule.eps_start - schedule.eps_end) * math.exp(-step / schedule.tau)


@dataclass(frozen=True)
class AgentConfig:
    algo: str = "ddqn"  # "dqn" (plain head) or "ddqn" (dueling head)
    gamma: float = 0.8
    batch_size: int = 32
    buffer_capacity: int = 15_000
    target_sync_every: int = 50
    learn_start: int = 500
    hidden: tuple[int, ...] = (128, 128)
    aggregation: str = "max"
    optimizer: str = "adam"
    learning_rate: float = 5e-4

    def __post_init__(self):
        if self.algo not in ("dqn", "ddqn"):
            raise ValueError(f"unknown algo {self.algo!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.batch_size <= self.buffer_capacity:
            raise ValueError("need 0 < batch_size <= buffer_capacity")
        if self.target_sync_every <= 0:
            raise ValueError("target_sync_every must be positive")


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored as parallel arrays."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a: int, r: float, s_next, done: bool) -> None:
        i = self.cursor
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered(self) -> "Batch":
        """All stored transitions, oldest first."""
        start = self.cursor if self.size == self.capacity else 0
        idx = (start + np.arange(self.size)) % self.capacity
        return self._take(idx)

    def sample(self, batch_size: int, rng: np.random.Generator) -> "Batch":
        return self._take(rng.integers(0, self.size, size=batch_size))

    def _take(self, idx) -> "Batch":
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.a)


def select_action(net: QFunctionNet, obs, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties go to the lowest action code."""
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(net.n_actions))
    q, _ = q_values(net, obs)
    return int(np.argmax(q))


def bellman_target(batch: Batch, target_net: QFunctionNet, gamma: float) -> np.ndarray:
    q_next, _ = q_values(target_net, batch.s_next)
    bootstrap = np.where(batch.done, 0.0, q_next.max(axis=1))
    return batch.r + gamma * bootstrap


def td_update(net: QFunctionNet, target_net: QFunctionNet, batch: Batch,
              opt: OptimizerState, gamma: float) -> tuple[float, float]:
    """One gradient step on the mean squared TD error of ``batch``.

    Returns (mean squared TD error, mean absolute TD error) measured before
    the step.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    y = bellman_target(batch, target_net, gamma)
    q, cache = q_values(net, batch.s)
    rows = np.arange(len(batch))
    td = y - q[rows, batch.a]
    dL_dq = np.zeros_like(q)
    dL_dq[rows, batch.a] = -2.0 * td / len(batch)
    optimizer_step(net.params, backward(net, cache, dL_dq), opt)
    return float(np.mean(td * td)), float(np.mean(np.abs(td)))


def sync_target(net: QFunctionNet) -> QFunctionNet:
    return net.copy()


def discounted_return(rewards, gamma: float) -> float:
    total, scale = 0.0, 1.0
    for r in rewards:
        total += scale * r
        scale *= gamma
    return total


class DQNAgent:
    """Online network, target network, replay buffer and optimizer as one unit.

    ``observe`` stores a transition and, once ``learn_start`` transitions
    are buffered, performs one TD update per call.
    """

    def __init__(self, obs_dim: int, n_actions: int, cfg: AgentConfig,
                 rng: np.random.Generator, schedule: EpsilonSchedule = EpsilonSchedule()):
        self.cfg = cfg
        self.schedule = schedule
        self.rng = rng
        self.net = init_network((obs_dim, *cfg.hidden), n_actions, dueling=cfg.algo == "ddqn",
                                rng=rng, aggregation=cfg.aggregation)
        self.target_net = sync_target(self.net)
        self.opt = OptimizerState(kind=cfg.optimizer, learning_rate=cfg.learning_rate)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim)
        self.global_step = 0
        self.grad_steps = 0

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.global_step, self.schedule)

    def act(self, obs) -> int:
        return select_action(self.net, obs, self.epsilon, self.rng)

    def observe(self, s, a, r, s_next, done) -> tuple[float, float] | None:
        self.buffer.add(s, a, r, s_next, done)
        self.global_step += 1
        if len(self.buffer) < max(self.cfg.learn_start, 1):
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        stats = td_update(self.net, self.target_net, batch, self.opt, self.cfg.gamma)
        self.grad_steps += 1
        if self.grad_steps % self.cfg.target_sync_every == 0:
            self.target_net = sync_target(self.net)
        return stats
