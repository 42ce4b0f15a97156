"""Training, evaluation and DQN/DDQN comparison runs with CSV and checkpoint output."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .agent import DQNAgent, select_action
from .config import RunConfig, coerce
from .env import N_ACTIONS, HighwayEnv
from .nn import OptimizerState, QFunctionNet

log = logging.getLogger(__name__)

METRICS_HEADER = ["episode", "total_reward", "steps", "distance_m", "mean_speed_mps",
                  "collided", "epsilon", "mean_td_error", "wall_ms"]
COMPARISON_HEADER = ["algo", "seed", *METRICS_HEADER, "cumulative_reward"]
CHECKPOINT_VERSION = 1
SMOOTHING_WINDOW = 100

# children of the master SeedSequence
ENV_STREAM, AGENT_STREAM, EVAL_STREAM = 0, 1, 2


@dataclass
class EpisodeMetrics:
    episode: int
    total_reward: float
    steps: int
    distance_m: float
    mean_speed_mps: float
    collided: bool
    epsilon: float
    mean_td_error: float  # nan when no update happened in the episode
    wall_ms: float

    def csv_row(self) -> list[str]:
        return [str(self.episode), fmt(self.total_reward), str(self.steps), fmt(self.distance_m),
                fmt(self.mean_speed_mps), str(int(self.collided)), fmt(self.epsilon),
                "" if math.isnan(self.mean_td_error) else fmt(self.mean_td_error),
                fmt(self.wall_ms)]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def seed_stream(seed: int, which: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[which])


def episode_seeds(seed: int, which: int, n: int) -> list[int]:
    """Per-episode environment seeds; independent of the learning algorithm."""
    return [int(s) for s in seed_stream(seed, which).integers(0, 2**63 - 1, size=n)]


def moving_average(values, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing moving average that skips NaNs (NaN until a value is seen)."""
    values = np.asarray(values, dtype=float)
    out = np.full(len(values), np.nan)
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1): i + 1]
        chunk = chunk[~np.isnan(chunk)]
        if len(chunk):
            out[i] = chunk.mean()
    return out


# ---------------------------------------------------------------- metrics I/O

class MetricsWriter:
    """Append-only metrics CSV, flushed after every row so partial runs stay parseable."""

    def __init__(self, path, header=METRICS_HEADER):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(header)
        self.fh.flush()

    def write(self, row: list[str]) -> None:
        self.writer.writerow(row)
        self.fh.flush()

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[dict]:
    """Rows of a metrics or comparison CSV with numeric columns converted."""
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, value in raw.items():
                if key == "algo":
                    row[key] = value
                elif key in ("episode", "steps", "collided", "seed"):
                    row[key] = int(value)
                else:
                    row[key] = float(value) if value != "" else math.nan
            rows.append(row)
    return rows


# ---------------------------------------------------------------- checkpoints

class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointFieldError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    net: QFunctionNet
    opt: OptimizerState
    global_step: int = 0
    version: int = CHECKPOINT_VERSION


def _encode_arrays(arrays: dict[str, np.ndarray]) -> dict:
    return {k: {"shape": list(a.shape), "values": a.ravel().tolist()} for k, a in arrays.items()}


def _decode_arrays(doc: dict, expected: dict[str, tuple] | None = None) -> dict[str, np.ndarray]:
    if expected is not None and set(doc) != set(expected):
        raise CheckpointFieldError(
            f"parameter names {sorted(doc)} do not match network {sorted(expected)}")
    out = {}
    for name, entry in doc.items():
        shape = tuple(entry["shape"])
        values = entry["values"]
        if expected is not None and shape != expected[name]:
            raise CheckpointFieldError(f"{name}: shape {shape} != expected {expected[name]}")
        if len(values) != math.prod(shape):
            raise CheckpointFieldError(f"{name}: {len(values)} values for shape {shape}")
        out[name] = np.array(values, dtype=np.float64).reshape(shape)
    return out


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write a JSON checkpoint.

    Floats are written with Python's shortest round-trip repr, so every
    float64 parameter is restored exactly.
    """
    net, opt = ckpt.net, ckpt.opt
    doc = {
        "format_version": ckpt.version,
        "global_step": ckpt.global_step,
        "config": ckpt.config.to_dict(),
        "network": {"layer_dims": list(net.layer_dims), "n_actions": net.n_actions,
                    "dueling": net.dueling, "aggregation": net.aggregation},
        "params": _encode_arrays(net.params),
        "optimizer": {"kind": opt.kind, "learning_rate": opt.learning_rate, "beta1": opt.beta1,
                      "beta2": opt.beta2, "eps": opt.eps, "step": opt.step,
                      "m": _encode_arrays(opt.m), "v": _encode_arrays(opt.v)},
    }
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointTruncatedError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if not isinstance(doc, dict):
        raise CheckpointFieldError(f"{path}: top level is not an object")
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint format {version!r}, this build reads {CHECKPOINT_VERSION}")
    try:
        config = RunConfig(**coerce(doc["config"]))
        spec = doc["network"]
        net = QFunctionNet(tuple(spec["layer_dims"]), spec["n_actions"], spec["dueling"],
                           spec["aggregation"])
        net.params = _decode_arrays(doc["params"], net.expected_shapes())
        o = doc["optimizer"]
        opt = OptimizerState(o["kind"], o["learning_rate"], o["beta1"], o["beta2"], o["eps"],
                             o["step"], _decode_arrays(o["m"]), _decode_arrays(o["v"]))
        return Checkpoint(config, net, opt, doc["global_step"], version)
    except (KeyError, TypeError) as exc:
        raise CheckpointFieldError(f"{path}: missing or malformed field: {exc}") from exc


def check_compatible(net: QFunctionNet, config: RunConfig) -> None:
    expected = config.network_dims()
    if net.layer_dims != expected or net.n_actions != N_ACTIONS:
        raise CheckpointFieldError(
            f"checkpoint network {net.layer_dims}->{net.n_actions} does not match "
            f"config {expected}->{N_ACTIONS}")


# ---------------------------------------------------------------- training

def run_episode(env: HighwayEnv, seed: int, act, learn=None):
    """Play one episode. Returns (total reward, steps, last info, list of |TD| means)."""
    obs = env.reset(seed)
    total, steps, td = 0.0, 0, []
    while True:
        action = act(obs)
        result = env.step(action)
        if learn is not None:
            stats = learn(obs, action, result.reward, result.observation, result.done)
            if stats is not None:
                td.append(stats[1])
        total += result.reward
        steps += 1
        obs = result.observation
        if result.done:
            return total, steps, result.info, td


def train(config: RunConfig, out_dir=None) -> tuple[list[EpisodeMetrics], DQNAgent]:
    """Run the full training loop.

    With ``out_dir`` set, writes ``metrics.csv``, ``config.txt``, periodic
    ``checkpoint_epNNNN.json`` files and a final ``checkpoint.json``.
    """
    env = HighwayEnv(config.env_config())
    agent = DQNAgent(env.cfg.obs_dim, N_ACTIONS, config.agent_config(),
                     seed_stream(config.seed, AGENT_STREAM), config.schedule())
    seeds = episode_seeds(config.seed, ENV_STREAM, config.episodes)
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(config.to_text())
        writer = MetricsWriter(out_dir / "metrics.csv")

    def snapshot(path):
        save_checkpoint(path, Checkpoint(config, agent.net, agent.opt, agent.global_step))

    history = []
    try:
        for ep, seed in enumerate(seeds):
            t0 = time.perf_counter()
            total, steps, info, td = run_episode(env, seed, agent.act, agent.observe)
            wall = (time.perf_counter() - t0) * 1e3 if config.record_wall_time else 0.0
            m = EpisodeMetrics(ep, total, steps, info["distance_m"], info["mean_speed_mps"],
                               info["collided"], agent.epsilon,
                               float(np.mean(td)) if td else math.nan, wall)
            history.append(m)
            if writer is not None:
                writer.write(m.csv_row())
                if (ep + 1) % config.checkpoint_every == 0:
                    snapshot(out_dir / f"checkpoint_ep{ep + 1:04d}.json")
            if (ep + 1) % 100 == 0:
                recent = history[-100:]
                log.info("%s seed=%d ep=%d return(100)=%.3f collisions(100)=%.2f eps=%.3f",
                         config.algo, config.seed, ep + 1,
                         np.mean([h.total_reward for h in recent]),
                         np.mean([h.collided for h in recent]), agent.epsilon)
        if writer is not None:
            snapshot(out_dir / "checkpoint.json")
    finally:
        if writer is not None:
            writer.close()
    return history, agent


# ---------------------------------------------------------------- evaluation

def evaluate(net: QFunctionNet, config: RunConfig, episodes: int, seed: int) -> dict:
    """Greedy (epsilon = 0) rollouts on seeds disjoint from the training stream."""
    check_compatible(net, config)
    env = HighwayEnv(config.env_config())

    def greedy(obs):
        return select_action(net, obs, 0.0, None)

    rows = []
    for ep, s in enumerate(episode_seeds(seed, EVAL_STREAM, episodes)):
        total, steps, info, _ = run_episode(env, s, greedy)
        rows.append({"episode": ep, "total_reward": total, "steps": steps,
                     "distance_m": info["distance_m"], "mean_speed_mps": info["mean_speed_mps"],
                     "collided": int(info["collided"])})
    return {
        "episodes": episodes,
        "mean_return": float(np.mean([r["total_reward"] for r in rows])) if rows else math.nan,
        "collision_rate": float(np.mean([r["collided"] for r in rows])) if rows else math.nan,
        "mean_speed_mps": float(np.mean([r["mean_speed_mps"] for r in rows])) if rows else math.nan,
        "mean_distance_m": float(np.mean([r["distance_m"] for r in rows])) if rows else math.nan,
        "rows": rows,
    }


# ---------------------------------------------------------------- comparison

def _train_cell(args):
    config, out_dir = args
    history, _ = train(config, out_dir)
    return history


def compare(config: RunConfig, seeds: list[int], out_dir, jobs: int = 1) -> dict:
    """Train DQN and DDQN on each seed and write the comparison tables.

    Returns ``{"rows": ..., "summary": ..., "failures": [(algo, seed, error)]}``.
    Failed cells are excluded from the summary.
    """
    if not seeds:
        raise ValueError("compare needs at least one seed")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [(algo, seed) for seed in seeds for algo in ("dqn", "ddqn")]
    tasks = [(RunConfig(**{**asdict(config), "algo": algo, "seed": seed}),
              out_dir / f"{algo}_seed{seed}") for algo, seed in cells]

    results: dict[tuple[str, int], list[EpisodeMetrics]] = {}
    failures = []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_cell, t) for t in tasks]
            for cell, fut in zip(cells, futures):
                try:
                    results[cell] = fut.result()
                except Exception as exc:  # recorded, run continues
                    failures.append((*cell, repr(exc)))
    else:
        for cell, task in zip(cells, tasks):
            try:
                results[cell] = _train_cell(task)
            except Exception as exc:
                log.exception("cell %s failed", cell)
                failures.append((*cell, repr(exc)))

    rows, smoothed_rows, curves = [], [], {}
    with MetricsWriter(out_dir / "comparison.csv", COMPARISON_HEADER) as w, \
            MetricsWriter(out_dir / "comparison_smoothed.csv",
                          ["algo", "seed", "episode", "smoothed_total_reward",
                           "smoothed_td_error"]) as ws:
        for algo, seed in cells:
            if (algo, seed) not in results:
                continue
            history = results[algo, seed]
            cumulative = np.cumsum([m.total_reward for m in history])
            sm_reward = moving_average([m.total_reward for m in history])
            sm_td = moving_average([m.mean_td_error for m in history])
            curves[algo, seed] = {"cumulative": cumulative, "reward": sm_reward, "td": sm_td}
            for m, c, r, t in zip(history, cumulative, sm_reward, sm_td):
                w.write([algo, str(seed), *m.csv_row(), fmt(c)])
                ws.write([algo, str(seed), str(m.episode), fmt(r), "" if np.isnan(t) else fmt(t)])
                rows.append({"algo": algo, "seed": seed, **asdict(m), "cumulative_reward": c})

    summary = []
    for algo in ("dqn", "ddqn"):
        mine = [curves[a, s] for a, s in cells if a == algo and (a, s) in curves]
        if not mine:
            continue
        summary.append({
            "algo": algo,
            "n_seeds": len(mine),
            "final_cumulative_reward": float(np.mean([c["cumulative"][-1] for c in mine])),
            "final_smoothed_reward": float(np.mean([c["reward"][-1] for c in mine])),
            "td_error_first_window": float(np.mean([window_mean(c["td"], first=True) for c in mine])),
            "td_error_last_window": float(np.mean([window_mean(c["td"], first=False) for c in mine])),
        })
    with MetricsWriter(out_dir / "summary.csv", list(summary[0]) if summary else ["algo"]) as w:
        for s in summary:
            w.write([s["algo"], str(s["n_seeds"])] + [fmt(v) for k, v in s.items()
                                                      if k not in ("algo", "n_seeds")])
    if failures:
        with open(out_dir / "failures.txt", "w") as fh:
            for algo, seed, err in failures:
                fh.write(f"{algo}\t{seed}\t{err}\n")
    return {"rows": rows, "summary": summary, "failures": failures, "curves": curves}


def window_mean(series, first: bool, fraction: float = 0.1) -> float:
    """NaN-skipping mean of the first or last ``fraction`` of a series."""
    series = np.asarray(series, dtype=float)
    n = max(1, int(round(len(series) * fraction)))
    chunk = series[:n] if first else series[-n:]
    chunk = chunk[~np.isnan(chunk)]
    return float(chunk.mean()) if len(chunk) else math.nan
