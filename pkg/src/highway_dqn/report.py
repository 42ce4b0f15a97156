"""Render training and comparison figures from metrics CSVs."""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import MetricsWriter, fmt, moving_average, read_metrics, window_mean  # noqa: E402

ALGO_STYLE = {"dqn": {"color": "tab:blue", "label": "DQN"},
              "ddqn": {"color": "tab:red", "label": "Dueling DQN"}}


def _column(rows, key):
    return np.array([r[key] for r in rows], dtype=float)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training(rows, out_dir: Path, tag: str = "") -> list[Path]:
    episodes = _column(rows, "episode")
    reward = _column(rows, "total_reward")
    paths = []

    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(episodes, reward, color="0.75", lw=0.6, label="episode")
    ax.plot(episodes, moving_average(reward), color="tab:red", lw=1.5, label="moving average (100)")
    ax.set_xlabel("episode")
    ax.set_ylabel("total reward")
    ax.legend(loc="lower right", frameon=False)
    paths.append(out_dir / f"total_reward{tag}.png")
    _save(fig, paths[-1])

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 5.0), sharex=True)
    dist = _column(rows, "distance_m")
    speed = _column(rows, "mean_speed_mps")
    ax1.plot(episodes, dist, color="0.75", lw=0.6)
    ax1.plot(episodes, moving_average(dist), color="tab:green", lw=1.5)
    ax1.set_ylabel("length (m)")
    ax2.plot(episodes, speed, color="0.75", lw=0.6)
    ax2.plot(episodes, moving_average(speed), color="tab:purple", lw=1.5)
    ax2.set_ylabel("average speed (m/s)")
    ax2.set_xlabel("episode")
    paths.append(out_dir / f"distance_speed{tag}.png")
    _save(fig, paths[-1])
    return paths


def plot_comparison(rows, out_dir: Path) -> list[Path]:
    by_algo: dict[str, dict[int, list]] = {}
    for r in rows:
        by_algo.setdefault(r["algo"], {}).setdefault(r["seed"], []).append(r)
    paths = []

    for key, ylabel, fname, transform in (
        ("mean_td_error", "mean |TD error| (smoothed)", "q_error.png", moving_average),
        ("cumulative_reward", "cumulative reward", "cumulative_reward.png", lambda x: x),
    ):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        for algo, seeds in sorted(by_algo.items()):
            curves = np.array([transform(_column(v, key)) for v in seeds.values()])
            style = ALGO_STYLE.get(algo, {"label": algo})
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns before learning
                mean = np.nanmean(curves, axis=0)
            ax.plot(mean, lw=1.5, **style)
        ax.set_xlabel("episode")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        paths.append(out_dir / fname)
        _save(fig, paths[-1])
    return paths


def summarize(rows) -> list[dict]:
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r.get("algo", ""), r.get("seed", "")), []).append(r)
    out = []
    for (algo, seed), g in groups.items():
        reward = _column(g, "total_reward")
        td = moving_average(_column(g, "mean_td_error"))
        tail = g[-100:]
        out.append({
            "algo": algo, "seed": seed, "episodes": len(g),
            "final_moving_avg_reward": moving_average(reward)[-1],
            "final_cumulative_reward": reward.sum(),
            "collision_rate_last100": np.mean([r["collided"] for r in tail]),
            "mean_speed_last100": np.mean([r["mean_speed_mps"] for r in tail]),
            "td_error_first_window": window_mean(td, first=True),
            "td_error_last_window": window_mean(td, first=False),
        })
    return out


def render_report(csv_path, out_dir) -> list[Path]:
    """Figures plus ``report_summary.csv`` for a metrics or comparison CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_metrics(csv_path)
    if not rows:
        raise ValueError(f"{csv_path}: no metrics rows")
    paths = []
    if "algo" in rows[0]:
        paths += plot_comparison(rows, out_dir)
        for r_algo in sorted({r["algo"] for r in rows}):
            first_seed = min(r["seed"] for r in rows if r["algo"] == r_algo)
            subset = [r for r in rows if r["algo"] == r_algo and r["seed"] == first_seed]
            paths += plot_training(subset, out_dir, tag=f"_{r_algo}_seed{first_seed}")
    else:
        paths += plot_training(rows, out_dir)

    summary = summarize(rows)
    path = out_dir / "report_summary.csv"
    with MetricsWriter(path, list(summary[0])) as w:
        for s in summary:
            w.write([str(v) if isinstance(v, (str, int)) else fmt(v) for v in s.values()])
    return paths + [path]
