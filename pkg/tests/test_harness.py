import json
from dataclasses import replace

import numpy as np
import pytest

from highway_dqn import harness
from highway_dqn.config import ConfigError, RunConfig, load_config, parse_config_text
from highway_dqn.harness import (
    COMPARISON_HEADER,
    METRICS_HEADER,
    Checkpoint,
    CheckpointFieldError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    compare,
    evaluate,
    load_checkpoint,
    moving_average,
    read_metrics,
    save_checkpoint,
    train,
    window_mean,
)
from highway_dqn.nn import OptimizerState, init_network, q_values

SMALL = RunConfig(episodes=12, hidden=(16,), learn_start=40, batch_size=8,
                  record_wall_time=False, checkpoint_every=5)


# ---------------------------------------------------------------- config

def test_config_text_round_trip():
    cfg = replace(RunConfig(), hidden=(64, 32), lane_change_prob=0.25, record_wall_time=False)
    assert RunConfig(**parse_config_text(cfg.to_text())) == cfg


def test_config_comments_and_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n\nepisodes = 7   # trailing\nspawn_gap_range = 25, 70\n")
    cfg = load_config(path)
    assert cfg.episodes == 7 and cfg.spawn_gap_range == (25.0, 70.0)
    assert cfg.gamma == 0.8 and cfg.eps_tau == 6000.0 and cfg.n_per_lane == 4


@pytest.mark.parametrize("text", ["bogus_key = 1", "episodes = many", "episodes",
                                  "episodes = 1\nepisodes = 2", "gamma = 1.5",
                                  "spawn_gap_range = 1, 2, 3"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        RunConfig(**parse_config_text(text))


# ---------------------------------------------------------------- checkpoints

def make_checkpoint(rng, dueling=True):
    cfg = RunConfig(hidden=(16, 8))
    net = init_network(cfg.network_dims(), 5, dueling, rng=rng)
    for p in net.params.values():
        p += rng.normal(size=p.shape) * 1e-3
    opt = OptimizerState("adam", 1e-3, step=3, m={k: rng.normal(size=v.shape) for k, v in net.params.items()},
                         v={k: rng.random(size=v.shape) for k, v in net.params.items()})
    return Checkpoint(cfg, net, opt, global_step=123)


def test_checkpoint_round_trip_is_bitwise(tmp_path, rng):
    ckpt = make_checkpoint(rng)
    save_checkpoint(tmp_path / "c.json", ckpt)
    loaded = load_checkpoint(tmp_path / "c.json")
    x = rng.normal(size=(100, 26))
    assert np.array_equal(q_values(ckpt.net, x)[0], q_values(loaded.net, x)[0])
    assert loaded.config == ckpt.config and loaded.global_step == 123
    assert all(np.array_equal(ckpt.opt.m[k], loaded.opt.m[k]) for k in ckpt.opt.m)
    assert loaded.opt.step == 3


def test_truncated_checkpoint(tmp_path, rng):
    path = tmp_path / "c.json"
    save_checkpoint(path, make_checkpoint(rng))
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointTruncatedError):
        load_checkpoint(path)


def test_version_mismatch(tmp_path, rng):
    path = tmp_path / "c.json"
    save_checkpoint(path, make_checkpoint(rng))
    doc = json.loads(path.read_text())
    doc["format_version"] += 1
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_field_count_mismatch(tmp_path, rng):
    path = tmp_path / "c.json"
    save_checkpoint(path, make_checkpoint(rng))
    doc = json.loads(path.read_text())
    doc["params"]["value.bias"]["values"].append(0.0)
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointFieldError):
        load_checkpoint(path)
    del doc["params"]["value.bias"]
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointFieldError):
        load_checkpoint(path)


def test_checkpoint_rejected_for_other_network_dims(rng):
    ckpt = make_checkpoint(rng)
    with pytest.raises(CheckpointFieldError):
        evaluate(ckpt.net, RunConfig(hidden=(32,)), 1, 0)


# ---------------------------------------------------------------- training

def test_degenerate_run_without_updates(tmp_path):
    cfg = replace(SMALL, episodes=1, learn_start=10**9)
    history, agent = train(cfg, tmp_path)
    rows = read_metrics(tmp_path / "metrics.csv")
    assert len(rows) == 1 and np.isnan(rows[0]["mean_td_error"])
    fresh = init_network(cfg.network_dims(), 5, True, rng=harness.seed_stream(cfg.seed, harness.AGENT_STREAM))
    assert all(np.array_equal(fresh.params[k], agent.net.params[k]) for k in fresh.params)
    assert (tmp_path / "checkpoint.json").exists()


def test_metrics_file_format(tmp_path):
    history, _ = train(SMALL, tmp_path)
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert len(lines) == 1 + SMALL.episodes
    rows = read_metrics(tmp_path / "metrics.csv")
    assert [r["episode"] for r in rows] == list(range(SMALL.episodes))
    assert all(r["collided"] in (0, 1) and r["total_reward"] <= 20 for r in rows)
    assert rows[-1]["epsilon"] < rows[0]["epsilon"]
    assert not np.isnan(rows[-1]["mean_td_error"])
    assert sorted(p.name for p in tmp_path.glob("checkpoint*.json")) == [
        "checkpoint.json", "checkpoint_ep0005.json", "checkpoint_ep0010.json"]
    # floats carry 17 significant digits
    assert float(lines[1].split(",")[1]) == history[0].total_reward


def test_training_is_byte_reproducible(tmp_path):
    train(SMALL, tmp_path / "a")
    train(SMALL, tmp_path / "b")
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


def test_wall_time_only_column_that_varies(tmp_path):
    cfg = replace(SMALL, episodes=3, record_wall_time=True)
    a, _ = train(cfg)
    b, _ = train(cfg)
    strip = lambda h: [m.csv_row()[:-1] for m in h]
    assert strip(a) == strip(b)
    assert all(m.wall_ms > 0 for m in a)


# ---------------------------------------------------------------- evaluation

def test_zero_checkpoint_always_turns_left(rng, monkeypatch):
    cfg = RunConfig(hidden=(8,))
    net = init_network(cfg.network_dims(), 5, True, rng=rng)
    for p in net.params.values():
        p[:] = 0.0
    actions = []
    original = harness.HighwayEnv.step

    def spy(self, action):
        actions.append(int(action))
        return original(self, action)

    monkeypatch.setattr(harness.HighwayEnv, "step", spy)
    evaluate(net, cfg, 3, seed=1)
    assert actions and set(actions) == {0}


def test_eval_is_deterministic(rng):
    ckpt = make_checkpoint(rng)
    a = evaluate(ckpt.net, ckpt.config, 4, seed=8)
    b = evaluate(ckpt.net, ckpt.config, 4, seed=8)
    assert a == b
    assert set(a) >= {"mean_return", "collision_rate", "mean_speed_mps", "mean_distance_m"}
    assert len(a["rows"]) == 4


def test_eval_seeds_are_disjoint_from_training():
    train_seeds = harness.episode_seeds(3, harness.ENV_STREAM, 100)
    eval_seeds = harness.episode_seeds(3, harness.EVAL_STREAM, 100)
    assert not set(train_seeds) & set(eval_seeds)


# ---------------------------------------------------------------- comparison

def test_compare_rows_and_cumulative_reward(tmp_path):
    cfg = replace(SMALL, episodes=5)
    result = compare(cfg, [4], tmp_path)
    rows = read_metrics(tmp_path / "comparison.csv")
    assert (tmp_path / "comparison.csv").read_text().splitlines()[0] == ",".join(COMPARISON_HEADER)
    assert len(rows) == 10
    for algo in ("dqn", "ddqn"):
        mine = [r for r in rows if r["algo"] == algo]
        assert [r["episode"] for r in mine] == list(range(5))
        np.testing.assert_allclose([r["cumulative_reward"] for r in mine],
                                   np.cumsum([r["total_reward"] for r in mine]), rtol=1e-15)
    assert {s["algo"] for s in result["summary"]} == {"dqn", "ddqn"}
    assert not result["failures"]
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "comparison_smoothed.csv").exists()
    assert (tmp_path / "ddqn_seed4" / "checkpoint.json").exists()


def test_compare_parallel_matches_sequential(tmp_path):
    cfg = replace(SMALL, episodes=3, record_wall_time=False)
    compare(cfg, [4, 5], tmp_path / "seq")
    compare(cfg, [4, 5], tmp_path / "par", jobs=2)
    for name in ("comparison.csv", "comparison_smoothed.csv", "summary.csv"):
        assert (tmp_path / "seq" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


def test_compare_uses_identical_environment_seeds(tmp_path, monkeypatch):
    seen = {}
    original = harness.HighwayEnv.reset
    current = {}

    def spy(self, seed):
        seen.setdefault(current["algo"], []).append(seed)
        return original(self, seed)

    original_train = harness.train

    def tracking_train(config, out_dir=None):
        current["algo"] = config.algo
        return original_train(config, out_dir)

    monkeypatch.setattr(harness.HighwayEnv, "reset", spy)
    monkeypatch.setattr(harness, "train", tracking_train)
    compare(replace(SMALL, episodes=6), [9], tmp_path)
    assert seen["dqn"] == seen["ddqn"] and len(seen["dqn"]) == 6


def test_compare_records_failures(tmp_path, monkeypatch):
    original_train = harness.train

    def flaky(config, out_dir=None):
        if config.algo == "dqn":
            raise RuntimeError("boom")
        return original_train(config, out_dir)

    monkeypatch.setattr(harness, "train", flaky)
    result = compare(replace(SMALL, episodes=2), [1], tmp_path)
    assert [f[:2] for f in result["failures"]] == [("dqn", 1)]
    assert [s["algo"] for s in result["summary"]] == ["ddqn"]
    assert "boom" in (tmp_path / "failures.txt").read_text()


def test_moving_average_and_windows():
    values = [np.nan, np.nan, 1.0, 3.0, 5.0]
    np.testing.assert_allclose(moving_average(values, window=2), [np.nan, np.nan, 1, 2, 4])
    series = np.arange(20.0)
    assert window_mean(series, first=True) == 0.5
    assert window_mean(series, first=False) == 18.5
