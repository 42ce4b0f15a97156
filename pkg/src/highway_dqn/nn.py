"""Dense Q-networks with hand-written forward and backward passes.

Parameters live in an ordered ``dict`` of float64 arrays keyed by name
(``trunk.0.weight``, ``value.bias``, ...); gradients and optimizer moments
use the same keys. Weight matrices are stored as (fan_out, fan_in).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class QFunctionNet:
    layer_dims: tuple[int, ...]
    n_actions: int = 5
    dueling: bool = False
    aggregation: str = "max"  # dueling only: "max" or "mean"
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_trunk(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def head_names(self) -> tuple[str, ...]:
        return ("value", "advantage") if self.dueling else ("head",)

    def copy(self) -> "QFunctionNet":
        return QFunctionNet(self.layer_dims, self.n_actions, self.dueling, self.aggregation,
                            {k: v.copy() for k, v in self.params.items()})

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            shapes[f"trunk.{i}.weight"] = (fan_out, fan_in)
            shapes[f"trunk.{i}.bias"] = (fan_out,)
        width = self.layer_dims[-1]
        outs = {"value": 1, "advantage": self.n_actions, "head": self.n_actions}
        for name in self.head_names:
            shapes[f"{name}.weight"] = (outs[name], width)
            shapes[f"{name}.bias"] = (outs[name],)
        return shapes


def init_network(layer_dims, n_actions: int = 5, dueling: bool = False,
                 rng: np.random.Generator | None = None, aggregation: str = "max") -> QFunctionNet:
    """Glorot-uniform weights, zero biases.

    ``layer_dims`` lists the input width followed by each hidden width; an
    input-only list gives a linear model whose heads read the input directly.
    """
    layer_dims = tuple(int(d) for d in layer_dims)
    if not layer_dims or min(layer_dims) <= 0 or n_actions <= 0:
        raise ValueError(f"invalid network dimensions {layer_dims} -> {n_actions}")
    if aggregation not in ("max", "mean"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    rng = rng if rng is not None else np.random.default_rng()
    net = QFunctionNet(layer_dims, n_actions, dueling, aggregation)
    for name, shape in net.expected_shapes().items():
        if name.endswith(".weight"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            net.params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            net.params[name] = np.zeros(shape)
    return net


def _linear(net, name, x):
    return x @ net.params[f"{name}.weight"].T + net.params[f"{name}.bias"]


def q_values(net: QFunctionNet, obs) -> tuple[np.ndarray, dict]:
    """Q-vector(s) for one observation or a batch of them.

    Returns the Q values (shape ``(n_actions,)`` or ``(B, n_actions)``) and
    a cache for :func:`backward`. With a dueling head the value and
    advantage streams are recombined as ``V + A - max_a A`` (or the mean).
    """
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.layer_dims[0]:
        raise ValueError(f"observation width {x.shape[1]} != network input {net.layer_dims[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite observation")

    inputs, pre = [], []
    h = x
    for i in range(net.n_trunk):
        inputs.append(h)
        z = _linear(net, f"trunk.{i}", h)
        pre.append(z)
        h = np.maximum(z, 0.0)
    cache = {"inputs": inputs, "pre": pre, "features": h, "single": single, "net_id": id(net)}

    if net.dueling:
        value = _linear(net, "value", h)
        adv = _linear(net, "advantage", h)
        if net.aggregation == "max":
            best = np.argmax(adv, axis=1)  # lowest index on ties
            cache["argmax"] = best
            offset = adv[np.arange(len(adv)), best][:, None]
        else:
            offset = adv.mean(axis=1, keepdims=True)
        q = value + (adv - offset)
    else:
        q = _linear(net, "head", h)
    return (q[0] if single else q), cache


def backward(net: QFunctionNet, cache: dict, dL_dq) -> dict[str, np.ndarray]:
    """Gradients of ``sum(q * dL_dq)`` with respect to every parameter.

    Batched caches sum the per-sample gradients. The max aggregation routes
    its subgradient through the advantage argmax recorded in the cache.
    """
    if cache.get("net_id") != id(net):
        raise ValueError("cache was produced by a different network")
    g = np.atleast_2d(np.asarray(dL_dq, dtype=np.float64))
    h = cache["features"]
    if g.shape != (h.shape[0], net.n_actions):
        raise ValueError(f"dL_dq shape {g.shape} does not match batch/actions")
    grads: dict[str, np.ndarray] = {}

    if net.dueling:
        g_value = g.sum(axis=1, keepdims=True)
        if net.aggregation == "max":
            g_adv = g.copy()
            g_adv[np.arange(len(g)), cache["argmax"]] -= g_value[:, 0]
        else:
            g_adv = g - g_value / net.n_actions
        heads = (("value", g_value), ("advantage", g_adv))
    else:
        heads = (("head", g),)

    dh = np.zeros_like(h)
    for name, gout in heads:
        grads[f"{name}.weight"] = gout.T @ h
        grads[f"{name}.bias"] = gout.sum(axis=0)
        dh += gout @ net.params[f"{name}.weight"]

    for i in reversed(range(net.n_trunk)):
        dz = dh * (cache["pre"][i] > 0.0)
        grads[f"trunk.{i}.weight"] = dz.T @ cache["inputs"][i]
        grads[f"trunk.{i}.bias"] = dz.sum(axis=0)
        if i:
            dh = dz @ net.params[f"trunk.{i}.weight"]
    return {k: grads[k] for k in net.params}


@dataclass
class OptimizerState:
    kind: str = "adam"  # or "sgd"
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                   opt: OptimizerState) -> None:
    """Apply one descent step to ``params`` in place."""
    if params.keys() != grads.keys():
        raise ValueError("parameter and gradient names differ")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape for {name}")
    opt.step += 1
    if opt.kind == "sgd":
        for name, g in grads.items():
            params[name] -= opt.learning_rate * g
        return
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    for name, g in grads.items():
        m = opt.m.setdefault(name, np.zeros_like(g))
        v = opt.v.setdefault(name, np.zeros_like(g))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.eps)
