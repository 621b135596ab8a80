"""Fixed actor/critic topologies with batch normalization and analytic gradients.

Actor:  state -> fc1 -> bn1 -> relu -> fc2 -> tanh -> out -> tanh
Critic: state -> state_fc -> state_bn --+
                                        +-> concat -> relu -> fc2 -> relu -> out
        action -> action_fc -> action_bn +

The critic takes one input matrix whose columns are ``[state | action]``.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from app.errors import InvalidArgumentError, NumericOverflowError
from app.numerics.linalg import as_real_matrix

LOGGER = logging.getLogger("starris.numerics")

ACTOR = "actor"
CRITIC = "critic"
TRAIN = "train"
EVAL = "eval"

# Actor outputs and explored actions are clipped to [-ACTION_BOUND, ACTION_BOUND].
ACTION_BOUND = 1.0 - 1e-6


@dataclass
class MlpParameters:
    kind: str
    state_dim: int
    action_dim: int
    hidden: int
    hidden2: int
    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]
    activations: Dict[str, str]
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5

    @property
    def input_dim(self) -> int:
        return self.state_dim if self.kind == ACTOR else self.state_dim + self.action_dim

    @property
    def output_dim(self) -> int:
        return self.action_dim if self.kind == ACTOR else 1


    def names(self) -> List[str]:
        return list(self.params)

    def copy(self) -> "MlpParameters":
        return copy.deepcopy(self)


@dataclass
class Gradients:
    params: Dict[str, np.ndarray]
    inputs: np.ndarray

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.params.values()) and bool(
            np.all(np.isfinite(self.inputs))
        )

    def negated(self) -> "Gradients":
        return Gradients({name: -g for name, g in self.params.items()}, -self.inputs)


@dataclass
class ForwardCache:
    mode: str
    inputs: np.ndarray
    values: Dict[str, Any] = field(default_factory=dict)
    batch_stats: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def init_actor(
    state_dim: int,
    action_dim: int,
    hidden: int,
    rng: np.random.Generator,
    hidden2: int | None = None,
    final_scale: float = 3e-3,
    bn_momentum: float = 0.99,
    bn_eps: float = 1e-5,
) -> MlpParameters:
    hidden2 = hidden2 or hidden
    params: Dict[str, np.ndarray] = {}
    params["fc1.weight"], params["fc1.bias"] = _fan_in_uniform(rng, state_dim, hidden)
    params["bn1.gamma"] = np.ones(hidden)
    params["bn1.beta"] = np.zeros(hidden)
    params["fc2.weight"], params["fc2.bias"] = _fan_in_uniform(rng, hidden, hidden2)
    params["out.weight"], params["out.bias"] = _final_uniform(rng, hidden2, action_dim, final_scale)
    return MlpParameters(
        kind=ACTOR,
        state_dim=state_dim,
        action_dim=action_dim,
        hidden=hidden,
        hidden2=hidden2,
        params=params,
        buffers=_fresh_buffers(["bn1"], hidden),
        activations={"bn1": "relu", "fc2": "tanh", "out": "tanh"},
        bn_momentum=bn_momentum,
        bn_eps=bn_eps,
    )


def init_critic(
    state_dim: int,
    action_dim: int,
    hidden: int,
    rng: np.random.Generator,
    hidden2: int | None = None,
    final_scale: float = 3e-3,
    bn_momentum: float = 0.99,
    bn_eps: float = 1e-5,
) -> MlpParameters:
    hidden2 = hidden2 or hidden
    params: Dict[str, np.ndarray] = {}
    params["state_fc.weight"], params["state_fc.bias"] = _fan_in_uniform(rng, state_dim, hidden)
    params["state_bn.gamma"] = np.ones(hidden)
    params["state_bn.beta"] = np.zeros(hidden)
    params["action_fc.weight"], params["action_fc.bias"] = _fan_in_uniform(rng, action_dim, hidden)
    params["action_bn.gamma"] = np.ones(hidden)
    params["action_bn.beta"] = np.zeros(hidden)
    params["fc2.weight"], params["fc2.bias"] = _fan_in_uniform(rng, 2 * hidden, hidden2)
    params["out.weight"], params["out.bias"] = _final_uniform(rng, hidden2, 1, final_scale)
    return MlpParameters(
        kind=CRITIC,
        state_dim=state_dim,
        action_dim=action_dim,
        hidden=hidden,
        hidden2=hidden2,
        params=params,
        buffers=_fresh_buffers(["state_bn", "action_bn"], hidden),
        activations={"concat": "relu", "fc2": "relu", "out": "linear"},
        bn_momentum=bn_momentum,
        bn_eps=bn_eps,
    )


def mlp_forward(
    model: MlpParameters, inputs: np.ndarray, mode: str = EVAL, track_stats: bool = True
) -> np.ndarray:
    """Evaluate the network; train mode uses batch statistics and, by default,
    folds them into the running statistics."""
    output, _ = forward_pass(model, inputs, mode, track_stats=track_stats)
    return output


def forward_pass(
    model: MlpParameters, inputs: np.ndarray, mode: str = EVAL, track_stats: bool = True
) -> Tuple[np.ndarray, ForwardCache]:
    x = _check_inputs(model, inputs, mode)
    cache = ForwardCache(mode=mode, inputs=x)
    if model.kind == ACTOR:
        output = _actor_forward(model, x, cache)
    else:
        output = _critic_forward(model, x, cache)
    if mode == TRAIN and track_stats:
        update_running_stats(model, cache)
    return output, cache


def mlp_backward(
    model: MlpParameters,
    inputs: np.ndarray,
    upstream: np.ndarray,
    mode: str = TRAIN,
    cache: ForwardCache | None = None,
) -> Gradients:
    """Gradients of ``sum(upstream * output)`` w.r.t. every parameter and the input."""
    if mode != TRAIN:
        raise InvalidArgumentError("backward pass is only defined in train mode")
    if cache is None:
        _, cache = forward_pass(model, inputs, TRAIN, track_stats=False)
    elif cache.mode != TRAIN:
        raise InvalidArgumentError("cache was produced in eval mode")
    upstream = np.asarray(upstream, dtype=np.float64)
    expected = (cache.inputs.shape[0], model.output_dim)
    if upstream.shape != expected:
        raise InvalidArgumentError(f"upstream shape {upstream.shape} does not match output {expected}")
    if model.kind == ACTOR:
        return _actor_backward(model, upstream, cache)
    return _critic_backward(model, upstream, cache)


def update_running_stats(model: MlpParameters, cache: ForwardCache) -> None:
    momentum = model.bn_momentum
    for layer, (mean, var) in cache.batch_stats.items():
        running_mean = model.buffers[f"{layer}.running_mean"]
        running_var = model.buffers[f"{layer}.running_var"]
        model.buffers[f"{layer}.running_mean"] = momentum * running_mean + (1.0 - momentum) * mean
        model.buffers[f"{layer}.running_var"] = momentum * running_var + (1.0 - momentum) * var


# --- topologies -----------------------------------------------------------


def _actor_forward(model: MlpParameters, x: np.ndarray, cache: ForwardCache) -> np.ndarray:
    p = model.params
    z1 = _affine_forward(x, p["fc1.weight"], p["fc1.bias"])
    n1, bn_cache = _batchnorm_forward(model, "bn1", z1, cache)
    a1 = _checked("bn1", np.maximum(n1, 0.0))
    z2 = _affine_forward(a1, p["fc2.weight"], p["fc2.bias"])
    a2 = _checked("fc2", np.tanh(z2))
    z3 = _affine_forward(a2, p["out.weight"], p["out.bias"])
    t3 = _checked("out", np.tanh(z3))
    cache.values.update(x=x, n1=n1, bn1=bn_cache, a1=a1, a2=a2, t3=t3)
    return np.clip(t3, -ACTION_BOUND, ACTION_BOUND)


def _actor_backward(model: MlpParameters, dout: np.ndarray, cache: ForwardCache) -> Gradients:
    p = model.params
    v = cache.values
    grads: Dict[str, np.ndarray] = {}
    dz3 = dout * (1.0 - v["t3"] ** 2)
    da2, grads["out.weight"], grads["out.bias"] = _affine_backward(dz3, v["a2"], p["out.weight"])
    dz2 = da2 * (1.0 - v["a2"] ** 2)
    da1, grads["fc2.weight"], grads["fc2.bias"] = _affine_backward(dz2, v["a1"], p["fc2.weight"])
    dn1 = da1 * (v["n1"] > 0)
    dz1, grads["bn1.gamma"], grads["bn1.beta"] = _batchnorm_backward(dn1, v["bn1"])
    dx, grads["fc1.weight"], grads["fc1.bias"] = _affine_backward(dz1, v["x"], p["fc1.weight"])
    return Gradients(params={name: grads[name] for name in p}, inputs=dx)


def _critic_forward(model: MlpParameters, x: np.ndarray, cache: ForwardCache) -> np.ndarray:
    p = model.params
    states = x[:, : model.state_dim]
    actions = x[:, model.state_dim :]
    zs = _affine_forward(states, p["state_fc.weight"], p["state_fc.bias"])
    ns, state_cache = _batchnorm_forward(model, "state_bn", zs, cache)
    za = _affine_forward(actions, p["action_fc.weight"], p["action_fc.bias"])
    na, action_cache = _batchnorm_forward(model, "action_bn", za, cache)
    joined = np.concatenate([ns, na], axis=1)
    r1 = _checked("concat", np.maximum(joined, 0.0))
    z2 = _affine_forward(r1, p["fc2.weight"], p["fc2.bias"])
    r2 = _checked("fc2", np.maximum(z2, 0.0))
    q = _checked("out", _affine_forward(r2, p["out.weight"], p["out.bias"]))
    cache.values.update(
        states=states,
        actions=actions,
        state_bn=state_cache,
        action_bn=action_cache,
        joined=joined,
        r1=r1,
        z2=z2,
        r2=r2,
    )
    return q


def _critic_backward(model: MlpParameters, dq: np.ndarray, cache: ForwardCache) -> Gradients:
    p = model.params
    v = cache.values
    grads: Dict[str, np.ndarray] = {}
    dr2, grads["out.weight"], grads["out.bias"] = _affine_backward(dq, v["r2"], p["out.weight"])
    dz2 = dr2 * (v["z2"] > 0)
    dr1, grads["fc2.weight"], grads["fc2.bias"] = _affine_backward(dz2, v["r1"], p["fc2.weight"])
    djoined = dr1 * (v["joined"] > 0)
    dns = djoined[:, : model.hidden]
    dna = djoined[:, model.hidden :]
    dzs, grads["state_bn.gamma"], grads["state_bn.beta"] = _batchnorm_backward(dns, v["state_bn"])
    dza, grads["action_bn.gamma"], grads["action_bn.beta"] = _batchnorm_backward(dna, v["action_bn"])
    ds, grads["state_fc.weight"], grads["state_fc.bias"] = _affine_backward(
        dzs, v["states"], p["state_fc.weight"]
    )
    da, grads["action_fc.weight"], grads["action_fc.bias"] = _affine_backward(
        dza, v["actions"], p["action_fc.weight"]
    )
    return Gradients(params={name: grads[name] for name in p}, inputs=np.concatenate([ds, da], axis=1))


# --- layers ---------------------------------------------------------------


def _affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def _affine_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, ...]:
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def _batchnorm_forward(
    model: MlpParameters, layer: str, x: np.ndarray, cache: ForwardCache
) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    gamma = model.params[f"{layer}.gamma"]
    beta = model.params[f"{layer}.beta"]
    if cache.mode == TRAIN:
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        cache.batch_stats[layer] = (mean, var)
    else:
        mean = model.buffers[f"{layer}.running_mean"]
        var = model.buffers[f"{layer}.running_var"]
    std = np.sqrt(var + model.bn_eps)
    x_norm = (x - mean) / std
    out = _checked(layer, gamma * x_norm + beta)
    return out, (x_norm, std, gamma)


def _batchnorm_backward(
    dout: np.ndarray, bn_cache: Tuple[np.ndarray, np.ndarray, np.ndarray]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x_norm, std, gamma = bn_cache
    n = dout.shape[0]
    dgamma = (dout * x_norm).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dx_norm = dout * gamma
    dx = (n * dx_norm - dx_norm.sum(axis=0) - x_norm * (dx_norm * x_norm).sum(axis=0)) / (n * std)
    return dx, dgamma, dbeta


# --- helpers --------------------------------------------------------------


def _check_inputs(model: MlpParameters, inputs: np.ndarray, mode: str) -> np.ndarray:
    if mode not in (TRAIN, EVAL):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    x = as_real_matrix(inputs, "network input")
    if x.shape[1] != model.input_dim:
        raise InvalidArgumentError(f"{model.kind} expects {model.input_dim} input columns, got {x.shape[1]}")
    if mode == TRAIN and x.shape[0] < 2:
        raise InvalidArgumentError("train mode needs a batch of at least two rows")
    return x


def _checked(layer: str, values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericOverflowError(f"non-finite activations after layer {layer}")
    return values


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / np.sqrt(fan_in)
    weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    bias = rng.uniform(-bound, bound, size=fan_out)
    return weight, bias


def _final_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int, scale: float
) -> Tuple[np.ndarray, np.ndarray]:
    weight = rng.uniform(-scale, scale, size=(fan_in, fan_out))
    bias = rng.uniform(-scale, scale, size=fan_out)
    return weight, bias


def _fresh_buffers(layers: List[str], width: int) -> Dict[str, np.ndarray]:
    buffers: Dict[str, np.ndarray] = {}
    for layer in layers:
        buffers[f"{layer}.running_mean"] = np.zeros(width)
        buffers[f"{layer}.running_var"] = np.ones(width)
    return buffers
