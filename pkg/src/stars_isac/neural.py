"""Small fully connected networks with hand-written backprop, Adam, and a
tanh-squashed diagonal Gaussian policy head.

Everything is deterministic; callers supply all noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
TANH_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class Mlp:
    """Affine layers with rectifier hidden activations and an affine output.

    Parameters are stored as ``[W0, b0, W1, b1, ...]`` with ``W`` shaped
    (fan_in, fan_out), so a batch ``x`` of shape (B, fan_in) maps to ``x @ W + b``.
    """

    def __init__(self, layer_dims, params=None, activation: str = "relu"):
        self.layer_dims = [int(d) for d in layer_dims]
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"invalid layer_dims {layer_dims}")
        if activation != "relu":
            raise ValueError(f"unsupported activation {activation!r}")
        self.activation = activation
        if params is None:
            params = []
            for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
                params += [np.zeros((d_in, d_out)), np.zeros(d_out)]
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        self._check_shapes()

    @classmethod
    def init(cls, layer_dims, rng: np.random.Generator, out_scale: float = 1.0) -> "Mlp":
        """Uniform fan-in initialisation; ``out_scale`` shrinks the last layer."""
        net = cls(layer_dims)
        n_layers = len(net.layer_dims) - 1
        for i, (d_in, d_out) in enumerate(zip(net.layer_dims[:-1], net.layer_dims[1:])):
            bound = 1.0 / math.sqrt(d_in)
            scale = out_scale if i == n_layers - 1 else 1.0
            net.params[2 * i] = rng.uniform(-bound, bound, size=(d_in, d_out)) * scale
            net.params[2 * i + 1] = rng.uniform(-bound, bound, size=d_out) * scale
        return net

    def _check_shapes(self) -> None:
        expected = []
        for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            expected += [(d_in, d_out), (d_out,)]
        got = [p.shape for p in self.params]
        if got != expected:
            raise ValueError(f"parameter shapes {got} do not match layer_dims {self.layer_dims}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "Mlp":
        return Mlp(self.layer_dims, [p.copy() for p in self.params], self.activation)

    def load_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected input with {self.in_dim} features, got shape {x.shape}")
        return x, single

    def forward(self, x) -> np.ndarray:
        x, single = self._as_batch(x)
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h[0] if single else h

    def forward_cached(self, x):
        """Forward pass keeping the layer inputs needed by :meth:`backward`."""
        x, single = self._as_batch(x)
        inputs = [x]
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                np.maximum(h, 0.0, out=h)
                inputs.append(h)
        return (h[0] if single else h), (inputs, single)

    def backward(self, cache, grad_out, need_input_grad: bool = True, need_param_grads: bool = True):
        """Reverse-mode gradients for the loss whose output gradient is ``grad_out``.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` aligned to
        ``params`` (``None`` when not requested).
        """
        inputs, single = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != (inputs[0].shape[0], self.out_dim):
            raise ValueError(f"upstream gradient shape {g.shape} does not match the output")
        grads = [None] * len(self.params) if need_param_grads else None
        for i in range(self.n_layers - 1, -1, -1):
            h_in = inputs[i]
            if need_param_grads:
                grads[2 * i] = h_in.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            if i > 0 or need_input_grad:
                g = g @ self.params[2 * i].T
                if i > 0:
                    g = g * (h_in > 0.0)
        g_in = None
        if need_input_grad:
            g_in = g[0] if single else g
        return grads, g_in

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.params:
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size


def forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)


def backward(net: Mlp, x, upstream_grad):
    _, cache = net.forward_cached(x)
    return net.backward(cache, upstream_grad)


class Adam:
    """Bias-corrected adaptive-moment optimizer over a list of arrays (updated in place)."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        if len(grads) != len(self.first_moment):
            raise ValueError("gradient list does not match optimizer state")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient passed to Adam")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1.0 - b2**t) / (1.0 - b1**t)
        eps_t = self.eps * math.sqrt(1.0 - b2**t)
        for p, g, m, v in zip(params, grads, self.first_moment, self.second_moment):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr_t * m / (np.sqrt(v) + eps_t)

    def state_arrays(self) -> list[np.ndarray]:
        return self.first_moment + self.second_moment

    def copy(self) -> "Adam":
        other = Adam([], self.lr, self.beta1, self.beta2, self.eps)
        other.step_count = self.step_count
        other.first_moment = [m.copy() for m in self.first_moment]
        other.second_moment = [v.copy() for v in self.second_moment]
        return other


def adam_step(params, grads, state: Adam) -> None:
    state.step(params, grads)


@dataclass(frozen=True)
class PolicySample:
    pre_squash: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray
    mean: np.ndarray
    log_std: np.ndarray


def clamp_log_std(raw):
    return np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)


def split_head(out: np.ndarray):
    """Split an actor output (..., 2*dim) into (mean, raw log-std)."""
    dim = out.shape[-1] // 2
    return out[..., :dim], out[..., dim:]


def init_policy_head(actor: Mlp, action_dim: int, log_std: float, mean_gain: float = 1.0) -> Mlp:
    """Scale the mean columns of the output layer and pin the log-std head to a constant."""
    w, b = actor.params[-2], actor.params[-1]
    w[:, :action_dim] *= mean_gain
    w[:, action_dim:] = 0.0
    b[action_dim:] = log_std
    return actor


def _squash_correction(action):
    return np.log(1.0 - action * action + TANH_EPS)


def policy_sample(mean, log_std, noise) -> PolicySample:
    """Reparameterized sample u = mean + std * noise, action = tanh(u)."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = clamp_log_std(np.asarray(log_std, dtype=np.float64))
    noise = np.asarray(noise, dtype=np.float64)
    if mean.shape != log_std.shape or mean.shape != noise.shape:
        raise ValueError("mean, log_std and noise must share a shape")
    u = mean + np.exp(log_std) * noise
    a = np.tanh(u)
    logp = np.sum(-0.5 * noise * noise - log_std - _HALF_LOG_2PI - _squash_correction(a), axis=-1)
    return PolicySample(pre_squash=u, action=a, log_prob=logp, mean=mean, log_std=log_std)


def log_prob_pre_squash(mean, log_std, u) -> np.ndarray:
    """Squashed-Gaussian log-density evaluated from the pre-squash value."""
    log_std = clamp_log_std(np.asarray(log_std, dtype=np.float64))
    z = (np.asarray(u) - mean) * np.exp(-log_std)
    a = np.tanh(u)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI - _squash_correction(a), axis=-1)


def policy_log_prob(mean, log_std, action) -> np.ndarray:
    """Log-density of a squashed action; entries must lie strictly inside (-1, 1)."""
    action = np.asarray(action, dtype=np.float64)
    if np.any(np.abs(action) >= 1.0):
        raise ValueError("actions must lie strictly inside (-1, 1)")
    u = np.arctanh(action)
    log_std = clamp_log_std(np.asarray(log_std, dtype=np.float64))
    z = (u - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI - _squash_correction(action), axis=-1)


def log_prob_pre_squash_grad(mean, raw_log_std, u, g_logp):
    """Gradients of ``g_logp * log_prob_pre_squash`` w.r.t. (mean, raw log-std).

    ``g_logp`` has the batch shape; the clamp on log-std zeroes its gradient
    outside the admissible range.
    """
    log_std = clamp_log_std(raw_log_std)
    inv_var = np.exp(-2.0 * log_std)
    diff = u - mean
    g = np.asarray(g_logp, dtype=np.float64)[..., None]
    g_mean = g * diff * inv_var
    g_log_std = g * (diff * diff * inv_var - 1.0)
    g_log_std = g_log_std * ((raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX))
    return g_mean, g_log_std


def policy_sample_grad(sample: PolicySample, raw_log_std, noise, g_action, g_logp):
    """Backprop through :func:`policy_sample`.

    ``g_action`` is dL/d(action) (same shape as the action), ``g_logp`` is
    dL/d(log_prob) (batch shape). Returns (dL/dmean, dL/d raw log-std).
    """
    a = sample.action
    one_minus = 1.0 - a * a
    g_logp = np.asarray(g_logp, dtype=np.float64)[..., None]
    g_u = g_action * one_minus + g_logp * (2.0 * a * one_minus / (one_minus + TANH_EPS))
    g_mean = g_u
    g_log_std = g_u * np.exp(sample.log_std) * noise - g_logp
    g_log_std = g_log_std * ((raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX))
    return g_mean, g_log_std


CHECKPOINT_MAGIC = b"STARS-ISAC-CKPT\n"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, networks: dict, optimizers: dict | None = None, extra: dict | None = None) -> None:
    """Write networks and optimizer state to one self-describing file.

    Layout: magic line, one JSON header line, then little-endian float64
    arrays in row-major order at the offsets listed in the header.
    """
    optimizers = optimizers or {}
    arrays = []
    header = {"version": CHECKPOINT_VERSION, "networks": {}, "optimizers": {}, "arrays": [], "extra": extra or {}}
    for name, net in networks.items():
        header["networks"][name] = {"layer_dims": net.layer_dims, "activation": net.activation}
        for i, p in enumerate(net.params):
            arrays.append((f"{name}/param{i}", p))
    for name, opt in optimizers.items():
        header["optimizers"][name] = {
            "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
            "step_count": opt.step_count, "n_params": len(opt.first_moment),
        }
        for i, m in enumerate(opt.first_moment):
            arrays.append((f"{name}/m{i}", m))
        for i, v in enumerate(opt.second_moment):
            arrays.append((f"{name}/v{i}", v))
    offset = 0
    for key, arr in arrays:
        header["arrays"].append({"name": key, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict, dict]:
    """Inverse of :func:`save_checkpoint`: returns (networks, optimizers, extra)."""
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path} is not a checkpoint file")
    rest = data[len(CHECKPOINT_MAGIC) :]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl].decode("utf-8"))
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    body = rest[nl + 1 :]
    store = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=entry["offset"])
        store[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
    networks = {}
    for name, meta in header["networks"].items():
        n_params = 2 * (len(meta["layer_dims"]) - 1)
        params = [store[f"{name}/param{i}"] for i in range(n_params)]
        networks[name] = Mlp(meta["layer_dims"], params, meta["activation"])
    optimizers = {}
    for name, meta in header["optimizers"].items():
        opt = Adam([], meta["lr"], meta["beta1"], meta["beta2"], meta["eps"])
        opt.step_count = meta["step_count"]
        opt.first_moment = [store[f"{name}/m{i}"] for i in range(meta["n_params"])]
        opt.second_moment = [store[f"{name}/v{i}"] for i in range(meta["n_params"])]
        optimizers[name] = opt
    return networks, optimizers, header["extra"]
