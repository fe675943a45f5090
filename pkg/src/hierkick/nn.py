"""Dense ELU networks with hand-written reverse-mode gradients.

Weights are stored as (in, out) matrices so a forward pass is ``x @ W + b``.
``forward(..., batch_invariant=True)`` contracts with einsum instead of BLAS:
slower, but each row's result no longer depends on how many rows are in the
batch, which rollouts rely on for reproducibility across world counts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"HKPP"
VERSION = 1
HEADS = ("increment", "absolute")


class ParamsFormatError(ValueError):
    pass


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


class MLP:
    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ParamsFormatError("need one bias per weight matrix")
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ParamsFormatError(f"layer {i}: weight {W.shape} / bias {b.shape} mismatch")
            if i and weights[i - 1].shape[1] != W.shape[0]:
                raise ParamsFormatError(f"layer {i}: input {W.shape[0]} != previous output")
        self.weights = [np.asarray(W, float) for W in weights]
        self.biases = [np.asarray(b, float) for b in biases]

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, out_scale: float = 1.0) -> MLP:
        weights, biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_scale if i == len(sizes) - 2 else np.sqrt(2.0)
            weights.append(rng.standard_normal((n_in, n_out)) * gain / np.sqrt(n_in))
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [W.shape[1] for W in self.weights]

    def forward(self, x, batch_invariant: bool = False, cache: bool = False):
        x = np.asarray(x, float)
        if x.shape[-1] != self.in_dim:
            raise ParamsFormatError(f"input width {x.shape[-1]} != network input {self.in_dim}")
        pre_acts, inputs = [], []
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = (np.einsum("...i,ij->...j", h, W) if batch_invariant else h @ W) + b
            if i < last:
                pre_acts.append(z)
                h = elu(z)
            else:
                h = z
        if cache:
            return h, (inputs, pre_acts)
        return h

    def backward(self, cached, grad_out):
        """Parameter gradients given dLoss/dOutput for a 2-D batch."""
        inputs, pre_acts = cached
        gW = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            gW[i] = inputs[i].T @ g
            gb[i] = g.sum(axis=0)
            if i:
                g = (g @ self.weights[i].T) * elu_grad(pre_acts[i - 1])
        return gW, gb

    def tensors(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> MLP:
        return MLP([W.copy() for W in self.weights], [b.copy() for b in self.biases])


@dataclass
class PolicyParams:
    """Actor, privileged critic and the per-dimension action log-std.

    ``head`` selects how the actor output is read: ``increment`` (bounded
    velocity increments) or ``absolute`` (the flat end-to-end baseline).
    """

    actor: MLP
    critic: MLP
    log_std: np.ndarray
    head: str = "increment"

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, float)
        if self.head not in HEADS:
            raise ParamsFormatError(f"unknown head {self.head!r}")
        if self.log_std.shape != (self.actor.out_dim,):
            raise ParamsFormatError("log_std must match the actor output width")
        if self.critic.out_dim != 1:
            raise ParamsFormatError("critic must output a scalar")

    @classmethod
    def init(cls, obs_dim, priv_obs_dim, actor_hidden, critic_hidden, rng,
             init_log_std=-0.5, head="increment", act_dim=3) -> PolicyParams:
        actor = MLP.init([obs_dim, *actor_hidden, act_dim], rng, out_scale=0.01)
        critic = MLP.init([priv_obs_dim, *critic_hidden, 1], rng, out_scale=1.0)
        return cls(actor, critic, np.full(act_dim, float(init_log_std)), head)

    def tensors(self) -> list[np.ndarray]:
        """Canonical order: actor layers, log_std, critic layers."""
        return self.actor.tensors() + [self.log_std] + self.critic.tensors()

    def with_tensors(self, tensors) -> PolicyParams:
        na = 2 * len(self.actor.weights)
        a, ls, c = tensors[:na], tensors[na], tensors[na + 1:]
        return PolicyParams(MLP(list(a[0::2]), list(a[1::2])), MLP(list(c[0::2]), list(c[1::2])),
                            np.array(ls, copy=True), self.head)

    def copy(self) -> PolicyParams:
        return self.with_tensors([t.copy() for t in self.tensors()])

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def from_flat(self, vec) -> PolicyParams:
        out, i = [], 0
        for t in self.tensors():
            out.append(np.asarray(vec[i:i + t.size], float).reshape(t.shape).copy())
            i += t.size
        return self.with_tensors(out)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())

    def equals(self, other: PolicyParams) -> bool:
        return self.head == other.head and len(self.tensors()) == len(other.tensors()) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.tensors(), other.tensors()))

    def to_bytes(self) -> bytes:
        return encode_params(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> PolicyParams:
        params, used = decode_params(data)
        if used != len(data):
            raise ParamsFormatError("trailing bytes after parameter container")
        return params


def _write_net(buf: list[bytes], net: MLP):
    for W, b in zip(net.weights, net.biases):
        buf.append(struct.pack("<II", W.shape[0], W.shape[1]))
        buf.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        buf.append(np.ascontiguousarray(b, dtype="<f8").tobytes())


def encode_params(p: PolicyParams) -> bytes:
    """Little-endian container; see docs/formats.md for the byte layout."""
    buf = [MAGIC, struct.pack("<IIII", VERSION, len(p.actor.weights), len(p.critic.weights),
                              HEADS.index(p.head))]
    _write_net(buf, p.actor)
    buf.append(struct.pack("<I", p.log_std.size))
    buf.append(np.ascontiguousarray(p.log_std, dtype="<f8").tobytes())
    _write_net(buf, p.critic)
    return b"".join(buf)


def _read(data, offset, n_bytes):
    if offset + n_bytes > len(data):
        raise ParamsFormatError("truncated parameter container")
    return data[offset:offset + n_bytes], offset + n_bytes


def _read_net(data, offset, n_layers):
    weights, biases = [], []
    for _ in range(n_layers):
        raw, offset = _read(data, offset, 8)
        rows, cols = struct.unpack("<II", raw)
        raw, offset = _read(data, offset, 8 * rows * cols)
        weights.append(np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(float))
        raw, offset = _read(data, offset, 8 * cols)
        biases.append(np.frombuffer(raw, dtype="<f8").astype(float))
    return MLP(weights, biases), offset


def decode_params(data: bytes, offset: int = 0) -> tuple[PolicyParams, int]:
    raw, offset = _read(data, offset, 4)
    if raw != MAGIC:
        raise ParamsFormatError(f"bad magic {raw!r}")
    raw, offset = _read(data, offset, 16)
    version, n_actor, n_critic, head = struct.unpack("<IIII", raw)
    if version != VERSION:
        raise ParamsFormatError(f"unsupported container version {version}")
    if head >= len(HEADS):
        raise ParamsFormatError(f"unknown head code {head}")
    actor, offset = _read_net(data, offset, n_actor)
    raw, offset = _read(data, offset, 4)
    (n_std,) = struct.unpack("<I", raw)
    raw, offset = _read(data, offset, 8 * n_std)
    log_std = np.frombuffer(raw, dtype="<f8").astype(float)
    critic, offset = _read_net(data, offset, n_critic)
    params = PolicyParams(actor, critic, log_std, HEADS[head])
    if not params.all_finite():
        raise ParamsFormatError("non-finite parameter values")
    return params, offset


def save_params(params: PolicyParams, path: str | Path):
    Path(path).write_bytes(encode_params(params))


def load_params(path: str | Path) -> PolicyParams:
    return PolicyParams.from_bytes(Path(path).read_bytes())
