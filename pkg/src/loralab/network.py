"""Multi-layer perceptron with additive low-rank adapters.

The base network stacks T hidden transitions of width W between input
dimension d and output dimension D; hidden layers apply the activation, the
final layer is affine. An adapter perturbs layer t's weight by the rank-r
product ``out_factor @ in_factor`` where the output-side factor is
(d_out x r) and the input-side factor is (r x d_in). One side is frozen at
random Gaussian initialization and the other is trainable inside the box
[-M, M]; by default the input-side factor is the trainable one.

Forward passes apply the perturbation as ``out_factor @ (in_factor @ x)``,
never materializing the dense product, so a zero trainable factor reproduces
the base network exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .linalg import sample_gaussian
from .rng import ensure_generator
from .validation import check_matrix, check_positive, check_samples, check_vector

SERIAL_NET_FORMAT = "loralab-net-v1"
SERIAL_ADAPTER_FORMAT = "loralab-adapter-v1"


@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    bound: float | None  # None for unbounded (ReLU)


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_deriv(z):
    # subgradient at 0 fixed to 0
    return (z > 0).astype(np.float64)


def _tanh_deriv(z):
    t = np.tanh(z)
    return 1.0 - t * t


ACTIVATIONS = {
    "relu": Activation("relu", _relu, _relu_deriv, lipschitz=1.0, bound=None),
    "tanh": Activation("tanh", np.tanh, _tanh_deriv, lipschitz=1.0, bound=1.0),
}


@dataclass(frozen=True)
class Architecture:
    """Shape bundle: d -> W -> ... -> W -> D with T hidden transitions, adapter rank r."""

    d: int
    D: int
    T: int
    W: int
    r: int
    activation: str = "relu"

    def __post_init__(self):
        for name in ("d", "D", "T", "W", "r"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or int(v) < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not 1 <= self.r < self.W:
            raise ValueError(f"rank must satisfy 1 <= r < W, got r={self.r}, W={self.W}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")

    @property
    def n_layers(self) -> int:
        return self.T + 1

    def in_dims(self) -> list[int]:
        return [self.d] + [self.W] * self.T

    def out_dims(self) -> list[int]:
        return [self.W] * self.T + [self.D]

    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.out_dims(), self.in_dims()))

    def act(self) -> Activation:
        return ACTIVATIONS[self.activation]


class ParamCounts(NamedTuple):
    """Closed-form versus shape-enumerated parameter counts.

    The closed-form expressions count the output layer slightly differently
    from direct enumeration (see ``count_params``); both are reported so the
    bound can use the formula while honest accounting uses the exact count.
    """

    p_formula: int
    p_exact: int
    q_formula: int
    q_exact: int


def count_params(arch: Architecture) -> ParamCounts:
    """Base and trainable-adapter parameter counts, formula and enumerated.

    Formulas: ``p = W(TW - W + T + d + D + 1)`` and ``q = r(TW - W + d + D)``.
    Enumeration walks the actual tensor shapes; the two disagree for the
    output layer (the p formula books its bias at width W instead of D, and
    the q formula books the last input width at D instead of W).
    """
    d, D, T, W, r = arch.d, arch.D, arch.T, arch.W, arch.r
    p_formula = W * (T * W - W + T + d + D + 1)
    q_formula = r * (T * W - W + d + D)
    p_exact = sum(dout * din + dout for dout, din in arch.layer_shapes())
    q_exact = sum(r * din for din in arch.in_dims())
    return ParamCounts(p_formula, p_exact, q_formula, q_exact)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass
class PretrainedNet:
    """Frozen weight/bias stack; arrays are marked read-only at construction."""

    arch: Architecture
    weights: list
    biases: list

    def __post_init__(self):
        shapes = self.arch.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError(f"expected {len(shapes)} weight/bias pairs, got "
                             f"{len(self.weights)}/{len(self.biases)}")
        ws, bs = [], []
        for t, (dout, din) in enumerate(shapes):
            w = check_matrix(self.weights[t], f"weights[{t}]")
            if w.shape != (dout, din):
                raise ValueError(f"weights[{t}] must have shape {(dout, din)}, got {w.shape}")
            b = check_vector(self.biases[t], f"biases[{t}]", length=dout)
            ws.append(_freeze(w))
            bs.append(_freeze(b))
        self.weights = ws
        self.biases = bs

    @property
    def max_abs_param(self) -> float:
        """Sup-norm of the flattened parameter stack (the bound's R0)."""
        return max(max(abs(w).max() for w in self.weights),
                   max(abs(b).max() for b in self.biases))


@dataclass
class LoraAdapter:
    """Per-layer factor pair with one frozen random side and one trainable side.

    ``trainable_side="in"`` trains the (r x d_in) input factors against frozen
    Gaussian output factors; ``"out"`` swaps the roles. Trainable entries are
    kept inside [-box_bound, box_bound] by the training projection.
    """

    arch: Architecture
    out_factors: list
    in_factors: list
    box_bound: float
    init_scale: float
    trainable_side: str = "in"

    def __post_init__(self):
        if self.trainable_side not in ("in", "out"):
            raise ValueError(f"trainable_side must be 'in' or 'out', got {self.trainable_side!r}")
        self.box_bound = check_positive(self.box_bound, "box_bound")
        self.init_scale = check_positive(self.init_scale, "init_scale")
        shapes = self.arch.layer_shapes()
        if len(self.out_factors) != len(shapes) or len(self.in_factors) != len(shapes):
            raise ValueError(f"expected {len(shapes)} factor pairs")
        outs, ins = [], []
        for t, (dout, din) in enumerate(shapes):
            bo = check_matrix(self.out_factors[t], f"out_factors[{t}]")
            ai = check_matrix(self.in_factors[t], f"in_factors[{t}]")
            if bo.shape != (dout, self.arch.r):
                raise ValueError(f"out_factors[{t}] must have shape {(dout, self.arch.r)}, got {bo.shape}")
            if ai.shape != (self.arch.r, din):
                raise ValueError(f"in_factors[{t}] must have shape {(self.arch.r, din)}, got {ai.shape}")
            outs.append(bo.copy())
            ins.append(ai.copy())
        self.out_factors = outs
        self.in_factors = ins
        for arr in self.frozen_factors:
            arr.flags.writeable = False
        for arr in self.trainable_factors:
            if abs(arr).max(initial=0.0) > self.box_bound:
                raise ValueError("trainable factor entries exceed box_bound")

    @property
    def trainable_factors(self) -> list:
        return self.in_factors if self.trainable_side == "in" else self.out_factors

    @property
    def frozen_factors(self) -> list:
        return self.out_factors if self.trainable_side == "in" else self.in_factors

    def clone(self) -> "LoraAdapter":
        return LoraAdapter(self.arch, [b.copy() for b in self.out_factors],
                           [a.copy() for a in self.in_factors],
                           self.box_bound, self.init_scale, self.trainable_side)


def random_pretrained(rng, arch: Architecture, weight_scale: float | None = None,
                      bias_scale: float = 0.0) -> PretrainedNet:
    """Gaussian base network; default weight scale is 1/sqrt(fan_in) per layer."""
    gen = ensure_generator(rng)
    weights, biases = [], []
    for dout, din in arch.layer_shapes():
        scale = weight_scale if weight_scale is not None else 1.0 / np.sqrt(din)
        weights.append(scale * gen.standard_normal((dout, din)))
        if bias_scale > 0.0:
            biases.append(bias_scale * gen.standard_normal(dout))
        else:
            biases.append(np.zeros(dout))
    return PretrainedNet(arch, weights, biases)


def init_adapter(rng, arch: Architecture, init_scale: float, box_bound: float,
                 trainable_side: str = "in") -> LoraAdapter:
    """Fresh adapter: frozen side i.i.d. N(0, init_scale^2), trainable side zero.

    A zero trainable side makes the initial perturbation vanish, so a freshly
    initialized adapter reproduces the base network output exactly.
    """
    init_scale = check_positive(init_scale, "init_scale")
    box_bound = check_positive(box_bound, "box_bound")
    gen = ensure_generator(rng)
    outs, ins = [], []
    for dout, din in arch.layer_shapes():
        if trainable_side == "in":
            outs.append(sample_gaussian(gen, dout, arch.r, init_scale))
            ins.append(np.zeros((arch.r, din)))
        else:
            ins.append(sample_gaussian(gen, arch.r, din, init_scale))
            outs.append(np.zeros((dout, arch.r)))
    return LoraAdapter(arch, outs, ins, box_bound, init_scale, trainable_side)


def materialize_delta(adapter: LoraAdapter, layer: int) -> np.ndarray:
    """Dense rank-<=r perturbation ``out_factor @ in_factor`` of one layer (0-based)."""
    n_layers = adapter.arch.n_layers
    if not 0 <= layer < n_layers:
        raise IndexError(f"layer must lie in [0, {n_layers - 1}], got {layer}")
    return adapter.out_factors[layer] @ adapter.in_factors[layer]


def _forward(net: PretrainedNet, adapter: LoraAdapter | None, x, cache: bool = False):
    arch = net.arch
    X = check_samples(x, "x", n_features=arch.d)
    act = arch.act()
    h = X
    caches = []
    n_layers = arch.n_layers
    for t in range(n_layers):
        pre = h @ net.weights[t].T + net.biases[t]
        if adapter is not None:
            ai, bo = adapter.in_factors[t], adapter.out_factors[t]
            if ai.any() and bo.any():
                pre = pre + (h @ ai.T) @ bo.T
        if t < n_layers - 1:
            if cache:
                caches.append((h, act.deriv(pre)))
            h = act.fn(pre)
        else:
            if cache:
                caches.append((h, None))
            h = pre
    return (h, caches) if cache else h


def _match_input(out: np.ndarray, x) -> np.ndarray:
    return out[0] if np.asarray(x).ndim == 1 else out


def forward_pretrained(net: PretrainedNet, x) -> np.ndarray:
    """Base network output; accepts a single vector or an (n, d) batch."""
    return _match_input(_forward(net, None, x), x)


def forward_lora(net: PretrainedNet, adapter: LoraAdapter, x) -> np.ndarray:
    """Adapted network output: layer t applies W + out_factor @ in_factor."""
    if adapter.arch != net.arch:
        raise ValueError("adapter and net architectures differ")
    return _match_input(_forward(net, adapter, x), x)


def _backward_trainable(net: PretrainedNet, adapter: LoraAdapter, caches, upstream: np.ndarray):
    """Gradients of sum(upstream * output) w.r.t. the trainable factors only."""
    arch = net.arch
    grads: list = [None] * arch.n_layers
    delta = upstream
    train_in = adapter.trainable_side == "in"
    for t in range(arch.n_layers - 1, -1, -1):
        h, _ = caches[t]
        bo, ai = adapter.out_factors[t], adapter.in_factors[t]
        if train_in:
            grads[t] = bo.T @ delta.T @ h
        else:
            grads[t] = delta.T @ (h @ ai.T)
        if t > 0:
            dh = delta @ net.weights[t] + (delta @ bo) @ ai
            delta = dh * caches[t - 1][1]
    return grads


def backprop(net: PretrainedNet, adapter: LoraAdapter, x, upstream_grad) -> list:
    """Gradient of ``upstream_grad . forward_lora(x)`` w.r.t. each trainable factor.

    Frozen factors and base parameters receive no gradient. The ReLU
    subgradient at exactly zero is taken to be zero.
    """
    arch = net.arch
    X = check_samples(x, "x", n_features=arch.d)
    U = check_samples(upstream_grad, "upstream_grad", n_features=arch.D)
    if X.shape[0] != U.shape[0]:
        raise ValueError("x and upstream_grad batch sizes differ")
    _, caches = _forward(net, adapter, X, cache=True)
    return _backward_trainable(net, adapter, caches, U)


# --- serialization -----------------------------------------------------------
#
# Portable JSON with plain base-10 floats; entries round-trip bit-exactly
# because Python emits shortest-exact decimal representations.

def net_to_payload(net: PretrainedNet) -> dict:
    return {
        "format": SERIAL_NET_FORMAT,
        "arch": _arch_to_payload(net.arch),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_payload(payload: dict) -> PretrainedNet:
    if payload.get("format") != SERIAL_NET_FORMAT:
        raise ValueError(f"unsupported net payload format: {payload.get('format')!r}")
    arch = _arch_from_payload(payload["arch"])
    return PretrainedNet(arch, [np.array(w) for w in payload["weights"]],
                         [np.array(b) for b in payload["biases"]])


def adapter_to_payload(adapter: LoraAdapter) -> dict:
    return {
        "format": SERIAL_ADAPTER_FORMAT,
        "arch": _arch_to_payload(adapter.arch),
        "out_factors": [m.tolist() for m in adapter.out_factors],
        "in_factors": [m.tolist() for m in adapter.in_factors],
        "box_bound": adapter.box_bound,
        "init_scale": adapter.init_scale,
        "trainable_side": adapter.trainable_side,
    }


def adapter_from_payload(payload: dict) -> LoraAdapter:
    if payload.get("format") != SERIAL_ADAPTER_FORMAT:
        raise ValueError(f"unsupported adapter payload format: {payload.get('format')!r}")
    return LoraAdapter(
        _arch_from_payload(payload["arch"]),
        [np.array(m) for m in payload["out_factors"]],
        [np.array(m) for m in payload["in_factors"]],
        payload["box_bound"], payload["init_scale"], payload["trainable_side"],
    )


def _arch_to_payload(arch: Architecture) -> dict:
    return {"d": arch.d, "D": arch.D, "T": arch.T, "W": arch.W, "r": arch.r,
            "activation": arch.activation}


def _arch_from_payload(payload: dict) -> Architecture:
    return Architecture(**payload)


def save_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
