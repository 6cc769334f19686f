"""Quantization-aware training and PTQ for small dense networks.

Weights and activations are fake-quantized to a symmetric grid with a fixed
zero point; gradients use the straight-through estimator (identity inside the
clamp range, zero outside). Networks are plain numpy with manual backprop;
biases stay full precision since they never enter a crossbar.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .converters import round_half_away


class DivergenceError(RuntimeError):
    """Training produced NaN loss or a NaN tensor reached an observer."""


@dataclass
class Observer:
    """Per-tensor running max-abs tracker. The max never decays."""

    running_max_abs: float = 0.0

    def observe(self, tensor: np.ndarray) -> "Observer":
        t = np.asarray(tensor)
        if np.isnan(t).any():
            raise DivergenceError("NaN in observed tensor")
        m = float(np.max(np.abs(t))) if t.size else 0.0
        if m > self.running_max_abs:
            self.running_max_abs = m
        return self


def fake_quant(tensor: np.ndarray, obs: Observer, bits: int) -> np.ndarray:
    """Clamp-round-rescale onto the symmetric grid defined by the observer."""
    t = np.asarray(tensor, dtype=float)
    if obs.running_max_abs <= 0.0:
        warnings.warn("fake_quant with zero observer: passing tensor through")
        return t.copy()
    levels = 2 ** (bits - 1) - 1
    scale = obs.running_max_abs / levels
    return np.clip(round_half_away(t / scale), -levels, levels) * scale


def ste_mask(tensor: np.ndarray, obs: Observer) -> np.ndarray:
    """Straight-through gradient mask: 1 inside the clamp range, 0 outside."""
    if obs.running_max_abs <= 0.0:
        return np.ones_like(np.asarray(tensor, dtype=float))
    return (np.abs(tensor) <= obs.running_max_abs).astype(float)


def fake_quant_vjp(upstream: np.ndarray, tensor: np.ndarray, obs: Observer) -> np.ndarray:
    """Backward rule of fake_quant under the straight-through estimator."""
    return upstream * ste_mask(tensor, obs)


@dataclass
class TinyNet:
    """Dense ReLU network; weights[i] is (fan_out, fan_in)."""

    weights: list
    biases: list

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "TinyNet":
        return TinyNet([w.copy() for w in self.weights],
                       [b.copy() for b in self.biases])

    @classmethod
    def init(cls, dims, rng: np.random.Generator) -> "TinyNet":
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)


@dataclass
class NetObservers:
    """One activation observer per layer input plus one per weight tensor."""

    activations: list
    weights: list

    @classmethod
    def fresh(cls, n_layers: int) -> "NetObservers":
        return cls([Observer() for _ in range(n_layers)],
                   [Observer() for _ in range(n_layers)])


@dataclass(frozen=True)
class LinearLrSchedule:
    """Linear warmup to the peak rate, then linear decay to zero."""

    peak_lr: float = 0.1
    warmup_frac: float = 0.25

    def __call__(self, step: int, total_steps: int) -> float:
        warmup = max(1, int(self.warmup_frac * total_steps))
        if step < warmup:
            return self.peak_lr * (step + 1) / warmup
        remain = max(1, total_steps - warmup)
        return self.peak_lr * max(0.0, (total_steps - step) / remain)


def _forward_cache(net: TinyNet, x: np.ndarray, observers: NetObservers | None,
                   bits_w: int | None, act_bits: int, observe: bool):
    """Forward pass returning the intermediates needed for backprop."""
    quant = observers is not None
    a = np.asarray(x, dtype=float)
    cache = []
    for layer in range(net.n_layers):
        w, b = net.weights[layer], net.biases[layer]
        if quant:
            if observe:
                observers.activations[layer].observe(a)
                observers.weights[layer].observe(w)
            aq = fake_quant(a, observers.activations[layer], act_bits)
            wq = fake_quant(w, observers.weights[layer], bits_w)
        else:
            aq, wq = a, w
        z = aq @ wq.T + b
        cache.append((a, aq, wq, z))
        a = np.maximum(z, 0.0) if layer < net.n_layers - 1 else z
    return a, cache


def predict_logits(net: TinyNet, x: np.ndarray, observers: NetObservers | None = None,
                   bits_w: int | None = None, act_bits: int = 8) -> np.ndarray:
    """Digital forward pass; fake-quantized when observers are supplied."""
    logits, _ = _forward_cache(net, x, observers, bits_w, act_bits, observe=False)
    return logits


def _softmax_ce(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(logp[np.arange(n), labels].mean())
    probs = np.exp(logp)
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def _train_step(net, x, y, observers, bits_w, act_bits, lr):
    logits, cache = _forward_cache(net, x, observers, bits_w, act_bits,
                                   observe=observers is not None)
    loss, dz = _softmax_ce(logits, y)
    if np.isnan(loss):
        raise DivergenceError("training loss is NaN")
    quant = observers is not None
    for layer in range(net.n_layers - 1, -1, -1):
        a, aq, wq, z = cache[layer]
        dw = dz.T @ aq
        db = dz.sum(axis=0)
        da = dz @ wq
        if quant:
            dw = fake_quant_vjp(dw, net.weights[layer], observers.weights[layer])
            da = fake_quant_vjp(da, a, observers.activations[layer])
        net.weights[layer] -= lr * dw
        net.biases[layer] -= lr * db
        if layer > 0:
            dz = da * (cache[layer - 1][3] > 0.0)
    return loss


def _train(net: TinyNet, dataset, bits_w, epochs, schedule, rng,
           act_bits=8, batch_size=128, quantize=True):
    net = net.copy()
    observers = NetObservers.fresh(net.n_layers) if quantize else None
    n = dataset.x_train.shape[0]
    steps_per_epoch = (n + batch_size - 1) // batch_size
    total_steps = epochs * steps_per_epoch
    history = []
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            lr = schedule(step, total_steps)
            epoch_loss += _train_step(net, dataset.x_train[idx], dataset.y_train[idx],
                                      observers, bits_w, act_bits, lr) * len(idx)
            step += 1
        acc, _ = evaluate(net, dataset.x_test, dataset.y_test,
                          observers=observers, bits_w=bits_w, act_bits=act_bits)
        history.append((epoch, epoch_loss / n, acc))
    return net, observers, history


def train_qat(net: TinyNet, dataset, bits_w: int, epochs: int,
              schedule: LinearLrSchedule, rng: np.random.Generator,
              act_bits: int = 8, batch_size: int = 128):
    """QAT from scratch: observers and fake quantization active from step one.

    Returns (trained net, frozen observers, history of (epoch, loss, accuracy)).
    """
    if not (2 <= bits_w <= 8):
        raise ValueError("bits_w must be in 2..8")
    return _train(net, dataset, bits_w, epochs, schedule, rng,
                  act_bits=act_bits, batch_size=batch_size, quantize=True)


def train_float(net: TinyNet, dataset, epochs: int, schedule: LinearLrSchedule,
                rng: np.random.Generator, batch_size: int = 128):
    """Full-precision baseline trained with the same loop and schedule."""
    net, _, history = _train(net, dataset, None, epochs, schedule, rng,
                             batch_size=batch_size, quantize=False)
    return net, history


def ptq_quantize(net: TinyNet, calibration_x: np.ndarray, bits_w: int,
                 act_bits: int = 8):
    """Post-training quantization of a float-trained net.

    One calibration pass populates the observers, then the weights are
    fake-quantized once. Returns (quantized net, observers).
    """
    observers = NetObservers.fresh(net.n_layers)
    a = np.asarray(calibration_x, dtype=float)
    for layer in range(net.n_layers):
        observers.activations[layer].observe(a)
        observers.weights[layer].observe(net.weights[layer])
        z = a @ net.weights[layer].T + net.biases[layer]
        a = np.maximum(z, 0.0) if layer < net.n_layers - 1 else z
    qnet = net.copy()
    for layer in range(net.n_layers):
        qnet.weights[layer] = fake_quant(qnet.weights[layer],
                                         observers.weights[layer], bits_w)
    return qnet, observers


def evaluate(net: TinyNet, x: np.ndarray, y: np.ndarray,
             observers: NetObservers | None = None, bits_w: int | None = None,
             act_bits: int = 8):
    """(accuracy, mean loss) on a labelled batch."""
    logits = predict_logits(net, x, observers=observers, bits_w=bits_w,
                            act_bits=act_bits)
    loss, _ = _softmax_ce(logits, y)
    acc = float((logits.argmax(axis=1) == y).mean())
    return acc, loss
