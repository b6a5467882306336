"""Model backends behind the /predict endpoint.

A backend exposes num_classes, input_shape and logits(x) for a CHW float
array in [0,1]. Three identifier schemes are understood:

  echo:<s0,s1,...>      fixed score vector, returned verbatim
  toy:<weights.json>    toy classifier weights file (linear or one-layer MLP)
  <name>                a torchvision classifier, loaded lazily

The toy weights format is a plain JSON document with keys kind,
input_shape, num_classes, weights, biases and optional hidden_units; it
is parsed here independently so the service has no dependency on the
attack toolkit.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["Backend", "EchoBackend", "ToyBackend", "TorchvisionBackend", "load_backend"]


class Backend:
    """Interface: subclasses set num_classes and input_shape."""

    num_classes: int
    input_shape: tuple
    # echo backends bypass the probs/logits transform
    raw: bool = False

    def logits(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def accepts_shape(self, shape: tuple) -> bool:
        return tuple(shape) == tuple(self.input_shape)


class EchoBackend(Backend):
    def __init__(self, scores, input_shape=(3, 8, 8)):
        self.scores = np.asarray(scores, dtype=np.float64)
        if self.scores.ndim != 1 or self.scores.size < 2:
            raise ValueError("echo backend needs at least two scores")
        self.num_classes = int(self.scores.size)
        self.input_shape = tuple(input_shape)
        self.raw = True

    def logits(self, x):
        return self.scores.copy()


class ToyBackend(Backend):
    def __init__(self, path):
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        kind = doc["kind"]
        if kind not in ("linear_softmax", "mlp1"):
            raise ValueError(f"unknown toy victim kind {kind!r}")
        self.kind = kind
        self.input_shape = tuple(int(v) for v in doc["input_shape"])
        if len(self.input_shape) != 3 or any(v < 1 for v in self.input_shape):
            raise ValueError("input_shape must be three positive ints")
        self.num_classes = int(doc["num_classes"])
        self.weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
        self.biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
        d = int(np.prod(self.input_shape))
        if kind == "linear_softmax":
            if self.weights[0].shape != (self.num_classes, d):
                raise ValueError("linear weights shape mismatch")
        else:
            h = int(doc["hidden_units"])
            if self.weights[0].shape != (h, d) or self.weights[1].shape != (self.num_classes, h):
                raise ValueError("mlp1 weights shape mismatch")

    def logits(self, x):
        v = np.asarray(x, dtype=np.float64).ravel()
        if self.kind == "linear_softmax":
            return self.weights[0] @ v + self.biases[0]
        h = np.tanh(self.weights[0] @ v + self.biases[0])
        return self.weights[1] @ h + self.biases[1]


class TorchvisionBackend(Backend):
    """Pretrained torchvision classifier; weights download on first use.

    torch is imported lazily so the echo and toy paths stay light. Any
    3xHxW input is accepted; the weight's own transforms handle resizing
    and normalization.
    """

    def __init__(self, name):
        import torch
        from torchvision.models import get_model, get_model_weights

        self._torch = torch
        weights = get_model_weights(name).DEFAULT
        self.model = get_model(name, weights=weights).eval()
        self.transforms = weights.transforms()
        self.num_classes = len(weights.meta["categories"])
        size = self.transforms.crop_size
        side = size[0] if isinstance(size, (list, tuple)) else int(size)
        self.input_shape = (3, side, side)

    def accepts_shape(self, shape):
        return len(shape) == 3 and shape[0] == 3 and min(shape[1:]) >= 1

    def logits(self, x):
        torch = self._torch
        with torch.no_grad():
            t = torch.from_numpy(np.asarray(x, dtype=np.float32))
            t = self.transforms(t).unsqueeze(0)
            return self.model(t).squeeze(0).double().numpy()


def load_backend(model: str) -> Backend:
    if model.startswith("echo:"):
        return EchoBackend([float(v) for v in model[5:].split(",")])
    if model.startswith("toy:"):
        return ToyBackend(model[4:])
    return TorchvisionBackend(model)
