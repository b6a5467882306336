"""The black-box query boundary.

Built-in differentiable toy classifiers (linear softmax and a one-hidden-
layer MLP), the HTTP victim client, and a query-counting wrapper. The
attack side always works in the raw [0,1] image space; any preprocessing
belongs to the victim.
"""

from __future__ import annotations

import base64
import json
import threading
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import requests

from .projection import TensorShape

__all__ = [
    "VictimError",
    "VictimTimeout",
    "VictimProtocolError",
    "VictimHTTPError",
    "ToyVictimSpec",
    "ToyVictim",
    "QueryCounter",
    "CountingVictim",
    "HttpVictim",
    "toy_predict",
    "toy_gradient",
    "generate_toy_victim",
    "save_victim",
    "load_victim",
    "http_predict",
]


class VictimError(Exception):
    """Any victim failure; attacks abort with a partial trace on these."""


class VictimTimeout(VictimError):
    pass


class VictimProtocolError(VictimError):
    """Malformed response or a machine-readable 4xx protocol rejection."""


class VictimHTTPError(VictimError):
    """Transport failure or a non-protocol HTTP error status."""


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class ToyVictimSpec:
    kind: str  # "linear_softmax" or "mlp1"
    input_shape: TensorShape
    num_classes: int
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    hidden_units: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("linear_softmax", "mlp1"):
            raise ValueError(f"unknown toy victim kind {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        d = self.input_shape.d
        if self.kind == "linear_softmax":
            if self.weights[0].shape != (self.num_classes, d):
                raise ValueError("linear weights shape mismatch")
        else:
            h = self.hidden_units
            if h is None or h < 1:
                raise ValueError("mlp1 requires hidden_units")
            if self.weights[0].shape != (h, d) or self.weights[1].shape != (self.num_classes, h):
                raise ValueError("mlp1 weights shape mismatch")


def toy_predict(spec: ToyVictimSpec, x) -> np.ndarray:
    """Deterministic softmax scores for the toy classifiers."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.input_shape.as_tuple():
        raise ValueError(f"input shape {x.shape} != {spec.input_shape.as_tuple()}")
    v = x.ravel()
    if spec.kind == "linear_softmax":
        logits = spec.weights[0] @ v + spec.biases[0]
    else:
        h = np.tanh(spec.weights[0] @ v + spec.biases[0])
        logits = spec.weights[1] @ h + spec.biases[1]
    return _softmax(logits)


def toy_gradient(spec: ToyVictimSpec, x, t: int) -> np.ndarray:
    """Exact gradient of the margin loss w.r.t. the input.

    Subgradient 0 when the clamp is active (already misclassified).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.input_shape.as_tuple():
        raise ValueError(f"input shape {x.shape} != {spec.input_shape.as_tuple()}")
    p = toy_predict(spec, x)
    others = np.delete(p, t)
    if p[t] - others.max() <= 0:
        return np.zeros(spec.input_shape.as_tuple())
    j = int(np.argmax(np.where(np.arange(p.size) == t, -np.inf, p)))
    # d loss / d logits for loss = p_t - p_j through the softmax
    gl = p[t] * (np.eye(p.size)[t] - p) - p[j] * (np.eye(p.size)[j] - p)
    v = x.ravel()
    if spec.kind == "linear_softmax":
        gx = spec.weights[0].T @ gl
    else:
        pre = spec.weights[0] @ v + spec.biases[0]
        h = np.tanh(pre)
        gh = spec.weights[1].T @ gl
        gx = spec.weights[0].T @ ((1.0 - h ** 2) * gh)
    return gx.reshape(spec.input_shape.as_tuple())


def generate_toy_victim(seed: int, kind: str, input_shape: TensorShape, num_classes: int,
                        hidden_units: int = 32) -> ToyVictimSpec:
    """Reproducible random weights: zero-mean Gaussian, scale 1/sqrt(fan_in)."""
    rng = np.random.Generator(np.random.Philox(seed))
    d = input_shape.d
    if kind == "linear_softmax":
        weights = [rng.normal(0.0, 1.0 / np.sqrt(d), size=(num_classes, d))]
        biases = [np.zeros(num_classes)]
        hidden = None
    elif kind == "mlp1":
        weights = [
            rng.normal(0.0, 1.0 / np.sqrt(d), size=(hidden_units, d)),
            rng.normal(0.0, 1.0 / np.sqrt(hidden_units), size=(num_classes, hidden_units)),
        ]
        biases = [np.zeros(hidden_units), np.zeros(num_classes)]
        hidden = hidden_units
    else:
        raise ValueError(f"unknown toy victim kind {kind!r}")
    return ToyVictimSpec(
        kind=kind, input_shape=input_shape, num_classes=num_classes,
        weights=weights, biases=biases, hidden_units=hidden,
    )


def save_victim(spec: ToyVictimSpec, path) -> None:
    doc = {
        "kind": spec.kind,
        "input_shape": list(spec.input_shape.as_tuple()),
        "num_classes": spec.num_classes,
        "weights": [w.tolist() for w in spec.weights],
        "biases": [b.tolist() for b in spec.biases],
    }
    if spec.hidden_units is not None:
        doc["hidden_units"] = spec.hidden_units
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_victim(path) -> ToyVictimSpec:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return ToyVictimSpec(
        kind=doc["kind"],
        input_shape=TensorShape(*doc["input_shape"]),
        num_classes=int(doc["num_classes"]),
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        hidden_units=doc.get("hidden_units"),
    )


class ToyVictim:
    """Callable wrapper exposing scores and exact gradients."""

    def __init__(self, spec: ToyVictimSpec):
        self.spec = spec

    def __call__(self, x) -> np.ndarray:
        return toy_predict(self.spec, x)

    def gradient(self, x, t: int) -> np.ndarray:
        return toy_gradient(self.spec, x, t)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def input_shape(self) -> TensorShape:
        return self.spec.input_shape


@dataclass
class QueryCounter:
    """Monotone evaluation counter; increments exactly once per query."""

    count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def increment(self) -> None:
        with self._lock:
            self.count += 1


class CountingVictim:
    """Wraps any victim callable so every evaluation is tallied."""

    def __init__(self, victim, counter: Optional[QueryCounter] = None):
        self.victim = victim
        self.counter = counter if counter is not None else QueryCounter()

    def __call__(self, x) -> np.ndarray:
        self.counter.increment()
        return self.victim(x)

    def gradient(self, x, t: int) -> np.ndarray:
        return self.victim.gradient(x, t)

    @property
    def count(self) -> int:
        return self.counter.count


def http_predict(endpoint: str, x, timeout: float = 10.0,
                 session: Optional[requests.Session] = None) -> np.ndarray:
    """POST the image to the victim service and return its scores.

    Never retries silently; a retry would corrupt query accounting.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64), dtype="<f4")
    body = {
        "shape": list(x.shape),
        "dtype": "f32le",
        "data_b64": base64.b64encode(x.tobytes()).decode("ascii"),
    }
    post = session.post if session is not None else requests.post
    try:
        resp = post(endpoint.rstrip("/") + "/predict", json=body, timeout=timeout)
    except requests.Timeout as e:
        raise VictimTimeout(str(e)) from e
    except requests.RequestException as e:
        raise VictimHTTPError(str(e)) from e
    if resp.status_code == 400:
        try:
            code = resp.json().get("error", "unknown")
        except ValueError:
            code = "unknown"
        raise VictimProtocolError(f"service rejected request: {code}")
    if not 200 <= resp.status_code < 300:
        raise VictimHTTPError(f"HTTP {resp.status_code}")
    try:
        doc = resp.json()
        scores = np.asarray(doc["scores"], dtype=np.float64)
    except (ValueError, KeyError, TypeError) as e:
        raise VictimProtocolError(f"malformed response: {e}") from e
    if scores.ndim != 1 or scores.shape[0] < 2 or not np.all(np.isfinite(scores)):
        raise VictimProtocolError("malformed score vector")
    return scores


class HttpVictim:
    """Remote victim behind the JSON/base64 wire protocol."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()

    def __call__(self, x) -> np.ndarray:
        return http_predict(self.endpoint, x, timeout=self.timeout, session=self.session)

    def info(self) -> dict:
        try:
            resp = self.session.get(self.endpoint + "/info", timeout=self.timeout)
        except requests.Timeout as e:
            raise VictimTimeout(str(e)) from e
        except requests.RequestException as e:
            raise VictimHTTPError(str(e)) from e
        if not 200 <= resp.status_code < 300:
            raise VictimHTTPError(f"HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as e:
            raise VictimProtocolError(f"malformed /info response: {e}") from e
