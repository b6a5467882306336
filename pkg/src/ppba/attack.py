"""Losses, norm projections, and the random-walk attack optimizers.

Two optimizers share one loop: the probability-driven walk (per-dimension
confusion tables bias the triplet step sampling) and the plain uniform
random walk. Steps are quantized to {-rho, 0, +rho} per measurement
dimension; a candidate is accepted only on strict loss descent.

Randomness comes from numpy's Philox counter-based generator seeded with
the config seed, so traces are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .projection import SensingOperator, TensorShape
from .victims import VictimError

__all__ = [
    "AttackConfig",
    "ConfusionTables",
    "AttackRecord",
    "cw_loss",
    "topk_suppression_loss",
    "project_l2",
    "project_linf",
    "clip_to_image",
    "step_probabilities",
    "sample_step",
    "update_confusion",
    "ppba_attack",
    "prba_attack",
    "default_m",
    "make_rng",
]

# Column order of the triplet counters: -rho, 0, +rho.
TRIPLET_COLUMNS = (-1, 0, 1)


def default_m(shape: TensorShape) -> int:
    """Default measurement dimension for a given input shape."""
    if shape.as_tuple() == (3, 224, 224):
        return 1500
    c = shape.channels
    m = max(c, int(round(shape.d / 8 / c)) * c)
    return min(shape.d, m)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; documented so runs are portable."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class AttackConfig:
    epsilon: float = 5.0
    norm: str = "l2"  # "l2" or "linf"
    rho: float = 0.01
    m: Optional[int] = None  # None -> default_m(shape)
    max_queries: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_queries < 1:
            raise ValueError("max_queries must be >= 1")
        if self.norm not in ("l2", "linf"):
            raise ValueError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be a positive integer")


@dataclass
class AttackRecord:
    """Trace of one attack run."""

    success: bool
    queries_used: int
    per_query_loss: List[float]
    per_query_accepted: List[bool]
    final_l2: float
    final_linf: float
    original_label: int
    adversarial_label: Optional[int] = None
    aborted: bool = False
    # Final image-domain perturbation; not serialized.
    delta: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "queries_used": self.queries_used,
            "per_query_loss": [float(v) for v in self.per_query_loss],
            "per_query_accepted": [bool(v) for v in self.per_query_accepted],
            "final_l2": float(self.final_l2),
            "final_linf": float(self.final_linf),
            "original_label": int(self.original_label),
            "adversarial_label": (
                None if self.adversarial_label is None else int(self.adversarial_label)
            ),
            "aborted": self.aborted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackRecord":
        return cls(
            success=bool(d["success"]),
            queries_used=int(d["queries_used"]),
            per_query_loss=[float(v) for v in d["per_query_loss"]],
            per_query_accepted=[bool(v) for v in d["per_query_accepted"]],
            final_l2=float(d["final_l2"]),
            final_linf=float(d["final_linf"]),
            original_label=int(d["original_label"]),
            adversarial_label=(
                None if d.get("adversarial_label") is None else int(d["adversarial_label"])
            ),
            aborted=bool(d.get("aborted", False)),
        )


# ---------------------------------------------------------------------------
# Losses and projections
# ---------------------------------------------------------------------------

def cw_loss(scores, t: int) -> float:
    """max(score[t] - best other score, 0); zero iff misclassified."""
    scores = np.asarray(scores, dtype=np.float64)
    k = scores.shape[0]
    if k < 2:
        raise ValueError(f"need at least 2 classes, got {k}")
    if not 0 <= t < k:
        raise ValueError(f"label {t} out of range [0, {k})")
    others = np.delete(scores, t)
    return float(max(scores[t] - others.max(), 0.0))


def topk_suppression_loss(scores, suppressed) -> float:
    """Max score over the labels being pushed out of the top ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    idx = sorted(set(int(i) for i in suppressed))
    if not idx:
        raise ValueError("suppressed set must be non-empty")
    if idx[0] < 0 or idx[-1] >= scores.shape[0]:
        raise ValueError("suppressed index out of range")
    return float(scores[idx].max())


def project_l2(v, epsilon: float):
    """Pi_2(v, eps) = v * min(1, eps / ||v||_2)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n <= epsilon:
        return v
    return v * (epsilon / n)


def project_linf(delta, epsilon: float):
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return np.clip(np.asarray(delta, dtype=np.float64), -epsilon, epsilon)


def clip_to_image(x, delta):
    """Pi_Img: clamp x + delta into [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if x.shape != delta.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {delta.shape}")
    return np.clip(x + delta, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Confusion tables and step sampling
# ---------------------------------------------------------------------------

class ConfusionTables:
    """Per-dimension effective/ineffective counters over {-rho, 0, +rho}.

    All six counters start at 1, so denominators never vanish and the
    first step distribution is uniform.
    """

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.m = m
        self.effective = np.ones((m, 3), dtype=np.int64)
        self.ineffective = np.ones((m, 3), dtype=np.int64)

    def probabilities(self) -> np.ndarray:
        """(m, 3) sampling probabilities from the per-value effective rates."""
        rates = self.effective / (self.effective + self.ineffective)
        return rates / rates.sum(axis=1, keepdims=True)

    def update(self, columns: np.ndarray, effective: bool) -> None:
        rows = np.arange(self.m)
        if effective:
            self.effective[rows, columns] += 1
        else:
            self.ineffective[rows, columns] += 1


def step_probabilities(tables: ConfusionTables, j: int) -> Tuple[float, float, float]:
    """Sampling probabilities (P(-rho), P(0), P(+rho)) for dimension j."""
    p = tables.probabilities()[j]
    return (float(p[0]), float(p[1]), float(p[2]))


def _columns_from_probs(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    r = rng.random((probs.shape[0], 1))
    return (r > cdf[:, :2]).sum(axis=1)


def sample_step(tables: ConfusionTables, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a triplet step vector, one independent draw per dimension."""
    cols = _columns_from_probs(tables.probabilities(), rng)
    return (cols - 1) * rho


def update_confusion(tables: ConfusionTables, step: np.ndarray, effective: bool) -> None:
    """Credit the chosen value of every dimension, including the 0 column."""
    step = np.asarray(step)
    if step.shape != (tables.m,):
        raise ValueError(f"step must have shape ({tables.m},)")
    cols = np.sign(step).astype(np.int64) + 1
    tables.update(cols, effective)


# ---------------------------------------------------------------------------
# Attack loop
# ---------------------------------------------------------------------------

def _resolve_loss(loss, scores0, t):
    """Return (loss_fn, success_fn) for the configured objective."""
    if loss == "cw":
        def loss_fn(scores):
            return cw_loss(scores, t)

        def success_fn(scores, final_loss):
            return final_loss <= 0.0

        return loss_fn, success_fn
    if isinstance(loss, tuple) and loss[0] == "suppress_topk":
        k = int(loss[1])
        suppressed = set(np.argsort(scores0)[::-1][:k].tolist())

        def loss_fn(scores):
            return topk_suppression_loss(scores, suppressed)

        def success_fn(scores, final_loss):
            topk = set(np.argsort(scores)[::-1][:k].tolist())
            return not (suppressed & topk)

        return loss_fn, success_fn
    if callable(loss):
        def success_fn(scores, final_loss):
            return final_loss <= 0.0

        return (lambda scores: float(loss(scores, t))), success_fn
    raise ValueError(f"unknown loss selector: {loss!r}")


def _project_candidate(op: SensingOperator, z: np.ndarray, config: AttackConfig):
    """Apply the norm constraint; returns (z_kept, evaluated delta)."""
    if config.norm == "l2":
        z = project_l2(z, config.epsilon)
        return z, op.apply_adjoint(z)
    # linf: z stays unprojected; the evaluated perturbation is clamped in
    # the image domain (||z||_inf does not bound ||A^T z||_inf).
    return z, project_linf(op.apply_adjoint(z), config.epsilon)


def _run_random_walk(victim, x, config: AttackConfig, loss, probability_driven: bool,
                     operator: Optional[SensingOperator]) -> AttackRecord:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError("x must be a C x H x W tensor")
    shape = TensorShape(*x.shape)
    m = config.m if config.m is not None else default_m(shape)
    op = operator if operator is not None else SensingOperator.low_frequency(shape, m)
    if op.m != m or op.shape != shape:
        raise ValueError("operator does not match config/input shape")

    rng = make_rng(config.seed)
    tables = ConfusionTables(m) if probability_driven else None
    uniform = np.full((m, 3), 1.0 / 3.0)

    z = np.zeros(m)
    losses: List[float] = []
    accepted_flags: List[bool] = []
    aborted = False

    # Clean-image query fixes the original label and the starting loss;
    # it is counted like any other query.
    try:
        scores = np.asarray(victim(x), dtype=np.float64)
    except VictimError:
        return AttackRecord(
            success=False, queries_used=0, per_query_loss=[], per_query_accepted=[],
            final_l2=0.0, final_linf=0.0, original_label=-1, aborted=True,
            delta=np.zeros(shape.as_tuple()),
        )
    t = int(np.argmax(scores))
    loss_fn, success_fn = _resolve_loss(loss, scores, t)
    current_loss = loss_fn(scores)
    current_scores = scores
    losses.append(current_loss)
    accepted_flags.append(False)

    while current_loss > 0.0 and len(losses) < config.max_queries + 1:
        if probability_driven:
            cols = _columns_from_probs(tables.probabilities(), rng)
        else:
            cols = _columns_from_probs(uniform, rng)
        step = (cols - 1) * config.rho
        z_cand, delta_cand = _project_candidate(op, z + step, config)
        try:
            cand_scores = np.asarray(victim(clip_to_image(x, delta_cand)), dtype=np.float64)
        except VictimError:
            aborted = True
            break
        cand_loss = loss_fn(cand_scores)
        accepted = cand_loss < current_loss
        losses.append(cand_loss)
        accepted_flags.append(accepted)
        if accepted:
            z = z_cand
            current_loss = cand_loss
            current_scores = cand_scores
        if probability_driven:
            update_confusion(tables, step, accepted)

    _, delta = _project_candidate(op, z, config)
    effective_delta = clip_to_image(x, delta) - x
    final_loss = current_loss
    success = (not aborted) and success_fn(current_scores, final_loss)
    return AttackRecord(
        success=success,
        queries_used=len(losses),
        per_query_loss=losses,
        per_query_accepted=accepted_flags,
        final_l2=float(np.linalg.norm(effective_delta)),
        final_linf=float(np.abs(effective_delta).max()) if effective_delta.size else 0.0,
        original_label=t,
        adversarial_label=int(np.argmax(current_scores)) if success else None,
        aborted=aborted,
        delta=delta,
    )


def ppba_attack(victim, x, config: AttackConfig, loss="cw",
                operator: Optional[SensingOperator] = None) -> AttackRecord:
    """Probability-driven random walk over quantized low-frequency steps."""
    return _run_random_walk(victim, x, config, loss, True, operator)


def prba_attack(victim, x, config: AttackConfig, loss="cw",
                operator: Optional[SensingOperator] = None) -> AttackRecord:
    """Ablation: uniform triplet sampling, no confusion tables."""
    return _run_random_walk(victim, x, config, loss, False, operator)
