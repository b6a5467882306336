"""Comparison optimizers sharing the low-frequency sensing operator.

Projected NES (antithetic Gaussian gradient estimation in measurement
space), a SimBA-style coordinate walk over the selected basis directions,
and the white-box BIM existence check with and without the projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .attack import (
    AttackConfig,
    AttackRecord,
    _project_candidate,
    _resolve_loss,
    clip_to_image,
    cw_loss,
    default_m,
    make_rng,
    project_l2,
    project_linf,
)
from .projection import SensingOperator, TensorShape
from .victims import VictimError

__all__ = [
    "NesConfig",
    "BimConfig",
    "nes_gradient_estimate",
    "nes_projected_attack",
    "simba_attack",
    "bim_whitebox",
]


@dataclass
class NesConfig:
    samples_per_iter: int = 20
    sigma: Optional[float] = None  # None -> 0.1 * rho * sqrt(m)
    lr: Optional[float] = None  # None -> rho * sqrt(m) (normalized step)

    def __post_init__(self):
        if self.samples_per_iter < 2 or self.samples_per_iter % 2:
            raise ValueError("samples_per_iter must be a positive even integer")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.lr is not None and self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class BimConfig:
    step_size: float
    iterations: int
    epsilon: float
    use_projection: bool
    norm: str = "l2"

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.norm not in ("l2", "linf"):
            raise ValueError("norm must be 'l2' or 'linf'")


def nes_gradient_estimate(loss_fn, z: np.ndarray, sigma: float, n: int,
                          rng: np.random.Generator) -> np.ndarray:
    """g_hat = sum_i L(z + sigma*u_i) * u_i / (n * sigma), antithetic u_i."""
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even integer")
    m = z.shape[0]
    g = np.zeros(m)
    for _ in range(n // 2):
        u = rng.standard_normal(m)
        g += loss_fn(z + sigma * u) * u
        g += loss_fn(z - sigma * u) * (-u)
    return g / (n * sigma)


def _finish(x, op, z, config, losses, accepted, t, scores, final_loss, success_fn, aborted):
    _, delta = _project_candidate(op, z, config)
    eff = clip_to_image(x, delta) - x
    success = (not aborted) and bool(losses) and success_fn(scores, final_loss)
    return AttackRecord(
        success=success,
        queries_used=len(losses),
        per_query_loss=losses,
        per_query_accepted=accepted,
        final_l2=float(np.linalg.norm(eff)),
        final_linf=float(np.abs(eff).max()) if eff.size else 0.0,
        original_label=t,
        adversarial_label=int(np.argmax(scores)) if success else None,
        aborted=aborted,
        delta=delta,
    )


def nes_projected_attack(victim, x, config: AttackConfig, nes: Optional[NesConfig] = None,
                         operator: Optional[SensingOperator] = None) -> AttackRecord:
    """NES with the sensing matrix: samples and steps live in z-space."""
    nes = nes if nes is not None else NesConfig()
    x = np.asarray(x, dtype=np.float64)
    shape = TensorShape(*x.shape)
    m = config.m if config.m is not None else default_m(shape)
    op = operator if operator is not None else SensingOperator.low_frequency(shape, m)
    sigma = nes.sigma if nes.sigma is not None else 0.1 * config.rho * np.sqrt(m)
    lr = nes.lr if nes.lr is not None else config.rho * np.sqrt(m)
    rng = make_rng(config.seed)
    budget = config.max_queries + 1

    losses: List[float] = []
    accepted: List[bool] = []
    aborted = False
    z = np.zeros(m)

    try:
        scores = np.asarray(victim(x), dtype=np.float64)
    except VictimError:
        return AttackRecord(False, 0, [], [], 0.0, 0.0, -1, aborted=True,
                            delta=np.zeros(shape.as_tuple()))
    t = int(np.argmax(scores))
    loss_fn, success_fn = _resolve_loss("cw", scores, t)
    best = loss_fn(scores)
    cur_scores = scores
    losses.append(best)
    accepted.append(False)

    def eval_z(z_cand):
        """Loss at a z-space point; counts one query, records the trace."""
        _, delta = _project_candidate(op, z_cand, config)
        s = np.asarray(victim(clip_to_image(x, delta)), dtype=np.float64)
        return loss_fn(s), s

    current = best
    while current > 0.0 and len(losses) < budget:
        # Gradient estimation: antithetic pairs, one query per sample.
        g = np.zeros(m)
        ran_out = False
        for _ in range(nes.samples_per_iter // 2):
            if len(losses) + 2 > budget:
                ran_out = True
                break
            u = rng.standard_normal(m)
            try:
                lp, _ = eval_z(z + sigma * u)
                losses.append(lp)
                accepted.append(False)
                ln, _ = eval_z(z - sigma * u)
                losses.append(ln)
                accepted.append(False)
            except VictimError:
                aborted = True
                break
            g += (lp - ln) * u
        if aborted or ran_out or len(losses) >= budget:
            break
        g /= nes.samples_per_iter * sigma
        gn = np.linalg.norm(g)
        if gn > 0:
            z_new = z - lr * g / gn
        else:
            z_new = z
        if config.norm == "l2":
            z_new = project_l2(z_new, config.epsilon)
        try:
            cand_loss, cand_scores = eval_z(z_new)
        except VictimError:
            aborted = True
            break
        z = z_new
        current = cand_loss
        cur_scores = cand_scores
        improved = cand_loss < best
        losses.append(cand_loss)
        accepted.append(improved)
        if improved:
            best = cand_loss

    return _finish(x, op, z, config, losses, accepted, t, cur_scores, current,
                   success_fn, aborted)


def simba_attack(victim, x, config: AttackConfig,
                 operator: Optional[SensingOperator] = None) -> AttackRecord:
    """Coordinate walk: try +rho then -rho along each selected basis vector."""
    x = np.asarray(x, dtype=np.float64)
    shape = TensorShape(*x.shape)
    m = config.m if config.m is not None else default_m(shape)
    op = operator if operator is not None else SensingOperator.low_frequency(shape, m)
    rng = make_rng(config.seed)
    budget = config.max_queries + 1

    losses: List[float] = []
    accepted: List[bool] = []
    aborted = False
    z = np.zeros(m)

    try:
        scores = np.asarray(victim(x), dtype=np.float64)
    except VictimError:
        return AttackRecord(False, 0, [], [], 0.0, 0.0, -1, aborted=True,
                            delta=np.zeros(shape.as_tuple()))
    t = int(np.argmax(scores))
    loss_fn, success_fn = _resolve_loss("cw", scores, t)
    current = loss_fn(scores)
    cur_scores = scores
    losses.append(current)
    accepted.append(False)

    done = current <= 0.0
    while not done and not aborted:
        for j in rng.permutation(m):
            if done or len(losses) >= budget:
                break
            for sign in (1.0, -1.0):
                if len(losses) >= budget:
                    break
                z_cand = z.copy()
                z_cand[j] += sign * config.rho
                z_cand, delta = _project_candidate(op, z_cand, config)
                try:
                    s = np.asarray(victim(clip_to_image(x, delta)), dtype=np.float64)
                except VictimError:
                    aborted = True
                    break
                cand_loss = loss_fn(s)
                ok = cand_loss < current
                losses.append(cand_loss)
                accepted.append(ok)
                if ok:
                    z = z_cand
                    current = cand_loss
                    cur_scores = s
                    if current <= 0.0:
                        done = True
                    break
            if aborted:
                break
        if len(losses) >= budget:
            break

    return _finish(x, op, z, config, losses, accepted, t, cur_scores, current,
                   success_fn, aborted)


def bim_whitebox(victim, x, config: BimConfig,
                 operator: Optional[SensingOperator] = None,
                 m: Optional[int] = None) -> AttackRecord:
    """Iterative sign-gradient steps on the margin loss (existence check).

    With use_projection the gradient is pushed through the operator
    (g_z = A g_x), the step is taken in z-space, and delta = A^T z keeps
    the perturbation supported on the selected low frequencies.
    """
    if not hasattr(victim, "gradient"):
        raise ValueError("bim_whitebox requires a victim exposing exact gradients")
    x = np.asarray(x, dtype=np.float64)
    shape = TensorShape(*x.shape)
    if config.use_projection:
        if operator is None:
            operator = SensingOperator.low_frequency(
                shape, m if m is not None else default_m(shape))
        z = np.zeros(operator.m)
    delta = np.zeros(shape.as_tuple())

    def project_delta(d):
        if config.norm == "l2":
            return project_l2(d.ravel(), config.epsilon).reshape(d.shape)
        return project_linf(d, config.epsilon)

    losses: List[float] = []
    accepted: List[bool] = []
    x_adv = x.copy()
    scores = np.asarray(victim(x_adv), dtype=np.float64)
    t = int(np.argmax(scores))
    loss = cw_loss(scores, t)
    losses.append(loss)
    accepted.append(False)
    best = loss
    cur_scores = scores

    for _ in range(config.iterations):
        if loss <= 0.0:
            break
        g = np.asarray(victim.gradient(x_adv, t), dtype=np.float64)
        if config.use_projection:
            g_z = operator.apply_forward(g)
            z = z - config.step_size * np.sign(g_z)
            if config.norm == "l2":
                z = project_l2(z, config.epsilon)
                delta = operator.apply_adjoint(z)
            else:
                delta = project_linf(operator.apply_adjoint(z), config.epsilon)
        else:
            delta = project_delta(delta - config.step_size * np.sign(g))
        x_adv = clip_to_image(x, delta)
        scores = np.asarray(victim(x_adv), dtype=np.float64)
        loss = cw_loss(scores, t)
        ok = loss < best
        losses.append(loss)
        accepted.append(ok)
        if ok:
            best = loss
            cur_scores = scores

    eff = x_adv - x
    success = loss <= 0.0
    return AttackRecord(
        success=success,
        queries_used=len(losses),
        per_query_loss=losses,
        per_query_accepted=accepted,
        final_l2=float(np.linalg.norm(eff)),
        final_linf=float(np.abs(eff).max()) if eff.size else 0.0,
        original_label=t,
        adversarial_label=int(np.argmax(scores)) if success else None,
        delta=delta,
    )
