"""Batch evaluation: campaigns, dimension sweeps, and report emission.

Records are persisted incrementally (one JSON line per attack) so an
interrupted campaign resumes where it stopped. Per-image RNG seeds are
derived from (campaign seed, image index) with numpy's SeedSequence, so
results do not depend on execution order.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .attack import AttackConfig, AttackRecord, default_m, ppba_attack, prba_attack
from .baselines import BimConfig, NesConfig, bim_whitebox, nes_projected_attack, simba_attack
from .metrics import MetricsSummary, compute_metrics, step_effective_rate, success_rate_curve
from .projection import SensingOperator, TensorShape
from .tensorfile import read_tensor
from .victims import HttpVictim, ToyVictim, VictimError, load_victim

__all__ = [
    "CampaignConfig",
    "run_campaign",
    "dimension_sweep",
    "emit_reports",
    "load_records_csv",
    "load_records_jsonl",
]

ATTACKS = ("ppba", "prba", "nes", "simba", "bim")


@dataclass
class CampaignConfig:
    attack: str
    victim: Optional[str] = None  # toy victim weights file
    endpoint: Optional[str] = None  # HTTP victim base URL
    images: str = "random:10"  # directory of PNG/TNSR files, or "random:N"
    out: str = "results"
    epsilon: float = 5.0
    norm: str = "l2"
    rho: float = 0.01
    m: Optional[int] = None
    max_queries: int = 2000
    seed: int = 0
    # bim-only knobs
    bim_step_size: float = 0.05
    bim_iterations: int = 100
    bim_use_projection: bool = True
    # nes-only knobs
    nes_samples_per_iter: int = 20
    nes_sigma: Optional[float] = None
    nes_lr: Optional[float] = None

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise ValueError(f"attack must be one of {ATTACKS}, got {self.attack!r}")
        if (self.victim is None) == (self.endpoint is None):
            raise ValueError("exactly one of victim / endpoint must be set")
        if self.attack == "bim" and self.victim is None:
            raise ValueError("bim requires a toy victim (needs exact gradients)")

    @classmethod
    def from_json(cls, path) -> "CampaignConfig":
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        return cls(**doc)


def _derived_seed(campaign_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([campaign_seed, index]).generate_state(1)[0])


def load_images(images: str, shape: TensorShape, seed: int) -> List[Tuple[str, np.ndarray]]:
    """Resolve the image source into (image_id, tensor) pairs in [0,1]."""
    if images.startswith("random:"):
        n = int(images.split(":", 1)[1])
        out = []
        for i in range(n):
            rng = np.random.Generator(np.random.Philox(_derived_seed(seed, i)))
            out.append((f"random_{i:04d}", rng.random(shape.as_tuple())))
        return out
    root = Path(images)
    if not root.is_dir():
        raise ValueError(f"image source {images!r} is not a directory")
    out = []
    for p in sorted(root.iterdir()):
        if p.suffix.lower() == ".png":
            from PIL import Image

            img = np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0
            x = np.transpose(img, (2, 0, 1))
        elif p.suffix.lower() == ".tnsr":
            x = read_tensor(p)
            if x.ndim != 3:
                raise ValueError(f"{p}: expected a 3D tensor, got ndim={x.ndim}")
            if x.min() < 0.0 or x.max() > 1.0:
                raise ValueError(f"{p}: values outside [0,1]")
        else:
            continue
        if x.shape != shape.as_tuple():
            raise ValueError(f"{p}: shape {x.shape} != victim input {shape.as_tuple()}")
        out.append((p.stem, x))
    return out


def _make_victim(config: CampaignConfig):
    if config.victim is not None:
        return ToyVictim(load_victim(config.victim))
    return HttpVictim(config.endpoint)


def _victim_shape(victim) -> TensorShape:
    if isinstance(victim, ToyVictim):
        return victim.input_shape
    info = victim.info()
    return TensorShape(*info["input_shape"])


def _run_one(attack: str, victim, x, cfg: AttackConfig, config: CampaignConfig,
             operator: Optional[SensingOperator]) -> AttackRecord:
    if attack == "ppba":
        return ppba_attack(victim, x, cfg, operator=operator)
    if attack == "prba":
        return prba_attack(victim, x, cfg, operator=operator)
    if attack == "nes":
        nes = NesConfig(config.nes_samples_per_iter, config.nes_sigma, config.nes_lr)
        return nes_projected_attack(victim, x, cfg, nes=nes, operator=operator)
    if attack == "simba":
        return simba_attack(victim, x, cfg, operator=operator)
    bim = BimConfig(
        step_size=config.bim_step_size,
        iterations=config.bim_iterations,
        epsilon=config.epsilon,
        use_projection=config.bim_use_projection,
        norm=config.norm,
    )
    return bim_whitebox(victim, x, bim, operator=operator, m=cfg.m)


def run_campaign(config: CampaignConfig) -> List[Tuple[str, AttackRecord]]:
    """One attack per image; records are appended to out/records.jsonl."""
    victim = _make_victim(config)
    shape = _victim_shape(victim)
    images = load_images(config.images, shape, config.seed)
    m = config.m if config.m is not None else default_m(shape)
    operator = SensingOperator.low_frequency(shape, m)

    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    journal = outdir / "records.jsonl"
    done: Dict[str, AttackRecord] = {}
    if journal.exists():
        for image_id, rec in load_records_jsonl(journal):
            done[image_id] = rec

    results: List[Tuple[str, AttackRecord]] = []
    with open(journal, "a", encoding="utf-8") as jf:
        for idx, (image_id, x) in enumerate(images):
            if image_id in done:
                results.append((image_id, done[image_id]))
                continue
            cfg = AttackConfig(
                epsilon=config.epsilon, norm=config.norm, rho=config.rho,
                m=m, max_queries=config.max_queries,
                seed=_derived_seed(config.seed, idx),
            )
            try:
                rec = _run_one(config.attack, victim, x, cfg, config, operator)
            except VictimError:
                rec = None
            if rec is None or rec.aborted:
                if rec is not None:
                    jf.write(json.dumps({"image_id": image_id, **rec.to_dict()}) + "\n")
                    jf.flush()
                    results.append((image_id, rec))
                raise VictimError(
                    f"victim failed during campaign; partial results kept in {journal}"
                )
            jf.write(json.dumps({"image_id": image_id, **rec.to_dict()}) + "\n")
            jf.flush()
            results.append((image_id, rec))
    return results


def dimension_sweep(config: CampaignConfig, m_values: Sequence[int]) -> List[Tuple[int, MetricsSummary]]:
    """Run the same campaign at each m; same seeds and images throughout."""
    table = []
    for m in m_values:
        sub = CampaignConfig(**{**config.__dict__, "m": int(m),
                                "out": str(Path(config.out) / f"m_{m}")})
        results = run_campaign(sub)
        table.append((int(m), compute_metrics([r for _, r in results], config.max_queries)))
    return table


def emit_reports(results: Sequence[Tuple[str, AttackRecord]], summary: MetricsSummary,
                 outdir, max_queries: int, window: int = 50) -> List[str]:
    """Write records.csv, summary.json, curve.csv, and eff_curve.csv."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    records = [r for _, r in results]

    path = outdir / "records.csv"
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["image_id", "success", "queries_used", "final_l2",
                        "final_linf", "adversarial_label", "original_label"])
            for image_id, r in results:
                w.writerow([
                    image_id, int(r.success), r.queries_used,
                    repr(r.final_l2), repr(r.final_linf),
                    "" if r.adversarial_label is None else r.adversarial_label,
                    r.original_label,
                ])
        written.append(str(path))

        path = outdir / "summary.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(summary.to_dict(), f, indent=2)
        written.append(str(path))

        path = outdir / "curve.csv"
        curve = success_rate_curve(records, max_queries)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# auc convention: {summary.to_dict()['auc_convention']}\n")
            w = csv.writer(f)
            w.writerow(["q", "sr"])
            for q, sr in enumerate(curve, start=1):
                w.writerow([q, repr(float(sr))])
        written.append(str(path))

        path = outdir / "eff_curve.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["q", "rate"])
            for q, rate in step_effective_rate(records, window):
                w.writerow([q, repr(float(rate))])
        written.append(str(path))
    except OSError as e:
        raise OSError(f"failed writing report {path}: {e}") from e
    return written


def load_records_jsonl(path) -> List[Tuple[str, AttackRecord]]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            out.append((doc["image_id"], AttackRecord.from_dict(doc)))
    return out


def load_records_csv(path) -> List[Tuple[str, AttackRecord]]:
    """Rebuild the per-attack summaries (not the full traces) from records.csv."""
    out = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            q = int(row["queries_used"])
            rec = AttackRecord(
                success=bool(int(row["success"])),
                queries_used=q,
                per_query_loss=[],
                per_query_accepted=[],
                final_l2=float(row["final_l2"]),
                final_linf=float(row["final_linf"]),
                original_label=int(row["original_label"]),
                adversarial_label=(
                    int(row["adversarial_label"]) if row["adversarial_label"] != "" else None
                ),
            )
            out.append((row["image_id"], rec))
    return out
