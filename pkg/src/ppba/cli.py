"""Command-line surface.

Subcommands: attack (single image), bench (campaign from a config file),
sweep-m, gen-victim, report. Exit codes: 0 ok, 1 usage/validation error,
2 victim failure, 3 IO failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .attack import AttackConfig, default_m, ppba_attack, prba_attack
from .baselines import BimConfig, NesConfig, bim_whitebox, nes_projected_attack, simba_attack
from .harness import (
    CampaignConfig,
    dimension_sweep,
    emit_reports,
    load_images,
    load_records_csv,
    run_campaign,
)
from .metrics import compute_metrics
from .projection import TensorShape
from .tensorfile import read_tensor
from .victims import HttpVictim, ToyVictim, VictimError, generate_toy_victim, load_victim, save_victim

EXIT_USAGE = 1
EXIT_VICTIM = 2
EXIT_IO = 3


@click.group()
def cli():
    """Query-efficient black-box attack toolkit."""


def _load_single_image(path: str, shape: TensorShape) -> np.ndarray:
    p = Path(path)
    if p.suffix.lower() == ".tnsr":
        x = read_tensor(p)
    elif p.suffix.lower() == ".png":
        from PIL import Image

        img = np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0
        x = np.transpose(img, (2, 0, 1))
    else:
        raise click.UsageError(f"unsupported image file: {path}")
    if x.shape != shape.as_tuple():
        raise click.UsageError(f"image shape {x.shape} != victim input {shape.as_tuple()}")
    if x.min() < 0.0 or x.max() > 1.0:
        raise click.UsageError(f"{path}: values outside [0,1]")
    return x


def _attack_flags(fn):
    for deco in reversed([
        click.option("--epsilon", type=float, default=None,
                     help="Perturbation budget (default 5 for l2, 0.05 for linf)."),
        click.option("--norm", type=click.Choice(["l2", "linf"]), default="l2"),
        click.option("--rho", type=float, default=0.01),
        click.option("--m", type=int, default=None),
        click.option("--max-queries", type=int, default=2000),
        click.option("--seed", type=int, default=0),
    ]):
        fn = deco(fn)
    return fn


@cli.command()
@click.option("--attack", "attack_name",
              type=click.Choice(["ppba", "prba", "nes", "simba", "bim"]), default="ppba")
@click.option("--victim", type=click.Path(exists=True), default=None,
              help="Toy victim weights file (JSON).")
@click.option("--endpoint", default=None, help="HTTP victim base URL.")
@click.option("--image", "image_path", type=click.Path(exists=True), required=False,
              help="PNG or TNSR input; random image when omitted.")
@_attack_flags
def attack(attack_name, victim, endpoint, image_path, epsilon, norm, rho, m,
           max_queries, seed):
    """Attack a single image and print the attack record as JSON."""
    if (victim is None) == (endpoint is None):
        raise click.UsageError("provide exactly one of --victim / --endpoint")
    if attack_name == "bim" and victim is None:
        raise click.UsageError("bim requires a toy --victim (needs gradients)")
    vic = ToyVictim(load_victim(victim)) if victim else HttpVictim(endpoint)
    if victim:
        shape = vic.input_shape
    else:
        shape = TensorShape(*vic.info()["input_shape"])
    if image_path:
        x = _load_single_image(image_path, shape)
    else:
        x = np.random.Generator(np.random.Philox(seed)).random(shape.as_tuple())
    if epsilon is None:
        epsilon = 5.0 if norm == "l2" else 0.05
    cfg = AttackConfig(epsilon=epsilon, norm=norm, rho=rho, m=m,
                       max_queries=max_queries, seed=seed)
    if attack_name == "ppba":
        rec = ppba_attack(vic, x, cfg)
    elif attack_name == "prba":
        rec = prba_attack(vic, x, cfg)
    elif attack_name == "nes":
        rec = nes_projected_attack(vic, x, cfg, nes=NesConfig())
    elif attack_name == "simba":
        rec = simba_attack(vic, x, cfg)
    else:
        bim = BimConfig(step_size=0.05, iterations=100, epsilon=epsilon,
                        use_projection=True, norm=norm)
        rec = bim_whitebox(vic, x, bim, m=m)
    if rec.aborted:
        click.echo(json.dumps(rec.to_dict()))
        raise SystemExit(EXIT_VICTIM)
    click.echo(json.dumps(rec.to_dict()))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="Campaign config JSON (CampaignConfig field names).")
def bench(config_path):
    """Run a campaign from a config file and emit reports."""
    config = CampaignConfig.from_json(config_path)
    results = run_campaign(config)
    if not results:
        raise click.UsageError("empty image set; nothing to report")
    summary = compute_metrics([r for _, r in results], config.max_queries)
    for path in emit_reports(results, summary, config.out, config.max_queries):
        click.echo(path)


@cli.command("sweep-m")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--m-values", required=True, help="Comma-separated m values.")
def sweep_m(config_path, m_values):
    """Run the campaign once per m and print the comparison table."""
    config = CampaignConfig.from_json(config_path)
    values = [int(v) for v in m_values.split(",")]
    table = dimension_sweep(config, values)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", encoding="utf-8") as f:
        f.write("m,asr,avg_queries_success,avg_queries_all,auc,n_samples\n")
        for m, s in table:
            avg_s = "" if s.avg_queries_success is None else repr(s.avg_queries_success)
            f.write(f"{m},{s.asr!r},{avg_s},{s.avg_queries_all!r},{s.auc!r},{s.n_samples}\n")
    for m, s in table:
        click.echo(f"m={m} asr={s.asr:.3f} auc={s.auc:.1f}")


@cli.command("gen-victim")
@click.option("--seed", type=int, default=0)
@click.option("--kind", type=click.Choice(["linear_softmax", "mlp1"]), default="linear_softmax")
@click.option("--shape", default="3,32,32", help="C,H,W")
@click.option("--num-classes", type=int, default=10)
@click.option("--hidden-units", type=int, default=32)
@click.option("--out", type=click.Path(), required=True)
def gen_victim(seed, kind, shape, num_classes, hidden_units, out):
    """Generate a reproducible toy victim weights file."""
    c, h, w = (int(v) for v in shape.split(","))
    spec = generate_toy_victim(seed, kind, TensorShape(c, h, w), num_classes,
                               hidden_units=hidden_units)
    save_victim(spec, out)
    click.echo(out)


@cli.command()
@click.option("--records", "records_path", type=click.Path(exists=True), required=True,
              help="records.csv from a previous campaign.")
@click.option("--max-queries", type=int, default=2000)
@click.option("--out", type=click.Path(), default=None,
              help="Write summary.json here; print to stdout when omitted.")
def report(records_path, max_queries, out):
    """Recompute metrics from persisted records."""
    results = load_records_csv(records_path)
    if not results:
        raise click.UsageError("no records found")
    summary = compute_metrics([r for _, r in results], max_queries)
    doc = json.dumps(summary.to_dict(), indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(doc)
        click.echo(out)
    else:
        click.echo(doc)


def main():
    try:
        cli.main(standalone_mode=False)
    except (click.UsageError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    except VictimError as e:
        click.echo(f"victim failure: {e}", err=True)
        sys.exit(EXIT_VICTIM)
    except OSError as e:
        click.echo(f"io failure: {e}", err=True)
        sys.exit(EXIT_IO)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.Abort:
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    main()
