"""Startup flags mirror ServiceConfig; runs under uvicorn."""

from __future__ import annotations

import sys

import click
import uvicorn

from .app import ServiceConfig, create_app


@click.command()
@click.option("--model", default="echo:0.7,0.2,0.1",
              help="echo:<scores>, toy:<weights.json>, or a torchvision model name.")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8400)
@click.option("--output", type=click.Choice(["probs", "logits"]), default="probs")
@click.option("--top-k", type=int, default=None,
              help="Expose only the k largest scores (others zeroed).")
def serve(model, host, port, output, top_k):
    """Serve a classifier behind the /predict wire protocol."""
    config = ServiceConfig(model=model, host=host, port=port, output=output, top_k=top_k)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


def main():
    try:
        serve.main(standalone_mode=False)
    except (click.UsageError, ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main()
