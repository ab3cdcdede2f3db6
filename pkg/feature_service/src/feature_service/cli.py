import logging
from pathlib import Path

import click

from .encoders import load_encoder
from .errors import FeatureServiceError
from .export import ExportJob, export_features
from .service import build_app


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose):
    """Export video frame bundles and serve text embeddings."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.command()
@click.option("--video", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
              help="bundle directory: gets frames/ and features.vcf1")
@click.option("--model", default="tiny", show_default=True,
              help="tiny, clip, or a CLIP model id")
@click.option("--fps", type=float, default=1.0, show_default=True,
              help="output frames per second")
@click.option("--jpeg-quality", type=int, default=90, show_default=True)
def export(video, out_dir, model, fps, jpeg_quality):
    """Sample a video into a frame bundle with a feature file."""
    out = Path(out_dir)
    job = ExportJob(
        video=Path(video),
        frame_dir=out / "frames",
        feature_file=out / "features.vcf1",
        model=model,
        fps=fps,
        jpeg_quality=jpeg_quality,
    )
    try:
        result = export_features(job)
    except FeatureServiceError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"frames    {result.frame_count}")
    click.echo(f"dim       {result.dim}")
    click.echo(f"bundle    {out}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--model", default="tiny", show_default=True)
def serve(host, port, model):
    """Run the /embed_text service."""
    try:
        encoder = load_encoder(model)
    except FeatureServiceError as exc:
        raise click.ClickException(str(exc)) from exc
    import uvicorn

    uvicorn.run(build_app(encoder), host=host, port=port)


if __name__ == "__main__":
    main()
