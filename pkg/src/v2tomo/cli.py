"""Command-line interface.

Exit codes: 0 solved or match, 2 unsolved or mismatch, 3 infeasible input,
4 malformed input, 64 bad command-line usage.  Failures print one line
``error: <category>: <message>`` on stderr.
"""
from __future__ import annotations

import math
import sys

import click
import numpy as np

from . import bench
from .analysis import cut_value
from .dynamics import run_machine
from .io import (ParseError, read_image, read_instance, serialize_image,
                 serialize_instance, write_text)
from .localsearch import RULES, sample_local_search
from .model import MachineConfig, ModelError, RaySystem, sigma_to_image
from .problem import (InconsistentDataError, build_grid_rays, instance_from_image,
                      project, random_image)

EXIT_OK = 0
EXIT_UNSOLVED = 2
EXIT_INFEASIBLE = 3
EXIT_PARSE = 4
EXIT_USAGE = 64


def _fail(category: str, message: str, code: int):
    click.echo(f"error: {category}: {message}", err=True)
    sys.exit(code)


def _load_instance(path):
    try:
        return read_instance(path)
    except ParseError as err:
        _fail(err.category, str(err), EXIT_INFEASIBLE if err.category == "infeasible" else EXIT_PARSE)
    except OSError as err:
        _fail("io", str(err), EXIT_PARSE)


def _load_image(path):
    try:
        return read_image(path)
    except ParseError as err:
        _fail(err.category, str(err), EXIT_PARSE)
    except OSError as err:
        _fail("io", str(err), EXIT_PARSE)


def parse_dims(text: str) -> tuple[int, ...]:
    """``WxH[xD]`` (width, height, depth) to row-major array dims."""
    try:
        sizes = [int(part) for part in text.lower().split("x")]
    except ValueError:
        raise click.BadParameter(f"expected WxH or WxHxD, got {text!r}") from None
    if not 1 <= len(sizes) <= 3 or any(s < 1 for s in sizes):
        raise click.BadParameter(f"expected WxH or WxHxD, got {text!r}")
    return tuple(reversed(sizes))


def format_dims(dims) -> str:
    return "x".join(map(str, reversed(dims)))


def parse_sizes(text: str) -> tuple[int, ...]:
    """``4-12`` or ``4,8,12``."""
    try:
        if "-" in text:
            lo, hi = (int(v) for v in text.split("-", 1))
            sizes = tuple(range(lo, hi + 1))
        else:
            sizes = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected a range like 4-12 or a list like 4,8,12, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise click.BadParameter("sizes must be positive and nonempty")
    return sizes


def _factorizations(n: int):
    yield (n,)
    for a in range(1, n + 1):
        if n % a == 0:
            yield (a, n // a)
            for b in range(1, n // a + 1):
                if (n // a) % b == 0:
                    yield (a, b, n // a // b)


def infer_grid_dims(rays: RaySystem) -> tuple[int, ...]:
    """Grid dims whose axis lines reproduce ``rays`` exactly, else ``(N,)``."""
    n = rays.node_count
    for dims in _factorizations(n):
        if len(dims) > 1 and len(rays) == sum(n // d for d in dims) and build_grid_rays(dims) == rays:
            return dims
    return (n,)


@click.group()
def cli():
    """Exact binary image reconstruction from ray sums."""


@cli.command()
@click.option("--dims", "dims", required=True, callback=lambda c, p, v: parse_dims(v),
              help="WxH or WxHxD")
@click.option("--density", type=click.FloatRange(0, 1), default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-image", type=click.Path(dir_okay=False), required=True)
@click.option("--out-instance", type=click.Path(dir_okay=False), required=True)
def generate(dims, density, seed, out_image, out_instance):
    """Random image and the instance built from its ray sums."""
    image = random_image(dims, density, seed)
    write_text(out_image, serialize_image(image))
    write_text(out_instance, serialize_instance(instance_from_image(image, seed)))


@cli.command()
@click.option("--instance", "instance_path", type=click.Path(dir_okay=False), required=True)
@click.option("--T", "stage_time", type=float, default=5.0, show_default=True, help="stage duration")
@click.option("--steps", type=int, default=600, show_default=True, help="Euler steps per stage")
@click.option("--agitations", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dims", default=None, callback=lambda c, p, v: parse_dims(v) if v else None,
              help="output grid WxH[xD]; inferred from the rays if omitted")
@click.option("--out-image", type=click.Path(dir_okay=False), required=True)
@click.option("--trace", type=click.Path(dir_okay=False), default=None,
              help="write the relaxed cut along the run as CSV")
@click.option("--trace-stride", type=click.IntRange(1), default=10, show_default=True)
def solve(instance_path, stage_time, steps, agitations, seed, dims, out_image, trace, trace_stride):
    """Run the relaxed-spin machine on an instance file."""
    instance = _load_instance(instance_path)
    dims = dims or infer_grid_dims(instance.rays)
    if math.prod(dims) != instance.node_count:
        _fail("shape", f"dims {format_dims(dims)} do not match {instance.node_count} nodes", EXIT_PARSE)
    try:
        config = MachineConfig(stage_time, steps, agitations, seed,
                               trace_stride=trace_stride if trace else 0)
    except ModelError as err:
        _fail("usage", str(err), EXIT_USAGE)
    report = run_machine(instance, config)
    write_text(out_image, serialize_image(sigma_to_image(report.final_sigma, dims)))
    if trace:
        lines = ["time,relaxed_cut"] + [f"{t!r},{c!r}" for t, c in report.cut_trace]
        write_text(trace, "\n".join(lines) + "\n")
    if report.error:
        _fail("step_overflow", report.error, EXIT_UNSOLVED)
    click.echo(f"solved {str(report.solved).lower()} agitations {report.agitations_used} "
               f"cut {cut_value(instance, report.final_sigma)}")
    sys.exit(EXIT_OK if report.solved else EXIT_UNSOLVED)


@cli.command()
@click.option("--instance", "instance_path", type=click.Path(dir_okay=False), required=True)
@click.option("--image", "image_path", type=click.Path(dir_okay=False), required=True)
def verify(instance_path, image_path):
    """Check an image against the projections of an instance."""
    instance = _load_instance(instance_path)
    image = _load_image(image_path)
    if image.size != instance.node_count:
        _fail("shape", f"image has {image.size} pixels, instance has {instance.node_count} nodes",
              EXIT_PARSE)
    residual = project(image, instance.rays) - instance.projections
    if not residual.any():
        click.echo("match")
        sys.exit(EXIT_OK)
    for r in np.flatnonzero(residual):
        click.echo(f"ray {r} residual {residual[r]:+d}")
    sys.exit(EXIT_UNSOLVED)


@cli.command("local-search")
@click.option("--instance", "instance_path", type=click.Path(dir_okay=False), required=True)
@click.option("--restarts", type=click.IntRange(1), default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rule", type=click.Choice(RULES), default="first", show_default=True,
              help="first improving node in a random order, or largest gain")
def local_search(instance_path, restarts, seed, rule):
    """Success probability of single-flip descent from random starts."""
    instance = _load_instance(instance_path)
    sample = sample_local_search(instance, restarts, seed, rule)
    lo, hi = bench.wilson_interval(sample.successes, sample.restarts)
    click.echo(f"p_succ {sample.p_succ:.6f} ({sample.successes}/{sample.restarts}) "
               f"ci [{lo:.6f}, {hi:.6f}]")
    sys.exit(EXIT_OK if sample.successes else EXIT_UNSOLVED)


def _machine_options(T, steps, agitations):
    def wrap(f):
        f = click.option("--agitations", type=int, default=agitations, show_default=True)(f)
        f = click.option("--steps", type=int, default=steps, show_default=True)(f)
        f = click.option("--T", "stage_time", type=float, default=T, show_default=True)(f)
        f = click.option("--seed", type=int, default=0, show_default=True, help="master seed")(f)
        f = click.option("--workers", type=click.IntRange(1), default=1, show_default=True)(f)
        f = click.option("--timing", is_flag=True, help="fill the wall_ms column")(f)
        f = click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
                         help="output file (stdout if omitted)")(f)
        return f
    return wrap


def _run_bench(spec_args: dict, csv_path):
    try:
        spec = bench.ExperimentSpec(**spec_args)
    except ModelError as err:
        _fail("usage", str(err), EXIT_USAGE)
    text = bench.rows_to_csv(bench.run_experiment(spec))
    if csv_path:
        write_text(csv_path, text)
    else:
        click.echo(text, nl=False)


def _config(stage_time, steps, agitations):
    try:
        return MachineConfig(stage_time, steps, agitations)
    except ModelError as err:
        _fail("usage", str(err), EXIT_USAGE)


@cli.group("bench")
def bench_group():
    """Experiment drivers writing CSV tables."""


@bench_group.command("size-sweep")
@click.option("--sizes", default="4-12", show_default=True, callback=lambda c, p, v: parse_sizes(v))
@click.option("--images", type=click.IntRange(1), default=5, show_default=True)
@click.option("--restarts", type=click.IntRange(1), default=100, show_default=True)
@click.option("--ls-restarts", type=click.IntRange(1), default=10_000, show_default=True)
@click.option("--density", type=click.FloatRange(0, 1), default=0.5, show_default=True)
@click.option("--methods", type=click.Choice(["both", "v2", "local_search"]), default="both",
              show_default=True)
@_machine_options(5.0, 600, 10)
def size_sweep(sizes, images, restarts, ls_restarts, density, methods, stage_time, steps,
               agitations, seed, workers, timing, csv_path):
    """P_succ against image side W for the machine and the 1-opt baseline."""
    _run_bench(dict(kind="size_sweep", sizes=sizes, images_per_size=images, restarts=restarts,
                    local_search_restarts=ls_restarts, density=density,
                    methods=("v2", "local_search") if methods == "both" else (methods,),
                    config=_config(stage_time, steps, agitations), master_seed=seed,
                    workers=workers, timing=timing), csv_path)


@bench_group.command("t-sweep")
@click.option("--sizes", default="5,10,15", show_default=True, callback=lambda c, p, v: parse_sizes(v))
@click.option("--t-grid", default="2.0,3.5,5.0", show_default=True)
@click.option("--images", type=click.IntRange(1), default=5, show_default=True)
@click.option("--restarts", type=click.IntRange(1), default=100, show_default=True)
@click.option("--density", type=click.FloatRange(0, 1), default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="master seed")
@click.option("--workers", type=click.IntRange(1), default=1, show_default=True)
@click.option("--timing", is_flag=True, help="fill the wall_ms column")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
def t_sweep(sizes, t_grid, images, restarts, density, seed, workers, timing, csv_path):
    """P_succ against stage time T (600 steps, 5 agitations)."""
    try:
        grid = tuple(float(v) for v in t_grid.split(","))
    except ValueError:
        _fail("usage", f"bad --t-grid {t_grid!r}", EXIT_USAGE)
    _run_bench(dict(kind="t_sweep", sizes=sizes, t_grid=grid, images_per_size=images,
                    restarts=restarts, density=density, master_seed=seed, workers=workers,
                    timing=timing, methods=("v2",)), csv_path)


@bench_group.command("demo3d")
@click.option("--dims", "dims", default="8x8x4", show_default=True,
              callback=lambda c, p, v: parse_dims(v), help="WxHxD")
@click.option("--density", type=click.FloatRange(0, 1), default=0.3, show_default=True)
@click.option("--volumes", type=click.IntRange(1), default=10, show_default=True)
@click.option("--restarts", type=click.IntRange(1), default=bench.THREE_D_RESTARTS,
              show_default=True, help="fresh runs per volume after an exhausted budget")
@_machine_options(bench.THREE_D_CONFIG.stage_time, bench.THREE_D_CONFIG.steps_per_stage,
                  bench.THREE_D_CONFIG.max_agitations)
def demo3d(dims, density, volumes, restarts, stage_time, steps, agitations, seed, workers,
           timing, csv_path):
    """Reconstruct random volumes from three axis projections."""
    if len(dims) != 3:
        _fail("usage", "demo3d needs WxHxD", EXIT_USAGE)
    _run_bench(dict(kind="three_d_demo", sizes=(dims,), images_per_size=volumes, density=density,
                    restarts=restarts,
                    config=_config(stage_time, steps, agitations), master_seed=seed,
                    workers=workers, timing=timing, methods=("v2",)), csv_path)


def main(argv=None):
    try:
        code = cli.main(args=argv, prog_name="v2tomo", standalone_mode=False)
    except click.ClickException as err:
        _fail("usage", err.format_message(), EXIT_USAGE)
    except click.Abort:
        _fail("aborted", "interrupted", 1)
    except InconsistentDataError as err:
        _fail("infeasible", str(err), EXIT_INFEASIBLE)
    sys.exit(code or 0)
