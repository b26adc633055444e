"""Command line front end.

File-based commands load a scenario document, run one engine operation,
and print or write the result. `serve` starts the HTTP service; the
rendering path is shared, so a file rendered here is byte-identical to
the service output for the same document.

Exit codes: 1 unreadable input or output failure, 2 validation
violations or unknown references, 3 engine refusal. Messages go to
stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .errors import (
    ContractError,
    EngineError,
    LiveiaError,
    NotFoundError,
    SceneValidationError,
    SerializationError,
)
from .optics import path_to_doc, trace_beam
from .radiance import EquilibriumParams, compute_equilibrium, enlightenment_score
from .render import render_overview, render_perspective, render_view
from .scenes import Scenario, deserialize, serialize
from .scenes import fork as fork_scenario
from .scenes import validate as validate_scenario
from .waves import SampledSignal, Waveform, waveform_from_doc, waveform_to_doc
from .waves import decompose as decompose_signal
from .waves import superpose as superpose_waveforms

EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_ENGINE = 3


def _echo_violations(violations) -> None:
    for v in violations:
        click.echo(f"{v.subject}: {v.rule}: {v.message}", err=True)


def _guarded(f):
    """Translate engine exceptions into exit codes and stderr messages."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except SceneValidationError as exc:
            _echo_violations(exc.violations)
            sys.exit(EXIT_VALIDATION)
        except NotFoundError as exc:
            click.echo(f"error: {exc.args[0] if exc.args else exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except SerializationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except (ContractError, EngineError, LiveiaError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_ENGINE)

    return wrapper


def _load_scenario(path: str) -> Scenario:
    return deserialize(Path(path).read_bytes())


def _load_checked(path: str) -> Scenario:
    s = _load_scenario(path)
    violations = validate_scenario(s)
    if violations:
        raise SceneValidationError(violations)
    return s


def _load_json(path: str) -> dict:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SerializationError(f"not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise SerializationError("top level must be an object")
    return doc


def _print_json(doc: dict) -> None:
    click.echo(json.dumps(doc, sort_keys=True, indent=2))


@click.group()
def main():
    """Psyche sphere optics: validate, render, trace, measure, serve."""


@main.command()
@click.argument("file", type=click.Path())
@_guarded
def validate(file):
    """Check a scenario document; exit 2 listing any violations."""
    s = _load_scenario(file)
    violations = validate_scenario(s)
    if violations:
        _echo_violations(violations)
        sys.exit(EXIT_VALIDATION)
    click.echo("ok")


@main.command()
@click.argument("file", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="Where to write the SVG.")
@click.option("--mode", type=click.Choice(["view", "overview", "perspective"]), default="view")
@click.option("--focus", default=None, help="Sphere id for perspective mode.")
@_guarded
def render(file, output, mode, focus):
    """Render a scenario to SVG."""
    s = _load_checked(file)
    if mode == "perspective":
        if not focus:
            raise click.UsageError("--mode perspective needs --focus <sphere id>")
        svg = render_perspective(s, focus)
    elif mode == "overview":
        # a lone file has no fork lineage to show
        svg = render_overview([], s, [])
    else:
        svg = render_view(s)
    Path(output).write_bytes(svg)
    click.echo(f"wrote {output}")


@main.command()
@click.argument("file", type=click.Path())
@click.option("--beam", "beam_id", required=True, help="Beam id to trace.")
@click.option("--json", "json_out", type=click.Path(), default=None, help="Write the full trace here.")
@_guarded
def trace(file, beam_id, json_out):
    """Trace one beam and summarise each resulting path."""
    s = _load_checked(file)
    beam = s.beam(beam_id)
    doc = {"beam": beam.id, "paths": [path_to_doc(p) for p in trace_beam(s, beam)]}
    for i, p in enumerate(doc["paths"]):
        click.echo(f"path {i}: {len(p['points'])} points, {' '.join(p['events'])}")
    if json_out:
        Path(json_out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


@main.command()
@click.argument("file", type=click.Path())
@click.option("--sphere", "sphere_id", required=True, help="Sphere to measure.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rays-per-iter", type=int, default=400, show_default=True)
@click.option("--max-iter", type=int, default=150, show_default=True)
@click.option("--tol", type=float, default=1e-3, show_default=True)
@click.option("--grid-res", type=int, default=64, show_default=True)
@_guarded
def metrics(file, sphere_id, seed, rays_per_iter, max_iter, tol, grid_res):
    """Run the radiance solver and print the equilibrium report as JSON."""
    s = _load_checked(file)
    params = EquilibriumParams(
        rays_per_iter=rays_per_iter, max_iter=max_iter, tol=tol, seed=seed, grid_res=grid_res
    )
    grid, report = compute_equilibrium(s, sphere_id, s.beams, params)
    _print_json(
        {
            "sphere": sphere_id,
            "seed": seed,
            "iterations": report.iterations,
            "converged": report.converged,
            "uniformity": report.uniformity,
            "shadow_fraction": report.shadow_fraction,
            "shadow_regions": len(report.shadow_regions),
            "mean_radiance": list(report.mean_radiance),
            "enlightenment": enlightenment_score(grid, report, s.sphere(sphere_id)),
        }
    )


@main.command()
@click.argument("file", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(), help="Where to write the child.")
@_guarded
def fork(file, output):
    """Fork a scenario into a new child document."""
    s = _load_scenario(file)
    child = fork_scenario(s)
    Path(output).write_bytes(serialize(child))
    click.echo(child.id)


@main.group()
def wave():
    """Waveform superposition and analysis."""


@wave.command()
@click.argument("file_a", type=click.Path())
@click.argument("file_b", type=click.Path())
@_guarded
def superpose(file_a, file_b):
    """Sum two waveform documents and print the result."""
    a = waveform_from_doc(_load_json(file_a))
    b = waveform_from_doc(_load_json(file_b))
    _print_json(waveform_to_doc(superpose_waveforms(a, b)))


@wave.command()
@click.argument("file", type=click.Path())
@click.option("--max-components", type=int, default=8, show_default=True)
@click.option("--floor", type=float, default=0.05, show_default=True)
@_guarded
def decompose(file, max_components, floor):
    """Break a sampled signal into sine components."""
    doc = _load_json(file)
    if "samples" not in doc or "sample_rate" not in doc:
        raise SerializationError("signal file needs samples and sample_rate")
    signal = SampledSignal(
        samples=[float(x) for x in doc["samples"]], sample_rate=float(doc["sample_rate"])
    )
    comps = decompose_signal(signal, max_components=max_components, floor=floor)
    _print_json(waveform_to_doc(Waveform(components=comps, label="decomposed")))


@main.command()
@click.option("--port", type=int, default=8642, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default=None, type=click.Path(), help="Scenario store directory.")
@_guarded
def serve(port, host, data_dir):
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port)


if __name__ == "__main__":
    main()
