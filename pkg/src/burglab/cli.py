"""Command line client for the simulation service.

All subcommands talk HTTP to the service layer.  By default the app is
mounted in-process (httpx ASGI transport), so `burglab simulate ...` works
with no server running; pass --server http://host:port to drive a remote
instance started with `burglab serve`.

Exit status is 0 only when the command succeeded and every requested
verdict passed, so shell pipelines can gate on law checks directly.
Worker count comes from --workers or the BURGLAB_WORKERS environment
variable (default 1).
"""

from __future__ import annotations

import json
import sys

import click
import httpx
import yaml


def _request(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    # no server: mount the app in-process behind the ASGI transport
    import asyncio

    from .service import create_app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://burglab", timeout=None) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _post(ctx: click.Context, path: str, payload: dict) -> dict:
    reply = _request(ctx.obj["server"], path, payload)
    if reply.status_code != 200:
        try:
            detail = reply.json().get("detail", reply.text)
        except ValueError:
            detail = reply.text
        raise click.ClickException(f"{path} failed ({reply.status_code}): {detail}")
    return reply.json()


def _num(value) -> str:
    # JSON transports render NaN as null; error verdicts have no number to show
    return "-" if value is None else f"{value:.6g}"


def _print_verdicts(verdicts: list) -> bool:
    all_passed = True
    for v in verdicts:
        mark = "PASS" if v["passed"] else "FAIL"
        all_passed &= bool(v["passed"])
        err = v.get("details", {}).get("error") if isinstance(v.get("details"), dict) else None
        note = f"  [{err}]" if err else ""
        click.echo(
            f"{mark} {v['law']}: measured={_num(v['measured'])} "
            f"expected={_num(v['expected'])} tol={_num(v['tolerance'])}{note}"
        )
    return all_passed


def _config_payload(config_file, overrides: dict) -> dict:
    base = {}
    if config_file is not None:
        base = yaml.safe_load(config_file.read()) or {}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if "nu" not in base:
        raise click.UsageError("nu is required (flag --nu or config file)")
    return base


def _config_options(fn):
    """Flags mirroring the experiment config; None means 'use the default'."""
    opts = [
        click.option("--config", "config_file", type=click.File("r"), default=None,
                     help="YAML config file; flags override its fields."),
        click.option("--nu", type=float, default=None, help="viscosity (0 selects the inviscid solver)"),
        click.option("--seed", type=int, default=None),
        click.option("--ensemble", type=int, default=None, help="number of trajectories"),
        click.option("--solver", type=click.Choice(["auto", "spectral", "godunov"]), default=None),
        click.option("--forcing", type=str, default=None,
                     help='forcing spec as JSON, e.g. \'{"family":"power_law","decay":2.0,"s_max":8,"intensity":1.0}\''),
        click.option("--truncation", "K", type=int, default=None, help="spectral mode cutoff K"),
        click.option("--n-grid", type=int, default=None, help="dealiasing grid (>= 3K)"),
        click.option("--n-cells", type=int, default=None, help="finite-volume cells"),
        click.option("--cfl", type=float, default=None),
        click.option("--dt-max", type=float, default=None),
        click.option("--safety", type=float, default=None, help="advective dt safety factor"),
        click.option("--fixed-dt", type=float, default=None),
        click.option("--burn-in", type=float, default=None),
        click.option("--window", type=float, default=None, help="stationary averaging window"),
        click.option("--sample-every", type=float, default=None),
        click.option("--n-stats", type=int, default=None, help="grid for increment statistics"),
        click.option("--l-min", type=float, default=None),
        click.option("--l-max", type=float, default=None),
        click.option("--per-decade", type=int, default=None, help="separations per decade"),
        click.option("--p-list", type=str, default=None, help="comma separated moment orders"),
        click.option("--nonlinearity/--no-nonlinearity", default=None),
        click.option("--store-snapshots/--no-store-snapshots", default=None),
        click.option("--store-series/--no-store-series", default=None),
        click.option("--survival-threshold", type=float, default=None),
        click.option("--output-dir", type=str, default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _collect_config(config_file, kwargs: dict) -> dict:
    overrides = dict(kwargs)
    if overrides.get("forcing") is not None:
        overrides["forcing"] = json.loads(overrides["forcing"])
    if overrides.get("p_list") is not None:
        overrides["p_list"] = [float(p) for p in overrides["p_list"].split(",")]
    return _config_payload(config_file, overrides)


@click.group()
@click.option("--server", type=str, default=None, envvar="BURGLAB_SERVER",
              help="base URL of a running service; default runs in-process")
@click.version_option()
@click.pass_context
def main(ctx, server):
    """Stochastic Burgers simulation laboratory."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@_config_options
@click.option("--workers", type=int, default=None, envvar="BURGLAB_WORKERS")
@click.pass_context
def simulate(ctx, config_file, workers, **kwargs):
    """Run (or resume) an ensemble and write its manifest."""
    payload = {"config": _collect_config(config_file, kwargs), "workers": workers}
    reply = _post(ctx, "/simulate", payload)
    manifest = reply["manifest"]
    click.echo(f"status: {manifest['status']}  survival: {manifest['survival']:.0%}")
    click.echo(f"config_hash: {manifest['config_hash']}")
    for name in sorted(manifest["files"]):
        click.echo(f"  {name}  sha256:{manifest['files'][name][:16]}")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--law", "law_ids", multiple=True, help="law id; repeat for several (default: all applicable)")
@click.option("--tolerance", "tolerances", multiple=True, metavar="LAW=VALUE",
              help="override a tolerance, e.g. four_fifths=0.25")
@click.pass_context
def verify(ctx, run_dir, law_ids, tolerances):
    """Evaluate law verdicts on a finished run; exit 0 only if all pass."""
    tols = {}
    for item in tolerances:
        name, _, value = item.partition("=")
        if not value:
            raise click.UsageError(f"--tolerance expects LAW=VALUE, got {item!r}")
        tols[name] = float(value)
    payload = {"run_dir": run_dir, "laws": list(law_ids) or None, "tolerances": tols or None}
    reply = _post(ctx, "/verify", payload)
    if not _print_verdicts(reply["verdicts"]):
        sys.exit(1)


@main.command()
@_config_options
@click.option("--nu-list", type=str, required=True, help="comma separated viscosities")
@click.option("--sweep-dir", type=str, required=True)
@click.option("--workers", type=int, default=None, envvar="BURGLAB_WORKERS")
@click.pass_context
def sweep(ctx, config_file, nu_list, sweep_dir, workers, **kwargs):
    """Run the experiment across viscosities and fit the Sobolev growth laws."""
    cfg = _collect_config(config_file, kwargs)
    payload = {
        "config": cfg,
        "nu_list": [float(v) for v in nu_list.split(",")],
        "sweep_dir": sweep_dir,
        "workers": workers,
    }
    reply = _post(ctx, "/sweep", payload)
    if not _print_verdicts(reply["verdicts"]):
        sys.exit(1)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--mu", type=float, required=True, help="amplitude factor (> 0)")
@click.option("--out-dir", type=str, default=None)
@click.pass_context
def rescale(ctx, run_dir, mu, out_dir):
    """Amplitude-rescaling report: exact mu^p identities and the q=1 check."""
    reply = _post(ctx, "/rescale", {"run_dir": run_dir, "mu": mu, "out_dir": out_dir})
    click.echo(f"viscosity_rescaled: {reply['viscosity_rescaled']:.6g}")
    click.echo(f"dissipation_rescaled: {reply['dissipation_rescaled']:.6g}")
    if not _print_verdicts(reply["verdicts"]):
        sys.exit(1)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.pass_context
def export(ctx, run_dir):
    """Rewrite the CSV tables of a finished run from its reduced statistics."""
    reply = _post(ctx, "/export", {"run_dir": run_dir})
    for name in sorted(reply["files"]):
        click.echo(f"{name}  sha256:{reply['files'][name]}")


@main.command()
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service (for --server / BURGLAB_SERVER clients)."""
    import uvicorn

    uvicorn.run("burglab.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
