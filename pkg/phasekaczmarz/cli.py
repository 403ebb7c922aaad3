# /phasekaczmarz/phasekaczmarz/cli.py

import sys

import click
import numpy as np

from . import configure_logging, jobs
from .analysis import decay_ok
from .config import Config, load_experiment_config
from .errors import DigestMismatch, PhaseKaczmarzError
from .models import Provenance
from .util import resolve_threads, write_json

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2

SEED = click.IntRange(0, 2**64 - 1)
POSITIVE = click.IntRange(min=1)
UNIT_OPEN = click.FloatRange(0.0, 1.0, min_open=True, max_open=True)
DISTRIBUTIONS = {
    'sphere': Provenance.UNIFORM_SPHERE,
    'gaussian': Provenance.GAUSSIAN_NORMALIZED,
}


class ThreadsType(click.ParamType):
    name = 'n|auto'

    def convert(self, value, param, ctx):
        try:
            return resolve_threads(value)
        except PhaseKaczmarzError as e:
            self.fail(str(e), param, ctx)


class PhaseKaczmarzGroup(click.Group):
    """
    Maps outcomes to exit codes: 0 success, 1 usage / I/O / parse errors,
    2 semantic failures (failed certification, digest mismatch).
    """

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as e:
            e.show()
            code = EXIT_USAGE
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo('Aborted!', err=True)
            code = EXIT_USAGE
        except DigestMismatch as e:
            click.echo(f"Error: {e}", err=True)
            code = EXIT_FAILED
        except (PhaseKaczmarzError, OSError) as e:
            click.echo(f"Error: {e}", err=True)
            code = EXIT_USAGE
        if standalone_mode:
            sys.exit(code)
        return code


def _load_config(ctx, param, value):
    if value is not None:
        try:
            ctx.default_map = load_experiment_config(value)
        except PhaseKaczmarzError as e:
            raise click.BadParameter(str(e), ctx=ctx, param=param)
    return value


def threads_option(func):
    return click.option('--threads', type=ThreadsType(), default=Config.THREADS,
                        envvar='PHASEKACZMARZ_THREADS', show_default=True,
                        help='Worker threads (integer or auto).')(func)


def _parse_radii(ctx, param, value):
    if isinstance(value, (list, tuple)):
        value = ','.join(str(v) for v in value)
    try:
        radii = [float(r) for r in value.split(',') if r.strip()]
    except ValueError:
        raise click.BadParameter('radii must be a comma-separated list of numbers')
    if not radii or any(not r > 0 for r in radii):
        raise click.BadParameter('radii must be positive')
    return radii


@click.group(cls=PhaseKaczmarzGroup)
@click.option('--config', type=click.Path(exists=True, dir_okay=False), is_eager=True,
              expose_value=False, callback=_load_config,
              help='JSON experiment file; explicit flags override its values.')
def cli():
    """Phase-adapting randomized Kaczmarz experiments."""
    configure_logging(Config)


@cli.command('gen')
@click.option('--d', 'd', type=POSITIVE, required=True)
@click.option('--m', 'm', type=POSITIVE, required=True)
@click.option('--dist', type=click.Choice(sorted(DISTRIBUTIONS)), default='sphere', show_default=True)
@click.option('--seed', type=SEED, default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), required=True)
def cmd_gen(d, m, dist, seed, out):
    """Generate a measurement system file."""
    system = jobs.gen_system_job(d, m, DISTRIBUTIONS[dist], seed, out)
    click.echo(f"digest={system.digest}")
    return EXIT_OK


@cli.command('observe')
@click.option('--system', 'system_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--truth', 'truth_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--signed', is_flag=True, help='Write signed measurements for linear mode.')
@click.option('--out', type=click.Path(dir_okay=False), required=True)
def cmd_observe(system_path, truth_path, signed, out):
    """Observe a truth vector through a system."""
    observation = jobs.observe_job(system_path, truth_path, out, signed=signed)
    click.echo(f"m={observation.m} digest={observation.system_digest}")
    return EXIT_OK


@cli.command('solve')
@click.option('--system', 'system_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--obs', 'obs_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--truth', 'truth_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--x0', 'x0_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--init-err', type=click.FloatRange(0.0, 1.0, max_open=True), default=0.05, show_default=True,
              help='Relative initial error when x0 is synthesised from the truth.')
@click.option('--mode', type=click.Choice(['phase', 'linear']), default='phase', show_default=True)
@click.option('--steps', type=POSITIVE, default=1000, show_default=True)
@click.option('--stop-tol', type=click.FloatRange(min=0.0), default=None)
@click.option('--trace-every', type=POSITIVE, default=1, show_default=True)
@click.option('--seed', type=SEED, default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), required=True)
@click.option('--meta', 'meta_path', type=click.Path(dir_okay=False))
def cmd_solve(system_path, obs_path, truth_path, x0_path, init_err, mode, steps, stop_tol, trace_every,
              seed, out, meta_path):
    """Run the Kaczmarz solver and write a trace."""
    if not obs_path and not truth_path:
        raise click.UsageError('give --obs or --truth')
    if not truth_path and not x0_path:
        raise click.UsageError('--x0 is required without --truth')
    trace = jobs.solve_job(system_path, mode, steps, seed, out, obs_path=obs_path, truth_path=truth_path,
                           x0_path=x0_path, init_err=init_err, stop_tol=stop_tol,
                           trace_every=trace_every, meta_path=meta_path)
    if trace.has_ground_truth:
        click.echo(f"final_sq_error={trace.final_sq_error():.6e}")
    else:
        click.echo(f"final_iterate_norm={float(np.linalg.norm(trace.final_iterate)):.6e}")
    return EXIT_OK


@cli.command('certify')
@click.option('--system', 'system_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--delta', type=UNIT_OPEN, required=True)
@click.option('--pairs', 'n_pairs', type=POSITIVE, default=10_000, show_default=True)
@click.option('--dirs', 'n_dirs', type=POSITIVE, default=2_000, show_default=True)
@click.option('--seed', type=SEED, default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), required=True)
def cmd_certify(system_path, delta, n_pairs, n_dirs, seed, out):
    """Certify delta-admissibility; exit 2 when any condition fails."""
    report = jobs.certify_job(system_path, delta, n_pairs, n_dirs, seed, out=out)
    verdicts = ' '.join(f"{c.name}={'pass' if c.passed else 'fail'}" for c in report.conditions)
    click.echo(f"overall={'pass' if report.overall else 'fail'} {verdicts}")
    return EXIT_OK if report.overall else EXIT_FAILED


def _system_options(func):
    func = click.option('--system', 'system_path', type=click.Path(exists=True, dir_okay=False))(func)
    func = click.option('--truth', 'truth_path', type=click.Path(exists=True, dir_okay=False))(func)
    func = click.option('--d', 'd', type=POSITIVE, help='Dimension of a generated system.')(func)
    func = click.option('--m', 'm', type=POSITIVE, help='Size of a generated system.')(func)
    return func


def _require_system(system_path, d, m):
    if not system_path and (d is None or m is None):
        raise click.UsageError('give --system or both --d and --m')


@cli.command('drift')
@_system_options
@click.option('--delta', type=UNIT_OPEN, required=True, help='b = delta |x|.')
@click.option('--eps', type=click.FloatRange(0.0, 1.0, max_open=True), required=True,
              help='Initial error is eps * b.')
@click.option('--trials', 'n_trials', type=POSITIVE, default=500, show_default=True)
@click.option('--steps', 'horizon', type=POSITIVE, default=None, help='Horizon K (default 400 d).')
@click.option('--record-every', type=POSITIVE, default=None)
@click.option('--seed', type=SEED, default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), required=True)
@click.option('--csv', 'csv_out', type=click.Path(dir_okay=False))
@threads_option
def cmd_drift(system_path, truth_path, d, m, delta, eps, n_trials, horizon, record_every, seed, out,
              csv_out, threads):
    """Monte Carlo escape / decay experiment."""
    _require_system(system_path, d, m)
    report = jobs.drift_job(delta, eps, n_trials, seed, out=out, csv_out=csv_out, system_path=system_path,
                            truth_path=truth_path, d=d, m=m, horizon=horizon, record_every=record_every,
                            threads=threads)
    click.echo(f"escapes={report.escape_count}/{report.n_trials} bound={report.escape_bound:.6g} "
               f"decay_ok={str(decay_ok(report)).lower()}")
    return EXIT_OK


@cli.command('sweep')
@_system_options
@click.option('--radii', callback=_parse_radii, default='0.01', show_default=True,
              help='Comma-separated shell radii.')
@click.option('--states', 'n_states', type=POSITIVE, default=200, show_default=True)
@click.option('--delta', type=UNIT_OPEN, default=None, help='Also report the admissible chain bound.')
@click.option('--seed', type=SEED, default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), required=True)
@click.option('--csv', 'csv_out', type=click.Path(dir_okay=False))
@threads_option
def cmd_sweep(system_path, truth_path, d, m, radii, n_states, delta, seed, out, csv_out, threads):
    """Exact one-step contraction ratios on error shells."""
    _require_system(system_path, d, m)
    rows = jobs.sweep_job(radii, n_states, seed, out=out, csv_out=csv_out, system_path=system_path,
                          truth_path=truth_path, d=d, m=m, delta=delta, threads=threads)
    for row in rows:
        click.echo(f"r={row.radius:.6g} max_ratio={row.max_ratio:.6f} mean_ratio={row.mean_ratio:.6f} "
                   f"rho={row.rho:.6f}")
    return EXIT_OK


@cli.command('moments')
@click.option('--d', 'd', type=POSITIVE, required=True)
@click.option('--n', 'n_samples', type=click.IntRange(min=2), default=100_000, show_default=True)
@click.option('--seed', type=SEED, default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), help='Also write the table as JSON.')
def cmd_moments(d, n_samples, seed, out):
    """Closed-form sphere moments against Monte Carlo estimates."""
    rows = jobs.moments_job(d, n_samples, seed)
    click.echo(jobs.format_moments_table(rows))
    if out:
        write_json([{'moment': name, 'closed_form': exact, 'monte_carlo': value, 'std_error': se}
                    for name, exact, value, se in rows], out)
    return EXIT_OK
