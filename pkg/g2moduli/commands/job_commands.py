import sys

import click

from ..controllers.job_controller import run
from ..models.job import COMMANDS, JobConfig

jobs = click.Group('g2moduli', help='Deformation theory of asymptotically conical associative 3-folds.')


def job_options(f):
    """Flags shared by every command; each overrides the --config file"""
    options = [
        click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False),
                     help='KEY=value file with defaults for the flags below'),
        click.option('--link', help='equatorial, sphere124, sl_torus, torus_cone or a link CSV'),
        click.option('--mesh', help='nuv, cone, plane, plane124 or plane+e4'),
        click.option('--curve', type=click.Path(dir_okay=False), help='Traced constraint curve CSV'),
        click.option('--grid', help='Grid size WxH'),
        click.option('--rladder', help='Radial ladder R1:R2:n'),
        click.option('--lambda', 'lambda_', help='Weight rate'),
        click.option('--window', help='Spectral window lo:hi'),
        click.option('--tol', help='Eigenvalue cluster tolerance'),
        click.option('--seed', help='Random seed'),
        click.option('--out', help='Output directory'),
        click.option('--u', help='Constant u of N(u, v)'),
        click.option('--v', help='Constant v of N(u, v)'),
        click.option('--betti', help='b0,b1,b2 of the link'),
        click.option('--a', help='a1,a2,a3,a4 of the torus cone'),
        click.option('--operator', type=click.Choice(['dbar', 'dirac', 'laplacian']), help='Operator to solve'),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _register(name: str) -> None:
    @job_options
    def command(config_file, **options):
        job = JobConfig.from_options(name, options, config_file)
        sys.exit(run(job))

    jobs.command(name)(command)


# Registering commands
for _name in COMMANDS:
    _register(_name)
