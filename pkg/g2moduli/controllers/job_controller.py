"""Batch jobs: resolve the geometry, run one command, write the reports."""
import logging
import os
import warnings
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ..infra.config import Config
from ..infra.errors import AssumedTopologyWarning, ConfigError, G2ModuliError, G2ModuliWarning
from ..infra.io import write_csv, write_json
from ..infra.metrics import measure_time, write_metrics
from ..models.cone import ACThreefoldMesh, HarmonicPair, TorusConeCurve
from ..models.job import LINK_SOURCES, MESH_SOURCES, JobConfig
from ..models.link import LinkSurface
from . import families
from .conops import anticommutation_defect, assemble_dbar, assemble_dirac_sigma, assemble_laplacian
from .g2core import basis
from .link import load_link, pseudoholomorphy_residual
from .moduli import critical_rates, expected_dimension, sl_expected_dimension, sl_report
from .spectral import parse_window, solve_spectrum
from .verify import ac_rate_fit, chi_residual, linearization_check, random_normal_field

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 'g2moduli.summary/1'
TORUS_BETTI = (1, 2, 1)

# name -> list of (file name, columns, rows)
Tables = List[Tuple[str, Tuple[str, ...], np.ndarray]]


def _grid(job: JobConfig, default: Tuple[int, int]) -> Tuple[int, int]:
    return job.parsed.get('grid', default)


def resolve_curve(job: JobConfig) -> TorusConeCurve:
    if job.curve:
        return families.load_curve(job.curve)
    if 'a' in job.parsed:
        a = np.asarray(job.parsed['a'])
        seed = families.find_seed_point(a, job.seed)
    else:
        a, seed = families.find_generic_seed(job.seed)
    return families.trace_torus_cone(a, seed)


def resolve_link(job: JobConfig) -> LinkSurface:
    source = job.link or 'equatorial'
    if source == 'equatorial':
        return families.equatorial_link(*_grid(job, (48, 24)))
    if source == 'sphere124':
        return families.great_sphere_link((1, 2, 4), *_grid(job, (48, 24)))
    if source == 'sl_torus':
        return families.sl_torus_fixture(*_grid(job, (64, 64)))
    if source == 'torus_cone':
        return families.build_torus_link(resolve_curve(job), *_grid(job, (16, 48)))
    if os.path.isfile(source):
        return load_link(source)
    raise ConfigError(f'Unknown link {source!r}', {'links': list(LINK_SOURCES)})


def resolve_mesh(job: JobConfig) -> ACThreefoldMesh:
    source = job.mesh or 'nuv'
    if source == 'nuv':
        pair = HarmonicPair.constant(job.parsed['u'], job.parsed['v'])
        return families.build_nuv(resolve_curve(job), pair, *_grid(job, (32, 32)), rladder=job.rladder)
    if source == 'cone':
        return families.cone_mesh(resolve_curve(job), *_grid(job, (32, 32)), rladder=job.rladder)
    if source == 'plane':
        return families.plane_mesh((1, 2, 3), *_grid(job, (32, 16)), rladder=job.rladder)
    if source == 'plane124':
        return families.plane_mesh((1, 2, 4), *_grid(job, (32, 16)), rladder=job.rladder)
    if source == 'plane+e4':
        return families.plane_mesh((1, 2, 3), *_grid(job, (32, 16)), rladder=job.rladder, offset=basis(4))
    raise ConfigError(f'Unknown mesh {source!r}', {'meshes': list(MESH_SOURCES)})


def _spectrum_table(spectrum) -> Tables:
    rows = np.array([[c.center, c.multiplicity] for c in spectrum.clusters]).reshape(-1, 2)
    return [('spectrum.csv', ('beta', 'multiplicity'), rows)]


def run_spectrum(job: JobConfig):
    link = resolve_link(job)
    if job.operator == 'laplacian':
        op = assemble_laplacian(link)
    elif job.operator == 'dirac':
        op = assemble_dirac_sigma(link)
    else:
        op = assemble_dbar(link)
        anticommutation_defect(op, Config.DEFECT_SAMPLES, job.seed)
    spectrum = solve_spectrum(op, parse_window(job.window), tol=job.parsed.get('tol'), seed=job.seed)
    return {'link': link.name, 'spectrum': spectrum.to_dict()}, _spectrum_table(spectrum)


def run_moduli_dim(job: JobConfig):
    link = resolve_link(job)
    op = assemble_dbar(link)
    spectrum = solve_spectrum(op, parse_window(job.window), tol=job.parsed.get('tol'), seed=job.seed)
    report = expected_dimension(critical_rates(spectrum), job.parsed['lambda'])
    index_rows = np.array([[row['interval'][0], row['interval'][1], row['index']]
                           for row in report.index_table]).reshape(-1, 3)
    tables = _spectrum_table(spectrum) + [('index.csv', ('lo', 'hi', 'index'), index_rows)]
    return {'link': link.name, **report.to_dict()}, tables


def run_verify_associative(job: JobConfig):
    if job.link:
        link = resolve_link(job)
        residual = pseudoholomorphy_residual(link)
        return {'link': link.name, 'pseudoholomorphy_residual': residual}, []
    mesh = resolve_mesh(job)
    chi = chi_residual(mesh)
    results: Dict[str, Any] = {'mesh': mesh.name, **chi.to_dict(), 'associative': chi.associative}
    tables: Tables = []
    if job.mesh in (None, 'nuv'):
        field = random_normal_field(mesh, job.seed)
        report = linearization_check(mesh, 1e-2 * field / np.max(np.abs(field)))
        results['linearization'] = report
        tables.append(('linearization.csv', ('t', 'e'), np.column_stack([report['t'], report['error']])))
    return results, tables


def run_trace_cone(job: JobConfig):
    curve = resolve_curve(job)
    results: Dict[str, Any] = {'curve': curve.to_dict()}
    if curve.closed:
        link = families.build_torus_link(curve, *_grid(job, (16, 48)))
        results['pseudoholomorphy_residual'] = pseudoholomorphy_residual(link)
    rows = np.column_stack([curve.t, curve.samples])
    return results, [('curve.csv', families.CURVE_COLUMNS, rows)]


def run_build_nuv(job: JobConfig):
    job.mesh = 'nuv'
    mesh = resolve_mesh(job)
    chi = chi_residual(mesh)
    R, S, T = np.meshgrid(mesh.r, mesh.s, mesh.t, indexing='ij')
    rows = np.column_stack([R.ravel(), S.ravel(), T.ravel(), mesh.psi.reshape(-1, 7)])
    results = {'mesh': mesh.name, 'shape': list(mesh.shape), 'metadata': mesh.metadata, 'chi': chi.to_dict()}
    return results, [('mesh.csv', families.MESH_COLUMNS, rows)]


def run_rate_fit(job: JobConfig):
    mesh = resolve_mesh(job)
    fit = ac_rate_fit(mesh)
    rows = np.column_stack([fit.r, fit.sup_distance])
    return {'mesh': mesh.name, 'claimed_rate': mesh.claimed_rate, **fit.to_dict()}, \
        [('rate_fit.csv', ('r', 'sup_distance'), rows)]


def run_sl_compare(job: JobConfig):
    job.link = job.link or 'sl_torus'
    link = resolve_link(job)
    op = assemble_laplacian(link)
    window = parse_window(job.window)
    spectrum = solve_spectrum(op, (min(window[0], -0.5), max(window[1], 0.0)), tol=job.parsed.get('tol'),
                              seed=job.seed)
    betti = job.parsed.get('betti')
    if betti is None:
        betti = TORUS_BETTI
        warnings.warn(f'No --betti given, assuming the torus numbers {TORUS_BETTI}', AssumedTopologyWarning)
    slr = sl_report(spectrum, betti)
    results: Dict[str, Any] = {'link': link.name, **slr.to_dict()}
    if 'lambda' in job.parsed:
        results['lambda'] = job.parsed['lambda']
        results['expected_dim'] = sl_expected_dimension(slr, job.parsed['lambda'])
    return results, _spectrum_table(spectrum)


HANDLERS: Dict[str, Callable[[JobConfig], Tuple[Dict[str, Any], Tables]]] = {
    'spectrum': run_spectrum,
    'moduli-dim': run_moduli_dim,
    'verify-associative': run_verify_associative,
    'trace-cone': run_trace_cone,
    'build-nuv': run_build_nuv,
    'rate-fit': run_rate_fit,
    'sl-compare': run_sl_compare,
}


def emit_report(job: JobConfig, results: Dict[str, Any], tables: Tables,
                notes: List[str], error: Optional[G2ModuliError] = None) -> List[str]:
    """Writes summary.json and the CSV tables into the output directory"""
    summary: Dict[str, Any] = {
        'schema_version': SCHEMA_VERSION,
        'command': job.command,
        'config': job.to_dict(),
        'results': results,
        'error': None if error is None else error.to_dict(),
        'warnings': notes,
        'timestamp': datetime.now(timezone.utc).isoformat(),
    }
    paths = [write_json(os.path.join(job.out, 'summary.json'), summary)]
    for name, columns, rows in tables:
        paths.append(write_csv(os.path.join(job.out, name), columns, rows))
    if Config.METRICS_FILE:
        write_metrics(Config.METRICS_FILE)
    else:
        write_metrics(os.path.join(job.out, 'metrics.prom'))
    return paths


@measure_time('job')
def run(job: JobConfig) -> int:
    """Runs one job and returns its exit status"""
    results: Dict[str, Any] = {}
    tables: Tables = []
    error = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', G2ModuliWarning)
        try:
            job.validate()
            results, tables = HANDLERS[job.command](job)
            code = 0
        except G2ModuliError as exc:
            error, code = exc, exc.exit_code
            logger.error('%s failed (%s): %s', job.command, exc.kind, exc.message)
        except Exception as exc:
            error = G2ModuliError(f'{type(exc).__name__}: {exc}', {'exception': type(exc).__name__})
            code = error.exit_code
            logger.exception('%s failed unexpectedly', job.command)
    notes = [str(w.message) for w in caught if issubclass(w.category, G2ModuliWarning)]
    emit_report(job, results, tables, notes, error)
    logger.info('%s finished with exit status %d', job.command, code)
    return code
