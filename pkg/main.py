"""
Main orchestrator - runs task configs, exports and the acceptance suite
"""
import argparse
import logging
import os
import sys
import time
from datetime import datetime
from typing import Any, Dict, List, Mapping, Optional

from colorama import Fore, Style, init as colorama_init

# Add src to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import config
from src.acceptance import VerifySummary, run_suite
from src.bounds import (CLOSED_BOUNDS, LT_VARIANTS, BoundReport, bargmann_1d, bargmann_general,
                        clr_estimate, family_closed_bound, lieb_thirring_bound,
                        refined_bargmann_1d_continuum)
from src.continuum1d import (GridPotential, dense_count, load_grid_potential, prufer_count,
                             square_well, verify_continuum_bounds)
from src.core import (Family, ModelSpec, Potential, Seed, Site, ToleranceConfig, as_site, box_sites,
                      load_potential_file, make_potential)
from src.database import RunLedger
from src.errors import InvariantViolation, SpectralError, ValidationError
from src.families import get_family
from src.kernels import (KillingSpec, green2d_expansion, heat_kernel, hier_log_periodic,
                         killed_heat_diagonal, regularized_resolvent_table, resolvent,
                         resolvent_row_sum)
from src.operators import assemble_h, assemble_h0
from src.reports import RunReport, TaskConfig, audit_method_tags, default_report_path
from src.spectra import birman_schwinger_count, n0_count
from src.walks import (HITTING_CDF_COLUMNS, WalkConfig, hitting_cdf_experiment, hitting_time,
                       jump_rank_histogram, killed_survival, laplace_hitting_exact,
                       laplace_hitting_mc, occupation_time)
from src.witnesses import (certify_lower_bound, check_certificate, disjoint_bumps, nested_layers,
                           single_delta_eigenvalue, sparse_multiwell, square_layer_2d)

# Setup logging
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(config.LOG_FILE),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger(__name__)


class SpectralToolkit:
    """Runs tasks against the spectral modules and records every run"""

    def __init__(self, ledger: Optional[RunLedger] = None, output_dir: Optional[str] = None):
        logger.info("Initializing spectral toolkit")

        self.ledger = ledger or RunLedger()
        self.output_dir = output_dir or config.OUTPUT_DIR
        self.tol = ToleranceConfig()
        self._handlers = {
            'count': self._run_count,
            'bound': self._run_bound,
            'resolvent': self._run_resolvent,
            'heat': self._run_heat,
            'walk': self._run_walk,
            'witness': self._run_witness,
            'continuum': self._run_continuum,
            'verify': self._run_verify,
        }

        # Ensure output directory exists
        os.makedirs(self.output_dir, exist_ok=True)

        logger.info("✅ Toolkit initialized")

    # Runs

    def run(self, config_path: str, seed: Optional[int] = None, out: Optional[str] = None,
            fmt: Optional[str] = None, emit_contributions: bool = False,
            max_box: Optional[int] = None) -> RunReport:
        """
        Execute one task config and write its report

        Args:
            config_path: JSON task document
            seed: overrides the config seed and SPECTRAL_SEED
            out: report path (the config's output.path, else OUTPUT_DIR)
            fmt: json or csv (the config's output.format by default)
            emit_contributions: also write per-site bound terms as CSV
            max_box: cap on expanding boxes

        Returns:
            RunReport
        """
        task = TaskConfig.from_file(config_path, seed)
        fmt = fmt or task.output.format
        path = out or task.output.path or default_report_path(task.task, task.digest, fmt, self.output_dir)

        logger.info("=" * 60)
        logger.info(f"🚀 Running {task.task} task from {config_path} (seed {task.seed.value})")
        logger.info("=" * 60)

        start = time.time()
        try:
            results = self._handlers[task.task](task, max_box)
            bound: Optional[BoundReport] = results.pop('bound', None)
            if bound is not None:
                results = {**bound.to_dict(), **results}
            audit_method_tags(results)
        except SpectralError as e:
            self.ledger.record_run(task.task, task.digest, task.seed.value, e.exit_code,
                                   time.time() - start, message=str(e))
            raise
        report = RunReport(task.task, task.digest, results, config.TOOL_VERSION, time.time() - start)
        report.write(path, fmt)
        if emit_contributions and bound is not None:
            self._write_contributions(bound, path)

        run_id = self.ledger.record_run(task.task, task.digest, task.seed.value,
                                        results.get('exit_code', 0), report.wall_time, report_path=path)
        if bound is not None:
            self.ledger.record_bound(run_id, bound.to_dict(), results.get('n0'))

        logger.info(f"✅ {task.task} finished in {report.wall_time:.2f}s")
        return report

    def execute(self, task: TaskConfig, max_box: Optional[int] = None) -> Dict[str, Any]:
        """Results payload of a validated task, without writing or recording it"""
        results = self._handlers[task.task](task, max_box)
        bound = results.pop('bound', None)
        if bound is not None:
            results = {**bound.to_dict(), **results}
        audit_method_tags(results)
        return results

    # Inputs

    def _potential(self, task: TaskConfig) -> Potential:
        spec = task.potential or {}
        if 'file' in spec:
            return load_potential_file(spec['file'])
        if 'kind' not in spec:
            raise ValidationError("lattice tasks need potential.kind or potential.file", field='potential')
        return make_potential(spec['kind'], spec.get('params', {}), task.seed, task.model)

    def _grid_potential(self, task: TaskConfig) -> GridPotential:
        spec = task.potential or {}
        if 'file' in spec:
            return load_grid_potential(spec['file'])
        if 'square_well' in spec:
            well = spec['square_well']
            return square_well(float(well['depth']), float(well.get('half_width', 1.0)))
        if 'grid' in spec:
            pairs = spec['grid']
            return GridPotential([float(x) for x, _ in pairs], [float(v) for _, v in pairs])
        raise ValidationError("continuum tasks need potential.grid, square_well or file",
                              field='potential')

    def _site(self, task: TaskConfig, name: str, default: Optional[Site] = None) -> Site:
        value = task.params.get(name)
        if value is None:
            if default is not None:
                return default
            return as_site(0, task.model.dim)
        return as_site(value, task.model.dim)

    # Task handlers

    def _run_count(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        v = self._potential(task)
        gamma = task.params.get('gamma')
        summary = n0_count(task.model, v, self.tol, gamma=gamma,
                           max_box=max_box or task.params.get('max_box'))
        results = summary.to_dict()
        if 'lambda' in task.params:
            results['birman_schwinger'] = {
                'lambda': task.params['lambda'],
                'count': birman_schwinger_count(task.model, v, float(task.params['lambda']), self.tol),
                'method': 'dense',
            }
        logger.info(f"📊 N0 = {summary.n0} on box {summary.box_radius_used}")
        return results

    def _run_bound(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        params = task.params
        bound_id = params['bound_id']
        model = task.model
        v = self._potential(task)
        x0 = self._site(task, 'x0') if 'x0' in params else None
        sigma = float(params.get('sigma', 1.0))

        if bound_id == 'bargmann_general':
            report = bargmann_general(model, v, x0, self.tol, override=bool(params.get('override')))
        elif bound_id == 'bargmann_1d':
            model.require(Family.Z1)
            report = bargmann_1d(v)
        elif bound_id in ('clr', 'clr_dirichlet', 'clr_killed'):
            killing = params.get('killing')
            killed = KillingSpec.from_dict(killing, model.dim) if killing else None
            if (bound_id == 'clr') != (killed is None):
                raise ValidationError(f"{bound_id} needs {'no' if bound_id == 'clr' else 'a'} killing spec",
                                      field='params.killing')
            report = clr_estimate(model, v, sigma, killed, self.tol)
        elif bound_id in CLOSED_BOUNDS:
            closed = dict(params)
            if x0 is not None:
                closed['x0'] = x0
            closed.setdefault('seed', task.seed.value)
            report = family_closed_bound(bound_id, model, v, closed, self.tol)
        elif bound_id in LT_VARIANTS:
            if 'gamma' not in params:
                raise ValidationError("Lieb-Thirring bounds need params.gamma", field='params.gamma')
            report = lieb_thirring_bound(bound_id, model, v, float(params['gamma']),
                                         params.get('Lambda'), sigma, x0, self.tol)
        else:
            raise ValidationError(f"Unknown bound id '{bound_id}'", field='params.bound_id')

        results: Dict[str, Any] = {'bound': report}
        if params.get('compare', True):
            gamma = float(params['gamma']) if bound_id in LT_VARIANTS else None
            summary = n0_count(model, v, self.tol, gamma=gamma, max_box=max_box)
            results['n0'] = summary.n0
            # Lieb-Thirring bounds dominate S_gamma, every other bound dominates N0
            target_name, target = ('s_gamma', summary.s_gamma) if gamma is not None else ('n0', summary.n0)
            if gamma is not None:
                results['s_gamma'] = target
            results['slack'] = report.value - target
            logger.info(f"📊 {bound_id} = {report.value:.6g} against {target_name} = {target:.6g}")
            if results['slack'] < -self.tol.neg_threshold * max(1.0, abs(target)):
                message = f"{bound_id} = {report.value!r} is below {target_name} = {target!r}"
                if report.is_exact:
                    raise InvariantViolation(message)
                logger.warning(f"⚠️  {message}; calibrated constants only dominate their corpus")
        return results

    def _run_resolvent(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        params = task.params
        model = task.model
        kind = params.get('kind', 'resolvent')
        if kind == 'resolvent':
            lam = float(params.get('lambda', 0.5))
            return resolvent(model, lam, self._site(task, 'x'), self._site(task, 'y'), self.tol).to_dict()
        if kind == 'regularized':
            x0 = self._site(task, 'x0')
            sites = [as_site(s, model.dim) for s in params.get('sites', [])] or box_sites(model)
            table = regularized_resolvent_table(model, x0, sites, self.tol,
                                                allow_transient=bool(params.get('override')))
            return {'x0': x0, 'values': [[*s.coords, value] for s, value in table.table.items()],
                    'method': table.method}
        if kind == 'row_sum':
            total, method = resolvent_row_sum(model, float(params.get('lambda', 0.5)),
                                              self._site(task, 'y'), int(params.get('radius', 50)),
                                              self.tol)
            return {'sum': total, 'method': method}
        if kind == 'green2d':
            expansion = green2d_expansion(int(params.get('x_range', 3)), self.tol)
            return {'alpha': expansion.alpha_const, 'consistency': expansion.consistency,
                    'u': [[*s.coords, value] for s, value in expansion.u.items()],
                    'method': 'quadrature'}
        raise ValidationError(f"Unknown resolvent kind '{kind}'", field='params.kind')

    def _run_heat(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        params = task.params
        model = task.model
        times = params['t'] if isinstance(params['t'], list) else [params['t']]
        x = self._site(task, 'x')
        kind = params.get('kind', 'free')
        if kind == 'free':
            y = self._site(task, 'y', default=x)
            method = get_family(model).heat_kernel(model, 1.0, x, y, self.tol)[1]
            samples = [[float(t), heat_kernel(model, float(t), x, y, self.tol)] for t in times]
            return {'x': x, 'y': y, 'samples': samples, 'method': method}
        if kind == 'killed':
            killed = KillingSpec.from_dict(params.get('killing', {'x0': 0}), model.dim)
            samples = [[float(t), killed_heat_diagonal(model, killed, float(t), x, tol=self.tol)]
                       for t in times]
            return {'x': x, 'samples': samples, 'method': 'dense'}
        if kind == 'log_periodic':
            profile = hier_log_periodic(model, x, [float(t) for t in times])
            return {'s_h': profile.s_h, 'correlation': profile.correlation,
                    'max_deviation': profile.max_deviation,
                    'profile': [list(pair) for pair in zip(profile.phases, profile.values)],
                    'method': 'series'}
        raise ValidationError(f"Unknown heat kind '{kind}'", field='params.kind')

    def _walk_config(self, task: TaskConfig, start: Site) -> WalkConfig:
        params = task.params
        return WalkConfig(task.model, start, float(params.get('t_cap', 1e4)),
                          int(params.get('step_cap', 10 ** 7)), task.seed,
                          int(params.get('n_walks', 1000)), params.get('workers'),
                          bool(params.get('progress', False)))

    def _run_walk(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        params = task.params
        experiment = params['experiment']
        dim = task.model.dim
        start = self._site(task, 'start')
        target = self._site(task, 'target')

        if experiment == 'hitting_time':
            return {'hit_probability': hitting_time(self._walk_config(task, start), target).to_dict()}
        if experiment == 'laplace':
            lam = float(params.get('lambda', 0.5))
            stats = laplace_hitting_mc(self._walk_config(task, start), target, lam)
            exact = laplace_hitting_exact(task.model, start, target, lam, self.tol)
            return {'mc': stats.to_dict(), 'exact': {'value': exact, 'method': 'closed_form'},
                    'within_3se': stats.within(exact)}
        if experiment == 'hitting_cdf':
            distance = int(params.get('distance', 40))
            rows = hitting_cdf_experiment(distance, params.get('alpha_grid', [2.0, 3.0, 4.0]),
                                          self._walk_config(task, as_site(distance, dim)))
            return {'table': {'columns': HITTING_CDF_COLUMNS, 'rows': [r.as_row() for r in rows],
                              'method': 'mc'}}
        if experiment == 'killed_survival':
            q = params.get('q')
            killing = float(q) if isinstance(q, (int, float)) else make_potential(
                'explicit', {'entries': q or {}, 'dim': dim}, task.seed, task.model)
            t = params.get('t')
            return {'survival': killed_survival(self._walk_config(task, start), killing,
                                                float(t) if t is not None else None).to_dict()}
        if experiment == 'occupation':
            region = [as_site(s, dim) for s in params.get('region', [0])]
            return {'occupation': occupation_time(self._walk_config(task, start), region).to_dict()}
        if experiment == 'rank_histogram':
            sample = jump_rank_histogram(self._walk_config(task, start), int(params.get('n_jumps', 10000)))
            return {'holding_mean': sample.holding_mean, 'holding_se': sample.holding_se,
                    'observed': sample.observed, 'expected': sample.expected,
                    'p_value': sample.p_value, 'method': 'mc'}
        raise ValidationError(f"Unknown walk experiment '{experiment}'", field='params.experiment')

    def _run_witness(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        spec = task.params['functions']
        model = task.model
        kind = spec.get('kind') if isinstance(spec, Mapping) else None

        if kind == 'single_delta':
            value = single_delta_eigenvalue(model, float(spec['v']), self._site(task, 'site'), self.tol,
                                            spec.get('method', 'auto'))
            return {'eigenvalue': value, 'bound': value is not None,
                    'method': 'closed_form' if model.family == Family.Z1 else 'quadrature'}
        if kind == 'multiwell':
            result = sparse_multiwell(model, [float(a) for a in spec['amplitudes']], self.tol,
                                      spec.get('max_radius'))
            return {'certificate': result.certificate.to_dict(),
                    'positions': result.positions, 'radii': result.radii,
                    'notes': result.notes, 'method': 'dense'}

        v = self._potential(task)
        if kind == 'disjoint_bumps':
            functions = disjoint_bumps(int(spec.get('count', 5)), int(spec.get('first', 3)))
        elif kind == 'nested_layers':
            functions = nested_layers(v, int(spec.get('count', 3)), int(spec.get('l_max', 64)),
                                      int(spec.get('k', 0)))
        elif kind == 'square_layer':
            functions = [square_layer_2d(int(spec['k']), int(spec['l']))]
        else:
            raise ValidationError(f"Unknown test-function kind '{kind}'", field='params.functions.kind')
        certificate = certify_lower_bound(model, v, functions, self.tol)
        results: Dict[str, Any] = {'certificate': certificate.to_dict(), 'method': 'dense'}
        if task.params.get('confirm', True):
            results['confirmed_count'] = check_certificate(model, v, certificate, self.tol)
        logger.info(f"📊 Certified N0 >= {certificate.m}")
        return results

    def _run_continuum(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        params = task.params
        v = self._grid_potential(task)
        sigma = float(params.get('sigma', 1.0))
        prufer = prufer_count(v)
        comparison = verify_continuum_bounds(v, sigma)
        refined = refined_bargmann_1d_continuum(v, sigma, self.tol)
        results: Dict[str, Any] = {
            'count': prufer.node_count,
            'final_angle': prufer.final_angle,
            'bargmann': bargmann_1d(v).to_dict(),
            'refined_bargmann': refined.to_dict(),
            'comparison': comparison.to_dict(),
            'method': 'quadrature',
        }
        if params.get('dense_check'):
            results['dense_count'] = dense_count(v)
        if 'gamma' in params:
            gamma = float(params['gamma'])
            variants = ['continuum_lt'] + (['continuum_small_gamma'] if gamma < 0.5 else [])
            results['lieb_thirring'] = {name: lieb_thirring_bound(name, None, v, gamma).to_dict()
                                        for name in variants}
        return results

    def _run_verify(self, task: TaskConfig, max_box: Optional[int]) -> Dict[str, Any]:
        summary = run_suite(task.params.get('suite'), task.seed)
        self.print_summary(summary)
        return summary.to_dict()

    # Exports and verification

    def _write_contributions(self, bound: BoundReport, report_path: str) -> str:
        path = os.path.splitext(report_path)[0] + '_contributions.csv'
        bound.write_contributions(path)
        logger.info(f"Contributions written to {path}")
        return path

    def verify(self, selector: Optional[str] = None, seed: Optional[int] = None,
               out: Optional[str] = None) -> VerifySummary:
        """Run the acceptance suite and record it in the ledger"""
        task = TaskConfig.from_dict({'task': 'verify', 'params': {'suite': selector or 'all'}}, seed)
        start = time.time()
        summary = run_suite(selector, task.seed)
        self.print_summary(summary)
        payload = summary.to_dict()
        audit_method_tags(payload)
        report = RunReport('verify', task.digest, payload, config.TOOL_VERSION, time.time() - start)
        if out:
            report.write(out, 'json')
        failed = ', '.join(f"criterion {r.number}" for r in summary.failures)
        self.ledger.record_run('verify', task.digest, task.seed.value, summary.exit_code,
                               report.wall_time, report_path=out, message=failed or None)
        return summary

    def export_matrix(self, config_path: str, out: str) -> str:
        """Triplet file of H (or H0 when the config has no potential)"""
        task = TaskConfig.from_file(config_path)
        if task.model is None:
            raise ValidationError("export-matrix needs a model section", field='model')
        h = assemble_h(task.model, self._potential(task)) if task.potential else assemble_h0(task.model)
        h.export_text(out)
        return out

    def export_rtilde(self, config_path: str, out: str) -> str:
        """R-tilde(x, x0) over the model's box (or params.sites)"""
        task = TaskConfig.from_file(config_path)
        if task.model is None:
            raise ValidationError("export-rtilde needs a model section", field='model')
        sites = [as_site(s, task.model.dim) for s in task.params.get('sites', [])] or box_sites(task.model)
        table = regularized_resolvent_table(task.model, self._site(task, 'x0'), sites, self.tol,
                                            allow_transient=bool(task.params.get('override')))
        table.to_csv(out)
        return out

    def print_summary(self, summary: VerifySummary):
        """Colored pass/fail table"""
        logger.info("\n" + "=" * 60)
        logger.info("📊 ACCEPTANCE SUMMARY")
        logger.info("=" * 60)
        for result in summary.results:
            color = Fore.GREEN if result.passed else Fore.RED
            mark = "PASS" if result.passed else result.status.upper()
            print(f"  {color}{mark:5s}{Style.RESET_ALL} [{result.number:2d}] {result.name} "
                  f"({result.wall_time:.1f}s)")
            if not result.passed:
                print(f"        {Fore.YELLOW}{result.message}{Style.RESET_ALL}")
        logger.info(f"Passed {summary.passed}/{len(summary.results)} at {datetime.now()}")
        logger.info("=" * 60 + "\n")

    def generate_report(self, limit: int = 10):
        """Recent runs from the ledger"""
        summary = self.ledger.get_summary()
        logger.info("\n" + "=" * 60)
        logger.info("📊 RUN LEDGER")
        logger.info("=" * 60)
        logger.info(f"  Total runs: {summary['total_runs']}")
        logger.info(f"  Succeeded: {summary['ok_runs']}")
        logger.info(f"  Invariant failures: {summary['invariant_failures']}")
        logger.info(f"  Tightest bound slack: {summary['min_bound_slack']}")
        for run in self.ledger.get_recent_runs(limit):
            status = "✅" if run['exit_code'] == 0 else "❌"
            logger.info(f"  {status} #{run['id']} {run['task']} {run['inputs_digest'][:12]} "
                        f"({run['wall_time'] or 0:.2f}s)")
        logger.info("=" * 60 + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='spectral',
        description='Bounds and counts for negative eigenvalues of discrete Schrodinger operators')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='execute a JSON task config')
    run.add_argument('config', help='task config path')
    run.add_argument('--seed', type=int, help='override the config seed')
    run.add_argument('--out', help='report path')
    run.add_argument('--format', choices=['json', 'csv'], help='report format')
    run.add_argument('--emit-contributions', action='store_true', dest='emit_contributions',
                     help='write per-site bound terms next to the report')
    run.add_argument('--max-box', type=int, dest='max_box', help='cap on expanding boxes')

    verify = sub.add_parser('verify', help='run the acceptance suite')
    verify.add_argument('suite', nargs='?', default=None,
                        help=f"one of {', '.join(config.VERIFY_SUITES)} or criterion numbers")
    verify.add_argument('--seed', type=int, help='seed of the random corpora')
    verify.add_argument('--out', help='JSON summary path')

    matrix = sub.add_parser('export-matrix', help='write H as row col value triplets')
    matrix.add_argument('config', help='config with model (and optional potential)')
    matrix.add_argument('--out', required=True, help='triplet file path')

    rtilde = sub.add_parser('export-rtilde', help='write R-tilde(x, x0) over a box')
    rtilde.add_argument('config', help='config with model and optional params.x0 / params.sites')
    rtilde.add_argument('--out', required=True, help='table path')

    sub.add_parser('report', help='summarize the run ledger')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    colorama_init()
    args = build_parser().parse_args(argv)

    try:
        toolkit = SpectralToolkit()

        if args.command == 'run':
            report = toolkit.run(args.config, args.seed, args.out, args.format,
                                 args.emit_contributions, args.max_box)
            return int(report.results.get('exit_code', 0))

        if args.command == 'verify':
            summary = toolkit.verify(args.suite, args.seed, args.out)
            if summary.failures:
                names = ', '.join(f"{r.number} ({r.name})" for r in summary.failures)
                logger.error(f"❌ Failed criteria: {names}")
            return summary.exit_code

        if args.command == 'export-matrix':
            toolkit.export_matrix(args.config, args.out)
            return 0

        if args.command == 'export-rtilde':
            toolkit.export_rtilde(args.config, args.out)
            return 0

        toolkit.generate_report()
        return 0

    except SpectralError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("\n👋 Stopped by user")
        return 130


if __name__ == "__main__":
    sys.exit(main())
