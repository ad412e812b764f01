# Copyright (C) 2024-2025 The groupdro maintainers
#
# This file is part of groupdro.
#
# groupdro is free software: you can redistribute it and/or modify it under
# the terms of the GNU General Public License as published by the Free Software
# Foundation, either version 2 of the License, or (at your option) version 3 of
# the License.
#
# groupdro is distributed in the hope that it will be useful, but WITHOUT ANY
# WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS FOR
# A PARTICULAR PURPOSE.  See the GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License along with
# groupdro.  If not, see <http://www.gnu.org/licenses/>.

"""Command bodies for the ``gdro`` command line interface

Each command takes the parsed ``args`` namespace.  Solver runs for
different seeds go to worker threads; only this module writes files.
"""

import csv as _csv
import json as _json
import logging as _logging
import os as _os
import sys as _sys

import numpy as _numpy

from . import LOG as _LOG
from . import config as _config
from . import datagen as _datagen
from . import error as _error
from . import geometry as _geometry
from . import metrics as _metrics
from . import problem as _problem
from . import results as _results
from . import solvers as _solvers


# budget points per curve in compare.csv
GRID_POINTS = 101


def _load_problem(path, radius):
    ds = _datagen.load_dataset(path)
    try:
        model = _problem.make_loss_model(ds)
    except ValueError as e:
        raise _error.DatasetError(
            path=path, message='no loss model for {}: {}'.format(path, e)
            ) from e
    problem = _problem.Problem(ds, model)
    _LOG.info('loaded {} from {}'.format(ds, path))
    return problem, problem.geometry(radius)


def _load_holdout(path, problem):
    "Held-out problem sharing the groups and loss model of ``problem``."
    ds = _datagen.load_dataset(path)
    train = problem.dataset
    if (ds.m, ds.dim, ds.label_kind) != (train.m, train.dim, train.label_kind):
        raise _error.DatasetError(
            path=path,
            message='held-out data {} has m={} dim={} ({}), expected '
            'm={} dim={} ({})'.format(
                path, ds.m, ds.dim, ds.label_kind,
                train.m, train.dim, train.label_kind))
    if ds.label_kind == 'multiclass' and ds.classes > train.classes:
        raise _error.DatasetError(
            path=path, message='held-out data {} has {} classes, the '
            'model {}'.format(path, ds.classes, train.classes))
    _LOG.info('loaded held-out {} from {}'.format(ds, path))
    return _problem.Problem(ds, problem.model)


def _solve(problem, geom, algo, solver_config, record_every, holdout=None):
    kwargs = {'record_every': record_every, 'holdout': holdout}
    if algo == 'aleg':
        return _solvers.aleg(problem, geom, solver_config, **kwargs), None
    if algo == 'alem':
        record, r_hats, _ = _solvers.alem(
            problem, geom, solver_config, **kwargs)
        return record, r_hats
    if algo == 'smd':
        return _solvers.smd(problem, geom, solver_config, **kwargs), None
    return _solvers.mpvr(problem, geom, solver_config, **kwargs), None


def _run_seed(problem, geom, experiment, seed, holdout=None):
    ds = problem.dataset
    solver_config = experiment.solver_config(ds, seed)
    record_every = experiment.resolve_record_every(solver_config, ds)
    return _solve(problem, geom, experiment.algo, solver_config, record_every,
                  holdout=holdout)


def _run_summary(seed, record, r_hats, problem, holdout=None):
    max_group_risk, worst = _metrics.max_group_risk(
        problem, record.solution.w, counter=record.metric_counter)
    summary = {
        'seed': seed,
        'config': record.config_echo,
        'counter': record.final_counter.as_dict(),
        'metric_counter': record.metric_counter.as_dict(),
        'final_max_risk': record.final_max_risk,
        'final_max_group_risk': max_group_risk,
        'worst_group': worst,
        'solution_norms': {
            'w': float(_numpy.linalg.norm(record.solution.w)),
            'q_max': float(record.solution.q.max()),
            },
        }
    if r_hats is not None:
        summary['r_hats'] = [float(r) for r in r_hats]
        risks = problem.group_risks(
            record.solution.w, counter=record.metric_counter)
        summary['final_max_excess_risk'] = float((risks - r_hats).max())
    if holdout is not None:
        summary['final_test_max_risk'], _ = _metrics.max_group_risk(
            holdout, record.solution.w, counter=record.metric_counter)
    return summary


def gen(args):
    "Generate a synthetic grouped dataset"
    try:
        spec = _datagen.SynthSpec(
            kind=args.kind, m=args.m, dim=args.dim, n_per_group=args.n,
            seed=args.seed, flip_prob=args.flip_prob)
    except _error.GroupDROError:
        raise
    except ValueError as e:
        raise _error.GroupDROError(message=str(e)) from e
    if args.test_out:
        ds, test = _datagen.generate(spec, with_test=True)
        _datagen.save_dataset(test, args.test_out, format=args.format)
    else:
        ds = _datagen.generate(spec)
    size = _datagen.save_dataset(ds, args.out, format=args.format)
    print(_json.dumps({
        'bytes': size,
        'dim': ds.dim,
        'm': ds.m,
        'n_bar': float(ds.n_bar),
        }, sort_keys=True))


def run(args):
    "Run the experiment described by a configuration file"
    experiment = _config.read_experiment(args.config)
    if not args.verbose:
        _LOG.setLevel(getattr(_logging, experiment.verbose.upper()))
    problem, geom = _load_problem(experiment.data, experiment.radius)
    holdout = None
    if experiment.test_data:
        holdout = _load_holdout(experiment.test_data, problem)
    # settings that only the dataset can check fail before any thread starts
    experiment.solver_config(problem.dataset, experiment.seeds[0])
    _LOG.info('run {} for seeds {}'.format(experiment.algo, experiment.seeds))
    outcomes = _results.run_sweep(
        ('{}-seed{}'.format(experiment.algo, seed), _run_seed, {
            'problem': problem, 'geom': geom, 'experiment': experiment,
            'seed': seed, 'holdout': holdout})
        for seed in experiment.seeds)

    output = experiment.output
    runs = []
    for seed, (record, r_hats) in zip(experiment.seeds, outcomes):
        stem = _os.path.join(output, '{}-seed{}'.format(experiment.algo, seed))
        _results.save_trajectory(stem + '.csv', record.trajectory)
        _results.save_solution(stem + '.json', record.solution, geom.radius)
        runs.append(_run_summary(seed, record, r_hats, problem, holdout))
    first, _ = outcomes[0]
    _results.save_solution(
        _os.path.join(output, 'solution.json'), first.solution, geom.radius)
    ds = problem.dataset
    _results.save_json(_os.path.join(output, 'summary.json'), {
        'experiment': experiment.as_dict(),
        'dataset': {
            'm': ds.m, 'dim': ds.dim, 'n': ds.n.tolist(),
            'label_kind': ds.label_kind,
            },
        'model': {
            'kind': type(problem.model).__name__,
            'L': problem.model.smoothness_L,
            'G': problem.model.lipschitz_G,
            },
        'runs': runs,
        })
    _LOG.info('wrote {} runs to {}'.format(len(runs), output))


def gap(args):
    "Print the duality gap of a saved solution"
    problem, _ = _load_problem(args.data, 1.0)
    point, radius = _results.load_solution(args.solution)
    if args.radius is not None:
        radius = args.radius
    elif radius is None:
        radius = _geometry.DEFAULT_RADIUS
    geom = problem.geometry(float(radius))
    if len(point.w) != geom.dim or len(point.q) != geom.m:
        raise _error.InfeasiblePoint(
            'solution has {} + {} entries, the dataset needs {} + {}'.format(
                len(point.w), len(point.q), geom.dim, geom.m),
            path=args.solution)
    norm = float(_numpy.linalg.norm(point.w))
    if norm > geom.radius * (1 + _results.SIMPLEX_TOLERANCE):
        raise _error.InfeasiblePoint(
            '|w| = {!r} exceeds the radius {!r}'.format(norm, geom.radius),
            path=args.solution)
    try:
        oracle = _metrics.OracleConfig(tol=args.tol, max_iter=args.max_iter)
    except ValueError as e:
        raise _error.GroupDROError(message=str(e)) from e
    data = {}
    if args.mero:
        r_stars = _metrics.minimal_risks(problem, geom, cfg=oracle)
        data['r_stars'] = [float(r) for r in r_stars]
        data['excess_risk'] = _metrics.excess_risk_gap(
            problem, point.w, r_stars)
        problem = problem.shifted(r_stars)
    report = _metrics.duality_gap(problem, geom, point, cfg=oracle)
    data.update(report.as_dict())
    _results.dump_json(data, _sys.stdout)


def _budget_config(algo, ds, budget, seed):
    """Solver configuration spending at most ``budget`` gradient evaluations"""
    inner = max(1, int(round(ds.n_bar)))
    if algo == 'aleg':
        epochs = _solvers.epochs_for_budget(
            algo, budget, _solvers.aleg_epoch_cost(ds, inner))
        return _solvers.AlegConfig(epochs=epochs, inner=inner, seed=seed)
    if algo == 'alem':
        # stage 1 over all groups costs one aleg epoch per stage-1 epoch
        epochs = _solvers.epochs_for_budget(
            algo, budget, 2 * _solvers.aleg_epoch_cost(ds, inner))
        return _solvers.AlemConfig(
            budget=budget, stage1_epochs=epochs, stage2_epochs=epochs,
            stage2_inner=inner, seed=seed)
    if algo == 'smd':
        return _solvers.SmdConfig(
            steps=_solvers.smd_steps_for_budget(ds, budget), seed=seed)
    inner = ds.n_total
    epochs = _solvers.epochs_for_budget(
        algo, budget, _solvers.mpvr_epoch_cost(ds, inner))
    return _solvers.MpvrConfig(
        epochs=epochs, inner=inner, sampling=algo.split('-', 1)[1], seed=seed)


def _compare_seed(problem, geom, algo, budget, seed):
    solver_config = _budget_config(algo, problem.dataset, budget, seed)
    if isinstance(solver_config, _solvers.SmdConfig):
        record_every = max(1, solver_config.steps // (GRID_POINTS - 1))
    elif isinstance(solver_config, _solvers.AlemConfig):
        record_every = solver_config.stage2(problem.dataset).inner
    else:
        record_every = solver_config.inner
    record, _ = _solve(problem, geom, algo, solver_config, record_every)
    return record


def carry_forward(trajectory, grid):
    """Trajectory values at ``grid``, holding the last row reached

    Grid points before the first row are NaN.

    >>> carry_forward([(0, 3.0, 0), (10, 2.0, 0), (20, 1.0, 0)],
    ...               [0, 5, 10, 25]).tolist()
    [3.0, 3.0, 2.0, 1.0]
    >>> carry_forward([(4, 1.0, 0)], [0, 4]).tolist()
    [nan, 1.0]
    """
    evals = _numpy.array([row[0] for row in trajectory])
    values = _numpy.array([row[1] for row in trajectory], dtype=float)
    index = _numpy.searchsorted(evals, grid, side='right') - 1
    curve = values[_numpy.clip(index, 0, None)]
    curve[index < 0] = _numpy.nan
    return curve


def _csv_value(value):
    return '' if _numpy.isnan(value) else repr(float(value))


def compare(args):
    "Compare solvers on a shared gradient-evaluation budget"
    algos = [algo.strip() for algo in args.algos.split(',') if algo.strip()]
    if not algos:
        raise _error.GroupDROError(message='no algorithms to compare')
    for algo in algos:
        if algo not in _solvers.ALGORITHMS:
            raise _error.UnknownAlgorithm(
                algo=algo, known=list(_solvers.ALGORITHMS))
    if args.seeds < 1:
        raise _error.GroupDROError(
            message='need at least one seed, got {}'.format(args.seeds))
    problem, geom = _load_problem(args.data, args.radius)
    seeds = list(range(args.seeds))
    # fail on a short budget before any thread starts
    for algo in algos:
        _budget_config(algo, problem.dataset, args.budget, 0)
    tasks = [('{}-seed{}'.format(algo, seed), _compare_seed, {
        'problem': problem, 'geom': geom, 'algo': algo,
        'budget': args.budget, 'seed': seed})
        for algo in algos for seed in seeds]
    records = _results.run_sweep(tasks)

    grid = _numpy.linspace(0, args.budget, GRID_POINTS).round().astype(int)
    curves = {}
    used = {}
    for i, algo in enumerate(algos):
        runs = records[i * len(seeds):(i + 1) * len(seeds)]
        curves[algo] = _numpy.median(
            [carry_forward(record.trajectory, grid) for record in runs],
            axis=0)
        used[algo] = max(record.final_counter.grad_evals for record in runs)
        _LOG.info('{}: final median max risk {!r}'.format(
            algo, float(curves[algo][-1])))

    path = _os.path.join(args.out, 'compare.csv')
    _LOG.info('save comparison curves to {}'.format(path))
    with _results.atomic_open(path) as f:
        writer = _csv.writer(f, lineterminator='\n')
        writer.writerow(['grad_evals'] + algos)
        for j, point in enumerate(grid):
            writer.writerow(
                [int(point)] + [_csv_value(curves[algo][j]) for algo in algos])

    ranking = sorted(algos, key=lambda algo: (
        float(curves[algo][-1]), algos.index(algo)))
    _results.save_json(_os.path.join(args.out, 'verdict.json'), {
        'budget': args.budget,
        'seeds': seeds,
        'ranking': ranking,
        'final_median_max_risk': {
            algo: float(curves[algo][-1]) for algo in algos},
        'grad_evals_used': used,
        })
