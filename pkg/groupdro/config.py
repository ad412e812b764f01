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

"""Experiment configuration

An experiment file is INI (or a JSON object of sections with the same
keys).  ``[experiment]`` names the algorithm and the dataset; at most one
algorithm block, the one ``algo`` selects, may follow.  Integer keys set
to 0 and empty float keys are derived from the theory schedule once the
dataset is known.

>>> import tempfile, os
>>> tmpdir = tempfile.TemporaryDirectory(prefix='groupdro-test-')
>>> path = os.path.join(tmpdir.name, 'exp.cfg')
>>> with open(path, 'w') as f:
...     _ = f.write('[experiment]\\nalgo = aleg\\ndata = d.gdro\\nseeds = 1, 2\\n'
...                 '[aleg]\\nepochs = 5\\n')
>>> exp = read_experiment(path)
>>> exp.algo, exp.seeds, exp.settings['epochs'], exp.settings['inner']
('aleg', [1, 2], 5, 0)
>>> os.path.basename(exp.data)
'd.gdro'
>>> with open(path, 'a') as f:
...     _ = f.write('[smd]\\nsteps = 10\\n')
>>> read_experiment(path)  # doctest: +ELLIPSIS
Traceback (most recent call last):
  ...
groupdro.error.AlgorithmBlockError: algorithm 'aleg' is inconsistent with configuration block(s) [smd]
>>> tmpdir.cleanup()
"""

import collections as _collections
import configparser as _configparser
import json as _json
import math as _math
import os as _os

from . import LOG as _LOG
from . import error as _error
from . import geometry as _geometry
from . import problem as _problem
from . import solvers as _solvers


class Config (_configparser.ConfigParser):
    def __init__(self, dict_type=_collections.OrderedDict,
                 interpolation=None,
                 **kwargs):
        super(Config, self).__init__(
            dict_type=dict_type, interpolation=interpolation,
            default_section='__defaults__', **kwargs)


# the algorithm block each algorithm reads
BLOCKS = _collections.OrderedDict((
        ('aleg', 'aleg'),
        ('alem', 'alem'),
        ('smd', 'smd'),
        ('mpvr-uniform', 'mpvr'),
        ('mpvr-importance', 'mpvr'),
        ))

VERBOSITY = ('error', 'warning', 'info', 'debug')

DEFAULTS = _collections.OrderedDict((
    ('experiment', _collections.OrderedDict((
        # One of aleg, alem, smd, mpvr-uniform, mpvr-importance
        ('algo', 'aleg'),
        # Dataset file written by 'gdro gen' (relative to this file)
        ('data', ''),
        # Comma-separated seeds; every seed is an independent run
        ('seeds', '0'),
        # Inner steps between trajectory rows (0: one row per epoch)
        ('record-every', str(0)),
        # Held-out dataset from 'gdro gen --test-out' (empty: none); its max
        # group risk becomes a test_max_risk trajectory column
        ('test-data', ''),
        # Output directory (relative to this file)
        ('output', 'results'),
        # Logging level: error, warning, info or debug
        ('verbose', 'warning'),
        ))),
    ('geometry', _collections.OrderedDict((
        # Radius R of the weight ball |w|_2 <= R
        ('radius', str(_geometry.DEFAULT_RADIUS)),
        ))),
    ('aleg', _collections.OrderedDict((
        # Number of epochs S
        ('epochs', str(20)),
        # Inner steps per epoch K (0: round(nbar))
        ('inner', str(0)),
        # Step-size parameter in (0.8, 0.99)
        ('theta', str(0.9)),
        # Constant step size; must lie in the admissible band (empty: derive)
        ('eta', ''),
        # Step-size parameter of the last epoch; theta moves linearly to it
        # over the epochs (empty: constant step)
        ('theta-final', ''),
        ))),
    ('alem', _collections.OrderedDict((
        # Stage-1 budget T; each group runs ceil(T / sqrt(nbar)) epochs
        ('budget', str(100)),
        # Step-size parameter in (0.8, 0.99) for both stages
        ('theta', str(0.9)),
        # Stage-2 epochs (0: same as stage 1)
        ('stage2-epochs', str(0)),
        # Stage-2 inner steps (0: round(nbar))
        ('stage2-inner', str(0)),
        ))),
    ('smd', _collections.OrderedDict((
        # Number of steps, m gradient evaluations each
        ('steps', str(10000)),
        # Initial step size; step t uses eta0 / sqrt(t + 1) (empty: 1/L_z)
        ('eta0', ''),
        ))),
    ('mpvr', _collections.OrderedDict((
        # Number of epochs S
        ('epochs', str(20)),
        # Inner steps per epoch K (0: round(m * nbar))
        ('inner', str(0)),
        # Anchor weight in [0, 1) (empty: 1 - 1/K)
        ('alpha', ''),
        # Step-size factor in (0, 1)
        ('gamma', str(0.9)),
        ))),
    ))


class ExperimentConfig (object):
    """A validated experiment: algorithm, dataset, seeds and settings

    ``settings`` holds the algorithm block with defaults filled in and
    values converted; zeros and ``None`` are resolved by
    :meth:`solver_config` once the dataset is loaded.
    """
    def __init__(self, algo, data, seeds=(0,), record_every=0,
                 output='results', verbose='warning',
                 radius=_geometry.DEFAULT_RADIUS,
                 settings=None, path=None, test_data=None):
        self.algo = algo
        self.data = data
        self.test_data = test_data
        self.seeds = list(seeds)
        self.record_every = record_every
        self.output = output
        self.verbose = verbose
        self.radius = radius
        if settings is None:
            settings = _parse_block(Config(), BLOCKS[algo], path=path)
        self.settings = settings
        self.path = path

    def __repr__(self):
        return '<ExperimentConfig {} on {} seeds={}>'.format(
            self.algo, self.data, self.seeds)

    def solver_config(self, ds, seed):
        """The solver configuration for dataset ``ds`` and ``seed``

        An ``aleg`` step-size override is checked against the admissible
        band of ``ds`` here.
        """
        settings = self.settings
        if self.algo == 'aleg':
            model = _problem.make_loss_model(ds)
            geom = _problem.Problem(ds, model).geometry(self.radius)
            return _solvers.AlegConfig(
                epochs=settings['epochs'],
                inner=settings['inner'] or max(1, round(ds.n_bar)),
                theta=settings['theta'], eta=settings['eta'],
                theta_final=settings['theta-final'],
                lz=_solvers.step_constant(geom, model), seed=seed)
        if self.algo == 'alem':
            return _solvers.AlemConfig(
                budget=settings['budget'], theta=settings['theta'],
                stage2_epochs=settings['stage2-epochs'] or None,
                stage2_inner=settings['stage2-inner'] or None, seed=seed)
        if self.algo == 'smd':
            return _solvers.SmdConfig(
                steps=settings['steps'], eta0=settings['eta0'], seed=seed)
        return _solvers.MpvrConfig(
            epochs=settings['epochs'],
            inner=settings['inner'] or max(1, round(ds.n_total)),
            alpha=settings['alpha'], gamma=settings['gamma'],
            sampling=self.algo.split('-', 1)[1], seed=seed)

    def resolve_record_every(self, solver_config, ds):
        "Inner steps between trajectory rows (0 means one row per epoch)."
        if self.record_every:
            return self.record_every
        if isinstance(solver_config, _solvers.SmdConfig):
            return max(1, solver_config.steps // 100)
        if isinstance(solver_config, _solvers.AlemConfig):
            return solver_config.stage2(ds).inner
        return solver_config.inner

    def as_dict(self):
        return {
            'algo': self.algo,
            'data': self.data,
            'test_data': self.test_data,
            'seeds': self.seeds,
            'record_every': self.record_every,
            'radius': self.radius,
            'settings': dict(self.settings),
            }


def _invalid(section, key, value, path, reason):
    return _error.InvalidConfig(
        section=section, key=key, value=value, path=path,
        message='invalid configuration [{}] {} = {!r}: {}'.format(
            section, key, value, reason))


def _get_int(config, section, key, path, minimum=0):
    value = config.get(section, key, fallback=DEFAULTS[section][key])
    try:
        number = int(value)
    except ValueError as e:
        raise _invalid(section, key, value, path, 'not an integer') from e
    if number < minimum:
        raise _invalid(section, key, value, path,
                       'must be at least {}'.format(minimum))
    return number


def _get_float(config, section, key, path, low=None, high=None,
               closed_low=False, closed_high=False, optional=False):
    value = config.get(section, key, fallback=DEFAULTS[section][key]).strip()
    if not value and optional:
        return None
    try:
        number = float(value)
    except ValueError as e:
        raise _invalid(section, key, value, path, 'not a number') from e
    if not _math.isfinite(number):
        raise _invalid(section, key, value, path, 'not finite')
    if low is not None and (number < low or (number == low and not closed_low)):
        raise _invalid(section, key, value, path, 'out of range')
    if high is not None and (
            number > high or (number == high and not closed_high)):
        raise _invalid(section, key, value, path, 'out of range')
    return number


def _parse_block(config, block, path=None):
    settings = _collections.OrderedDict()
    if block == 'aleg':
        settings['epochs'] = _get_int(config, block, 'epochs', path, 1)
        settings['inner'] = _get_int(config, block, 'inner', path)
        settings['theta'] = _get_float(
            config, block, 'theta', path, low=0.8, high=0.99)
        settings['eta'] = _get_float(
            config, block, 'eta', path, low=0, optional=True)
        settings['theta-final'] = _get_float(
            config, block, 'theta-final', path, low=0.8, high=0.99,
            optional=True)
        if settings['eta'] is not None and settings['theta-final'] is not None:
            raise _invalid(block, 'theta-final', settings['theta-final'], path,
                           'a fixed eta excludes a step-size schedule')
    elif block == 'alem':
        settings['budget'] = _get_int(config, block, 'budget', path, 1)
        settings['theta'] = _get_float(
            config, block, 'theta', path, low=0.8, high=0.99)
        settings['stage2-epochs'] = _get_int(
            config, block, 'stage2-epochs', path)
        settings['stage2-inner'] = _get_int(
            config, block, 'stage2-inner', path)
    elif block == 'smd':
        settings['steps'] = _get_int(config, block, 'steps', path, 1)
        settings['eta0'] = _get_float(
            config, block, 'eta0', path, low=0, optional=True)
    else:
        settings['epochs'] = _get_int(config, block, 'epochs', path, 1)
        settings['inner'] = _get_int(config, block, 'inner', path)
        settings['alpha'] = _get_float(
            config, block, 'alpha', path, low=0, high=1, closed_low=True,
            optional=True)
        settings['gamma'] = _get_float(
            config, block, 'gamma', path, low=0, high=1)
    return settings


def _json_value(value):
    if isinstance(value, list):
        return ', '.join(str(v) for v in value)
    if value is None:
        return ''
    return str(value)


def _load(path):
    if not _os.path.exists(path):
        raise _error.ConfigError(
            path=path, message='configuration file {} does not exist'.format(
                path))
    with open(path, 'r') as f:
        text = f.read()
    config = Config()
    if text.lstrip().startswith('{'):
        try:
            data = _json.loads(text)
        except ValueError as e:
            raise _error.ConfigParseError(
                path=path, line=getattr(e, 'lineno', None),
                reason=str(e)) from e
        try:
            config.read_dict({
                section: {key: _json_value(value)
                          for key, value in values.items()}
                for section, values in data.items()})
        except (AttributeError, _configparser.Error) as e:
            raise _error.ConfigParseError(
                path=path, reason='expected an object of sections') from e
        return config
    try:
        config.read_string(text, source=path)
    except _configparser.ParsingError as e:
        line = getattr(e, 'lineno', None)
        if line is None and getattr(e, 'errors', None):
            line = e.errors[0][0]
        raise _error.ConfigParseError(path=path, line=line) from e
    except _configparser.Error as e:
        raise _error.ConfigParseError(
            path=path, line=getattr(e, 'lineno', None),
            reason=e.message.splitlines()[0]) from e
    return config


def read_experiment(path):
    """Read and validate an experiment file into :class:`ExperimentConfig`"""
    _LOG.debug('read experiment configuration from {}'.format(path))
    config = _load(path)
    section = 'experiment'
    if section not in config:
        raise _error.ConfigError(
            path=path, message='{} has no [experiment] section'.format(path))
    for name in config.sections():
        if name not in DEFAULTS:
            raise _error.ConfigError(
                path=path, message='unknown section [{}] in {}'.format(
                    name, path))
        for key in config[name]:
            if key not in DEFAULTS[name]:
                raise _invalid(name, key, config[name][key], path,
                               'unknown key')
    algo = config.get(section, 'algo', fallback='aleg').strip()
    if algo not in BLOCKS:
        raise _error.UnknownAlgorithm(algo=algo, known=list(BLOCKS), path=path)
    block = BLOCKS[algo]
    foreign = [name for name in config.sections()
               if name in set(BLOCKS.values()) and name != block]
    if foreign:
        raise _error.AlgorithmBlockError(algo=algo, blocks=foreign, path=path)

    base = _os.path.dirname(_os.path.abspath(path))
    data = config.get(section, 'data', fallback='').strip()
    if not data:
        raise _invalid(section, 'data', data, path, 'a dataset is required')
    seeds_value = config.get(section, 'seeds', fallback='0')
    try:
        seeds = [int(s) for s in seeds_value.split(',') if s.strip()]
    except ValueError as e:
        raise _invalid(section, 'seeds', seeds_value, path,
                       'expected comma-separated integers') from e
    if not seeds or len(set(seeds)) != len(seeds):
        raise _invalid(section, 'seeds', seeds_value, path,
                       'expected distinct seeds')
    test_data = config.get(section, 'test-data', fallback='').strip()
    verbose = config.get(section, 'verbose', fallback='warning').strip()
    if verbose not in VERBOSITY:
        raise _invalid(section, 'verbose', verbose, path,
                       'expected one of {}'.format(', '.join(VERBOSITY)))
    return ExperimentConfig(
        algo=algo,
        data=_os.path.join(base, data),
        test_data=_os.path.join(base, test_data) if test_data else None,
        seeds=seeds,
        record_every=_get_int(config, section, 'record-every', path),
        output=_os.path.join(
            base, config.get(section, 'output', fallback='results').strip()),
        verbose=verbose,
        radius=_get_float(config, 'geometry', 'radius', path, low=0),
        settings=_parse_block(config, block, path=path),
        path=path)
