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

"""Result artifacts and seed sweeps

Every artifact is written to ``<path>.tmp``, synced and renamed over the
destination, so an interrupted run never leaves a half-written file.
"""

import contextlib as _contextlib
import csv as _csv
import json as _json
import os as _os
import sys as _sys
import threading as _threading

import numpy as _numpy

from . import LOG as _LOG
from . import error as _error
from . import geometry as _geometry


TRAJECTORY_HEADER = ('grad_evals', 'max_risk', 'wallclock_ns')
# extra column of runs with held-out data
HOLDOUT_COLUMN = 'test_max_risk'

# a solution's q may sit this far off the simplex and still be accepted
SIMPLEX_TOLERANCE = 1e-9


@_contextlib.contextmanager
def atomic_open(path, mode='w'):
    dirname = _os.path.dirname(path)
    if dirname and not _os.path.isdir(dirname):
        _os.makedirs(dirname, exist_ok=True)
    tmpfile = path + '.tmp'
    kwargs = {} if 'b' in mode else {'newline': ''}
    try:
        with open(tmpfile, mode, **kwargs) as f:
            yield f
            f.flush()
            _os.fsync(f.fileno())
    except BaseException:
        if _os.path.exists(tmpfile):
            _os.remove(tmpfile)
        raise
    _os.replace(tmpfile, path)


def dump_json(data, stream):
    _json.dump(
        data,
        stream,
        indent=2,
        separators=(',', ': '),
        sort_keys=True,
        )
    stream.write('\n')


def save_json(path, data):
    _LOG.debug('save {}'.format(path))
    with atomic_open(path) as f:
        dump_json(data, f)


def save_trajectory(path, trajectory):
    """Write ``(grad_evals, max_risk, wallclock_ns)`` rows as CSV

    Rows with a fourth entry add a ``test_max_risk`` column.
    """
    _LOG.debug('save trajectory to {}'.format(path))
    holdout = bool(trajectory) and len(trajectory[0]) > 3
    header = TRAJECTORY_HEADER + ((HOLDOUT_COLUMN,) if holdout else ())
    with atomic_open(path) as f:
        writer = _csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in trajectory:
            grad_evals, max_risk, wallclock_ns = row[:3]
            line = [int(grad_evals), repr(float(max_risk)), int(wallclock_ns)]
            if holdout:
                line.append(repr(float(row[3])))
            writer.writerow(line)


def load_trajectory(path):
    with open(path, 'r', newline='') as f:
        reader = _csv.reader(f)
        header = tuple(next(reader))
        if header == TRAJECTORY_HEADER:
            return [(int(g), float(r), int(t)) for g, r, t in reader]
        if header == TRAJECTORY_HEADER + (HOLDOUT_COLUMN,):
            return [(int(g), float(r), int(t), float(h))
                    for g, r, t, h in reader]
        raise _error.ResultsError(
            path=path,
            message='unexpected trajectory header {} in {}'.format(
                ','.join(header), path))


def solution_data(point, radius):
    return {
        'radius': float(radius),
        'w': [float(x) for x in point.w],
        'q': [float(x) for x in point.q],
        }


def save_solution(path, point, radius):
    save_json(path, solution_data(point, radius))


def load_solution(path):
    """Read a solution file and check it lies in ``W x simplex``

    Returns ``(point, radius)``; ``radius`` is ``None`` when the file does
    not record one.
    """
    if not _os.path.exists(path):
        raise _error.NoSolutionFile(path=path)
    with open(path, 'r') as f:
        try:
            data = _json.load(f)
        except ValueError as e:
            raise _error.ResultsError(
                path=path, message='could not parse solution file {}'.format(
                    path)) from e
    try:
        w = _numpy.array(data['w'], dtype=float).reshape(-1)
        q = _numpy.array(data['q'], dtype=float).reshape(-1)
    except (KeyError, TypeError, ValueError) as e:
        raise _error.ResultsError(
            path=path,
            message='solution file {} needs numeric w and q arrays'.format(
                path)) from e
    radius = data.get('radius')
    if not (_numpy.isfinite(w).all() and _numpy.isfinite(q).all()):
        raise _error.InfeasiblePoint('non-finite entries', path=path)
    if len(q) < 1:
        raise _error.InfeasiblePoint('empty q', path=path)
    if (q < -SIMPLEX_TOLERANCE).any():
        raise _error.InfeasiblePoint('negative entry in q', path=path)
    total = float(q.sum())
    if abs(total - 1) > SIMPLEX_TOLERANCE:
        raise _error.InfeasiblePoint(
            'q sums to {!r}, not 1'.format(total), path=path)
    if radius is not None:
        radius = float(radius)
        norm = float(_numpy.linalg.norm(w))
        if norm > radius * (1 + SIMPLEX_TOLERANCE):
            raise _error.InfeasiblePoint(
                '|w| = {!r} exceeds the radius {!r}'.format(norm, radius),
                path=path)
    return _geometry.Point(w=w, q=_numpy.clip(q, 0, None)), radius


def sweep_threads(environ=None):
    """Worker cap from ``GDRO_THREADS``, defaulting to the core count

    >>> sweep_threads({'GDRO_THREADS': '3'})
    3
    >>> sweep_threads({'GDRO_THREADS': 'many'})
    Traceback (most recent call last):
      ...
    groupdro.error.ConfigError: GDRO_THREADS must be a positive integer, got 'many'
    """
    if environ is None:
        environ = _os.environ
    value = environ.get('GDRO_THREADS')
    if not value:
        return _os.cpu_count() or 1
    try:
        threads = int(value)
    except ValueError:
        threads = 0
    if threads < 1:
        raise _error.ConfigError(
            message='GDRO_THREADS must be a positive integer, got {!r}'.format(
                value))
    return threads


class SweepWorker (_threading.Thread):
    """Run one sweep member, keeping its result or exception

    >>> worker = SweepWorker('double', lambda x: 2 * x, 21)
    >>> worker.start(); worker.join()
    >>> worker.result
    42
    """
    def __init__(self, name, target, *args, **kwargs):
        super(SweepWorker, self).__init__(
            target=target, args=args, kwargs=kwargs, daemon=True)
        self.name = name
        self.result = None
        self.error = None

    def run(self):
        try:
            if self._target:
                self.result = self._target(*self._args, **self._kwargs)
        except:
            self.error = _sys.exc_info()
        finally:
            # drop the references Thread.run() would have dropped
            del self._target, self._args, self._kwargs


def run_sweep(tasks, threads=None):
    """Run ``(name, function, kwargs)`` tasks, at most ``threads`` at a time

    Results come back in task order.  The first failing task (in task
    order) is raised as :class:`~groupdro.error.SweepError`.

    >>> run_sweep([('a', pow, {'base': 2, 'exp': 3}),
    ...            ('b', pow, {'base': 3, 'exp': 2})], threads=1)
    [8, 9]
    >>> def boom():
    ...     raise ValueError('bad seed')
    >>> run_sweep([('boom', boom, {})])
    Traceback (most recent call last):
      ...
    groupdro.error.SweepError: error while running boom: bad seed
    """
    if threads is None:
        threads = sweep_threads()
    tasks = list(tasks)
    workers = []
    for start in range(0, len(tasks), threads):
        batch = [SweepWorker(name, function, **kwargs)
                 for name, function, kwargs in tasks[start:start + threads]]
        for worker in batch:
            _LOG.debug('start {}'.format(worker.name))
            worker.start()
        for worker in batch:
            worker.join()
        workers.extend(batch)
        for worker in batch:
            if worker.error:
                raise _error.SweepError(worker=worker) from worker.error[1]
    return [worker.result for worker in workers]
