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

"""groupdro-specific errors
"""

from . import LOG as _LOG
from . import __url__


class GroupDROError (Exception):
    def __init__(self, message):
        super(GroupDROError, self).__init__(message)

    def log(self):
        _LOG.error(str(self))
        if self.__cause__ is not None:
            _LOG.error('cause: {}'.format(self.__cause__))


class ConfigError (GroupDROError):
    def __init__(self, path=None, message=None, **kwargs):
        if message is None:
            message = 'problem with the experiment configuration {}'.format(
                path)
        super(ConfigError, self).__init__(message=message, **kwargs)
        self.path = path


class ConfigParseError (ConfigError, ValueError):
    def __init__(self, path, line=None, reason=None):
        if line is None:
            message = 'could not parse configuration file {}'.format(path)
        else:
            message = 'could not parse configuration file {} at line {}'.format(
                path, line)
        if reason:
            message = '{}: {}'.format(message, reason)
        super(ConfigParseError, self).__init__(path=path, message=message)
        self.line = line


class InvalidConfig (ConfigError, ValueError):
    """Bad value for a configuration key

    >>> raise InvalidConfig(section='aleg', key='theta', value='2')
    Traceback (most recent call last):
      ...
    groupdro.error.InvalidConfig: invalid configuration [aleg] theta = '2'
    """
    def __init__(self, section, key, value, message=None, path=None):
        if message is None:
            message = 'invalid configuration [{}] {} = {!r}'.format(
                section, key, value)
        super(InvalidConfig, self).__init__(path=path, message=message)
        self.section = section
        self.key = key
        self.value = value


class UnknownAlgorithm (ConfigError, ValueError):
    def __init__(self, algo, known=(), **kwargs):
        message = 'unknown algorithm {!r}'.format(algo)
        if known:
            message = '{} (expected one of {})'.format(
                message, ', '.join(known))
        super(UnknownAlgorithm, self).__init__(message=message, **kwargs)
        self.algo = algo


class AlgorithmBlockError (ConfigError, ValueError):
    def __init__(self, algo, blocks, **kwargs):
        message = (
            'algorithm {!r} is inconsistent with configuration block(s) {}'
            ).format(algo, ', '.join('[{}]'.format(b) for b in blocks))
        super(AlgorithmBlockError, self).__init__(message=message, **kwargs)
        self.algo = algo
        self.blocks = blocks

    def log(self):
        super(AlgorithmBlockError, self).log()
        _LOG.warning(
            'an experiment configuration holds exactly one algorithm block, '
            'the one named by the algo key')


class DatasetError (GroupDROError):
    def __init__(self, path=None, message=None, **kwargs):
        if message is None:
            message = 'problem with the dataset file {}'.format(path)
        super(DatasetError, self).__init__(message=message, **kwargs)
        self.path = path


class NoDatasetFile (DatasetError):
    def __init__(self, path):
        message = 'dataset file {} does not exist'.format(path)
        super(NoDatasetFile, self).__init__(path=path, message=message)

    def log(self):
        super(NoDatasetFile, self).log()
        _LOG.warning(
            "generate a synthetic dataset with 'gdro gen' first")


class MalformedHeader (DatasetError, ValueError):
    def __init__(self, path, header, **kwargs):
        message = 'malformed header in dataset {}: {!r}'.format(path, header)
        super(MalformedHeader, self).__init__(
            path=path, message=message, **kwargs)
        self.header = header


class TruncatedDataset (DatasetError, ValueError):
    def __init__(self, path, group=None, **kwargs):
        if group is None:
            message = 'truncated dataset {}'.format(path)
        else:
            message = 'truncated dataset {} in group {}'.format(path, group)
        super(TruncatedDataset, self).__init__(
            path=path, message=message, **kwargs)
        self.group = group


class GroupCountMismatch (DatasetError, ValueError):
    def __init__(self, path, group, expected, found, **kwargs):
        message = (
            'group-count mismatch in dataset {}: group {} declares {} '
            'samples but {} were found').format(path, group, expected, found)
        super(GroupCountMismatch, self).__init__(
            path=path, message=message, **kwargs)
        self.group = group
        self.expected = expected
        self.found = found


class GroupIndexError (DatasetError, IndexError):
    def __init__(self, index, m, **kwargs):
        message = 'group {!r} not found (dataset has {} groups)'.format(
            index, m)
        super(GroupIndexError, self).__init__(message=message, **kwargs)
        self.index = index
        self.m = m


class GeometryError (GroupDROError):
    pass


class BoundaryPoint (GeometryError, ValueError):
    def __init__(self, index):
        message = (
            'dual map undefined on the simplex boundary (q[{}] = 0)'
            ).format(index)
        super(BoundaryPoint, self).__init__(message=message)
        self.index = index


class WeightError (GeometryError, ValueError):
    pass


class InvalidStepSize (GeometryError, ValueError):
    def __init__(self, eta, lower=None, upper=None, message=None):
        if message is None:
            message = 'step size {!r} outside the admissible band [{}, {}]'.format(
                eta, lower, upper)
        super(InvalidStepSize, self).__init__(message=message)
        self.eta = eta
        self.lower = lower
        self.upper = upper


class InfeasiblePoint (GeometryError, ValueError):
    def __init__(self, reason, path=None):
        if path is None:
            message = 'infeasible point: {}'.format(reason)
        else:
            message = 'infeasible point in {}: {}'.format(path, reason)
        super(InfeasiblePoint, self).__init__(message=message)
        self.path = path


class ResultsError (GroupDROError):
    def __init__(self, path=None, message=None, **kwargs):
        if message is None:
            message = 'problem with the results file {}'.format(path)
        super(ResultsError, self).__init__(message=message, **kwargs)
        self.path = path


class NoSolutionFile (ResultsError):
    def __init__(self, path):
        message = 'solution file {} does not exist'.format(path)
        super(NoSolutionFile, self).__init__(path=path, message=message)

    def log(self):
        super(NoSolutionFile, self).log()
        _LOG.warning("'gdro run' writes solution.json in its output directory")


class SolverError (GroupDROError):
    def __init__(self, solver, message=None, **kwargs):
        if message is None:
            message = 'error in solver {}'.format(solver)
        super(SolverError, self).__init__(message=message, **kwargs)
        self.solver = solver


class NonFiniteIterate (SolverError):
    def __init__(self, solver, epoch, step, **kwargs):
        message = '{}: non-finite iterate at epoch {} step {}'.format(
            solver, epoch, step)
        super(NonFiniteIterate, self).__init__(
            solver=solver, message=message, **kwargs)
        self.epoch = epoch
        self.step = step

    def log(self):
        super(NonFiniteIterate, self).log()
        _LOG.warning(
            'check the loss constants and the step size; a NaN usually '
            'comes from an overridden eta far outside the theory band')


class DomainBoundExceeded (SolverError):
    def __init__(self, solver, distance, bound, **kwargs):
        message = (
            '{}: iterate at merged distance {!r} from the start exceeds the '
            'domain diameter {!r}').format(solver, distance, bound)
        super(DomainBoundExceeded, self).__init__(
            solver=solver, message=message, **kwargs)
        self.distance = distance
        self.bound = bound

    def log(self):
        super(DomainBoundExceeded, self).log()
        _LOG.warning(
            'this cannot happen in exact arithmetic; please report it to '
            '{} with the dataset and configuration'.format(__url__))


class BudgetTooSmall (SolverError, ValueError):
    def __init__(self, solver, budget, minimum, **kwargs):
        message = (
            '{}: budget below minimum epoch cost ({} < {})').format(
                solver, budget, minimum)
        super(BudgetTooSmall, self).__init__(
            solver=solver, message=message, **kwargs)
        self.budget = budget
        self.minimum = minimum


class NoiseModelError (GroupDROError, ValueError):
    def __init__(self, m, limit):
        message = (
            'heterogeneous-noise model needs p_i > 0.5 for every group: '
            'm = {} exceeds {}').format(m, limit)
        super(NoiseModelError, self).__init__(message=message)
        self.m = m
        self.limit = limit


class SweepError (GroupDROError):
    def __init__(self, worker):
        message = 'error while running {}: {}'.format(
            worker.name, worker.error[1])
        super(SweepError, self).__init__(message=message)
        self.worker = worker
