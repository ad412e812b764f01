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

"""Define the gdro command line interface
"""

import argparse as _argparse
import logging as _logging
import sys as _sys

from . import __doc__ as _PACKAGE_DOCSTRING
from . import __version__
from . import LOG as _LOG
from . import command as _command
from . import datagen as _datagen
from . import error as _error
from . import geometry as _geometry
from . import metrics as _metrics
from . import solvers as _solvers
from . import version as _version


class FullVersionAction (_argparse.Action):
    def __call__(self, *args, **kwargs):
        for package, version in _version.versions():
            print('{} {}'.format(package, version))
        _sys.exit(0)


def run(*args, **kwargs):
    """The gdro command line interface

    Arguments passed to this function are forwarded to the parser's
    `.parse_args()` call without modification.
    """
    parser = _argparse.ArgumentParser(
        prog='gdro', description=_PACKAGE_DOCSTRING)

    parser.add_argument(
        '-v', '--version', action='version',
        version='%(prog)s {}'.format(__version__))
    parser.add_argument(
        '--full-version', action=FullVersionAction, nargs=0,
        help='print the version information of all related packages and exit')
    parser.add_argument(
        '-V', '--verbose', default=0, action='count',
        help='increment verbosity')
    subparsers = parser.add_subparsers(title='commands')

    gen_parser = subparsers.add_parser(
        'gen', help=_command.gen.__doc__.splitlines()[0])
    gen_parser.set_defaults(func=_command.gen)
    gen_parser.add_argument(
        '--kind', choices=['gdro', 'mero'], default='gdro',
        help='equal noise (gdro) or per-group noise (mero)')
    gen_parser.add_argument(
        '--m', type=int, required=True, help='number of groups')
    gen_parser.add_argument(
        '--dim', type=int, default=1024, help='feature dimension')
    gen_parser.add_argument(
        '--n', type=int, default=200, help='samples per group')
    gen_parser.add_argument(
        '--seed', type=int, default=0, help='generator seed')
    gen_parser.add_argument(
        '--flip-prob', type=float, default=0.1,
        help='label-flip probability for --kind gdro')
    gen_parser.add_argument(
        '--out', metavar='PATH', required=True,
        help='path for the training set')
    gen_parser.add_argument(
        '--test-out', metavar='PATH',
        help='also write a held-out set drawn around the same directions')
    gen_parser.add_argument(
        '--format', choices=_datagen.FORMATS, default='text',
        help='dataset file format')

    run_parser = subparsers.add_parser(
        'run', help=_command.run.__doc__.splitlines()[0])
    run_parser.set_defaults(func=_command.run)
    run_parser.add_argument(
        'config', metavar='PATH', help='path to the experiment file')

    gap_parser = subparsers.add_parser(
        'gap', help=_command.gap.__doc__.splitlines()[0])
    gap_parser.set_defaults(func=_command.gap)
    gap_parser.add_argument(
        '--data', metavar='PATH', required=True, help='path to the dataset')
    gap_parser.add_argument(
        '--solution', metavar='PATH', required=True,
        help='solution file written by run')
    gap_parser.add_argument(
        '--tol', type=float, default=_metrics.OracleConfig().tol,
        help='gradient-mapping tolerance of the ERM oracle')
    gap_parser.add_argument(
        '--max-iter', type=int, default=_metrics.OracleConfig().max_iter,
        help='iteration cap of the ERM oracle')
    gap_parser.add_argument(
        '--radius', type=float,
        help='ball radius (defaults to the one stored with the solution)')
    gap_parser.add_argument(
        '--mero', action='store_true',
        help='measure the gap of the excess-risk objective')

    compare_parser = subparsers.add_parser(
        'compare', help=_command.compare.__doc__.splitlines()[0])
    compare_parser.set_defaults(func=_command.compare)
    compare_parser.add_argument(
        '--data', metavar='PATH', required=True, help='path to the dataset')
    compare_parser.add_argument(
        '--algos', required=True,
        help='comma-separated algorithms ({})'.format(
            ', '.join(_solvers.ALGORITHMS)))
    compare_parser.add_argument(
        '--budget', type=int, required=True,
        help='gradient evaluations per run')
    compare_parser.add_argument(
        '--seeds', type=int, default=1, help='number of seeds per algorithm')
    compare_parser.add_argument(
        '--radius', type=float, default=_geometry.DEFAULT_RADIUS,
        help='ball radius')
    compare_parser.add_argument(
        '--out', metavar='PATH', required=True,
        help='directory for compare.csv and verdict.json')

    args = parser.parse_args(*args, **kwargs)

    if args.verbose:
        _LOG.setLevel(max(_logging.DEBUG, _logging.ERROR - 10 * args.verbose))

    # https://docs.python.org/3/library/logging.html#logrecord-attributes
    formatter = _logging.Formatter('%(asctime)s [%(levelname)s] %(message)s')
    for handler in _LOG.handlers: # type: _logging.Handler
        handler.setFormatter(formatter)

    if not getattr(args, 'func', None):
        parser.error('too few arguments')

    try:
        args.func(args=args)
    except _error.GroupDROError as e:
        e.log()
        if _logging.ERROR - 10 * args.verbose < _logging.DEBUG:
            raise  # don't mask the traceback
        _sys.exit(1)


if __name__ == '__main__':
    run()
