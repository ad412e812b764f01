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

"""Versions of groupdro and the numerical stack its results depend on

Solver trajectories depend on the numpy and scipy builds, so these
belong in every bug report.

>>> [name for name, _ in versions()]
['groupdro', 'python', 'numpy', 'scipy']
>>> versions()[0][1] == __version__
True
"""

import platform as _platform

import numpy as _numpy
import scipy as _scipy

from . import __version__


def versions():
    "``(name, version)`` pairs, groupdro first."
    return [
        ('groupdro', __version__),
        ('python', _platform.python_version()),
        ('numpy', '{} (bit generator: Philox)'.format(_numpy.__version__)),
        ('scipy', _scipy.__version__),
        ]
