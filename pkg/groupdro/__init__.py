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

"""groupdro: variance-reduced solvers for empirical group DRO and MERO
"""

import logging as _logging
import sys as _sys


__version__ = '0.4'
__url__ = 'https://github.com/groupdro/groupdro'
__author__ = 'The groupdro maintainers'
__email__ = 'groupdro@groupdro.invalid'
__copyright__ = '(C) 2024 The groupdro maintainers. GNU GPL 2 or 3.'

LOG = _logging.getLogger('groupdro')
LOG.addHandler(_logging.StreamHandler())
LOG.setLevel(_logging.ERROR)


min_python_version = (3, 8)
if _sys.version_info < min_python_version:
    raise ImportError(
        "groupdro requires Python {maj}.{min} or newer, but you're using:\n{got}"
        .format(
            maj=min_python_version[0],
            min=min_python_version[1],
            got=_sys.version
        ))
