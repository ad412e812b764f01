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

"""Synthetic grouped datasets and the dataset file formats

Each group ``i`` gets a hidden direction ``w_i*`` uniform on the unit
sphere, Gaussian features ``x ~ N(0, I)`` and labels ``sign(x . w_i*)``
flipped at random.  The ``gdro`` kind flips every group with the same
probability; the ``mero`` kind keeps the clean label of group ``i`` with
probability ``0.95 - i/160``, so later groups are noisier.

Every group draws from its own substreams of :func:`~groupdro.problem.make_rng`:
``(seed, i, 0)`` for ``w_i*``, ``(seed, i, 1)`` for training samples and
``(seed, i, 2)`` for held-out samples.

>>> ds = gen_gdro(SynthSpec(kind='gdro', m=3, dim=4, n_per_group=5, seed=1))
>>> ds.m, ds.dim, ds.n.tolist()
(3, 4, [5, 5, 5])
>>> ds == gen_gdro(SynthSpec(kind='gdro', m=3, dim=4, n_per_group=5, seed=1))
True
"""

import os as _os
import struct as _struct

import numpy as _numpy

from . import LOG as _LOG
from . import error as _error
from . import problem as _problem
from . import results as _results


TEXT_MAGIC = 'gdro'
TEXT_VERSION = 'v1'
BINARY_MAGIC = b'GDR1'
# m, dim, label kind code
BINARY_HEADER = _struct.Struct('<QQB')
BINARY_COUNT = _struct.Struct('<Q')
KIND_CODES = {'binary': 0, 'multiclass': 1}
FORMATS = ('text', 'binary')

# keep-probability 0.95 - i/160 must stay above one half
MERO_MAX_GROUPS = 72


class SynthSpec (object):
    """Parameters of a synthetic dataset

    ``n_per_group`` is an integer or one size per group.  ``test_n``
    (default: the training sizes) sets the held-out sizes.
    """
    def __init__(self, kind='gdro', m=25, dim=1024, n_per_group=200, seed=0,
                 flip_prob=0.1, test_n=None):
        if kind not in ('gdro', 'mero'):
            raise ValueError('unknown dataset kind {!r}'.format(kind))
        if m < 1 or dim < 1:
            raise ValueError('need m >= 1 and dim >= 1, got m={} dim={}'.format(
                m, dim))
        if not 0 <= flip_prob <= 1:
            raise ValueError('flip probability {!r} outside [0, 1]'.format(
                flip_prob))
        self.kind = kind
        self.m = int(m)
        self.dim = int(dim)
        self.n_per_group = self._sizes(n_per_group)
        self.test_n = self.n_per_group if test_n is None else self._sizes(
            test_n)
        self.seed = int(seed)
        self.flip_prob = float(flip_prob)

    def _sizes(self, n):
        sizes = _numpy.broadcast_to(
            _numpy.asarray(n, dtype=_numpy.int64), (self.m,)).copy()
        if (sizes < 1).any():
            raise ValueError('every group needs n >= 1, got {}'.format(
                sizes.tolist()))
        return sizes

    def __str__(self):
        return '{} m={} dim={} n={} seed={}'.format(
            self.kind, self.m, self.dim, self.n_per_group.tolist(), self.seed)

    def flip_probabilities(self):
        """Per-group label-flip probabilities

        >>> SynthSpec(kind='mero', m=25).flip_probabilities()[[0, 24]].round(6)
        array([0.05, 0.2 ])
        """
        if self.kind == 'gdro':
            return _numpy.full(self.m, self.flip_prob)
        if self.m > MERO_MAX_GROUPS:
            raise _error.NoiseModelError(m=self.m, limit=MERO_MAX_GROUPS)
        keep = 0.95 - _numpy.arange(self.m) / 160
        return 1 - keep


def unit_direction(rng, dim):
    "Uniform draw from the unit sphere via a normalized Gaussian."
    while True:
        w = rng.standard_normal(dim)
        norm = _numpy.linalg.norm(w)
        if norm > 0:
            return w / norm


def noisy_labels(rng, features, direction, flip_prob):
    "``sign(x . w)`` with ``sign(0) = +1``, each flipped with ``flip_prob``."
    clean = _numpy.where(features @ direction >= 0, 1, -1)
    flips = rng.random(len(features)) < flip_prob
    return _numpy.where(flips, -clean, clean)


def _generate(spec, with_test):
    flips = spec.flip_probabilities()
    train, test = [], []
    for i in range(spec.m):
        direction = unit_direction(
            _problem.make_rng(spec.seed, i, 0), spec.dim)
        for stream, sizes, groups in ((1, spec.n_per_group, train),
                                      (2, spec.test_n, test)):
            if stream == 2 and not with_test:
                continue
            rng = _problem.make_rng(spec.seed, i, stream)
            features = rng.standard_normal((sizes[i], spec.dim))
            labels = noisy_labels(rng, features, direction, flips[i])
            groups.append((features, labels))
    _LOG.debug('generated {}'.format(spec))
    train = _problem.GroupedDataset.from_groups(train, label_kind='binary')
    if with_test:
        return train, _problem.GroupedDataset.from_groups(
            test, label_kind='binary')
    return train


def gen_gdro(spec, with_test=False):
    """Equal-noise synthetic GDRO data

    With ``with_test`` return ``(train, test)`` drawn around the same
    hidden directions.
    """
    if spec.kind != 'gdro':
        raise ValueError('gen_gdro needs kind gdro, got {!r}'.format(
            spec.kind))
    return _generate(spec, with_test)


def gen_mero(spec, with_test=False):
    """Heterogeneous-noise synthetic MERO data

    >>> gen_mero(SynthSpec(kind='mero', m=100, dim=2, n_per_group=1))
    Traceback (most recent call last):
      ...
    groupdro.error.NoiseModelError: heterogeneous-noise model needs p_i > 0.5 for every group: m = 100 exceeds 72
    """
    if spec.kind != 'mero':
        raise ValueError('gen_mero needs kind mero, got {!r}'.format(
            spec.kind))
    return _generate(spec, with_test)


def generate(spec, with_test=False):
    if spec.kind == 'gdro':
        return gen_gdro(spec, with_test=with_test)
    return gen_mero(spec, with_test=with_test)


def _write_text(ds, stream):
    stream.write('{} {} {} {} {}\n'.format(
        TEXT_MAGIC, TEXT_VERSION, ds.m, ds.dim, ds.label_kind))
    for i in range(ds.m):
        features, labels = ds.group(i)
        stream.write('group {} {}\n'.format(i, len(labels)))
        for label, x in zip(labels, features):
            stream.write(' '.join(
                [str(int(label))] + [repr(float(v)) for v in x]))
            stream.write('\n')


def _write_binary(ds, stream):
    stream.write(BINARY_MAGIC)
    stream.write(BINARY_HEADER.pack(ds.m, ds.dim, KIND_CODES[ds.label_kind]))
    for i in range(ds.m):
        features, labels = ds.group(i)
        stream.write(BINARY_COUNT.pack(len(labels)))
        stream.write(labels.astype('<i8').tobytes())
        stream.write(features.astype('<f8').tobytes())


def save_dataset(ds, path, format='text'):
    """Write ``ds`` to ``path`` and return the number of bytes written"""
    if format not in FORMATS:
        raise ValueError('unknown dataset format {!r}'.format(format))
    _LOG.info('save {} dataset ({}) to {}'.format(format, ds, path))
    if format == 'text':
        with _results.atomic_open(path, 'w') as f:
            _write_text(ds, f)
    else:
        with _results.atomic_open(path, 'wb') as f:
            _write_binary(ds, f)
    return _os.path.getsize(path)


def _parse_header(path, line):
    fields = line.split()
    if (len(fields) != 5 or fields[0] != TEXT_MAGIC
            or fields[1] != TEXT_VERSION or fields[4] not in KIND_CODES):
        raise _error.MalformedHeader(path=path, header=line.rstrip('\n'))
    try:
        m, dim = int(fields[2]), int(fields[3])
    except ValueError as e:
        raise _error.MalformedHeader(
            path=path, header=line.rstrip('\n')) from e
    if m < 1 or dim < 1:
        raise _error.MalformedHeader(path=path, header=line.rstrip('\n'))
    return m, dim, fields[4]


def _read_text(path, stream):
    m, dim, label_kind = _parse_header(path, next(stream, ''))
    groups = []
    declared = None
    features, labels = [], []

    def close_group(found_next):
        if declared is None:
            return
        if len(labels) != declared:
            if len(labels) < declared and not found_next:
                raise _error.TruncatedDataset(path=path, group=len(groups))
            raise _error.GroupCountMismatch(
                path=path, group=len(groups), expected=declared,
                found=len(labels))
        groups.append((
            _numpy.array(features, dtype=float).reshape(declared, dim),
            _numpy.array(labels, dtype=_numpy.int64)))

    for lineno, line in enumerate(stream, start=2):
        fields = line.split()
        if not fields:
            continue
        if fields[0] == 'group':
            close_group(found_next=True)
            if (len(fields) != 3 or fields[1] != str(len(groups))
                    or not fields[2].isdigit() or int(fields[2]) < 1):
                raise _error.DatasetError(
                    path=path, message='{}:{}: bad group line {!r}'.format(
                        path, lineno, line.rstrip('\n')))
            if len(groups) >= m:
                raise _error.DatasetError(
                    path=path, message='{}:{}: more than {} groups'.format(
                        path, lineno, m))
            declared = int(fields[2])
            features, labels = [], []
            continue
        if declared is None or len(fields) != dim + 1:
            raise _error.DatasetError(
                path=path, message='{}:{}: expected a label and {} features'
                .format(path, lineno, dim))
        try:
            labels.append(int(fields[0]))
            features.append([float(v) for v in fields[1:]])
        except ValueError as e:
            raise _error.DatasetError(
                path=path, message='{}:{}: bad sample line'.format(
                    path, lineno)) from e
    close_group(found_next=False)
    if len(groups) < m:
        raise _error.TruncatedDataset(path=path, group=len(groups))
    return _problem.GroupedDataset.from_groups(groups, label_kind=label_kind)


def _read_binary(path, data):
    offset = len(BINARY_MAGIC)
    if len(data) < offset + BINARY_HEADER.size:
        raise _error.MalformedHeader(path=path, header=data[:offset + 17])
    m, dim, code = BINARY_HEADER.unpack_from(data, offset)
    offset += BINARY_HEADER.size
    kinds = {v: k for k, v in KIND_CODES.items()}
    if m < 1 or dim < 1 or code not in kinds:
        raise _error.MalformedHeader(path=path, header=(m, dim, code))
    groups = []
    for i in range(m):
        if len(data) < offset + BINARY_COUNT.size:
            raise _error.TruncatedDataset(path=path, group=i)
        n_i, = BINARY_COUNT.unpack_from(data, offset)
        offset += BINARY_COUNT.size
        size = 8 * n_i * (1 + dim)
        if n_i < 1 or len(data) < offset + size:
            raise _error.TruncatedDataset(path=path, group=i)
        labels = _numpy.frombuffer(data, dtype='<i8', count=n_i, offset=offset)
        offset += 8 * n_i
        features = _numpy.frombuffer(
            data, dtype='<f8', count=n_i * dim, offset=offset)
        offset += 8 * n_i * dim
        groups.append((features.reshape(n_i, dim).astype(float),
                       labels.astype(_numpy.int64)))
    if offset != len(data):
        raise _error.DatasetError(
            path=path, message='{} trailing bytes in dataset {}'.format(
                len(data) - offset, path))
    return _problem.GroupedDataset.from_groups(
        groups, label_kind=kinds[code])


def load_dataset(path):
    """Read a dataset in either format, detected by its first bytes"""
    if not _os.path.exists(path):
        raise _error.NoDatasetFile(path=path)
    _LOG.debug('load dataset from {}'.format(path))
    with open(path, 'rb') as f:
        data = f.read()
    if data.startswith(BINARY_MAGIC):
        return _read_binary(path, data)
    try:
        text = data.decode('ascii')
    except UnicodeDecodeError as e:
        raise _error.MalformedHeader(path=path, header=data[:32]) from e
    try:
        return _read_text(path, iter(text.splitlines(keepends=True)))
    except ValueError as e:
        if isinstance(e, _error.GroupDROError):
            raise
        raise _error.DatasetError(
            path=path, message='invalid dataset {}: {}'.format(path, e)) from e
