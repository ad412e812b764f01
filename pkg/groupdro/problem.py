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

"""Grouped datasets, loss models and merged gradients

The empirical GDRO objective is the finite-sum saddle function

    F(w, q) = sum_i q_i R_i(w),    R_i(w) = (1/n_i) sum_j loss(w; x_ij, y_ij)

over ``m`` groups.  :class:`Problem` bundles a :class:`GroupedDataset`, a
:class:`LossModel` and an optional per-group shift (``R_i - shift_i``, used
by the MERO stage-2 problem) and builds every gradient the solvers need:

* the full merged gradient (``sum_i n_i`` gradient evaluations),
* the group-sampling stochastic gradient (one sample per group, ``m``),
* the single-sample MPVR gradients (uniform or importance sampling, ``1``).

All randomness comes from :func:`make_rng`, a Philox counter-based
generator keyed by ``(seed, *stream)``.

>>> ds = GroupedDataset.from_groups(
...     [(_numpy.array([[1.0], [-1.0]]), _numpy.array([1, -1])),
...      (_numpy.array([[2.0]]), _numpy.array([1]))])
>>> ds.m, ds.dim, ds.n.tolist(), ds.n_bar
(2, 1, [2, 1], 1.5)
>>> problem = Problem(ds, make_loss_model(ds))
>>> [round(float(r), 6) for r in problem.group_risks(_numpy.zeros(1))]
[0.693147, 0.693147]
"""

import collections as _collections
import math as _math

import numpy as _numpy
from scipy import special as _special

from . import error as _error
from . import geometry as _geometry


LABEL_KINDS = ('binary', 'multiclass')


def make_rng(seed, *stream):
    """Return a Philox generator for ``seed`` and an optional substream key

    The generator family and the key layout are part of the
    reproducibility contract: changing either changes every trajectory.

    >>> a = make_rng(7, 1).integers(1000, size=3)
    >>> b = make_rng(7, 1).integers(1000, size=3)
    >>> bool((a == b).all())
    True
    """
    key = [int(seed)] + [int(s) for s in stream]
    return _numpy.random.Generator(
        _numpy.random.Philox(_numpy.random.SeedSequence(key)))


class GroupedDataset (object):
    """``m`` groups of labeled samples, stored as one contiguous block

    ``features`` is ``N x dim`` with the samples of group ``i`` in rows
    ``offsets[i]:offsets[i+1]``.  Arrays are made read-only so a dataset
    can be shared between solver threads.
    """
    def __init__(self, features, labels, offsets, label_kind='binary'):
        features = _numpy.array(features, dtype=float, ndmin=2)
        labels = _numpy.array(labels, dtype=_numpy.int64).reshape(-1)
        offsets = _numpy.array(offsets, dtype=_numpy.int64).reshape(-1)
        if label_kind not in LABEL_KINDS:
            raise ValueError('unknown label kind {!r}'.format(label_kind))
        if len(offsets) < 2:
            raise ValueError('a grouped dataset needs at least one group')
        if offsets[0] != 0 or offsets[-1] != len(features):
            raise ValueError('group offsets do not cover the samples')
        if (_numpy.diff(offsets) < 1).any():
            raise ValueError('every group needs at least one sample')
        if len(labels) != len(features):
            raise ValueError('{} labels for {} samples'.format(
                len(labels), len(features)))
        if features.shape[1] < 1:
            raise ValueError('feature dimension must be positive')
        if label_kind == 'binary' and not _numpy.isin(labels, (-1, 1)).all():
            raise ValueError('binary labels must be -1 or +1')
        if label_kind == 'multiclass' and (labels < 0).any():
            raise ValueError('multiclass labels must be nonnegative')
        for array in (features, labels, offsets):
            array.flags.writeable = False
        self.features = features
        self.labels = labels
        self.offsets = offsets
        self.label_kind = label_kind

    @classmethod
    def from_groups(cls, groups, label_kind='binary'):
        "Build from a sequence of ``(features, labels)`` pairs."
        groups = [(_numpy.array(x, dtype=float, ndmin=2),
                   _numpy.array(y, dtype=_numpy.int64).reshape(-1))
                  for x, y in groups]
        if not groups:
            raise ValueError('a grouped dataset needs at least one group')
        sizes = [len(y) for x, y in groups]
        offsets = _numpy.concatenate(([0], _numpy.cumsum(sizes)))
        return cls(
            features=_numpy.concatenate([x for x, y in groups]),
            labels=_numpy.concatenate([y for x, y in groups]),
            offsets=offsets, label_kind=label_kind)

    def __str__(self):
        return '{} groups, dim {}, {} samples ({})'.format(
            self.m, self.dim, self.n_total, self.label_kind)

    def __repr__(self):
        return '<{} {}>'.format(type(self).__name__, str(self))

    def __eq__(self, other):
        if not isinstance(other, GroupedDataset):
            return NotImplemented
        return (self.label_kind == other.label_kind
                and _numpy.array_equal(self.offsets, other.offsets)
                and _numpy.array_equal(self.labels, other.labels)
                and _numpy.array_equal(self.features, other.features))

    __hash__ = None

    @property
    def m(self):
        return len(self.offsets) - 1

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def n(self):
        return _numpy.diff(self.offsets)

    @property
    def n_total(self):
        return int(self.offsets[-1])

    @property
    def n_bar(self):
        return self.n_total / self.m

    @property
    def n_min(self):
        return int(self.n.min())

    @property
    def n_harmonic(self):
        return self.m / float((1.0 / self.n).sum())

    @property
    def classes(self):
        if self.label_kind == 'binary':
            return 2
        return int(self.labels.max()) + 1

    def check_group(self, i):
        if not (isinstance(i, (int, _numpy.integer)) and 0 <= i < self.m):
            raise _error.GroupIndexError(index=i, m=self.m)
        return int(i)

    def group(self, i):
        "Return ``(features, labels)`` views for group ``i``."
        i = self.check_group(i)
        start, stop = self.offsets[i], self.offsets[i + 1]
        return self.features[start:stop], self.labels[start:stop]

    def subset(self, groups):
        """A new dataset holding only ``groups``, in the given order

        >>> ds = GroupedDataset.from_groups(
        ...     [([[0.0]], [1]), ([[1.0], [2.0]], [1, -1])])
        >>> ds.subset([1]).features.ravel()
        array([1., 2.])
        """
        return GroupedDataset.from_groups(
            [self.group(i) for i in groups], label_kind=self.label_kind)


def flat_to_pair(ds, l):
    """Map a flat sample index to ``(group, index within group)``

    >>> ds = GroupedDataset.from_groups(
    ...     [(_numpy.zeros((k, 1)), _numpy.ones(k)) for k in (3, 1, 4)])
    >>> [flat_to_pair(ds, l) for l in (0, 2, 3, 4, 7)]
    [(0, 0), (0, 2), (1, 0), (2, 0), (2, 3)]
    """
    if not 0 <= l < ds.n_total:
        raise IndexError('flat index {} outside [0, {})'.format(l, ds.n_total))
    i = int(_numpy.searchsorted(ds.offsets, l, side='right')) - 1
    return i, int(l - ds.offsets[i])


def pair_to_flat(ds, i, j):
    i = ds.check_group(i)
    if not 0 <= j < ds.n[i]:
        raise IndexError('sample {} outside group {} of size {}'.format(
            j, i, ds.n[i]))
    return int(ds.offsets[i] + j)


class LossModel (object):
    """A convex per-sample loss of a linear model

    Subclasses implement :meth:`evaluate`, which returns the per-sample
    losses and the ``weights``-weighted sum of their gradients in a
    single fused pass.
    """
    kind = None

    def __init__(self, smoothness, lipschitz):
        self.smoothness_L = float(smoothness)
        self.lipschitz_G = float(lipschitz)

    def __str__(self):
        return '{} (L={:g}, G={:g})'.format(
            self.kind, self.smoothness_L, self.lipschitz_G)

    def __repr__(self):
        return '<{} {}>'.format(type(self).__name__, str(self))

    def n_params(self, dim):
        raise NotImplementedError()

    def losses(self, w, features, labels):
        raise NotImplementedError()

    def evaluate(self, w, features, labels, weights):
        raise NotImplementedError()


class LogisticLoss (LossModel):
    """``log(1 + exp(-y <w, x>))`` for labels in ``{-1, +1}``

    >>> model = LogisticLoss(smoothness=0.25, lipschitz=1.0)
    >>> x = _numpy.array([[1.0, 0.0]])
    >>> losses, grad = model.evaluate(
    ...     _numpy.zeros(2), x, _numpy.array([1]), _numpy.ones(1))
    >>> round(float(losses[0]), 6), grad.tolist()
    (0.693147, [-0.5, 0.0])
    """
    kind = 'logistic'

    def n_params(self, dim):
        return dim

    def losses(self, w, features, labels):
        margins = labels * (features @ w)
        return _numpy.logaddexp(0.0, -margins)

    def evaluate(self, w, features, labels, weights):
        margins = labels * (features @ w)
        losses = _numpy.logaddexp(0.0, -margins)
        coef = -labels * _special.expit(-margins)
        return losses, features.T @ (weights * coef)


class SoftmaxLoss (LossModel):
    """Multinomial logistic loss ``-log softmax(W x)_y``

    ``w`` is the row-major flattening of the ``classes x dim`` matrix
    ``W``.
    """
    kind = 'softmax'

    def __init__(self, classes, smoothness, lipschitz):
        super(SoftmaxLoss, self).__init__(
            smoothness=smoothness, lipschitz=lipschitz)
        if classes < 2:
            raise ValueError('softmax needs at least two classes')
        self.classes = int(classes)

    def __str__(self):
        return '{} C={}'.format(
            super(SoftmaxLoss, self).__str__(), self.classes)

    def n_params(self, dim):
        return self.classes * dim

    def _logits(self, w, features):
        return features @ w.reshape(self.classes, -1).T

    def losses(self, w, features, labels):
        logits = self._logits(w, features)
        rows = _numpy.arange(len(labels))
        return _special.logsumexp(logits, axis=1) - logits[rows, labels]

    def evaluate(self, w, features, labels, weights):
        logits = self._logits(w, features)
        rows = _numpy.arange(len(labels))
        losses = _special.logsumexp(logits, axis=1) - logits[rows, labels]
        residual = _special.softmax(logits, axis=1)
        residual[rows, labels] -= 1
        grad = (weights[:, None] * residual).T @ features
        return losses, grad.ravel()


LOSS_KINDS = {
    'logistic': LogisticLoss,
    'softmax': SoftmaxLoss,
    }


def estimate_LG(ds, kind):
    """Closed-form smoothness and Lipschitz bounds for ``kind`` on ``ds``

    >>> ds = GroupedDataset.from_groups(
    ...     [(_numpy.array([[1.0, 0.0], [0.0, 1.0]]), _numpy.array([1, -1]))])
    >>> estimate_LG(ds, 'logistic')
    (0.25, 1.0)
    """
    radius = float(_numpy.linalg.norm(ds.features, axis=1).max())
    if kind == 'logistic':
        return radius ** 2 / 4, radius
    elif kind == 'softmax':
        return radius ** 2, _math.sqrt(2) * radius
    raise ValueError('unknown loss kind {!r}'.format(kind))


def make_loss_model(ds, kind=None):
    "Loss model matching ``ds``: logistic for binary, softmax for multiclass."
    if kind is None:
        kind = 'logistic' if ds.label_kind == 'binary' else 'softmax'
    if kind == 'logistic' and ds.label_kind != 'binary':
        raise ValueError('logistic loss needs binary labels')
    if kind == 'softmax' and ds.label_kind != 'multiclass':
        raise ValueError('softmax loss needs multiclass labels')
    L, G = estimate_LG(ds, kind)
    if kind == 'softmax':
        return SoftmaxLoss(classes=ds.classes, smoothness=L, lipschitz=G)
    return LogisticLoss(smoothness=L, lipschitz=G)


class EvalCounter (object):
    """Gradient and loss evaluation totals of one run

    >>> counter = EvalCounter()
    >>> counter.charge(grad=3, loss=3)
    >>> counter.charge(loss=2)
    >>> counter
    <EvalCounter grad_evals=3 loss_evals=5>
    """
    def __init__(self, grad_evals=0, loss_evals=0):
        self.grad_evals = grad_evals
        self.loss_evals = loss_evals

    def __repr__(self):
        return '<EvalCounter grad_evals={} loss_evals={}>'.format(
            self.grad_evals, self.loss_evals)

    def charge(self, grad=0, loss=0):
        self.grad_evals += int(grad)
        self.loss_evals += int(loss)

    def copy(self):
        return EvalCounter(
            grad_evals=self.grad_evals, loss_evals=self.loss_evals)

    def as_dict(self):
        return {'grad_evals': self.grad_evals, 'loss_evals': self.loss_evals}


class GroupSample (_collections.namedtuple('GroupSample', ['per_group'])):
    "One within-group sample index per group, in group order."
    __slots__ = ()


def _charge(counter, grad=0, loss=0):
    if counter is not None:
        counter.charge(grad=grad, loss=loss)


class Problem (object):
    """A grouped dataset with a loss model and a per-group risk shift

    The q-part of every gradient built here is ``-(R_i - shift_i)`` or an
    unbiased estimate of it.  The shift never touches the w-part.
    """
    def __init__(self, dataset, model, shift=None):
        self.dataset = dataset
        self.model = model
        if shift is None:
            shift = _numpy.zeros(dataset.m)
        shift = _numpy.array(shift, dtype=float).reshape(-1)
        if len(shift) != dataset.m:
            raise ValueError('shift has {} entries for {} groups'.format(
                len(shift), dataset.m))
        shift.flags.writeable = False
        self.shift = shift

    def __str__(self):
        return '{}; {}'.format(self.dataset, self.model)

    @property
    def m(self):
        return self.dataset.m

    @property
    def n_params(self):
        return self.model.n_params(self.dataset.dim)

    def geometry(self, radius=_geometry.DEFAULT_RADIUS):
        return _geometry.Geometry(dim=self.n_params, m=self.m, radius=radius)

    def shifted(self, shift):
        "The same data and loss with risks ``R_i - shift_i``."
        return Problem(self.dataset, self.model, shift=shift)

    def group_risk(self, i, w, counter=None):
        "Unshifted empirical risk of group ``i``."
        features, labels = self.dataset.group(i)
        _charge(counter, loss=len(labels))
        return float(self.model.losses(w, features, labels).mean())

    def group_risks(self, w, counter=None):
        "Vector of unshifted group risks."
        ds = self.dataset
        _charge(counter, loss=ds.n_total)
        losses = self.model.losses(w, ds.features, ds.labels)
        return _numpy.add.reduceat(losses, ds.offsets[:-1]) / ds.n

    def max_risk(self, w, counter=None):
        """``(max_i (R_i(w) - shift_i), argmax)`` with ties to the smallest index"""
        values = self.group_risks(w, counter=counter) - self.shift
        i = int(_numpy.argmax(values))
        return float(values[i]), i

    def _weighted(self, w, q, counter):
        ds = self.dataset
        _charge(counter, grad=ds.n_total, loss=ds.n_total)
        weights = _numpy.repeat(_numpy.asarray(q, dtype=float) / ds.n, ds.n)
        losses, gw = self.model.evaluate(w, ds.features, ds.labels, weights)
        risks = _numpy.add.reduceat(losses, ds.offsets[:-1]) / ds.n
        return risks - self.shift, gw

    def weighted_risk(self, w, q, counter=None):
        "Value and w-gradient of ``sum_i q_i (R_i(w) - shift_i)``."
        risks, gw = self._weighted(w, q, counter)
        return float(_numpy.dot(q, risks)), gw

    def full_gradient(self, z, counter=None):
        "Exact merged gradient; charges ``sum_i n_i`` evaluations."
        risks, gw = self._weighted(z.w, z.q, counter)
        return _geometry.MergedGradient(gw=gw, gq=-risks)

    def draw_group_sample(self, rng):
        "One uniform index per group, drawn in group order."
        return GroupSample(per_group=rng.integers(0, self.dataset.n))

    def stochastic_gradient(self, z, sample, counter=None):
        "Group-sampling merged gradient; charges ``m`` evaluations."
        ds = self.dataset
        rows = ds.offsets[:-1] + sample.per_group
        _charge(counter, grad=ds.m, loss=ds.m)
        losses, gw = self.model.evaluate(
            z.w, ds.features[rows], ds.labels[rows],
            _numpy.asarray(z.q, dtype=float))
        return _geometry.MergedGradient(gw=gw, gq=-(losses - self.shift))

    def _single(self, z, i, j, scale, counter):
        ds = self.dataset
        row = ds.offsets[i] + j
        _charge(counter, grad=1, loss=1)
        losses, gw = self.model.evaluate(
            z.w, ds.features[row:row + 1], ds.labels[row:row + 1],
            _numpy.array([scale * z.q[i]]))
        gq = _numpy.zeros(ds.m)
        gq[i] = -scale * (losses[0] - self.shift[i])
        return _geometry.MergedGradient(gw=gw, gq=gq)

    def mpvr_uniform_gradient(self, z, rng, counter=None, index=None):
        """Single-sample gradient with ``l ~ Unif(sum_i n_i)``

        Returns the gradient and the flat index, which the caller passes
        back as ``index`` to evaluate the same sample at the snapshot.
        """
        ds = self.dataset
        if index is None:
            index = int(rng.integers(ds.n_total))
        i, j = flat_to_pair(ds, index)
        scale = ds.n_total / ds.n[i]
        return self._single(z, i, j, scale, counter), index

    def mpvr_importance_gradient(self, z, rng, counter=None, pair=None):
        """Single-sample gradient with a uniform group, then a uniform sample"""
        ds = self.dataset
        if pair is None:
            i = int(rng.integers(ds.m))
            pair = (i, int(rng.integers(ds.n[i])))
        i, j = pair
        return self._single(z, i, j, float(ds.m), counter), pair


def vr_estimator(g_half, g_snap_stoch, g_snap_full):
    """Variance-reduced estimate ``g_half - g_snap_stoch + g_snap_full``"""
    return _geometry.MergedGradient(
        gw=g_half.gw - g_snap_stoch.gw + g_snap_full.gw,
        gq=g_half.gq - g_snap_stoch.gq + g_snap_full.gq)


def lipschitz_constant(d_w, smoothness, lipschitz, log_m,
                       w_factor=1.0, q_factor=1.0, cross_factor=1.0):
    """``2 D_w max{sqrt(2 D_w^2 L^2 a + G^2 b ln m), G sqrt(2 c ln m)}``

    The three sampling schemes differ only in the factors ``a``
    (``w_factor``), ``b`` (``q_factor``) and ``c`` (``cross_factor``).

    >>> round(lipschitz_constant(1.0, 1.0, 1.0, 1.0), 4)
    3.4641
    """
    first = _math.sqrt(
        2 * d_w ** 2 * smoothness ** 2 * w_factor
        + lipschitz ** 2 * q_factor * log_m)
    second = lipschitz * _math.sqrt(2 * cross_factor * log_m)
    return 2 * d_w * max(first, second)


def lipschitz_lz(geom, model):
    """Lipschitz constant of the group-sampling gradient

    With one group the q-terms vanish and this is ``2 sqrt(2) D_w^2 L``.
    """
    return lipschitz_constant(
        geom.d_w, model.smoothness_L, model.lipschitz_G, _math.log(geom.m))


def lipschitz_lu(geom, model, ds):
    "Mean-square Lipschitz constant of the MPVR uniform-sampling gradient."
    m = ds.m
    spread = ds.n_bar / ds.n_min
    return lipschitz_constant(
        geom.d_w, model.smoothness_L, model.lipschitz_G, _math.log(m),
        w_factor=m * spread,
        q_factor=m ** 2 * ds.n_bar / ds.n_harmonic,
        cross_factor=m * spread)


def lipschitz_li(geom, model):
    "Mean-square Lipschitz constant of the MPVR importance-sampling gradient."
    m = geom.m
    return lipschitz_constant(
        geom.d_w, model.smoothness_L, model.lipschitz_G, _math.log(m),
        w_factor=m, q_factor=m ** 2, cross_factor=m)
