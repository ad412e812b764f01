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

"""Bregman setup on ``W x simplex``

The primal space is a Euclidean ball ``W = {w : |w|_2 <= R}`` times the
probability simplex.  The distance-generating function is

    psi(z) = (1/2)|w|_2^2 / (2 D_w^2) + sum_i q_i ln q_i / (2 D_q^2)

with ``D_w = R / sqrt(2)`` and ``D_q = sqrt(ln m)``, which makes ``psi``
1-strongly convex with respect to the merged norm

    |z| = sqrt(|w|_2^2 / (2 D_w^2) + |q|_1^2 / (2 D_q^2)).

Every solver in :mod:`groupdro.solvers` moves through :func:`prox_step`.
Dual images are stored as values only; ``grad psi`` is never inverted.

>>> geom = Geometry(dim=3, m=2, radius=1.0)
>>> z0 = init_point(geom)
>>> z0.w
array([0., 0., 0.])
>>> z0.q
array([0.5, 0.5])
>>> round(psi(geom, z0), 12)
-0.5
"""

import collections as _collections
import math as _math

import numpy as _numpy
from scipy import special as _special

from . import error as _error


# any two feasible points are within this merged distance
DIAMETER = 2 * _math.sqrt(2)

# radius R of the weight ball when none is configured
DEFAULT_RADIUS = 1.0


class Point (_collections.namedtuple('Point', ['w', 'q'])):
    """A primal-dual iterate ``z = (w; q)``

    Also used for displacements, which is what ``z1 - z2`` returns.
    """
    __slots__ = ()

    def __sub__(self, other):
        return Point(w=self.w - other.w, q=self.q - other.q)


class DualPoint (_collections.namedtuple('DualPoint', ['dw', 'sq'])):
    "The image ``grad psi(z)``, split into its w- and q-parts."
    __slots__ = ()


class MergedGradient (_collections.namedtuple('MergedGradient', ['gw', 'gq'])):
    """``(grad_w F; -grad_q F)``

    ``gq`` is stored already negated, so for nonnegative losses every
    entry is ``<= 0``.
    """
    __slots__ = ()


class Anchor (_collections.namedtuple('Anchor', ['point', 'dual', 'psi'])):
    "A Bregman anchor: primal point, dual image and psi value."
    __slots__ = ()


class Geometry (object):
    """Constants of the merged Bregman setup

    >>> geom = Geometry(dim=2, m=4, radius=2.0)
    >>> round(geom.d_w ** 2, 12)
    2.0
    >>> round(geom.d_q ** 2, 12) == round(_math.log(4), 12)
    True
    >>> Geometry(dim=0, m=2)
    Traceback (most recent call last):
      ...
    ValueError: dimension must be positive, got 0
    """
    def __init__(self, dim, m, radius=DEFAULT_RADIUS):
        if dim < 1:
            raise ValueError('dimension must be positive, got {}'.format(dim))
        if m < 1:
            raise ValueError('need at least one group, got {}'.format(m))
        if not radius > 0:
            raise ValueError('radius must be positive, got {}'.format(radius))
        self.dim = int(dim)
        self.m = int(m)
        self.radius = float(radius)
        self.d_w = self.radius / _math.sqrt(2)
        # m = 1 is the singleton simplex; q never moves and D_q is unused
        self.d_q = _math.sqrt(_math.log(self.m))

    def __str__(self):
        return 'dim={} m={} R={}'.format(self.dim, self.m, self.radius)

    def __repr__(self):
        return '<Geometry {}>'.format(str(self))

    @property
    def singleton(self):
        return self.m == 1

    @property
    def w_scale(self):
        "2 D_w^2 = R^2, the factor between w and its dual image."
        return 2 * self.d_w ** 2

    @property
    def q_scale(self):
        "2 D_q^2 = 2 ln m."
        return 2 * self.d_q ** 2


def init_point(geom):
    "Return ``argmin psi``: the origin and the uniform distribution."
    return Point(w=_numpy.zeros(geom.dim), q=_numpy.full(geom.m, 1.0 / geom.m))


def project_ball(geom, w):
    "Euclidean projection onto ``{|w|_2 <= R}`` by rescaling."
    norm = _numpy.linalg.norm(w)
    if norm > geom.radius:
        return w * (geom.radius / norm)
    return w


def merged_norm(geom, delta):
    """Merged primal norm of a displacement

    >>> geom = Geometry(dim=2, m=3, radius=_math.sqrt(2))
    >>> delta = Point(w=_numpy.array([1.0, 0.0]), q=_numpy.zeros(3))
    >>> round(merged_norm(geom, delta), 12) == round(1 / _math.sqrt(2), 12)
    True
    """
    value = float(_numpy.dot(delta.w, delta.w)) / (2 * geom.d_w ** 2)
    if not geom.singleton:
        value += float(_numpy.abs(delta.q).sum()) ** 2 / (2 * geom.d_q ** 2)
    return _math.sqrt(value)


def merged_dual_norm(geom, g):
    "Dual of :func:`merged_norm`: l2 on the w-part, l-infinity on the q-part."
    value = 2 * geom.d_w ** 2 * float(_numpy.dot(g.gw, g.gw))
    if not geom.singleton and len(g.gq):
        value += 2 * geom.d_q ** 2 * float(_numpy.abs(g.gq).max()) ** 2
    return _math.sqrt(value)


def pairing(a, b):
    "``<a, b>`` between a dual-space pair and a primal-space pair."
    return float(_numpy.dot(a[0], b[0])) + float(_numpy.dot(a[1], b[1]))


def psi(geom, z):
    "Distance-generating function, with the convention ``0 ln 0 = 0``."
    value = 0.5 * float(_numpy.dot(z.w, z.w)) / (2 * geom.d_w ** 2)
    if not geom.singleton:
        value += float(_special.xlogy(z.q, z.q).sum()) / (2 * geom.d_q ** 2)
    return value


def dual_map(geom, z):
    """Return ``grad psi(z)``

    >>> geom = Geometry(dim=1, m=2, radius=1.0)
    >>> dual_map(geom, Point(w=_numpy.zeros(1), q=_numpy.array([1.0, 0.0])))
    Traceback (most recent call last):
      ...
    groupdro.error.BoundaryPoint: dual map undefined on the simplex boundary (q[1] = 0)
    """
    if geom.singleton:
        sq = _numpy.zeros(geom.m)
    else:
        zero = _numpy.flatnonzero(z.q <= 0)
        if len(zero):
            raise _error.BoundaryPoint(index=int(zero[0]))
        sq = (1 + _numpy.log(z.q)) / (2 * geom.d_q ** 2)
    return DualPoint(dw=z.w / (2 * geom.d_w ** 2), sq=sq)


def make_anchor(geom, z):
    return Anchor(point=z, dual=dual_map(geom, z), psi=psi(geom, z))


def bregman(geom, z, anchor):
    """``B(z, anchor) = psi(z) - psi(anchor) - <grad psi(anchor), z - anchor>``

    >>> geom = Geometry(dim=1, m=2, radius=1.0)
    >>> z = Point(w=_numpy.zeros(1), q=_numpy.array([0.3, 0.7]))
    >>> anchor = make_anchor(geom, init_point(geom))
    >>> kl = 0.3 * _math.log(0.6) + 0.7 * _math.log(1.4)
    >>> abs(bregman(geom, z, anchor) - kl / (2 * _math.log(2))) < 1e-12
    True
    """
    value = (psi(geom, z) - anchor.psi
             - pairing(anchor.dual, z - anchor.point))
    return max(value, 0.0)


def _check_weights(count, weights):
    weights = _numpy.asarray(weights, dtype=float)
    if count < 1:
        raise _error.WeightError('cannot average an empty sequence')
    if weights.shape != (count,):
        raise _error.WeightError(
            'length mismatch: {} items and {} weights'.format(
                count, len(weights)))
    if not (weights > 0).all():
        raise _error.WeightError('weights must be strictly positive')
    return weights


def weighted_average(points, weights):
    """Convex combination, normalized by the weight sum

    >>> avg = weighted_average(
    ...     [Point(w=_numpy.zeros(1), q=_numpy.array([1.0, 0.0])),
    ...      Point(w=_numpy.zeros(1), q=_numpy.array([0.0, 1.0]))],
    ...     [1, 1])
    >>> avg.q
    array([0.5, 0.5])
    """
    points = list(points)
    weights = _check_weights(len(points), weights)
    total = 0.0
    w = _numpy.zeros_like(points[0].w)
    q = _numpy.zeros_like(points[0].q)
    for weight, point in zip(weights, points):
        total += weight
        w += weight * point.w
        q += weight * point.q
    return Point(w=w / total, q=q / total)


def weighted_dual_average(duals, weights, normalizer=None):
    """Weighted sum of dual images divided by ``normalizer``

    ``normalizer`` defaults to the weight sum; the snapshot rule passes the
    sum of the *next* epoch's weights, which differs from the weight sum
    only when the epoch length changes.
    """
    duals = list(duals)
    weights = _check_weights(len(duals), weights)
    if normalizer is None:
        normalizer = float(sum(weights))
    if normalizer == 0:
        raise _error.WeightError('zero normalizer')
    dw = _numpy.zeros_like(duals[0].dw)
    sq = _numpy.zeros_like(duals[0].sq)
    for weight, dual in zip(weights, duals):
        dw += weight * dual.dw
        sq += weight * dual.sq
    return DualPoint(dw=dw / normalizer, sq=sq / normalizer)


def prox_step(geom, g, eta, alpha, anchor, current):
    """Closed-form two-anchor composite prox step

    Solves ``argmin_z eta <g, z> + alpha B(z, zbar) + (1 - alpha) B(z, z_k)``
    where ``anchor`` is the :class:`DualPoint` ``grad psi(zbar)`` and
    ``current`` is ``z_k``.  The problem separates: the w-part is a
    projected gradient step from the mixed center, the q-part is a
    normalized exponential in the log domain.

    >>> geom = Geometry(dim=2, m=3, radius=1.0)
    >>> z0 = init_point(geom)
    >>> g = MergedGradient(gw=_numpy.zeros(2), gq=_numpy.zeros(3))
    >>> z1 = prox_step(geom, g, 0.1, 0.0, dual_map(geom, z0), z0)
    >>> bool(_numpy.allclose(z1.q, z0.q))
    True
    >>> prox_step(geom, g, 0.0, 0.5, dual_map(geom, z0), z0)
    Traceback (most recent call last):
      ...
    groupdro.error.InvalidStepSize: step size must be positive, got 0.0
    """
    if not eta > 0:
        raise _error.InvalidStepSize(
            eta=eta, message='step size must be positive, got {!r}'.format(eta))
    if not 0 <= alpha <= 1:
        raise _error.WeightError(
            'anchor weight must lie in [0, 1], got {!r}'.format(alpha))
    if not (_numpy.isfinite(g.gw).all() and _numpy.isfinite(g.gq).all()):
        raise _error.GeometryError('non-finite gradient passed to prox step')

    center = (1 - alpha) * current.w
    if alpha > 0:
        center = center + alpha * geom.w_scale * anchor.dw
    w = project_ball(geom, center - geom.w_scale * eta * g.gw)

    if geom.singleton:
        return Point(w=w, q=_numpy.ones(1))
    t = -geom.q_scale * eta * g.gq
    if alpha > 0:
        t = t + alpha * geom.q_scale * anchor.sq
    if alpha < 1:
        with _numpy.errstate(divide='ignore'):
            t = t + (1 - alpha) * (1 + _numpy.log(current.q))
    q = _special.softmax(t)
    return Point(w=w, q=q)
