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

"""Duality gap, excess risk and the reference oracles

The gap of ``zbar = (wbar, qbar)`` is

    max_i (R_i(wbar) - shift_i)  -  min_w sum_i qbar_i (R_i(w) - shift_i)

The max is exact.  The min comes from :func:`erm_oracle`, a deterministic
projected gradient descent, so a reported gap can undershoot the true one
by at most the oracle's suboptimality.  Oracle evaluations are charged to
a separate metric counter and never show up on the comparison axis.
"""

import collections as _collections

import numpy as _numpy

from . import LOG as _LOG
from . import geometry as _geometry
from . import problem as _problem


class OracleConfig (object):
    def __init__(self, tol=1e-8, max_iter=100000):
        if not tol > 0:
            raise ValueError('oracle tolerance must be positive')
        if max_iter < 1:
            raise ValueError('oracle needs at least one iteration')
        self.tol = float(tol)
        self.max_iter = int(max_iter)

    def __repr__(self):
        return '<OracleConfig tol={} max_iter={}>'.format(
            self.tol, self.max_iter)


OracleResult = _collections.namedtuple(
    'OracleResult',
    ['w', 'value', 'iterations', 'converged', 'mapping_norm'])


class GapReport (_collections.namedtuple(
        'GapReport',
        ['max_term', 'min_term', 'gap', 'oracle_iters', 'oracle_tol',
         'converged'])):
    __slots__ = ()

    def as_dict(self):
        return {
            'max_term': float(self.max_term),
            'min_term': float(self.min_term),
            'gap': float(self.gap),
            'oracle_iters': int(self.oracle_iters),
            'oracle_tol': float(self.oracle_tol),
            'converged': bool(self.converged),
            }


def max_group_risk(problem, w, counter=None):
    """``(max_i R_i(w), argmax)``, ties broken to the smallest index

    Risks are unshifted; see :meth:`~groupdro.problem.Problem.max_risk`
    for the shifted objective.

    >>> ds = _problem.GroupedDataset.from_groups(
    ...     [([[1.0]], [1]), ([[1.0]], [1])])
    >>> value, i = max_group_risk(
    ...     _problem.Problem(ds, _problem.make_loss_model(ds)), _numpy.zeros(1))
    >>> round(value, 6), i
    (0.693147, 0)
    """
    risks = problem.group_risks(w, counter=counter)
    i = int(_numpy.argmax(risks))
    return float(risks[i]), i


def erm_oracle(problem, geom, q, cfg=None, counter=None, w0=None):
    """Minimize ``sum_i q_i (R_i(w) - shift_i)`` over the ball

    Projected gradient descent.  The first trial step is ``1/L``
    (``1`` for ``L = 0``); each later iteration first tries twice the
    last accepted step, then halves it until the quadratic upper bound
    holds.  Stops when the gradient-mapping norm drops to ``cfg.tol``.
    """
    if cfg is None:
        cfg = OracleConfig()
    q = _numpy.asarray(q, dtype=float)
    smoothness = problem.model.smoothness_L
    step = 1.0 / smoothness if smoothness > 0 else 1.0
    w = _numpy.zeros(geom.dim) if w0 is None else _geometry.project_ball(
        geom, _numpy.asarray(w0, dtype=float))
    value, grad = problem.weighted_risk(w, q, counter=counter)
    mapping_norm = float('inf')
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        while True:
            w_new = _geometry.project_ball(geom, w - step * grad)
            delta = w_new - w
            value_new, grad_new = problem.weighted_risk(
                w_new, q, counter=counter)
            bound = (value + float(_numpy.dot(grad, delta))
                     + float(_numpy.dot(delta, delta)) / (2 * step))
            if value_new <= bound + 1e-12 * max(1.0, abs(value)):
                break
            step /= 2
        mapping_norm = float(_numpy.linalg.norm(delta)) / step
        if value_new <= value:
            w, value, grad = w_new, value_new, grad_new
        if mapping_norm <= cfg.tol:
            converged = True
            break
        step *= 2
    if not converged:
        _LOG.warning(
            'ERM oracle stopped after {} iterations with gradient mapping '
            '{:.3g} > {:.3g}; returning the best value found'.format(
                iterations, mapping_norm, cfg.tol))
    else:
        _LOG.debug('ERM oracle converged in {} iterations'.format(iterations))
    return OracleResult(
        w=w, value=float(value), iterations=iterations, converged=converged,
        mapping_norm=mapping_norm)


def duality_gap(problem, geom, zbar, cfg=None, counter=None):
    """Duality gap of ``zbar`` as a :class:`GapReport`"""
    if cfg is None:
        cfg = OracleConfig()
    max_term, _ = problem.max_risk(zbar.w, counter=counter)
    oracle = erm_oracle(problem, geom, zbar.q, cfg=cfg, counter=counter)
    return GapReport(
        max_term=max_term, min_term=oracle.value,
        gap=max_term - oracle.value, oracle_iters=oracle.iterations,
        oracle_tol=cfg.tol, converged=oracle.converged)


def excess_risk_gap(problem, w, r_stars, counter=None):
    """``max_i (R_i(w) - r_stars_i)``

    >>> ds = _problem.GroupedDataset.from_groups(
    ...     [([[1.0]], [1]), ([[2.0]], [-1])])
    >>> problem = _problem.Problem(ds, _problem.make_loss_model(ds))
    >>> excess_risk_gap(problem, _numpy.zeros(1), [0.0])
    Traceback (most recent call last):
      ...
    ValueError: need 2 reference risks, got 1
    """
    r_stars = _numpy.asarray(r_stars, dtype=float).reshape(-1)
    if len(r_stars) != problem.m:
        raise ValueError('need {} reference risks, got {}'.format(
            problem.m, len(r_stars)))
    return float((problem.group_risks(w, counter=counter) - r_stars).max())


def minimal_risks(problem, geom, cfg=None, counter=None):
    """Per-group ``R_i*`` from the ERM oracle on each group alone"""
    ds = problem.dataset
    r_stars = _numpy.empty(ds.m)
    for i in range(ds.m):
        single = _problem.Problem(ds.subset([i]), problem.model)
        r_stars[i] = erm_oracle(
            single, geom, _numpy.ones(1), cfg=cfg, counter=counter).value
    return r_stars


def mirror_prox_oracle(problem, geom, steps, eta=None, counter=None):
    """Deterministic mirror prox with full gradients

    Returns the uniform average of the extrapolation points.  With
    ``eta = 1/L_z`` (the default) its gap decays like ``1/steps``.
    """
    if eta is None:
        lz = _problem.lipschitz_lz(geom, problem.model)
        eta = 1.0 / lz if lz > 0 else 1.0
    z = _geometry.init_point(geom)
    w_sum = _numpy.zeros(geom.dim)
    q_sum = _numpy.zeros(geom.m)
    for t in range(steps):
        g = problem.full_gradient(z, counter=counter)
        half = _geometry.prox_step(geom, g, eta, 0.0, None, z)
        g_half = problem.full_gradient(half, counter=counter)
        z = _geometry.prox_step(geom, g_half, eta, 0.0, None, z)
        w_sum += half.w
        q_sum += half.q
    return _geometry.Point(w=w_sum / steps, q=q_sum / steps)
