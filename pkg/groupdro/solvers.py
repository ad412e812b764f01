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

"""Solvers for empirical GDRO and MERO

``aleg``
    Variance-reduced stochastic mirror prox with group sampling.  Each
    epoch takes one full gradient at a snapshot and ``K`` inner steps,
    each costing ``2m`` gradient evaluations.
``alem``
    Two-stage MERO solver: ``aleg`` as a per-group ERM oracle for the
    minimal risks, then ``aleg`` on the shifted risks.
``smd``
    Stochastic mirror descent with the group-sampling gradient.
``mpvr``
    Mirror prox with variance reduction and single-sample gradients
    (uniform or importance sampling).

Every solver returns a :class:`RunRecord` whose trajectory rows are
``(grad_evals, max_risk, wallclock_ns)``, with the max group risk
measured at the running output average.  The risks are never shifted,
so ``alem`` curves compare directly with the others.  Given a held-out
``holdout`` problem, each row gains its max group risk as a fourth
entry.
"""

import math as _math
import time as _time

import numpy as _numpy

from . import LOG as _LOG
from . import error as _error
from . import geometry as _geometry
from . import problem as _problem


ALGORITHMS = ('aleg', 'alem', 'smd', 'mpvr-uniform', 'mpvr-importance')
SAMPLINGS = ('uniform', 'importance')

# numerics tripwire on the distance from the starting point
DIAMETER_SLACK = 1e-6


def _positive_int(name, value):
    if int(value) != value or value < 1:
        raise ValueError('{} must be a positive integer, got {!r}'.format(
            name, value))
    return int(value)


def step_band(lz, inner):
    """Admissible constant step sizes for ``inner`` steps per epoch

    >>> lower, upper = step_band(1.0, 100)
    >>> round(lower, 6), round(upper, 6)
    (0.01, 0.044721)
    """
    return (1 / (10 * lz * _math.sqrt(inner)),
            1 / (lz * _math.sqrt(5 * inner)))


def _effective(constant):
    # a zero constant means a constant gradient field; any step works
    return constant if constant > 0 else 1.0


def step_constant(geom, model):
    """Lipschitz constant behind the ALEG step sizes

    ``L_z`` for two or more groups.  With one group the simplex is a
    point and the loss smoothness ``L`` takes its place.
    """
    if geom.m == 1:
        return model.smoothness_L
    return _problem.lipschitz_lz(geom, model)


class AlegConfig (object):
    """Epochs, inner steps and step-size rule for :func:`aleg`

    ``theta`` picks the step ``sqrt((1 - theta)/K)/L_z`` inside the
    admissible band.  With ``theta_final`` the step moves epoch by epoch
    to the one ``theta_final`` picks, so it never leaves the band.
    ``eta`` overrides both; it is checked against the band here when
    ``lz`` is known and otherwise when the solver starts.  ``stream``
    extends the seed key.

    >>> AlegConfig(epochs=2, inner=3, theta=0.5)
    Traceback (most recent call last):
      ...
    ValueError: theta must lie in (0.8, 0.99), got 0.5
    >>> AlegConfig(epochs=2, inner=100, eta=0.5, lz=1.0)  # doctest: +ELLIPSIS
    Traceback (most recent call last):
      ...
    groupdro.error.InvalidStepSize: step size 0.5 outside the admissible band [0.01, 0.0447...]
    """
    def __init__(self, epochs, inner, theta=0.9, eta=None, seed=0,
                 stream=(), eta_schedule=None, theta_final=None, lz=None):
        self.epochs = _positive_int('epochs', epochs)
        self.inner = _positive_int('inner', inner)
        for name, value in (('theta', theta), ('theta_final', theta_final)):
            if value is not None and not 0.8 < value < 0.99:
                raise ValueError('{} must lie in (0.8, 0.99), got {!r}'.format(
                    name, value))
        if eta is not None and not eta > 0:
            raise _error.InvalidStepSize(
                eta=eta, message='step size must be positive, got {!r}'.format(
                    eta))
        if eta is not None and (
                theta_final is not None or eta_schedule is not None):
            raise ValueError('a fixed eta excludes a step-size schedule')
        self.theta = float(theta)
        self.theta_final = None if theta_final is None else float(theta_final)
        self.eta = None if eta is None else float(eta)
        self.seed = int(seed)
        self.stream = tuple(stream)
        self.eta_schedule = eta_schedule
        if lz is not None:
            self.step_size(lz)

    @property
    def alpha(self):
        return 1.0 / self.inner

    def _theta_step(self, theta, lz):
        return _math.sqrt(self.alpha * (1 - theta)) / lz

    def step_size(self, lz):
        "The constant step for Lipschitz constant ``lz``."
        lz = _effective(lz)
        lower, upper = step_band(lz, self.inner)
        if self.eta is None:
            return self._theta_step(self.theta, lz)
        if not lower <= self.eta <= upper:
            raise _error.InvalidStepSize(
                eta=self.eta, lower=lower, upper=upper)
        return self.eta

    def schedule(self, lz):
        """Per-step rule ``(epoch, step) -> eta``, or ``None`` when constant

        >>> rule = AlegConfig(epochs=3, inner=4, theta=0.84,
        ...                   theta_final=0.96).schedule(1.0)
        >>> [round(rule(s, 0), 4) for s in range(3)]
        [0.2, 0.1581, 0.1]
        """
        if self.eta_schedule is not None:
            return self.eta_schedule
        if self.theta_final is None:
            return None
        lz = _effective(lz)

        def rule(epoch, step):
            fraction = epoch / (self.epochs - 1) if self.epochs > 1 else 0.0
            theta = self.theta + fraction * (self.theta_final - self.theta)
            return self._theta_step(theta, lz)
        return rule

    def as_dict(self):
        return {
            'epochs': self.epochs, 'inner': self.inner, 'theta': self.theta,
            'theta_final': self.theta_final, 'eta_override': self.eta,
            'seed': self.seed,
            }


class AlemConfig (object):
    """Stage settings for :func:`alem`

    Stage 1 runs ``ceil(T / sqrt(nbar))`` epochs of ``round(nbar)``
    inner steps per group (``stage1_epochs`` overrides the epoch count).
    Stage 2 defaults to the same schedule.
    """
    def __init__(self, budget, theta=0.9, stage2_epochs=None,
                 stage2_inner=None, seed=0, stage1_epochs=None):
        self.budget = _positive_int('budget', budget)
        if not 0.8 < theta < 0.99:
            raise ValueError('theta must lie in (0.8, 0.99), got {!r}'.format(
                theta))
        self.theta = float(theta)
        self.stage2_epochs = (None if stage2_epochs is None
                              else _positive_int('stage2 epochs', stage2_epochs))
        self.stage2_inner = (None if stage2_inner is None
                             else _positive_int('stage2 inner', stage2_inner))
        self.stage1_epochs = (None if stage1_epochs is None
                              else _positive_int('stage1 epochs', stage1_epochs))
        self.seed = int(seed)

    def stage1(self, ds, group):
        inner = max(1, int(round(ds.n_bar)))
        epochs = self.stage1_epochs
        if epochs is None:
            epochs = max(1, _math.ceil(self.budget / _math.sqrt(ds.n_bar)))
        return AlegConfig(
            epochs=epochs, inner=inner, theta=self.theta, seed=self.seed,
            stream=(group + 1,))

    def stage2(self, ds):
        first = self.stage1(ds, 0)
        return AlegConfig(
            epochs=self.stage2_epochs or first.epochs,
            inner=self.stage2_inner or first.inner,
            theta=self.theta, seed=self.seed)

    def as_dict(self):
        return {
            'budget': self.budget, 'theta': self.theta,
            'stage1_epochs': self.stage1_epochs,
            'stage2_epochs': self.stage2_epochs,
            'stage2_inner': self.stage2_inner, 'seed': self.seed,
            }


class SmdConfig (object):
    def __init__(self, steps, eta0=None, seed=0):
        self.steps = _positive_int('steps', steps)
        if eta0 is not None and not eta0 > 0:
            raise _error.InvalidStepSize(
                eta=eta0, message='eta0 must be positive, got {!r}'.format(
                    eta0))
        self.eta0 = None if eta0 is None else float(eta0)
        self.seed = int(seed)

    def as_dict(self):
        return {'steps': self.steps, 'eta0': self.eta0, 'seed': self.seed}


class MpvrConfig (object):
    """Settings for :func:`mpvr`; the step is ``gamma sqrt(1 - alpha) / L_c``"""
    def __init__(self, epochs, inner, alpha=None, gamma=0.9,
                 sampling='uniform', seed=0):
        self.epochs = _positive_int('epochs', epochs)
        self.inner = _positive_int('inner', inner)
        if alpha is None:
            alpha = 1 - 1 / self.inner
        if not 0 <= alpha < 1:
            raise ValueError('alpha must lie in [0, 1), got {!r}'.format(alpha))
        if not 0 < gamma < 1:
            raise ValueError('gamma must lie in (0, 1), got {!r}'.format(gamma))
        if sampling not in SAMPLINGS:
            raise ValueError('unknown sampling {!r}'.format(sampling))
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.sampling = sampling
        self.seed = int(seed)

    def as_dict(self):
        return {
            'epochs': self.epochs, 'inner': self.inner, 'alpha': self.alpha,
            'gamma': self.gamma, 'sampling': self.sampling, 'seed': self.seed,
            }


class RunRecord (object):
    """What a solver run produced

    ``trajectory`` rows are ``(grad_evals, max_risk, wallclock_ns)``,
    followed by the held-out max risk when the run had a holdout.
    ``final_counter`` counts the solver's own evaluations; the risk
    evaluations behind the trajectory go to ``metric_counter``.
    """
    def __init__(self, solution, trajectory, final_counter, config_echo,
                 metric_counter=None):
        self.solution = solution
        self.trajectory = trajectory
        self.final_counter = final_counter
        self.config_echo = config_echo
        self.metric_counter = metric_counter

    def __repr__(self):
        return '<RunRecord {} {} rows {}>'.format(
            self.config_echo.get('algo'), len(self.trajectory),
            self.final_counter)

    @property
    def final_max_risk(self):
        return self.trajectory[-1][1] if self.trajectory else None


class _Tracker (object):
    """Running output average plus trajectory rows"""
    def __init__(self, problem, geom, counter, record_every, name,
                 observer=None, start=None, holdout=None):
        self.problem = problem
        self.holdout = holdout
        self.geom = geom
        self.counter = counter
        self.record_every = record_every
        self.name = name
        self.observer = observer
        self.start = start
        self.metric_counter = _problem.EvalCounter()
        self.trajectory = []
        self.w_sum = _numpy.zeros(geom.dim)
        self.q_sum = _numpy.zeros(geom.m)
        self.weight = 0.0
        self.steps = 0
        self.clock = _time.perf_counter_ns()

    def check(self, z, epoch, step):
        if not (_numpy.isfinite(z.w).all() and _numpy.isfinite(z.q).all()):
            raise _error.NonFiniteIterate(
                solver=self.name, epoch=epoch, step=step)
        if self.start is not None:
            distance = _geometry.merged_norm(self.geom, z - self.start)
            if distance > _geometry.DIAMETER + DIAMETER_SLACK:
                raise _error.DomainBoundExceeded(
                    solver=self.name, distance=distance,
                    bound=_geometry.DIAMETER)
        if self.observer is not None:
            self.observer(z)

    def add(self, z, weight):
        self.w_sum += weight * z.w
        self.q_sum += weight * z.q
        self.weight += weight

    def average(self):
        return _geometry.Point(
            w=self.w_sum / self.weight, q=self.q_sum / self.weight)

    def record(self, point):
        risks = self.problem.group_risks(point.w, counter=self.metric_counter)
        row = (self.counter.grad_evals, float(risks.max()),
               _time.perf_counter_ns() - self.clock)
        if self.holdout is not None:
            risks = self.holdout.group_risks(
                point.w, counter=self.metric_counter)
            row += (float(risks.max()),)
        self.trajectory.append(row)

    def step(self):
        self.steps += 1
        if self.record_every and self.steps % self.record_every == 0:
            self.record(self.average())

    def finish(self):
        solution = self.average()
        if self.record_every is not None and (
                not self.trajectory
                or self.trajectory[-1][0] != self.counter.grad_evals):
            self.record(solution)
        return solution


def aleg(problem, geom, cfg, record_every=None, counter=None, observer=None,
         name='aleg', holdout=None):
    """Variance-reduced stochastic mirror prox for empirical GDRO

    ``record_every`` is the number of inner steps between trajectory
    rows; ``None`` disables the trajectory.  Pass ``counter`` to keep
    counting on an existing :class:`~groupdro.problem.EvalCounter`.
    ``holdout`` is a problem on held-out data with the same groups and
    loss; its max group risk joins every trajectory row.
    """
    if counter is None:
        counter = _problem.EvalCounter()
    lz = step_constant(geom, problem.model)
    eta = cfg.step_size(lz)
    schedule = cfg.schedule(lz)
    constant = 'L' if geom.m == 1 else 'L_z'
    alpha = cfg.alpha
    K = cfg.inner
    rng = _problem.make_rng(cfg.seed, *cfg.stream)
    _LOG.info('{}: {} epochs x {} steps, eta={:.6g}, {}={:.6g}'.format(
        name, cfg.epochs, K, eta, constant, lz))

    z0 = _geometry.init_point(geom)
    tracker = _Tracker(problem, geom, counter, record_every, name,
                       observer=observer, start=z0, holdout=holdout)
    if record_every is not None:
        tracker.record(z0)
    # virtual epoch -1: K copies of the starting point
    previous = [z0] * K
    previous_duals = [_geometry.dual_map(geom, z0)] * K
    weights = [alpha] * K
    z = z0
    if schedule is not None:
        lower, upper = step_band(_effective(lz), K)
    for s in range(cfg.epochs):
        snapshot = _geometry.weighted_average(previous, weights)
        mirror = _geometry.weighted_dual_average(
            previous_duals, weights, normalizer=alpha * K)
        g_full = problem.full_gradient(snapshot, counter=counter)
        iterates = []
        for k in range(K):
            if schedule is not None:
                eta = schedule(s, k)
                if not lower <= eta <= upper:
                    raise _error.InvalidStepSize(
                        eta=eta, lower=lower, upper=upper)
            half = _geometry.prox_step(geom, g_full, eta, alpha, mirror, z)
            sample = problem.draw_group_sample(rng)
            g_half = problem.stochastic_gradient(half, sample, counter=counter)
            g_snap = problem.stochastic_gradient(
                snapshot, sample, counter=counter)
            g = _problem.vr_estimator(g_half, g_snap, g_full)
            z = _geometry.prox_step(geom, g, eta, alpha, mirror, z)
            tracker.check(half, s, k)
            tracker.check(z, s, k)
            tracker.add(half, eta)
            iterates.append(z)
            tracker.step()
        previous = iterates
        previous_duals = [_geometry.dual_map(geom, x) for x in iterates]
        _LOG.debug('{}: epoch {} done, {} gradient evaluations'.format(
            name, s, counter.grad_evals))
    solution = tracker.finish()
    echo = dict(cfg.as_dict(), algo=name, eta=eta, radius=geom.radius)
    echo[constant] = lz
    return RunRecord(
        solution=solution, trajectory=tracker.trajectory,
        final_counter=counter, config_echo=echo,
        metric_counter=tracker.metric_counter)


def aleg_erm(problem, geom, cfg, counter=None):
    """Run :func:`aleg` on a one-group problem as an ERM oracle

    Returns ``(wbar, Rhat)`` where ``Rhat`` is the risk at ``wbar``.
    With one group the simplex is a point, so the step band uses the
    loss smoothness ``L`` where the group solver uses ``L_z``.
    """
    if problem.m != 1 or geom.m != 1:
        raise ValueError('ERM needs exactly one group, got {}'.format(
            problem.m))
    record = aleg(problem, geom, cfg, record_every=None, counter=counter,
                  name='aleg-erm')
    w = record.solution.w
    return w, problem.group_risk(0, w, counter=counter)


def alem(problem, geom, cfg, record_every=None, counter=None, observer=None,
         holdout=None):
    """Two-stage solver for empirical MERO

    Returns ``(record, r_hats, stage1_ws)``.  The record's counter
    includes both stages.
    """
    if counter is None:
        counter = _problem.EvalCounter()
    ds = problem.dataset
    single_geom = _geometry.Geometry(dim=geom.dim, m=1, radius=geom.radius)
    r_hats = _numpy.empty(ds.m)
    stage1_ws = []
    stage1 = None
    for i in range(ds.m):
        stage1 = cfg.stage1(ds, i)
        single = _problem.Problem(ds.subset([i]), problem.model)
        w, r_hats[i] = aleg_erm(single, single_geom, stage1, counter=counter)
        stage1_ws.append(w)
        _LOG.debug('alem: group {} minimal risk estimate {:.6g}'.format(
            i, r_hats[i]))
    stage1_evals = counter.grad_evals
    _LOG.info('alem: stage 1 used {} gradient evaluations'.format(
        stage1_evals))
    record = aleg(problem.shifted(r_hats), geom, cfg.stage2(ds),
                  record_every=record_every, counter=counter,
                  observer=observer, name='alem', holdout=holdout)
    record.config_echo = dict(
        record.config_echo, algo='alem', alem=cfg.as_dict(),
        stage1_epochs=stage1.epochs, stage1_inner=stage1.inner,
        stage1_grad_evals=stage1_evals, r_hats=[float(r) for r in r_hats])
    return record, r_hats, stage1_ws


def smd(problem, geom, cfg, record_every=None, counter=None, observer=None,
        holdout=None):
    """Stochastic mirror descent with step ``eta0 / sqrt(t + 1)``

    The output is the uniform average of the points at which gradients
    were taken.
    """
    if counter is None:
        counter = _problem.EvalCounter()
    lz = _problem.lipschitz_lz(geom, problem.model)
    eta0 = cfg.eta0 if cfg.eta0 is not None else 1.0 / _effective(lz)
    rng = _problem.make_rng(cfg.seed)
    _LOG.info('smd: {} steps, eta0={:.6g}'.format(cfg.steps, eta0))
    z = _geometry.init_point(geom)
    tracker = _Tracker(problem, geom, counter, record_every, 'smd',
                       observer=observer, start=z, holdout=holdout)
    if record_every is not None:
        tracker.record(z)
    for t in range(cfg.steps):
        sample = problem.draw_group_sample(rng)
        g = problem.stochastic_gradient(z, sample, counter=counter)
        tracker.add(z, 1.0)
        z = _geometry.prox_step(
            geom, g, eta0 / _math.sqrt(t + 1), 0.0, None, z)
        tracker.check(z, 0, t)
        tracker.step()
    solution = tracker.finish()
    echo = dict(cfg.as_dict(), algo='smd', eta0=eta0, L_z=lz,
                radius=geom.radius)
    return RunRecord(
        solution=solution, trajectory=tracker.trajectory,
        final_counter=counter, config_echo=echo,
        metric_counter=tracker.metric_counter)


def mpvr_constant(problem, geom, sampling):
    "``L_u`` for uniform sampling, ``L_i`` for importance sampling."
    if sampling == 'uniform':
        return _problem.lipschitz_lu(geom, problem.model, problem.dataset)
    return _problem.lipschitz_li(geom, problem.model)


def mpvr(problem, geom, cfg, record_every=None, counter=None, observer=None,
         holdout=None):
    """Mirror prox with variance reduction and single-sample gradients

    Snapshots are plain means of the epoch's starting points.  The
    first snapshot is ``z_0``; each later one and its full gradient are
    computed at the end of the preceding epoch.
    """
    if problem.m < 2:
        raise ValueError('mpvr needs at least two groups')
    if counter is None:
        counter = _problem.EvalCounter()
    name = 'mpvr-{}'.format(cfg.sampling)
    lc = mpvr_constant(problem, geom, cfg.sampling)
    eta = cfg.gamma * _math.sqrt(1 - cfg.alpha) / _effective(lc)
    alpha = cfg.alpha
    K = cfg.inner
    rng = _problem.make_rng(cfg.seed)
    if cfg.sampling == 'uniform':
        def sample_gradient(z, key=None):
            return problem.mpvr_uniform_gradient(
                z, rng, counter=counter, index=key)
    else:
        def sample_gradient(z, key=None):
            return problem.mpvr_importance_gradient(
                z, rng, counter=counter, pair=key)
    _LOG.info('{}: {} epochs x {} steps, eta={:.6g}, L_c={:.6g}'.format(
        name, cfg.epochs, K, eta, lc))

    z = _geometry.init_point(geom)
    tracker = _Tracker(problem, geom, counter, record_every, name,
                       observer=observer, start=z, holdout=holdout)
    if record_every is not None:
        tracker.record(z)
    snapshot = z
    mirror = _geometry.dual_map(geom, z)
    g_full = problem.full_gradient(snapshot, counter=counter)
    uniform = [1.0] * K
    for s in range(cfg.epochs):
        starts = []
        for k in range(K):
            starts.append(z)
            half = _geometry.prox_step(geom, g_full, eta, alpha, mirror, z)
            g_half, key = sample_gradient(half)
            g_snap, _ = sample_gradient(snapshot, key)
            g = _problem.vr_estimator(g_half, g_snap, g_full)
            z = _geometry.prox_step(geom, g, eta, alpha, mirror, z)
            tracker.check(half, s, k)
            tracker.check(z, s, k)
            tracker.add(half, 1.0)
            tracker.step()
        if s + 1 < cfg.epochs:
            snapshot = _geometry.weighted_average(starts, uniform)
            mirror = _geometry.weighted_dual_average(
                [_geometry.dual_map(geom, x) for x in starts], uniform)
            g_full = problem.full_gradient(snapshot, counter=counter)
        _LOG.debug('{}: epoch {} done, {} gradient evaluations'.format(
            name, s, counter.grad_evals))
    solution = tracker.finish()
    echo = dict(cfg.as_dict(), algo=name, eta=eta, L_c=lc,
                radius=geom.radius)
    return RunRecord(
        solution=solution, trajectory=tracker.trajectory,
        final_counter=counter, config_echo=echo,
        metric_counter=tracker.metric_counter)


def aleg_epoch_cost(ds, inner):
    "Gradient evaluations of one ALEG epoch: ``sum_i n_i + 2 m K``."
    return ds.n_total + 2 * ds.m * inner


def mpvr_epoch_cost(ds, inner):
    "Gradient evaluations of one MPVR epoch: ``sum_i n_i + 2 K``."
    return ds.n_total + 2 * inner


def epochs_for_budget(solver, budget, epoch_cost):
    """Whole epochs that fit in ``budget``

    >>> epochs_for_budget('aleg', 100, 40)
    2
    >>> epochs_for_budget('aleg', 30, 40)
    Traceback (most recent call last):
      ...
    groupdro.error.BudgetTooSmall: aleg: budget below minimum epoch cost (30 < 40)
    """
    epochs = int(budget) // int(epoch_cost)
    if epochs < 1:
        raise _error.BudgetTooSmall(
            solver=solver, budget=budget, minimum=epoch_cost)
    return epochs


def smd_steps_for_budget(ds, budget):
    return epochs_for_budget('smd', budget, ds.m)
