import math

import numpy as np
import pytest

from asaddle.delay import DelaySchedule, StalenessBuffer
from asaddle.errors import NoFeasibleDelta
from asaddle.graph import build_graph, path_edges
from asaddle.problem import (ConstraintFamily, DomainSpec, Objective, PairwiseConstraint,
                             ProblemSpec, Sampler, as_neighborhood)
from asaddle.metrics import AssumptionEstimates
from asaddle.saddle import (Hyperparams, SaddleState, advise, dual_gradient, dual_step,
                            primal_gradient, primal_step, run, run_generalized,
                            run_synchronous, stack, stochastic_lagrangian)


# ---------------------------------------------------------------------------
# fixtures: tiny hand-checkable problems
# ---------------------------------------------------------------------------

def point_mass_sampler():
    return Sampler(sample=lambda rng: None)


def scalar_quadratic_spec():
    """Single node, f = x^2/2, no constraints."""
    g = build_graph(1, [])
    obj = Objective(value=lambda x, th: 0.5 * x[0] ** 2, grad=lambda x, th: x.copy())
    return ProblemSpec.make(g, 1, [obj], [point_mass_sampler()],
                            ConstraintFamily(kind="pairwise", pairwise={}),
                            DomainSpec.box(np.array([-10.0]), np.array([10.0])))


def two_node_quadratic_spec(gamma=1.0):
    """f1 = (x1-1)^2/2 pulls right, f2 = (x2+1)^2/2 pulls left, coupled by the
    mirror-symmetric slack (x_i - x_j)^2 - gamma. Deterministic, smooth, with
    known saddle x* = (0.5, -0.5), lam* = (0.125, 0.125) for gamma = 1."""
    g = build_graph(2, [(0, 1)])
    objs = [
        Objective(value=lambda x, th: 0.5 * (x[0] - 1.0) ** 2, grad=lambda x, th: x - 1.0),
        Objective(value=lambda x, th: 0.5 * (x[0] + 1.0) ** 2, grad=lambda x, th: x + 1.0),
    ]
    constraints = ConstraintFamily.from_symmetric_pairwise(
        g,
        value=lambda a, b, ta, tb: float((a[0] - b[0]) ** 2),
        grad_first=lambda a, b, ta, tb: 2.0 * (a - b),
        gamma=gamma,
    )
    return ProblemSpec.make(g, 1, objs, [point_mass_sampler()] * 2, constraints,
                            DomainSpec.box(np.array([-4.0]), np.array([4.0])))


# ---------------------------------------------------------------------------
# hyperparams
# ---------------------------------------------------------------------------

def test_hyperparams_validation():
    Hyperparams(epsilon=0.1, delta=0.0, T=10)
    with pytest.raises(ValueError):
        Hyperparams(epsilon=0.0, delta=0.0, T=10)
    with pytest.raises(ValueError):
        Hyperparams(epsilon=0.1, delta=-1.0, T=10)
    with pytest.raises(ValueError):
        Hyperparams(epsilon=1.0, delta=1.0, T=10)  # shrink factor hits 0


# ---------------------------------------------------------------------------
# Lagrangian value
# ---------------------------------------------------------------------------

def test_lagrangian_zero_duals_is_objective_sum():
    spec = two_node_quadratic_spec()
    hp = Hyperparams(epsilon=0.1, delta=0.5, T=1)
    state = SaddleState(x=[np.array([0.0]), np.array([0.0])], lam=np.zeros(2))
    val = stochastic_lagrangian(spec, state, [None, None], hp)
    assert val == pytest.approx(0.5 + 0.5)


def test_lagrangian_single_edge_hand_value():
    # f == 0, one directed edge with slack 1.0, lam = 2, delta*eps = 0.1:
    # 2*1 - 0.05*4 = 1.8 per direction counted once
    g = build_graph(2, [(0, 1)])
    objs = [Objective(value=lambda x, th: 0.0, grad=lambda x, th: np.zeros(1))] * 2
    table = {
        (0, 1): PairwiseConstraint(value=lambda *a: 1.0,
                                   grad_i=lambda *a: np.zeros(1),
                                   grad_j=lambda *a: np.zeros(1)),
        (1, 0): PairwiseConstraint(value=lambda *a: 1.0,
                                   grad_i=lambda *a: np.zeros(1),
                                   grad_j=lambda *a: np.zeros(1)),
    }
    spec = ProblemSpec.make(g, 1, objs, [point_mass_sampler()] * 2,
                            ConstraintFamily(kind="pairwise", pairwise=table),
                            DomainSpec.box(np.array([-1.0]), np.array([1.0])))
    hp = Hyperparams(epsilon=0.2, delta=0.5, T=1)  # delta*eps = 0.1
    lam = np.zeros(2)
    lam[spec.graph.edge_index(0, 1)] = 2.0
    state = SaddleState(x=[np.zeros(1), np.zeros(1)], lam=lam)
    assert stochastic_lagrangian(spec, state, [None, None], hp) == pytest.approx(1.8)
    # delta = 0 drops the regularizer: plain Lagrangian value
    hp0 = Hyperparams(epsilon=0.2, delta=0.0, T=1)
    assert stochastic_lagrangian(spec, state, [None, None], hp0) == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# one-step updates
# ---------------------------------------------------------------------------

def _fresh_buffers(spec, xs, ths, t=0):
    xbuf = StalenessBuffer(spec.graph.n_nodes, 1)
    obuf = StalenessBuffer(spec.graph.n_nodes, 1)
    for i in range(spec.graph.n_nodes):
        xbuf.record(t, i, xs[i])
        obuf.record(t, i, ths[i])
    return (xbuf, obuf), [t] * spec.graph.n_nodes


def test_primal_step_scalar_hand_value():
    spec = scalar_quadratic_spec()
    hp = Hyperparams(epsilon=0.1, delta=0.0, T=1)
    x = [np.array([1.0])]
    state = SaddleState(x=x, lam=np.zeros(0))
    buffers, resolved = _fresh_buffers(spec, x, [None])
    new_x = primal_step(spec, state, buffers, resolved, hp)
    assert new_x[0][0] == pytest.approx(0.9)


def test_primal_step_zero_epsilon_is_identity():
    spec = two_node_quadratic_spec()
    hp = Hyperparams(epsilon=1e-300, delta=0.0, T=1)
    x = [np.array([0.3]), np.array([-0.7])]
    state = SaddleState(x=x, lam=np.zeros(2))
    buffers, resolved = _fresh_buffers(spec, x, [None, None])
    new_x = primal_step(spec, state, buffers, resolved, hp)
    assert np.allclose(stack(new_x), stack(x), atol=1e-12)


def test_dual_step_hand_values():
    g = build_graph(2, [(0, 1)])
    objs = [Objective(value=lambda x, th: 0.0, grad=lambda x, th: np.zeros(1))] * 2
    mk = lambda s: PairwiseConstraint(value=lambda *a: s,
                                      grad_i=lambda *a: np.zeros(1),
                                      grad_j=lambda *a: np.zeros(1))
    spec = ProblemSpec.make(g, 1, objs, [point_mass_sampler()] * 2,
                            ConstraintFamily(kind="pairwise",
                                             pairwise={(0, 1): mk(0.5), (1, 0): mk(0.5)}),
                            DomainSpec.box(np.array([-1.0]), np.array([1.0])))
    x = [np.zeros(1), np.zeros(1)]
    # lam=1, eps=0.1, delta=0.01, slack=0.5 -> (1 - 1e-4)*1 + 0.05 = 1.0499
    hp = Hyperparams(epsilon=0.1, delta=0.01, T=1)
    state = SaddleState(x=x, lam=np.ones(2))
    buffers, resolved = _fresh_buffers(spec, x, [None, None])
    new_lam = dual_step(spec, state, buffers, resolved, hp)
    assert np.allclose(new_lam, 1.0499)
    # delta=0, slack=0 leaves lam unchanged
    spec0 = ProblemSpec.make(g, 1, objs, [point_mass_sampler()] * 2,
                             ConstraintFamily(kind="pairwise",
                                              pairwise={(0, 1): mk(0.0), (1, 0): mk(0.0)}),
                             DomainSpec.box(np.array([-1.0]), np.array([1.0])))
    hp0 = Hyperparams(epsilon=0.1, delta=0.0, T=1)
    buffers, resolved = _fresh_buffers(spec0, x, [None, None])
    assert np.allclose(dual_step(spec0, state, buffers, resolved, hp0), 1.0)
    # negative slack at lam=0 projects back to 0
    specn = ProblemSpec.make(g, 1, objs, [point_mass_sampler()] * 2,
                             ConstraintFamily(kind="pairwise",
                                              pairwise={(0, 1): mk(-2.0), (1, 0): mk(-2.0)}),
                             DomainSpec.box(np.array([-1.0]), np.array([1.0])))
    state0 = SaddleState(x=x, lam=np.zeros(2))
    buffers, resolved = _fresh_buffers(specn, x, [None, None])
    assert np.allclose(dual_step(specn, state0, buffers, resolved, hp), 0.0)


# ---------------------------------------------------------------------------
# run loops
# ---------------------------------------------------------------------------

def test_run_T0_has_only_initial_state(small_consensus_spec):
    hp = Hyperparams(epsilon=0.1, delta=0.0, T=0)
    trace = run(small_consensus_spec, hp, DelaySchedule(kind="zero"), seed=0)
    assert trace.n_rows == 1
    assert trace.delayed_slack.shape == (0, small_consensus_spec.graph.n_edges)


def test_run_deterministic_given_seed(small_consensus_spec):
    hp = Hyperparams(epsilon=0.05, delta=1e-5, T=100)
    sched = DelaySchedule(kind="uniform_random", tau_max=4, seed=3)
    t1 = run(small_consensus_spec, hp, sched, seed=7, thin_every=1)
    t2 = run(small_consensus_spec, hp, DelaySchedule(kind="uniform_random", tau_max=4, seed=3),
             seed=7, thin_every=1)
    for t in t1.x_snapshots:
        assert np.array_equal(t1.x_snapshots[t], t2.x_snapshots[t])
    assert np.array_equal(t1.lambda_norm, t2.lambda_norm)
    assert np.array_equal(t1.delayed_slack, t2.delayed_slack)


def test_zero_delay_matches_synchronous_bitwise(small_consensus_spec):
    hp = Hyperparams(epsilon=0.05, delta=1e-5, T=200)
    for seed in range(3):
        sync = run_synchronous(small_consensus_spec, hp, seed, thin_every=1)
        asyn = run(small_consensus_spec, hp, DelaySchedule(kind="zero"), seed, thin_every=1)
        for t in sync.x_snapshots:
            assert np.array_equal(sync.x_snapshots[t], asyn.x_snapshots[t])
        assert np.array_equal(sync.lambda_norm, asyn.lambda_norm)
        assert np.array_equal(sync.delayed_slack, asyn.delayed_slack)


def test_pairwise_matches_neighborhood_encoding(small_consensus_spec):
    hp = Hyperparams(epsilon=0.05, delta=1e-5, T=150)
    sched = DelaySchedule(kind="uniform_random", tau_max=3, seed=5)
    pw = run(small_consensus_spec, hp, sched, seed=2, thin_every=1)
    nb = run_generalized(as_neighborhood(small_consensus_spec), hp,
                         DelaySchedule(kind="uniform_random", tau_max=3, seed=5),
                         seed=2, thin_every=1)
    for t in pw.x_snapshots:
        assert np.max(np.abs(pw.x_snapshots[t] - nb.x_snapshots[t])) <= 1e-12
    assert np.max(np.abs(pw.lambda_norm - nb.lambda_norm)) <= 1e-12


def test_generalized_zero_constraint_keeps_duals_zero():
    from asaddle.problem import NeighborhoodConstraint
    g = build_graph(2, [(0, 1)])
    objs = [Objective(value=lambda x, th: 0.5 * float(x @ x), grad=lambda x, th: x.copy())] * 2
    cons = tuple(
        NeighborhoodConstraint(size=1,
                               value=lambda xs, ths: np.array([-1.0]),
                               jacobian=lambda wrt, xs, ths: np.zeros((1, 1)))
        for _ in range(2)
    )
    spec = ProblemSpec.make(g, 1, objs, [point_mass_sampler()] * 2,
                            ConstraintFamily(kind="neighborhood", neighborhood=cons),
                            DomainSpec.box(np.array([-2.0]), np.array([2.0])))
    hp = Hyperparams(epsilon=0.1, delta=0.0, T=50)
    trace = run_generalized(spec, hp, DelaySchedule(kind="zero"), seed=0)
    assert np.all(trace.lambda_norm == 0.0)


def test_generalized_single_node_reduces_to_projected_sgd():
    # one node, self-only constraint x <= 0.4 (slack x - 0.4), point-mass data
    from asaddle.problem import NeighborhoodConstraint
    g = build_graph(1, [])
    obj = Objective(value=lambda x, th: 0.5 * (x[0] - 1.0) ** 2, grad=lambda x, th: x - 1.0)
    con = NeighborhoodConstraint(size=1,
                                 value=lambda xs, ths: np.array([xs[0][0] - 0.4]),
                                 jacobian=lambda wrt, xs, ths: np.ones((1, 1)))
    spec = ProblemSpec.make(g, 1, [obj], [point_mass_sampler()],
                            ConstraintFamily(kind="neighborhood", neighborhood=(con,)),
                            DomainSpec.box(np.array([-2.0]), np.array([2.0])),
                            x0=[np.array([0.0])])
    hp = Hyperparams(epsilon=0.05, delta=0.0, T=120)
    trace = run_generalized(spec, hp, DelaySchedule(kind="zero"), seed=0, thin_every=1)

    # independent reference: scalar projected gradient with one multiplier
    x, lam = 0.0, 0.0
    for t in range(hp.T):
        g_x = (x - 1.0) + lam * 1.0
        s = x - 0.4
        x = float(np.clip(x - hp.epsilon * g_x, -2.0, 2.0))
        lam = max(lam + hp.epsilon * s, 0.0)
    assert trace.x_final[0][0] == pytest.approx(x, abs=1e-12)
    assert trace.lam_final[0][0] == pytest.approx(lam, abs=1e-12)
    assert abs(trace.x_final[0][0] - 0.4) < 0.05  # constraint active near optimum


def test_engine_stepwise_matches_one_shot(small_consensus_spec):
    from asaddle.saddle import SaddleEngine
    hp = Hyperparams(epsilon=0.05, delta=1e-5, T=80)
    sched = DelaySchedule(kind="uniform_random", tau_max=4, seed=6)
    one_shot = run(small_consensus_spec, hp, sched, seed=9, thin_every=1)

    engine = SaddleEngine(small_consensus_spec, hp,
                          DelaySchedule(kind="uniform_random", tau_max=4, seed=6),
                          seed=9, thin_every=1)
    mid = engine.run(30).trace()
    assert mid.T == 30 and mid.n_rows == 31
    for _ in range(50):
        engine.step()
    full = engine.trace()
    assert np.array_equal(full.lambda_norm, one_shot.lambda_norm)
    assert np.array_equal(full.delayed_slack, one_shot.delayed_slack)
    for t in one_shot.x_snapshots:
        assert np.array_equal(full.x_snapshots[t], one_shot.x_snapshots[t])
    with pytest.raises(IndexError):
        engine.step()


def test_staleness_monotone_and_bounded(small_consensus_spec):
    hp = Hyperparams(epsilon=0.05, delta=1e-5, T=300)
    sched = DelaySchedule(kind="uniform_random", tau_max=6, seed=1)
    trace = run(small_consensus_spec, hp, sched, seed=4)
    assert np.all(np.diff(trace.resolved, axis=0) >= 0)
    assert trace.staleness.max() <= 6
    assert np.all(trace.staleness >= 0)


# ---------------------------------------------------------------------------
# one-step decrement property (deterministic saddle instance)
# ---------------------------------------------------------------------------

def one_step_decrement_audit(spec, hp, schedule, x_star, lam_star, T):
    """Assert the per-step telescoping inequality of the decrement property.

    ||z_{t+1} - z*||^2 - ||z_t - z*||^2 <= 2 eps [ -(L(x_[t], lam*) - L(x*, lam_t))
        + (eps/2)(|grad_x L|^2 + |grad_lam L|^2) + <grad_x L, x_[t] - x_t> ]
    with gradients at the resolved stale window and current duals.
    """
    n = spec.graph.n_nodes
    xbuf = StalenessBuffer(n, schedule.tau_max + 1)
    obuf = StalenessBuffer(n, schedule.tau_max + 1)
    from asaddle.delay import resolve
    from asaddle.problem import project, sample_observation

    x = [v.copy() for v in spec.x0]
    lam = np.zeros(spec.graph.n_edges)
    prev = [0] * n
    xs_star = [np.asarray(v, dtype=float) for v in x_star]
    for k in range(T):
        th = [sample_observation(spec, 0, i, k) for i in range(n)]
        for i in range(n):
            xbuf.record(k, i, x[i])
            obuf.record(k, i, th[i])
        res = [resolve(schedule, k, i, prev[i]) for i in range(n)]
        prev = res
        xs_eval = [xbuf.fetch(res[i], i) for i in range(n)]
        ths_eval = [obuf.fetch(res[i], i) for i in range(n)]

        g_x = primal_gradient(spec, lam, xs_eval, ths_eval)
        g_lam = dual_gradient(spec, lam, xs_eval, ths_eval, hp)
        new_x = [project(spec.domains[i], x[i] - hp.epsilon * g_x[i]) for i in range(n)]
        shrink = 1.0 - hp.epsilon**2 * hp.delta
        from asaddle.saddle import dual_slack
        new_lam = np.maximum(shrink * lam + hp.epsilon * dual_slack(spec, xs_eval, ths_eval), 0.0)

        # both sides of the inequality
        lhs = (np.sum((stack(new_x) - stack(xs_star)) ** 2) + np.sum((new_lam - lam_star) ** 2)
               - np.sum((stack(x) - stack(xs_star)) ** 2) - np.sum((lam - lam_star) ** 2))
        l_at_stale_lamstar = stochastic_lagrangian(
            spec, SaddleState(x=xs_eval, lam=lam_star), ths_eval, hp)
        l_at_star_lamt = stochastic_lagrangian(
            spec, SaddleState(x=xs_star, lam=lam), ths_eval, hp)
        grad_sq = float(np.sum(stack(g_x) ** 2) + np.sum(np.asarray(g_lam) ** 2))
        drift = float(np.dot(stack(g_x), stack(xs_eval) - stack(x)))
        rhs = 2.0 * hp.epsilon * (
            -(l_at_stale_lamstar - l_at_star_lamt) + 0.5 * hp.epsilon * grad_sq + drift
        )
        assert lhs <= rhs + 1e-9, f"step {k}: lhs={lhs} rhs={rhs}"
        x, lam = new_x, new_lam


@pytest.mark.parametrize("schedule", [
    DelaySchedule(kind="zero"),
    DelaySchedule(kind="fixed", tau_max=2),
    DelaySchedule(kind="uniform_random", tau_max=3, seed=12),
], ids=["zero", "fixed2", "uniform3"])
def test_one_step_decrement_property(schedule):
    spec = two_node_quadratic_spec(gamma=1.0)
    hp = Hyperparams(epsilon=0.05, delta=0.0, T=300)
    x_star = [np.array([0.5]), np.array([-0.5])]
    lam_star = np.full(2, 0.125)
    one_step_decrement_audit(spec, hp, schedule, x_star, lam_star, hp.T)


def test_two_node_instance_converges_to_known_saddle():
    spec = two_node_quadratic_spec(gamma=1.0)
    hp = Hyperparams(epsilon=0.02, delta=0.0, T=6000)
    trace = run_synchronous(spec, hp, seed=0)
    assert trace.x_final[0][0] == pytest.approx(0.5, abs=2e-2)
    assert trace.x_final[1][0] == pytest.approx(-0.5, abs=2e-2)
    assert trace.lam_final.sum() == pytest.approx(0.25, abs=2e-2)


# ---------------------------------------------------------------------------
# advisor
# ---------------------------------------------------------------------------

def make_estimates(sf2=2.0, sh2=1.0, sl2=4.0, Lf=3.0):
    return AssumptionEstimates(sigma_f2=sf2, sigma_h2=sh2, sigma_lambda2=sl2, L_f=Lf)


def test_advise_satisfies_fixed_point_rule(path3):
    est = make_estimates()
    hp, con = advise(est, path3, tau=3, T=10**7)
    assert hp.epsilon == pytest.approx(1.0 / math.sqrt(10**7))
    k4_at_delta = 2.0 * (con.delta**2 * con.epsilon**2 + con.K1) + (con.tau + 1) * con.tau * (
        con.K1 + 4.0 * est.L_f * math.sqrt(con.K1))
    assert k4_at_delta - con.delta <= 0.0
    assert con.K4 == pytest.approx(k4_at_delta)


def test_advise_tau_zero_reduces_to_2k3(path3):
    est = make_estimates()
    hp, con = advise(est, path3, tau=0, T=10**8)
    # fixed point collapses to delta = 2 K3(delta)
    assert con.delta == pytest.approx(2.0 * con.K3, rel=1e-9)


def test_advise_epsilon_to_zero_limit(path3):
    est = make_estimates()
    _, con = advise(est, path3, tau=4, T=10**12)
    # smallest root tends to C as eps -> 0
    assert con.delta == pytest.approx(con.C, rel=1e-3)


def test_advise_infeasible_exactly_when_discriminant_negative(path3):
    est = make_estimates()
    L2 = max(est.sigma_f2, est.sigma_h2)
    K1 = (path3.n_nodes + path3.n_edges**2) * L2
    C = 2 * K1 + 5 * 4 * (K1 + 4 * est.L_f * math.sqrt(K1))
    threshold = 8.0 * C  # discriminant 1 - 8C/T crosses zero at T = 8C
    T_bad = int(threshold * 0.9)
    T_good = int(threshold * 1.1) + 1
    with pytest.raises(NoFeasibleDelta) as info:
        advise(est, path3, tau=4, T=T_bad)
    assert info.value.C == pytest.approx(C)
    assert info.value.min_T >= T_bad
    hp, con = advise(est, path3, tau=4, T=T_good)
    assert con.discriminant >= 0
    assert con.K4 - con.delta <= 0.0


def test_advise_rejects_nonpositive_estimates(path3):
    with pytest.raises(ValueError):
        advise(make_estimates(sf2=0.0), path3, tau=1, T=100)
