"""Interference management through pricing in a two-tier cellular network.

A base station sets per-subchannel interference prices for small-cell base
stations (SCBS). Each SCBS reacts with the closed-form power allocation

    p_n^i = ( W / (c mu_n + nu_n x_n^i) - 1 / h_n^i )_+

and the base station maximizes expected pricing revenue subject to a per-MU
average interference margin and per-SCBS bounds on the total imposed penalty.
The problem is encoded for the engine as minimization of the negated revenue
with one neighborhood constraint (and one dual) per macro user.

Bandwidth is expressed in MHz units (W = 1 means 1 MHz) so that SCBS powers
are commensurate with the unit-power naive baseline. The macro-user signal
model behind SINR reporting is not pinned down by the interference problem
itself: we use unit MU transmit power, an exponential direct-link gain with
the common gain mean, and an explicit ``signal_scale`` calibration constant
(part of the config, defaults chosen so the naive baseline sits near 22 dB).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig
from ..graph import NetworkGraph, build_graph
from ..problem import (ConstraintFamily, DomainSpec, NeighborhoodConstraint,
                       Objective, ProblemSpec, Sampler)
from ..trace import RunTrace

__all__ = [
    "PricingConfig",
    "power_allocation",
    "build_pricing_problem",
    "pricing_graph",
    "constraint_slots",
    "naive_baseline",
    "sinr_report",
    "interference_series",
    "revenue_series",
]


@dataclass(frozen=True)
class PricingConfig:
    """Scenario parameters; defaults reproduce the two-MU / three-SCBS layout."""

    n_mus: int = 2
    n_scbs: int = 3
    assignment: tuple = ((0, 1), (1, 2))  # per-MU SCBS neighborhoods
    gain_mean: float = 3.0                # exponential mean of g_{ni} and h_n^i
    bandwidth: float = 1.0                # W, in MHz units
    cost: float = 0.1                     # c, transmission cost per unit power
    mu_n: tuple | float = 1.0
    nu_n: tuple | float = 1.0
    gamma_db: tuple | float = -3.0        # per-MU interference margin, dB re 1 W
    c_min: float = 0.9
    c_max: float = 20.0
    noise_power: float = 1.0              # sigma^2 for SINR reporting
    signal_scale: float = 370.0           # MU signal calibration (naive ~= 22 dB)
    x0: tuple | None = None

    def __post_init__(self):
        if self.n_mus < 1 or self.n_scbs < 1:
            raise InvalidConfig("need at least one MU and one SCBS")
        if len(self.assignment) != self.n_mus:
            raise InvalidConfig("assignment must list one SCBS set per MU")
        seen = set()
        for i, group in enumerate(self.assignment):
            if len(group) == 0:
                raise InvalidConfig(f"MU {i} has an empty SCBS set")
            for n in group:
                if not 0 <= n < self.n_scbs:
                    raise InvalidConfig(f"SCBS index {n} outside [0, {self.n_scbs})")
                seen.add(n)
        if seen != set(range(self.n_scbs)):
            raise InvalidConfig("every SCBS must appear in some MU neighborhood")
        for v in (self.gain_mean, self.bandwidth, self.cost, self.noise_power,
                  self.signal_scale):
            if not v > 0:
                raise InvalidConfig("gain_mean, bandwidth, cost, noise_power and "
                                    "signal_scale must be positive")
        if not self.c_min <= self.c_max:
            raise InvalidConfig("c_min must be <= c_max")
        for arr in (self.mu_n, self.nu_n):
            vals = arr if isinstance(arr, (tuple, list)) else (arr,)
            if any(not v > 0 for v in vals):
                raise InvalidConfig("mu_n and nu_n must be positive")

    # --- derived structure -------------------------------------------------

    def scbs_subchannels(self) -> list:
        """Per-SCBS sorted list of MU subchannels it serves."""
        subs = [[] for _ in range(self.n_scbs)]
        for i, group in enumerate(self.assignment):
            for n in group:
                subs[n].append(i)
        return [sorted(s) for s in subs]

    def mu_param(self, n: int) -> float:
        return float(self.mu_n[n]) if isinstance(self.mu_n, (tuple, list)) else float(self.mu_n)

    def nu_param(self, n: int) -> float:
        return float(self.nu_n[n]) if isinstance(self.nu_n, (tuple, list)) else float(self.nu_n)

    def gamma_linear(self, i: int) -> float:
        db = self.gamma_db[i] if isinstance(self.gamma_db, (tuple, list)) else self.gamma_db
        return 10.0 ** (float(db) / 10.0)

    def signal_power(self) -> float:
        """Expected received MU signal: unit transmit power times direct gain."""
        return self.signal_scale * self.gain_mean


def power_allocation(cfg: PricingConfig, n: int, i: int, x: float, h: float) -> float:
    """SCBS n's transmit power on MU i's subchannel at price x and gain h."""
    return max(cfg.bandwidth / (cfg.cost * cfg.mu_param(n) + cfg.nu_param(n) * x) - 1.0 / h, 0.0)


def pricing_graph(cfg: PricingConfig) -> NetworkGraph:
    """SCBS graph with an edge wherever two SCBSs share a subchannel."""
    edges = []
    for group in cfg.assignment:
        group = sorted(group)
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                edges.append((group[a], group[b]))
    return build_graph(cfg.n_scbs, edges)


def constraint_slots(cfg: PricingConfig) -> list:
    """Flat position of each MU's slack in the stacked constraint vector.

    MU i's constraint is hosted by the smallest SCBS index in its neighborhood
    (any member works: all members are mutually adjacent)."""
    hosted = [[] for _ in range(cfg.n_scbs)]
    for i, group in enumerate(cfg.assignment):
        hosted[min(group)].append(i)
    slots = [0] * cfg.n_mus
    pos = 0
    for node in range(cfg.n_scbs):
        for i in sorted(hosted[node]):
            slots[i] = pos
            pos += 1
    return slots


def build_pricing_problem(cfg: PricingConfig) -> ProblemSpec:
    """Encode revenue maximization as engine-ready minimization.

    Objective per SCBS: f^n = -sum_i x_n^i g_{ni} p_n^i. One size-|hosted|
    neighborhood constraint per hosting SCBS with entries
    sum_{n in N_i} g_{ni} p_n^i - gamma_i. Domain per SCBS: nonnegative prices
    with c_min <= sum <= c_max, enforced every slot by projection.
    """
    graph = pricing_graph(cfg)
    subs = cfg.scbs_subchannels()
    dims = tuple(len(s) for s in subs)
    W, c = cfg.bandwidth, cfg.cost

    objectives = []
    samplers = []
    for n in range(cfg.n_scbs):
        k = dims[n]
        mu_c = c * cfg.mu_param(n)
        nu = cfg.nu_param(n)
        mean = cfg.gain_mean

        def sample(rng, k=k, mean=mean):
            return (rng.exponential(mean, size=k), rng.exponential(mean, size=k))

        def batch(rng, size, k=k, mean=mean):
            return (rng.exponential(mean, size=(size, k)),
                    rng.exponential(mean, size=(size, k)))

        def value(x, th, mu_c=mu_c, nu=nu):
            g, h = th
            p = np.maximum(W / (mu_c + nu * x) - 1.0 / h, 0.0)
            return -float(np.sum(x * g * p))

        def grad(x, th, mu_c=mu_c, nu=nu):
            g, h = th
            denom = mu_c + nu * x
            active = (W / denom - 1.0 / h) > 0.0
            return -g * (W * mu_c / denom**2 - 1.0 / h) * active

        def batch_value(x, th, mu_c=mu_c, nu=nu):
            G, H = th
            p = np.maximum(W / (mu_c + nu * x) - 1.0 / H, 0.0)
            return -(x * G * p).sum(axis=1)

        objectives.append(Objective(value=value, grad=grad, batch_value=batch_value))
        samplers.append(Sampler(sample=sample, batch=batch))

    # per-MU interference constraints, hosted at the smallest member SCBS
    hosted = [[] for _ in range(cfg.n_scbs)]
    for i, group in enumerate(cfg.assignment):
        hosted[min(group)].append(i)
    local_pos = [{i: pos for pos, i in enumerate(s)} for s in subs]

    per_node = []
    for node in range(cfg.n_scbs):
        mus = sorted(hosted[node])
        if not mus:
            per_node.append(NeighborhoodConstraint(size=0))
            continue
        per_node.append(_interference_constraint(cfg, node, mus, local_pos))

    constraints = ConstraintFamily(kind="neighborhood", neighborhood=tuple(per_node))
    domains = tuple(DomainSpec.sum_interval(dims[n], cfg.c_min, cfg.c_max, nonneg=True)
                    for n in range(cfg.n_scbs))
    x0 = None
    if cfg.x0 is not None:
        x0 = [np.atleast_1d(np.asarray(v, dtype=float)) for v in cfg.x0]
    return ProblemSpec.make(graph, dims, objectives, samplers, constraints, domains,
                            x0=x0, name="pricing")


def _interference_constraint(cfg: PricingConfig, node: int, mus: list, local_pos: list):
    W, c = cfg.bandwidth, cfg.cost
    rows = []
    for i in mus:
        members = sorted(cfg.assignment[i])
        rows.append((i, cfg.gamma_linear(i), tuple((m, local_pos[m][i]) for m in members)))

    def value(xs, ths):
        out = np.zeros(len(rows))
        for r, (_, gamma, members) in enumerate(rows):
            acc = 0.0
            for m, pos in members:
                g, h = ths[m]
                x = xs[m][pos]
                p = W / (c * cfg.mu_param(m) + cfg.nu_param(m) * x) - 1.0 / h[pos]
                if p > 0.0:
                    acc += g[pos] * p
            out[r] = acc - gamma
        return out

    def jacobian(wrt, xs, ths):
        jac = np.zeros((len(rows), xs[wrt].shape[0]))
        for r, (_, _, members) in enumerate(rows):
            for m, pos in members:
                if m != wrt:
                    continue
                g, h = ths[m]
                x = xs[m][pos]
                denom = c * cfg.mu_param(m) + cfg.nu_param(m) * x
                if W / denom - 1.0 / h[pos] > 0.0:
                    jac[r, pos] = -g[pos] * W * cfg.nu_param(m) / denom**2
        return jac

    return NeighborhoodConstraint(size=len(rows), value=value, jacobian=jacobian)


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def naive_baseline(cfg: PricingConfig, seed: int, T: int) -> np.ndarray:
    """Per-MU SINR (dB) when every SCBS transmits at unit power all the time."""
    rng = np.random.default_rng(np.random.SeedSequence([5, int(seed) & 0xFFFFFFFFFFFFFFFF]))
    sinr = np.zeros(cfg.n_mus)
    signal = cfg.signal_power()
    for i, group in enumerate(cfg.assignment):
        gains = rng.exponential(cfg.gain_mean, size=(T, len(group)))
        interference = gains.sum(axis=1).mean()
        sinr[i] = 10.0 * math.log10(signal / (cfg.noise_power + interference))
    return sinr


def interference_series(cfg: PricingConfig, trace: RunTrace) -> np.ndarray:
    """(T, n_mus) realized interference at the fresh iterate, from trace slacks."""
    slots = constraint_slots(cfg)
    gammas = np.array([cfg.gamma_linear(i) for i in range(cfg.n_mus)])
    return trace.current_slack[:, slots] + gammas


def sinr_report(cfg: PricingConfig, trace: RunTrace) -> np.ndarray:
    """Per-MU SINR (dB) with powers from the run's price trajectory,
    interference averaged over the final half of the horizon."""
    series = interference_series(cfg, trace)
    half = series.shape[0] // 2
    mean_i = series[half:].mean(axis=0) if series.shape[0] else np.zeros(cfg.n_mus)
    signal = cfg.signal_power()
    return 10.0 * np.log10(signal / (cfg.noise_power + np.maximum(mean_i, 0.0)))


def revenue_series(cfg: PricingConfig, trace: RunTrace) -> np.ndarray:
    """Running average of instantaneous revenue sum_i sum_n x g p, length T."""
    inst = -trace.obj_sample
    if inst.size == 0:
        return inst.copy()
    return np.cumsum(inst) / np.arange(1, inst.size + 1)
