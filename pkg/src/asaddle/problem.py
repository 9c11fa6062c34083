"""Constrained stochastic program abstraction.

A problem couples per-node stochastic objectives over a compact convex domain
with proximity constraints between neighbors. Constraints are stored as slack
functions (constraint value minus its tolerance), so the engine treats a
constraint as satisfied-in-expectation whenever the expected slack is <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InfeasibleDomain
from .graph import NetworkGraph, closed_neighborhood

__all__ = [
    "DomainSpec",
    "Objective",
    "Sampler",
    "PairwiseConstraint",
    "NeighborhoodConstraint",
    "ConstraintFamily",
    "ProblemSpec",
    "project",
    "sample_observation",
    "objective_value",
    "objective_grad",
    "constraint_value",
    "constraint_grad",
    "as_neighborhood",
    "ExpectedObjective",
    "DEFAULT_MC_SAMPLES",
]

DEFAULT_MC_SAMPLES = 2000

# distinct stream tags keep observation, delay and evaluation randomness disjoint
_OBS_STREAM = 1


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Compact convex per-node domain.

    kind "box": coordinatewise interval [lo, hi].
    kind "sum_interval": C_min <= sum(y) <= C_max, optionally with y >= 0
    (the nonnegative variant is compact; the plain slab relies on the problem
    keeping iterates bounded).
    """

    kind: str
    dim: int
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    c_min: float = 0.0
    c_max: float = 0.0
    nonneg: bool = False

    @staticmethod
    def box(lo, hi) -> "DomainSpec":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch("box bounds must have equal length")
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InfeasibleDomain("box requires finite lo <= hi coordinatewise")
        return DomainSpec(kind="box", dim=lo.size, lo=lo, hi=hi)

    @staticmethod
    def sum_interval(dim: int, c_min: float, c_max: float, nonneg: bool = False) -> "DomainSpec":
        if c_min > c_max:
            raise InfeasibleDomain(f"C_min={c_min} > C_max={c_max}")
        if nonneg and c_max < 0:
            raise InfeasibleDomain("nonnegative coordinates cannot sum to a negative bound")
        return DomainSpec(kind="sum_interval", dim=dim, c_min=float(c_min),
                          c_max=float(c_max), nonneg=nonneg)

    def center(self) -> np.ndarray:
        if self.kind == "box":
            return 0.5 * (self.lo + self.hi)
        mid = 0.5 * (self.c_min + self.c_max)
        return np.full(self.dim, mid / self.dim)

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.asarray(u, dtype=float)
        if self.kind == "box":
            return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))
        s = u.sum()
        ok = self.c_min - tol <= s <= self.c_max + tol
        if self.nonneg:
            ok = ok and bool(np.all(u >= -tol))
        return ok


def project(domain: DomainSpec, u) -> np.ndarray:
    """Euclidean projection onto the domain.

    Box: coordinatewise clamp. Sum interval: return u when already feasible;
    otherwise shift toward the violated bound C* (uniformly when coordinates
    are unconstrained in sign, or by the KKT shift-and-clip rule when the
    nonnegativity option is set).
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size != domain.dim:
        raise DimensionMismatch(f"expected vector of length {domain.dim}, got shape {u.shape}")
    if domain.kind == "box":
        return np.clip(u, domain.lo, domain.hi)

    tol = 1e-9 * max(1.0, abs(domain.c_min), abs(domain.c_max))
    if domain.contains(u, tol=tol):
        return u.copy()
    if not domain.nonneg:
        s = u.sum()
        target = domain.c_min if s < domain.c_min else domain.c_max
        return u + (target - s) / u.size

    base = np.maximum(u, 0.0)
    s = base.sum()
    if domain.c_min - tol <= s <= domain.c_max + tol:
        return base
    target = domain.c_min if s < domain.c_min else domain.c_max
    return _shift_clip_to_sum(u, target)


def _shift_clip_to_sum(u: np.ndarray, target: float) -> np.ndarray:
    # exact KKT solve of min ||y - u|| s.t. y >= 0, sum(y) = target:
    # y = (u + nu)_+ with nu chosen on the sorted breakpoint structure
    if target <= 0.0:
        return np.zeros_like(u)
    srt = np.sort(u)[::-1]
    csum = np.cumsum(srt)
    ks = np.arange(1, u.size + 1)
    nus = (target - csum) / ks
    active = srt + nus > 0.0
    k = int(np.nonzero(active)[0][-1]) + 1
    return np.maximum(u + nus[k - 1], 0.0)


# ---------------------------------------------------------------------------
# objectives, samplers, constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Objective:
    """Per-node stochastic objective f(x, theta) with gradient.

    ``batch_value``, when given, maps (x, batched-observations) to a vector of
    per-sample values and is used by Monte Carlo estimators.
    """

    value: callable
    grad: callable
    batch_value: callable | None = None


@dataclass(frozen=True)
class Sampler:
    """Per-node observation distribution.

    ``sample(rng)`` draws one observation; ``batch(rng, size)``, when given,
    draws a batched observation set consumable by Objective.batch_value.
    """

    sample: callable
    batch: callable | None = None


@dataclass(frozen=True)
class PairwiseConstraint:
    """Slack function of one directed edge: value(x_i, x_j, th_i, th_j) = h - gamma.

    grad_i / grad_j are gradients in the first / second primal argument; at
    nondifferentiable points they must return a valid subgradient.
    """

    value: callable
    grad_i: callable
    grad_j: callable


@dataclass(frozen=True)
class NeighborhoodConstraint:
    """Vector slack function owned by one node over its closed neighborhood.

    value(xs, ths) -> array of length ``size``; jacobian(wrt, xs, ths) ->
    (size, dim(wrt)) matrix. ``xs`` and ``ths`` are dicts keyed by node id
    covering the owner's closed neighborhood.
    """

    size: int
    value: callable = None
    jacobian: callable = None


@dataclass(frozen=True)
class ConstraintFamily:
    """Either one slack function per directed edge, or one vector per node."""

    kind: str  # "pairwise" | "neighborhood"
    pairwise: dict | None = None          # (i, j) -> PairwiseConstraint
    neighborhood: tuple | None = None     # per-node NeighborhoodConstraint

    @staticmethod
    def from_symmetric_pairwise(graph: NetworkGraph, value, grad_first, gamma) -> "ConstraintFamily":
        """Build both orientations of each link from one symmetric function.

        ``value(a, b, th_a, th_b)`` must satisfy value(a, b, .) == value(b, a, .)
        and ``grad_first`` must be its gradient in the first argument; this is
        the shape the pairwise engine update assumes.
        """
        gam = dict(gamma) if isinstance(gamma, dict) else None
        table = {}
        for (i, j) in graph.edges:
            g_ij = gam[(i, j)] if gam is not None else float(gamma)
            if g_ij < 0:
                raise ValueError(f"tolerance gamma[{i},{j}] must be >= 0")
            table[(i, j)] = _mirror_pair(value, grad_first, g_ij)
        return ConstraintFamily(kind="pairwise", pairwise=table)


def _mirror_pair(value, grad_first, gamma):
    def slack(x_i, x_j, th_i, th_j):
        return value(x_i, x_j, th_i, th_j) - gamma

    def g_i(x_i, x_j, th_i, th_j):
        return grad_first(x_i, x_j, th_i, th_j)

    def g_j(x_i, x_j, th_i, th_j):
        return grad_first(x_j, x_i, th_j, th_i)

    return PairwiseConstraint(value=slack, grad_i=g_i, grad_j=g_j)


# ---------------------------------------------------------------------------
# problem spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """Immutable bundle of graph, objectives, samplers, constraints and domains.

    ``dims`` and ``domains`` are per-node; uniform problems may pass a single
    int / DomainSpec which is broadcast at construction via ``make``.
    """

    graph: NetworkGraph
    dims: tuple
    objectives: tuple
    samplers: tuple
    constraints: ConstraintFamily
    domains: tuple
    x0: tuple = None
    name: str = "problem"

    @staticmethod
    def make(graph, dim, objectives, samplers, constraints, domain,
             x0=None, name="problem") -> "ProblemSpec":
        n = graph.n_nodes
        dims = tuple(dim) if isinstance(dim, (tuple, list)) else (int(dim),) * n
        domains = tuple(domain) if isinstance(domain, (tuple, list)) else (domain,) * n
        objectives = tuple(objectives)
        samplers = tuple(samplers)
        if not (len(dims) == len(domains) == len(objectives) == len(samplers) == n):
            raise DimensionMismatch("per-node field lengths must equal n_nodes")
        for i in range(n):
            if domains[i].dim != dims[i]:
                raise DimensionMismatch(f"domain dim {domains[i].dim} != dims[{i}]={dims[i]}")
        if x0 is None:
            x0 = tuple(project(domains[i], domains[i].center()) for i in range(n))
        else:
            x0 = tuple(project(domains[i], np.asarray(x, dtype=float)) for i, x in enumerate(x0))
        return ProblemSpec(graph=graph, dims=dims, objectives=objectives,
                           samplers=samplers, constraints=constraints,
                           domains=domains, x0=x0, name=name)

    @property
    def dim(self) -> int:
        """Common per-node dimension p; only defined for uniform problems."""
        if len(set(self.dims)) != 1:
            raise DimensionMismatch("problem has per-node dimensions; use .dims")
        return self.dims[0]

    def constraint_sizes(self) -> tuple:
        """Per-node dual-vector lengths (neighborhood mode) or edge count info."""
        if self.constraints.kind == "neighborhood":
            return tuple(c.size for c in self.constraints.neighborhood)
        return tuple(len(self.graph.adjacency[i]) for i in range(self.graph.n_nodes))

    def n_constraints(self) -> int:
        if self.constraints.kind == "pairwise":
            return self.graph.n_edges
        return sum(c.size for c in self.constraints.neighborhood)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def observation_rng(seed: int, node: int, t: int) -> np.random.Generator:
    """Counter-based generator: identical (seed, node, t) -> identical stream."""
    return np.random.default_rng(
        np.random.SeedSequence([_OBS_STREAM, int(seed) & 0xFFFFFFFFFFFFFFFF, node, t])
    )


def sample_observation(spec: ProblemSpec, seed: int, node: int, t: int):
    """Draw theta^node_t; random access, reproducible by construction."""
    return spec.samplers[node].sample(observation_rng(seed, node, t))


def objective_value(spec: ProblemSpec, node: int, x_i, theta) -> float:
    return float(spec.objectives[node].value(np.asarray(x_i, dtype=float), theta))


def objective_grad(spec: ProblemSpec, node: int, x_i, theta) -> np.ndarray:
    x_i = np.asarray(x_i, dtype=float)
    if x_i.shape != (spec.dims[node],):
        raise DimensionMismatch(f"x has shape {x_i.shape}, node {node} expects ({spec.dims[node]},)")
    return np.asarray(spec.objectives[node].grad(x_i, theta), dtype=float)


def constraint_value(spec: ProblemSpec, edge, x_i, x_j, th_i, th_j) -> float:
    """Signed slack h^{ij} - gamma_{ij} of a directed edge; <= 0 means satisfied."""
    i, j = edge
    con = spec.constraints.pairwise[(i, j)]
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != (spec.dims[i],) or x_j.shape != (spec.dims[j],):
        raise DimensionMismatch(f"edge {edge}: arguments do not match node dims")
    return float(con.value(x_i, x_j, th_i, th_j))


def constraint_grad(spec: ProblemSpec, edge, which: str, x_i, x_j, th_i, th_j) -> np.ndarray:
    """Gradient of the edge slack in the first or second primal argument."""
    i, j = edge
    con = spec.constraints.pairwise[(i, j)]
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != (spec.dims[i],) or x_j.shape != (spec.dims[j],):
        raise DimensionMismatch(f"edge {edge}: arguments do not match node dims")
    if which == "first":
        return np.asarray(con.grad_i(x_i, x_j, th_i, th_j), dtype=float)
    if which == "second":
        return np.asarray(con.grad_j(x_i, x_j, th_i, th_j), dtype=float)
    raise ValueError(f"which must be 'first' or 'second', got {which!r}")


def as_neighborhood(spec: ProblemSpec) -> ProblemSpec:
    """Re-encode a pairwise problem as per-node vector constraints.

    Node i owns the vector with one entry per sorted neighbor j holding the
    (i, j) edge slack; the engine's generalized path on the result reproduces
    the pairwise trajectory for mirror-symmetric families.
    """
    if spec.constraints.kind != "pairwise":
        raise ValueError("spec is already in neighborhood form")
    table = spec.constraints.pairwise
    per_node = []
    for i in range(spec.graph.n_nodes):
        nbrs = spec.graph.adjacency[i]
        per_node.append(_neighborhood_of_pairwise(i, nbrs, table, spec.dims))
    constraints = ConstraintFamily(kind="neighborhood", neighborhood=tuple(per_node))
    return ProblemSpec(graph=spec.graph, dims=spec.dims, objectives=spec.objectives,
                       samplers=spec.samplers, constraints=constraints,
                       domains=spec.domains, x0=spec.x0, name=spec.name + "_nbhd")


def _neighborhood_of_pairwise(i, nbrs, table, dims):
    cons = [table[(i, j)] for j in nbrs]

    def value(xs, ths):
        return np.array([c.value(xs[i], xs[j], ths[i], ths[j])
                         for c, j in zip(cons, nbrs)])

    def jacobian(wrt, xs, ths):
        rows = []
        for c, j in zip(cons, nbrs):
            if wrt == i:
                rows.append(c.grad_i(xs[i], xs[j], ths[i], ths[j]))
            elif wrt == j:
                rows.append(c.grad_j(xs[i], xs[j], ths[i], ths[j]))
            else:
                rows.append(np.zeros(dims[wrt]))
        return np.asarray(rows, dtype=float)

    return NeighborhoodConstraint(size=len(nbrs), value=value, jacobian=jacobian)


# ---------------------------------------------------------------------------
# Monte Carlo objective estimator
# ---------------------------------------------------------------------------

class ExpectedObjective:
    """F(x) estimator with a frozen evaluation sample, independent of training.

    The same draw set is reused for every query point, so differences
    F(x) - F(y) of nearby points carry far less Monte Carlo noise than the
    individual values.
    """

    def __init__(self, spec: ProblemSpec, mc_samples: int = DEFAULT_MC_SAMPLES,
                 seed: int = 0):
        self.spec = spec
        self.mc_samples = int(mc_samples)
        self._batched = []
        self._plain = []
        for node in range(spec.graph.n_nodes):
            rng = np.random.default_rng(np.random.SeedSequence([2, int(seed) & 0xFFFFFFFFFFFFFFFF, node]))
            sampler = spec.samplers[node]
            obj = spec.objectives[node]
            if sampler.batch is not None and obj.batch_value is not None:
                self._batched.append((node, obj.batch_value, sampler.batch(rng, self.mc_samples)))
            else:
                self._plain.append((node, obj.value,
                                    [sampler.sample(rng) for _ in range(self.mc_samples)]))

    def value(self, x) -> float:
        """Estimate F(x) = sum_i E[f^i(x^i, theta^i)] at per-node vectors x."""
        total = 0.0
        for node, batch_value, draws in self._batched:
            total += float(np.mean(batch_value(np.asarray(x[node], dtype=float), draws)))
        for node, value, draws in self._plain:
            xi = np.asarray(x[node], dtype=float)
            total += float(np.mean([value(xi, th) for th in draws]))
        return total
