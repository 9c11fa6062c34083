"""Decentralized regression with approximate-consensus proximity constraints.

Each node fits its own linear model to a private stream while the constraint
||x^i - x^j|| <= gamma_ij keeps neighboring estimates close without forcing
them equal. Ground-truth weights are laid out so that nearby nodes are similar
but distinct, which keeps the proximity constraints active at the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfig
from ..graph import NetworkGraph
from ..problem import ConstraintFamily, DomainSpec, Objective, ProblemSpec, Sampler

__all__ = ["ConsensusRegressionConfig", "build_consensus_problem", "ring_weights"]


@dataclass(frozen=True)
class ConsensusRegressionConfig:
    """Per-node least squares with pairwise proximity tolerances.

    ``weights`` overrides the generated ground truth; otherwise nodes are
    placed on a circle in weight space with radius ``weight_scale`` (adjacent
    ring nodes then sit 2 sin(pi/N) * weight_scale apart).
    """

    p: int = 4
    gamma: float = 0.5
    noise_std: float = 0.25
    weight_scale: float = 1.0
    box_lo: float = -2.0
    box_hi: float = 2.0
    x0_value: float | None = None  # common starting coordinate; None = box center
    weights: tuple | None = None
    gamma_table: dict | None = field(default=None, hash=False)

    def __post_init__(self):
        if self.p < 1:
            raise InvalidConfig("p must be >= 1")
        if self.gamma < 0 or self.noise_std < 0:
            raise InvalidConfig("gamma and noise_std must be >= 0")
        if not self.box_lo < self.box_hi:
            raise InvalidConfig("box_lo must be < box_hi")


def ring_weights(n_nodes: int, p: int, scale: float) -> np.ndarray:
    """Deterministic circular layout of ground-truth weights in R^p."""
    angles = 2.0 * np.pi * np.arange(n_nodes) / max(n_nodes, 1)
    w = np.zeros((n_nodes, p))
    w[:, 0::2] = np.cos(angles)[:, None]
    if p > 1:
        w[:, 1::2] = np.sin(angles)[:, None]
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    return scale * w / np.where(norms > 0, norms, 1.0)


def build_consensus_problem(cfg: ConsensusRegressionConfig, graph: NetworkGraph) -> ProblemSpec:
    """Problem with f^i = 0.5 (z^T x - y)^2 and slack ||x^i - x^j|| - gamma_ij."""
    n = graph.n_nodes
    if cfg.weights is not None:
        w = np.asarray(cfg.weights, dtype=float)
        if w.shape != (n, cfg.p):
            raise InvalidConfig(f"weights must have shape ({n}, {cfg.p})")
    else:
        w = ring_weights(n, cfg.p, cfg.weight_scale)

    noise = cfg.noise_std
    objectives = []
    samplers = []
    for i in range(n):
        w_i = w[i]

        def sample(rng, w_i=w_i):
            z = rng.standard_normal(cfg.p)
            y = float(z @ w_i + noise * rng.standard_normal())
            return (z, y)

        def batch(rng, size, w_i=w_i):
            Z = rng.standard_normal((size, cfg.p))
            y = Z @ w_i + noise * rng.standard_normal(size)
            return (Z, y)

        def value(x, th):
            z, y = th
            return 0.5 * (z @ x - y) ** 2

        def grad(x, th):
            z, y = th
            return z * (z @ x - y)

        def batch_value(x, th):
            Z, y = th
            return 0.5 * (Z @ x - y) ** 2

        objectives.append(Objective(value=value, grad=grad, batch_value=batch_value))
        samplers.append(Sampler(sample=sample, batch=batch))

    def prox(a, b, th_a, th_b):
        d = a - b
        return math.sqrt(float(d @ d))

    def prox_grad(a, b, th_a, th_b):
        d = a - b
        nrm = math.sqrt(float(d @ d))
        if nrm == 0.0:
            return np.zeros_like(d)  # 0 is a valid subgradient of ||.|| at 0
        return d / nrm

    gamma = cfg.gamma_table if cfg.gamma_table is not None else cfg.gamma
    constraints = ConstraintFamily.from_symmetric_pairwise(graph, prox, prox_grad, gamma)
    domain = DomainSpec.box(np.full(cfg.p, cfg.box_lo), np.full(cfg.p, cfg.box_hi))
    x0 = None
    if cfg.x0_value is not None:
        x0 = [np.full(cfg.p, float(cfg.x0_value)) for _ in range(n)]
    return ProblemSpec.make(graph, cfg.p, objectives, samplers, constraints, domain,
                            x0=x0, name="consensus_regression")
