"""Asymptotic experiments and figure-data generation.

Growing-market experiments draw a single seeded pool of agents and use its
prefixes, so the decay tables are nested (and therefore smooth in n) and
fully reproducible. Figure grids realize arbitrary variance/correlation
targets with a three-state construction, since every quantity in the model
depends on the endowments only through first and second moments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import Agent, Market, ProbSpace, Rv, SecurityBasket, var
from .nash import (
    nash_endowment,
    nash_percentage,
    nash_price,
    percentage_game_gains,
)
from .pareto import capm_equilibrium, optimal_sharing

DEFAULT_SIZES = (2, 5, 10, 20, 50, 100, 200)


@dataclass(frozen=True, eq=False)
class AgentSequenceSpec:
    """Bounded agent pool for growing-market experiments.

    Endowments are capped at L2 norm `m_bound` and risk aversions confined to
    [gamma_low, gamma_high]; both bounds are re-checked on every emission.
    """

    m_bound: float = 1.0
    gamma_low: float = 0.5
    gamma_high: float = 2.0
    sizes: tuple[int, ...] = DEFAULT_SIZES
    n_states: int = 6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma_low <= self.gamma_high:
            raise ValueError("need 0 < gamma_low <= gamma_high")
        if self.m_bound <= 0.0:
            raise ValueError("endowment norm bound must be positive")
        if min(self.sizes) < 2:
            raise ValueError("market sizes must be at least 2")
        object.__setattr__(self, "sizes", tuple(sorted(self.sizes)))


@dataclass(frozen=True, eq=False)
class Table:
    """CSV-ready result table with the thresholds used recorded alongside."""

    columns: tuple[str, ...]
    rows: list[tuple]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for key in sorted(self.metadata):
            writer.writerow([f"# {key}", self.metadata[key]])
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows], dtype=float)


def _l2_norm(x: Rv) -> float:
    return float(np.sqrt(x.space.probs @ x.payoffs**2))


def _check_bounds(spec: AgentSequenceSpec, agent: Agent) -> Agent:
    norm = _l2_norm(agent.endowment)
    if norm > spec.m_bound * (1.0 + 1e-12):
        raise RuntimeError(f"generator emitted endowment with norm {norm}")
    if not spec.gamma_low <= agent.gamma <= spec.gamma_high:
        raise RuntimeError(f"generator emitted gamma {agent.gamma} out of bounds")
    return agent


def agent_pool(
    spec: AgentSequenceSpec, homogeneous: bool
) -> tuple[ProbSpace, list[Agent]]:
    """Seeded pool of max(sizes) agents; markets use its prefixes."""
    rng = np.random.default_rng(spec.seed)
    space = ProbSpace(np.full(spec.n_states, 1.0 / spec.n_states))
    count = max(spec.sizes)
    gamma_h = float(np.sqrt(spec.gamma_low * spec.gamma_high))
    agents = []
    for _ in range(count):
        payoffs = rng.normal(size=spec.n_states)
        e = Rv(space, payoffs)
        e = (spec.m_bound / _l2_norm(e)) * e
        gamma = gamma_h if homogeneous else float(
            rng.uniform(spec.gamma_low, spec.gamma_high)
        )
        agents.append(_check_bounds(spec, Agent(gamma, e)))
    return space, agents


def _prefix_market(space: ProbSpace, agents: list[Agent], n: int) -> Market:
    return Market(space, tuple(agents[:n]))


def inefficiency_decay(
    spec: AgentSequenceSpec, homogeneous: bool = False, threshold: float = 1e-2
) -> Table:
    """Risk-sharing inefficiency of the endowment game along growing markets."""
    space, agents = agent_pool(spec, homogeneous)
    rows = []
    for n in spec.sizes:
        market = _prefix_market(space, agents, n)
        rows.append((n, nash_endowment(market).inefficiency))
    final = rows[-1][1]
    return Table(
        columns=("n", "inefficiency"),
        rows=rows,
        metadata={
            "seed": spec.seed,
            "homogeneous": homogeneous,
            "threshold": threshold,
            "verdict": "pass" if final < threshold else "fail",
        },
    )


def homogeneous_inefficiency_closed_form(market: Market) -> float:
    """(1/n^2)(sum Var[E_i] - Var[E]/n); valid for equal risk aversions."""
    n = market.n
    total = sum(var(a.endowment) for a in market.agents)
    return (total - var(market.total_endowment) / n) / n**2


def price_allocation_convergence(
    spec: AgentSequenceSpec,
    basket_family=None,
    homogeneous: bool = False,
    threshold: float = 1e-2,
) -> Table:
    """Gap between competitive and Nash security prices along growing markets.

    `basket_family` maps a market size to the basket traded at that size; by
    default one fixed seeded security is used throughout.
    """
    space, agents = agent_pool(spec, homogeneous)
    if basket_family is None:
        rng = np.random.default_rng(spec.seed + 1)
        security = Rv(space, rng.normal(size=spec.n_states))
        fixed = SecurityBasket((security,))

        def basket_family(n):
            return fixed

    rows = []
    for n in spec.sizes:
        market = _prefix_market(space, agents, n)
        basket = basket_family(n)
        capm = capm_equilibrium(market, basket)
        nash = nash_price(market, basket)
        price_gap = float(np.linalg.norm(capm.prices - nash.price))
        alloc_gap = float(
            max(
                np.linalg.norm(capm.allocation[i] - nash.allocation[i])
                for i in range(n)
            )
        )
        rows.append((n, price_gap, alloc_gap))
    final_price = rows[-1][1]
    return Table(
        columns=("n", "price_gap", "allocation_gap"),
        rows=rows,
        metadata={
            "seed": spec.seed,
            "homogeneous": homogeneous,
            "threshold": threshold,
            "verdict": "pass" if final_price < threshold else "fail",
        },
    )


# ---------------------------------------------------------------------------
# Figure grids


def correlated_pair_market(
    gamma1: float,
    gamma2: float,
    var1: float,
    var2: float,
    rho: float,
    probs=(0.3, 0.3, 0.4),
) -> Market:
    """Two-agent market realizing exact (Var[E_1], Var[E_2], rho) targets.

    Three states leave a two-dimensional centered subspace; an orthonormal
    basis of it (under the probability inner product) turns the moment
    targets into coordinates. Both endowments have zero mean.
    """
    if not -1.0 <= rho <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    if var1 <= 0.0 or var2 <= 0.0:
        raise ValueError("target variances must be positive")
    space = ProbSpace(np.asarray(probs, dtype=float))
    p = space.probs
    raw = [np.array([1.0, -1.0, 0.0]), np.array([0.0, 1.0, -1.0])]
    basis = []
    for v in raw:
        v = v - p @ v
        for u in basis:
            v = v - (p @ (v * u)) * u
        basis.append(v / np.sqrt(p @ v**2))
    u, w = basis
    e1 = np.sqrt(var1) * u
    e2 = np.sqrt(var2) * (rho * u + np.sqrt(max(0.0, 1.0 - rho**2)) * w)
    return Market(
        space,
        (Agent(gamma1, Rv(space, e1)), Agent(gamma2, Rv(space, e2))),
    )


def _percentage_figure(variance_ratio: float, rho_values) -> Table:
    rows = []
    for rho in rho_values:
        market = correlated_pair_market(1.0, 1.0, 1.0, variance_ratio, float(rho))
        outcome = nash_percentage(market)
        rows.append((float(rho), float(outcome.b_star[0]), float(outcome.b_star[1])))
    return Table(
        columns=("rho", "b1", "b2"),
        rows=rows,
        metadata={"variance_ratio": variance_ratio},
    )


def _gain_figure(variance_ratio: float, rho_values, gamma1_values) -> Table:
    rows = []
    for rho in rho_values:
        for g1 in gamma1_values:
            market = correlated_pair_market(
                float(g1), 1.0, 1.0, variance_ratio, float(rho)
            )
            outcome = nash_percentage(market)
            nash_gain = float(percentage_game_gains(market, outcome)[0])
            sharing = optimal_sharing(market)
            pareto_gain = float(g1) * var(sharing.contracts[0])
            rows.append(
                (float(rho), float(g1), nash_gain, pareto_gain, nash_gain - pareto_gain)
            )
    return Table(
        columns=("rho", "gamma1", "nash_gain", "pareto_gain", "difference"),
        rows=rows,
        metadata={"variance_ratio": variance_ratio},
    )


def figure_data(
    figure_id: int,
    rho_values=None,
    gamma1_values=None,
) -> Table:
    """Grid data behind the four standard figures.

    1, 2: equilibrium percentages versus correlation for equal risk aversions,
    with the second endowment ten times riskier (1) or ten times safer (2).
    3, 4: agent 1's percentage-game gain against the unconstrained sharing
    gain over a (rho, gamma_1) grid, same two variance ratios.
    """
    if rho_values is None:
        rho_values = np.linspace(-1.0, 1.0, 21)
    if gamma1_values is None:
        gamma1_values = np.linspace(0.2, 3.0, 15)
    if figure_id == 1:
        return _percentage_figure(10.0, rho_values)
    if figure_id == 2:
        return _percentage_figure(0.1, rho_values)
    if figure_id == 3:
        return _gain_figure(10.0, rho_values, gamma1_values)
    if figure_id == 4:
        return _gain_figure(0.1, rho_values, gamma1_values)
    raise ValueError("figure id must be 1, 2, 3 or 4")
