"""Nash equilibria of the three risk-sharing games and comparison metrics.

Closed forms exist for the endowment game and the price-demand game; the
percentage game is solved by damped fixed-point iteration on the clamped
best-response system. All comparisons against the Pareto benchmark
(inefficiency, price pressure, per-agent gains) are computed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Market, Rv, SecurityBasket, cov, cov_vector, mean, mv_utility, var
from .pareto import capm_equilibrium, optimal_sharing
from .strategic import DemandSchedule, reported_utility


class ConvergenceError(RuntimeError):
    """The percentage-game iteration did not converge within max_iter."""


@dataclass(frozen=True, eq=False)
class NashEndowmentOutcome:
    reported: list[Rv]  # B*_i
    aggregate: Rv  # sum of the reported endowments
    contracts: list[Rv]  # contract each agent receives at the fixed point
    inefficiency: float
    per_agent_gain: np.ndarray


@dataclass(frozen=True, eq=False)
class NashPercentageOutcome:
    b_star: np.ndarray
    kappa: float
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class NashPriceOutcome:
    price: np.ndarray
    schedules: list[DemandSchedule]
    allocation: np.ndarray  # n x k, rows are the equilibrium quantities
    pressure: np.ndarray  # Cov(C_j, E - aggregate reported endowment)


def nash_aggregate_endowment(market: Market) -> Rv:
    """Aggregate shared endowment at the Nash fixed point of the reports."""
    g = market.aggregate_gamma
    denom = 1.0 - float(np.sum((g / market.gammas) ** 2))
    assert denom > 0.0
    weighted = np.zeros(market.space.n_states)
    for a in market.agents:
        weighted = weighted + a.endowment.payoffs / a.gamma
    numer = market.total_endowment.payoffs - g * weighted
    return Rv(market.space, numer / denom)


def nash_endowment(market: Market) -> NashEndowmentOutcome:
    """Unique (up to constants) Nash equilibrium of the endowment game.

    B*_i = gamma_i/(gamma_i + gamma_{-i}) E_i
           + (gamma_{-i}/(gamma_i + gamma_{-i}))^2 * aggregate,
    the contract received is (gamma/gamma_i) * aggregate - B*_i, and the
    inefficiency is sum gamma_i Var[E_i - B*_i] - gamma Var[E - aggregate].
    """
    g = market.aggregate_gamma
    aggregate = nash_aggregate_endowment(market)
    reported: list[Rv] = []
    contracts: list[Rv] = []
    for i, a in enumerate(market.agents):
        gmi = market.gamma_excluding(i)
        b = (a.gamma / (a.gamma + gmi)) * a.endowment + (
            gmi / (a.gamma + gmi)
        ) ** 2 * aggregate
        reported.append(b)
        contracts.append((g / a.gamma) * aggregate - b)
    ineff = sum(
        a.gamma * var(a.endowment - b) for a, b in zip(market.agents, reported)
    ) - g * var(market.total_endowment - aggregate)
    gains = np.array(
        [
            reported_utility(market, i, reported[i], others=reported)
            - mv_utility(market.agents[i].gamma, market.agents[i].endowment)
            for i in range(market.n)
        ]
    )
    return NashEndowmentOutcome(
        reported=reported,
        aggregate=aggregate,
        contracts=contracts,
        inefficiency=float(ineff),
        per_agent_gain=gains,
    )


# ---------------------------------------------------------------------------
# Two-agent comparison table


@dataclass(frozen=True, eq=False)
class Table1Row:
    name: str
    pareto_engine: object
    pareto_closed: object
    nash_engine: object
    nash_closed: object


def table1_report(market: Market) -> list[Table1Row]:
    """Pareto-vs-Nash comparison for n = 2 (everything from agent 1's side).

    Each cell is computed twice: by the general engines and by the two-agent
    closed forms, so the caller can regression-check one against the other.
    """
    if market.n != 2:
        raise ValueError("the comparison table is defined for two agents only")
    g1, g2 = market.gammas
    e1, e2 = market.endowments()
    g = market.aggregate_gamma

    sharing = optimal_sharing(market)
    nash = nash_endowment(market)
    diff = (g1 / (g1 + g2)) * e1 - (g2 / (g1 + g2)) * e2

    pareto_gain_engine = g1 * var(sharing.contracts[0])
    rows = [
        Table1Row(
            "aggregate_shared_endowment",
            market.total_endowment,
            market.total_endowment,
            nash.aggregate,
            (1.0 / (2.0 * g)) * (g1 * e1 + g2 * e2),
        ),
        Table1Row(
            "reported_endowment",
            e1,
            e1,
            nash.reported[0],
            ((2 * g1 + g2) / (2 * (g1 + g2))) * e1
            + (g2**2 / (2 * g1 * (g1 + g2))) * e2,
        ),
        Table1Row(
            "purchased_contract",
            sharing.contracts[0],
            -1.0 * diff,
            nash.contracts[0],
            -0.5 * diff,
        ),
        Table1Row(
            "gain_of_utility",
            pareto_gain_engine,
            g1 * var(diff),
            float(nash.per_agent_gain[0]),
            (g1 + 2 * g2) / 4.0 * var(diff),
        ),
        Table1Row(
            "inefficiency",
            0.0,
            0.0,
            nash.inefficiency,
            var(0.5 * (g1 * e1 - g2 * e2)) / (g1 + g2),
        ),
    ]
    return rows


# ---------------------------------------------------------------------------
# Percentage game


def percentage_best_response(
    market: Market, i: int, b: np.ndarray, kappa: float
) -> float:
    """Clamped best percentage of agent i against reported multiples b."""
    g = market.aggregate_gamma
    gi = market.agents[i].gamma
    ei = market.agents[i].endowment
    vei = var(ei)
    if vei <= 0.0:
        raise ValueError("percentage game needs non-constant endowments")
    rest = np.zeros(market.space.n_states)
    for j, a in enumerate(market.agents):
        if j != i:
            rest = rest + b[j] * a.endowment.payoffs
    raw = gi / (gi + g) + g**2 / (gi**2 - g**2) * cov(ei, Rv(market.space, rest)) / vei
    return float(min(max(0.0, raw), kappa))


def nash_percentage(
    market: Market,
    kappa: float = 10.0,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 10000,
    raise_on_failure: bool = True,
) -> NashPercentageOutcome:
    """Damped fixed-point iteration b <- (1-l) b + l clamp(BR(b), 0, kappa).

    Damping keeps the iteration from oscillating when endowment correlations
    are large. Non-convergence raises (or is flagged when
    `raise_on_failure` is false); it is never silent.
    """
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must be in (0, 1]")
    b = np.ones(market.n)
    converged = False
    iterations = max_iter
    for it in range(1, max_iter + 1):
        br = np.array(
            [percentage_best_response(market, i, b, kappa) for i in range(market.n)]
        )
        b_next = (1.0 - damping) * b + damping * br
        if np.max(np.abs(b_next - b)) < tol:
            b = b_next
            converged = True
            iterations = it
            break
        b = b_next
    # report the residual of the undamped system, not the damped step size
    br = np.array(
        [percentage_best_response(market, i, b, kappa) for i in range(market.n)]
    )
    residual = float(np.max(np.abs(b - br)))
    if residual > 1e-10:
        converged = False
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"percentage game did not converge: residual {residual:.3e} "
            f"after {iterations} iterations"
        )
    return NashPercentageOutcome(
        b_star=b, kappa=kappa, iterations=iterations, converged=converged
    )


def percentage_game_gains(
    market: Market, outcome: NashPercentageOutcome
) -> np.ndarray:
    """Per-agent utility gain over no trade at the percentage equilibrium."""
    reports = [
        float(bi) * a.endowment for bi, a in zip(outcome.b_star, market.agents)
    ]
    return np.array(
        [
            reported_utility(market, i, reports[i], others=reports)
            - mv_utility(market.agents[i].gamma, market.agents[i].endowment)
            for i in range(market.n)
        ]
    )


# ---------------------------------------------------------------------------
# Price-demand game


def nash_price(market: Market, basket: SecurityBasket) -> NashPriceOutcome:
    """Nash equilibrium price, schedules and allocation of a security basket.

    p_hat = E[C] - 2 gamma Cov(C, aggregate reported endowment); each agent's
    schedule carries the covariance vector of their endowment-game report and
    the allocation is Cov(C, C*_i(B*_i)) . Var^{-1}[C].
    """
    endgame = nash_endowment(market)
    p_hat = basket.mean_vector - 2.0 * market.aggregate_gamma * cov_vector(
        basket, endgame.aggregate
    )
    schedules = [
        DemandSchedule(a.gamma, cov_vector(basket, b))
        for a, b in zip(market.agents, endgame.reported)
    ]
    allocation = np.stack(
        [cov_vector(basket, c) @ basket.cov_inverse for c in endgame.contracts]
    )
    pressure = cov_vector(basket, market.total_endowment - endgame.aggregate)
    return NashPriceOutcome(
        price=p_hat, schedules=schedules, allocation=allocation, pressure=pressure
    )


def price_best_response_general(
    market: Market,
    i: int,
    basket: SecurityBasket,
    other_schedules: list[DemandSchedule],
) -> np.ndarray:
    """Agent i's preferred clearing price against arbitrary schedules.

    First-order condition of the price objective: with gamma_o the harmonic
    aggregate of the others' gammas and cbar the sum of their covariance
    vectors,
    E[C] - p = 2 (gamma_i gamma_o h_i + gamma_o (gamma_i + gamma_o) cbar)
               / (2 gamma_o + gamma_i),
    h_i = Cov(C, E_i). Reduces to the truthful-schedule closed form when the
    others bid truthfully.
    """
    if len(other_schedules) != market.n - 1:
        raise ValueError("need one schedule per other agent")
    gi = market.agents[i].gamma
    go = 1.0 / sum(1.0 / s.gamma for s in other_schedules)
    cbar = np.sum([s.c for s in other_schedules], axis=0)
    h = cov_vector(basket, market.agents[i].endowment)
    gap = 2.0 * (gi * go * h + go * (gi + go) * cbar) / (2.0 * go + gi)
    return basket.mean_vector - gap


@dataclass(frozen=True, eq=False)
class UtilityComparison:
    """Per-agent utilities of trading the basket, Pareto vs Nash regime."""

    pareto_utilities: np.ndarray
    nash_utilities: np.ndarray
    aggregate_decrease: float
    aggregate_decrease_closed: float
    # only populated for n=2, k=1, Var[C]=1
    agent1_nash_minus_pareto_closed: float | None = None


def nash_vs_pareto_utilities(
    market: Market, basket: SecurityBasket
) -> UtilityComparison:
    """Direct utility comparison of the two pricing regimes.

    The aggregate decrease is evaluated both directly and through the
    quadratic-form identity
    sum_i gamma_i (Zhat_i - Z_i) . (Var[C] (Zhat_i + Z_i) + 2 Cov(E_i, C)),
    valid because the price terms net out across a cleared market. For the
    two-agent single-security unit-variance case the per-agent difference is
    also returned in closed form.
    """
    capm = capm_equilibrium(market, basket)
    nash = nash_price(market, basket)

    def trade_utility(i: int, quantities: np.ndarray, price: np.ndarray) -> float:
        position = market.agents[i].endowment + basket.portfolio(quantities)
        return mv_utility(market.agents[i].gamma, position) - float(
            quantities @ price
        )

    pareto_u = np.array(
        [trade_utility(i, capm.allocation[i], capm.prices) for i in range(market.n)]
    )
    nash_u = np.array(
        [trade_utility(i, nash.allocation[i], nash.price) for i in range(market.n)]
    )
    decrease = float(pareto_u.sum() - nash_u.sum())
    V = basket.cov_matrix
    closed = 0.0
    for i, a in enumerate(market.agents):
        zh, z = nash.allocation[i], capm.allocation[i]
        h = cov_vector(basket, a.endowment)
        closed += a.gamma * (zh - z) @ (V @ (zh + z) + 2.0 * h)
    agent1_closed = None
    if market.n == 2 and basket.k == 1 and abs(basket.cov_matrix[0, 0] - 1.0) < 1e-12:
        g1, g2 = market.gammas
        sharing = optimal_sharing(market)
        t = cov(basket.securities[0], sharing.contracts[0])
        agent1_closed = float((g2 / 2.0 - 0.75 * g1) * t**2)
    return UtilityComparison(
        pareto_utilities=pareto_u,
        nash_utilities=nash_u,
        aggregate_decrease=decrease,
        aggregate_decrease_closed=float(closed),
        agent1_nash_minus_pareto_closed=agent1_closed,
    )


# ---------------------------------------------------------------------------
# Excess-return pricing identity


def excess_return_check(market: Market, basket: SecurityBasket, x: Rv) -> float:
    """Residual of E[R_X] = beta(X, M) E[R_M] with M the reported aggregate.

    Returns |LHS - RHS| where R_Y = Y / pi(Y) - 1 and
    pi(Y) = E[Y] - 2 gamma Cov(Y, M) is the Nash pricing functional.
    Requires every endowment and x to lie in span{1, C_1..C_k} and both
    prices to be nonzero.
    """
    space = market.space
    design = np.column_stack(
        [np.ones(space.n_states)] + [s.payoffs for s in basket.securities]
    )
    for label, payoff in [("x", x.payoffs)] + [
        (f"endowment {i}", a.endowment.payoffs) for i, a in enumerate(market.agents)
    ]:
        coef, *_ = np.linalg.lstsq(design, payoff, rcond=None)
        if not np.allclose(design @ coef, payoff, atol=1e-8):
            raise ValueError(f"{label} is not in the span of {{1, C_1..C_k}}")
    m = nash_aggregate_endowment(market)
    g = market.aggregate_gamma

    def price(y: Rv) -> float:
        return mean(y) - 2.0 * g * cov(y, m)

    px, pm = price(x), price(m)
    if abs(px) < 1e-12 or abs(pm) < 1e-12:
        raise ValueError("zero equilibrium price; returns are undefined")
    rx = (1.0 / px) * x - 1.0
    rm = (1.0 / pm) * m - 1.0
    vm = var(rm)
    if vm < 1e-18:
        raise ValueError("reported aggregate endowment is riskless")
    lhs = mean(rx)
    rhs = cov(rx, rm) / vm * mean(rm)
    return abs(lhs - rhs)
