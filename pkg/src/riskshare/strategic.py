"""Single-deviator strategies in the risk-sharing and security markets.

One agent learns what the others are going to share (their reported
endowments, or their demand schedules) and reports whatever maximizes their
own utility once the sharing mechanism is applied. Best responses are
returned zero-mean normalized; the deviator's utility is invariant to cash
shifts of the report, so nothing is lost.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Market,
    Rv,
    SecurityBasket,
    cov,
    cov_vector,
    mean,
    mv_utility,
    var,
)


@dataclass(frozen=True, eq=False)
class DemandSchedule:
    """Linear mean-variance demand, identified by (gamma, covariance vector).

    Evaluates to ((E[C] - p) / (2 gamma) - c) . Var^{-1}[C]; affine in p.
    """

    gamma: float
    c: np.ndarray

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        c = np.asarray(self.c, dtype=float).copy()
        c.flags.writeable = False
        object.__setattr__(self, "c", c)

    def quantities(self, basket: SecurityBasket, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (
            (basket.mean_vector - p) / (2.0 * self.gamma) - self.c
        ) @ basket.cov_inverse


@dataclass(frozen=True, eq=False)
class ResponseReport:
    """A best response together with the utility it secures."""

    response: object  # Rv, float percentage or price vector
    utility_before: float
    utility_after: float


def truthful_schedules(market: Market, basket: SecurityBasket) -> list[DemandSchedule]:
    return [
        DemandSchedule(a.gamma, cov_vector(basket, a.endowment))
        for a in market.agents
    ]


def _reports_or_truthful(market: Market, others: Sequence[Rv] | None) -> list[Rv]:
    if others is None:
        return market.endowments()
    others = list(others)
    if len(others) != market.n:
        raise ValueError("reports must be a full-length profile (slot i is ignored)")
    return others


def reported_utility(
    market: Market,
    i: int,
    b: Rv,
    others: Sequence[Rv] | None = None,
) -> float:
    """Utility of agent i after reporting `b` to the sharing mechanism.

    The mechanism prices and allocates the *reported* endowments (b in slot i,
    `others` elsewhere, truthful by default) while agent i's real exposure
    stays their true endowment. Composes the sharing-rule contract with the
    accumulated cash transfer.
    """
    reports = _reports_or_truthful(market, others)
    reports[i] = b
    g = market.aggregate_gamma
    gi = market.agents[i].gamma
    aggregate = reports[0]
    for r in reports[1:]:
        aggregate = aggregate + r

    weights = np.full(market.n, g / gi)
    weights[i] = (g - gi) / gi
    prices = np.array(
        [mean(r) - 2.0 * g * cov(aggregate, r) for r in reports]
    )
    contract = Rv(
        market.space,
        sum(w * r.payoffs for w, r in zip(weights, reports)),
    )
    cash_paid = float(weights @ prices)
    return mv_utility(gi, market.agents[i].endowment + contract) - cash_paid


def best_endowment_response(
    market: Market,
    i: int,
    others: Sequence[Rv] | None = None,
) -> Rv:
    """Report maximizing agent i's utility, zero-mean normalized.

    B*_i = gamma_i/(gamma_i + gamma) E_i + gamma^2/(gamma_i^2 - gamma^2) R_{-i}
    where R_{-i} is the sum of the other agents' reports.
    """
    reports = _reports_or_truthful(market, others)
    g = market.aggregate_gamma
    gi = market.agents[i].gamma
    rest = Rv(
        market.space,
        sum(r.payoffs for j, r in enumerate(reports) if j != i),
    )
    b = (gi / (gi + g)) * market.agents[i].endowment + (
        g**2 / (gi**2 - g**2)
    ) * rest
    return b - mean(b)


def best_percentage_response(
    market: Market,
    i: int,
    others: Sequence[Rv] | None = None,
) -> float:
    """Optimal nonnegative multiple of agent i's true endowment to report.

    b*_i = max(0, gamma_i/(gamma_i+gamma)
               + gamma^2/(gamma_i^2-gamma^2) * Cov(E_i, R_{-i}) / Var[E_i]),
    the covariance ratio being rho(E_i, R_{-i}) sqrt(Var[R_{-i}]/Var[E_i]).
    """
    reports = _reports_or_truthful(market, others)
    g = market.aggregate_gamma
    gi = market.agents[i].gamma
    ei = market.agents[i].endowment
    vei = var(ei)
    if vei <= 0.0:
        raise ValueError("best percentage response needs a non-constant endowment")
    rest = Rv(
        market.space,
        sum(r.payoffs for j, r in enumerate(reports) if j != i),
    )
    raw = gi / (gi + g) + g**2 / (gi**2 - g**2) * cov(ei, rest) / vei
    return max(0.0, float(raw))


def best_price_response(
    market: Market,
    i: int,
    basket: SecurityBasket,
    other_schedules: Sequence[DemandSchedule],
) -> np.ndarray:
    """Clearing price most preferable for agent i, others bidding truthfully.

    p_hat_i = E[C] - 2 gamma Cov(C, gamma_i/(gamma_i+gamma) E_i
                                   + gamma_i^2/(gamma_i^2-gamma^2) E_{-i}).

    Only truthful `other_schedules` are accepted here; the iterated game with
    arbitrary schedules lives in the nash module.
    """
    schedules = list(other_schedules)
    if len(schedules) != market.n - 1:
        raise ValueError("need one schedule per other agent")
    truthful = [s for j, s in enumerate(truthful_schedules(market, basket)) if j != i]
    for given, want in zip(schedules, truthful):
        if abs(given.gamma - want.gamma) > 1e-9 or not np.allclose(
            given.c, want.c, atol=1e-9
        ):
            raise ValueError(
                "best_price_response only accepts the truthful schedules of "
                "the other agents"
            )
    g = market.aggregate_gamma
    gi = market.agents[i].gamma
    effective = (gi / (gi + g)) * market.agents[i].endowment + (
        gi**2 / (gi**2 - g**2)
    ) * market.endowment_excluding(i)
    return basket.mean_vector - 2.0 * g * cov_vector(basket, effective)


def best_demand_response(
    market: Market, i: int, basket: SecurityBasket
) -> DemandSchedule:
    """Schedule that clears the market at agent i's preferred price.

    Same linear family as the truthful demand, with the covariance vector
    taken against the best endowment response instead of the true endowment.
    """
    b = best_endowment_response(market, i)
    return DemandSchedule(market.agents[i].gamma, cov_vector(basket, b))


def clearing_price(basket: SecurityBasket, schedules: Sequence[DemandSchedule]) -> np.ndarray:
    """Price at which the given demand schedules sum to zero."""
    inv_gammas = np.array([1.0 / s.gamma for s in schedules])
    g = 1.0 / inv_gammas.sum()
    total_c = np.sum([s.c for s in schedules], axis=0)
    return basket.mean_vector - 2.0 * g * total_c


def price_objective(
    market: Market,
    i: int,
    basket: SecurityBasket,
    other_schedules: Sequence[DemandSchedule],
    p,
) -> float:
    """Utility of agent i when the market clears at price p.

    phi_i(p) = U_i(E_i - sum_j Z_j(p) . C) + sum_j Z_j(p) . p over the other
    agents' schedules; agent i absorbs the residual supply.
    """
    p = np.asarray(p, dtype=float)
    supplied = np.sum(
        [s.quantities(basket, p) for s in other_schedules], axis=0
    )
    position = market.agents[i].endowment - basket.portfolio(supplied)
    return mv_utility(market.agents[i].gamma, position) + float(supplied @ p)


def endowment_response_report(market: Market, i: int) -> ResponseReport:
    best = best_endowment_response(market, i)
    return ResponseReport(
        response=best,
        utility_before=reported_utility(market, i, market.agents[i].endowment),
        utility_after=reported_utility(market, i, best),
    )


def percentage_response_report(market: Market, i: int) -> ResponseReport:
    best = best_percentage_response(market, i)
    return ResponseReport(
        response=best,
        utility_before=reported_utility(market, i, market.agents[i].endowment),
        utility_after=reported_utility(
            market, i, best * market.agents[i].endowment
        ),
    )


def demand_response_report(
    market: Market, i: int, basket: SecurityBasket
) -> ResponseReport:
    schedules = truthful_schedules(market, basket)
    p_star = clearing_price(basket, schedules)
    others = [s for j, s in enumerate(schedules) if j != i]
    before = price_objective(market, i, basket, others, p_star)
    p_hat = best_price_response(market, i, basket, others)
    after = price_objective(market, i, basket, others, p_hat)
    return ResponseReport(
        response=best_demand_response(market, i, basket),
        utility_before=before,
        utility_after=after,
    )
