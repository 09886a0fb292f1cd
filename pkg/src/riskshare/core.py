"""Finite probability spaces, random-variable algebra and mean-variance markets.

Everything downstream (sharing rules, equilibrium prices, Nash games) is a
function of first and second moments only, so random variables are stored as
payoff vectors over a finite state space with exact moment computation.
All objects are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Tolerances used across the package.
PROB_SUM_TOL = 1e-12
ABS_TOL = 1e-9
# Two payoffs are "equal up to constants" when the variance of their
# difference is below this (centered versions coincide).
CONST_VAR_TOL = 1e-18
# Relative singular-value floor for covariance matrices of tradeable baskets.
SV_RATIO_MIN = 1e-10


class SpaceMismatchError(ValueError):
    """Random variables from different probability spaces were combined."""


class SingularCovarianceError(ValueError):
    """A covariance matrix required to be invertible is (near-)singular."""


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ProbSpace:
    """Finite state space with strictly positive probabilities summing to 1."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _as_float_array(self.probs, "probs")
        if probs.size < 1:
            raise ValueError("probability space needs at least one state")
        if np.any(probs <= 0.0):
            raise ValueError("all state probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.size

    def rv(self, payoffs) -> "Rv":
        return Rv(self, payoffs)

    def constant(self, value: float) -> "Rv":
        return Rv(self, np.full(self.n_states, float(value)))


@dataclass(frozen=True, eq=False)
class Rv:
    """Random variable: a payoff vector over a finite probability space."""

    space: ProbSpace
    payoffs: np.ndarray

    def __post_init__(self):
        payoffs = _as_float_array(self.payoffs, "payoffs")
        if payoffs.size != self.space.n_states:
            raise ValueError(
                f"payoff length {payoffs.size} does not match "
                f"space dimension {self.space.n_states}"
            )
        object.__setattr__(self, "payoffs", payoffs)

    def _check_space(self, other: "Rv") -> None:
        if other.space is not self.space and not np.array_equal(
            other.space.probs, self.space.probs
        ):
            raise SpaceMismatchError("random variables live on different spaces")

    def __add__(self, other):
        if isinstance(other, Rv):
            self._check_space(other)
            return Rv(self.space, self.payoffs + other.payoffs)
        return Rv(self.space, self.payoffs + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Rv):
            self._check_space(other)
            return Rv(self.space, self.payoffs - other.payoffs)
        return Rv(self.space, self.payoffs - float(other))

    def __neg__(self):
        return Rv(self.space, -self.payoffs)

    def __mul__(self, scalar):
        return Rv(self.space, self.payoffs * float(scalar))

    __rmul__ = __mul__


def mean(x: Rv) -> float:
    """Expectation under the state probabilities."""
    return float(x.space.probs @ x.payoffs)


def cov(x: Rv, y: Rv) -> float:
    """Covariance E[xy] - E[x]E[y]; raises on a space mismatch."""
    x._check_space(y)
    p = x.space.probs
    return float(p @ (x.payoffs * y.payoffs) - (p @ x.payoffs) * (p @ y.payoffs))


def var(x: Rv) -> float:
    return cov(x, x)


def equal_up_to_constants(x: Rv, y: Rv, tol: float = CONST_VAR_TOL) -> bool:
    """Whether x and y differ only by a cash amount."""
    return var(x - y) < tol


def mv_utility(agent_gamma: float, x: Rv) -> float:
    """Mean-variance utility E[x] - gamma * Var[x]."""
    if agent_gamma <= 0.0:
        raise ValueError("risk aversion must be positive")
    return mean(x) - agent_gamma * var(x)


@dataclass(frozen=True, eq=False)
class Agent:
    """Risk aversion coefficient plus a random endowment."""

    gamma: float
    endowment: Rv

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma <= 0.0:
            raise ValueError(f"gamma must be a positive number, got {self.gamma!r}")


@dataclass(frozen=True, eq=False)
class Market:
    """n >= 2 mean-variance agents sharing one probability space."""

    space: ProbSpace
    agents: tuple[Agent, ...]

    # derived, filled in __post_init__
    gammas: np.ndarray = field(init=False)

    def __post_init__(self):
        agents = tuple(self.agents)
        if len(agents) < 2:
            raise ValueError("a market needs at least two agents")
        for k, agent in enumerate(agents):
            if agent.endowment.space is not self.space and not np.array_equal(
                agent.endowment.space.probs, self.space.probs
            ):
                raise SpaceMismatchError(
                    f"endowment of agent {k} is not on the market's space"
                )
        object.__setattr__(self, "agents", agents)
        gammas = np.array([a.gamma for a in agents])
        gammas.flags.writeable = False
        object.__setattr__(self, "gammas", gammas)
        # harmonic aggregate sits strictly below every individual gamma for
        # n >= 2, which keeps every gamma_i^2 - gamma^2 denominator positive
        g = self.aggregate_gamma
        assert 0.0 < g < gammas.min()
        # sum of (g / gamma_i) is exactly 1 with every term in (0, 1), so the
        # Nash denominator 1 - sum (g/gamma_i)^2 is positive as well
        assert 1.0 - np.sum((g / gammas) ** 2) > 0.0

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def aggregate_gamma(self) -> float:
        return float(1.0 / np.sum(1.0 / self.gammas))

    def gamma_excluding(self, i: int) -> float:
        """Harmonic aggregate of all risk aversions except agent i's."""
        mask = np.arange(self.n) != i
        return float(1.0 / np.sum(1.0 / self.gammas[mask]))

    @property
    def total_endowment(self) -> Rv:
        total = np.zeros(self.space.n_states)
        for a in self.agents:
            total = total + a.endowment.payoffs
        return Rv(self.space, total)

    def endowment_excluding(self, i: int) -> Rv:
        total = np.zeros(self.space.n_states)
        for j, a in enumerate(self.agents):
            if j != i:
                total = total + a.endowment.payoffs
        return Rv(self.space, total)

    def endowments(self) -> list[Rv]:
        return [a.endowment for a in self.agents]


@dataclass(frozen=True, eq=False)
class SecurityBasket:
    """A vector of k >= 1 tradeable securities with invertible covariance.

    Near-singularity is rejected here once, at construction, instead of at
    every pricing call.
    """

    securities: tuple[Rv, ...]

    mean_vector: np.ndarray = field(init=False)
    cov_matrix: np.ndarray = field(init=False)
    cov_inverse: np.ndarray = field(init=False)

    def __post_init__(self):
        securities = tuple(self.securities)
        if len(securities) < 1:
            raise ValueError("basket needs at least one security")
        space = securities[0].space
        for s in securities[1:]:
            securities[0]._check_space(s)
        k = len(securities)
        mu = np.array([mean(s) for s in securities])
        V = np.empty((k, k))
        for a in range(k):
            for b in range(a, k):
                V[a, b] = V[b, a] = cov(securities[a], securities[b])
        svals = np.linalg.svd(V, compute_uv=False)
        if svals[-1] <= SV_RATIO_MIN * svals[0]:
            raise SingularCovarianceError(
                "covariance matrix of the security basket is singular"
            )
        for arr in (mu, V):
            arr.flags.writeable = False
        object.__setattr__(self, "securities", securities)
        object.__setattr__(self, "mean_vector", mu)
        object.__setattr__(self, "cov_matrix", V)
        inv = np.linalg.inv(V)
        inv.flags.writeable = False
        object.__setattr__(self, "cov_inverse", inv)

    @property
    def k(self) -> int:
        return len(self.securities)

    @property
    def space(self) -> ProbSpace:
        return self.securities[0].space

    def portfolio(self, quantities) -> Rv:
        """Payoff of holding `quantities[j]` units of each security."""
        q = np.asarray(quantities, dtype=float)
        payoffs = np.zeros(self.space.n_states)
        for qj, s in zip(q, self.securities):
            payoffs = payoffs + qj * s.payoffs
        return Rv(self.space, payoffs)


def cov_vector(basket: SecurityBasket, x: Rv) -> np.ndarray:
    """Vector of covariances of each basket security with x."""
    return np.array([cov(s, x) for s in basket.securities])


def demand(
    agent_gamma: float,
    endowment: Rv,
    basket: SecurityBasket,
    p,
) -> np.ndarray:
    """Quantity vector maximizing U(a.C + endowment) - a.p at price p.

    Closed form: ((E[C] - p) / (2 gamma) - Cov(C, endowment)) . Var^{-1}[C].
    """
    if agent_gamma <= 0.0:
        raise ValueError("risk aversion must be positive")
    p = np.asarray(p, dtype=float)
    rhs = (basket.mean_vector - p) / (2.0 * agent_gamma) - cov_vector(
        basket, endowment
    )
    return rhs @ basket.cov_inverse
