"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import itertools
import random

from hypothesis import strategies as st

from mathsim.mathml import Apply, Constant, FunctionSymbol, Variable
from mathsim.metric import DECAY_KINDS, MetricParams

CDS = ("arith1", "transc1", "setops")
FUNC_NAMES = ("plus", "times", "sin", "cos", "minus")
VAR_NAMES = ("x", "y", "z", "u")
CONST_VALUES = ("0", "1", "2", "3.5")


def make_params(
    delta=0.3,
    zeta=0.5,
    mu=0.5,
    theta=0.2,
    omega=2.0,
    decay_model="exponential",
    dp_rate=0.7,
    cp_rate=0.7,
    epsilon=0.05,
    w_eq=1.5,
    w_ineq=1.25,
    w_expr=1.0,
) -> MetricParams:
    return MetricParams(
        delta=delta,
        zeta=zeta,
        mu=mu,
        theta=theta,
        omega=omega,
        decay_model=decay_model,
        dp_rate=dp_rate,
        cp_rate=cp_rate,
        epsilon=epsilon,
        w_eq=w_eq,
        w_ineq=w_ineq,
        w_expr=w_expr,
    )


def random_params(rng: random.Random, decay_model: str | None = None) -> MetricParams:
    """A valid parameter set drawn uniformly from comfortable interior ranges."""
    w_expr = rng.uniform(0.5, 1.5)
    w_ineq = w_expr + rng.uniform(0.0, 0.5)
    return make_params(
        delta=rng.uniform(0.0, 0.9),
        zeta=rng.uniform(0.0, 1.0),
        mu=rng.uniform(0.05, 0.95),
        theta=rng.uniform(0.0, 0.9),
        omega=rng.uniform(1.1, 6.0),
        decay_model=decay_model or rng.choice(DECAY_KINDS),
        dp_rate=rng.uniform(0.05, 1.0),
        cp_rate=rng.uniform(0.05, 1.0),
        epsilon=rng.uniform(0.01, 0.2),
        w_eq=w_ineq + rng.uniform(0.0, 0.5),
        w_ineq=w_ineq,
        w_expr=w_expr,
    )


def random_leaf(rng: random.Random):
    roll = rng.random()
    if roll < 0.45:
        return Variable(rng.choice(VAR_NAMES))
    if roll < 0.8:
        return Constant(rng.choice(CONST_VALUES))
    return FunctionSymbol(rng.choice(FUNC_NAMES), rng.choice(CDS))


def random_tree(rng: random.Random, max_height: int = 5, max_fanout: int = 4):
    if max_height == 0 or rng.random() < 0.35:
        return random_leaf(rng)
    head = FunctionSymbol(rng.choice(FUNC_NAMES), rng.choice(CDS))
    args = tuple(
        random_tree(rng, max_height - 1, max_fanout) for _ in range(rng.randint(0, max_fanout))
    )
    return Apply(head, args)


# hypothesis strategies -------------------------------------------------------

leaf_strategy = st.one_of(
    st.builds(Variable, st.sampled_from(VAR_NAMES)),
    st.builds(Constant, st.sampled_from(CONST_VALUES)),
    st.builds(FunctionSymbol, st.sampled_from(FUNC_NAMES), st.sampled_from(CDS)),
)

tree_strategy = st.recursive(
    leaf_strategy,
    lambda children: st.builds(
        lambda head, args: Apply(head, tuple(args)),
        st.builds(FunctionSymbol, st.sampled_from(FUNC_NAMES), st.sampled_from(CDS)),
        st.lists(children, min_size=0, max_size=4),
    ),
    max_leaves=12,
)

params_strategy = st.builds(
    lambda delta, zeta, mu, theta, omega, kind, dp, cp, eps, w_expr, ineq_up, eq_up: make_params(
        delta=delta,
        zeta=zeta,
        mu=mu,
        theta=theta,
        omega=omega,
        decay_model=kind,
        dp_rate=dp,
        cp_rate=cp,
        epsilon=eps,
        w_eq=w_expr + ineq_up + eq_up,
        w_ineq=w_expr + ineq_up,
        w_expr=w_expr,
    ),
    delta=st.floats(0.0, 0.9),
    zeta=st.floats(0.0, 1.0),
    mu=st.floats(0.05, 0.95),
    theta=st.floats(0.0, 0.9),
    omega=st.floats(1.1, 6.0),
    kind=st.sampled_from(DECAY_KINDS),
    dp=st.floats(0.05, 1.0),
    cp=st.floats(0.05, 1.0),
    eps=st.floats(0.01, 0.2),
    w_expr=st.floats(0.5, 1.5),
    ineq_up=st.floats(0.0, 0.5),
    eq_up=st.floats(0.0, 0.5),
)


# independent oracles ---------------------------------------------------------

def exhaustive_critical_value(statistic: str, n: int, alpha: float) -> float:
    """Critical value by enumerating every permutation of 1..n.

    Smallest achieved value whose >= tail has probability at most alpha;
    1.0 if no achieved value qualifies.
    """
    truth = tuple(range(1, n + 1))
    values = []
    for perm in itertools.permutations(truth):
        if statistic == "rho":
            d_sq = sum((a - b) ** 2 for a, b in zip(truth, perm))
            values.append(1.0 - 6.0 * d_sq / (n * (n * n - 1)))
        else:
            concordant = discordant = 0
            for i in range(n):
                for j in range(i + 1, n):
                    if perm[i] < perm[j]:
                        concordant += 1
                    else:
                        discordant += 1
            values.append((concordant - discordant) / (n * (n - 1) / 2))
    values.sort()
    total = len(values)
    first_index: dict[float, int] = {}
    for idx, value in enumerate(values):
        if value not in first_index:
            first_index[value] = idx
    for value in sorted(first_index):
        if total - first_index[value] <= alpha * total:
            return value
    return 1.0
