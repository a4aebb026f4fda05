"""Independent reference implementations used to cross-check the library."""

import math


def histogram_cdf(edges, masses, u):
    """CDF of a piecewise-uniform density at u, by walking the bins."""
    if u <= edges[0]:
        return 0.0
    acc = 0.0
    for k in range(len(masses)):
        lo, hi = edges[k], edges[k + 1]
        if u >= hi:
            acc += masses[k]
        else:
            return acc + masses[k] * (u - lo) / (hi - lo)
    return 1.0


def ei_brute_force(edges, masses, beta):
    """Policy index maximizing sum_t beta[t] * (1 - F(U_beta | t, p)).

    ``masses[t][p]`` is a list of bin masses. Ties go to the lowest index.
    """
    n_types, n_pol = len(masses), len(masses[0])
    mids = [(edges[k] + edges[k + 1]) / 2 for k in range(len(edges) - 1)]
    best_u = -math.inf
    for p in range(n_pol):
        u = 0.0
        for t in range(n_types):
            u += beta[t] * sum(m * x for m, x in zip(masses[t][p], mids))
        best_u = max(best_u, u)
    scores = []
    for p in range(n_pol):
        s = 0.0
        for t in range(n_types):
            s += beta[t] * (1.0 - histogram_cdf(edges, masses[t][p], best_u))
        scores.append(s)
    top = max(scores)
    for p, s in enumerate(scores):
        if s >= top - 1e-12:
            return p
    raise AssertionError("unreachable")


def bernoulli_posterior(prior, rates, observations):
    """Type posterior from per-flag Bernoulli rates, computed with plain floats and logs."""
    logs = []
    for t, pr in enumerate(prior):
        if pr == 0:
            logs.append(-math.inf)
            continue
        acc = math.log(pr)
        for obs in observations:
            for k, bit in enumerate(obs):
                r = rates[t][k]
                acc += math.log(r if bit else 1.0 - r)
        logs.append(acc)
    top = max(logs)
    w = [math.exp(x - top) for x in logs]
    z = sum(w)
    return [x / z for x in w]
