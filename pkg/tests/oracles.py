"""Independent reference computations for the test suite.

Nothing here reuses the closed forms under test. Gaussian moments come from
adaptive quadrature, discrete expectations from exhaustive enumeration, and
multi-sample variances from a direct expansion over i.i.d. draws, so
agreement with the library is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np
from scipy.integrate import quad

# Integration window in posterior standard deviations. The integrands decay
# like a Gaussian times a polynomial, so 14 sd puts the tail mass far below
# the 1e-12 quadrature tolerance.
_WINDOW_SD = 14.0
_QUAD_LIMIT = 400


def gauss_expect(fn: Callable[[float], float], mu: float, sigma2: float) -> float:
    """E[fn(z)] under z ~ N(mu, sigma2) by adaptive quadrature."""
    sd = math.sqrt(sigma2)

    def integrand(z: float) -> float:
        w = math.exp(-((z - mu) ** 2) / (2.0 * sigma2)) / math.sqrt(2.0 * math.pi * sigma2)
        return fn(z) * w

    val, _ = quad(integrand, mu - _WINDOW_SD * sd, mu + _WINDOW_SD * sd, limit=_QUAD_LIMIT)
    return val


def gaussian_log_ratio(mu: float, mu_tilde: float, sigma2: float, sigma2_tilde: float):
    """log q(z) - log p(z) for 1-d Gaussians, as a plain callable."""

    def f(z: float) -> float:
        return (
            -0.5 * ((z - mu) ** 2 / sigma2 + math.log(2.0 * math.pi * sigma2))
            + 0.5 * ((z - mu_tilde) ** 2 / sigma2_tilde + math.log(2.0 * math.pi * sigma2_tilde))
        )

    return f


def gaussian_pair_moments(
    mu: float, mu_tilde: float, sigma2: float, sigma2_tilde: float
) -> dict[str, float]:
    """Single-draw moments of f = log q - log p and the mean score s.

    Keys: ef = E[f], cov_fs = E[f s] (= Cov since E[s] = 0),
    raw_f2s2 = E[f^2 s^2], cen_f2s2 = E[(f - Ef)^2 s^2],
    var_f = Var(f), var_s = E[s^2].
    """
    f = gaussian_log_ratio(mu, mu_tilde, sigma2, sigma2_tilde)

    def s(z: float) -> float:
        return (z - mu) / sigma2

    ef = gauss_expect(f, mu, sigma2)
    return {
        "ef": ef,
        "cov_fs": gauss_expect(lambda z: f(z) * s(z), mu, sigma2),
        "raw_f2s2": gauss_expect(lambda z: f(z) ** 2 * s(z) ** 2, mu, sigma2),
        "cen_f2s2": gauss_expect(lambda z: (f(z) - ef) ** 2 * s(z) ** 2, mu, sigma2),
        "var_f": gauss_expect(lambda z: (f(z) - ef) ** 2, mu, sigma2),
        "var_s": gauss_expect(lambda z: s(z) ** 2, mu, sigma2),
    }


def reinforce_variance_ref(mom: dict[str, float], S: int) -> float:
    """Var of (1/S) sum_i f_i s_i over S i.i.d. draws.

    The summands are i.i.d. with mean E[f s], so the variance is
    (E[f^2 s^2] - E[f s]^2) / S. Note the raw (uncentred) f^2: this route is
    deliberately sensitive to additive constants in f.
    """
    return (mom["raw_f2s2"] - mom["cov_fs"] ** 2) / S


def vargrad_variance_ref(mom: dict[str, float], S: int) -> float:
    """Var of (1/(S-1)) sum_i (f_i - f_bar) s_i over S i.i.d. draws.

    The estimator is invariant to shifting f, so write x = f - E[f] and
    expand the square. With independent draws and E[s] = 0 the cross terms
    collapse to three moments: E4 = E[x^2 s^2], m = E[x s], Vx = Var(f),
    Vs = E[s^2], giving

        E4/S - m^2 (S-2) / (S (S-1)) + Vx Vs / (S (S-1)).
    """
    m = mom["cov_fs"]
    e4 = mom["cen_f2s2"]
    vx = mom["var_f"]
    vs = mom["var_s"]
    return e4 / S - m * m * (S - 2) / (S * (S - 1)) + vx * vs / (S * (S - 1))


def delta_var_ref(
    mu: float, mu_tilde: float, sigma2: float, sigma2_tilde: float, S: int
) -> float:
    """Var(reinforce) - Var(vargrad) on the mean coordinate, by quadrature.

    Uses the zero-log-evidence convention for f, matching the closed form.
    """
    mom = gaussian_pair_moments(mu, mu_tilde, sigma2, sigma2_tilde)
    return reinforce_variance_ref(mom, S) - vargrad_variance_ref(mom, S)


def kl_gaussian_ref(mu: float, mu_tilde: float, sigma2: float, sigma2_tilde: float) -> float:
    """KL(q || p) for 1-d Gaussians via quadrature of q log(q/p)."""
    return gauss_expect(gaussian_log_ratio(mu, mu_tilde, sigma2, sigma2_tilde), mu, sigma2)


def chi2_half_variance_ref(mu: float, mu_tilde: float, sigma2: float, sigma2_tilde: float) -> float:
    """0.5 Var_q(p/q) for 1-d Gaussians, integrating in log space.

    Computes E_q[(p/q)^2] = int exp(2 (log p - log q) + log q) dz on a wide
    window; the log-space form avoids underflow of the density ratio.
    """
    log_ratio = gaussian_log_ratio(mu, mu_tilde, sigma2, sigma2_tilde)

    def log_q(z: float) -> float:
        return -0.5 * ((z - mu) ** 2 / sigma2 + math.log(2.0 * math.pi * sigma2))

    def integrand(z: float) -> float:
        return math.exp(-2.0 * log_ratio(z) + log_q(z))

    lo = min(mu, mu_tilde) - 40.0
    hi = max(mu, mu_tilde) + 40.0
    second_moment, _ = quad(integrand, lo, hi, limit=200)
    return 0.5 * (second_moment - 1.0)


def cov_f_score2_ref(
    mu: float, mu_tilde: float, sigma2: float, sigma2_tilde: float, convention: str
) -> float:
    """Cov(f, s_k^2) by quadrature for the scalar-Gaussian score conventions."""
    f = gaussian_log_ratio(mu, mu_tilde, sigma2, sigma2_tilde)
    if convention == "mean":
        def s(z: float) -> float:
            return (z - mu) / sigma2
    elif convention == "variance":
        def s(z: float) -> float:
            return ((z - mu) ** 2 / sigma2 - 1.0) / (2.0 * sigma2)
    elif convention == "log_variance":
        def s(z: float) -> float:
            return ((z - mu) ** 2 / sigma2 - 1.0) / 2.0
    else:
        raise ValueError(f"unknown convention {convention!r}")
    ef = gauss_expect(f, mu, sigma2)
    es2 = gauss_expect(lambda z: s(z) ** 2, mu, sigma2)
    return gauss_expect(lambda z: (f(z) - ef) * (s(z) ** 2 - es2), mu, sigma2)


def fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        out.flat[i] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return out


def enumerate_batches(probs: np.ndarray, S: int):
    """All ordered S-tuples of support indices with their joint probabilities.

    Yields (indices, weight) pairs; the weights sum to 1, so averaging any
    per-batch statistic against them is an exact expectation over batches.
    """
    probs = np.asarray(probs, dtype=float)
    for combo in itertools.product(range(probs.size), repeat=S):
        weight = float(np.prod(probs[list(combo)]))
        yield np.array(combo, dtype=int), weight


def sample_variance_ref(x: np.ndarray) -> float:
    """Unbiased sample variance, written out longhand."""
    x = np.asarray(x, dtype=float)
    m = x.mean()
    return float(((x - m) ** 2).sum() / (x.size - 1))
