"""Score-function gradient estimators.

All estimators consume a SampleBatch holding S latent draws together with
f_s = log q(z_s) - log p(x, z_s) and the analytic scores. Everything here
targets the gradient of KL(q || p(.|x)), equivalently the negative-ELBO
gradient, since the evidence does not depend on the variational parameters.

The leave-one-out estimator centres f by its batch mean before weighting the
scores and rescales by S/(S-1); it is exactly the gradient of half the
unbiased empirical variance of the f values with the samples held fixed,
which vargrad_via_loss evaluates through that second route as a consistency
check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import families
from .families import Params
from .targets import Target, log_joint

REINFORCE_TAG = "reinforce"
CV_TAG = "cv"
VARGRAD_TAG = "vargrad"


@dataclass(frozen=True)
class SampleBatch:
    """S draws plus the per-sample quantities every estimator needs.

    samples has shape (S, D) with one latent per row, f_values shape (S,),
    scores shape (S, P) where P is the parameter count, and f_bar is the
    arithmetic mean of f_values.
    """

    samples: np.ndarray
    f_values: np.ndarray
    scores: np.ndarray
    f_bar: float
    family_tag: str
    seed: int | None = None

    def __post_init__(self):
        s = self.f_values.shape[0]
        if self.samples.shape[0] != s or self.scores.shape[0] != s:
            raise ValueError("samples, f_values and scores must agree on S")
        if abs(self.f_bar - float(np.mean(self.f_values))) > 1e-12 * (1.0 + abs(self.f_bar)):
            raise ValueError("f_bar is not the mean of f_values")

    @property
    def S(self) -> int:
        return self.f_values.shape[0]

    @property
    def num_params(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class GradientEstimate:
    grad: np.ndarray
    estimator_tag: str
    S: int
    seed: int | None = None


def build_batch(
    params: Params,
    target: Target,
    rng: np.random.Generator,
    S: int,
    seed: int | None = None,
) -> SampleBatch:
    """Draw S latents and populate f values and scores.

    Draws are detached by construction: scores come from the closed-form
    score function, so no parameter dependence flows through the samples.
    """
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    z = families.draw(params, rng, S)
    f = np.asarray(families.log_density(params, z) - log_joint(target, z), dtype=float)
    sc = families.score(params, z)
    return SampleBatch(
        samples=z,
        f_values=f,
        scores=sc,
        f_bar=float(np.mean(f)),
        family_tag=families.family_tag(params),
        seed=seed,
    )


def elbo_estimate(batch: SampleBatch) -> float:
    """Monte Carlo ELBO: minus the batch mean of f."""
    return -batch.f_bar


def reinforce(batch: SampleBatch) -> GradientEstimate:
    """Plain score-function estimator: (1/S) sum_s f_s * score_s."""
    grad = batch.f_values @ batch.scores / batch.S
    return GradientEstimate(grad=grad, estimator_tag=REINFORCE_TAG, S=batch.S, seed=batch.seed)


def cv_estimator(batch: SampleBatch, a) -> GradientEstimate:
    """Reinforce minus a constant-coefficient score control variate.

    The correction a (*) mean(score) is elementwise per coordinate and has
    zero expectation, so any finite constant a leaves the mean unchanged.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (batch.num_params,):
        raise ValueError(f"a must have shape ({batch.num_params},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("control-variate coefficients must be finite")
    grad = batch.f_values @ batch.scores / batch.S - a * np.mean(batch.scores, axis=0)
    return GradientEstimate(grad=grad, estimator_tag=CV_TAG, S=batch.S, seed=batch.seed)


def vargrad(batch: SampleBatch) -> GradientEstimate:
    """Leave-one-out estimator: (1/(S-1)) [sum_s f_s score_s - f_bar sum_s score_s]."""
    if batch.S < 2:
        raise ValueError("the leave-one-out estimator needs S >= 2 (empirical variance)")
    grad = (batch.f_values @ batch.scores - batch.f_bar * np.sum(batch.scores, axis=0)) / (
        batch.S - 1
    )
    return GradientEstimate(grad=grad, estimator_tag=VARGRAD_TAG, S=batch.S, seed=batch.seed)


def vargrad_via_loss(batch: SampleBatch) -> GradientEstimate:
    """The same estimator derived by differentiating the loss.

    Half the unbiased empirical variance of f is (1/(2(S-1))) sum (f_s - f_bar)^2;
    its parameter derivative with samples detached is
    (1/(S-1)) sum_s (f_s - f_bar) score_s, since the f_bar derivative pairs
    with a term that sums to zero. Agrees with vargrad() to 1e-12 relative.
    """
    if batch.S < 2:
        raise ValueError("the leave-one-out estimator needs S >= 2 (empirical variance)")
    grad = (batch.f_values - batch.f_bar) @ batch.scores / (batch.S - 1)
    return GradientEstimate(grad=grad, estimator_tag=VARGRAD_TAG, S=batch.S, seed=batch.seed)


def sampled_cv_coefficient(
    params: Params,
    target: Target,
    rng: np.random.Generator,
    S_extra: int,
) -> np.ndarray:
    """Per-coordinate estimate of the optimal control-variate coefficient.

    Uses an independent batch of S_extra draws and returns the ratio of the
    sample covariance Cov(f * score_i, score_i) to the sample variance
    Var(score_i). Both moments use the 1/(S_extra - 1) convention so it
    cancels in the ratio. This is a ratio of estimates and therefore biased;
    the bias shrinks as S_extra grows.

    Coordinates whose score sample variance is exactly zero are reported as
    NaN (missing), never as zero.
    """
    if S_extra < 2:
        raise ValueError(f"S_extra must be >= 2, got {S_extra}")
    batch = build_batch(params, target, rng, S_extra)
    fs = batch.f_values[:, None] * batch.scores  # f * score_i per sample
    num = np.sum((fs - fs.mean(axis=0)) * (batch.scores - batch.scores.mean(axis=0)), axis=0)
    den = np.sum((batch.scores - batch.scores.mean(axis=0)) ** 2, axis=0)
    a = np.full(batch.num_params, np.nan)
    ok = den > 0.0
    a[ok] = num[ok] / den[ok]
    return a
