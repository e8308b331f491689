"""Target models exposing log p(x, z).

Three targets cover the experiments. GaussianTarget has a known diagonal
Gaussian posterior and a declared log-evidence, so every divergence in the
library is available in closed form against it. LogRegModel is full-batch
Bayesian logistic regression on a synthetic dataset. DiscreteToyModel stores
log p(x, z) for every binary state explicitly, which makes brute-force
enumeration of posteriors, KL values and exact gradients trivial; it is the
oracle substrate for the unbiasedness checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .families import MeanFieldBernoulliParams, log_density, support_probs, support_states

MAX_DISCRETE_DIM = 12

# Latents fed to DiscreteToyModel.log_joint must sit on {0,1} up to this
# tolerance; anything further off errors instead of being thresholded.
BINARY_ROUND_TOL = 1e-9


@dataclass(frozen=True)
class GaussianTarget:
    """Diagonal Gaussian posterior with a declared evidence constant.

    log p(x, z) = log N(z; post_mean, diag(post_var)) + log_evidence. The
    default log_evidence = 0 makes E_q[log q - log p(x,z)] equal the KL
    divergence exactly; nonzero values exercise the evidence-dependent paths.
    """

    post_mean: np.ndarray
    post_var: np.ndarray
    log_evidence: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "post_mean", np.atleast_1d(np.asarray(self.post_mean, float)))
        object.__setattr__(self, "post_var", np.atleast_1d(np.asarray(self.post_var, float)))
        object.__setattr__(self, "log_evidence", float(self.log_evidence))
        if self.post_mean.ndim != 1 or self.post_mean.shape != self.post_var.shape:
            raise ValueError("post_mean and post_var must be matching 1-D vectors")
        if not (np.all(np.isfinite(self.post_mean)) and np.all(np.isfinite(self.post_var))):
            raise ValueError("posterior parameters must be finite")
        if np.any(self.post_var <= 0.0):
            raise ValueError("post_var must be positive elementwise")

    @property
    def dim(self) -> int:
        return self.post_mean.size


@dataclass(frozen=True)
class LogRegModel:
    """Bayesian logistic regression, full batch.

    The latent is z = (w_1..w_D, b), dimension D + 1. Priors are zero-mean
    isotropic Gaussians with variances prior_w_var (weights) and prior_b_var
    (bias). gen_w and gen_b record the weights that generated a synthetic
    dataset; they are diagnostics only and nothing in the inference path
    reads them.
    """

    X: np.ndarray
    y: np.ndarray
    prior_w_var: float = 25.0
    prior_b_var: float = 1.0
    gen_w: np.ndarray | None = None
    gen_b: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.X.ndim != 2:
            raise ValueError(f"X must be N x D, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y must have one label per row of X")
        if np.any(np.abs(self.X) > 1.0):
            raise ValueError("X entries must lie in [-1, 1]")
        if not np.all((self.y == 0.0) | (self.y == 1.0)):
            raise ValueError("labels must be 0/1")
        if self.prior_w_var <= 0.0 or self.prior_b_var <= 0.0:
            raise ValueError("prior variances must be positive")

    @property
    def n_data(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        """Latent dimension: D weights plus one bias."""
        return self.X.shape[1] + 1


@dataclass(frozen=True)
class DiscreteToyModel:
    """Tabulated log p(x, z) over all z in {0,1}^D.

    State i of the table corresponds to the binary expansion of i with z_0 as
    the least significant bit, matching families.support_states.
    """

    log_joint_table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.log_joint_table, dtype=float)
        object.__setattr__(self, "log_joint_table", table)
        if table.ndim != 1 or table.size == 0 or table.size & (table.size - 1):
            raise ValueError("log_joint_table length must be a power of two")
        d = int(table.size).bit_length() - 1
        if d > MAX_DISCRETE_DIM:
            raise ValueError(f"table covers 2^{d} states, limit is D <= {MAX_DISCRETE_DIM}")
        if not np.all(np.isfinite(table)):
            raise ValueError("log_joint_table must be finite everywhere")

    @property
    def dim(self) -> int:
        return int(self.log_joint_table.size).bit_length() - 1

    @property
    def log_evidence(self) -> float:
        return float(logsumexp(self.log_joint_table))

    @property
    def posterior_probs(self) -> np.ndarray:
        return np.exp(self.log_joint_table - self.log_evidence)

    @classmethod
    def from_posterior(cls, posterior_probs, log_evidence: float = 0.0) -> "DiscreteToyModel":
        """Build a table whose normalised posterior is the given vector."""
        p = np.asarray(posterior_probs, dtype=float)
        if np.any(p <= 0.0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("posterior_probs must be positive and sum to 1")
        return cls(log_joint_table=np.log(p) + float(log_evidence))


Target = GaussianTarget | LogRegModel | DiscreteToyModel


def log_joint(target: Target, z) -> np.ndarray | float:
    """log p(x, z) for z of shape (..., dim); returns shape (...,)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] != target.dim:
        raise ValueError(f"latent dimension mismatch: expected {target.dim}, got {z.shape}")

    if isinstance(target, GaussianTarget):
        var = target.post_var
        out = (
            -0.5 * np.sum((z - target.post_mean) ** 2 / var + np.log(2.0 * np.pi * var), axis=-1)
            + target.log_evidence
        )
        return out if out.ndim else float(out)

    if isinstance(target, LogRegModel):
        d = target.n_features
        w, b = z[..., :d], z[..., d:]
        eta = w @ target.X.T + b  # (..., N)
        # y*log(sigmoid) + (1-y)*log(1-sigmoid) == y*eta - softplus(eta)
        loglik = np.sum(target.y * eta - np.logaddexp(0.0, eta), axis=-1)
        log_prior_w = -0.5 * np.sum(w**2, axis=-1) / target.prior_w_var - 0.5 * d * np.log(
            2.0 * np.pi * target.prior_w_var
        )
        log_prior_b = -0.5 * b[..., 0] ** 2 / target.prior_b_var - 0.5 * np.log(
            2.0 * np.pi * target.prior_b_var
        )
        out = loglik + log_prior_w + log_prior_b
        return out if out.ndim else float(out)

    if isinstance(target, DiscreteToyModel):
        bits = np.rint(z)
        if np.any(np.abs(z - bits) > BINARY_ROUND_TOL):
            raise ValueError(f"latent not binary within {BINARY_ROUND_TOL}")
        if not np.all((bits == 0.0) | (bits == 1.0)):
            raise ValueError("latent values must round to 0 or 1")
        idx = (bits.astype(np.int64) @ (1 << np.arange(target.dim, dtype=np.int64))).astype(
            np.int64
        )
        out = target.log_joint_table[idx]
        return out if np.ndim(out) else float(out)

    raise TypeError(f"unknown target: {type(target).__name__}")


def synth_logreg_dataset(rng: np.random.Generator, N: int = 100, D: int = 10) -> LogRegModel:
    """Synthetic logistic-regression data.

    Draw order (fixed for reproducibility): design matrix X uniform on
    [-1, 1]^{N x D}, weights from N(0, 25 Id), bias from N(0, 1), then labels
    Y ~ Bernoulli(sigmoid(X w + b)). The inference prior mirrors the
    generating distributions.
    """
    if N < 1 or D < 1:
        raise ValueError("N and D must be >= 1")
    X = rng.uniform(-1.0, 1.0, size=(N, D))
    w = rng.normal(0.0, 5.0, size=D)
    b = float(rng.normal(0.0, 1.0))
    p = expit(X @ w + b)
    y = (rng.random(N) < p).astype(float)
    return LogRegModel(X=X, y=y, gen_w=w, gen_b=b)


def exact_kl_and_gradient(
    discrete: DiscreteToyModel, params: MeanFieldBernoulliParams
) -> tuple[float, np.ndarray]:
    """KL(q || posterior) and its exact logit gradient, by enumeration.

    Writing r(z) = log q(z) - log p(z|x), the gradient uses the score-times-
    integrand form: d KL / d logit_k = E_q[(z_k - theta_k) r(z)], which is
    exact here because the expectation is a finite sum. The score-mean-zero
    identity removes the term from differentiating log q inside r.
    """
    if discrete.dim != params.dim:
        raise ValueError(f"dimension mismatch: model D={discrete.dim}, params D={params.dim}")
    states = support_states(discrete.dim)
    q = support_probs(params)
    log_q = log_density(params, states)
    log_post = discrete.log_joint_table - discrete.log_evidence
    r = log_q - log_post
    kl = float(np.dot(q, r))
    grad = (q * r) @ (states - params.probs)
    return kl, grad


def logreg_dataset_to_csv(model: LogRegModel, path) -> None:
    """Write the dataset as CSV: x_0..x_{D-1} columns, then y. 17 significant
    digits so floats round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{j}" for j in range(model.n_features)] + ["y"])
        for i in range(model.n_data):
            row = [f"{v:.17g}" for v in model.X[i]] + [f"{model.y[i]:.17g}"]
            writer.writerow(row)


def logreg_dataset_from_csv(path, prior_w_var: float = 25.0, prior_b_var: float = 1.0) -> LogRegModel:
    """Read a dataset written by logreg_dataset_to_csv. Priors are not stored
    in the file; pass them explicitly if they differ from the defaults."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "y":
            raise ValueError("expected x_* columns followed by a final y column")
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows, dtype=float)
    return LogRegModel(X=data[:, :-1], y=data[:, -1], prior_w_var=prior_w_var, prior_b_var=prior_b_var)
