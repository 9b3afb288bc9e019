"""Gaussian-process likelihood machinery on top of the kernel engine.

Covariance matrices are assembled from a single engine call over the
distinct pairwise distances. The zero-mean Gaussian log-likelihood, its
gradient and the expected Fisher information are computed from one
Cholesky factorization, and a damped Fisher-scoring loop fits parameters.
"""

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .engine import (
    EvaluationRequest,
    evaluate_alpha_derivative,
    evaluate_kernel,
    evaluate_kernel_derivative,
)
from .errors import InvalidArgumentError, NotPositiveDefiniteError, SpectralKernelError

__all__ = [
    "Dataset",
    "FitReport",
    "pairwise_distances",
    "assemble_covariance",
    "assemble_covariance_derivative",
    "log_likelihood",
    "loglik_gradient",
    "expected_fisher",
    "fit_fisher_scoring",
    "sample_path",
    "min_eigenvalue",
]

log = logging.getLogger(__name__)

LOWER_BOUND = 1e-6


@dataclass(frozen=True)
class Dataset:
    """1-D locations, observations and an optional fixed nugget variance."""

    x: np.ndarray
    y: np.ndarray
    nugget: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.size == 0 or x.size != y.size:
            raise InvalidArgumentError(f"need matching non-empty x and y, got {x.size} and {y.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("locations and observations must be finite")
        if not self.nugget >= 0:
            raise InvalidArgumentError(f"nugget must be >= 0, got {self.nugget}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass
class FitReport:
    """Result of :func:`fit_fisher_scoring`.

    ``std`` holds implied standard deviations ``sqrt(diag(I^-1))`` and is
    None (with ``std_ok`` False) when the Fisher matrix is not numerically
    positive definite.
    """

    theta: dict
    nll: float
    fisher: np.ndarray
    std: dict
    std_ok: bool
    trace: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def to_dict(self):
        return {
            "theta": dict(self.theta),
            "nll": self.nll,
            "fisher": np.asarray(self.fisher).tolist(),
            "std": None if self.std is None else dict(self.std),
            "std_ok": self.std_ok,
            "converged": self.converged,
            "message": self.message,
            "trace": self.trace,
        }


# ---------------------------------------------------------------- assembly


def pairwise_distances(x):
    """Distinct pairwise distances (including 0) and the index map back to the matrix."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise InvalidArgumentError("locations must be finite and non-empty")
    # |x_i - x_j| is bitwise symmetric, so the matrix comes out exactly symmetric
    d = np.abs(x[:, None] - x[None, :])
    uniq, inv = np.unique(d, return_inverse=True)
    return uniq, inv.reshape(d.shape)


def _request(model, r, tol, engine_opts):
    return EvaluationRequest(model, r, tol=tol, **engine_opts)


def assemble_covariance(model, x, tol=1e-8, nugget=0.0, full_output=False, **engine_opts):
    """Covariance matrix ``K(|x_i - x_j|) + nugget * I`` from one engine call.

    Extra keyword arguments (``m``, ``max_panels``, ...) go to
    :class:`EvaluationRequest`. With ``full_output`` the engine result is
    returned as well.
    """
    if not nugget >= 0:
        raise InvalidArgumentError(f"nugget must be >= 0, got {nugget}")
    uniq, inv = pairwise_distances(x)
    res = evaluate_kernel(_request(model, uniq, tol, engine_opts))
    sigma = res.values[inv]
    sigma[np.diag_indices_from(sigma)] += nugget
    return (sigma, res) if full_output else sigma


def assemble_covariance_derivative(model, x, param, tol=1e-8, scale=None, **engine_opts):
    """Entrywise derivative of the covariance matrix with respect to ``param``."""
    uniq, inv = pairwise_distances(x)
    req = _request(model, uniq, tol, engine_opts)
    if param == "alpha":
        res = evaluate_alpha_derivative(req, scale=scale)
    else:
        res = evaluate_kernel_derivative(req, param, scale=scale)
    return res.values[inv]


# ---------------------------------------------------------------- likelihood


def _cholesky(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidArgumentError("covariance must be a square matrix")
    c, info = lapack.dpotrf(sigma, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(f"covariance is not positive definite (leading minor {info} fails)", info - 1)
    if info < 0:
        raise InvalidArgumentError("invalid covariance matrix")
    return c


def log_likelihood(sigma, y):
    """Zero-mean Gaussian log-likelihood and the lower Cholesky factor.

    Returns
    -------
    ll : float
        ``-(y' S^-1 y + log det S + N log 2 pi) / 2``.
    chol : ndarray
        Lower-triangular factor, for reuse.

    Examples
    --------
    >>> round(log_likelihood(np.eye(1), [0.0])[0], 7)
    -0.9189385
    """
    y = np.asarray(y, dtype=float).ravel()
    chol = _cholesky(sigma)
    if chol.shape[0] != y.size:
        raise InvalidArgumentError(f"covariance size {chol.shape[0]} does not match {y.size} observations")
    z = linalg.solve_triangular(chol, y, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    ll = -0.5 * (z @ z + logdet + y.size * math.log(2 * math.pi))
    return float(ll), chol


def _free_params(model, params):
    names = list(model.param_names if params is None else params)
    for p in names:
        if p not in model.param_names:
            raise InvalidArgumentError(f"{model.kind} has no parameter {p!r}")
    if model.alpha == 0 and "alpha" in names and "alpha" in model.param_names:
        # the alpha derivative only exists for alpha > 0
        names.remove("alpha")
    return names


def _likelihood_parts(model, x, y, tol, nugget, params, want, engine_opts):
    """Shared assembly for value, gradient and Fisher information."""
    sigma, res = assemble_covariance(model, x, tol, nugget, full_output=True, **engine_opts)
    ll, chol = log_likelihood(sigma, y)
    out = {"ll": ll, "sigma": sigma, "chol": chol}
    if not (want & {"grad", "fisher"}):
        return out
    derivs = [assemble_covariance_derivative(model, x, p, tol, scale=res.scale, **engine_opts) for p in params]
    factor = (chol, True)
    inv_d = [linalg.cho_solve(factor, d) for d in derivs]
    if "grad" in want:
        a = linalg.cho_solve(factor, np.asarray(y, float))
        out["grad"] = np.array([0.5 * (a @ d @ a - np.trace(s)) for d, s in zip(derivs, inv_d)])
    if "fisher" in want:
        k = len(params)
        fis = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                fis[i, j] = fis[j, i] = 0.5 * np.sum(inv_d[i] * inv_d[j].T)
        out["fisher"] = fis
    return out


def loglik_gradient(model, x, y, tol=1e-8, nugget=0.0, params=None, **engine_opts):
    """Gradient of the log-likelihood with respect to ``params`` (default: all).

    ``d ll / d theta_j = (y' S^-1 dS_j S^-1 y - tr(S^-1 dS_j)) / 2``.
    """
    names = _free_params(model, params)
    parts = _likelihood_parts(model, x, y, tol, nugget, names, {"grad"}, engine_opts)
    return parts["grad"]


def expected_fisher(model, x, tol=1e-8, nugget=0.0, params=None, **engine_opts):
    """``I_jk = tr(S^-1 dS_j S^-1 dS_k) / 2`` over ``params`` (default: all)."""
    names = _free_params(model, params)
    y = np.zeros(np.asarray(x).size)
    return _likelihood_parts(model, x, y, tol, nugget, names, {"fisher"}, engine_opts)["fisher"]


# ---------------------------------------------------------------- fitting


class _Transform:
    """Unconstrained coordinates: log for positive parameters, logit for unit-interval ones."""

    def __init__(self, model, names):
        self.names = names
        self.kind = []
        for p in names:
            if p in model.unit_interval_params:
                self.kind.append("logit")
            elif p in model.positive_params:
                self.kind.append("log")
            else:
                self.kind.append("id")

    def to_u(self, theta):
        u = []
        for k, t in zip(self.kind, theta):
            if k == "log":
                u.append(math.log(max(abs(t), LOWER_BOUND)))
            elif k == "logit":
                t = min(max(t, LOWER_BOUND), 1 - LOWER_BOUND)
                u.append(math.log(t / (1 - t)))
            else:
                u.append(t)
        return np.array(u)

    def to_theta(self, u):
        th = []
        for k, v in zip(self.kind, u):
            if k == "log":
                th.append(max(math.exp(min(v, 700.0)), LOWER_BOUND))
            elif k == "logit":
                th.append(min(max(1 / (1 + math.exp(-v)), 0.0), 1 - LOWER_BOUND))
            else:
                th.append(v)
        return np.array(th)

    def jacobian(self, theta):
        """d theta / d u at theta."""
        j = []
        for k, t in zip(self.kind, theta):
            if k == "log":
                j.append(t)
            elif k == "logit":
                j.append(t * (1 - t))
            else:
                j.append(1.0)
        return np.array(j)


def _fisher_std(fisher, names):
    fis = 0.5 * (fisher + fisher.T)
    w = np.linalg.eigvalsh(fis)
    if not w.min() > 1e-12 * max(w.max(), 1e-300):
        return None, False
    cov = np.linalg.inv(fis)
    return {p: float(math.sqrt(cov[i, i])) for i, p in enumerate(names)}, True


def fit_fisher_scoring(model, data, theta0=None, tol=1e-8, max_iter=50, params=None, **engine_opts):
    """Maximum likelihood by damped Fisher scoring.

    Iterates ``u <- u + s I_u^-1 grad_u`` in unconstrained coordinates
    (log for positive, logit for unit-interval parameters), halving ``s``
    until the log-likelihood does not decrease. Stops when the step norm
    falls to 1e-8, the gradient norm to ``1e-6 (1 + |ll|)``, or no step
    improves the likelihood.

    Parameters
    ----------
    model : SpectralModel
        Supplies the family and the values of parameters not being fitted.
    data : Dataset
    theta0 : dict, optional
        Starting values for the fitted parameters (default: the model's).
    params : sequence of str, optional
        Parameters to fit (default: all).

    Raises
    ------
    NotPositiveDefiniteError
        If the covariance at the starting point is not positive definite.
    """
    names = _free_params(model, params)
    if theta0:
        model = model.with_params(**{k: float(v) for k, v in theta0.items()})
    tr = _Transform(model, names)
    x, y, eta = data.x, data.y, data.nugget

    def at(u):
        return model.with_params(**dict(zip(names, tr.to_theta(u))))

    u = tr.to_u([model.params[p] for p in names])
    cur = at(u)
    parts = _likelihood_parts(cur, x, y, tol, eta, names, {"grad", "fisher"}, engine_opts)
    ll = parts["ll"]
    trace = [{"iter": 0, "nll": -ll, "theta": {p: float(cur.params[p]) for p in names}, "step": 1.0}]
    converged = False
    message = "iteration limit reached"
    for it in range(1, max_iter + 1):
        theta = np.array([cur.params[p] for p in names])
        jac = tr.jacobian(theta)
        g_u = parts["grad"] * jac
        f_u = parts["fisher"] * np.outer(jac, jac)
        if np.linalg.norm(g_u) <= 1e-6 * (1 + abs(ll)):
            converged, message = True, "gradient norm below threshold"
            break
        try:
            direction = linalg.solve(f_u, g_u, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            direction = np.linalg.lstsq(f_u, g_u, rcond=None)[0]
        s = 1.0
        accepted = False
        for _ in range(40):
            trial_u = u + s * direction
            try:
                trial = at(trial_u)
                t_ll = _likelihood_parts(trial, x, y, tol, eta, names, set(), engine_opts)["ll"]
            except (SpectralKernelError, ValueError, OverflowError):
                t_ll = -math.inf
            if t_ll >= ll:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            converged, message = True, "no ascent step found"
            break
        step = s * direction
        u = trial_u
        cur = trial
        parts = _likelihood_parts(cur, x, y, tol, eta, names, {"grad", "fisher"}, engine_opts)
        ll = parts["ll"]
        trace.append({"iter": it, "nll": -ll, "theta": {p: float(cur.params[p]) for p in names}, "step": s})
        log.info("fisher scoring iter %d: nll=%.12g step=%g", it, -ll, s)
        if np.linalg.norm(step) <= 1e-8:
            converged, message = True, "step norm below threshold"
            break
    if not converged:
        warnings.warn(f"fit_fisher_scoring: {message}; returning the best iterate", RuntimeWarning, stacklevel=2)
    std, ok = _fisher_std(parts["fisher"], names)
    return FitReport(
        theta={p: float(cur.params[p]) for p in names},
        nll=-ll,
        fisher=parts["fisher"],
        std=std,
        std_ok=ok,
        trace=trace,
        converged=converged,
        message=message,
    )


# ---------------------------------------------------------------- sampling


def sample_path(sigma, seed=None):
    """Draw ``L z`` with ``L`` the lower Cholesky factor and ``z ~ N(0, I)`` from ``seed``."""
    chol = _cholesky(sigma)
    z = np.random.default_rng(seed).standard_normal(chol.shape[0])
    return chol @ z


def min_eigenvalue(sigma):
    """Smallest eigenvalue of a symmetric matrix (LAPACK tridiagonal reduction + MRRR).

    Examples
    --------
    >>> min_eigenvalue(np.diag([3.0, 1.0, 2.0]))
    1.0
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidArgumentError("expected a square matrix")
    return float(linalg.eigvalsh(sigma, subset_by_index=[0, 0])[0])
