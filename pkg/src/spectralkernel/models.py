"""Parametric spectral densities.

Every model factors as ``S(w) = w**(-alpha) * g(w)`` with ``g`` smooth and
bounded near the origin; ``g`` is called the regular part. Models are
immutable; use :meth:`SpectralModel.with_params` to get a modified copy.
"""

from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .errors import InvalidArgumentError, NonIntegrableTailError, SingularityError

__all__ = [
    "TailLaw",
    "SpectralModel",
    "Matern",
    "SingularMatern",
    "GeneralizedMatern",
    "OscillatoryMatern",
    "ChebyshevExponential",
    "ExponentialTest",
    "UserDefined",
    "MODEL_KINDS",
    "make_model",
    "evaluate_sdf",
    "evaluate_sdf_regular",
    "sdf_param_gradient",
    "tail_law",
    "fit_tail",
    "normalize_amplitude",
]


@dataclass(frozen=True)
class TailLaw:
    """Power-law description ``S(w) ~ c * w**(-beta)`` valid for ``w >= omega_min``."""

    c: float
    beta: float
    omega_min: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidArgumentError(f"tail constant must be positive, got {self.c}")
        if not self.beta > 1:
            raise NonIntegrableTailError(f"tail exponent must exceed 1, got {self.beta}")


def fit_tail(func, lo, hi, points=64):
    """Least-squares fit of ``log|f| = log c - beta log w`` on a geometric grid.

    Returns ``(c, beta)`` without validating beta; returns None when the
    samples contain zeros or non-finite values.
    """
    w = np.geomspace(lo, hi, points)
    f = np.abs(np.asarray(func(w), dtype=float))
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        return None
    lw = np.log(w)
    lf = np.log(f)
    slope, intercept = np.polyfit(lw, lf, 1)
    return float(np.exp(intercept)), float(-slope)


def _as_freq(omega):
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("frequencies must be finite and non-negative")
    return w


def _xlogx_safe(power, w):
    """w**power * log(w), with the value 0 at w = 0 (power > 0)."""
    out = np.zeros_like(w)
    pos = w > 0
    out[pos] = w[pos] ** power * np.log(w[pos])
    return out


class SpectralModel:
    """Base class. Subclasses define ``kind``, ``param_names`` and the regular part."""

    kind = "abstract"
    param_names = ()
    # parameters that must stay strictly positive when fitting
    positive_params = ()
    unit_interval_params = ()

    def __init__(self, **params):
        missing = [p for p in self.param_names if p not in params]
        extra = [p for p in params if p not in self.param_names]
        if missing:
            raise InvalidArgumentError(f"{self.kind}: missing parameters {missing}")
        if extra:
            raise InvalidArgumentError(f"{self.kind}: unknown parameters {extra}")
        vals = {}
        for k in self.param_names:
            v = float(params[k])
            if not np.isfinite(v):
                raise InvalidArgumentError(f"{self.kind}: parameter {k} must be finite")
            vals[k] = v
        self._params = MappingProxyType(vals)
        self._validate()

    # -- interface ---------------------------------------------------------
    @property
    def params(self):
        return self._params

    @property
    def alpha(self):
        return self._params.get("alpha", 0.0)

    def theta(self):
        return np.array([self._params[k] for k in self.param_names])

    def with_params(self, **updates):
        p = dict(self._params)
        p.update(updates)
        return type(self)(**p)

    def with_theta(self, theta):
        return self.with_params(**dict(zip(self.param_names, map(float, theta))))

    def regular(self, w):
        raise NotImplementedError

    def regular_slope(self, w):
        """Derivative of the regular part with respect to frequency."""
        raise NotImplementedError

    def regular_gradient(self, w):
        """Dict of partial derivatives of the regular part (alpha excluded)."""
        raise NotImplementedError

    def tail(self):
        """Analytic :class:`TailLaw` or None when the tail must be fitted."""
        return None

    def scale_hint(self):
        return max(self._params.get("rho", 1.0), 1.0)

    def _validate(self):
        pass

    # -- derived -----------------------------------------------------------
    def density(self, w):
        w = _as_freq(w)
        a = self.alpha
        if a == 0:
            return self.regular(w)
        if np.any(w == 0):
            raise SingularityError(f"{self.kind}: density is infinite at omega = 0 (alpha = {a})")
        return w ** (-a) * self.regular(w)

    def gradient(self, w):
        """Array of shape (n_params, len(w)) with dS/dtheta_j, rows in param_names order."""
        w = np.atleast_1d(_as_freq(w))
        a = self.alpha
        if a > 0 and np.any(w == 0):
            raise SingularityError(f"{self.kind}: gradient undefined at omega = 0 (alpha = {a})")
        sing = w ** (-a) if a > 0 else 1.0
        reg = self.regular_gradient(w)
        rows = []
        for k in self.param_names:
            if k == "alpha":
                rows.append(-np.log(w) * sing * self.regular(w))
            else:
                rows.append(sing * reg[k])
        return np.array(rows)

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self._params.items())
        return f"{type(self).__name__}({inner})"

    def __eq__(self, other):
        return type(self) is type(other) and dict(self._params) == dict(other._params)

    def __hash__(self):
        return hash((type(self).__name__, tuple(self._params.items())))


def _check_common(model):
    p = model.params
    if "rho" in p and not p["rho"] > 0:
        raise InvalidArgumentError(f"{model.kind}: rho must be > 0, got {p['rho']}")
    if "nu" in p and not p["nu"] > 0:
        raise InvalidArgumentError(f"{model.kind}: nu must be > 0, got {p['nu']}")
    if "alpha" in p and not 0 <= p["alpha"] < 1:
        raise InvalidArgumentError(f"{model.kind}: alpha must satisfy 0 <= alpha < 1, got {p['alpha']}")
    if "phi" in p and p["phi"] == 0:
        raise InvalidArgumentError(f"{model.kind}: phi must be nonzero")


class Matern(SpectralModel):
    """``phi^2 (rho^2 + w^2)^(-nu - 1/2)``."""

    kind = "matern"
    param_names = ("phi", "rho", "nu")
    positive_params = ("phi", "rho", "nu")

    def _validate(self):
        _check_common(self)

    def regular(self, w):
        p = self._params
        return p["phi"] ** 2 * (p["rho"] ** 2 + np.asarray(w, float) ** 2) ** (-p["nu"] - 0.5)

    def regular_slope(self, w):
        p = self._params
        w = np.asarray(w, float)
        return -(2 * p["nu"] + 1) * w * self.regular(w) / (p["rho"] ** 2 + w * w)

    def regular_gradient(self, w):
        p = self._params
        w = np.asarray(w, float)
        base = p["rho"] ** 2 + w * w
        s = self.regular(w)
        return {
            "phi": 2 * s / p["phi"],
            "rho": -(2 * p["nu"] + 1) * p["rho"] * s / base,
            "nu": -np.log(base) * s,
        }

    def tail(self):
        p = self._params
        return TailLaw(p["phi"] ** 2, 2 * p["nu"] + 1 + self.alpha)


class SingularMatern(Matern):
    """``phi^2 w^(-alpha) (rho^2 + w^2)^(-nu - 1/2)`` with long memory for alpha > 0."""

    kind = "singular_matern"
    param_names = ("phi", "rho", "nu", "alpha")
    positive_params = ("phi", "rho", "nu")
    unit_interval_params = ("alpha",)


class GeneralizedMatern(SpectralModel):
    """``phi^2 (lambda + (1 - lambda) w^gamma) (rho^2 + w^tau)^(-nu - 1/2)``."""

    kind = "generalized_matern"
    param_names = ("phi", "rho", "nu", "lambda", "gamma", "tau")
    positive_params = ("phi", "rho", "nu", "tau")
    unit_interval_params = ("lambda",)

    def _validate(self):
        _check_common(self)
        p = self._params
        if not 0 <= p["lambda"] <= 1:
            raise InvalidArgumentError(f"generalized_matern: lambda must lie in [0, 1], got {p['lambda']}")
        if not 0 < p["tau"] <= 2:
            raise InvalidArgumentError(f"generalized_matern: tau must lie in (0, 2], got {p['tau']}")
        if p["gamma"] < 0:
            raise InvalidArgumentError(f"generalized_matern: gamma must be >= 0, got {p['gamma']}")
        if not p["tau"] * (p["nu"] + 0.5) - p["gamma"] > 1:
            raise InvalidArgumentError(
                "generalized_matern: requires tau*(nu + 1/2) - gamma > 1 for an integrable tail"
            )

    def _parts(self, w):
        p = self._params
        w = np.asarray(w, float)
        wg = w ** p["gamma"]
        amp = p["lambda"] + (1 - p["lambda"]) * wg
        base = p["rho"] ** 2 + w ** p["tau"]
        return w, wg, amp, base

    def regular(self, w):
        p = self._params
        _, _, amp, base = self._parts(w)
        return p["phi"] ** 2 * amp * base ** (-p["nu"] - 0.5)

    def regular_slope(self, w):
        p = self._params
        w, wg, amp, base = self._parts(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            d_amp = (1 - p["lambda"]) * p["gamma"] * w ** (p["gamma"] - 1) if p["gamma"] else 0.0
            d_base = p["tau"] * w ** (p["tau"] - 1)
        pw = base ** (-p["nu"] - 0.5)
        return p["phi"] ** 2 * (d_amp * pw - (p["nu"] + 0.5) * amp * pw * d_base / base)

    def regular_gradient(self, w):
        p = self._params
        w, wg, amp, base = self._parts(w)
        pw = base ** (-p["nu"] - 0.5)
        s = p["phi"] ** 2 * amp * pw
        return {
            "phi": 2 * s / p["phi"],
            "rho": -(2 * p["nu"] + 1) * p["rho"] * s / base,
            "nu": -np.log(base) * s,
            "lambda": p["phi"] ** 2 * (1 - wg) * pw,
            "gamma": p["phi"] ** 2 * (1 - p["lambda"]) * _xlogx_safe(p["gamma"], w) * pw,
            "tau": -(p["nu"] + 0.5) * _xlogx_safe(p["tau"], w) * s / base,
        }

    def tail(self):
        p = self._params
        if p["lambda"] < 1 and p["gamma"] > 0:
            return TailLaw((1 - p["lambda"]) * p["phi"] ** 2, p["tau"] * (p["nu"] + 0.5) - p["gamma"])
        return TailLaw(p["phi"] ** 2, p["tau"] * (p["nu"] + 0.5))


class OscillatoryMatern(SpectralModel):
    """Matern density times ``1 - exp(-lambda w) sin(gamma w)``."""

    kind = "oscillatory_matern"
    param_names = ("phi", "rho", "nu", "lambda", "gamma")
    positive_params = ("phi", "rho", "nu")

    def _validate(self):
        _check_common(self)
        p = self._params
        if p["lambda"] < 0:
            raise InvalidArgumentError(f"oscillatory_matern: lambda must be >= 0, got {p['lambda']}")
        if p["lambda"] == 0 and p["gamma"] != 0:
            raise InvalidArgumentError("oscillatory_matern: lambda = 0 with gamma != 0 makes the density vanish")

    def _parts(self, w):
        p = self._params
        w = np.asarray(w, float)
        mat = p["phi"] ** 2 * (p["rho"] ** 2 + w * w) ** (-p["nu"] - 0.5)
        damp = np.exp(-p["lambda"] * w)
        return w, mat, damp

    def regular(self, w):
        p = self._params
        w, mat, damp = self._parts(w)
        return mat * (1 - damp * np.sin(p["gamma"] * w))

    def regular_slope(self, w):
        p = self._params
        w, mat, damp = self._parts(w)
        osc = 1 - damp * np.sin(p["gamma"] * w)
        d_osc = damp * (p["lambda"] * np.sin(p["gamma"] * w) - p["gamma"] * np.cos(p["gamma"] * w))
        d_mat = -(2 * p["nu"] + 1) * w * mat / (p["rho"] ** 2 + w * w)
        return d_mat * osc + mat * d_osc

    def regular_gradient(self, w):
        p = self._params
        w, mat, damp = self._parts(w)
        base = p["rho"] ** 2 + w * w
        s = mat * (1 - damp * np.sin(p["gamma"] * w))
        return {
            "phi": 2 * s / p["phi"],
            "rho": -(2 * p["nu"] + 1) * p["rho"] * s / base,
            "nu": -np.log(base) * s,
            "lambda": mat * w * damp * np.sin(p["gamma"] * w),
            "gamma": -mat * w * damp * np.cos(p["gamma"] * w),
        }

    def tail(self):
        p = self._params
        return TailLaw(p["phi"] ** 2, 2 * p["nu"] + 1)


class ChebyshevExponential(SpectralModel):
    """``phi^2 w^(-alpha) exp(-lambda w + sum_k c_k T_k((w - rho)/(w + rho)))``.

    Coefficients are passed as ``c0, c1, ...``; the order is inferred from
    the keys supplied.
    """

    kind = "chebyshev_exponential"
    positive_params = ("phi", "rho", "lambda")
    unit_interval_params = ("alpha",)

    def __init__(self, **params):
        coeffs = sorted((k for k in params if k.startswith("c") and k[1:].isdigit()), key=lambda k: int(k[1:]))
        if [int(k[1:]) for k in coeffs] != list(range(len(coeffs))):
            raise InvalidArgumentError("chebyshev_exponential: coefficients must be c0, c1, ..., cK without gaps")
        self.param_names = ("phi", "rho", "alpha", "lambda") + tuple(coeffs)
        super().__init__(**params)

    def with_params(self, **updates):
        p = dict(self._params)
        p.update(updates)
        return ChebyshevExponential(**p)

    def _validate(self):
        _check_common(self)
        if not self._params["lambda"] > 0:
            raise InvalidArgumentError(
                "chebyshev_exponential: lambda must be > 0, otherwise the density is not integrable"
            )

    @property
    def coefficients(self):
        return np.array([self._params[k] for k in self.param_names[4:]])

    def _chebyshev(self, u):
        """Values and u-derivatives of T_0..T_K at u (three-term recurrence)."""
        n = self.coefficients.size
        ts = np.zeros((n,) + u.shape)
        ds = np.zeros((n,) + u.shape)
        if n:
            ts[0] = 1.0
        if n > 1:
            ts[1] = u
            ds[1] = 1.0
        for k in range(2, n):
            ts[k] = 2 * u * ts[k - 1] - ts[k - 2]
            ds[k] = 2 * ts[k - 1] + 2 * u * ds[k - 1] - ds[k - 2]
        return ts, ds

    def _parts(self, w):
        p = self._params
        w = np.asarray(w, float)
        u = (w - p["rho"]) / (w + p["rho"])
        ts, ds = self._chebyshev(np.atleast_1d(u))
        c = self.coefficients
        series = c @ ts if c.size else np.zeros_like(np.atleast_1d(u))
        dseries = c @ ds if c.size else np.zeros_like(np.atleast_1d(u))
        reg = p["phi"] ** 2 * np.exp(-p["lambda"] * w + series.reshape(np.shape(w)))
        return w, reg, ts, dseries.reshape(np.shape(w))

    def regular(self, w):
        return self._parts(w)[1]

    def regular_slope(self, w):
        p = self._params
        w, reg, _, dseries = self._parts(w)
        return reg * (-p["lambda"] + dseries * 2 * p["rho"] / (w + p["rho"]) ** 2)

    def regular_gradient(self, w):
        p = self._params
        w, reg, ts, dseries = self._parts(w)
        out = {
            "phi": 2 * reg / p["phi"],
            "rho": reg * dseries * (-2 * w / (w + p["rho"]) ** 2),
            "lambda": -w * reg,
        }
        for i, k in enumerate(self.param_names[4:]):
            out[k] = ts[i].reshape(np.shape(w)) * reg
        return out


class ExponentialTest(SpectralModel):
    """``phi^2 w^(-alpha) exp(-w)``; its kernel has a closed form."""

    kind = "exponential_test"
    param_names = ("phi", "alpha")
    positive_params = ("phi",)
    unit_interval_params = ("alpha",)

    def _validate(self):
        _check_common(self)

    def regular(self, w):
        return self._params["phi"] ** 2 * np.exp(-np.asarray(w, float))

    def regular_slope(self, w):
        return -self.regular(w)

    def regular_gradient(self, w):
        return {"phi": 2 * self.regular(w) / self._params["phi"]}


class UserDefined(SpectralModel):
    """Density supplied as a callback ``density(w, params) -> array``.

    Parameters
    ----------
    density : callable
        Full density including any ``w**(-alpha)`` factor.
    params : dict
        Named parameters passed to the callbacks.
    alpha : float
        Singularity exponent at the origin.
    gradient : callable, optional
        ``gradient(w, params) -> dict`` of partial derivatives of the full
        density. Central differences are used when absent.
    tail : TailLaw, optional
        Analytic tail; fitted on the fly when absent.
    regular : callable, optional
        ``regular(w, params)`` returning ``w**alpha * density``; needed only
        when the regular part must be evaluated at ``w = 0``.
    """

    kind = "user_defined"

    def __init__(self, density, params=None, alpha=0.0, gradient=None, tail=None, regular=None):
        self._density = density
        self._gradient = gradient
        self._tail = tail
        self._regular = regular
        params = dict(params or {})
        self._alpha = float(alpha)
        if not 0 <= self._alpha < 1:
            raise InvalidArgumentError(f"user_defined: alpha must satisfy 0 <= alpha < 1, got {alpha}")
        self.param_names = tuple(params)
        self.positive_params = tuple(k for k in ("phi", "rho", "nu") if k in params)
        super().__init__(**params)

    @property
    def alpha(self):
        return self._alpha

    def with_params(self, **updates):
        p = dict(self._params)
        p.update(updates)
        return UserDefined(self._density, p, self._alpha, self._gradient, self._tail, self._regular)

    def regular(self, w):
        w = np.asarray(w, float)
        if self._regular is not None:
            return np.asarray(self._regular(w, dict(self._params)), float)
        if self._alpha == 0:
            return np.asarray(self._density(w, dict(self._params)), float)
        if np.any(w == 0):
            raise SingularityError("user_defined: supply a regular callback to evaluate at omega = 0")
        return w**self._alpha * np.asarray(self._density(w, dict(self._params)), float)

    def regular_slope(self, w):
        w = np.asarray(w, float)
        h = 1e-6 * np.maximum(w, 1e-3)
        lo = np.maximum(w - h, 0.5 * w)
        return (self.regular(w + h) - self.regular(lo)) / (w + h - lo)

    def _fd(self, w, name, f):
        v = self._params[name]
        step = 1e-6 * max(1.0, abs(v))
        up = self.with_params(**{name: v + step})
        dn = self.with_params(**{name: v - step})
        return (f(up, w) - f(dn, w)) / (2 * step)

    def regular_gradient(self, w):
        w = np.asarray(w, float)
        if self._gradient is not None:
            full = self._gradient(w, dict(self._params))
            scale = w**self._alpha if self._alpha else 1.0
            return {k: scale * np.asarray(full[k], float) for k in self.param_names}
        return {k: self._fd(w, k, lambda m, x: m.regular(x)) for k in self.param_names}

    def gradient(self, w):
        w = np.atleast_1d(_as_freq(w))
        if self._gradient is not None:
            full = self._gradient(w, dict(self._params))
            return np.array([np.asarray(full[k], float) for k in self.param_names])
        return np.array([self._fd(w, k, lambda m, x: m.density(x)) for k in self.param_names])

    def tail(self):
        return self._tail


MODEL_KINDS = {
    cls.kind: cls
    for cls in (Matern, SingularMatern, GeneralizedMatern, OscillatoryMatern, ChebyshevExponential, ExponentialTest)
}


def make_model(kind, params):
    """Construct a catalog model from its kind name and a parameter dict."""
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise InvalidArgumentError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}") from None
    return cls(**params)


def evaluate_sdf(model, omega):
    """Full density ``S(omega)`` including the singular factor."""
    return model.density(omega)


def evaluate_sdf_regular(model, omega):
    """``omega**alpha * S(omega)``, continuous at the origin."""
    return model.regular(_as_freq(omega))


def sdf_param_gradient(model, omega):
    """Partial derivatives of S with respect to each parameter, in ``param_names`` order."""
    return model.gradient(omega)


def tail_law(model, frontier=None):
    """Tail power law of ``model``.

    Analytic when the model declares one; otherwise a least-squares fit over
    the decade ``[frontier/10, frontier]`` (default frontier ``1e3 * max(rho, 1)``).
    """
    law = model.tail()
    if law is not None:
        return law
    if frontier is None:
        frontier = 1e3 * model.scale_hint()
    fit = fit_tail(model.density, frontier / 10, frontier)
    if fit is None:
        raise NonIntegrableTailError("tail fit failed: density vanishes or is not finite on the fit window")
    c, beta = fit
    if beta <= 1:
        raise NonIntegrableTailError(f"fitted tail exponent {beta:.6g} <= 1: density is not integrable")
    return TailLaw(c, beta, frontier / 10)


def normalize_amplitude(model, tol=1e-12):
    """Rescale ``phi`` so that ``K(0) = 2 * int_0^inf S = 1``."""
    from .engine import EvaluationRequest, evaluate_kernel

    if "phi" not in model.params:
        raise InvalidArgumentError(f"{model.kind}: normalization needs a 'phi' parameter")
    res = evaluate_kernel(EvaluationRequest(model, [0.0], tol=tol, m=256))
    k0 = float(res.values[0])
    return model.with_params(phi=model.params["phi"] / np.sqrt(k0))
