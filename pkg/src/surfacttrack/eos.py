"""Surface-tension equations of state and their regularization.

Supported laws for the surface tension ``gamma`` as a function of the
surfactant concentration ``r``:

* ``constant``:  gamma(r) = gamma0
* ``linear``:    gamma(r) = gamma0 * (1 - beta*r)
* ``langmuir``:  gamma(r) = gamma0 * (1 + beta*psi_inf*log(1 - r/psi_inf))

Each law comes with a convex energy density ``F`` satisfying
``gamma = F - r F'`` and ``gamma' = -r F''``.  Since ``F'`` is singular
at the origin, a quadratic extension below the threshold ``eps`` yields
the regularized pair ``(F_eps, gamma_eps)`` that keeps those relations
valid on all of ``r < psi_inf``.
"""

from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("constant", "linear", "langmuir")


@dataclass(frozen=True)
class EosModel:
    """Equation of state with regularization threshold ``eps``."""

    variant: str = "constant"
    gamma0: float = 1.0
    beta: float = 0.0
    psi_inf: float = field(default=np.inf)
    eps: float = 1e-5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown eos variant {self.variant!r}")
        if self.gamma0 <= 0.0:
            raise ValueError("gamma0 must be positive")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.variant == "langmuir" and not np.isfinite(self.psi_inf):
            raise ValueError("langmuir equation of state requires finite psi_inf")
        if self.psi_inf <= 0.0:
            raise ValueError("psi_inf must be positive")
        if self.variant == "constant" and self.beta != 0.0:
            raise ValueError("constant eos has beta = 0")

    @property
    def is_constant(self):
        return self.variant == "constant" or self.beta == 0.0


def _check_range(model, r):
    r = np.asarray(r, dtype=float)
    if np.any(r >= model.psi_inf):
        raise ValueError(
            "concentration reaches psi_inf = %g; model leaves the admissible range"
            % model.psi_inf
        )
    return r


def gamma(model, r):
    """Unregularized surface tension gamma(r)."""
    r = _check_range(model, r)
    if model.is_constant:
        return np.full_like(r, model.gamma0)
    if model.variant == "linear":
        return model.gamma0 * (1.0 - model.beta * r)
    return model.gamma0 * (
        1.0 + model.beta * model.psi_inf * np.log1p(-r / model.psi_inf)
    )


def _f_raw(model, r):
    # energy density F for r > 0
    if model.is_constant:
        return np.full_like(r, model.gamma0)
    if model.variant == "linear":
        return model.gamma0 * (1.0 + model.beta * r * (np.log(r) - 1.0))
    y = model.psi_inf
    return model.gamma0 * (
        1.0 + model.beta * (r * np.log(r / (y - r)) + y * np.log((y - r) / y))
    )


def _fp_raw(model, r):
    if model.is_constant:
        return np.zeros_like(r)
    if model.variant == "linear":
        return model.gamma0 * model.beta * np.log(r)
    return model.gamma0 * model.beta * np.log(r / (model.psi_inf - r))


def _fpp_raw(model, r):
    if model.is_constant:
        return np.zeros_like(r)
    if model.variant == "linear":
        return model.gamma0 * model.beta / r
    y = model.psi_inf
    return model.gamma0 * model.beta * y / (r * (y - r))


def _regularized(model, r, fn_above, fn_below):
    r = _check_range(model, r)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = np.empty_like(r)
    lo = r <= model.eps
    if np.any(~lo):
        out[~lo] = fn_above(model, r[~lo])
    if np.any(lo):
        out[lo] = fn_below(model, r[lo])
    return out[0] if scalar else out


def f_eps(model, r):
    """Regularized energy density F_eps(r)."""
    e = model.eps

    def below(m, x):
        fe, fpe, fppe = _f_raw(m, np.array(e)), _fp_raw(m, np.array(e)), _fpp_raw(m, np.array(e))
        return fe + fpe * (x - e) + 0.5 * fppe * (x - e) ** 2

    return _regularized(model, r, _f_raw, below)


def fprime_eps(model, r):
    """Regularized F_eps'(r)."""
    e = model.eps

    def below(m, x):
        return _fp_raw(m, np.array(e)) + _fpp_raw(m, np.array(e)) * (x - e)

    return _regularized(model, r, _fp_raw, below)


def fsecond_eps(model, r):
    """Regularized F_eps''(r); constant below the threshold."""
    e = model.eps

    def below(m, x):
        return np.full_like(x, float(_fpp_raw(m, np.array(e))))

    return _regularized(model, r, _fpp_raw, below)


def gamma_eps(model, r):
    """Regularized surface tension; satisfies gamma_eps = F_eps - r F_eps'."""
    e = model.eps

    def above(m, x):
        return gamma(m, x)

    def below(m, x):
        ge = gamma(m, np.array(e))
        fppe = _fpp_raw(m, np.array(e))
        return ge + 0.5 * fppe * (e * e - x * x)

    return _regularized(model, r, above, below)


def gamma_eps_prime(model, r):
    """d/dr of the regularized surface tension, equal to -r * F_eps''(r)."""
    r = np.asarray(r, dtype=float)
    return -r * fsecond_eps(model, r)


def psi_star_edge(model, a, b):
    """Edge value used by the tangential-flux correction of the transport step.

    Returns ``-(gamma_eps(b) - gamma_eps(a)) / (F_eps'(b) - F_eps'(a))``
    when the denominator is nonzero and the arithmetic mean otherwise.
    The first branch makes the discrete chain rule
    ``psi_star * (F_eps'(b) - F_eps'(a)) = -(gamma_eps(b) - gamma_eps(a))``
    exact, which is the summation-by-parts mechanism behind the energy
    stability of the scheme.
    """
    a_in = np.asarray(a, dtype=float)
    b_in = np.asarray(b, dtype=float)
    scalar = a_in.ndim == 0 and b_in.ndim == 0
    a_arr = np.atleast_1d(a_in)
    b_arr = np.atleast_1d(b_in)
    fa = np.atleast_1d(fprime_eps(model, a_arr))
    fb = np.atleast_1d(fprime_eps(model, b_arr))
    denom = fb - fa
    mid = (np.abs(a_arr - b_arr) < 1e-12) | (np.abs(denom) <= 1e-14)
    out = 0.5 * (a_arr + b_arr)
    if np.any(~mid):
        ga = np.atleast_1d(gamma_eps(model, a_arr))
        gb = np.atleast_1d(gamma_eps(model, b_arr))
        out = np.where(mid, out, -np.divide(gb - ga, np.where(mid, 1.0, denom)))
    return float(out[0]) if scalar else out


def from_config(variant, gamma0, beta, psi_inf=np.inf, eps=1e-5):
    """Build an EosModel from flat config values."""
    if variant == "constant":
        beta = 0.0
    return EosModel(variant=variant, gamma0=gamma0, beta=beta,
                    psi_inf=psi_inf, eps=eps)
