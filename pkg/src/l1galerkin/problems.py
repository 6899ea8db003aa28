"""Manufactured-solution benchmarks.

Each problem has the form

    D^alpha u - Laplace(u) = b(x) . grad(u) + f(u, x) + g(x, t)

on a box with homogeneous Dirichlet data; ``g`` is derived by hand from the
chosen exact solution so the equation holds identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "PROBLEMS",
    "Problem",
    "caputo_power",
    "fisher_problem",
    "fokker_planck_problem",
    "get_problem",
    "huxley_problem",
]


def caputo_power(sigma: float, alpha: float, t):
    r"""Caputo derivative of ``t^sigma``: :math:`\Gamma(\sigma+1)/\Gamma(\sigma+1-\alpha) t^{\sigma-\alpha}`."""
    if sigma < 0.0:
        raise ValueError(f"exponent must be nonnegative, got {sigma}")
    t = np.asarray(t, dtype=np.float64)
    if sigma == 0.0:
        out = np.zeros_like(t)
    else:
        c = math.gamma(sigma + 1.0) / math.gamma(sigma + 1.0 - alpha)
        out = c * t ** (sigma - alpha)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Problem:
    """A manufactured problem with known solution.

    ``u_exact(x, t)``, ``g(x, t)`` take points of shape ``(n, dim)``;
    ``f(u, x)`` and ``f1(u, x)`` take values ``(n,)`` and points ``(n, dim)``.
    ``drift`` is the optional first-order coefficient ``b(x)``, returning
    ``(n, dim)`` vectors.
    """

    name: str
    dim: int
    bounds: tuple
    alpha: float
    T: float
    u_exact: Callable
    f: Callable
    f1: Callable
    g: Callable
    drift: Callable | None = None
    linear: bool = False
    lipschitz_note: str = ""
    description: str = ""

    def u0(self, x: np.ndarray) -> np.ndarray:
        return self.u_exact(x, 0.0)

    def at_time(self, field: Callable, t: float) -> Callable[[np.ndarray], np.ndarray]:
        return lambda x: field(x, t)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def huxley_problem(alpha: float) -> Problem:
    _check_alpha(alpha)

    def X(s):
        return (1.0 - s) * np.sin(s)

    def Xpp(s):
        return -2.0 * np.cos(s) - (1.0 - s) * np.sin(s)

    def u(x, t):
        return (1.0 + t**3) * X(x[:, 0]) * X(x[:, 1])

    def f(v, x=None):
        return v * (1.0 - v) * (v - 1.0)

    def f1(v, x=None):
        return -3.0 * v**2 + 4.0 * v - 1.0

    def g(x, t):
        sx, sy = X(x[:, 0]), X(x[:, 1])
        lap = (1.0 + t**3) * (Xpp(x[:, 0]) * sy + sx * Xpp(x[:, 1]))
        ue = (1.0 + t**3) * sx * sy
        return caputo_power(3.0, alpha, t) * sx * sy - lap - f(ue)

    return Problem(
        name="huxley2d",
        dim=2,
        bounds=((0.0, 1.0), (0.0, 1.0)),
        alpha=alpha,
        T=1.0,
        u_exact=u,
        f=f,
        f1=f1,
        g=g,
        lipschitz_note="cubic f is Lipschitz on bounded sets containing the solution range",
        description="2D Huxley equation, u = (1+t^3)(1-x)sin(x)(1-y)sin(y)",
    )


def fisher_problem(alpha: float, dim: int = 1) -> Problem:
    _check_alpha(alpha)
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")

    def S(x):
        return np.prod(np.sin(np.pi * x), axis=1)

    def u(x, t):
        return t**2 * S(x)

    def f(v, x=None):
        return v * (1.0 - v)

    def f1(v, x=None):
        return 1.0 - 2.0 * v

    def g(x, t):
        s = S(x)
        return caputo_power(2.0, alpha, t) * s + dim * np.pi**2 * t**2 * s - f(t**2 * s)

    return Problem(
        name=f"fisher{dim}d",
        dim=dim,
        bounds=((0.0, 1.0),) * dim,
        alpha=alpha,
        T=1.0,
        u_exact=u,
        f=f,
        f1=f1,
        g=g,
        lipschitz_note="logistic f is Lipschitz on bounded sets containing the solution range",
        description=f"{dim}D Fisher equation, u = t^2 prod sin(pi x_i)",
    )


def fokker_planck_problem(alpha: float) -> Problem:
    """Linear Fokker-Planck problem with potential ``exp(x)`` and unit friction.

    The drift ``exp(x) u_x`` lives in ``drift`` and the reaction ``exp(x) u``
    in the ``f`` slot, so the Newton scheme treats both exactly.
    """
    _check_alpha(alpha)
    ga = math.gamma(1.0 + alpha)

    def u(x, t):
        return (t**alpha + t**2) * np.sin(x[:, 0])

    def f(v, x):
        return np.exp(x[:, 0]) * v

    def f1(v, x):
        return np.exp(x[:, 0]) * np.ones_like(v)

    def drift(x):
        return np.exp(x[..., :1])

    def g(x, t):
        s = x[:, 0]
        # Caputo of t^alpha is the constant Gamma(1 + alpha)
        temporal = ga + caputo_power(2.0, alpha, t)
        return temporal * np.sin(s) + (t**alpha + t**2) * (
            np.sin(s) - np.exp(s) * np.cos(s) - np.exp(s) * np.sin(s)
        )

    return Problem(
        name="fokker-planck1d",
        dim=1,
        bounds=((0.0, math.pi),),
        alpha=alpha,
        T=1.0,
        u_exact=u,
        f=f,
        f1=f1,
        g=g,
        drift=drift,
        linear=True,
        lipschitz_note="linear reaction exp(x) u is globally Lipschitz with constant e^pi",
        description="1D Fokker-Planck equation, u = (t^alpha + t^2) sin(x), initial layer at t=0",
    )


PROBLEMS: dict[str, Callable[[float], Problem]] = {
    "huxley2d": huxley_problem,
    "fisher1d": lambda alpha: fisher_problem(alpha, 1),
    "fisher2d": lambda alpha: fisher_problem(alpha, 2),
    "fokker-planck1d": fokker_planck_problem,
}


def get_problem(name: str, alpha: float) -> Problem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(alpha)
