"""L1 discretisation of the Caputo derivative and the discrete Gronwall toolbox.

The weights follow the piecewise-linear interpolation of the Caputo integral
on a uniform grid ``t_n = n * tau``:

    a_i = (i + 1)^(1 - alpha) - i^(1 - alpha)

and the discrete operator

    D^alpha w^n = tau^(-alpha) / Gamma(2 - alpha) * sum_{j=1}^n a_{n-j} (w^j - w^{j-1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BWeights",
    "CoercivityReport",
    "GronwallPremise",
    "GronwallReport",
    "GronwallStep",
    "L1Kernel",
    "MittagLefflerError",
    "PSequence",
    "b_weights",
    "caputo_l1_apply",
    "coercivity_check",
    "gronwall_bound",
    "gronwall_check",
    "gronwall_equality_sequence",
    "l1_weights",
    "mittag_leffler",
    "p_identity_defects",
    "p_power_slack",
    "p_sequence",
    "p_sum_slack",
]

ML_RTOL = 1.0e-14
ML_MAX_TERMS = 10_000


class MittagLefflerError(ArithmeticError):
    """Raised when the Mittag-Leffler series does not converge within the term cap."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def l1_weights(alpha: float, n: int) -> np.ndarray:
    """Return the first ``n`` L1 weights ``a_0, ..., a_{n-1}``."""
    alpha = _check_alpha(alpha)
    if n < 1:
        raise ValueError(f"need at least one weight, got n={n}")

    i = np.arange(n, dtype=np.float64)
    # (i+1)^s - i^s = expm1(s*log1p(1/i)) * i^s avoids cancellation for large i
    s = 1.0 - alpha
    a = np.empty(n)
    a[0] = 1.0
    if n > 1:
        ii = i[1:]
        a[1:] = np.expm1(s * np.log1p(1.0 / ii)) * ii**s
    return a


@dataclass(frozen=True)
class L1Kernel:
    """Weights of the L1 scheme for a fixed order and step size.

    The table holds ``a_0 .. a_{n_max}`` and is shared read-only by every step
    of a run.
    """

    alpha: float
    tau: float
    n_max: int
    a: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        a = l1_weights(self.alpha, self.n_max + 1)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def from_final_time(cls, alpha: float, T: float, n_steps: int) -> L1Kernel:
        return cls(alpha=alpha, tau=T / n_steps, n_max=n_steps)

    @property
    def scale(self) -> float:
        """The prefactor ``tau^(-alpha) / Gamma(2 - alpha)``."""
        return self.tau ** (-self.alpha) / math.gamma(2.0 - self.alpha)

    def b(self, n: int) -> np.ndarray:
        return b_weights(self, n).b


@dataclass(frozen=True)
class BWeights:
    """Coefficients of the L1 operator written as a convolution on values.

    ``D^alpha w^n = scale * sum_{j=0}^n b[n - j] * w^j``.
    """

    n: int
    b: np.ndarray


def b_weights(kernel: L1Kernel, n: int) -> BWeights:
    if not 1 <= n <= kernel.n_max:
        raise IndexError(f"step index {n} outside [1, {kernel.n_max}]")

    a = kernel.a
    b = np.empty(n + 1)
    b[0] = a[0]
    b[1:n] = a[1:n] - a[0 : n - 1]
    b[n] = -a[n - 1]
    return BWeights(n=n, b=b)


def caputo_l1_apply(history, kernel: L1Kernel, n: int):
    """Apply the discrete Caputo operator at step ``n`` to ``history[0..n]``.

    ``history`` is a sequence of scalars or of equally shaped arrays; the
    result has the shape of one entry.
    """
    if n < 1:
        raise ValueError(f"step index must be >= 1, got {n}")
    if len(history) < n + 1:
        raise ValueError(f"history has {len(history)} entries, step {n} needs {n + 1}")
    if n > kernel.n_max:
        raise IndexError(f"step index {n} exceeds kernel n_max={kernel.n_max}")

    v = np.asarray(history[: n + 1], dtype=np.float64)
    diffs = np.diff(v, axis=0)
    # a_{n-j} pairs with the difference ending at t_j, j = 1..n
    weights = kernel.a[n - 1 :: -1]
    out = kernel.scale * np.tensordot(weights, diffs, axes=(0, 0))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PSequence:
    """Complementary kernel of the L1 weights.

    Satisfies ``sum_{j=k}^n p[n - j] * a[j - k] = 1`` for ``1 <= k <= n``.
    """

    alpha: float
    p: np.ndarray


def p_sequence(alpha: float, n: int) -> PSequence:
    """Compute ``p_0 .. p_n`` by the direct O(n^2) recurrence."""
    alpha = _check_alpha(alpha)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")

    a = l1_weights(alpha, n + 1)
    d = a[:-1] - a[1:]  # d[j-1] = a_{j-1} - a_j
    p = np.empty(n + 1)
    p[0] = 1.0
    for k in range(1, n + 1):
        # sum_{j=1}^k d_{j-1} p_{k-j}
        p[k] = np.dot(d[:k], p[k - 1 :: -1])
    return PSequence(alpha=alpha, p=p)


def p_identity_defects(seq: PSequence) -> np.ndarray:
    """``sum_{j=k}^n p_{n-j} a_{j-k} - 1`` for every ``1 <= k <= n <= len(p) - 1``.

    The sum depends on ``n - k`` only (the float operations coincide too), so
    entry ``i`` covers every pair with ``n - k = i``.
    """
    p = seq.p
    n = len(p) - 1
    a = l1_weights(seq.alpha, max(n, 1))
    return np.array([np.dot(p[i::-1], a[: i + 1]) for i in range(n)]) - 1.0


def p_sum_slack(seq: PSequence) -> np.ndarray:
    """``n^a / Gamma(1+a) - Gamma(2-a) sum_{j=1}^n p_{n-j}`` for ``n = 1..len(p)-1``."""
    alpha, p = seq.alpha, seq.p
    n = np.arange(1, len(p))
    lhs = math.gamma(2.0 - alpha) * np.cumsum(p[:-1])
    return n**alpha / math.gamma(1.0 + alpha) - lhs


def p_power_slack(seq: PSequence, m: int) -> np.ndarray:
    """Slack of the weighted bound with weights ``j^{(m-1) a}``, for ``n = 1..len(p)-1``.

    Right side ``n^{m a} / Gamma(1 + m a)`` minus left side
    ``Gamma(2-a) / Gamma(1 + (m-1) a) sum_{j=1}^{n-1} p_{n-j} j^{(m-1) a}``.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    alpha, p = seq.alpha, seq.p
    N = len(p) - 1
    j = np.arange(N + 1, dtype=np.float64)
    w = j ** ((m - 1) * alpha)
    w[0] = 0.0
    # the full convolution also holds the j = n term p_0 w_n
    conv = np.convolve(p, w)[1 : N + 1] - p[0] * w[1:]
    lhs = math.gamma(2.0 - alpha) / math.gamma(1.0 + (m - 1) * alpha) * conv
    return j[1:] ** (m * alpha) / math.gamma(1.0 + m * alpha) - lhs


def mittag_leffler(
    alpha: float,
    z: float,
    *,
    rtol: float = ML_RTOL,
    max_terms: int = ML_MAX_TERMS,
) -> float:
    r"""One-parameter Mittag-Leffler function :math:`E_\alpha(z)` by its power series.

    Summation stops once a term falls below ``rtol`` times the running sum.
    Terms are formed in log space so that neither ``z^k`` nor
    :math:`\Gamma(1 + k \alpha)` overflows before their ratio does.

    Raises
    ------
    MittagLefflerError
        If the series has not converged after ``max_terms`` terms.
    """
    alpha = float(alpha)
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")

    z = float(z)
    if z == 0.0:
        return 1.0

    if z > 0.0 and z ** (1.0 / alpha) > 709.0 - math.log(alpha):
        # E_alpha(z) ~ exp(z^(1/alpha)) / alpha exceeds the double range
        return math.inf

    logz = math.log(abs(z))
    sign = -1.0 if z < 0.0 else 1.0
    total = 1.0
    prev_log_term = 0.0
    for k in range(1, max_terms):
        log_term = k * logz - math.lgamma(1.0 + k * alpha)
        term = math.exp(log_term) * (sign**k)
        total += term
        # only stop on the decreasing tail, not before the terms peak
        if log_term < prev_log_term and abs(term) <= rtol * abs(total):
            return total
        prev_log_term = log_term

    raise MittagLefflerError(
        f"Mittag-Leffler series for alpha={alpha}, z={z} did not converge "
        f"in {max_terms} terms"
    )


@dataclass(frozen=True)
class GronwallPremise:
    """Sequences entering the discrete fractional Gronwall inequality.

    ``omega`` holds ``w^0 .. w^N`` and ``g`` holds ``g^1 .. g^N``.
    """

    omega: np.ndarray
    g: np.ndarray
    lambda1: float
    lambda2: float
    alpha: float
    tau: float

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=np.float64)
        g = np.asarray(self.g, dtype=np.float64)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "g", g)

        _check_alpha(self.alpha)
        if omega.ndim != 1 or g.ndim != 1:
            raise ValueError("omega and g must be one-dimensional")
        if len(g) != len(omega) - 1:
            raise ValueError(
                f"g must have len(omega) - 1 = {len(omega) - 1} entries, got {len(g)}"
            )
        if np.any(omega < 0.0) or np.any(g < 0.0):
            raise ValueError("omega and g must be nonnegative")
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")

    @property
    def n_steps(self) -> int:
        return len(self.omega) - 1

    @property
    def lam(self) -> float:
        """Effective rate ``lambda1 + lambda2 / (2 - 2^(1 - alpha))``."""
        return self.lambda1 + self.lambda2 / (2.0 - 2.0 ** (1.0 - self.alpha))

    def kernel(self) -> L1Kernel:
        return L1Kernel(alpha=self.alpha, tau=self.tau, n_max=max(self.n_steps, 1))


def gronwall_bound(premise: GronwallPremise, n: int) -> float:
    """Mittag-Leffler upper bound on ``w^n`` implied by the premise."""
    if not 1 <= n <= premise.n_steps:
        raise IndexError(f"step index {n} outside [1, {premise.n_steps}]")

    alpha = float(premise.alpha)
    tn_a = (n * premise.tau) ** alpha
    gmax = float(np.max(premise.g[:n])) if n > 0 else 0.0
    psi = float(premise.omega[0]) + tn_a / math.gamma(1.0 + alpha) * gmax
    return 2.0 * psi * mittag_leffler(alpha, 2.0 * premise.lam * tn_a)


@dataclass(frozen=True)
class GronwallStep:
    n: int
    lhs: float
    rhs: float
    premise_ok: bool
    bound: float
    bound_ok: bool | None
    slack: float | None


@dataclass(frozen=True)
class GronwallReport:
    steps: list[GronwallStep]

    @property
    def premise_holds(self) -> bool:
        return all(s.premise_ok for s in self.steps)

    @property
    def bound_holds(self) -> bool:
        return self.premise_holds and all(s.bound_ok for s in self.steps)

    @property
    def first_premise_failure(self) -> int | None:
        for s in self.steps:
            if not s.premise_ok:
                return s.n
        return None


def _within(lhs: float, rhs: float) -> bool:
    return lhs <= rhs + 1.0e-12 * (1.0 + abs(rhs))


def gronwall_check(premise: GronwallPremise) -> GronwallReport:
    """Evaluate the premise and the bound at every step.

    The bound is only judged while the premise has held at every step so
    far; after the first premise failure ``bound_ok`` and ``slack`` are None.
    """
    kernel = premise.kernel()
    omega, g = premise.omega, premise.g
    steps = []
    premise_so_far = True
    for n in range(1, premise.n_steps + 1):
        lhs = caputo_l1_apply(omega, kernel, n)
        rhs = premise.lambda1 * omega[n] + premise.lambda2 * omega[n - 1] + g[n - 1]
        ok = _within(lhs, rhs)
        premise_so_far = premise_so_far and ok

        bound = gronwall_bound(premise, n)
        if premise_so_far:
            bound_ok = _within(omega[n], bound)
            slack = bound - omega[n]
        else:
            bound_ok, slack = None, None
        steps.append(GronwallStep(n, lhs, rhs, ok, bound, bound_ok, slack))
    return GronwallReport(steps)


def gronwall_equality_sequence(
    omega0: float,
    g: np.ndarray,
    lambda1: float,
    lambda2: float,
    alpha: float,
    tau: float,
) -> np.ndarray:
    """Build ``w^0 .. w^N`` satisfying the Gronwall premise with equality.

    Each step solves ``D^alpha w^n = lambda1 w^n + lambda2 w^{n-1} + g^n``
    for ``w^n``.  Requires ``scale * a_0 > lambda1`` so the step is solvable
    with a nonnegative result.
    """
    g = np.asarray(g, dtype=np.float64)
    N = len(g)
    kernel = L1Kernel(alpha=alpha, tau=tau, n_max=max(N, 1))
    c = kernel.scale
    if not c > lambda1:
        raise ValueError(
            f"step too large: tau^-alpha/Gamma(2-alpha) = {c:.4g} <= lambda1 = {lambda1}"
        )
    a = kernel.a
    w = np.empty(N + 1)
    w[0] = omega0
    for n in range(1, N + 1):
        # c*(w^n - w^{n-1}) + c*sum_{j<n} a_{n-j}(w^j - w^{j-1}) = rhs
        hist = 0.0
        if n > 1:
            hist = np.dot(a[n - 1 : 0 : -1], np.diff(w[:n]))
        w[n] = (c * w[n - 1] - c * hist + lambda2 * w[n - 1] + g[n - 1]) / (c - lambda1)
    return w


@dataclass(frozen=True)
class CoercivityReport:
    lhs: np.ndarray
    rhs: np.ndarray
    ok: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.ok))


def coercivity_check(history, kernel: L1Kernel, mass=None) -> CoercivityReport:
    """Check ``<D^alpha e^n, e^n> >= 1/2 D^alpha |e^n|^2`` for ``n = 1..N``.

    The pairing is Euclidean unless a symmetric positive definite ``mass``
    matrix is given, in which case ``<x, y> = x^T M y``.
    """
    e = np.asarray(history, dtype=np.float64)
    if e.ndim == 1:
        e = e[:, None]
    if e.ndim != 2:
        raise ValueError("history must be a sequence of equal-length vectors")
    N = e.shape[0] - 1
    if N < 1:
        raise ValueError("history needs at least two entries")

    Me = e if mass is None else np.asarray((mass @ e.T).T)
    sq = np.einsum("ij,ij->i", e, Me)

    lhs = np.empty(N)
    rhs = np.empty(N)
    for n in range(1, N + 1):
        d = caputo_l1_apply(e, kernel, n)
        lhs[n - 1] = float(np.dot(d, Me[n]))
        rhs[n - 1] = 0.5 * caputo_l1_apply(sq, kernel, n)
    tol = 1.0e-12 * (1.0 + np.abs(lhs) + np.abs(rhs))
    return CoercivityReport(lhs=lhs, rhs=rhs, ok=lhs >= rhs - tol)
