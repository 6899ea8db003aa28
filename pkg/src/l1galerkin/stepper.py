"""Linearised L1-Galerkin time stepping.

Three linearisations of the reaction term are provided:

``s1``
    lagged: ``f(U^{n-1})``, first order in time.
``s2``
    Newton: ``f(U^{n-1}) + f'(U^{n-1}) (U^n - U^{n-1})``.
``s3``
    extrapolated: ``f(2 U^{n-1} - U^{n-2})``, with a Newton step supplying the
    extrapolant at ``n = 1``.

All systems are solved on the free (non-Dirichlet) DOFs.  The full history of
solution vectors is kept because the L1 operator couples every step to all of
its predecessors.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .fracl1 import L1Kernel
from .problems import Problem
from .sparse import DEFAULT_TOL, LinearSolver, SolveReport

__all__ = [
    "RunResult",
    "SchemeId",
    "SolverFailure",
    "Stepper",
    "first_step_s3",
    "make_space",
    "run",
    "step_s1",
    "step_s2",
    "step_s3",
]

log = logging.getLogger(__name__)


class SchemeId(str, enum.Enum):
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"


class SolverFailure(RuntimeError):
    """A per-step linear solve did not converge."""

    def __init__(self, step: int, report: SolveReport):
        super().__init__(
            f"linear solve failed at step {step}: {report.iterations} iterations, "
            f"relative residual {report.residual:.3e}"
        )
        self.step = step
        self.report = report


@dataclass
class RunResult:
    scheme: SchemeId
    n_steps: int
    history: np.ndarray
    errors: np.ndarray | None = None
    reports: list[SolveReport] = field(default_factory=list, repr=False)

    @property
    def final_error(self) -> float:
        return float(self.errors[-1])

    @property
    def max_error(self) -> float:
        """Largest error over steps ``1..N`` (the initial datum is excluded)."""
        return float(np.max(self.errors[1:]))

    def error(self, metric: str) -> float:
        if metric == "final":
            return self.final_error
        if metric == "max":
            return self.max_error
        raise ValueError(f"unknown error metric {metric!r}")


class Stepper:
    """Operators shared by every step of one discretisation.

    Parameters
    ----------
    drift_mode : {"implicit", "explicit"}
        Where a first-order drift term goes: in the system matrix, or on the
        right-hand side at the scheme's linearisation point.  The explicit
        variant is unstable for the Fokker-Planck benchmark at moderate steps.
    solver : {"cg", "direct", "auto"}
        Linear solver; see :class:`~l1galerkin.sparse.LinearSolver`.
    """

    def __init__(
        self,
        space: fem.FemSpace,
        kernel: L1Kernel,
        problem: Problem,
        *,
        tol: float = DEFAULT_TOL,
        solver: str = "direct",
        drift_mode: str = "implicit",
    ):
        if drift_mode not in ("implicit", "explicit"):
            raise ValueError(f"unknown drift mode {drift_mode!r}")
        if problem.drift is not None and solver == "cg" and drift_mode == "implicit":
            # the drift matrix is not symmetric
            solver = "auto"

        self.space = space
        self.kernel = kernel
        self.problem = problem
        self.tol = tol
        self.solver = solver
        self.drift_mode = drift_mode

        free = space.free_dofs
        self.free = free
        self.M = fem.assemble_mass(space)[free][:, free].tocsr()
        self.A = fem.assemble_stiffness(space)[free][:, free].tocsr()
        self.C = None
        if problem.drift is not None:
            self.C = fem.assemble_convection(space, problem.drift)[free][:, free].tocsr()

        self.c_tau = kernel.scale
        self.c0 = self.c_tau * kernel.a[0]
        self.base = (self.c0 * self.M + self.A).tocsr()
        self._solvers: dict[bool, LinearSolver] = {}

    # {{{ helpers

    def full(self, Uf: np.ndarray) -> np.ndarray:
        U = np.zeros(self.space.n_dofs)
        U[self.free] = Uf
        return U

    @property
    def implicit_drift(self) -> bool:
        return self.C is not None and self.drift_mode == "implicit"

    def _solver(self, implicit_drift: bool) -> LinearSolver:
        if implicit_drift not in self._solvers:
            K = self.base - self.C if implicit_drift else self.base
            self._solvers[implicit_drift] = LinearSolver(K.tocsr(), self.solver, self.tol)
        return self._solvers[implicit_drift]

    def history_term(self, history, n: int) -> np.ndarray:
        """``-c_tau * M * sum_{j=0}^{n-1} b_{n-j} U^j`` on free DOFs."""
        b = self.kernel.b(n)
        H = np.asarray(history[:n])
        s = b[n:0:-1] @ H
        return -self.c_tau * (self.M @ s)

    def source(self, n: int) -> np.ndarray:
        t = n * self.kernel.tau
        g = self.problem.g
        return fem.assemble_load(self.space, lambda x: g(x, t))[self.free]

    def reaction(self, Uf: np.ndarray) -> np.ndarray:
        return fem.nonlinear_load(self.space, self.full(Uf), self.problem.f)[self.free]

    def jacobian(self, Uf: np.ndarray) -> sp.csr_matrix:
        """``(f'(u_h) phi_j, phi_i)`` on free DOFs."""
        uq, pts = self.space.evaluate(self.full(Uf))
        w = np.asarray(self.problem.f1(uq.ravel(), pts.reshape(-1, self.space.dim)))
        W = fem.assemble_weighted_mass(self.space, w.reshape(uq.shape))
        return W[self.free][:, self.free].tocsr()

    def _solve(self, n: int, solver_or_matrix, rhs: np.ndarray, x0: np.ndarray):
        if isinstance(solver_or_matrix, LinearSolver):
            solver = solver_or_matrix
        else:
            solver = LinearSolver(solver_or_matrix, self.solver, self.tol)
        x, report = solver.solve(rhs, x0=x0)
        if not report.converged:
            raise SolverFailure(n, report)
        return x, report

    # }}}

    # {{{ schemes

    def _explicit_step(self, history, n: int, lin_point: np.ndarray):
        rhs = self.history_term(history, n) + self.reaction(lin_point) + self.source(n)
        if self.C is not None and not self.implicit_drift:
            rhs += self.C @ lin_point
        return self._solve(n, self._solver(self.implicit_drift), rhs, history[n - 1])

    def _newton_step(self, history, n: int):
        Uprev = history[n - 1]
        W = self.jacobian(Uprev)
        rhs = self.history_term(history, n) + self.reaction(Uprev) - W @ Uprev + self.source(n)
        K = self.base - W
        if self.implicit_drift:
            K = K - self.C
        elif self.C is not None:
            rhs += self.C @ Uprev
        return self._solve(n, K.tocsr(), rhs, Uprev)

    def step_s1(self, history, n: int):
        return self._explicit_step(history, n, history[n - 1])

    def step_s2(self, history, n: int):
        return self._newton_step(history, n)

    def step_s3(self, history, n: int, extrapolant: np.ndarray | None = None):
        if extrapolant is None:
            if n < 2:
                raise ValueError("s3 needs two previous steps; use first_step_s3 at n=1")
            extrapolant = 2.0 * history[n - 1] - history[n - 2]
        return self._explicit_step(history, n, extrapolant)

    def first_step_s3(self, U0: np.ndarray):
        """Newton step for the extrapolant at ``n = 1``, then the s3 step with it.

        Returns ``(U_hat_1, U_1, reports)``.
        """
        history = [U0]
        Uhat, r1 = self._newton_step(history, 1)
        U1, r2 = self.step_s3(history, 1, extrapolant=Uhat)
        return Uhat, U1, [r1, r2]

    # }}}

    def run(self, scheme: SchemeId | str, n_steps: int | None = None, errors: bool = True) -> RunResult:
        scheme = SchemeId(scheme)
        N = self.kernel.n_max if n_steps is None else n_steps
        if N > self.kernel.n_max:
            raise ValueError(f"kernel only covers {self.kernel.n_max} steps, asked for {N}")

        space, problem = self.space, self.problem
        U0 = fem.interpolate_nodal(space, problem.u0)[self.free]
        H = np.zeros((N + 1, len(self.free)))
        H[0] = U0
        reports: list[SolveReport] = []

        for n in range(1, N + 1):
            if scheme is SchemeId.S1:
                Un, rep = self.step_s1(H, n)
                reports.append(rep)
            elif scheme is SchemeId.S2:
                Un, rep = self.step_s2(H, n)
                reports.append(rep)
            elif n == 1:
                _, Un, reps = self.first_step_s3(H[0])
                reports.extend(reps)
            else:
                Un, rep = self.step_s3(H, n)
                reports.append(rep)
            H[n] = Un

        full = np.zeros((N + 1, space.n_dofs))
        full[:, self.free] = H
        errs = None
        if errors:
            tau = self.kernel.tau
            ue = problem.u_exact
            errs = np.array(
                [fem.l2_error(space, full[n], lambda x, t=n * tau: ue(x, t)) for n in range(N + 1)]
            )
        return RunResult(scheme=scheme, n_steps=N, history=full, errors=errs, reports=reports)


def _stepper(space, kernel, problem, **kw) -> Stepper:
    return Stepper(space, kernel, problem, **kw)


def _free_history(space, history):
    return [np.asarray(U)[space.free_dofs] for U in history]


def step_s1(space, kernel, history, problem, n, **kw) -> np.ndarray:
    """One lagged step from full-DOF ``history[0..n-1]``; returns full ``U^n``."""
    st = _stepper(space, kernel, problem, **kw)
    Un, _ = st.step_s1(_free_history(space, history), n)
    return st.full(Un)


def step_s2(space, kernel, history, problem, n, **kw) -> np.ndarray:
    st = _stepper(space, kernel, problem, **kw)
    Un, _ = st.step_s2(_free_history(space, history), n)
    return st.full(Un)


def step_s3(space, kernel, history, problem, n, **kw) -> np.ndarray:
    st = _stepper(space, kernel, problem, **kw)
    Un, _ = st.step_s3(_free_history(space, history), n)
    return st.full(Un)


def first_step_s3(space, kernel, U0, problem, **kw) -> tuple[np.ndarray, np.ndarray]:
    st = _stepper(space, kernel, problem, **kw)
    Uhat, U1, _ = st.first_step_s3(np.asarray(U0)[space.free_dofs])
    return st.full(Uhat), st.full(U1)


def run(space, kernel, scheme, problem, N: int | None = None, **kw) -> RunResult:
    return Stepper(space, kernel, problem, **kw).run(scheme, N)


def make_space(problem: Problem, m: int, degree: int) -> fem.FemSpace:
    """Uniform mesh with ``m`` subdivisions per axis over the problem's domain."""
    from .mesh import interval_mesh, rect_tri_mesh

    if problem.dim == 1:
        (a, b), = problem.bounds
        mesh = interval_mesh(a, b, m)
    else:
        mesh = rect_tri_mesh(problem.bounds[0], problem.bounds[1], m)
    return fem.FemSpace(mesh, degree)
