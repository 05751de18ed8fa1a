"""Projected-gradient machinery shared by the optimization routines.

Two building blocks:

* `apg_minimize` — accelerated projected gradient (FISTA-style momentum with
  backtracking and adaptive restart) over any set with a Euclidean projection.
* `augmented_lagrangian` — equality-constrained minimization over the state
  set, with Born-probability constraints handled by multiplier updates and
  an escalating quadratic penalty.

Everything works on raw complex Hermitian ndarrays for speed; validated
wrapper types are only constructed at module boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .qcore import project_to_simplex


class SolverFailure(RuntimeError):
    """An iterative solve did not reach its target accuracy."""

    def __init__(self, message: str, grad_norm: float = np.nan,
                 residual: float = np.nan):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.residual = residual


class InfeasibleConstraints(RuntimeError):
    """Constraint residual could not be driven below tolerance."""


def project_state(x: np.ndarray) -> np.ndarray:
    """Frobenius projection onto {rho >= 0, tr rho = 1} (raw-array version)."""
    x = 0.5 * (x + x.conj().T)
    evals, vecs = np.linalg.eigh(x)
    w = project_to_simplex(evals)
    return (vecs * w) @ vecs.conj().T


def project_psd(x: np.ndarray) -> np.ndarray:
    """Projection onto the PSD cone (no trace constraint)."""
    x = 0.5 * (x + x.conj().T)
    evals, vecs = np.linalg.eigh(x)
    w = np.clip(evals, 0.0, None)
    return (vecs * w) @ vecs.conj().T


def _hs_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a.conj() * b).real)


class BornConstraints:
    """Stacked Born-rule equality constraints diag(U^dag rho U) = p."""

    def __init__(self, unitaries: Sequence[np.ndarray],
                 targets: Sequence[np.ndarray]):
        if len(unitaries) != len(targets):
            raise ValueError("one target vector per basis required")
        self.stack = np.stack([np.asarray(u, dtype=complex)
                               for u in unitaries])
        self.targets = np.concatenate([np.asarray(p, dtype=float)
                                       for p in targets])
        self.dim = self.stack.shape[1]
        self.n_bases = self.stack.shape[0]
        self._op_norm: float | None = None

    @property
    def unitaries(self) -> list:
        return list(self.stack)

    def residual(self, rho: np.ndarray) -> np.ndarray:
        """Concatenated diag(U^dag rho U) - p over all bases."""
        w = np.matmul(rho, self.stack)
        probs = np.einsum("kji,kji->ki", self.stack.conj(), w).real
        return probs.ravel() - self.targets

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        """Adjoint map: sum_k U_k diag(g_k) U_k^dag (Hermitian)."""
        b = self.stack * g.reshape(self.n_bases, 1, self.dim)
        return np.matmul(b, self.stack.conj().transpose(0, 2, 1)).sum(axis=0)

    def overlaps(self, v: np.ndarray) -> np.ndarray:
        """|<u_i|v>|^2 against every constraint vector, in target order."""
        return (np.abs(np.einsum("kji,j->ki",
                                 self.stack.conj(), v)) ** 2).ravel()

    def projector_rows(self) -> np.ndarray:
        """Constraint projectors flattened to rows, in target order."""
        projs = np.einsum("kia,kja->kaij", self.stack, self.stack.conj())
        return projs.reshape(-1, self.dim * self.dim)

    def vectors(self) -> np.ndarray:
        """All constraint vectors as rows, in target order."""
        return self.stack.transpose(0, 2, 1).reshape(-1, self.dim)

    def op_norm(self) -> float:
        """Largest eigenvalue of A A*, the squared operator norm of the map.

        The Gram matrix has entries |<u_i^k|u_j^l>|^2; at most n_bases (each
        single-basis block is an orthogonal projection).
        """
        if self._op_norm is None:
            overlaps = np.einsum("kai,laj->kilj", self.stack.conj(),
                                 self.stack, optimize=True)
            gram = (np.abs(overlaps) ** 2).reshape(self.n_bases * self.dim,
                                                   self.n_bases * self.dim)
            self._op_norm = float(np.linalg.eigvalsh(gram)[-1])
        return self._op_norm


class Rank1Constraints:
    """Equality constraints <v_i| rho |v_i> = p_i for arbitrary vectors.

    Same interface as `BornConstraints` without the orthonormal-basis
    structure. Used after support reduction, where basis vectors compressed
    onto the data-certified support are no longer orthonormal.
    """

    def __init__(self, vectors: np.ndarray, targets: np.ndarray):
        self.vecs = np.asarray(vectors, dtype=complex)
        self.targets = np.asarray(targets, dtype=float)
        if self.vecs.shape[0] != self.targets.size:
            raise ValueError("one target per constraint vector required")
        self.dim = self.vecs.shape[1]
        self._op_norm: float | None = None

    @property
    def n_bases(self) -> int:
        return max(1, -(-self.vecs.shape[0] // self.dim))

    def residual(self, rho: np.ndarray) -> np.ndarray:
        w = self.vecs.conj() @ rho
        return np.einsum("ni,ni->n", w, self.vecs).real - self.targets

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        return (self.vecs.T * g) @ self.vecs.conj()

    def overlaps(self, v: np.ndarray) -> np.ndarray:
        return np.abs(self.vecs.conj() @ v) ** 2

    def projector_rows(self) -> np.ndarray:
        return np.einsum("ni,nj->nij", self.vecs,
                         self.vecs.conj()).reshape(-1, self.dim * self.dim)

    def vectors(self) -> np.ndarray:
        return self.vecs

    def op_norm(self) -> float:
        if self._op_norm is None:
            gram = np.abs(self.vecs.conj() @ self.vecs.T) ** 2
            self._op_norm = float(np.linalg.eigvalsh(gram)[-1])
        return self._op_norm


class AffineSlice:
    """Real-embedded affine geometry of a stack of Born constraints.

    Hermitian matrices are flattened to real vectors (real part, imaginary
    part); the constraint rows live in that 2d^2-dimensional space. One SVD
    yields the row-space basis, the minimum-norm solution, and cheap exact
    projections onto the affine solution set.
    """

    def __init__(self, cons):
        d = cons.dim
        rows = cons.projector_rows()
        a = np.hstack([rows.real, rows.imag])
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        rank = int(np.sum(s > s[0] * 1e-12))
        self.dim = d
        self.row_basis = vt[:rank]
        self.left = u[:, :rank]
        self.sing = s[:rank]
        self.particular = self.row_basis.T @ (
            (self.left.T @ cons.targets) / self.sing)
        self.pinned = rank == d * d

    def to_vec(self, m: np.ndarray) -> np.ndarray:
        return np.concatenate([m.real.ravel(), m.imag.ravel()])

    def to_mat(self, v: np.ndarray) -> np.ndarray:
        d = self.dim
        m = v[:d * d].reshape(d, d) + 1j * v[d * d:].reshape(d, d)
        return 0.5 * (m + m.conj().T)

    def project(self, m: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the affine solution set."""
        v = self.to_vec(m)
        return self.to_mat(v - self.row_basis.T @ (self.row_basis @ v)
                           + self.particular)

    def solution(self) -> np.ndarray:
        """Minimum-norm Hermitian solution of the equalities."""
        return self.to_mat(self.particular)

    def multipliers(self, w: np.ndarray) -> np.ndarray:
        """Least-squares y with A*(y) ~ w, mapping a matrix-space dual
        variable back to per-outcome constraint multipliers."""
        return self.left @ ((self.row_basis @ self.to_vec(w)) / self.sing)


@dataclass
class AdmmResult:
    x: np.ndarray
    u: np.ndarray
    pen: float
    residual: float
    n_iter: int
    converged: bool

    @property
    def dual_matrix(self) -> np.ndarray:
        """Scaled consensus multiplier; its row-space component is A*(y)."""
        return self.pen * self.u


def admm_extremize(zmat: np.ndarray, affine: AffineSlice,
                   constraints: BornConstraints,
                   x0: np.ndarray | None = None,
                   u0: np.ndarray | None = None,
                   pen: float = 3.0,
                   tol: float = 1e-9,
                   max_iter: int = 40000) -> AdmmResult:
    """Maximize tr(z x) over the state set intersected with the affine slice.

    Consensus ADMM: one copy lives on the spectraplex, the other on the
    affine set, both with closed-form projections. The penalty is rebalanced
    when primal and dual residuals drift apart. `dual_matrix` holds the
    scaled consensus multiplier pen*u, whose row-space component equals
    A*(y) at the constraint multipliers y.
    """
    d = affine.dim
    x2 = affine.solution() if x0 is None else x0
    u = np.zeros((d, d), dtype=complex) if u0 is None else u0.copy()
    check = 50
    for it in range(1, max_iter + 1):
        x1 = project_state(x2 - u + zmat / pen)
        x2_new = affine.project(x1 + u)
        r_pri = float(np.linalg.norm(x1 - x2_new))
        s_dual = pen * float(np.linalg.norm(x2_new - x2))
        x2 = x2_new
        u = u + x1 - x2
        if it % check == 0:
            if r_pri < tol and s_dual < tol:
                break
            if r_pri > 10.0 * s_dual:
                pen *= 2.0
                u *= 0.5
            elif s_dual > 10.0 * r_pri:
                pen *= 0.5
                u *= 2.0
    # x1 is the PSD trace-one copy; report its Born violation as the residual
    resid = float(np.max(np.abs(constraints.residual(x1))))
    return AdmmResult(x1, u, pen, resid, it,
                      r_pri < tol and s_dual < tol)


def alternating_projection(x0: np.ndarray, affine: AffineSlice,
                           constraints: BornConstraints,
                           tol: float = 1e-8,
                           max_iter: int = 20000) -> tuple:
    """Von Neumann alternating projections onto state set and affine slice.

    Settles feasibility when first-order solvers stall on sets that touch
    the positive-semidefinite boundary (no interior point). Returns the
    PSD trace-one iterate and its worst Born violation.
    """
    x = x0
    best_x, best_res = x0, float(np.max(np.abs(constraints.residual(x0))))
    for it in range(1, max_iter + 1):
        x = project_state(affine.project(x))
        if it % 25 == 0 or it == max_iter:
            res = float(np.max(np.abs(constraints.residual(x))))
            if res < best_res:
                best_x, best_res = x, res
            if res < tol:
                break
    return best_x, best_res


@dataclass
class ApgResult:
    x: np.ndarray
    value: float
    grad_norm: float
    n_iter: int
    converged: bool


def apg_minimize(value_grad: Callable[[np.ndarray], tuple],
                 x0: np.ndarray,
                 project: Callable[[np.ndarray], np.ndarray] = project_state,
                 gtol: float = 1e-9,
                 ftol: float = 0.0,
                 max_iter: int = 20000,
                 lipschitz0: float = 1.0,
                 fixed_lipschitz: bool = False) -> ApgResult:
    """Minimize a smooth function over a projectable convex set.

    `value_grad(x)` returns (f(x), grad f(x)) with a Hermitian gradient.
    With `fixed_lipschitz` the step 1/lipschitz0 is trusted outright (use
    when the curvature bound is exact, e.g. quadratic penalties); otherwise
    the step is backtracked against the majorization. Momentum restarts on
    the gradient test of O'Donoghue and Candes. Stops when the composite
    gradient-mapping norm drops below `gtol`, or when the objective
    stagnates (improvement below `ftol` per check window).
    """
    x = project(x0)
    x_prev = x
    L = lipschitz0
    t = 1.0
    n_check = 0
    f_window = np.inf
    f_x = np.inf
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        y = x + beta * (x - x_prev)
        f_y, g_y = value_grad(y)
        if fixed_lipschitz:
            x_new = project(y - g_y / L)
        else:
            # backtracking on the majorization at y
            for _ in range(60):
                x_new = project(y - g_y / L)
                diff = x_new - y
                f_new = value_grad(x_new)[0]
                quad = (f_y + _hs_inner(g_y, diff)
                        + 0.5 * L * np.sum(np.abs(diff) ** 2))
                if f_new <= quad + 1e-14 * max(1.0, abs(f_y)):
                    break
                L *= 2.0
            f_x = f_new
        if _hs_inner(g_y, x_new - x) > 0.0:  # momentum overshoot
            t_next = 1.0
        x_prev, x = x, x_new
        t = t_next
        if not fixed_lipschitz:
            L = max(L * 0.9, 1e-8)
        n_check += 1
        if n_check >= 10 or it == max_iter:
            n_check = 0
            f_c, g_c = value_grad(x)
            step = project(x - g_c / L) - x
            grad_norm = L * float(np.linalg.norm(step))
            f_x = f_c
            if grad_norm <= gtol:
                return ApgResult(x, f_c, grad_norm, it, True)
            if ftol > 0.0 and f_window - f_c <= ftol * max(1.0, abs(f_c)):
                return ApgResult(x, f_c, grad_norm, it, True)
            f_window = f_c
    return ApgResult(x, f_x, grad_norm, max_iter, False)


def spg_minimize(value_grad: Callable[[np.ndarray], tuple],
                 x0: np.ndarray,
                 project: Callable[[np.ndarray], np.ndarray] = project_state,
                 gtol: float = 1e-9,
                 max_iter: int = 2000,
                 memory: int = 10) -> ApgResult:
    """Spectral projected gradient over a projectable convex set.

    Barzilai-Borwein step lengths with the nonmonotone line search of
    Birgin, Martinez and Raydan. Unlike the accelerated method this makes
    no convexity assumption, which suits penalized concave objectives;
    the BB steps adapt to local curvature instead of a global Lipschitz
    bound. Stops when the unit-step gradient mapping drops below `gtol`.
    """
    x = project(x0)
    f, g = value_grad(x)
    hist = [f]
    alpha = 1.0 / max(1.0, float(np.linalg.norm(g)))
    for it in range(1, max_iter + 1):
        gm = x - project(x - g)
        if float(np.linalg.norm(gm)) <= gtol:
            return ApgResult(x, f, float(np.linalg.norm(gm)), it, True)
        d = project(x - alpha * g) - x
        dg = _hs_inner(g, d)
        if dg > -1e-18:
            d, dg = -gm, _hs_inner(g, -gm)
            if dg > -1e-18:
                return ApgResult(x, f, float(np.linalg.norm(gm)), it, True)
        lam = 1.0
        f_ref = max(hist)
        for _ in range(40):
            x_new = x + lam * d
            f_new, g_new = value_grad(x_new)
            if f_new <= f_ref + 1e-4 * lam * dg:
                break
            lam *= 0.3
        s = x_new - x
        y_ = g_new - g
        sy = _hs_inner(s, y_)
        alpha = float(np.clip(np.sum(np.abs(s) ** 2) / sy, 1e-10, 1e10)) \
            if sy > 0 else 1e10
        x, f, g = x_new, f_new, g_new
        hist.append(f)
        if len(hist) > memory:
            hist.pop(0)
    gm = x - project(x - g)
    return ApgResult(x, f, float(np.linalg.norm(gm)), max_iter, False)


@dataclass
class AlResult:
    x: np.ndarray
    multipliers: np.ndarray
    residual: float
    bound: float          # Lagrangian value: lower bound on the constrained min
    value: float          # raw objective at x
    n_outer: int
    converged: bool


def augmented_lagrangian(value_grad: Callable[[np.ndarray], tuple],
                         constraints: BornConstraints,
                         x0: np.ndarray,
                         project: Callable[[np.ndarray], np.ndarray] = project_state,
                         ctol: float = 1e-8,
                         gtol: float = 1e-9,
                         mu0: float = 2.0,
                         mu_growth: float = 10.0,
                         mu_max: float = 1e12,
                         max_outer: int = 25,
                         inner_iter: int = 3000,
                         y0: np.ndarray | None = None,
                         curvature: float = 0.0,
                         fixed_lipschitz: bool = True,
                         inner_solver: str = "apg") -> AlResult:
    """Minimize f over the projectable set subject to Born equalities.

    Each outer iteration minimizes f + y.c + (mu/2)||c||^2 over the set with
    APG, then updates multipliers; mu escalates when the residual stalls.
    `curvature` bounds the Hessian norm of f itself (0 for linear f); with
    `fixed_lipschitz` the inner solver uses the exact penalty curvature
    mu * ||A||^2 + curvature instead of backtracking (disable for objectives
    with unbounded curvature such as the von Neumann entropy). The returned
    `bound` is the augmented-Lagrangian value at the inner optimum, which
    converges to the constrained minimum (strong duality holds: affine
    equality constraints over a compact convex domain).
    """
    x = project(x0)
    y = np.zeros_like(constraints.targets) if y0 is None else y0.copy()
    mu = mu0
    res_prev = np.inf
    bound = -np.inf
    value = np.nan
    for outer in range(1, max_outer + 1):

        def al_value_grad(z, _y=y, _mu=mu):
            f, g = value_grad(z)
            c = constraints.residual(z)
            coeff = _y + _mu * c
            val = f + float(c @ _y) + 0.5 * _mu * float(c @ c)
            grad = g + constraints.adjoint(coeff)
            return val, grad

        if inner_solver == "spg":
            inner = spg_minimize(al_value_grad, x, project=project,
                                 gtol=max(gtol, 1e-12), max_iter=inner_iter)
        else:
            if fixed_lipschitz:
                lip0 = 1.01 * mu * constraints.op_norm() + curvature
            else:
                lip0 = mu * constraints.n_bases + 1.0
            inner = apg_minimize(al_value_grad, x, project=project,
                                 gtol=max(gtol, 1e-12), ftol=1e-14,
                                 max_iter=inner_iter, lipschitz0=lip0,
                                 fixed_lipschitz=fixed_lipschitz)
        x = inner.x
        c = constraints.residual(x)
        res = float(np.max(np.abs(c)))
        value = value_grad(x)[0]
        bound = inner.value
        y = y + mu * c
        if res <= ctol:
            return AlResult(x, y, res, bound, value, outer, True)
        if res > 0.25 * res_prev:
            mu = min(mu * mu_growth, mu_max)
        res_prev = res
    return AlResult(x, y, res, bound, value, max_outer, False)
