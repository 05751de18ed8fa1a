"""Optimization over the data convex set.

The data convex set is the collection of density matrices whose Born
probabilities match the physical ML probabilities of every measured basis.
This module hosts the four optimizations run against it:

* `icc_probe` — max/min of a fixed linear witness (the completeness check);
* `min_entropy_state` — the adaptive step's concave entropy minimization;
* `cs_trace_min` — the compressed-sensing trace-minimization baseline;
* `nearest_product_basis` — product-basis projection for the local variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .qcore import (
    DensityMatrix,
    DimensionMismatchError,
    QubitStructure,
    VonNeumannBasis,
    eigenbasis,
    linear_entropy,
    numerical_rank,
    von_neumann_entropy,
)
from .solvers import (
    AffineSlice,
    BornConstraints,
    InfeasibleConstraints,
    Rank1Constraints,
    SolverFailure,
    admm_extremize,
    alternating_projection,
    apg_minimize,
    augmented_lagrangian,
    project_psd,
    project_state,
)

VN = "VN"
LINEAR = "LINEAR"

DEFAULT_IC_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ConvexSetSpec:
    """Born constraints defining the data convex set."""

    constraints: tuple  # of (VonNeumannBasis, probability vector)
    dim: int

    @staticmethod
    def from_pairs(pairs) -> "ConvexSetSpec":
        pairs = tuple((b, np.asarray(p, dtype=float)) for b, p in pairs)
        if not pairs:
            raise ValueError("at least one constraint required")
        d = pairs[0][0].dim
        for b, p in pairs:
            if b.dim != d or p.size != d:
                raise DimensionMismatchError("inconsistent constraint dims")
        return ConvexSetSpec(pairs, d)

    def born_constraints(self) -> BornConstraints:
        return BornConstraints([b.unitary for b, _ in self.constraints],
                               [p for _, p in self.constraints])


@dataclass(frozen=True)
class Witness:
    """A fixed full-rank witness state Z != 1/d for the linear probe."""

    Z: DensityMatrix

    def __post_init__(self):
        d = self.Z.dim
        if numerical_rank(self.Z) != d:
            raise ValueError("witness must be full rank")
        if np.linalg.norm(self.Z.data - np.eye(d) / d) <= 1e-6:
            raise ValueError("witness must differ from the maximally mixed state")


@dataclass
class IccResult:
    """Extrema of the witness function over the data convex set."""

    f_min: float
    f_max: float
    rho_min: DensityMatrix
    rho_max: DensityMatrix
    gap: float
    warm: dict = field(default_factory=dict, repr=False)


def _pad(y: np.ndarray, size: int) -> np.ndarray:
    if y.size == size:
        return y
    return np.concatenate([y, np.zeros(size - y.size)])


@dataclass
class _SupportReduction:
    """Problem compressed onto the support certified by zero outcomes."""

    support: np.ndarray     # d x m isometry onto the certified support
    cons: Rank1Constraints  # nonzero constraints compressed onto the support
    kept: np.ndarray        # boolean mask of the retained constraints


def _support_reduction(cons, ztol: float = 1e-12) -> _SupportReduction | None:
    """Facial reduction of the positive-semidefinite cone from zero outcomes.

    A zero Born probability forces every feasible state to be orthogonal to
    that basis vector, so the whole set lives on a face of the cone: the
    states supported on the orthogonal complement of the zero-outcome
    vectors. Compressing onto that support restores an interior point, where
    the first-order solvers and the dual bound are fast and tight; on the
    original formulation such boundary data stalls them. Exact zeros only
    arise from noiseless data, so the reduction is inactive on noisy runs.
    """
    zero = cons.targets <= ztol
    if not np.any(zero):
        return None
    vecs = cons.vectors()
    # row v of vt with zero singular value satisfies <u_z|v*> = 0 for every
    # zero-outcome vector u_z, so conjugate rows make the null space the
    # (sesquilinear) orthogonal complement
    _, s, vt = np.linalg.svd(vecs[zero].conj())
    rank = int(np.sum(s > s[0] * 1e-10)) if s.size else 0
    support = vt[rank:].conj().T
    m = support.shape[1]
    if m == cons.dim or m == 0:
        return None
    kept = ~zero
    compressed = vecs[kept] @ support.conj()
    return _SupportReduction(support, Rank1Constraints(
        compressed, cons.targets[kept]), kept)


def _scatter(y: np.ndarray, kept: np.ndarray) -> np.ndarray:
    """Spread reduced multipliers back over the full constraint list."""
    full = np.zeros(kept.size)
    full[kept] = y
    return full


_EPS = float(np.finfo(float).eps)


def _dual_bound(cons: BornConstraints, zmat: np.ndarray,
                starts: list, maxiter: int = 600) -> tuple:
    """Upper-bound max tr(rho zmat) over the data convex set.

    For any multiplier vector y, u(y) = lambda_max(zmat + A*(y)) - y.b is a
    valid upper bound (weak duality over the trace-one PSD cone), so the
    minimum over every point L-BFGS evaluates is itself a certified bound.
    This stays tight even when the set is a single state, where the dual
    optimum sits at infinity and primal-dual methods lose accuracy; a scaled
    sweep along the best direction chases that limit. Every value carries a
    margin for the eigensolver's backward error, which also caps how far the
    sweep can usefully push before rounding eats the gain.
    """
    b = cons.targets
    d = zmat.shape[0]
    best_val = np.inf
    best_y = np.zeros_like(b)
    best_vec = None

    def safe_value(evals: np.ndarray, y: np.ndarray) -> float:
        margin = 8.0 * _EPS * d * max(abs(evals[0]), abs(evals[-1]))
        return float(evals[-1] - y @ b + margin)

    def u(y):
        nonlocal best_val, best_y, best_vec
        m = zmat + cons.adjoint(y)
        evals, vecs = np.linalg.eigh(m)
        v = vecs[:, -1]
        g = cons.overlaps(v) - b
        val = safe_value(evals, y)
        if val < best_val:
            best_val, best_y, best_vec = val, y.copy(), v
        return float(evals[-1] - y @ b), g

    for y0 in starts:
        scipy_minimize(u, _pad(y0, b.size), jac=True, method="L-BFGS-B",
                       options=dict(maxiter=maxiter, ftol=1e-18, gtol=1e-12))
    # chase an unattained optimum by scaling the best direction outward;
    # best_y keeps the plain L-BFGS scale so it stays usable as a warm start
    direction = best_y
    swept_val = best_val
    worse = 0
    for s in np.geomspace(2.0, 1e6, 40):
        y = s * direction
        evals = np.linalg.eigvalsh(zmat + cons.adjoint(y))
        val = safe_value(evals, y)
        if val < swept_val:
            swept_val = val
            worse = 0
        else:
            worse += 1
            if worse >= 4:
                break
    return swept_val, best_y, best_vec


def icc_probe(set_spec: ConvexSetSpec, witness: Witness,
              warm: dict | None = None,
              ctol: float = 1e-8, gtol: float = 1e-9) -> IccResult:
    """Maximize and minimize tr(rho Z) over the data convex set.

    When the Born equalities alone have full rank, the minimum-norm solution
    is the unique member and both extrema coincide there without invoking
    positivity. Otherwise each extremal state comes from consensus ADMM
    splitting the spectraplex from the affine slice (both projections are
    closed form), with an augmented-Lagrangian fallback if ADMM stalls. The
    reported extrema are certified dual eigenvalue bounds, polished with
    L-BFGS from the multipliers recovered off the ADMM consensus dual.
    Since adding a basis only shrinks the set, earlier bounds stay valid and
    clamping makes the gap exactly non-increasing. `warm` carries iterates
    and multipliers between steps.
    """
    if witness.Z.dim != set_spec.dim:
        raise DimensionMismatchError("witness dimension differs from set")
    cons = set_spec.born_constraints()
    z = witness.Z.data
    warm = warm or {}
    n_full = cons.targets.size
    zero = np.zeros(n_full)

    # zero outcomes certify a support; compress onto it so the solvers keep
    # an interior point (otherwise boundary data stalls them)
    red = _support_reduction(cons)
    if red is None:
        kept = np.ones(n_full, dtype=bool)
        v_sup = None
        d_eff = set_spec.dim
    else:
        kept = red.kept
        v_sup = red.support
        cons = red.cons
        z = v_sup.conj().T @ z @ v_sup
        d_eff = v_sup.shape[1]

    def drop_mat(m):
        if m is None or v_sup is None:
            return m
        return v_sup.conj().T @ m @ v_sup

    def lift_mat(m):
        if m is None or v_sup is None:
            return m
        return v_sup @ m @ v_sup.conj().T

    def drop_y(y):
        return _pad(y, n_full)[kept]

    affine = AffineSlice(cons)
    if float(np.max(np.abs(cons.residual(affine.project(np.eye(
            d_eff, dtype=complex) / d_eff))))) > 1e-6:
        raise InfeasibleConstraints("Born equalities are jointly inconsistent")

    if affine.pinned:
        rho_star = affine.solution()
        f_min = f_max = float(np.sum(z.conj() * rho_star).real)
        x_min = x_max = rho_star
        u_min = u_max = None
        yd_min = drop_y(warm.get("yd_min", zero))
        yd_max = drop_y(warm.get("yd_max", zero))
    else:
        def side(key: str, zmat: np.ndarray):
            adm = admm_extremize(zmat, affine, cons,
                                 x0=drop_mat(warm.get(f"x_{key}")),
                                 u0=drop_mat(warm.get(f"u_{key}")),
                                 pen=warm.get(f"pen_{key}", 3.0))
            starts = []
            if adm.residual <= max(ctol, 1e-7):
                starts.append(-affine.multipliers(adm.dual_matrix))
                x = adm.x
            else:
                # ADMM stalled; fall back to an augmented Lagrangian, whose
                # multipliers seed the dual polish the same way
                sign = -1.0

                def value_grad(v):
                    return sign * float(np.sum(zmat.conj() * v).real), sign * zmat

                res = augmented_lagrangian(
                    value_grad, cons,
                    drop_mat(warm.get(f"x_{key}")) if f"x_{key}" in warm
                    else np.eye(d_eff, dtype=complex) / d_eff,
                    ctol=ctol, gtol=gtol)
                starts.append(-res.multipliers)
                x = res.x
                if res.residual > 1e-6:
                    # sets touching the positive-semidefinite boundary stall
                    # both solvers just above tolerance; plain alternating
                    # projections settle whether a feasible point exists
                    x, resid = alternating_projection(
                        x if res.residual < adm.residual else adm.x,
                        affine, cons)
                    if resid > 1e-4:
                        raise InfeasibleConstraints(
                            "Born constraints infeasible "
                            f"(residual {resid:.2e})")
            if f"yd_{key}" in warm:
                starts.append(drop_y(warm[f"yd_{key}"]))
            bound, yd, _ = _dual_bound(cons, zmat, starts)
            return bound, yd, x, adm

        f_max, yd_max, x_max, adm_max = side("max", z)
        neg_f_min, yd_min, x_min, adm_min = side("min", -z)
        f_min = -neg_f_min
        u_max, u_min = adm_max.u, adm_min.u
        warm["pen_max"], warm["pen_min"] = adm_max.pen, adm_min.pen
    # adding a basis only shrinks the set, so earlier bounds remain valid;
    # clamping makes the reported gap exactly non-increasing in k
    if "f_max" in warm:
        f_max = min(f_max, warm["f_max"])
        f_min = max(f_min, warm["f_min"])
    gap = max(f_max - f_min, 0.0)
    # warm entries are stored in the full space so the support may differ
    # (monotonically shrink) from one step to the next
    new_warm = {"x_min": lift_mat(x_min), "u_min": lift_mat(u_min),
                "x_max": lift_mat(x_max), "u_max": lift_mat(u_max),
                "yd_max": _scatter(yd_max, kept),
                "yd_min": _scatter(yd_min, kept),
                "pen_max": warm.get("pen_max", 3.0),
                "pen_min": warm.get("pen_min", 3.0),
                "f_max": f_max, "f_min": f_min}
    return IccResult(f_min=f_min, f_max=f_max,
                     rho_min=DensityMatrix(project_state(lift_mat(x_min))),
                     rho_max=DensityMatrix(project_state(lift_mat(x_max))),
                     gap=gap, warm=new_warm)


def s_cvx(current: IccResult, first: IccResult) -> float:
    """Normalized witness gap; 0 exactly when the dataset is complete.

    The cutoff on the first gap absorbs the bound accuracy (~1e-8): a first
    basis that already pins the state leaves only numerical residue, and the
    ratio of two residues is meaningless.
    """
    if first.gap <= 1e-7:
        return 0.0  # already pinned at the very first basis
    return float(np.clip(current.gap / first.gap, 0.0, 1.0))


def _vn_value_grad(x: np.ndarray):
    evals, vecs = np.linalg.eigh(0.5 * (x + x.conj().T))
    clamped = np.clip(evals, 1e-12, None)
    log = np.log(clamped)
    val = float(-np.sum(np.where(evals > 1e-14, evals * log, 0.0)))
    grad = -((vecs * log) @ vecs.conj().T + np.eye(x.shape[0]))
    return val, grad


def _linear_value_grad(x: np.ndarray):
    return float(1.0 - np.sum(np.abs(x) ** 2)), -2.0 * x


def feasible_point(cons: BornConstraints, x0: np.ndarray,
                   tol: float = 1e-9, max_iter: int = 8000) -> np.ndarray:
    """Least-squares projection of a state onto the data convex set."""
    def lsq(x):
        c = cons.residual(x)
        return 0.5 * float(c @ c), cons.adjoint(c)

    res = apg_minimize(lsq, x0, gtol=tol * 1e-1, max_iter=max_iter,
                       lipschitz0=1.01 * cons.op_norm(), fixed_lipschitz=True)
    return res.x


def min_entropy_state(set_spec: ConvexSetSpec, objective: str = VN,
                      starts=None,
                      rng: np.random.Generator | None = None,
                      n_random_starts: int = 1,
                      ctol: float = 1e-7, gtol: float = 1e-7,
                      warm: dict | None = None) -> DensityMatrix:
    """Local minimizer of the (von Neumann or linear) entropy over the set.

    Concave minimization is non-convex, so several restarts are run (caller
    supplies warm candidates such as the ML state and the witness maximizer;
    random feasible points fill in the rest) and the lowest-entropy converged
    result wins. A `warm` dict carrying the previous solve's minimizer and
    multipliers is used as an extra start and updated in place.
    """
    if objective not in (VN, LINEAR):
        raise ValueError(f"unknown entropy objective {objective!r}")
    value_grad = _vn_value_grad if objective == VN else _linear_value_grad
    cons = set_spec.born_constraints()
    n_full = cons.targets.size

    # the entropy of a state equals that of its compression onto any
    # subspace containing its support, so the reduced problem is equivalent
    red = _support_reduction(cons)
    if red is None:
        kept = np.ones(n_full, dtype=bool)
        v_sup = None
        d = set_spec.dim
    else:
        kept = red.kept
        v_sup = red.support
        cons = red.cons
        d = v_sup.shape[1]

    def drop_mat(m):
        if v_sup is None:
            return m
        return v_sup.conj().T @ m @ v_sup

    def lift_mat(m):
        if v_sup is None:
            return m
        return v_sup @ m @ v_sup.conj().T

    candidates = [(drop_mat(np.asarray(s, dtype=complex)), None)
                  for s in (starts or [])]
    if warm is not None and "x" in warm:
        candidates.insert(0, (drop_mat(warm["x"]),
                              _pad(warm["y"], n_full)[kept]))
    if not candidates:
        candidates.append((np.eye(d, dtype=complex) / d, None))
    if rng is not None:
        for _ in range(n_random_starts):
            a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            rho = a.conj().T @ a
            rho /= np.trace(rho).real
            candidates.append((feasible_point(cons, rho), None))

    def solve(x0, y0, ctol_, gtol_, inner, outer):
        return augmented_lagrangian(
            value_grad, cons, x0, ctol=ctol_, gtol=gtol_,
            mu0=10.0, inner_iter=inner, max_outer=outer, y0=y0,
            curvature=2.0 if objective == LINEAR else 0.0,
            fixed_lipschitz=objective == LINEAR)

    # screen the restarts cheaply; distinct basins differ in entropy by far
    # more than the screening accuracy, so only the winner needs polishing
    screened = []
    for x0, y0 in candidates:
        res = solve(x0, y0, 1e-4, 1e-4, 400, 8)
        screened.append(res)
    winner = min(screened, key=lambda r: r.value)
    res = solve(winner.x, winner.multipliers, ctol, gtol, 3000, 30)
    best, best_y = res.x, res.multipliers
    if not res.converged and res.residual > ctol:
        # sets hugging the positive-semidefinite boundary stall the
        # multiplier updates slightly above tolerance; a feasibility
        # refinement then moves the iterate by O(residual), leaving the
        # attained entropy unchanged to first order
        best, resid = alternating_projection(
            best, AffineSlice(cons), cons, tol=ctol)
        if resid > 100.0 * ctol:
            raise SolverFailure("entropy minimization did not converge",
                                residual=resid)
    if warm is not None:
        warm["x"] = lift_mat(best)
        warm["y"] = _scatter(best_y, kept)
    return DensityMatrix(project_state(lift_mat(best)))


def cs_trace_min(map_bases, nu: np.ndarray, eps: float = 0.0,
                 ctol: float = 1e-9) -> DensityMatrix:
    """Compressed-sensing baseline: minimize tr(rho) over rho >= 0 subject to
    the measured data lying within an eps-ball, then trace-renormalize."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    unitaries = [b.unitary for b in map_bases]
    d = unitaries[0].shape[0]
    nu = np.asarray(nu, dtype=float)
    k = len(unitaries)
    cons = BornConstraints(unitaries, [nu[i * d:(i + 1) * d] for i in range(k)])
    eye = np.eye(d, dtype=complex)
    x0 = eye / d

    if eps == 0.0:
        def value_grad(x):
            return float(np.trace(x).real), eye

        res = augmented_lagrangian(value_grad, cons, x0, project=project_psd,
                                   ctol=ctol, gtol=1e-10)
        if not res.converged:
            if res.residual > 1e-6:
                raise InfeasibleConstraints("empty data ball")
            raise SolverFailure("trace minimization did not converge",
                                residual=res.residual)
        x = res.x
    else:
        # scalar inequality ||c||^2 <= eps^2 via an augmented Lagrangian
        lam, mu = 0.0, 10.0
        x = x0
        for _ in range(40):
            def value_grad(z, _lam=lam, _mu=mu):
                c = cons.residual(z)
                g = float(c @ c) - eps ** 2
                active = max(0.0, _lam + _mu * g)
                val = float(np.trace(z).real) + (active ** 2 - _lam ** 2) / (2 * _mu)
                grad = eye + 2.0 * active * cons.adjoint(c)
                return val, grad

            inner = apg_minimize(value_grad, x, project=project_psd,
                                 gtol=1e-9, max_iter=4000,
                                 lipschitz0=mu * cons.n_bases + 1.0)
            x = inner.x
            c = cons.residual(x)
            g = float(c @ c) - eps ** 2
            lam = max(0.0, lam + mu * g)
            if g <= ctol and inner.converged:
                break
            mu *= 4.0
        else:
            raise SolverFailure("trace minimization (ball) did not converge")

    tr = float(np.trace(x).real)
    if tr < 1e-12:
        raise SolverFailure("trace-minimal solution has vanishing trace")
    return DensityMatrix(project_state(x / tr))


def _single_qubit_unitary(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -np.exp(1j * lam) * s],
                     [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]])


def product_unitary(angles: np.ndarray, n_qubits: int) -> np.ndarray:
    u = np.array([[1.0]], dtype=complex)
    for i in range(n_qubits):
        u = np.kron(u, _single_qubit_unitary(*angles[3 * i:3 * i + 3]))
    return u


def pinching_distance_sq(rho: np.ndarray, u: np.ndarray) -> float:
    """||rho - diag-part-of-rho-in-basis-u||_F^2."""
    q = np.einsum("ij,ik,kj->j", u.conj(), rho, u).real
    return float(np.sum(np.abs(rho) ** 2) - np.sum(q ** 2))


def _qubit_marginal(rho: np.ndarray, n_qubits: int, i: int) -> np.ndarray:
    a = 2 ** i
    b = 2 ** (n_qubits - i - 1)
    t = rho.reshape(a, 2, b, a, 2, b)
    return np.einsum("ajbakb->jk", t)


def _marginal_eigenbasis_angles(rho: np.ndarray, n_qubits: int) -> np.ndarray:
    """Start angles from the eigenbases of the single-qubit marginals.

    For a state whose eigenbasis is exactly a tensor product, the marginal
    eigenbases recover the factors (up to degeneracy), so this start already
    sits at the global optimum. The third angle per qubit is a pure column
    phase (invisible to the pinching objective) and is left at zero.
    """
    angles = np.zeros(3 * n_qubits)
    for i in range(n_qubits):
        m = _qubit_marginal(rho, n_qubits, i)
        _, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
        v0 = vecs[:, 1]  # leading eigenvector
        if abs(v0[0]) > 1e-12:
            v0 = v0 * (v0[0].conjugate() / abs(v0[0]))
            theta = np.arccos(np.clip(abs(v0[0]), 0.0, 1.0))
            phi = float(np.angle(v0[1])) if abs(v0[1]) > 1e-12 else 0.0
        else:
            theta, phi = np.pi / 2, 0.0
        angles[3 * i:3 * i + 2] = (theta, phi)
    return angles


def nearest_product_basis(rho_hat: DensityMatrix, structure: QubitStructure,
                          rng: np.random.Generator | None = None,
                          n_restarts: int = 5) -> VonNeumannBasis:
    """Tensor-product basis minimizing the pinching distance to rho_hat.

    Derivative-free simplex search over the 3n local-unitary angles, with a
    marginal-eigenbasis start plus random restarts.
    """
    if rho_hat.dim != structure.dim:
        raise DimensionMismatchError("state dimension does not match structure")
    n = structure.n_qubits
    rho = rho_hat.data
    if n == 1:
        return eigenbasis(rho_hat)

    def objective(angles):
        return pinching_distance_sq(rho, product_unitary(angles, n))

    starts = [_marginal_eigenbasis_angles(rho, n)]
    if rng is not None:
        for _ in range(max(0, n_restarts - 1)):
            s = np.empty(3 * n)
            s[0::3] = rng.uniform(0, np.pi / 2, n)
            s[1::3] = rng.uniform(0, 2 * np.pi, n)
            s[2::3] = rng.uniform(0, 2 * np.pi, n)
            starts.append(s)

    best_angles, best_val = None, np.inf
    for s in starts:
        val0 = objective(s)
        if val0 < 1e-16:  # already exactly product; skip the polish
            best_angles, best_val = s, val0
            break
        res = scipy_minimize(objective, s, method="Nelder-Mead",
                             options={"xatol": 1e-7, "fatol": 1e-14,
                                      "maxiter": 4000, "maxfev": 4000})
        if res.fun < best_val:
            best_angles, best_val = res.x, res.fun
    return VonNeumannBasis(product_unitary(best_angles, n))
