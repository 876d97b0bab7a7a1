"""Solvers for the reduced-dimension constrained phase-retrieval problem.

Four components:

* a majorize-minimize baseline whose inner step is a closed-form leading
  eigenvector update (the unconstrained problem);
* a primal-dual variant that prices the feedback inequalities with
  projected dual ascent around the same inner loop;
* an active-set builder that finds a small effective subset of the
  inequalities together with a point satisfying all of them, via a smooth
  max-penalty feasibility solve;
* a smoothed gradient descent ascent loop for the Lagrangian dual of the
  pruned problem, using only first-order updates.

All iterations operate on the reduced coefficient vector; reports carry the
reconstructed antenna-domain CSI and exhaustive violation statistics over
the full constraint set regardless of any pruning.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
import numpy as np

from .feedback import CprInstance
from .precoder import complex_gaussian


@dataclass
class SolverOptions:
    """Shared knobs; fields with value None are derived from the instance."""

    inner_tol: float = 1e-6
    inner_max_iters: int = 200
    outer_max_iters: int = 50
    dual_step: float | None = None        # None -> 0.1 / mean(q)
    violation_tol: float = 1e-8
    feas_tol: float = 1e-12
    feas_max_iters: int = 2000
    mecs_max_outer: int = 200
    sgda_p: float | None = None           # None -> 4 * lambda_max(sum_t q_t U_t*)
    sgda_s1: float | None = None          # None -> 1 / (2p)
    sgda_s2: float = 1e-2
    sgda_beta_avg: float = 0.9
    sgda_max_iters: int = 2000
    sgda_tol: float = 1e-7
    sgda_max_restarts: int = 5
    seed: int = 0
    trace: bool = False

    def __post_init__(self):
        if min(self.inner_tol, self.violation_tol, self.feas_tol, self.sgda_tol) <= 0:
            raise ValueError("tolerances must be > 0")
        if not 0 < self.sgda_beta_avg <= 1:
            raise ValueError("sgda_beta_avg must be in (0, 1]")


@dataclass
class SolverReport:
    g_star: np.ndarray
    h_star: np.ndarray
    objective: float
    inner_iterations: int
    outer_iterations: int
    violations_count: int
    violations_total: float
    wall_time_s: float
    mecs_size: int | None = None
    converged: bool = True
    restarts: int = 0
    trace: list = field(default_factory=list)


def write_trace_csv(report: SolverReport, path) -> None:
    """Per-iteration debug trace (iter, objective, violation_count)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "objective", "violation_count"])
        w.writerows(report.trace)


# --- shared numerics ---------------------------------------------------------

def _phase_fix(u: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    nz = np.flatnonzero(np.abs(u) > tol * np.abs(u).max())
    if nz.size:
        u = u * np.exp(-1j * np.angle(u[nz[0]]))
    return u


def power_method(r: np.ndarray, tol: float = 1e-12,
                 max_iters: int = 5000) -> tuple[float, np.ndarray, bool]:
    """Algebraically largest eigenpair of a Hermitian matrix.

    Shifted power iteration on R + c I with c = ||R||_1, which makes the
    target eigenvalue the dominant one; the eigenvector is phase-normalized
    so its first significant entry is real-positive.  Returns
    (lambda_max, u_max, converged).
    """
    r = np.asarray(r)
    r = (r + r.conj().T) / 2  # defensive symmetrization
    n = r.shape[0]
    if n == 1:
        return float(r[0, 0].real), np.ones(1, dtype=complex), True
    shift = float(np.max(np.sum(np.abs(r), axis=0)))
    a = r + shift * np.eye(n)
    v = np.ones(n, dtype=complex) + 1j * np.linspace(0.0, 0.5, n)
    v /= np.linalg.norm(v)
    converged = False
    for _ in range(max_iters):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw < 1e-300:
            break  # v is in the kernel of the shifted matrix
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v = w
            converged = True
            break
        v = w
    lam = float(np.real(np.vdot(v, r @ v)))
    return lam, _phase_fix(v), converged


class _VectorBank:
    """Measurement vectors flattened for fast quadratic-form evaluation.

    Stores the vectors of ``n_meas`` measurements (``n_vec`` vectors each,
    whose squared projections are summed) as a single (n_meas * n_vec, dim)
    matrix with a cached conjugate, so the per-iteration solver work reduces
    to a couple of BLAS products.
    """

    def __init__(self, vectors: np.ndarray):
        n, dim, n_vec = vectors.shape
        self.n_meas = n
        self.n_vec = n_vec
        self.mat = np.ascontiguousarray(
            vectors.transpose(0, 2, 1).reshape(n * n_vec, dim))
        self.mat_conj = self.mat.conj()

    def _expand(self, w: np.ndarray) -> np.ndarray:
        return w if self.n_vec == 1 else np.repeat(w, self.n_vec)

    def values(self, g: np.ndarray) -> np.ndarray:
        """Per-measurement quadratic form values g^H U g."""
        p = self.mat_conj @ g
        v = p.real ** 2 + p.imag ** 2
        if self.n_vec == 1:
            return v
        return v.reshape(self.n_meas, self.n_vec).sum(axis=1)

    def apply_weighted(self, g: np.ndarray, w: np.ndarray) -> np.ndarray:
        """sum_t w_t U_t g."""
        p = self.mat_conj @ g
        return self.mat.T @ (self._expand(w) * p)

    def outer_weighted(self, w: np.ndarray) -> np.ndarray:
        """sum_t w_t U_t as a dense Hermitian matrix."""
        return (self.mat.T * self._expand(w)) @ self.mat_conj

    def gram_squared(self) -> np.ndarray:
        """K[s, t] = tr(U_s U_t)."""
        cross = np.abs(self.mat_conj @ self.mat.T) ** 2
        if self.n_vec == 1:
            return cross
        blocks = cross.reshape(self.n_meas, self.n_vec, self.n_meas, self.n_vec)
        return blocks.sum(axis=(1, 3))


def _star_bank(instance: CprInstance) -> _VectorBank:
    return _VectorBank(instance.star_stack())


def _full_bank(instance: CprInstance) -> _VectorBank:
    """One bank over every (measurement, codeword) pair, ordered row-major."""
    t, dim, n_cw, n_vec = instance.mu_all.shape
    vecs = instance.mu_all.transpose(0, 2, 1, 3).reshape(t * n_cw, dim, n_vec)
    return _VectorBank(vecs)


def _spectral_init(instance: CprInstance, star: _VectorBank) -> np.ndarray:
    """Leading eigenvector of sum_t q_t U_t* (unit norm)."""
    _, g0, _ = power_method(star.outer_weighted(instance.q))
    return g0


def count_violations(g: np.ndarray, instance: CprInstance,
                     mask: np.ndarray | None = None,
                     tol: float = 0.0) -> tuple[int, float]:
    """Exhaustive violation statistics at g.

    Returns (count, total) with total = sum of positive parts of
    val_j - val_selected over the constraint set (full set by default, or a
    boolean (n_meas, n_codewords) mask).
    """
    vals = instance.values(g)
    star = vals[np.arange(instance.n_meas), instance.pmis]
    diff = vals - star[:, None]
    diff[np.arange(instance.n_meas), instance.pmis] = 0.0
    if mask is not None:
        diff = np.where(mask, diff, 0.0)
    count = int(np.sum(diff > tol))
    total = float(np.sum(np.maximum(diff, 0.0)))
    return count, total


def full_constraint_mask(instance: CprInstance) -> np.ndarray:
    mask = np.ones((instance.n_meas, instance.n_codewords), dtype=bool)
    mask[np.arange(instance.n_meas), instance.pmis] = False
    return mask


# --- majorize-minimize inner loop and the primal-dual solver -----------------

def _mm_inner(instance: CprInstance, star: _VectorBank, beta: float,
              g0: np.ndarray, lam_v: np.ndarray | None, opts: SolverOptions,
              rng) -> tuple[np.ndarray, int, int, list[float]]:
    """Iterate the closed-form rank-1 update of the majorized Lagrangian
    until the relative change of g falls below inner_tol.

    Returns (g, iterations, restarts, per-iterate objective values).
    """
    q = instance.q
    g = g0.copy()
    restarts = 0
    objs = []
    it = 0
    while it < opts.inner_max_iters:
        it += 1
        r = np.outer(g, g.conj()) + star.outer_weighted((q - star.values(g)) / beta)
        if lam_v is not None:
            r = r - lam_v / beta
        lam, u, _ = power_method(r)
        if lam <= 0:
            if restarts >= 10:
                break
            restarts += 1
            scale = max(np.linalg.norm(g), 1.0)
            g = g0 + 0.1 * scale * complex_gaussian(rng, g0.shape, 1.0)
            continue
        g_new = np.sqrt(lam) * u
        objs.append(float(np.sum((q - star.values(g_new)) ** 2)))
        rel = np.linalg.norm(g_new - g) / max(np.linalg.norm(g), 1e-30)
        g = g_new
        if rel < opts.inner_tol:
            break
    return g, it, restarts, objs


def mm_unconstrained_solve(instance: CprInstance,
                           opts: SolverOptions | None = None) -> SolverReport:
    """Unconstrained baseline: majorize-minimize on the CQI residuals only."""
    opts = opts or SolverOptions()
    rng = np.random.default_rng(opts.seed)
    t0 = time.perf_counter()
    star = _star_bank(instance)
    beta, _, _ = power_method(star.gram_squared())
    g0 = _spectral_init(instance, star)
    g, iters, restarts, objs = _mm_inner(instance, star, beta, g0, None, opts, rng)
    count, total = count_violations(g, instance)
    trace = [(i, o, -1) for i, o in enumerate(objs)] if opts.trace else []
    return SolverReport(g_star=g, h_star=instance.reconstruct(g),
                        objective=instance.objective(g),
                        inner_iterations=iters, outer_iterations=0,
                        violations_count=count, violations_total=total,
                        wall_time_s=time.perf_counter() - t0,
                        restarts=restarts, trace=trace)


def pd_evd_solve(instance: CprInstance, opts: SolverOptions | None = None,
                 mask: np.ndarray | None = None) -> SolverReport:
    """Primal-dual solver: the inner loop of the baseline plus projected
    dual ascent on the feedback inequalities.

    ``mask`` restricts the priced constraints (e.g. to a pruned set); the
    report's violation statistics always cover the full set.
    """
    opts = opts or SolverOptions()
    rng = np.random.default_rng(opts.seed)
    t0 = time.perf_counter()
    if mask is None:
        mask = full_constraint_mask(instance)
    star = _star_bank(instance)
    full = _full_bank(instance)
    beta, _, _ = power_method(star.gram_squared())
    gamma = opts.dual_step if opts.dual_step is not None else 0.1 / max(
        float(np.mean(instance.q)), 1e-12)
    n_meas, n_cw = instance.n_meas, instance.n_codewords
    lam = np.zeros((n_meas, n_cw))
    g = _spectral_init(instance, star)
    total_inner = 0
    restarts = 0
    trace = []
    outer = 0
    for outer in range(1, opts.outer_max_iters + 1):
        if np.any(lam):
            lam_v = full.outer_weighted(lam.ravel())
            lam_v -= star.outer_weighted(lam.sum(axis=1))
        else:
            lam_v = None
        g, it, rs, _ = _mm_inner(instance, star, beta, g, lam_v, opts, rng)
        total_inner += it
        restarts += rs
        vals = full.values(g).reshape(n_meas, n_cw)
        diff = vals - vals[np.arange(n_meas), instance.pmis][:, None]
        lam = np.where(mask, np.maximum(lam + gamma * diff, 0.0), 0.0)
        max_viol = float(diff[mask].max()) if mask.any() else 0.0
        if opts.trace:
            trace.append((outer, instance.objective(g), int(np.sum(diff[mask] > 0))))
        if max_viol < opts.violation_tol:
            break
    count, total = count_violations(g, instance)
    return SolverReport(g_star=g, h_star=instance.reconstruct(g),
                        objective=instance.objective(g),
                        inner_iterations=total_inner, outer_iterations=outer,
                        violations_count=count, violations_total=total,
                        wall_time_s=time.perf_counter() - t0,
                        restarts=restarts, trace=trace)


# --- active-set construction --------------------------------------------------

def _mask_bank(instance: CprInstance, mask: np.ndarray):
    """Pack the masked constraints as (owner measurement indices, bank)."""
    t_idx, j_idx = np.nonzero(mask)
    return t_idx, _VectorBank(instance.mu_all[t_idx, :, j_idx, :])


def _penalty_and_grad(g, star: _VectorBank, t_idx, bank_s: _VectorBank, n_meas):
    """Smooth feasibility penalty sum max(val_j - val_sel, 0)^2 and its gradient."""
    r = np.maximum(bank_s.values(g) - star.values(g)[t_idx], 0.0)
    f = float(np.sum(r ** 2))
    if f == 0.0:
        return 0.0, np.zeros_like(g)
    per_t = np.bincount(t_idx, weights=r, minlength=n_meas)
    grad = 4.0 * (bank_s.apply_weighted(g, r) - star.apply_weighted(g, per_t))
    return f, grad


def _solve_feasibility(instance: CprInstance, mask: np.ndarray, g0: np.ndarray,
                       star: _VectorBank, opts: SolverOptions) -> tuple[np.ndarray, bool, int]:
    """Gradient descent with backtracking on the max-penalty objective.

    Succeeds when the penalty hits zero (strictly inside the constraint cone)
    or falls below feas_tol; stalls are reported so the caller can retry.
    """
    t_idx, bank_s = _mask_bank(instance, mask)
    n_meas = instance.n_meas
    g = g0.copy()
    f, grad = _penalty_and_grad(g, star, t_idx, bank_s, n_meas)
    if f == 0.0:
        return g, True, 0
    # keep the descent local (step length a small fraction of ||g||): a
    # feasible point near the current iterate trips far fewer constraints
    # outside the active set than an aggressive jump would
    step_cap = 0.05
    alpha = step_cap * np.linalg.norm(g) / max(np.linalg.norm(grad), 1e-30)
    g_norm0 = np.linalg.norm(g0)
    it = 0
    for it in range(1, opts.feas_max_iters + 1):
        alpha = min(alpha, step_cap * np.linalg.norm(g)
                    / max(np.linalg.norm(grad), 1e-30))
        slope = -float(np.sum(np.abs(grad) ** 2))
        accepted = False
        for _ in range(60):
            g_try = g - alpha * grad
            f_try, _ = _penalty_and_grad(g_try, star, t_idx, bank_s, n_meas)
            if f_try <= f + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return g, f < opts.feas_tol, it
        g, f_prev = g_try, f
        f, grad = _penalty_and_grad(g, star, t_idx, bank_s, n_meas)
        alpha *= 2.0
        if f == 0.0:
            return g, True, it
        if f < opts.feas_tol:
            return g, True, it
        if f_prev - f < 1e-16 * f_prev or np.linalg.norm(g) < 1e-8 * g_norm0:
            return g, False, it  # plateau or norm collapse: scaling cannot fix signs
    return g, f < opts.feas_tol, it


@dataclass
class MecsResult:
    g_feasible: np.ndarray
    mask: np.ndarray
    feasible: bool
    outer_iterations: int
    feasibility_iterations: int

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def mecs_construct(instance: CprInstance,
                   opts: SolverOptions | None = None) -> MecsResult:
    """Build the minimal effective constraint set.

    Starting from the spectral initial point and an empty set, the currently
    violated constraints are added and a feasibility problem over the set is
    solved, until a point satisfying every constraint is found.  The set
    never shrinks.  The returned point is rescaled to the CQI level (the
    constraints are scale invariant, so feasibility is preserved).
    """
    opts = opts or SolverOptions()
    rng = np.random.default_rng(opts.seed)
    star = _star_bank(instance)
    full = _full_bank(instance)
    n_meas, n_cw = instance.n_meas, instance.n_codewords
    g = _spectral_init(instance, star)
    mask = np.zeros((n_meas, n_cw), dtype=bool)
    feas_total = 0
    feasible = False
    outer = 0
    for outer in range(1, opts.mecs_max_outer + 1):
        vals = full.values(g).reshape(n_meas, n_cw)
        diff = vals - vals[np.arange(n_meas), instance.pmis][:, None]
        diff[np.arange(n_meas), instance.pmis] = 0.0
        violated = diff > 0
        if not violated.any():
            feasible = True
            break
        if not (violated & ~mask).any():
            # every violated constraint is already in the set: the previous
            # feasibility solve stalled; retry once from a perturbed point
            g_retry = g + 0.3 * np.linalg.norm(g) * complex_gaussian(rng, g.shape, 1.0)
            g_new, ok, its = _solve_feasibility(instance, mask, g_retry, star, opts)
            feas_total += its
            if not ok:
                break
            g = g_new
            continue
        mask |= violated
        g, ok, its = _solve_feasibility(instance, mask, g, star, opts)
        feas_total += its

    # rescale to the CQI level: c^2 = sum(q a) / sum(a^2) for a_t = val_sel(g)
    a = star.values(g)
    denom = float(np.sum(a ** 2))
    if denom > 0:
        c2 = float(np.sum(instance.q * a)) / denom
        if c2 > 0:
            g = np.sqrt(c2) * g
    return MecsResult(g_feasible=g, mask=mask, feasible=feasible,
                      outer_iterations=outer, feasibility_iterations=feas_total)


# --- smoothed gradient descent ascent -----------------------------------------

def _sgda_grad(star: _VectorBank, bank_s: _VectorBank, t_idx: np.ndarray,
               n_meas: int, q: np.ndarray, g: np.ndarray, nu: np.ndarray,
               z: np.ndarray, p: float) -> np.ndarray:
    """Primal gradient of the smoothed Lagrangian, packed as a complex vector
    (real part = d/dRe(g), imaginary part = d/dIm(g))."""
    grad = star.apply_weighted(g, 4.0 * (star.values(g) - q))
    if t_idx.size:
        per_t = np.bincount(t_idx, weights=nu, minlength=n_meas)
        grad = grad + 2.0 * (bank_s.apply_weighted(g, nu)
                             - star.apply_weighted(g, per_t))
    return grad + p * (g - z)


def sgda_lagrangian(instance: CprInstance, mask: np.ndarray, g: np.ndarray,
                    nu: np.ndarray, z: np.ndarray, p: float) -> float:
    """Smoothed Lagrangian value at (g, nu) with anchor z and weight p.

    ``nu`` is ordered like the True entries of ``mask`` in row-major order.
    """
    star = _star_bank(instance)
    t_idx, bank_s = _mask_bank(instance, mask)
    f = float(np.sum((instance.q - star.values(g)) ** 2))
    cons = float(np.dot(nu, bank_s.values(g) - star.values(g)[t_idx]))
    return f + cons + 0.5 * p * float(np.linalg.norm(g - z) ** 2)


def sgda_gradient(instance: CprInstance, mask: np.ndarray, g: np.ndarray,
                  nu: np.ndarray, z: np.ndarray, p: float) -> np.ndarray:
    """Reference primal gradient of the smoothed Lagrangian (packed complex)."""
    star = _star_bank(instance)
    t_idx, bank_s = _mask_bank(instance, mask)
    return _sgda_grad(star, bank_s, t_idx, instance.n_meas, instance.q,
                      g, nu, z, p)


def sgda_dual_gradient(instance: CprInstance, mask: np.ndarray,
                       g: np.ndarray) -> np.ndarray:
    """Multiplier gradients: the constraint values val_j - val_selected."""
    star = _star_bank(instance)
    t_idx, bank_s = _mask_bank(instance, mask)
    return bank_s.values(g) - star.values(g)[t_idx]


def sgda_solve(instance: CprInstance, mask: np.ndarray,
               opts: SolverOptions | None = None,
               g_init: np.ndarray | None = None) -> SolverReport:
    """First-order minimax solver for the Lagrangian dual of the pruned problem.

    Alternates a gradient step on the coefficient vector, a projected ascent
    step on the multipliers of the constraints in ``mask``, and an averaging
    update of the smoothing anchor.  Restarts with a halved primal step and a
    doubled smoothing weight when the objective diverges.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    star = _star_bank(instance)
    q = instance.q
    if g_init is None:
        g_init = _spectral_init(instance, star)
    t_idx, bank_s = _mask_bank(instance, mask)
    n_s = t_idx.size

    if opts.sgda_p is not None:
        p = opts.sgda_p
    else:
        lam_q, _, _ = power_method(star.outer_weighted(q))
        p = 4.0 * max(lam_q, 1e-12)
    s1 = opts.sgda_s1 if opts.sgda_s1 is not None else 1.0 / (2.0 * p)
    s2 = opts.sgda_s2

    def objective(g):
        return float(np.sum((q - star.values(g)) ** 2))

    g = g_init.copy()
    z = g_init.copy()
    nu = np.zeros(n_s)
    restarts = 0
    f_ref = objective(g)
    trace = []
    it = 0
    while it < opts.sgda_max_iters:
        it += 1
        grad = _sgda_grad(star, bank_s, t_idx, instance.n_meas, q, g, nu, z, p)
        g_new = g - s1 * grad
        if n_s:
            dv = bank_s.values(g_new) - star.values(g_new)[t_idx]
            nu = np.maximum(nu + s2 * dv, 0.0)
        z = z + opts.sgda_beta_avg * (g_new - z)
        rel = np.linalg.norm(g_new - g) / max(np.linalg.norm(g), 1e-30)
        g = g_new
        if opts.trace:
            cnt, _ = count_violations(g, instance)
            trace.append((it, objective(g), cnt))
        if rel < opts.sgda_tol:
            break
        if it % 50 == 0:
            f_now = objective(g)
            if not np.isfinite(f_now) or f_now > 10.0 * max(f_ref, 1e-30):
                if restarts >= opts.sgda_max_restarts:
                    g = g_init.copy()  # give up on the diverged trajectory
                    break
                restarts += 1
                s1 *= 0.5
                p *= 2.0
                g = g_init.copy()
                z = g_init.copy()
                nu = np.zeros(n_s)
                f_ref = objective(g)
            else:
                f_ref = min(f_ref, f_now)

    count, total = count_violations(g, instance)
    return SolverReport(g_star=g, h_star=instance.reconstruct(g),
                        objective=instance.objective(g),
                        inner_iterations=it, outer_iterations=0,
                        violations_count=count, violations_total=total,
                        wall_time_s=time.perf_counter() - t0,
                        mecs_size=n_s, restarts=restarts, trace=trace)


def mecs_sgda_solve(instance: CprInstance,
                    opts: SolverOptions | None = None) -> SolverReport:
    """Two-stage solve: constraint pruning, then the first-order minimax loop."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    mecs = mecs_construct(instance, opts)
    report = sgda_solve(instance, mecs.mask, opts, g_init=mecs.g_feasible)
    report.outer_iterations = mecs.outer_iterations
    report.mecs_size = mecs.size
    report.wall_time_s = time.perf_counter() - t0
    return report


def solve_multicarrier(instance: CprInstance,
                       opts: SolverOptions | None = None) -> SolverReport:
    """Joint multi-carrier solve in the lifted coefficient space.

    The instance must carry a delay basis; the report's ``h_star`` is the
    reconstructed M x n_C frequency-domain CSI.
    """
    if instance.delay_basis is None:
        raise ValueError("instance is not a multi-carrier instance")
    return mecs_sgda_solve(instance, opts)
