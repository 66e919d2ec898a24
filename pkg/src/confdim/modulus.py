"""Fuglede p-modulus and discrete modulus as finite convex programs.

Both moduli reduce to

    minimize   sum_j w_j x_j^p     subject to   A x >= 1,  x >= 0

with p > 1, nonnegative weights w and a nonnegative constraint matrix A
(one row per measure / target set).  The program is solved through its
smooth concave dual by projected gradient ascent with backtracking, followed
by projected-Newton polishing on the active constraints; the reported value
comes from a rescaled primal-feasible point, so it is always an upper bound
with a certified duality gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from confdim.cantor import IntervalLevel
from confdim.dimension import DiscreteMeasure, box_count


class InfeasibleError(ValueError):
    def __init__(self, member_indices, message=None):
        self.member_indices = list(member_indices)
        super().__init__(
            message or f"infeasible: members {self.member_indices} cannot be covered"
        )


@dataclass
class SolveResult:
    value: float
    optimizer: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    duality_gap_bound: float
    iterations: int

    def __post_init__(self):
        if np.any(self.optimizer < 0):
            raise ValueError("optimizer must be nonnegative")


def _solve_power_program(
    w: np.ndarray,
    A: np.ndarray,
    p: float,
    tol: float = 1e-9,
    max_iter: int = 100000,
) -> SolveResult:
    """min sum w x^p s.t. A x >= 1, x >= 0 via dual projected gradient."""
    m, n = A.shape
    q = 1.0 / (p - 1.0)

    def primal(y):
        s = A.T @ y
        x = np.zeros(n)
        pos = s > 0
        x[pos] = (s[pos] / (p * w[pos])) ** q
        return x

    def dual_value(y, x):
        return float(np.sum(w * x ** p) + y @ (1.0 - A @ x))

    y = np.ones(m)
    x = primal(y)
    g = dual_value(y, x)
    step = 1.0
    it = 0
    while it < max_iter:
        it += 1
        grad = 1.0 - A @ x
        gnorm = float(np.linalg.norm(grad * ((y > 0) | (grad > 0))))
        if gnorm <= tol:
            break
        # backtracking ascent step
        improved = False
        for _ in range(60):
            y_new = np.maximum(y + step * grad, 0.0)
            x_new = primal(y_new)
            g_new = dual_value(y_new, x_new)
            if g_new > g + 1e-12 * abs(g):
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        y, x, g = y_new, x_new, g_new
        step *= 2.0

        # projected-Newton polish on the active set every few sweeps
        if it % 20 == 0 or gnorm < 1e-4:
            y, x, g = _newton_polish(w, A, p, q, y, primal, dual_value)
            grad = 1.0 - A @ x
            gnorm = float(np.linalg.norm(grad * ((y > 0) | (grad > 0))))
            if gnorm <= tol:
                break

    y, x, g = _newton_polish(w, A, p, q, y, primal, dual_value)

    # certified primal value: rescale onto the feasible set
    Ax = A @ x
    worst = float(np.min(Ax)) if m else 1.0
    if worst <= 0:
        raise InfeasibleError(np.where(Ax <= 0)[0])
    x_feas = x / min(worst, 1.0)
    value = float(np.sum(w * x_feas ** p))
    gap = value - dual_value(y, x)

    Axf = A @ x_feas
    feas = float(max(0.0, np.max(1.0 - Axf))) if m else 0.0
    comp = float(np.max(np.abs(y * (1.0 - Axf)))) if m else 0.0
    kkt = max(feas, comp)
    return SolveResult(
        value=value, optimizer=x_feas, multipliers=y,
        kkt_residual=kkt, duality_gap_bound=float(max(gap, 0.0)), iterations=it,
    )


def _newton_polish(w, A, p, q, y, primal, dual_value, sweeps: int = 40):
    """Newton steps on the stationarity system of the active constraints."""
    m = A.shape[0]
    x = primal(y)
    g = dual_value(y, x)
    for _ in range(sweeps):
        resid = A @ x - 1.0
        active = (y > 1e-14) | (resid < 0)
        if not np.any(active):
            break
        s = A.T @ y
        dx = np.zeros_like(x)
        pos = s > 0
        dx[pos] = q * x[pos] / s[pos]
        Aact = A[active]
        J = (Aact * dx) @ Aact.T
        try:
            delta = np.linalg.solve(J + 1e-14 * np.eye(J.shape[0]), -resid[active])
        except np.linalg.LinAlgError:
            delta, *_ = np.linalg.lstsq(J, -resid[active], rcond=None)
        y_try = y.copy()
        t = 1.0
        improved = False
        for _ in range(30):
            y_try[:] = y
            y_try[active] = np.maximum(y[active] + t * delta, 0.0)
            x_try = primal(y_try)
            g_try = dual_value(y_try, x_try)
            if g_try >= g - 1e-15 * abs(g):
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        if abs(g_try - g) <= 1e-16 * max(1.0, abs(g)) and np.max(np.abs(resid[active])) < 1e-12:
            y, x, g = y_try, x_try, g_try
            break
        y, x, g = y_try, x_try, g_try
    return y, x, g


@dataclass
class MeasureSystem:
    """Finite system of measures over a discretized ambient space.

    mu holds the cell measures of the ambient; each member is a nonnegative
    weight vector over the same cells.
    """

    mu: np.ndarray
    members: List[np.ndarray]
    p: float
    member_weights: Optional[np.ndarray] = None
    geometry: Optional[dict] = None  # grid metadata for window scans

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.members = [np.asarray(lam, dtype=float) for lam in self.members]
        if self.p <= 1:
            raise ValueError("p must be > 1")
        if np.any(self.mu < 0):
            raise ValueError("cell measures must be nonnegative")
        if float(np.sum(self.mu)) <= 0:
            raise ValueError("ambient measure must have positive total mass")
        for i, lam in enumerate(self.members):
            if len(lam) != len(self.mu):
                raise ValueError(f"member {i} has wrong cell count")
            if np.any(lam < 0) or float(np.sum(lam)) <= 0:
                raise ValueError(f"member {i} must have positive total mass")


def solve_fuglede(system: MeasureSystem, tol: float = 1e-9) -> SolveResult:
    """Fuglede p-modulus min sum mu rho^p with int rho dlambda >= 1 per member.

    Cells of zero ambient measure carry free density: any member with lambda
    mass there is admissible at no cost and its constraint drops out.
    """
    mu = system.mu
    n = len(mu)
    live = mu > 0
    rows = []
    free_members = []
    zero_members = []
    for i, lam in enumerate(system.members):
        if float(np.sum(lam)) <= 0:
            zero_members.append(i)
        elif float(np.sum(lam[~live])) > 0:
            free_members.append(i)  # satisfiable on a zero-mu cell at no cost
        else:
            rows.append((i, lam[live]))
    if zero_members:
        raise InfeasibleError(zero_members)

    x_full = np.zeros(n)
    if not rows:
        result = SolveResult(
            value=0.0, optimizer=x_full, multipliers=np.zeros(0),
            kkt_residual=0.0, duality_gap_bound=0.0, iterations=0,
        )
    else:
        A = np.stack([lam for _, lam in rows])
        res = _solve_power_program(mu[live], A, system.p, tol=tol)
        x_full[live] = res.optimizer
        result = SolveResult(
            value=res.value, optimizer=x_full, multipliers=res.multipliers,
            kkt_residual=res.kkt_residual,
            duality_gap_bound=res.duality_gap_bound, iterations=res.iterations,
        )
    # make the reported density admissible for the dropped members too
    for i in free_members:
        lam = system.members[i]
        masked = np.where(live, 0.0, lam)
        j = int(np.argmax(masked))
        need = max(0.0, 1.0 - float(lam @ result.optimizer))
        if need > 0:
            result.optimizer[j] += need / lam[j]
    return result


@dataclass
class DiscreteModulusProblem:
    """Ball-weight program: per set, weights of incident fifth-balls sum >= 1."""

    balls: np.ndarray  # (n, 2) center, radius
    p: float
    delta: float
    incidence: np.ndarray  # (n_sets, n_balls) boolean
    set_labels: Optional[list] = None

    def __post_init__(self):
        self.balls = np.asarray(self.balls, dtype=float)
        self.incidence = np.asarray(self.incidence, dtype=bool)
        if self.p <= 1:
            raise ValueError("p must be > 1")
        if self.incidence.size == 0:
            raise ValueError("incidence matrix is empty")
        radii = self.balls[:, 1]
        if np.any(2 * radii > self.delta * (1 + 1e-12)):
            raise ValueError("ball diameter exceeds the scale cap delta")

    @classmethod
    def from_intervals_1d(
        cls, balls: np.ndarray, sets: Sequence[np.ndarray], p: float,
        delta: Optional[float] = None, check_disjoint: bool = True,
    ) -> "DiscreteModulusProblem":
        """Build incidence from 1-D balls and point/interval sets.

        Each set is an array of points or an (n,2) array of intervals; it is
        incident to a ball when it meets the concentric 1/5-ball.
        """
        balls = np.asarray(balls, dtype=float)
        c, r = balls[:, 0], balls[:, 1]
        if check_disjoint:
            order = np.argsort(c)
            cs, rs = c[order], r[order]
            sep = np.diff(cs) - (rs[1:] + rs[:-1]) / 5.0
            if np.any(sep < -1e-12):
                raise ValueError("fifth-balls are not pairwise disjoint")
        inc = np.zeros((len(sets), len(balls)), dtype=bool)
        for i, s in enumerate(sets):
            s = np.asarray(s, dtype=float)
            if s.ndim == 1:
                lo, hi = s, s
            else:
                lo, hi = s[:, 0], s[:, 1]
            # interval [lo,hi] meets [c - r/5, c + r/5]
            inc[i] = np.any(
                (lo[:, None] <= c[None, :] + r[None, :] / 5.0)
                & (hi[:, None] >= c[None, :] - r[None, :] / 5.0),
                axis=0,
            )
        delta = float(2 * np.max(r)) if delta is None else delta
        return cls(balls=balls, p=p, delta=delta, incidence=inc)


def solve_discrete(problem: DiscreteModulusProblem, tol: float = 1e-9) -> SolveResult:
    """Minimize sum v(B)^p over admissible nonnegative ball weights."""
    empty = np.where(~np.any(problem.incidence, axis=1))[0]
    if len(empty):
        raise InfeasibleError(empty, f"sets {empty.tolist()} meet no fifth-ball")
    A = problem.incidence.astype(float)
    w = np.ones(A.shape[1])
    return _solve_power_program(w, A, problem.p, tol=tol)


def vitali_disjointify(balls: np.ndarray) -> np.ndarray:
    """Greedy 5r-covering selection; returns indices into the input.

    Order: radius descending, then leftmost center, then input order.  The
    selected balls are pairwise disjoint and every input ball meets a
    selected ball of at least its radius, so inputs lie in the 5x dilates.
    """
    balls = np.asarray(balls, dtype=float)
    order = sorted(range(len(balls)), key=lambda i: (-balls[i, 1], balls[i, 0], i))
    chosen: list = []
    for i in order:
        c, r = balls[i]
        if all(abs(c - balls[j, 0]) > r + balls[j, 1] for j in chosen):
            chosen.append(i)
    return np.array(sorted(chosen), dtype=int)


def product_system(
    E_level: IntervalLevel,
    E_measure: DiscreteMeasure,
    Y_points: Sequence,
    cell_width: float,
    p: float,
) -> MeasureSystem:
    """Fiber system {E x {y}} on a 2-D grid with mu = lambda_E x nu.

    Y_points is a list of (y, weight) pairs; each member is the rasterized
    lambda_E supported on its own row.  The grid must resolve the gaps of
    the level, otherwise fibers alias and the construction is rejected.
    """
    min_gap = E_level.min_gap()
    if cell_width > min_gap:
        raise ValueError(
            f"cell width {cell_width:g} coarser than the smallest gap "
            f"{min_gap:g}: fibers would alias"
        )
    n_cols = int(round(1.0 / cell_width))
    edges = np.arange(n_cols + 1) * cell_width
    lam_cols = np.array(
        [E_measure.window_mass(edges[k], edges[k + 1]) for k in range(n_cols)]
    )
    # boundary atoms can be double counted by closed windows; renormalize
    tot = float(np.sum(lam_cols))
    if tot <= 0:
        raise ValueError("measure rasterizes to zero")
    lam_cols *= E_measure.total_mass / tot

    ys = np.array([float(y) for y, _ in Y_points])
    weights = np.array([float(w) for _, w in Y_points])
    n_rows = len(ys)
    mu = np.concatenate([lam_cols * w for w in weights])
    members = []
    for row in range(n_rows):
        lam = np.zeros(n_rows * n_cols)
        lam[row * n_cols: (row + 1) * n_cols] = lam_cols
        members.append(lam)
    geometry = {
        "kind": "product_grid",
        "n_rows": n_rows,
        "n_cols": n_cols,
        "cell_width": cell_width,
        "row_y": ys,
    }
    return MeasureSystem(
        mu=mu, members=members, p=p, member_weights=weights, geometry=geometry
    )


def holder_lower_bound(system: MeasureSystem, d: float) -> float:
    """nu(Y) as a certified lower bound for the (1+d)-modulus of a product.

    Requires normalized members; the solver value must dominate this bound.
    """
    if system.member_weights is None:
        raise ValueError("system carries no member weights (not a product system)")
    if abs(system.p - (1.0 + d)) > 1e-12:
        raise ValueError(f"system exponent p={system.p} != 1 + d = {1 + d}")
    for i, lam in enumerate(system.members):
        if abs(float(np.sum(lam)) - 1.0) > 1e-9:
            raise ValueError(f"member {i} is not normalized to total mass 1")
    return float(np.sum(system.member_weights))


@dataclass
class VanishingWitness:
    balls: np.ndarray
    v: np.ndarray
    value: float
    admissible_ok: bool
    h_t_values: np.ndarray
    dim_estimate: float
    achieved: bool


def dmod_vanishing_witness(
    X_level: IntervalLevel,
    sets: Optional[Sequence[np.ndarray]],
    t: float,
    q: float,
    eps_target: float,
) -> VanishingWitness:
    """Admissible pair (v, B) with small sum v^q from the level's own cover.

    Balls are the level intervals, v(B) = diam(B)^t.  Refuses when q*t does
    not exceed the box-dimension estimate of the level, in which case no
    such witness can exist.
    """
    diams = X_level.lengths
    n = X_level.count
    if sets is None:
        sets = [np.arange(n)]
    ell = float(np.exp(np.mean(np.log(diams))))
    dim_est = math.log(n) / math.log(1.0 / ell) if ell < 1 else 1.0
    if q * t <= dim_est:
        raise ValueError(
            f"q*t = {q * t:.4f} <= box-dimension estimate {dim_est:.4f}: refused"
        )
    h_t = np.array([float(np.sum(diams[np.asarray(idx)] ** t)) for idx in sets])
    v = diams ** t
    # every set's own intervals are among the balls meeting it, so the sum of
    # v over incident balls dominates the set's finite-scale H_t content
    admissible = all(
        float(np.sum(v[np.asarray(idx)])) >= min(1.0, h_t[i]) - 1e-12
        for i, idx in enumerate(sets)
    )
    value = float(np.sum(v ** q))
    centers = (X_level.lefts + X_level.rights) / 2.0
    balls = np.column_stack([centers, diams / 2.0])
    return VanishingWitness(
        balls=balls, v=v, value=value, admissible_ok=admissible,
        h_t_values=h_t, dim_estimate=dim_est, achieved=bool(value < eps_target),
    )


@dataclass
class ComparisonReport:
    lhs: float
    rhs: float
    ratio: float
    hypothesis_ok: bool
    offending_window: Optional[tuple]
    ambient_growth_C: float
    degenerate: bool = False


def modulus_comparison(
    system: MeasureSystem,
    image_problem: DiscreteModulusProblem,
    s: float,
    C1: float,
    C2: float,
    p_growth: Optional[float] = None,
) -> ComparisonReport:
    """Numeric check of mod_q(E) <= C * d-mod_q(f(E)); reports the ratio.

    Before comparing, scans the fiber growth lambda_E(B_r cap E) >= C1 r^s
    on the member supports and records the ambient growth constant.
    """
    if not system.members:
        return ComparisonReport(
            lhs=math.inf, rhs=math.inf, ratio=math.nan, hypothesis_ok=False,
            offending_window=None, ambient_growth_C=math.nan, degenerate=True,
        )
    if abs(system.p - image_problem.p) > 1e-12:
        raise ValueError("system and image problem must share the exponent q")
    geo = system.geometry or {}
    if geo.get("kind") != "product_grid":
        raise ValueError("fiber growth scan needs product-grid geometry")
    n_cols = geo["n_cols"]
    h = geo["cell_width"]
    centers = (np.arange(n_cols) + 0.5) * h

    hypothesis_ok = True
    offending = None
    for mi, lam in enumerate(system.members):
        row = lam.reshape(-1, n_cols).sum(axis=0)
        support = centers[row > 0]
        if len(support) == 0:
            continue
        span = float(support[-1] - support[0])
        radii = [span * 2.0 ** (-k) for k in range(1, 12) if span * 2.0 ** (-k) >= h]
        csum = np.concatenate([[0.0], np.cumsum(row)])
        for r in radii:
            for c in support[:: max(1, len(support) // 64)]:
                near = np.abs(support - c) <= r / C2
                if not np.any(near):
                    continue
                k0 = np.searchsorted(centers, c - r, side="left")
                k1 = np.searchsorted(centers, c + r, side="right")
                mass = float(csum[k1] - csum[k0])
                if mass < C1 * r ** s - 1e-12:
                    hypothesis_ok = False
                    offending = (mi, float(c), float(r), mass)
                    break
            if offending:
                break
        if offending:
            break

    p_growth = p_growth if p_growth is not None else system.p
    mu_grid = system.mu.reshape(-1, n_cols)
    amb_c = 0.0
    for r in [h * 2.0 ** k for k in range(0, 8)]:
        width_cells = max(1, int(round(2 * r / h)))
        kernel = np.ones(width_cells)
        for rowv in mu_grid:
            conv = np.convolve(rowv, kernel, mode="same")
            amb_c = max(amb_c, float(np.max(conv)) / r ** p_growth)

    lhs = solve_fuglede(system).value
    rhs = solve_discrete(image_problem).value
    ratio = lhs / rhs if rhs > 0 else math.inf
    return ComparisonReport(
        lhs=lhs, rhs=rhs, ratio=ratio, hypothesis_ok=hypothesis_ok,
        offending_window=offending, ambient_growth_C=amb_c,
    )


@dataclass
class SubadditivityReport:
    union_value: float
    member_values: np.ndarray
    subadditive_ok: bool
    monotone_ok: bool


def subadditivity_check(
    systems: Sequence[MeasureSystem], tol: float = 1e-6
) -> SubadditivityReport:
    """mod_p(union) <= sum mod_p(E_i), and monotone in the member list."""
    base = systems[0]
    for sysb in systems[1:]:
        if len(sysb.mu) != len(base.mu) or not np.allclose(sysb.mu, base.mu):
            raise ValueError("systems must share the ambient measure")
        if abs(sysb.p - base.p) > 1e-12:
            raise ValueError("systems must share the exponent p")
    union = MeasureSystem(
        mu=base.mu, members=[lam for s in systems for lam in s.members], p=base.p
    )
    union_value = solve_fuglede(union).value
    values = np.array([solve_fuglede(s).value for s in systems])
    return SubadditivityReport(
        union_value=union_value,
        member_values=values,
        subadditive_ok=bool(union_value <= float(np.sum(values)) + tol),
        monotone_ok=bool(np.all(values <= union_value + tol)),
    )
