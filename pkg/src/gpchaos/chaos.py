"""Chaos metrics, inequality checks and the N-sweep report.

Entropies, Fisher informations and distances between grid densities are
computed for the discrete measures carried by the grid (node values times
trapezoid weights).  For those discrete measures the chain rule,
super-additivity and Csiszár-Kullback hold exactly, so the checks below
only have rounding to absorb.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix, vstack
from scipy.special import gamma as gamma_fn

from . import core
from .core import Grid, SampleSet, ScalarField
from .diffusion import (GridDrift, ProductDrift, SimParams, interaction_radius,
                        path_relative_entropy, path_rng, simulate, stopping_times,
                        survival_probability)
from .errors import (AbsoluteContinuity, CapExceeded, DensityFloor, DimensionMismatch,
                     MomentDiverged, SizeMismatch, ValidationError)
from .gp import GpProblem, gp_drift, minimize_gp
from .nbody import (NBodyProblem, gaussian_pair, ground_state, mean_field_pair,
                    no_pair)

EXACT_CAP = 1024
LP_NODE_CAP = 1200
PRUNE_MASS = 1e-13


@dataclass(frozen=True)
class Metric:
    kind: str = "truncated_euclidean"
    truncation: float = 1.0

    def __post_init__(self):
        if self.kind not in ("truncated_euclidean", "euclidean"):
            raise ValidationError(f"unknown metric {self.kind!r}", "metric")
        if not self.truncation > 0:
            raise ValidationError("truncation must be positive", "truncation")

    def __call__(self, dist):
        if self.kind == "euclidean":
            return dist
        return np.minimum(dist, self.truncation)


EUCLIDEAN = Metric("euclidean")


# --------------------------------------------------------------------------
# optimal transport


def _block_cost(x: np.ndarray, y: np.ndarray, order: int, metric: Metric, d: int) -> np.ndarray:
    """Normalized cost ``1/n sum_i c(x_i, y_i)`` between rows of x and rows of y."""
    n_blocks = x.shape[1] // d
    cost = np.zeros((x.shape[0], y.shape[0]))
    for i in range(n_blocks):
        blk = slice(i * d, (i + 1) * d)
        diff = x[:, None, blk] - y[None, :, blk]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        cost += metric(dist) if order == 1 else dist * dist
    return cost / n_blocks


def _discrete_measure(rho: ScalarField, prune: float = PRUNE_MASS):
    mass = (rho.values * core.quadrature_weights(rho.grid)).ravel()
    keep = mass > prune * mass.max()
    pts = rho.grid.points_array()[keep]
    w = mass[keep]
    return pts, w / w.sum()


def _quantile_transport(xa, wa, xb, wb, p):
    """Exact 1D transport between discrete measures via the monotone coupling."""
    oa, ob = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa, xb, wb = xa[oa], wa[oa], xb[ob], wb[ob]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    du = np.diff(np.concatenate([[0.0], levels]))
    ia = np.minimum(np.searchsorted(ca, levels, side="left"), xa.size - 1)
    ib = np.minimum(np.searchsorted(cb, levels, side="left"), xb.size - 1)
    return float(np.sum(du * np.abs(xa[ia] - xb[ib]) ** p))


def _lp_transport(xa, wa, xb, wb, cost):
    na, nb = wa.size, wb.size
    if na * nb > LP_NODE_CAP**2:
        raise CapExceeded(f"transport LP with {na}x{nb} variables exceeds the cap")
    rows = np.repeat(np.arange(na), nb)
    cols = np.tile(np.arange(nb), na)
    idx = np.arange(na * nb)
    A1 = coo_matrix((np.ones(na * nb), (rows, idx)), shape=(na, na * nb))
    A2 = coo_matrix((np.ones(na * nb), (cols, idx)), shape=(nb, na * nb))
    # HiGHS presolve wrongly reports some of these balanced problems infeasible
    res = linprog(cost.ravel(), A_eq=vstack([A1, A2]).tocsr(), b_eq=np.concatenate([wa, wb]),
                  bounds=(0, None), method="highs-ds",
                  options={"presolve": False, "primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def wasserstein(a, b, order: int = 1, metric: Metric | None = None, d: int | None = None) -> float:
    """MKW distance of order 1 or 2 with the particle-normalized ground cost.

    Order 1 uses ``metric`` (truncated Euclidean by default) averaged over
    the particle blocks of size ``d``; order 2 is the square root of the
    optimal mean of ``1/n sum_i |x_i - y_i|^2``.  Sample sets must have
    equal counts and are matched exactly by assignment.  Grid densities
    are transported exactly as discrete measures: 1D Euclidean problems by
    the monotone coupling, everything else by linear programming.
    """
    if order not in (1, 2):
        raise ValidationError("order must be 1 or 2", "order")
    metric = metric or Metric()
    if isinstance(a, ScalarField) != isinstance(b, ScalarField):
        raise ValidationError("compare two sample sets or two grid densities", "b")
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    d = d or a.dim
    if a.dim % d:
        raise DimensionMismatch(f"dimension {a.dim} not a multiple of d={d}")
    if isinstance(a, SampleSet):
        if a.count != b.count:
            raise SizeMismatch(f"exact assignment needs equal counts ({a.count} vs {b.count})")
        if a.count > EXACT_CAP:
            raise CapExceeded(f"{a.count} samples exceed the exact-assignment cap {EXACT_CAP}")
        cost = _block_cost(a.points, b.points, order, metric, d)
        r, c = linear_sum_assignment(cost)
        # fsum is order independent, so W(a, b) == W(b, a) exactly
        val = math.fsum(cost[r, c]) / a.count
        return val if order == 1 else math.sqrt(max(val, 0.0))
    xa, wa = _discrete_measure(a)
    xb, wb = _discrete_measure(b)
    if a.dim == 1 and (order == 2 or metric.kind == "euclidean"):
        val = _quantile_transport(xa[:, 0], wa, xb[:, 0], wb, order)
    else:
        val = _lp_transport(xa, wa, xb, wb, _block_cost(xa, xb, order, metric, d))
    return val if order == 1 else math.sqrt(max(val, 0.0))


def sample_field(rho: ScalarField, count: int, seed: int, stream: int = 0) -> SampleSet:
    """Draw ``count`` points from the interpolated density, reproducibly."""
    base = stream * 2**40
    rngs = [path_rng(seed, base + i) for i in range(count)]
    return SampleSet(core.sample_density(rho, rngs))


def w1_w2_bound_check(F: SampleSet, G: SampleSet, k: float = 4.0, d: int | None = None,
                      metric: Metric | None = None) -> dict:
    """Compare ``W2`` with ``2^{3/2} M_k^{1/k} W1^{1/2 - 1/k}`` and ``W1`` with ``W2``."""
    if not k > 2:
        raise ValidationError("k must exceed 2", "k")
    d = d or F.dim
    w1 = wasserstein(F, G, 1, metric, d)
    w2 = wasserstein(F, G, 2, metric, d)
    mk = core.moment(SampleSet(F.points[:, :d]), k) + core.moment(SampleSet(G.points[:, :d]), k)
    rhs = 2**1.5 * mk ** (1.0 / k) * w1 ** (0.5 - 1.0 / k)
    return {"lhs": w2, "rhs": rhs, "W1": w1, "W2": w2, "M_k": mk,
            "holds": bool(w2 <= rhs + 1e-12 and w1 <= w2 + 1e-12)}


# --------------------------------------------------------------------------
# entropy and information functionals


def _xlogx(values):
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * np.log(v[pos])
    return out


def _coarse_moment(rho: ScalarField, k: float):
    n = rho.grid.points
    if (n - 1) % 2 or (n - 1) // 2 + 1 < 8:
        return None
    coarse = Grid(rho.grid.dim, rho.grid.extent, (n - 1) // 2 + 1)
    vals = rho.values[(slice(None, None, 2),) * rho.grid.dim]
    return core.moment(ScalarField(coarse, vals), k)


def entropy(rho: ScalarField, k: float | None = 2.0, N: int = 1,
            moment_rtol: float = 1e-2) -> float:
    """Normalized entropy ``(1/N) ∫ rho log rho`` with ``0 log 0 = 0``.

    When ``k`` is given the ``k``-th moment is recomputed on the grid with
    every other node; disagreement beyond ``moment_rtol`` means the
    moment is not resolved and :class:`MomentDiverged` is raised.
    """
    if k is not None:
        fine = core.moment(rho, k)
        coarse = _coarse_moment(rho, k)
        if not math.isfinite(fine) or (
                coarse is not None and abs(coarse - fine) > moment_rtol * max(abs(fine), 1e-300)):
            raise MomentDiverged(f"moment of order {k} not converged ({fine} vs {coarse})")
    return core.integrate_values(_xlogx(rho.values), rho.grid) / N


def _log_reference(grid: Grid, k: float, d: int) -> np.ndarray:
    N = grid.dim // d
    # ∫_{R^d} exp(-|r|^k) dr = |S^{d-1}| Γ(d/k) / k
    one = 2 * math.pi ** (d / 2) / gamma_fn(d / 2) * gamma_fn(d / k) / k
    expo = np.zeros((1,) * grid.dim)
    for i in range(N):
        r2 = grid.radius_squared(range(i * d, (i + 1) * d))
        expo = expo + r2 ** (k / 2)
    return np.broadcast_to(-expo - N * math.log(one), grid.shape)


def reference_density(grid: Grid, k: float, d: int) -> np.ndarray:
    """``C_k exp(-sum_i |r_i|^k)`` over the particle blocks, normalized on R^{N d}."""
    return np.exp(_log_reference(grid, k, d))


def entropy_reference_split(rho: ScalarField, k: float, d: int = 1) -> tuple[float, float]:
    """Both sides of the entropy identity with the reference ``H_k``.

    Returns ``(∫ rho log rho, ∫ (f log f - f + 1) H_k + ∫ rho log H_k)``
    with ``f = rho / H_k``; unnormalized.
    """
    log_h = _log_reference(rho.grid, k, d)
    H = np.exp(log_h)
    r = rho.values
    # (f log f - f + 1) H with f = rho / H, written without dividing by H
    plog = np.zeros_like(r)
    pos = r > 0
    plog[pos] = r[pos] * (np.log(r[pos]) - log_h[pos])
    first = core.integrate_values(plog - r + H, rho.grid)
    second = core.integrate_values(r * log_h, rho.grid)
    return core.integrate_values(_xlogx(r), rho.grid), first + second


def relative_entropy(rho: ScalarField, ref: ScalarField, N: int = 1) -> float:
    """Normalized relative entropy ``(1/N) ∫ rho log(rho / ref)``."""
    if rho.grid != ref.grid:
        raise DimensionMismatch("densities live on different grids")
    r, q = rho.values, ref.values
    bad = (q <= 0) & (r > 0)
    if bad.any():
        raise AbsoluteContinuity(f"{int(bad.sum())} nodes carry mass where the reference vanishes")
    pos = r > 0
    integrand = np.zeros_like(r)
    integrand[pos] = r[pos] * (np.log(r[pos]) - np.log(q[pos]))
    return core.integrate_values(integrand, rho.grid) / N


def _score(rho: ScalarField) -> np.ndarray:
    """``grad log rho`` by central differences (zero where rho vanishes)."""
    v = rho.values
    grad = core.gradient(v, rho.grid.spacing)
    out = np.zeros_like(grad)
    pos = v > 0
    out[:, pos] = grad[:, pos] / v[pos]
    return out


def fisher_information(rho: ScalarField, ref: ScalarField | None = None, N: int = 1) -> float:
    """``∫ |grad rho|^2 / rho`` or, with ``ref``, ``(1/N) ∫ |grad log(rho/ref)|^2 rho``.

    The plain form is also divided by ``N`` so that product densities give
    the one-particle value.
    """
    if rho.values.min() < 0:
        raise DensityFloor("density has negative nodes")
    s = _score(rho)
    if ref is not None:
        if ref.grid != rho.grid:
            raise DimensionMismatch("densities live on different grids")
        s = s - _score(ref)
    return core.integrate_values(np.sum(s * s, axis=0) * rho.values, rho.grid) / N


def total_variation(rho: ScalarField, ref: ScalarField) -> float:
    """``1/2 ∫ |rho - ref|``."""
    if rho.grid != ref.grid:
        raise DimensionMismatch("densities live on different grids")
    return 0.5 * core.integrate_values(np.abs(rho.values - ref.values), rho.grid)


def log_concavity_defect(rho: ScalarField) -> float:
    """Most negative second difference of ``-log rho`` over the bulk (>= 0 if log-concave)."""
    v = rho.values
    bulk = v > 1e-6 * v.max()
    worst = math.inf
    h = rho.grid.spacing
    for ax in range(rho.grid.dim):
        lv = -np.log(np.where(bulk, v, 1.0))
        n = v.shape[ax]
        a = np.take(lv, range(0, n - 2), axis=ax)
        b = np.take(lv, range(1, n - 1), axis=ax)
        c = np.take(lv, range(2, n), axis=ax)
        ok = (np.take(bulk, range(0, n - 2), axis=ax) & np.take(bulk, range(1, n - 1), axis=ax)
              & np.take(bulk, range(2, n), axis=ax))
        if ok.any():
            worst = min(worst, float(((a - 2 * b + c) / (h * h))[ok].min()))
    return worst


# --------------------------------------------------------------------------
# HWI and concentration


def _bootstrap_w2(xs: np.ndarray, ys: np.ndarray, d: int, n_boot: int, seed: int):
    cost = _block_cost(xs, ys, 2, EUCLIDEAN, d)
    r, c = linear_sum_assignment(cost)
    w2 = math.sqrt(cost[r, c].mean())
    rng = np.random.Generator(np.random.Philox(key=seed + (7 << 64)))
    vals = []
    n = xs.shape[0]
    for _ in range(n_boot):
        i = rng.integers(0, n, n)
        j = rng.integers(0, n, n)
        sub = cost[np.ix_(i, j)]
        rr, cc = linear_sum_assignment(sub)
        vals.append(math.sqrt(sub[rr, cc].mean()))
    return w2, float(np.std(vals, ddof=1)) if n_boot > 1 else 0.0


def hwi_report(rho_N: ScalarField, rho_ref_product: ScalarField, N: int, d: int = 1,
               samples: int = 1024, bootstrap: int = 32, seed: int = 0,
               convex_trap: bool = True) -> dict:
    """Entropy, transport and Fisher terms of the two entropy inequalities.

    All quantities are per particle: ``H`` and ``I_rel`` carry ``1/N`` and
    ``W2`` uses the cost ``1/N sum_i |x_i - y_i|^2``.  In these units the
    relative-entropy inequality reads ``H <= W2 sqrt(I_rel)``, the same as
    ``H <= N^{-1/2} W2_raw sqrt(I_rel)`` with the unnormalized Euclidean
    ``W2_raw = sqrt(N) W2``.
    """
    H = relative_entropy(rho_N, rho_ref_product, N)
    I_rel = fisher_information(rho_N, rho_ref_product, N)
    xs = sample_field(rho_N, samples, seed, stream=1).points
    ys = sample_field(rho_ref_product, samples, seed, stream=2).points
    w2, se = _bootstrap_w2(xs, ys, d, bootstrap, seed)
    h_joint = entropy(rho_N, None, N)
    h_ref = entropy(rho_ref_product, None, N)
    i_joint = fisher_information(rho_N, None, N)
    i_ref = fisher_information(rho_ref_product, None, N)
    ed_rhs = w2 * (math.sqrt(i_joint) + math.sqrt(i_ref))
    return {"H": H, "W2": w2, "W2_stderr": se, "W2_raw": math.sqrt(N) * w2, "I_rel": I_rel,
            "hwi_rhs": w2 * math.sqrt(I_rel), "hwi_slack": w2 * math.sqrt(I_rel) - H,
            "hwi_applicable": bool(convex_trap),
            "entropy_joint": h_joint, "entropy_ref": h_ref,
            "fisher_joint": i_joint, "fisher_ref": i_ref,
            "entropy_distance_lhs": abs(h_joint - h_ref),
            "entropy_distance_slack": ed_rhs - abs(h_joint - h_ref),
            # slack of either inequality scales linearly with W2
            "hwi_slack_stderr": se * math.sqrt(I_rel),
            "entropy_distance_slack_stderr": se * (math.sqrt(i_joint) + math.sqrt(i_ref))}


def phi_library():
    """Bounded test functions of the first coordinate of a particle."""
    return {
        "gauss0": lambda x: np.exp(-0.5 * np.sum(x * x, axis=-1)),
        "gauss1": lambda x: np.exp(-0.5 * np.sum((x - 1.0) ** 2, axis=-1)),
        "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-2.0 * x[..., 0])),
        "clamp": lambda x: np.clip(x[..., 0], -1.0, 1.0),
        "const": lambda x: np.ones(x.shape[:-1]),
    }


def empirical_concentration(positions: np.ndarray, G: ScalarField, N: int, d: int,
                            phis: dict | None = None) -> dict:
    """Monte Carlo ``E[(<mu^N - G, phi>)^2]`` with its standard error, per test function."""
    phis = phis or phi_library()
    pts = np.asarray(positions, dtype=float).reshape(-1, N, d)
    nodes = G.grid.points_array()
    out = {}
    for name, phi in phis.items():
        g_mean = core.integrate_values(phi(nodes).reshape(G.grid.shape) * G.values, G.grid)
        if name == "const":
            g_mean = 1.0
        dev = phi(pts).mean(axis=1) - g_mean
        sq = dev * dev
        se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else 0.0
        out[name] = (float(sq.mean()), se)
    return out


def iid_concentration(G: ScalarField, N: int, phi) -> float:
    """``Var_G(phi) / N``, the value for independent particles."""
    nodes = G.grid.points_array()
    v = phi(nodes).reshape(G.grid.shape)
    m1 = core.integrate_values(v * G.values, G.grid)
    m2 = core.integrate_values(v * v * G.values, G.grid)
    return (m2 - m1 * m1) / N


# --------------------------------------------------------------------------
# the sweep


COLUMNS = ["N", "W1_marg1", "W1_marg2", "entropy_HN", "entropy_ref", "relative_entropy",
           "fisher", "relative_fisher", "TV_marg1", "hwi_slack", "survival_at_t",
           "per_particle_path_entropy"]


@dataclass
class SweepConfig:
    Ns: list = field(default_factory=lambda: [2, 3, 4])
    d: int = 1
    extent: float = 5.0
    points: int = 24
    trap: str = "harmonic"
    pair_amplitude: float = 2.0
    pair_width: float = 0.5
    stencil: int = 4
    tol: float = 1e-13
    delta: float = 4.0 / 51.0
    radius_law: str = "interaction"
    radius_scale: float = 1.0
    radius_delta: float = 4.0 / 51.0
    dt: float = 0.005
    T: float = 0.5
    t_survival: float = 0.5
    t_entropy: float = 0.5
    n_paths: int = 10000
    seed: int = 12345
    w2_samples: int = 512
    bootstrap: int = 32
    concentration_test: str = "gauss0"
    truncation: float = 1.0

    def validate(self):
        if not self.Ns or any(int(n) != n or n < 2 for n in self.Ns):
            raise ValidationError("Ns must be integers >= 2", "Ns")
        if sorted(set(self.Ns)) != list(self.Ns):
            raise ValidationError("Ns must be strictly increasing", "Ns")
        for name in ("extent", "dt", "T", "tol", "pair_width", "truncation", "radius_scale"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive", name)
        if self.pair_amplitude < 0:
            raise ValidationError("pair_amplitude must be nonnegative", "pair_amplitude")
        if not 0 < self.t_survival <= self.T or not 0 < self.t_entropy <= self.T:
            raise ValidationError("survival/entropy times must lie in (0, T]", "t_survival")
        SimParams(self.dt, self.T, self.n_paths, self.seed)
        return self


@dataclass
class ChaosReport:
    rows: list
    metadata: dict

    def table(self):
        return [[row[c] for c in COLUMNS] for row in self.rows]

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "rows": self.rows}, indent=2,
                          sort_keys=True)


def _product_ref(rho1: ScalarField, N: int) -> ScalarField:
    return ScalarField.density_from(rho1.grid.with_dim(rho1.grid.dim * N),
                                    core.tensor_power(rho1, N).values)


def limit_problem(cfg: SweepConfig) -> GpProblem:
    grid = Grid(cfg.d, cfg.extent, cfg.points)
    w = gaussian_pair(cfg.pair_amplitude, cfg.pair_width) if cfg.pair_amplitude > 0 else None
    return GpProblem(grid, cfg.trap, 0.0, kernel=w, stencil=cfg.stencil)


def sweep_row(cfg: SweepConfig, N: int, gp_sol) -> dict:
    d = cfg.d
    grid1 = gp_sol.problem.grid
    w = gaussian_pair(cfg.pair_amplitude, cfg.pair_width) if cfg.pair_amplitude > 0 else no_pair
    pair = mean_field_pair(w, N)
    pb = NBodyProblem(N, d, grid1, cfg.trap, pair, cfg.stencil,
                      label=f"{d}D mean-field analog, v_N = w/N")
    state = ground_state(pb, tol=cfg.tol)
    rho_gp = gp_sol.rho
    metric = Metric(truncation=cfg.truncation)
    m1 = core.marginalize(state.rho, 1, d)
    m2 = core.marginalize(state.rho, 2, d)
    ref2 = _product_ref(rho_gp, 2)
    refN = _product_ref(rho_gp, N)
    row = {"N": N, "energy_per_particle": state.per_particle_energy,
           "ground_state_iterations": state.iterations}
    row["W1_marg1"] = wasserstein(m1, rho_gp, 1, metric, d)
    row["W1_marg2"] = wasserstein(m2, ref2, 1, metric, d)
    hwi = hwi_report(state.rho, refN, N, d, cfg.w2_samples, cfg.bootstrap, cfg.seed + N)
    row["entropy_HN"] = hwi["entropy_joint"]
    row["entropy_ref"] = hwi["entropy_ref"]
    row["entropy_gap"] = hwi["entropy_distance_lhs"]
    row["relative_entropy"] = hwi["H"]
    row["fisher"] = hwi["fisher_joint"]
    row["fisher_ref"] = hwi["fisher_ref"]
    row["relative_fisher"] = hwi["I_rel"]
    row["TV_marg1"] = total_variation(m1, rho_gp)
    row["hwi_slack"] = hwi["hwi_slack"]
    row["hwi_slack_stderr"] = hwi["hwi_slack_stderr"]
    row["entropy_distance_slack"] = hwi["entropy_distance_slack"]
    row["entropy_distance_slack_stderr"] = hwi["entropy_distance_slack_stderr"]
    row["W2"] = hwi["W2"]
    row["W2_stderr"] = hwi["W2_stderr"]
    # the same sample streams as the HWI estimate
    xs = sample_field(state.rho, cfg.w2_samples, cfg.seed + N, stream=1)
    ys = sample_field(refN, cfg.w2_samples, cfg.seed + N, stream=2)
    bound = w1_w2_bound_check(xs, ys, 4.0, d, metric)
    row["w1_w2_bound"] = {k: bound[k] for k in ("W1", "W2", "rhs", "holds")}
    # marginal relative entropy against the per-particle joint value
    h_m1 = relative_entropy(m1, rho_gp)
    row["marginal_relative_entropy"] = h_m1
    row["chain_rule_slack"] = hwi["H"] - h_m1
    # super-additivity of the unnormalized entropy over a two-block split
    k1 = N // 2
    h_joint = N * hwi["entropy_joint"]
    h_a = entropy(core.marginalize(state.rho, k1, d), None)
    h_b = entropy(core.marginalize(state.rho, N - k1, d), None)
    row["superadditivity_slack"] = h_joint - h_a - h_b
    row["joint_vs_marginal_entropy_slack"] = hwi["entropy_joint"] - entropy(m1, None)
    kl_m1 = h_m1
    kl_joint = N * hwi["H"]
    row["csiszar_kullback_slack_marg1"] = math.sqrt(0.5 * max(kl_m1, 0)) - row["TV_marg1"]
    row["csiszar_kullback_slack_joint"] = (math.sqrt(0.5 * max(kl_joint, 0))
                                           - total_variation(state.rho, refN))
    # diffusion: survival, path entropy, empirical-measure concentration
    params = SimParams(cfg.dt, cfg.T, cfg.n_paths, cfg.seed + 1000 * N)
    ens = simulate(GridDrift(state.drift, pb.joint_grid), state.rho, params)
    radius = interaction_radius(N, cfg.radius_delta, d, cfg.radius_law, cfg.radius_scale)
    rec = stopping_times(ens, N, d, cfg.radius_delta, radius=radius)
    p, pse = survival_probability(rec, cfg.t_survival)
    row["stopping_radius"] = radius
    row["survival_at_t"] = p
    row["survival_stderr"] = pse
    u = ProductDrift(GridDrift(gp_drift(gp_sol), grid1), N, d)
    pe = path_relative_entropy(ens, None, u, cfg.t_entropy, N)
    row["per_particle_path_entropy"] = pe.per_particle
    row["per_particle_path_entropy_stderr"] = pe.per_particle_stderr
    row["path_escapes"] = ens.escapes
    conc = empirical_concentration(ens.positions[:, -1], rho_gp, N, d)
    row["concentration"] = conc[cfg.concentration_test][0]
    row["concentration_stderr"] = conc[cfg.concentration_test][1]
    row["concentration_all"] = {k: v[0] for k, v in conc.items()}
    return row


def chaos_sweep(cfg: SweepConfig, row_callback=None) -> ChaosReport:
    """Run every N of the sweep; a failing row is recorded with its error."""
    cfg.validate()
    gp_sol = minimize_gp(limit_problem(cfg), tol=1e-10)
    rows = []
    for N in cfg.Ns:
        try:
            row = sweep_row(cfg, N, gp_sol)
        except Exception as exc:  # recorded, not fatal
            row = {"N": N, "error": type(exc).__name__, "message": str(exc)}
            row.update({c: math.nan for c in COLUMNS if c != "N"})
        rows.append(row)
        if row_callback is not None:
            row_callback(row)
    meta = {
        "model": f"{cfg.d}D mean-field analog: v_N = w/N, w = gaussian("
                 f"{cfg.pair_amplitude}, {cfg.pair_width}); limit density from the Hartree functional",
        "w2_convention": "W2 = sqrt(inf E[(1/N) sum_i |x_i - y_i|^2])",
        "w1_metric": f"min(|x - y|, {cfg.truncation}) averaged over particles",
        "radius_law": cfg.radius_law, "radius_delta": cfg.radius_delta,
        "radius_scale": cfg.radius_scale,
        "radius_note": "free parameter for d != 3 (analog law)",
        "limit_energy": gp_sol.energy.total, "limit_lambda": gp_sol.lam,
        "log_concavity_defect": log_concavity_defect(gp_sol.rho),
        "config": asdict(cfg),
    }
    return ChaosReport(rows, meta)
