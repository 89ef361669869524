"""Runnable property suites: lemma-level checks with measured margins.

Each suite exercises one module's contract inequalities on randomized inputs
(seeded, hence reproducible) and reports measured worst cases against their
bounds. The suites back the ``verify`` CLI subcommand and the acceptance
tests. Checks resolve the functions they exercise through the module objects
at call time, so a monkeypatched (or broken) implementation is what actually
gets measured.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import density, filters, gaussian, model, operators

SUITE_NAMES = ("gaussian", "density", "operators", "filters", "model")


@dataclass(frozen=True)
class PropertyResult:
    """Outcome of one property check: worst measured value against its bound."""

    suite: str
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return (f"{tag}  {self.suite}.{self.name}  "
                f"measured={self.measured:.6g}  bound={self.bound:.6g}{extra}")


# -- randomized inputs ----------------------------------------------------------


def _random_gaussian(rng: np.random.Generator, n: int) -> gaussian.GaussianMeasure:
    """Mean in [-1, 1]^n, covariance eigenvalues in [0.3, 3]."""
    mean = rng.uniform(-1.0, 1.0, n)
    eigs = rng.uniform(0.3, 3.0, n)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    cov = (q * eigs) @ q.T
    return gaussian.GaussianMeasure(mean, 0.5 * (cov + cov.T))


def _random_joint_1x1(rng: np.random.Generator) -> gaussian.GaussianMeasure:
    """2x2 joint (d = K = 1) with eigenvalues in [0.3, 3] and |correlation| <= 0.9."""
    while True:
        g = _random_gaussian(rng, 2)
        corr = g.cov[0, 1] / math.sqrt(g.cov[0, 0] * g.cov[1, 1])
        if abs(corr) <= 0.9:
            return g


def _pair_box(g1: gaussian.GaussianMeasure, g2: gaussian.GaussianMeasure,
              width: float = 6.5) -> tuple[np.ndarray, np.ndarray]:
    """A box covering both Gaussians out to ``width`` standard deviations."""
    los, his = [], []
    for g in (g1, g2):
        r = width * math.sqrt(float(np.linalg.eigvalsh(g.cov).max()))
        los.append(g.mean - r)
        his.append(g.mean + r)
    return np.minimum(*los), np.maximum(*his)


def _gridded_pair(g1, g2, shape):
    lo, hi = _pair_box(g1, g2)
    return (density.from_gaussian(g1, lo, hi, shape),
            density.from_gaussian(g2, lo, hi, shape))


def _flat_mesh(mu: density.GridDensity) -> np.ndarray:
    return np.stack([c.reshape(-1) for c in density.coordinate_grids(mu)], axis=-1)


def _kl_quadrature(mu1: density.GridDensity, g1: gaussian.GaussianMeasure,
                   g2: gaussian.GaussianMeasure) -> float:
    """Quadrature of rho1 (log phi1 - log phi2) over mu1's grid."""
    mesh = _flat_mesh(mu1)
    diff = gaussian.log_density_at(g1, mesh) - gaussian.log_density_at(g2, mesh)
    w = density.weight_tensor(mu1.box_lo, mu1.box_hi, mu1.shape).reshape(-1)
    return float(np.sum(w * mu1.values.reshape(-1) * diff))


def _grid_kl_to_gaussian(mu: density.GridDensity, g: gaussian.GaussianMeasure) -> float:
    """Quadrature KL(mu || g) for a grid density against a Gaussian."""
    logphi = gaussian.log_density_at(g, _flat_mesh(mu))
    vals = mu.values.reshape(-1)
    w = density.weight_tensor(mu.box_lo, mu.box_hi, mu.shape).reshape(-1)
    mask = vals > 0.0
    return float(np.sum(w[mask] * vals[mask] * (np.log(vals[mask]) - logphi[mask])))


def _random_mixture(rng: np.random.Generator, lo, hi, shape) -> density.GridDensity:
    """Gaussian mixture gridded on a fixed box; 2 or 3 well-contained modes."""
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    n = lo.size
    k = int(rng.integers(2, 4))
    centers = rng.uniform(lo * 0.4, hi * 0.4, size=(k, n))
    stds = rng.uniform(0.4, 1.2, size=(k, n))
    weights = rng.dirichlet(np.ones(k))

    def pdf(x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[0])
        for i in range(k):
            z = (x - centers[i]) / stds[i]
            norm = np.prod(stds[i]) * (2.0 * np.pi) ** (n / 2.0)
            out += weights[i] * np.exp(-0.5 * np.sum(z * z, axis=1)) / norm
        return out

    return density.from_function(pdf, lo, hi, shape)


# -- gaussian suite -------------------------------------------------------------


def check_kl_zero_and_nonnegative(seed: int = 0, pairs: int = 100) -> PropertyResult:
    """KL(mu, mu) = 0 and KL >= 0 on random pairs of matched dimension."""
    rng = np.random.default_rng([seed, 1])
    worst_self, worst_cross = 0.0, np.inf
    for _ in range(pairs):
        n = int(rng.integers(1, 4))
        a, b = _random_gaussian(rng, n), _random_gaussian(rng, n)
        worst_self = max(worst_self, abs(gaussian.kl_divergence(a, a)))
        worst_cross = min(worst_cross,
                          gaussian.kl_divergence(a, b), gaussian.kl_divergence(b, a))
    passed = worst_self <= 1e-12 and worst_cross >= -1e-12
    return PropertyResult("gaussian", "kl_zero_and_nonnegative", passed,
                          measured=min(worst_cross, -worst_self), bound=0.0,
                          detail=f"min cross-KL {worst_cross:.3g}, max self-KL {worst_self:.3g}")


def check_pinsker(seed: int = 0, pairs: int = 100) -> PropertyResult:
    """d_g^2 <= 2 (mu1[g^2] + mu2[g^2]) KL, quadrature d_g and KL, both KL directions."""
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for i in range(pairs):
        n = 1 if i % 2 == 0 else 2
        shape = (2048,) if n == 1 else (192, 192)
        a, b = _random_gaussian(rng, n), _random_gaussian(rng, n)
        ga, gb = _gridded_pair(a, b, shape)
        dg = density.dg_distance(ga, gb)
        cap = 2.0 * (gaussian.g2_moment(a) + gaussian.g2_moment(b))
        for kl in (_kl_quadrature(ga, a, b), _kl_quadrature(gb, b, a)):
            worst = max(worst, dg**2 / max(cap * kl, 1e-300))
    return PropertyResult("gaussian", "pinsker", worst <= 1.0, worst, 1.0,
                          detail=f"{pairs} pairs, both directions")


def check_dg_bound_dominates(seed: int = 0, pairs: int = 100) -> PropertyResult:
    """The closed-form Gaussian d_g bound dominates the quadrature distance."""
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for i in range(pairs):
        n = 1 if i % 2 == 0 else 2
        shape = (2048,) if n == 1 else (192, 192)
        a, b = _random_gaussian(rng, n), _random_gaussian(rng, n)
        ga, gb = _gridded_pair(a, b, shape)
        dg = density.dg_distance(ga, gb)
        worst = max(worst, dg / max(gaussian.dg_upper_bound(a, b), 1e-300))
    return PropertyResult("gaussian", "dg_bound_dominates", worst <= 1.0, worst, 1.0,
                          detail=f"{pairs} pairs, 1-D and 2-D")


def check_conditioning_matches_bayes(seed: int = 0, cases: int = 20) -> PropertyResult:
    """Closed-form conditioning matches the grid-Bayes oracle in both moments."""
    rng = np.random.default_rng([seed, 4])
    blocks = gaussian.BlockStructure(1, 1)
    worst = 0.0
    for _ in range(cases):
        joint = _random_joint_1x1(rng)
        yd = rng.uniform(-2.0, 2.0, 1)
        exact = gaussian.condition(joint, blocks, yd)
        lo, hi = _pair_box(joint, joint)
        grid = density.from_gaussian(joint, lo, hi, (384, 384), blocks=blocks)
        mom = density.moments(operators.bayes(grid, yd))
        worst = max(worst, float(abs(mom.mean[0] - exact.mean[0])),
                    float(abs(mom.cov[0, 0] - exact.cov[0, 0])))
    return PropertyResult("gaussian", "conditioning_matches_bayes", worst <= 5e-3,
                          worst, 5e-3, detail=f"{cases} random joints, moment error")


def check_conditioning_spd(seed: int = 0, cases: int = 100) -> PropertyResult:
    """Conditioned covariances stay positive definite (Cholesky succeeds)."""
    rng = np.random.default_rng([seed, 5])
    min_eig = np.inf
    for _ in range(cases):
        d, K = (1, 1) if rng.random() < 0.5 else (2, 1)
        joint = _random_gaussian(rng, d + K)
        blocks = gaussian.BlockStructure(d, K)
        out = gaussian.condition(joint, blocks, rng.uniform(-2.0, 2.0, K))
        gaussian.chol_spd(out.cov)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(out.cov).min()))
    return PropertyResult("gaussian", "conditioning_spd", min_eig > 0.0,
                          min_eig, 0.0, detail=f"{cases} joints, min output eigenvalue")


# -- density suite --------------------------------------------------------------


def check_moment_difference_bounds(seed: int = 1, pairs: int = 100) -> PropertyResult:
    """|M1 - M2| <= d_g/2 and ||C1 - C2|| <= (1 + |M1 + M2|/2) d_g on random pairs."""
    rng = np.random.default_rng([seed, 1])
    worst = -np.inf
    for i in range(pairs):
        if i % 5 == 4:
            lo, hi, shape = [-6.0, -6.0], [6.0, 6.0], (96, 96)
        else:
            lo, hi, shape = [-8.0], [8.0], (512,)
        mu, nu = (_random_mixture(rng, lo, hi, shape) for _ in range(2))
        dg = density.dg_distance(mu, nu)
        a, b = density.moments(mu), density.moments(nu)
        mean_excess = float(np.linalg.norm(a.mean - b.mean)) - 0.5 * dg
        factor = 1.0 + 0.5 * float(np.linalg.norm(a.mean + b.mean))
        cov_excess = float(np.linalg.norm(a.cov - b.cov, 2)) - factor * dg
        worst = max(worst, mean_excess, cov_excess)
    return PropertyResult("density", "moment_difference_bounds", worst <= 1e-6,
                          worst, 1e-6, detail=f"{pairs} pairs, max excess over bound")


def check_metric_axioms(seed: int = 1, triples: int = 40) -> PropertyResult:
    """Symmetry, identity of indiscernibles, triangle inequality on a fixed grid."""
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    for _ in range(triples):
        a, b, c = (_random_mixture(rng, [-8.0], [8.0], (512,)) for _ in range(3))
        worst = max(worst,
                    abs(density.dg_distance(a, b) - density.dg_distance(b, a)),
                    density.dg_distance(a, a),
                    density.dg_distance(a, c)
                    - density.dg_distance(a, b) - density.dg_distance(b, c))
    return PropertyResult("density", "metric_axioms", worst <= 1e-12, worst, 1e-12,
                          detail=f"{triples} triples")


def check_projection_idempotent(seed: int = 1, cases: int = 25) -> PropertyResult:
    """Projecting the gridded projection reproduces the same Gaussian moments."""
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(cases):
        mu = _random_mixture(rng, [-8.0], [8.0], (512,))
        g = density.gaussian_projection(mu)
        again = density.gaussian_projection(density.from_gaussian(g))
        worst = max(worst, float(np.abs(again.mean - g.mean).max()),
                    float(np.abs(again.cov - g.cov).max()))
    return PropertyResult("density", "projection_idempotent", worst <= 1e-6,
                          worst, 1e-6, detail=f"{cases} densities")


def check_kl_minimizer(seed: int = 1, cases: int = 20, perturbations: int = 20) -> PropertyResult:
    """No perturbed Gaussian beats the moment-matched projection in quadrature KL."""
    rng = np.random.default_rng([seed, 4])
    worst = np.inf
    for _ in range(cases):
        mu = _random_mixture(rng, [-8.0], [8.0], (512,))
        g = density.gaussian_projection(mu)
        base = _grid_kl_to_gaussian(mu, g)
        for _ in range(perturbations):
            dm = rng.uniform(-0.2, 0.2, g.dim) * np.sqrt(np.diag(g.cov))
            ds = 1.0 + rng.uniform(-0.15, 0.15)
            other = gaussian.GaussianMeasure(g.mean + dm, g.cov * ds)
            worst = min(worst, _grid_kl_to_gaussian(mu, other) - base)
    return PropertyResult("density", "kl_minimizer", worst >= -1e-10, worst, 0.0,
                          detail=f"{cases}x{perturbations} perturbations, min KL gap")


# -- operators suite ------------------------------------------------------------


def _bounded_workspace() -> tuple[model.ModelSpec, operators.OperatorWorkspace]:
    spec = model.bounded_model_1d()
    return spec, operators.default_workspace(spec, [-7.0], [7.0], (512,))


def check_p_lipschitz(seed: int = 2, pairs: int = 50) -> PropertyResult:
    """d_g(P mu, P nu) <= (1 + kappa_psi^2 + tr Sigma) d_g(mu, nu) + 1e-3."""
    spec, ws = _bounded_workspace()
    rng = np.random.default_rng([seed, 1])
    L = filters.lipschitz_p(spec)
    worst = -np.inf
    for _ in range(pairs):
        mu, nu = (_random_mixture(rng, ws.state_lo, ws.state_hi, ws.state_shape)
                  for _ in range(2))
        lhs = density.dg_distance(operators.predict(mu, spec, ws),
                                  operators.predict(nu, spec, ws))
        worst = max(worst, lhs - L * density.dg_distance(mu, nu))
    return PropertyResult("operators", "p_lipschitz", worst <= 1e-3, worst, 1e-3,
                          detail=f"{pairs} pairs, constant {L:.3f}")


def check_q_lipschitz(seed: int = 2, pairs: int = 50) -> PropertyResult:
    """d_g(Q mu, Q nu) <= (1 + kappa_h^2 + tr Gamma) d_g(mu, nu) + 1e-3."""
    spec, ws = _bounded_workspace()
    rng = np.random.default_rng([seed, 2])
    L = filters.lipschitz_q(spec)
    worst = -np.inf
    for _ in range(pairs):
        mu, nu = (_random_mixture(rng, ws.state_lo, ws.state_hi, ws.state_shape)
                  for _ in range(2))
        lhs = density.dg_distance(operators.lift(mu, spec, ws),
                                  operators.lift(nu, spec, ws))
        worst = max(worst, lhs - L * density.dg_distance(mu, nu))
    return PropertyResult("operators", "q_lipschitz", worst <= 1e-3, worst, 1e-3,
                          detail=f"{pairs} pairs, constant {L:.3f}")


def check_pq_linear(seed: int = 2, pairs: int = 20) -> PropertyResult:
    """P and Q commute with convex combinations on the raw tensors."""
    spec, ws = _bounded_workspace()
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(pairs):
        mu, nu = (_random_mixture(rng, ws.state_lo, ws.state_hi, ws.state_shape)
                  for _ in range(2))
        alpha = float(rng.uniform(0.1, 0.9))
        combo = density.normalized(mu.box_lo, mu.box_hi,
                                   alpha * mu.values + (1 - alpha) * nu.values)
        for op in (operators.predict, operators.lift):
            mixed = op(combo, spec, ws).values
            split = alpha * op(mu, spec, ws).values + (1 - alpha) * op(nu, spec, ws).values
            worst = max(worst, float(np.abs(mixed - split).max() / split.max()))
    return PropertyResult("operators", "pq_linear", worst <= 1e-9, worst, 1e-9,
                          detail=f"{pairs} combinations, relative tensor error")


def check_transport_equals_bayes(seed: int = 2, cases: int = 50) -> PropertyResult:
    """Transport equals conditioning on Gaussian joints at default resolution."""
    rng = np.random.default_rng([seed, 4])
    blocks = gaussian.BlockStructure(1, 1)
    worst = 0.0
    for _ in range(cases):
        joint = _random_joint_1x1(rng)
        yd = rng.uniform(-2.0, 2.0, 1)
        grid = density.from_gaussian(joint, blocks=blocks)
        worst = max(worst, density.dg_distance(operators.transport(grid, yd),
                                               operators.bayes(grid, yd)))
    return PropertyResult("operators", "transport_equals_bayes", worst <= 5e-3,
                          worst, 5e-3, detail=f"{cases} Gaussian joints")


def check_mass_conservation(seed: int = 2, cases: int = 10) -> PropertyResult:
    """Every operator output integrates to one within 1e-8."""
    spec, ws = _bounded_workspace()
    rng = np.random.default_rng([seed, 5])
    worst = 0.0
    for _ in range(cases):
        mu = _random_mixture(rng, ws.state_lo, ws.state_hi, ws.state_shape)
        pred = operators.predict(mu, spec, ws)
        joint = operators.lift(pred, spec, ws)
        yd = rng.uniform(-1.0, 1.0, 1)
        for out in (pred, joint, operators.bayes(joint, yd), operators.transport(joint, yd)):
            w = density.weight_tensor(out.box_lo, out.box_hi, out.shape)
            worst = max(worst, abs(float(np.tensordot(out.values, w, axes=out.ndim)) - 1.0))
    return PropertyResult("operators", "mass_conservation", worst <= 1e-8, worst, 1e-8,
                          detail=f"{cases} chains of P, Q, B, T")


def check_moment_envelopes(seed: int = 2, cases: int = 50) -> PropertyResult:
    """Predicted and lifted moments stay inside their closed-form envelopes."""
    spec, ws = _bounded_workspace()
    rng = np.random.default_rng([seed, 6])
    mean_p, cov_lo, cov_hi = operators.prediction_envelope(spec)
    mean_qp, eig_lo, cov_up = operators.lifted_envelope(spec)
    worst = -np.inf
    for _ in range(cases):
        mu = _random_mixture(rng, ws.state_lo, ws.state_hi, ws.state_shape)
        pred = operators.predict(mu, spec, ws)
        pm = density.moments(pred)
        worst = max(worst,
                    float(np.linalg.norm(pm.mean)) - mean_p,
                    float(np.linalg.eigvalsh(cov_lo - pm.cov).max()),
                    float(np.linalg.eigvalsh(pm.cov - cov_hi).max()))
        jm = density.moments(operators.lift(pred, spec, ws))
        worst = max(worst,
                    float(np.linalg.norm(jm.mean)) - mean_qp,
                    eig_lo - float(np.linalg.eigvalsh(jm.cov).min()),
                    float(np.linalg.eigvalsh(jm.cov - cov_up).max()))
    return PropertyResult("operators", "moment_envelopes", worst <= 1e-3, worst, 1e-3,
                          detail=f"{cases} densities, max envelope excess")


# -- filters suite --------------------------------------------------------------


def _grid_view(measure, ws):
    if isinstance(measure, gaussian.GaussianMeasure):
        return density.from_gaussian(measure, ws.state_lo, ws.state_hi, ws.state_shape)
    return measure


def check_linear_collapse(seed: int = 3) -> PropertyResult:
    """All grid filter kinds reproduce the analytic Kalman moments on a linear model."""
    spec = model.linear_model_1d()
    traj = filters.generate_data(spec, J=10, seed=seed)
    runs = filters.run_filter(["true", "enkf_mf", "gpf_bg", "gpf_gt"], spec, traj,
                              filters.FilterConfig(seed=seed))
    exact = filters.kalman_analytic(spec, traj)
    worst = 0.0
    for res in runs.values():
        for step, g in enumerate(exact):
            worst = max(worst,
                        float(np.abs(res.diagnostics["mean"][step] - g.mean).max()),
                        float(np.abs(res.diagnostics["cov"][step] - g.cov).max()))
    return PropertyResult("filters", "linear_collapse_moments", worst <= 5e-3,
                          worst, 5e-3, detail="4 kinds x 11 steps vs analytic Kalman")


def check_linear_collapse_dg(seed: int = 3) -> PropertyResult:
    """Grid filter laws stay d_g-close to the analytic Kalman law on a linear model."""
    spec = model.linear_model_1d()
    traj = filters.generate_data(spec, J=10, seed=seed)
    cfg = filters.FilterConfig(seed=seed)
    ws = filters.plan_workspace(spec, traj, cfg)
    runs = filters.run_filter(["true", "enkf_mf", "gpf_bg", "gpf_gt"], spec, traj, cfg, ws)
    exact = filters.kalman_analytic(spec, traj)
    worst = 0.0
    for res in runs.values():
        for step, g in enumerate(exact):
            worst = max(worst, density.dg_distance(_grid_view(res.measures[step], ws),
                                                   _grid_view(g, ws)))
    return PropertyResult("filters", "linear_collapse_dg", worst <= 1e-2, worst, 1e-2,
                          detail="4 kinds x 11 steps, weighted-TV to Kalman")


def check_linear_collapse_particles(seed: int = 3) -> PropertyResult:
    """The finite ensemble tracks the Kalman moments within Monte Carlo bands."""
    spec = model.linear_model_1d()
    traj = filters.generate_data(spec, J=10, seed=seed)
    res = filters.run_filter("enkf_N", spec, traj,
                             filters.FilterConfig(seed=seed, n_particles=4000))
    exact = filters.kalman_analytic(spec, traj)
    band = 6.0 / math.sqrt(4000.0)
    worst = 0.0
    for step, g in enumerate(exact):
        worst = max(worst,
                    float(np.abs(res.diagnostics["mean"][step] - g.mean).max()),
                    float(np.abs(res.diagnostics["cov"][step] - g.cov).max()))
    return PropertyResult("filters", "linear_collapse_particles", worst <= band,
                          worst, band, detail="N=4000, 6/sqrt(N) band")


def check_gpf_equivalence(seed: int = 3) -> PropertyResult:
    """Both forms of the Gaussian projected filter agree step by step."""
    spec = model.sweep_model(0.2)
    traj = filters.generate_data(spec, J=5, seed=seed + 8)
    runs = filters.run_filter(["gpf_bg", "gpf_gt"], spec, traj,
                              filters.FilterConfig(seed=seed))
    worst = max(runs["gpf_bg"].diagnostics["dg_vs_gpf_gt"])
    return PropertyResult("filters", "gpf_equivalence", worst <= 5e-3, worst, 5e-3,
                          detail="delta=0.2, J=5, per-step weighted TV")


def measure_sweep(deltas=model.SWEEP_DELTAS, J: int = 5, seed: int = 3,
                  config: filters.FilterConfig | None = None) -> list[dict]:
    """Run the nonlinearity sweep and measure (eps, filter errors) per delta.

    For each delta the true filter, the mean-field EnKF, and the Gaussian
    projected filter run on a shared workspace and one data realization;
    eps is the largest per-step distance from the lifted prediction to its
    Gaussian projection along the true chain, and the errors are the largest
    per-step distances of each approximate filter to the true one.
    """
    rows = []
    for delta in deltas:
        spec = model.sweep_model(float(delta))
        traj = filters.generate_data(spec, J=J, seed=seed)
        runs = filters.run_filter(["true", "enkf_mf", "gpf_bg"], spec, traj,
                                  config or filters.FilterConfig(seed=seed))
        eps = max(e for e in runs["true"].diagnostics["eps"] if e is not None)
        rows.append({
            "delta": float(delta),
            "eps_measured": float(eps),
            "err_enkf": float(max(runs["enkf_mf"].diagnostics["dg_vs_true"])),
            "err_gpf": float(max(runs["gpf_bg"].diagnostics["dg_vs_true"])),
        })
    return rows


def check_eps_scaling(seed: int = 3) -> list[PropertyResult]:
    """Filter errors vanish with eps at the Gaussian end and grow monotonically."""
    rows = measure_sweep(seed=seed)
    rows_sorted = sorted(rows, key=lambda r: r["eps_measured"])
    origin = max(rows[0]["eps_measured"], rows[0]["err_enkf"], rows[0]["err_gpf"])
    eps = [r["eps_measured"] for r in rows_sorted]
    step_gaps = []
    for key in ("err_enkf", "err_gpf"):
        vals = [r[key] for r in rows_sorted]
        step_gaps += [b - a for a, b in zip(vals, vals[1:])]
    ratio = max(max(r["err_enkf"], r["err_gpf"]) / r["eps_measured"] for r in rows)
    monotone = min(step_gaps) if step_gaps else 0.0
    return [
        PropertyResult("filters", "eps_scaling_origin", origin <= 2e-2, origin, 2e-2,
                       detail="eps and both errors at delta=0"),
        PropertyResult("filters", "eps_scaling_monotone", monotone >= -1e-9, monotone, 0.0,
                       detail=f"min error increment along eps={['%.3g' % e for e in eps]}"),
        PropertyResult("filters", "eps_error_ratio", math.isfinite(ratio), ratio,
                       float("inf"), detail="max err/eps across sweep (reported, not bounded)"),
    ]


def check_particle_convergence(seed: int = 3, replicates: int = 20) -> PropertyResult:
    """Moment error of the finite-N EnKF decays like N^(-1/2) toward the mean field."""
    spec = model.sweep_model(0.2)
    traj = filters.generate_data(spec, J=5, seed=seed + 4)
    ref = filters.run_filter("enkf_mf", spec, traj, filters.FilterConfig(seed=seed))
    sizes = (100, 1000, 10000)
    avg_err = []
    for n in sizes:
        errs = []
        for rep in range(replicates):
            rng = np.random.default_rng([seed, n, rep])
            ens = filters.Ensemble(gaussian.sample(spec.initial_law(), rng, n))
            err = 0.0
            for j in range(traj.J):
                ens = filters.step_enkf_particles(ens, spec, traj.data[j], rng)
                m, c = ens.moments()
                err += float(np.abs(m - ref.diagnostics["mean"][j + 1]).max()
                             + np.abs(c - ref.diagnostics["cov"][j + 1]).max())
            errs.append(err / traj.J)
        avg_err.append(np.mean(errs))
    slope = float(np.polyfit(np.log(sizes), np.log(avg_err), 1)[0])
    return PropertyResult("filters", "particle_convergence",
                          -0.7 <= slope <= -0.3, slope, -0.5,
                          detail=f"log-log slope over N={sizes}, {replicates} replicates,"
                                 " wanted in [-0.7, -0.3]")


def check_kappa_y_recorded(seed: int = 3, cases: int = 10) -> PropertyResult:
    """Generated trajectories record a kappa_y that dominates every datum."""
    rng = np.random.default_rng([seed, 9])
    worst = -np.inf
    for _ in range(cases):
        spec = model.sweep_model(float(rng.uniform(0.0, 0.3)))
        traj = filters.generate_data(spec, J=int(rng.integers(1, 8)),
                                     seed=int(rng.integers(0, 2**31)))
        norms = np.linalg.norm(traj.data, axis=1)
        worst = max(worst, float(norms.max() - traj.kappa_y))
    return PropertyResult("filters", "kappa_y_recorded", worst <= 0.0, worst, 0.0,
                          detail=f"{cases} trajectories, max |y| minus kappa_y")


# -- model suite ----------------------------------------------------------------


def check_config_roundtrip(seed: int = 4) -> PropertyResult:
    """ModelSpec -> config dict -> ModelSpec is the identity (same fingerprint)."""
    specs = [model.linear_model_1d(), model.bounded_model_1d(),
             model.sweep_model(0.1),
             model.ModelSpec(d=2, K=1,
                             psi=model.MapSpec("linear", {"matrix": [[0.8, 0.1], [0.0, 0.7]]}),
                             h=model.MapSpec("linear", {"matrix": [[1.0, 0.5]]}),
                             Sigma=0.2 * np.eye(2), Gamma=[[0.3]],
                             m0=np.zeros(2), S0=np.eye(2))]
    mism = 0
    for spec in specs:
        back = model.from_config(model.to_config(spec))
        if model.fingerprint(back) != model.fingerprint(spec):
            mism += 1
    return PropertyResult("model", "config_roundtrip", mism == 0, float(mism), 0.0,
                          detail=f"{len(specs)} models, fingerprint mismatches")


def check_probe_reproducible(seed: int = 4) -> PropertyResult:
    """Assumption probes are deterministic: two runs give identical values."""
    worst = 0.0
    for spec in (model.bounded_model_1d(), model.sweep_model(0.2)):
        r1 = model.validate_assumptions(spec)
        r2 = model.validate_assumptions(spec)
        for c1, c2 in zip(r1.checks, r2.checks):
            if c1.value is not None and c2.value is not None:
                worst = max(worst, abs(c1.value - c2.value))
            if c1.passed != c2.passed:
                worst = max(worst, 1.0)
    return PropertyResult("model", "probe_reproducible", worst == 0.0, worst, 0.0,
                          detail="two probe runs per model")


def check_assumptions_hold(seed: int = 4) -> PropertyResult:
    """Bounded scenario models certify their declared bounds; linear models flag exactness mode."""
    ok = True
    notes = []
    for spec in (model.bounded_model_1d(), model.sweep_model(0.0), model.sweep_model(0.3)):
        rep = model.validate_assumptions(spec)
        ok &= rep.passed and not rep.linear_exactness_mode
        notes.append("pass" if rep.passed else "fail")
    lin = model.validate_assumptions(model.linear_model_1d())
    ok &= lin.linear_exactness_mode
    notes.append("linear-mode" if lin.linear_exactness_mode else "linear-mode-missing")
    return PropertyResult("model", "assumptions_hold", bool(ok), 0.0 if ok else 1.0, 0.0,
                          detail=", ".join(notes))


# -- suite registry -------------------------------------------------------------

SUITES = {
    "gaussian": (check_kl_zero_and_nonnegative, check_pinsker, check_dg_bound_dominates,
                 check_conditioning_matches_bayes, check_conditioning_spd),
    "density": (check_moment_difference_bounds, check_metric_axioms,
                check_projection_idempotent, check_kl_minimizer),
    "operators": (check_p_lipschitz, check_q_lipschitz, check_pq_linear,
                  check_transport_equals_bayes, check_mass_conservation,
                  check_moment_envelopes),
    "filters": (check_linear_collapse, check_linear_collapse_dg,
                check_linear_collapse_particles, check_gpf_equivalence,
                check_eps_scaling, check_particle_convergence, check_kappa_y_recorded),
    "model": (check_config_roundtrip, check_probe_reproducible, check_assumptions_hold),
}


def run_suites(names, seed: int = 0) -> list[PropertyResult]:
    """Run the named suites; a raising check becomes a failed result, not a crash."""
    results: list[PropertyResult] = []
    for suite_name in names:
        if suite_name not in SUITES:
            raise ValueError(f"unknown suite '{suite_name}'; known: {sorted(SUITES)}")
        for check in SUITES[suite_name]:
            start = time.perf_counter()
            try:
                out = check(seed)
                out = list(out) if isinstance(out, list) else [out]
            except Exception as exc:  # noqa: BLE001 - failures are report contents
                out = [PropertyResult(suite_name, check.__name__.removeprefix("check_"),
                                      False, float("nan"), float("nan"),
                                      detail=f"error: {exc!r}")]
            elapsed = time.perf_counter() - start
            results.extend(
                PropertyResult(r.suite, r.name, r.passed, r.measured, r.bound,
                               r.detail, elapsed / len(out))
                for r in out)
    return results


def write_report(results: list[PropertyResult], path) -> None:
    """CSV report: one row per property with pass/fail and measured margins."""
    with open(path, "w", newline="") as fh:
        fh.write("suite,name,passed,measured,bound,seconds,detail\n")
        for r in results:
            fh.write(f"{r.suite},{r.name},{int(r.passed)},{r.measured:.17g},"
                     f"{r.bound:.17g},{r.seconds:.3f},\"{r.detail}\"\n")
