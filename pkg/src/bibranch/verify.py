"""Named cross-check scenarios with statistical gates and a JSON verdict.

Each scenario owns an environment, a seed, Monte Carlo sizes and a gate
configuration, and runs an ordered battery: environment validation, the
flow-property residual, ensemble mean versus the exact first moment, the
Laplace-transform agreement between simulation and the backward solver,
pathwise or distributional comparison, truncation monotonicity, extinction,
and weighted-functional identities.  Statistical failure is a red verdict,
never an exception; gates compare |estimate - exact| against sigma * SE,
falling back to an explicit O(step) bias floor on cells whose sample SE is
degenerate (deterministic environments).  The JSON report excludes runtimes
so identical seeds yield byte-identical reports at any thread count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cumulant import LadderNotConverged, _integrate_backward, extinction_prob, \
    laplace_transform, solve_backward
from .densities import Density, SignedMeasure1D
from .environment import EnvSpec, JumpKernel, validate
from .functionals import WeightMeasure, mc_functional, solve_functional, solve_w
from .measures import Dirac, ExpProduct, StableAxis
from .moments import first_moment
from .noise import NoiseStream
from .simulate import SimOptions, coupled_order_violations, extinction_frequency, \
    simulate_ensemble, state_variance_finite, truncate_large_jumps

__all__ = ["GateConfig", "Scenario", "CheckResult", "VerdictReport",
           "run_scenario", "run_suite", "suite", "reports_to_json"]


@dataclass(frozen=True)
class GateConfig:
    """Tolerances for every statistical gate; thresholds live here, not in code."""

    mc_sigma: float = 3.5
    hard_sigma: float = 6.0
    cell_pass_frac: float = 0.95
    moment_sigma: float = 4.0
    extinction_sigma: float = 4.0
    semigroup_tol: float = 1e-6
    det_floor_coeff: float = 50.0   # laplace-cell bias floor: coeff * step
    moment_floor_coeff: float = 5.0  # moment bias floor: coeff * step * max(1, |M|)
    reduction_tol: float = 1e-9
    terminal_identity_tol: float = 1e-8
    trunc_levels: tuple = (1.0, 2.0, 4.0, 8.0)
    se_degenerate: float = 1e-12


ALL_CHECKS = ("validation", "semigroup", "moment", "laplace", "comparison",
              "truncation", "extinction", "functional")


@dataclass(frozen=True)
class Scenario:
    name: str
    env: EnvSpec
    x0: tuple
    t: float
    checkpoints: tuple
    lam_grid: tuple
    n_paths: int
    seed: int
    step: float
    small_jump_mode: str = "drop"
    small_jump_eps: float = 1e-2
    zeta: WeightMeasure | None = None
    x0_high: tuple | None = None  # enables the distributional comparison gate
    coupled_pairs: int = 0  # pathwise ordering pairs (diffusion-free only)
    extinction_exact_one: bool = False
    extinction_coarse_step: float | None = None  # bias-refinement documentation
    truncation: bool = False
    checks: tuple = ALL_CHECKS
    gates: GateConfig = field(default_factory=GateConfig)

    def sim_options(self, step=None) -> SimOptions:
        return SimOptions(step=step or self.step, small_jump_eps=self.small_jump_eps,
                          small_jump_mode=self.small_jump_mode)


@dataclass
class CheckResult:
    name: str
    statistic: float
    threshold: float
    passed: bool
    runtime: float = 0.0


@dataclass
class VerdictReport:
    scenario: str
    checks: list
    passed: bool
    runtime: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "checks": [
                {"name": c.name, "statistic": float(c.statistic),
                 "threshold": float(c.threshold), "pass": bool(c.passed)}
                for c in self.checks
            ],
            "pass": bool(self.passed),
        }


def reports_to_json(reports) -> str:
    payload = {
        "reports": [r.to_json_dict() for r in sorted(reports, key=lambda r: r.scenario)],
        "pass": all(r.passed for r in reports),
    }
    return json.dumps(payload, indent=2, sort_keys=True)


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def _gate_ratio(diff, se, sigma, floor, degenerate_se):
    """|diff| over its tolerance; tolerance is sigma*SE or the bias floor."""
    tol = sigma * se if se > degenerate_se else floor
    return abs(diff) / tol if tol > 0 else math.inf if diff != 0 else 0.0


def run_scenario(sc: Scenario) -> VerdictReport:
    checks: list[CheckResult] = []
    g = sc.gates
    noise = NoiseStream(sc.seed)
    t_start = time.perf_counter()
    with _Timer() as tm:
        report = validate(sc.env)
    checks.append(CheckResult("validation", float(len(report.violations)), 0.0,
                              report.passed, tm.elapsed))
    if not report.passed:
        return VerdictReport(sc.name, checks, False, time.perf_counter() - t_start)

    lam_ref = tuple(np.max(np.asarray(sc.lam_grid).reshape(-1, 2), axis=0)) \
        if sc.lam_grid else (1.0, 1.0)

    if "semigroup" in sc.checks:
        # 5x5 (r, s) grid with one outer solve and one inner solve per s
        with _Timer() as tm:
            worst = 0.0
            outer = solve_backward(sc.env, sc.t, lam_ref)
            for s in np.linspace(0.0, sc.t, 7)[1:-1]:
                inner = _integrate_backward(sc.env, float(s), outer.at(float(s)),
                                            None, r_end=0.0)
                for r in np.linspace(0.0, s, 5):
                    res = np.abs(outer.at(float(r)) - inner.at(float(r)))
                    worst = max(worst, float(res.max()))
        checks.append(CheckResult("semigroup", worst, g.semigroup_tol,
                                  worst < g.semigroup_tol, tm.elapsed))

    stats = None
    need_mc = {"moment", "laplace", "comparison", "extinction"} & set(sc.checks)
    if need_mc:
        with _Timer() as tm:
            stats = simulate_ensemble(sc.env, sc.x0, sc.t, sc.checkpoints,
                                      sc.lam_grid, sc.n_paths, sc.sim_options(), noise)
        mc_time = tm.elapsed

    # sample-SE gates on the plain mean are only calibrated when the state
    # has finite variance (uncapped power tails fail the second-moment
    # condition; their mean identity is covered through the Laplace gates)
    if "moment" in sc.checks and stats is not None and state_variance_finite(sc.env):
        with _Timer() as tm:
            curve = first_moment(sc.env, sc.x0, sc.t)
            worst = 0.0
            for a, cp in enumerate(stats.checkpoints):
                exact = curve.at(float(cp))
                for i in range(2):
                    floor = g.moment_floor_coeff * sc.step * max(1.0, abs(exact[i]))
                    worst = max(worst, _gate_ratio(stats.mean[a, i] - exact[i],
                                                   stats.se_mean[a, i],
                                                   g.moment_sigma, floor,
                                                   g.se_degenerate))
        checks.append(CheckResult("moment", worst, 1.0, worst <= 1.0,
                                  tm.elapsed + mc_time))

    if "laplace" in sc.checks and stats is not None and len(stats.lambdas):
        with _Timer() as tm:
            ratios, hard = [], []
            floor = g.det_floor_coeff * sc.step
            for a, cp in enumerate(stats.checkpoints):
                for l, lam in enumerate(stats.lambdas):
                    exact = laplace_transform(sc.env, sc.x0, 0.0, float(cp), lam)
                    diff = stats.laplace[a, l] - exact
                    se = stats.laplace_se[a, l]
                    ratios.append(_gate_ratio(diff, se, g.mc_sigma, floor, g.se_degenerate))
                    hard.append(_gate_ratio(diff, se, g.hard_sigma, floor, g.se_degenerate))
            frac = float(np.mean([r <= 1.0 for r in ratios]))
            worst_hard = float(max(hard))
        checks.append(CheckResult("laplace-cells", frac, g.cell_pass_frac,
                                  frac >= g.cell_pass_frac, tm.elapsed))
        checks.append(CheckResult("laplace-hard-cap", worst_hard, 1.0,
                                  worst_hard <= 1.0, 0.0))

    if "comparison" in sc.checks:
        diffusion_free = all(sc.env.c[i].is_zero for i in range(2))
        if sc.coupled_pairs and diffusion_free:
            with _Timer() as tm:
                x_hi = sc.x0_high or tuple(np.asarray(sc.x0) + 1.0)
                viol, _ = coupled_order_violations(
                    sc.env, sc.x0, x_hi, sc.t, sc.coupled_pairs,
                    sc.sim_options(), noise)
            checks.append(CheckResult("comparison-pathwise", float(viol), 0.0,
                                      viol == 0, tm.elapsed))
        if sc.x0_high is not None and stats is not None and len(stats.lambdas):
            with _Timer() as tm:
                n_high = max(sc.n_paths // 4, 2)
                high = simulate_ensemble(sc.env, sc.x0_high, sc.t, (sc.t,),
                                         sc.lam_grid, n_high, sc.sim_options(),
                                         NoiseStream(sc.seed + 1))
                worst = -math.inf
                for l in range(len(stats.lambdas)):
                    pooled = math.hypot(stats.laplace_se[-1, l], high.laplace_se[-1, l])
                    pooled = max(pooled, g.se_degenerate)
                    worst = max(worst, (high.laplace[-1, l] - stats.laplace[-1, l]) / pooled)
            checks.append(CheckResult("comparison-distributional", worst, g.mc_sigma,
                                      worst <= g.mc_sigma, tm.elapsed))

    if "truncation" in sc.checks and sc.truncation:
        with _Timer() as tm:
            v_full = solve_backward(sc.env, sc.t, lam_ref).at(0.0)
            vs = []
            for k in g.trunc_levels:
                env_k = truncate_large_jumps(sc.env, k)
                vs.append(solve_backward(env_k, sc.t, lam_ref).at(0.0))
            min_incr = min(float(np.min(b - a)) for a, b in zip(vs, vs[1:]))
            d_first = float(np.linalg.norm(vs[0] - v_full))
            d_last = float(np.linalg.norm(vs[-1] - v_full))
        checks.append(CheckResult("truncation-monotone", min_incr, 0.0,
                                  min_incr >= -1e-9, tm.elapsed))
        checks.append(CheckResult("truncation-converges",
                                  d_last / d_first if d_first > 0 else 0.0,
                                  1.0, d_last < d_first or d_first == 0.0, 0.0))

    if "extinction" in sc.checks and stats is not None:
        freq = float(stats.extinction[-1])
        if sc.extinction_exact_one:
            checks.append(CheckResult("extinction-exact", freq, 1.0, freq == 1.0, 0.0))
        else:
            try:
                with _Timer() as tm:
                    p_pred = extinction_prob(sc.env, sc.x0, sc.t)
                se = math.sqrt(max(freq * (1.0 - freq), 0.0) / sc.n_paths)
                floor = g.moment_floor_coeff * sc.step
                ratio = _gate_ratio(freq - p_pred, se, g.extinction_sigma, floor,
                                    g.se_degenerate)
                checks.append(CheckResult("extinction", ratio, 1.0, ratio <= 1.0,
                                          tm.elapsed))
                if sc.extinction_coarse_step is not None:
                    with _Timer() as tm:
                        pc, _ = extinction_frequency(
                            sc.env, sc.x0, sc.t, sc.n_paths,
                            sc.sim_options(step=sc.extinction_coarse_step),
                            NoiseStream(sc.seed + 2))
                    bias_fine = abs(freq - p_pred)
                    bias_coarse = abs(pc - p_pred)
                    checks.append(CheckResult(
                        "extinction-bias-monotone",
                        bias_fine / bias_coarse if bias_coarse > 0 else 0.0,
                        1.0, bias_fine <= bias_coarse, tm.elapsed))
            except LadderNotConverged:
                pass  # gate applies only when the ladder is decisive

    if "functional" in sc.checks and sc.zeta is not None:
        with _Timer() as tm:
            u0 = solve_functional(sc.env, WeightMeasure.zero(), sc.t, lam_ref).at(0.0)
            v0 = solve_backward(sc.env, sc.t, lam_ref).at(0.0)
            red = float(np.max(np.abs(u0 - v0)))
        checks.append(CheckResult("functional-reduction", red, g.reduction_tol,
                                  red <= g.reduction_tol, tm.elapsed))
        with _Timer() as tm:
            theta = 1.3
            zt = WeightMeasure((
                SignedMeasure1D(Density.zero(), ((sc.t, theta),)),
                SignedMeasure1D.zero()))
            w_term = solve_w(sc.env, zt, 0.0, sc.t)
            v_term = solve_backward(sc.env, sc.t, (theta, 0.0)).at(0.0)
            term = float(np.max(np.abs(w_term - v_term)))
        checks.append(CheckResult("functional-terminal-identity", term,
                                  g.terminal_identity_tol,
                                  term <= g.terminal_identity_tol, tm.elapsed))
        with _Timer() as tm:
            w = solve_w(sc.env, sc.zeta, 0.0, sc.t)
            pred = float(np.exp(-np.asarray(sc.x0) @ w))
            est, se = mc_functional(sc.env, sc.x0, sc.zeta, 0.0, sc.t,
                                    sc.n_paths, sc.sim_options(), noise)
            floor = g.det_floor_coeff * sc.step
            ratio = _gate_ratio(est - pred, se, g.mc_sigma, floor, g.se_degenerate)
        checks.append(CheckResult("functional-mc", ratio, 1.0, ratio <= 1.0,
                                  tm.elapsed))

    return VerdictReport(sc.name, checks, all(c.passed for c in checks),
                         time.perf_counter() - t_start)


def run_suite(scenarios=None, threads: int | None = None):
    """Run scenarios (in parallel when threads > 1), ordered by name."""
    if scenarios is None:
        scenarios = suite()
    if threads is None or threads <= 1:
        reports = [run_scenario(s) for s in scenarios]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run_scenario, scenarios))
    return sorted(reports, key=lambda r: r.scenario)


# -- the built-in suite -------------------------------------------------------


def _const(v: float) -> SignedMeasure1D:
    return SignedMeasure1D.const(v)


def _zero() -> SignedMeasure1D:
    return SignedMeasure1D.zero()


def _atoms(*pairs) -> SignedMeasure1D:
    return SignedMeasure1D(Density.zero(), tuple(pairs))


def _env(b11=None, b12=None, b21=None, b22=None, c1=None, c2=None,
         m1=None, m2=None, horizon=1.0) -> EnvSpec:
    return EnvSpec(
        b=((b11 or _zero(), b12 or _zero()), (b21 or _zero(), b22 or _zero())),
        c=(c1 or _zero(), c2 or _zero()),
        m=(m1 or JumpKernel.zero(), m2 or JumpKernel.zero()),
        horizon=horizon,
    )


def feller_embed_env() -> EnvSpec:
    """One-type subcritical square-root branching embedded as type 1."""
    return _env(b11=_const(1.0), c1=_const(0.5))


def stable_jump_env() -> EnvSpec:
    return _env(
        b11=_const(0.5),
        m1=JumpKernel(((Density.constant(0.5), StableAxis(0, 1.5, 0.15)),)),
    )


def dirac_cross_env() -> EnvSpec:
    return _env(
        b11=_const(0.4), b12=_const(0.1), b22=_const(0.1),
        m1=JumpKernel(((Density.constant(1.0), Dirac((0.5, 0.2), 1.0)),)),
        m2=JumpKernel(((Density.constant(0.7), ExpProduct(3.0, 2.0, 0.5)),)),
    )


def atom_rich_env() -> EnvSpec:
    return _env(
        b11=_atoms((0.3, 0.5), (0.6, 1.0)),
        b12=_atoms((0.5, 0.2)),
        b21=_const(0.1), b22=_const(0.2),
        m2=JumpKernel((), ((0.45, Dirac((0.2, 0.5), 0.3)),)),
    )


LAM_GRID_TWO = ((0.5, 0.25), (1.0, 0.5), (2.0, 1.0), (4.0, 2.0))
LAM_GRID_ONE = ((0.5, 0.0), (1.0, 0.0), (2.0, 0.0), (4.0, 0.0))
CHECKPOINTS = (0.35, 0.7, 1.0)


def suite():
    """Built-in scenarios; fixed seeds make the whole run reproducible."""
    scenarios = [
        Scenario("zero-env", EnvSpec.zero(1.0), (1.0, 0.5), 1.0, CHECKPOINTS,
                 LAM_GRID_TWO, 100_000, 101, 1e-3, coupled_pairs=1000),
        Scenario("linear-deterministic",
                 _env(b11=_const(0.8), b12=_const(0.4), b21=_const(0.2),
                      b22=_const(-0.3)),
                 (1.0, 2.0), 1.0, CHECKPOINTS, LAM_GRID_TWO, 100_000, 102, 1e-4,
                 coupled_pairs=1000),
        Scenario("feller-embed", feller_embed_env(), (1.0, 0.0), 1.0, CHECKPOINTS,
                 LAM_GRID_ONE, 100_000, 103, 1e-4, x0_high=(2.0, 0.0),
                 extinction_coarse_step=4e-2),
        Scenario("decoupled-two-type",
                 _env(b11=_const(0.6), c1=_const(0.3), b22=_const(-0.2),
                      c2=_const(0.2),
                      m1=JumpKernel(((Density.constant(0.5), Dirac((0.4, 0.0), 1.0)),)),
                      m2=JumpKernel(((Density.constant(0.4), Dirac((0.0, 0.3), 1.0)),))),
                 (1.0, 2.0), 1.0, CHECKPOINTS, LAM_GRID_TWO, 100_000, 104, 1e-4,
                 x0_high=(2.0, 3.0)),
        Scenario("dirac-cross", dirac_cross_env(), (1.0, 1.0), 1.0, CHECKPOINTS,
                 LAM_GRID_TWO, 100_000, 105, 1e-3, x0_high=(2.0, 1.5),
                 coupled_pairs=1000),
        Scenario("stable-jump", stable_jump_env(), (1.0, 0.0), 1.0, CHECKPOINTS,
                 LAM_GRID_ONE, 100_000, 106, 1e-3, small_jump_mode="gaussian",
                 coupled_pairs=1000, truncation=True, x0_high=(2.0, 0.0)),
        Scenario("stable-jump-capped", truncate_large_jumps(stable_jump_env(), 2.0),
                 (1.0, 0.0), 1.0, CHECKPOINTS, LAM_GRID_ONE, 100_000, 107, 1e-3,
                 small_jump_mode="gaussian", coupled_pairs=1000),
        Scenario("atom-rich", atom_rich_env(), (1.0, 1.0), 1.0, (0.4, 0.7, 1.0),
                 LAM_GRID_TWO, 100_000, 108, 1e-3, coupled_pairs=1000,
                 x0_high=(2.0, 2.0)),
        Scenario("bottleneck", _env(b11=_atoms((0.5, 1.0))), (1.0, 0.0), 1.0,
                 (0.4, 1.0), LAM_GRID_ONE, 100_000, 109, 1e-3,
                 extinction_exact_one=True, coupled_pairs=1000),
        Scenario("functional-density", feller_embed_env(), (1.0, 0.0), 1.0,
                 (1.0,), LAM_GRID_ONE, 100_000, 110, 1e-3,
                 zeta=WeightMeasure((_const(1.0), _zero())),
                 checks=("validation", "functional")),
        Scenario("functional-atoms", dirac_cross_env(), (1.0, 1.0), 1.0,
                 (1.0,), LAM_GRID_TWO, 100_000, 111, 1e-3,
                 zeta=WeightMeasure((_atoms((0.4, 0.6)), _atoms((0.7, 0.5)))),
                 checks=("validation", "functional")),
        Scenario("functional-terminal-atom", feller_embed_env(), (1.0, 0.0), 1.0,
                 (1.0,), LAM_GRID_ONE, 100_000, 112, 1e-3,
                 zeta=WeightMeasure((_atoms((1.0, 2.0)), _zero())),
                 checks=("validation", "functional")),
    ]
    return scenarios
