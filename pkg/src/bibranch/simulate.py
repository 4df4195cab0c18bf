"""Vectorized Monte Carlo engine for the two-type stochastic equation system.

One Euler step over (s, s+h] with no atoms, for each type i with j the other
type, using the uncompensated-cross form of the driving equations:

    X_i +=  [X_j b'_ji(s) - X_i b'_ii(s)] h                  drift (raw cross)
          + N(0, 2 c'_i(s) X_i h)                            white-noise part
          + sum of jump draws adding the full vector z       both kernels
          - X_i h * (own-kernel first-moment rate)           own compensator
          (cross-kernel jumps stay uncompensated; their compensator is the
           difference between bar_b and b, so this equals the compensated
           form with the augmented drift)

Finite-activity components draw Poisson(X_p * rate * mass * h) events from
the normalized spatial measure; power-tail components are split at a
threshold eps: exact thinning above, and below either the compensated
remainder is dropped or replaced by a variance-matched Gaussian.  At atom
times the branching update is exact:

    X_i(s) = X_i(s-) (1 - delta_i(s)) + X_j(s-) db_ji(s) + Poisson sums.

States are clamped at zero after every step; extinction is exact membership
of the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densities import Density, SignedMeasure1D
from .environment import EnvSpec, JumpKernel, atom_info, validate
from .noise import NoiseStream

__all__ = [
    "SimOptions",
    "SimulationError",
    "Trajectory",
    "EnsembleStats",
    "simulate_path",
    "simulate_atom",
    "simulate_ensemble",
    "coupled_pair",
    "coupled_order_violations",
    "truncate_large_jumps",
    "extinction_frequency",
    "state_variance_finite",
]


class SimulationError(RuntimeError):
    pass


def state_variance_finite(env: EnvSpec) -> bool:
    """Whether every jump component has a finite second moment.

    Uncapped power tails give the state infinite variance, which breaks
    sample-SE yardsticks for plain means (the Laplace side is unaffected).
    """
    for kern in env.m:
        for _, meas in kern.density_components:
            if meas.infinite_activity and getattr(meas, "cap", None) is None:
                return False
    return True


@dataclass(frozen=True)
class SimOptions:
    """Discretization controls for the path engine."""

    step: float = 1e-3
    small_jump_eps: float = 1e-2
    small_jump_mode: str = "drop"  # or "gaussian"
    du: float = 1e-3  # u-bin width for coupled diffusion
    jump_count_guard: float = 1e6  # expected events per path per step
    max_redominate: int = 60

    def __post_init__(self):
        if self.step <= 0 or self.small_jump_eps <= 0 or self.du <= 0:
            raise ValueError("step, small_jump_eps and du must be positive")
        if self.small_jump_mode not in ("drop", "gaussian"):
            raise ValueError("small_jump_mode must be 'drop' or 'gaussian'")


@dataclass
class Trajectory:
    """One simulated path on its time mesh (post-jump values at atoms)."""

    times: np.ndarray
    states: np.ndarray  # (k, 2)
    is_atom: np.ndarray  # (k,) bool
    left_states: np.ndarray  # (k, 2); equals states except at atoms
    absorbed_at: float | None

    def state_at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[max(k, 0)]


@dataclass
class EnsembleStats:
    """Monte Carlo aggregates at the requested checkpoints."""

    checkpoints: np.ndarray
    n_paths: int
    mean: np.ndarray  # (k, 2)
    var: np.ndarray  # (k, 2)
    se_mean: np.ndarray  # (k, 2)
    lambdas: np.ndarray  # (L, 2)
    laplace: np.ndarray  # (k, L)
    laplace_se: np.ndarray  # (k, L)
    extinction: np.ndarray  # (k,)


# -- step plan -------------------------------------------------------------


@dataclass
class _Channel:
    p: int  # driving kernel / thinning coordinate
    rates: np.ndarray  # per-interval event rate per unit mass of X_p
    sample: object  # callable (rng, n) -> (n, 2) normalized draws
    rates_dt: np.ndarray | None = None  # rates fused with the interval widths


@dataclass
class _AtomRand:
    keep: tuple  # 1 - delta_i
    cross: tuple  # raw cross atom masses feeding type i from type j
    jumps: tuple  # (p, mass, sampler) triples


class _StepPlan:
    def __init__(self, env: EnvSpec, t0: float, t: float, opts: SimOptions,
                 checkpoints=(), zeta=None):
        self.env = env
        self.opts = opts
        extra = []
        zeta_atoms = ()
        if zeta is not None:
            zeta_atoms = tuple(s for sm in zeta.per_type for s in sm.atom_times)
            for sm in zeta.per_type:
                extra.extend(sm.density.breakpoints(t0, t))
        required = sorted(
            set([t0, t])
            | set(c for c in checkpoints if t0 < c <= t)
            | set(env.atom_times(t0, t, extra=zeta_atoms))
            | set(env.density_breakpoints(t0, t))
            | set(extra)
        )
        mesh = [np.array([t0])]
        for a, b in zip(required[:-1], required[1:]):
            k = max(1, int(math.ceil((b - a) / opts.step - 1e-12)))
            mesh.append(np.linspace(a, b, k + 1)[1:])
        self.mesh = np.concatenate(mesh)
        left = self.mesh[:-1]
        self.dts = np.diff(self.mesh)

        self.b_diag = (env.b[0][0].density(left), env.b[1][1].density(left))
        self.b_feed = (env.b[1][0].density(left), env.b[0][1].density(left))
        self.c = (env.c[0].density(left), env.c[1].density(left))
        self.has_diffusion = (bool(np.any(self.c[0] > 0)), bool(np.any(self.c[1] > 0)))

        comp = [np.zeros_like(left), np.zeros_like(left)]
        gvar = [np.zeros_like(left), np.zeros_like(left)]
        self.channels: list[_Channel] = []
        for p in range(2):
            for rate, meas in env.m[p].density_components:
                rate_vals = np.asarray(rate(left), dtype=float) + np.zeros_like(left)
                if meas.infinite_activity:
                    eps = opts.small_jump_eps
                    cap = getattr(meas, "cap", None)
                    if cap is not None:
                        eps = min(eps, 0.5 * cap)
                    self.channels.append(_Channel(
                        p, rate_vals * meas.tail_mass(eps),
                        (lambda m, e: (lambda rng, n: m.tail_sample(rng, n, e)))(meas, eps),
                    ))
                    comp[p] += rate_vals * meas.tail_mean(eps)
                    if opts.small_jump_mode == "gaussian":
                        gvar[p] += rate_vals * meas.small_var(eps)
                else:
                    self.channels.append(_Channel(
                        p, rate_vals * meas.mass(),
                        (lambda m: (lambda rng, n: m.sample(rng, n)))(meas),
                    ))
                    comp[p] += rate_vals * meas.mean(p)
        self.comp = tuple(comp)
        self.gvar = tuple(gvar)

        # fused per-interval coefficients for the euler step
        self.lin_keep = tuple(1.0 - (self.b_diag[i] + self.comp[i]) * self.dts
                              for i in range(2))
        self.lin_feed = tuple(self.b_feed[i] * self.dts for i in range(2))
        self.diff_coef = tuple(2.0 * self.c[i] * self.dts for i in range(2))
        self.gvar_dt = tuple(self.gvar[i] * self.dts for i in range(2))
        for ch in self.channels:
            ch.rates_dt = ch.rates * self.dts

        self.atom_at: dict[int, _AtomRand] = {}
        atom_times = set(env.atom_times(t0, t))
        for k, s in enumerate(self.mesh):
            if s in atom_times:
                info = atom_info(env, s)
                jumps = []
                for p in range(2):
                    for meas in info.jumps[p]:
                        jumps.append((
                            p, meas.mass(),
                            (lambda m: (lambda rng, n: m.sample(rng, n)))(meas),
                        ))
                keep, cross = [], []
                for i in range(2):
                    j = 1 - i
                    delta_i = info.db[i][i] + sum(m.mean(i) for m in info.jumps[i])
                    keep.append(1.0 - delta_i)
                    cross.append(info.db[j][i])
                self.atom_at[k] = _AtomRand(tuple(keep), tuple(cross), tuple(jumps))

        self.index_of = {float(s): k for k, s in enumerate(self.mesh)}
        self.zeta = zeta
        if zeta is not None:
            self.zeta_density = np.column_stack([
                np.asarray(zeta.per_type[0].density(self.mesh), dtype=float) + np.zeros(len(self.mesh)),
                np.asarray(zeta.per_type[1].density(self.mesh), dtype=float) + np.zeros(len(self.mesh)),
            ])
            self.zeta_atom = {
                k: zeta.atom_vector(s)
                for k, s in enumerate(self.mesh)
                if np.any(zeta.atom_vector(s) != 0)
            }


def _scatter_jumps(counts, Z, out0, out1):
    idx = np.repeat(np.arange(counts.size), counts)
    n = counts.size
    out0 += np.bincount(idx, weights=Z[:, 0], minlength=n)
    out1 += np.bincount(idx, weights=Z[:, 1], minlength=n)


def _noise_term(coef: float, x, rng, n: int):
    g = x * coef
    np.sqrt(g, out=g)
    g *= rng.standard_normal(n)
    return g


def _euler_step(plan: _StepPlan, k: int, X: np.ndarray, rng) -> np.ndarray:
    n = X.shape[0]
    x0, x1 = X[:, 0], X[:, 1]
    new0 = x0 * plan.lin_keep[0][k]
    new0 += x1 * plan.lin_feed[0][k]
    new1 = x1 * plan.lin_keep[1][k]
    new1 += x0 * plan.lin_feed[1][k]
    if plan.has_diffusion[0]:
        new0 += _noise_term(plan.diff_coef[0][k], x0, rng, n)
    if plan.has_diffusion[1]:
        new1 += _noise_term(plan.diff_coef[1][k], x1, rng, n)
    if plan.gvar_dt[0][k] > 0:
        new0 += _noise_term(plan.gvar_dt[0][k], x0, rng, n)
    if plan.gvar_dt[1][k] > 0:
        new1 += _noise_term(plan.gvar_dt[1][k], x1, rng, n)
    for ch in plan.channels:
        r = ch.rates_dt[k]
        if r == 0.0:
            continue
        lam = X[:, ch.p] * r
        if lam.max(initial=0.0) > plan.opts.jump_count_guard:
            raise SimulationError(
                "step-overflow: expected jump count per step exceeds guard; reduce step"
            )
        counts = rng.poisson(lam)
        total = int(counts.sum())
        if total:
            Z = ch.sample(rng, total)
            _scatter_jumps(counts, Z, new0, new1)
    np.maximum(new0, 0.0, out=new0)
    np.maximum(new1, 0.0, out=new1)
    return np.column_stack([new0, new1])


def _atom_apply(atom: _AtomRand, X: np.ndarray, rng) -> np.ndarray:
    new0 = X[:, 0] * atom.keep[0] + X[:, 1] * atom.cross[0]
    new1 = X[:, 1] * atom.keep[1] + X[:, 0] * atom.cross[1]
    for p, mass, sampler in atom.jumps:
        counts = rng.poisson(X[:, p] * mass)
        total = int(counts.sum())
        if total:
            Z = sampler(rng, total)
            _scatter_jumps(counts, Z, new0, new1)
    np.maximum(new0, 0.0, out=new0)
    np.maximum(new1, 0.0, out=new1)
    return np.column_stack([new0, new1])


def _run(plan: _StepPlan, x0, n: int, rng, collectors=()):
    X = np.tile(np.asarray(x0, dtype=float), (n, 1))
    for c in collectors:
        c.begin(plan, X)
    for k in range(len(plan.mesh) - 1):
        X_prev = X
        X_pre = _euler_step(plan, k, X_prev, rng)
        atom = plan.atom_at.get(k + 1)
        X = _atom_apply(atom, X_pre, rng) if atom is not None else X_pre
        for c in collectors:
            c.after_step(k + 1, X_prev, X_pre, X, plan.dts[k])
    return X


# -- collectors -------------------------------------------------------------


class _TrajectoryCollector:
    def begin(self, plan, X):
        self.plan = plan
        k = len(plan.mesh)
        self.states = np.empty((k, 2))
        self.left = np.empty((k, 2))
        self.states[0] = X[0]
        self.left[0] = X[0]

    def after_step(self, k, X_prev, X_pre, X_post, dt):
        self.states[k] = X_post[0]
        self.left[k] = X_pre[0]

    def trajectory(self) -> Trajectory:
        mesh = self.plan.mesh
        is_atom = np.zeros(len(mesh), dtype=bool)
        for k in self.plan.atom_at:
            is_atom[k] = True
        dead = np.flatnonzero((self.states == 0.0).all(axis=1))
        absorbed = float(mesh[dead[0]]) if dead.size else None
        return Trajectory(mesh.copy(), self.states, is_atom, self.left, absorbed)


class _SnapshotCollector:
    def __init__(self, times):
        self.times = [float(t) for t in times]

    def begin(self, plan, X):
        self.idx = {plan.index_of[t]: t for t in self.times}
        self.snaps = {}
        if 0 in self.idx:
            self.snaps[self.idx[0]] = X.copy()

    def after_step(self, k, X_prev, X_pre, X_post, dt):
        if k in self.idx:
            self.snaps[self.idx[k]] = X_post.copy()


class _FunctionalCollector:
    """Pathwise accumulator of the closed-interval integral of X against zeta."""

    def begin(self, plan, X):
        self.plan = plan
        self.A = np.zeros(X.shape[0])
        start_atom = plan.zeta_atom.get(0) if plan.zeta is not None else None
        if start_atom is not None:
            self.A += X @ start_atom

    def after_step(self, k, X_prev, X_pre, X_post, dt):
        plan = self.plan
        zd = plan.zeta_density
        left = X_prev @ zd[k - 1]
        right = X_pre @ zd[k]
        self.A += 0.5 * dt * (left + right)
        atom = plan.zeta_atom.get(k)
        if atom is not None:
            self.A += X_post @ atom


# -- public operations -------------------------------------------------------


def simulate_path(env: EnvSpec, x0, t: float, opts: SimOptions, noise: NoiseStream,
                  path_id: int = 0, t0: float = 0.0) -> Trajectory:
    """Simulate one path on [t0, t], bit-reproducible in (seed, path_id)."""
    rng = noise.substream("path", path_id)
    plan = _StepPlan(env, t0, t, opts)
    coll = _TrajectoryCollector()
    _run(plan, x0, 1, rng, (coll,))
    return coll.trajectory()


def simulate_atom(env: EnvSpec, s: float, x_left, noise) -> np.ndarray:
    """Draw the exact branching update across the atom at time s."""
    rng = noise.substream("atom") if isinstance(noise, NoiseStream) else noise
    x = np.atleast_2d(np.asarray(x_left, dtype=float))
    info = atom_info(env, s)
    if info is None:
        out = x.copy()
    else:
        jumps = []
        for p in range(2):
            for meas in info.jumps[p]:
                jumps.append((p, meas.mass(), (lambda m: (lambda r, n: m.sample(r, n)))(meas)))
        keep, cross = [], []
        for i in range(2):
            j = 1 - i
            keep.append(1.0 - (info.db[i][i] + sum(m.mean(i) for m in info.jumps[i])))
            cross.append(info.db[j][i])
        out = _atom_apply(_AtomRand(tuple(keep), tuple(cross), tuple(jumps)), x, rng)
    return out[0] if np.ndim(x_left) == 1 else out


def simulate_ensemble(env: EnvSpec, x0, t: float, checkpoints, lam_grid, n_paths: int,
                      opts: SimOptions, noise: NoiseStream, t0: float = 0.0) -> EnsembleStats:
    """Independent paths, deterministic aggregates with standard errors."""
    if n_paths < 2:
        raise ValueError("need at least 2 paths for standard errors")
    checkpoints = sorted(set(float(c) for c in checkpoints) | {float(t)})
    lambdas = np.asarray(lam_grid, dtype=float).reshape(-1, 2) if len(lam_grid) else np.empty((0, 2))
    rng = noise.substream("ensemble")
    plan = _StepPlan(env, t0, t, opts, checkpoints=checkpoints)
    snap = _SnapshotCollector(checkpoints)
    _run(plan, x0, n_paths, rng, (snap,))

    k = len(checkpoints)
    mean = np.empty((k, 2))
    var = np.empty((k, 2))
    lap = np.empty((k, len(lambdas)))
    lap_se = np.empty((k, len(lambdas)))
    extinct = np.empty(k)
    rt = math.sqrt(n_paths)
    for a, cp in enumerate(checkpoints):
        X = snap.snaps[cp]
        mean[a] = X.mean(axis=0)
        var[a] = X.var(axis=0, ddof=1)
        extinct[a] = float(np.count_nonzero((X == 0.0).all(axis=1))) / n_paths
        if len(lambdas):
            W = np.exp(-X @ lambdas.T)
            lap[a] = W.mean(axis=0)
            lap_se[a] = W.std(axis=0, ddof=1) / rt
    return EnsembleStats(
        checkpoints=np.asarray(checkpoints),
        n_paths=n_paths,
        mean=mean,
        var=var,
        se_mean=np.sqrt(var) / rt,
        lambdas=lambdas,
        laplace=lap,
        laplace_se=lap_se,
        extinction=extinct,
    )


def extinction_frequency(env: EnvSpec, x0, t: float, n_paths: int, opts: SimOptions,
                         noise: NoiseStream):
    """Fraction of paths exactly at the origin at time t, with its SE."""
    stats = simulate_ensemble(env, x0, t, (t,), (), n_paths, opts, noise)
    p = float(stats.extinction[-1])
    se = math.sqrt(p * (1.0 - p) / n_paths)
    return p, se


# -- coupled simulation -------------------------------------------------------


def coupled_pair(env: EnvSpec, x0_low, x0_high, t: float, opts: SimOptions,
                 noise: NoiseStream, pair_id: int = 0):
    """Two coupled paths from ordered starts sharing jump marks and bin noise.

    Jumps use thinning against a common dominating level (accept a mark
    (s, z, u) iff u <= own X_p(s-)), which preserves the initial order
    exactly when there is no diffusion.  Diffusion shares per-u-bin normals
    of width ``du``; the partial bin reuses that bin's shared normal scaled
    by the fractional width (exact marginals, and coalesced pairs stay
    together), so order can be violated on a small fraction of steps,
    shrinking as du decreases.
    """
    x_low = np.asarray(x0_low, dtype=float)
    x_high = np.asarray(x0_high, dtype=float)
    if np.any(x_low > x_high):
        raise ValueError("need x0_low <= x0_high componentwise")
    rng = noise.substream("coupled", pair_id)
    plan = _StepPlan(env, 0.0, t, opts)
    mesh = plan.mesh
    n_pts = len(mesh)
    out = [np.empty((n_pts, 2)), np.empty((n_pts, 2))]
    left = [np.empty((n_pts, 2)), np.empty((n_pts, 2))]
    states = [x_low.copy(), x_high.copy()]
    out[0][0] = states[0]
    out[1][0] = states[1]
    left[0][0] = states[0]
    left[1][0] = states[1]
    u_max = 2.0 * max(1.0, float(states[1].max()))

    for k in range(n_pts - 1):
        top = max(float(states[0].max()), float(states[1].max()))
        while u_max < top:
            u_max *= 2.0
            if u_max > 1e12:
                raise SimulationError("domination-exceeded: state outgrew every retry level")
        dt = mesh[k + 1] - mesh[k]
        new = [s.copy() for s in states]
        for q in range(2):
            for i in range(2):
                j = 1 - i
                new[q][i] = (
                    states[q][i] * (1.0 - (plan.b_diag[i][k] + plan.comp[i][k]) * dt)
                    + states[q][j] * (plan.b_feed[i][k] * dt)
                )
        for i in range(2):
            if plan.has_diffusion[i]:
                du = opts.du
                nb = int(math.ceil(u_max / du)) + 1
                xi = rng.standard_normal(nb)
                cum = np.concatenate(([0.0], np.cumsum(xi)))
                scale = math.sqrt(2.0 * plan.c[i][k] * dt)
                for q in range(2):
                    f = int(states[q][i] // du)
                    frac = states[q][i] - f * du
                    g = cum[f] * math.sqrt(du) + xi[f] * math.sqrt(frac)
                    new[q][i] += scale * g
            if plan.gvar[i][k] > 0:
                for q in range(2):
                    new[q][i] += rng.standard_normal() * math.sqrt(
                        plan.gvar[i][k] * dt * states[q][i]
                    )
        for ch in plan.channels:
            r = ch.rates[k] * dt
            if r == 0.0:
                continue
            n_cand = rng.poisson(u_max * r)
            if n_cand:
                u = rng.random(n_cand) * u_max
                Z = ch.sample(rng, n_cand)
                for q in range(2):
                    acc = u <= states[q][ch.p]
                    if acc.any():
                        new[q] += Z[acc].sum(axis=0)
        states = [np.maximum(v, 0.0) for v in new]
        atom = plan.atom_at.get(k + 1)
        left[0][k + 1] = states[0]
        left[1][k + 1] = states[1]
        if atom is not None:
            pre = [s.copy() for s in states]
            det = [np.empty(2), np.empty(2)]
            for q in range(2):
                for i in range(2):
                    det[q][i] = pre[q][i] * atom.keep[i] + pre[q][1 - i] * atom.cross[i]
            for p, mass, sampler in atom.jumps:
                n_cand = rng.poisson(u_max * mass)
                if n_cand:
                    u = rng.random(n_cand) * u_max
                    Z = sampler(rng, n_cand)
                    for q in range(2):
                        acc = u <= pre[q][p]
                        if acc.any():
                            det[q] += Z[acc].sum(axis=0)
            states = [np.maximum(d, 0.0) for d in det]
        out[0][k + 1] = states[0]
        out[1][k + 1] = states[1]

    is_atom = np.zeros(n_pts, dtype=bool)
    for k in plan.atom_at:
        is_atom[k] = True

    def finish(values, lefts):
        dead = np.flatnonzero((values == 0.0).all(axis=1))
        absorbed = float(mesh[dead[0]]) if dead.size else None
        return Trajectory(mesh.copy(), values, is_atom, lefts, absorbed)

    return finish(out[0], left[0]), finish(out[1], left[1])


def coupled_order_violations(env: EnvSpec, x0_low, x0_high, t: float, n_pairs: int,
                             opts: SimOptions, noise: NoiseStream):
    """Vectorized coupled pairs for diffusion-free environments.

    Returns (violations, checks): the number of (pair, mesh point) events
    where the low path exceeds the high path in any coordinate, and the
    number of comparisons made.  With shared thinning and no diffusion the
    count is exactly zero.
    """
    if any(not env.c[i].is_zero for i in range(2)):
        raise ValueError("pathwise coupling check requires a diffusion-free environment")
    x_low = np.asarray(x0_low, dtype=float)
    x_high = np.asarray(x0_high, dtype=float)
    if np.any(x_low > x_high):
        raise ValueError("need x0_low <= x0_high componentwise")
    rng = noise.substream("coupled-batch")
    plan = _StepPlan(env, 0.0, t, opts)
    mesh = plan.mesh
    XL = np.tile(x_low, (n_pairs, 1))
    XH = np.tile(x_high, (n_pairs, 1))
    u_max = 2.0 * max(1.0, float(XH.max()))
    violations = 0
    checks = 0

    def jump_round(XL, XH, p, rate, sampler):
        n_cand = rng.poisson(rate, n_pairs)
        total = int(n_cand.sum())
        if not total:
            return
        u = rng.random(total) * u_max
        Z = sampler(rng, total)
        idx = np.repeat(np.arange(n_pairs), n_cand)
        for X in (XL, XH):
            acc = u <= X[idx, p]
            X[:, 0] += np.bincount(idx[acc], weights=Z[acc, 0], minlength=n_pairs)
            X[:, 1] += np.bincount(idx[acc], weights=Z[acc, 1], minlength=n_pairs)

    for k in range(len(mesh) - 1):
        top = max(float(XL.max()), float(XH.max()))
        while u_max < top:
            u_max *= 2.0
            if u_max > 1e12:
                raise SimulationError("domination-exceeded: state outgrew every retry level")
        dt = mesh[k + 1] - mesh[k]
        newL = np.empty_like(XL)
        newH = np.empty_like(XH)
        for i in range(2):
            j = 1 - i
            a = 1.0 - (plan.b_diag[i][k] + plan.comp[i][k]) * dt
            b = plan.b_feed[i][k] * dt
            newL[:, i] = XL[:, i] * a + XL[:, j] * b
            newH[:, i] = XH[:, i] * a + XH[:, j] * b
        XL, XH = newL, newH
        for ch in plan.channels:
            r = ch.rates[k] * dt
            if r > 0.0:
                jump_round(XL, XH, ch.p, u_max * r, ch.sample)
        np.maximum(XL, 0.0, out=XL)
        np.maximum(XH, 0.0, out=XH)
        atom = plan.atom_at.get(k + 1)
        if atom is not None:
            detL = np.empty_like(XL)
            detH = np.empty_like(XH)
            for i in range(2):
                j = 1 - i
                detL[:, i] = XL[:, i] * atom.keep[i] + XL[:, j] * atom.cross[i]
                detH[:, i] = XH[:, i] * atom.keep[i] + XH[:, j] * atom.cross[i]
            preL, preH = XL, XH
            XL, XH = detL, detH
            for p, mass, sampler in atom.jumps:
                n_cand = rng.poisson(u_max * mass, n_pairs)
                total = int(n_cand.sum())
                if total:
                    u = rng.random(total) * u_max
                    Z = sampler(rng, total)
                    idx = np.repeat(np.arange(n_pairs), n_cand)
                    for X, pre in ((XL, preL), (XH, preH)):
                        acc = u <= pre[idx, p]
                        X[:, 0] += np.bincount(idx[acc], weights=Z[acc, 0], minlength=n_pairs)
                        X[:, 1] += np.bincount(idx[acc], weights=Z[acc, 1], minlength=n_pairs)
            np.maximum(XL, 0.0, out=XL)
            np.maximum(XH, 0.0, out=XH)
        violations += int(np.count_nonzero((XL > XH).any(axis=1)))
        checks += n_pairs
    return violations, checks


# -- truncation ---------------------------------------------------------------


def truncate_large_jumps(env: EnvSpec, k: float) -> EnvSpec:
    """Environment with jump sizes capped at k and the matching killing drift.

    Every spatial component is pushed forward under componentwise min with k
    and, per kernel m_i, the large-jump excess integral of the own coordinate
    is added to the diagonal drift b_ii (density and atoms).  The cross-side
    excess is absorbed automatically because the augmented cross drift is
    recomputed from the truncated kernel.
    """
    if k <= 0:
        raise ValueError("truncation level must be positive")
    new_b = [list(row) for row in env.b]
    new_m = []
    for i in range(2):
        kern = env.m[i]
        comps = tuple((rate, meas.truncated(k)) for rate, meas in kern.density_components)
        atoms = tuple((t, meas.truncated(k)) for t, meas in kern.atoms)
        new_m.append(JumpKernel(comps, atoms))
        kill_density = Density.zero()
        for rate, meas in kern.density_components:
            ex = meas.excess(i, k)
            if ex != 0.0:
                kill_density = kill_density + rate.scaled(ex)
        kill_atoms = tuple(
            (t, meas.excess(i, k)) for t, meas in kern.atoms if meas.excess(i, k) != 0.0
        )
        if not kill_density.is_zero or kill_atoms:
            new_b[i][i] = env.b[i][i] + SignedMeasure1D(kill_density, kill_atoms)
    out = EnvSpec(
        b=(tuple(new_b[0]), tuple(new_b[1])),
        c=env.c,
        m=tuple(new_m),
        horizon=env.horizon,
    )
    report = validate(out)
    if not report.passed:
        raise SimulationError(f"truncated environment failed validation:\n{report}")
    return out
