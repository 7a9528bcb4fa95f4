"""Constrained particle swarm optimization over control sequences.

A particle's position is the flattened list of ``(l, kappa)`` controls for
the optimizable steps of the current template; all swarm arithmetic happens
in that control space, never on Cartesian poses.

Invalid particles keep flying: they move with everyone else, but their
personal best and fitness are only refreshed by valid evaluations.

Determinism: each random draw comes from a generator keyed on
``(seed, cycle, purpose, iteration)`` and particles are scored in blocks of a
fixed size, so results do not depend on how many worker threads run.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .control_space import DEGENERATE_LENGTH, controls_from_poses, rollout_batch, wrap_angle
from .environment import EnvironmentSnapshot
from .errors import NoValidParticle
from .evaluation import (
    CONSTRAINTS,
    BatchEvaluator,
    ConstraintReport,
    CostBreakdown,
    CostParameters,
    CostWeights,
    Limits,
)
from .trajectory import Trajectory

# stream purposes
_INIT, _DROP, _MOVE = 1, 2, 3
# sampled controls stay this fraction inside every internal limit
_SAFETY = 0.97


@dataclass(frozen=True)
class SwarmConfig:
    n_particles: int = 60
    max_iterations: int = 50
    w_v: float = 0.7298
    w_p: float = 1.4962
    w_g: float = 1.4962
    time_budget: float | None = None
    fitness_target: float | None = None
    diversity_epsilon: float = 1e-3
    carryover_drop_rate: float = 0.30
    seed: int = 0
    min_valid_fraction: float = 0.10
    retry_cap: int = 5
    scalar_u: bool = True
    threads: int = 1
    block_size: int = 64

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not 0.0 <= self.carryover_drop_rate <= 1.0:
            raise ValueError("carryover_drop_rate must lie in [0, 1]")
        if self.max_iterations < 0 or self.retry_cap < 0:
            raise ValueError("max_iterations and retry_cap must be >= 0")
        if not 0.0 <= self.min_valid_fraction <= 1.0:
            raise ValueError("min_valid_fraction must lie in [0, 1]")
        if self.threads < 1 or self.block_size < 1:
            raise ValueError("threads and block_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def min_valid(self) -> int:
        return max(1, math.ceil(self.min_valid_fraction * self.n_particles))


@dataclass
class SwarmStats:
    best_fitness: list = field(default_factory=list)
    valid_counts: list = field(default_factory=list)
    valid_after_init: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    termination: str = ""
    init_rounds: int = 0
    carried: int = 0
    best_fitness_init: float = math.inf

    @property
    def valid_after_optimization(self) -> int:
        return self.valid_counts[-1] if self.valid_counts else self.valid_after_init

    def rows(self):
        """(iteration, best_fitness, valid_count); iteration 0 is the initial swarm."""
        out = [(0, self.best_fitness_init, self.valid_after_init)]
        for i, (f, c) in enumerate(zip(self.best_fitness, self.valid_counts), start=1):
            out.append((i, f, c))
        return out


def update_velocity(x, v, x_p, x_g, cfg: SwarmConfig, u1, u2):
    """Inertia plus random pulls towards the personal and global best positions."""
    return cfg.w_v * v + cfg.w_p * u1 * (x_p - x) + cfg.w_g * u2 * (x_g - x)


def update_position(x, v_next, l_max: float):
    """Move by ``v_next``; control lengths are projected onto ``[0, l_max]``."""
    out = np.array(x + v_next, dtype=float)
    pairs = out.reshape(out.shape[:-1] + (-1, 2))
    np.clip(pairs[..., 0], 0.0, l_max, out=pairs[..., 0])
    return out


def _stream(seed: int, cycle: int, purpose: int, counter: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, cycle, purpose, counter]))


class _Scorer:
    """Decodes control vectors into poses and scores them block by block."""

    def __init__(self, template: Trajectory, snap, weights, limits, params, cfg: SwarmConfig):
        self.template = template
        self.k = template.first_free
        self.m = len(template) - self.k
        self.fixed = template.poses[: self.k]
        self.start = template.poses[self.k - 1]
        self.ev = BatchEvaluator(snap, len(template), template.prefix_len, self.k,
                                 template.dt, weights, limits, params)
        self.cfg = cfg
        self._pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def _block(self, X):
        ctrl = X.reshape(len(X), self.m, 2)
        tail = rollout_batch(np.broadcast_to(self.start, (len(X), 3)), ctrl)
        poses = np.concatenate([np.broadcast_to(self.fixed, (len(X),) + self.fixed.shape), tail], axis=1)
        margins, raw = self.ev.evaluate(poses)
        return poses, margins, raw

    def score(self, X: np.ndarray):
        bs = self.cfg.block_size
        chunks = [X[i:i + bs] for i in range(0, len(X), bs)]
        if self._pool is None:
            parts = [self._block(c) for c in chunks]
        else:
            parts = list(self._pool.map(self._block, chunks))
        poses = np.concatenate([p[0] for p in parts])
        margins = np.concatenate([p[1] for p in parts])
        raw = np.concatenate([p[2] for p in parts])
        valid = np.all(margins >= 0, axis=1)
        return poses, margins, raw, valid, self.ev.fitness(raw)


@dataclass
class Swarm:
    """Swarm state; arrays are indexed by particle."""

    template: Trajectory
    cycle: int
    X: np.ndarray
    V: np.ndarray
    pbest_X: np.ndarray
    pbest_f: np.ndarray
    valid: np.ndarray
    fitness: np.ndarray
    gbest_X: np.ndarray
    gbest_f: float
    gbest_poses: np.ndarray
    gbest_raw: np.ndarray
    gbest_margins: np.ndarray
    origin: list
    stats: SwarmStats

    @property
    def n_particles(self) -> int:
        return len(self.X)

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    @property
    def anchor_time(self) -> float:
        return self.template.time_of(self.template.first_free - 1)

    def best_trajectory(self) -> Trajectory:
        t = self.template
        return Trajectory(self.gbest_poses, t.dt, t.t0, t.prefix_len, t.frozen_len)


@dataclass
class EngineResult:
    trajectory: Trajectory
    costs: CostBreakdown
    constraints: ConstraintReport
    stats: SwarmStats
    swarm: Swarm = field(repr=False)


def _shift_controls(ctrl: np.ndarray, shift: int, m: int) -> np.ndarray | None:
    """Drop ``shift`` consumed leading controls and pad/cut to ``m`` by repeating the last one."""
    rest = ctrl[..., shift:, :]
    if rest.shape[-2] == 0:
        return None
    if rest.shape[-2] >= m:
        return rest[..., :m, :]
    pad = np.repeat(rest[..., -1:, :], m - rest.shape[-2], axis=-2)
    return np.concatenate([rest, pad], axis=-2)


def _refit_best(prev: Swarm, template: Trajectory, m: int) -> np.ndarray | None:
    """Previous best expressed as controls of the new template.

    When the new fixed pose lies on the previous best trajectory the controls
    are recovered from its poses by inverse kinematics; otherwise the stored
    controls are shifted.
    """
    shift = round((template.time_of(template.first_free - 1) - prev.anchor_time) / template.dt)
    if shift < 0:
        return None
    j = prev.template.first_free - 1 + shift
    poses = prev.gbest_poses
    if j < len(poses) - 1 and np.allclose(poses[j], template.poses[template.first_free - 1],
                                          rtol=0, atol=1e-9):
        ctrl = controls_from_poses(poses[j:])
    else:
        ctrl = prev.gbest_X.reshape(-1, 2)
        ctrl = ctrl[shift:] if shift < len(ctrl) else ctrl[:0]
    if len(ctrl) == 0:
        return None
    return _shift_controls(ctrl, 0, m)


def sample_controls(template: Trajectory, snap: EnvironmentSnapshot, limits: Limits,
                    count: int, rng: np.random.Generator) -> np.ndarray:
    """Guided random control sequences, shape (count, m, 2).

    Speed follows a per-particle target speed through jolt-limited
    acceleration steps, kept inside an envelope that can always brake back
    under the speed limit or to standstill. Curvature tracks a per-particle
    lateral offset of the lane centreline (pure pursuit) under the steering
    rate and yaw-rate limits. Internal limits therefore hold by construction
    except where the fixed part of the template already forces a violation.
    """
    dt = template.dt
    k = template.first_free
    m = len(template) - k
    K = count
    lim = limits
    v_lim = snap.mode.speed_limit
    v_des = snap.mode.desired_velocity
    J = lim.max_jolt * _SAFETY
    A = lim.max_accel * _SAFETY
    D = lim.max_decel * _SAFETY
    R = lim.max_steer_rate * _SAFETY * dt
    W = lim.max_yaw_rate * _SAFETY
    v_cap = v_lim * 0.995

    fixed = template.poses[:k]
    lk = controls_from_poses(fixed)
    s0 = lk[-1, 0] / dt if len(lk) >= 1 else 0.0
    a0 = (lk[-1, 0] - lk[-2, 0]) / dt / dt if len(lk) >= 2 else 0.0
    k0 = lk[-1, 1] if len(lk) >= 1 else 0.0

    cl = snap.centerline
    fp = snap.footprint
    start = fixed[-1]
    st0, lat0, _ = cl.project(start[:2])
    xy0, h0 = cl.point_at(np.asarray(st0))
    normal0 = np.array([-math.sin(h0), math.cos(h0)])
    # free lateral room around the centreline at the start
    left = -snap.driving_area.signed_distance((xy0 + 0.0 * normal0)[None, :])[0]
    room = max(left - float(np.max(fp.radii)) - 0.3, 0.0)
    reach = float(np.max(np.abs(fp.offsets[:, 0])))

    speed_pick = rng.random(K)
    v_tgt = np.where(speed_pick < 0.5, v_des * rng.uniform(0.85, 1.1, K), rng.uniform(0.0, v_lim, K))
    v_tgt = np.clip(v_tgt, 0.0, v_lim)
    lat_pick = rng.random(K)
    lat_a = np.where(lat_pick < 0.4, snap.mode.lateral_bias + rng.normal(0.0, 0.2, K),
                     rng.uniform(-room, room, K))
    lat_b = np.where(rng.random(K) < 0.5, lat_a, rng.uniform(-room, room, K))
    lat_a = np.clip(lat_a, -room, room)
    lat_b = np.clip(lat_b, -room, room)
    switch = rng.integers(0, m + 1, K)
    k_speed = rng.uniform(0.3, 1.0, K)
    noise_a = rng.normal(0.0, 0.3, (K, m))
    noise_k = rng.normal(0.0, 0.3 * R + 1e-4, (K, m))
    look_t = rng.uniform(1.0, 2.0, K)

    s = np.full(K, s0)
    a = np.full(K, a0)
    kap = np.full(K, k0)
    pose = np.tile(start, (K, 1))
    out = np.empty((K, m, 2))
    for j in range(m):
        a_cmd = k_speed * (v_tgt - s) + noise_a[:, j]
        lo = np.maximum(a - J * dt, -D)
        hi = np.minimum(a + J * dt, A)
        up = J * (-dt + np.sqrt(dt * dt + 2.0 * np.maximum(v_cap - s, 0.0) / J))
        dn = -J * (-dt + np.sqrt(dt * dt + 2.0 * np.maximum(s, 0.0) / J))
        lo2 = np.maximum(lo, dn)
        hi2 = np.minimum(hi, up)
        ok = lo2 <= hi2
        a_new = np.where(ok, np.clip(a_cmd, lo2, hi2), np.clip(np.where(s > 0.5 * v_cap, lo, hi), lo, hi))
        s_new = np.maximum(s + a_new * dt, 0.0)
        a = (s_new - s) / dt
        s = s_new
        l = s * dt

        lat = np.where(j < switch, lat_a, lat_b)
        k_yaw = W / np.maximum(s, 1e-6)
        st, lat_now, head = cl.project(pose[:, :2])
        look = np.maximum(6.0, s * look_t)
        txy, th = cl.point_at(st + look)
        # steering lags under the rate limit; aim back at the centreline early
        # when the drift over the time needed to unwind the heading would leave the room
        err = wrap_angle(pose[:, 2] - head)
        unwind = np.abs(err) / np.maximum(W, 1e-9) + np.abs(kap) / (R / dt) + 3.0 * dt
        drift = lat_now + s * np.sin(err) * unwind
        edge = room - reach * np.abs(np.sin(err))
        lat = np.where(np.abs(drift) > edge, 0.0, lat)
        tx = txy[:, 0] - np.sin(th) * lat
        ty = txy[:, 1] + np.cos(th) * lat
        dx, dy = tx - pose[:, 0], ty - pose[:, 1]
        dist = np.maximum(np.hypot(dx, dy), 1e-3)
        alpha = wrap_angle(np.arctan2(dy, dx) - pose[:, 2])
        k_cmd = 2.0 * np.sin(alpha) / dist + noise_k[:, j]
        lo_k = np.maximum(kap - R, -k_yaw)
        hi_k = np.minimum(kap + R, k_yaw)
        new_k = np.where(lo_k <= hi_k, np.clip(k_cmd, lo_k, hi_k),
                         np.clip(np.clip(k_cmd, -k_yaw, k_yaw), kap - R, kap + R))
        # a heading change above pi per step is not representable
        new_k = np.where(l > 0, np.clip(new_k, -3.0 / np.maximum(l, 1e-9), 3.0 / np.maximum(l, 1e-9)), new_k)
        # standing still keeps the wheel angle, see kinematic_signals
        kap = np.where(l < DEGENERATE_LENGTH, kap, new_k)
        out[:, j, 0] = l
        out[:, j, 1] = kap
        pose = rollout_batch(pose, out[:, j:j + 1])[:, 0]
    return out


def initialize_swarm(template: Trajectory, prev_swarm: Swarm | None, snap: EnvironmentSnapshot,
                     cfg: SwarmConfig, weights: CostWeights, limits: Limits,
                     params: CostParameters | None = None, cycle: int = 0,
                     _scorer: _Scorer | None = None) -> Swarm:
    """Build the initial swarm: looped-back best, surviving carry-overs, then guided samples.

    Raises :class:`NoValidParticle` when no particle is valid after
    ``cfg.retry_cap`` resampling rounds.
    """
    scorer = _scorer or _Scorer(template, snap, weights, limits, params, cfg)
    try:
        return _initialize(template, prev_swarm, snap, cfg, limits, cycle, scorer)
    finally:
        if _scorer is None:
            scorer.close()


def _initialize(template, prev_swarm, snap, cfg, limits, cycle, scorer) -> Swarm:
    P = cfg.n_particles
    m = scorer.m
    D = 2 * m
    stats = SwarmStats()

    ctrls: list[np.ndarray] = []
    origin: list[str] = []
    if prev_swarm is not None:
        best = _refit_best(prev_swarm, template, m)
        if best is not None:
            ctrls.append(best.reshape(1, D))
            origin.append("best")
        shift = round((template.time_of(template.first_free - 1) - prev_swarm.anchor_time) / template.dt)
        if shift >= 0:
            prev_ctrl = prev_swarm.X.reshape(prev_swarm.n_particles, -1, 2)
            moved = _shift_controls(prev_ctrl, shift, m)
            if moved is not None:
                keep = _stream(cfg.seed, cycle, _DROP).random(len(moved)) >= cfg.carryover_drop_rate
                if np.any(keep):
                    ctrls.append(moved[keep].reshape(-1, D))
                    origin.extend(["carried"] * int(keep.sum()))
    if ctrls:
        cand = np.concatenate(ctrls)
        np.clip(cand[:, 0::2], 0.0, snap.mode.speed_limit * template.dt, out=cand[:, 0::2])
        _, _, _, ok, _ = scorer.score(cand)
        # the best is only kept when valid, carried particles likewise
        cand = cand[ok][:P]
        origin = [o for o, v in zip(origin, ok) if v][:P]
    else:
        cand = np.zeros((0, D))
    stats.carried = len(cand)

    n_fill = P - len(cand)
    rng = _stream(cfg.seed, cycle, _INIT, 0)
    X = np.concatenate([cand, sample_controls(template, snap, limits, n_fill, rng).reshape(n_fill, D)])
    origin = origin + ["sampled"] * n_fill
    poses, margins, raw, valid, fit = scorer.score(X)
    rounds = 0
    while valid.sum() < cfg.min_valid and rounds < cfg.retry_cap:
        rounds += 1
        redo = np.nonzero(~valid & (np.array(origin) == "sampled"))[0]
        if len(redo) == 0:
            break
        rng = _stream(cfg.seed, cycle, _INIT, rounds)
        X[redo] = sample_controls(template, snap, limits, len(redo), rng).reshape(len(redo), D)
        p2, m2, r2, v2, f2 = scorer.score(X[redo])
        poses[redo], margins[redo], raw[redo], valid[redo], fit[redo] = p2, m2, r2, v2, f2
    stats.init_rounds = rounds
    if not valid.any():
        raise NoValidParticle(
            f"no valid particle after {rounds} resampling rounds; "
            f"violated: {_violation_summary(margins)}"
        )
    fitness = np.where(valid, fit, math.inf)
    g = int(np.argmin(fitness))
    stats.valid_after_init = int(valid.sum())
    stats.best_fitness_init = float(fitness[g])
    return Swarm(
        template=template, cycle=cycle, X=X, V=np.zeros_like(X),
        pbest_X=X.copy(), pbest_f=fitness.copy(), valid=valid, fitness=fitness,
        gbest_X=X[g].copy(), gbest_f=float(fitness[g]), gbest_poses=poses[g].copy(),
        gbest_raw=raw[g].copy(), gbest_margins=margins[g].copy(), origin=origin, stats=stats,
    )


def _violation_summary(margins: np.ndarray) -> str:
    bad = (margins < 0).sum(axis=0)
    parts = [f"{name}={int(c)}" for name, c in zip(CONSTRAINTS, bad) if c]
    return ", ".join(parts) or "none"


def _diversity(X: np.ndarray) -> float:
    return float(pdist(X).mean()) if len(X) > 1 else 0.0


def optimize(swarm: Swarm, snap: EnvironmentSnapshot, cfg: SwarmConfig, weights: CostWeights,
             limits: Limits, params: CostParameters | None = None,
             _scorer: _Scorer | None = None, _t_start: float | None = None) -> EngineResult:
    """Run the swarm until a termination criterion fires and decode the global best."""
    t_start = time.perf_counter() if _t_start is None else _t_start
    scorer = _scorer or _Scorer(swarm.template, snap, weights, limits, params, cfg)
    try:
        _run(swarm, cfg, snap.mode.speed_limit * swarm.template.dt, scorer, t_start)
    finally:
        if _scorer is None:
            scorer.close()
    stats = swarm.stats
    stats.wall_time = time.perf_counter() - t_start
    traj = swarm.best_trajectory()
    return EngineResult(
        trajectory=traj,
        costs=CostBreakdown.from_raw(swarm.gbest_raw, weights),
        constraints=ConstraintReport(dict(zip(CONSTRAINTS, swarm.gbest_margins.tolist()))),
        stats=stats,
        swarm=swarm,
    )


def _run(sw: Swarm, cfg: SwarmConfig, l_max: float, scorer: _Scorer, t_start: float):
    stats = sw.stats
    P, D = sw.X.shape
    div0 = _diversity(sw.X) if cfg.diversity_epsilon > 0 else 0.0
    target = cfg.fitness_target
    for it in range(1, cfg.max_iterations + 1):
        rng = _stream(cfg.seed, sw.cycle, _MOVE, it)
        shape = (P, 1) if cfg.scalar_u else (P, D)
        u1 = rng.random(shape)
        u2 = rng.random(shape)
        sw.V = update_velocity(sw.X, sw.V, sw.pbest_X, sw.gbest_X, cfg, u1, u2)
        sw.X = update_position(sw.X, sw.V, l_max)
        poses, margins, raw, valid, fit = scorer.score(sw.X)
        sw.valid = valid
        sw.fitness = np.where(valid, fit, sw.fitness)
        better = valid & (fit < sw.pbest_f)
        sw.pbest_X[better] = sw.X[better]
        sw.pbest_f[better] = fit[better]
        cand = np.where(valid, fit, math.inf)
        g = int(np.argmin(cand))
        if cand[g] < sw.gbest_f:
            sw.gbest_f = float(cand[g])
            sw.gbest_X = sw.X[g].copy()
            sw.gbest_poses = poses[g].copy()
            sw.gbest_raw = raw[g].copy()
            sw.gbest_margins = margins[g].copy()
        stats.best_fitness.append(sw.gbest_f)
        stats.valid_counts.append(int(valid.sum()))
        stats.iterations = it

        if target is not None and sw.gbest_f <= target:
            stats.termination = "fitness_target"
            return
        if cfg.time_budget is not None and time.perf_counter() - t_start > cfg.time_budget:
            stats.termination = "time_budget"
            return
        if cfg.diversity_epsilon > 0 and div0 > 0 and _diversity(sw.X) / div0 < cfg.diversity_epsilon:
            stats.termination = "diversity"
            return
    stats.termination = "max_iterations"
