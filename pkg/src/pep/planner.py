"""RRT*-style tree construction over spline-smoothed, velocity-optimized segments.

Each extension smooths the recent ancestor chain plus the new node into one
curve, tries every cruise-velocity candidate on the new piece, and attaches
the cheapest (perception + energy) segment. Rewiring re-routes nearby tips
through the new node when that lowers their cost from the root, preserving
each rewired tip's velocity so descendant segments stay continuous.

The sampling loop follows the termination rule "goal reached AND sampling
threshold met", with a hard cap of four times the threshold so unreachable
goals still terminate. A receding-horizon wrapper replans as features are
revealed and tracks a localization-drift proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from pep.core import (
    Bounds,
    FeatureMap,
    GoalRegion,
    PlannerParams,
    Trajectory,
    TrajectorySegment,
    UavState,
    ValidationError,
)
from pep.energy import (
    EnergyModel,
    RampTooLongError,
    fit_energy_model,
    generate_reference_power_dataset,
    ramp_distance,
    segment_energy_cost,
)
from pep.perception import fim_metric_at, perception_cost_arrays
from pep.spline import SmoothPath, profile_kinematics as _profile_kinematics, smooth
from pep.uncertainty import (
    DistanceUncertaintyModel,
    MotionUncertaintyModel,
    fit_motion_model,
    generate_reference_dataset,
)

__all__ = [
    "PlannerModels",
    "default_models",
    "PlanTree",
    "GoalUnreachableError",
    "OptVelResult",
    "DriftModel",
    "ReplanOutcome",
    "sample_node",
    "nearest",
    "extend",
    "near_tip_states",
    "opt_vel",
    "insert_segment",
    "rewire",
    "plan",
    "replan_loop",
    "extract_trajectory",
    "verify_tree",
]

_CONTINUITY_TOL = 1e-9
SMOOTHING_WINDOW = 4  # ancestors included in each smoothing call


@dataclass(frozen=True)
class PlannerModels:
    """The fitted models the planner consumes."""

    motion: MotionUncertaintyModel
    distance: DistanceUncertaintyModel
    energy: EnergyModel


def default_models(seed: int = 0, n_per_speed: int = 200) -> PlannerModels:
    """Fit models on the bundled reference datasets (deterministic per seed)."""
    motion = fit_motion_model(generate_reference_dataset(n_per_speed, seed=seed))
    energy = fit_energy_model(generate_reference_power_dataset(seed=seed))
    return PlannerModels(motion=motion, distance=DistanceUncertaintyModel(), energy=energy)


class GoalUnreachableError(RuntimeError):
    """No goal-reaching trajectory within the iteration cap.

    Carries the partial tree for diagnostics.
    """

    def __init__(self, msg: str, tree: "PlanTree"):
        super().__init__(msg)
        self.tree = tree


class PlanTree:
    """Mutable RRT* tree of trajectory segments keyed by their tip.

    Node ``i`` is the (x, y) tree position whose incoming segment is
    ``segments[i]``; the root occupies index 0 with a single-state,
    zero-cost segment. Single-writer: only the planning loop mutates it.
    """

    def __init__(self, start: UavState, goal: GoalRegion, capacity: int = 1024):
        self.goal = goal
        self._xy = np.empty((capacity, 2))
        self._tip_v = np.empty(capacity)
        self._cum = np.empty(capacity)
        self.n = 0
        self.segments: list[TrajectorySegment] = []
        self.parent: list[int] = []
        self.children: list[list[int]] = []
        self.goal_tips: set[int] = set()

        root = TrajectorySegment(
            t=np.array([0.0]), x=np.array([start.x]), y=np.array([start.y]),
            v=np.array([start.v]), parent_tip_index=-1,
            c_p=0.0, c_e=0.0, cost=0.0, cum_cost=0.0, arc_length=0.0,
            quality=0.0, duration=0.0,
        )
        self._append(root, -1)

    # -- storage ------------------------------------------------------------

    def _append(self, seg: TrajectorySegment, parent: int) -> int:
        if self.n == self._xy.shape[0]:
            grow = self._xy.shape[0]
            self._xy = np.concatenate([self._xy, np.empty((grow, 2))])
            self._tip_v = np.concatenate([self._tip_v, np.empty(grow)])
            self._cum = np.concatenate([self._cum, np.empty(grow)])
        i = self.n
        self._xy[i] = (seg.x[-1], seg.y[-1])
        self._tip_v[i] = seg.v[-1]
        self._cum[i] = seg.cum_cost
        self.segments.append(seg)
        self.parent.append(parent)
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        if self.goal.contains(float(seg.x[-1]), float(seg.y[-1])):
            self.goal_tips.add(i)
        return i

    @property
    def positions(self) -> np.ndarray:
        return self._xy[: self.n]

    def tip_velocity(self, i: int) -> float:
        return float(self._tip_v[i])

    def cum_cost(self, i: int) -> float:
        return float(self._cum[i])

    @property
    def best_goal_tip(self) -> int | None:
        if not self.goal_tips:
            return None
        return min(self.goal_tips, key=lambda i: (self._cum[i], i))

    @property
    def best_goal_cost(self) -> float:
        best = self.best_goal_tip
        return math.inf if best is None else float(self._cum[best])

    def ancestors_window(self, i: int, window: int = SMOOTHING_WINDOW) -> list[int]:
        """Up to ``window`` ancestors plus ``i`` itself, root-side first."""
        chain = [i]
        while len(chain) <= window and self.parent[chain[-1]] >= 0:
            chain.append(self.parent[chain[-1]])
        chain.reverse()
        return chain

    def descendants(self, i: int) -> list[int]:
        out, stack = [], list(self.children[i])
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.children[j])
        return out

    def is_ancestor(self, a: int, i: int) -> bool:
        """True if ``a`` lies on the root chain of ``i`` (or equals it)."""
        while i >= 0:
            if i == a:
                return True
            i = self.parent[i]
        return False


# --------------------------------------------------------------------------
# Primitive operations
# --------------------------------------------------------------------------

def sample_node(bounds: Bounds, goal: GoalRegion, goal_bias: float, rng: np.random.Generator) -> tuple[float, float]:
    """Uniform sample in bounds, or inside the goal disc with probability
    ``goal_bias``."""
    if rng.random() < goal_bias:
        r = goal.radius * math.sqrt(rng.random())
        th = 2.0 * math.pi * rng.random()
        return goal.cx + r * math.cos(th), goal.cy + r * math.sin(th)
    return rng.uniform(bounds.xmin, bounds.xmax), rng.uniform(bounds.ymin, bounds.ymax)


def nearest(tree: PlanTree, x: float, y: float) -> int:
    """Index of the node closest to (x, y); ties go to the lowest index."""
    d2 = (tree.positions[:, 0] - x) ** 2 + (tree.positions[:, 1] - y) ** 2
    return int(np.argmin(d2))


def extend(frm: tuple[float, float], toward: tuple[float, float], step_len: float) -> tuple[float, float]:
    """Step from ``frm`` toward ``toward`` by at most ``step_len``."""
    dx = toward[0] - frm[0]
    dy = toward[1] - frm[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        raise ValidationError("extend requires distinct points")
    if dist <= step_len:
        return (toward[0], toward[1])
    f = step_len / dist
    return (frm[0] + f * dx, frm[1] + f * dy)


def near_radius(n: int, params: PlannerParams) -> float:
    """Shrinking RRT* neighbor radius, capped at twice the step length."""
    if n <= 1:
        return 0.0
    return min(params.near_radius_gamma * math.sqrt(math.log(n) / n), 2.0 * params.step_len)


def near_tip_states(tree: PlanTree, x: float, y: float, params: PlannerParams) -> list[int]:
    """Tips within the shrinking neighbor ball; never empty (falls back to
    the single nearest tip)."""
    r = near_radius(tree.n, params)
    d2 = (tree.positions[:, 0] - x) ** 2 + (tree.positions[:, 1] - y) ** 2
    idx = np.nonzero(d2 <= r * r)[0]
    if idx.size == 0:
        return [int(np.argmin(d2))]
    return [int(i) for i in idx]


@dataclass(frozen=True)
class OptVelResult:
    """Best velocity candidate for one smoothed extension."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    v_tmp: float
    c_p: float
    c_e: float
    cost: float
    quality: float
    duration: float
    arc_len: float


def opt_vel(
    path: SmoothPath,
    v_cur: float,
    fmap: FeatureMap,
    models: PlannerModels,
    params: PlannerParams,
    s_start: float = 0.0,
    candidates: np.ndarray | None = None,
) -> OptVelResult | None:
    """Try each cruise velocity on the path piece past ``s_start``.

    Candidates whose ramp does not fit, or whose sampled states hit an
    obstacle, are rejected. Returns the minimum-cost candidate with ties
    broken toward the higher velocity, or None if every candidate is
    infeasible.
    """
    if candidates is None:
        candidates = params.velocity_candidates()
    length = path.total_length - s_start
    if length <= 0:
        return None

    # Closed-form (t, s, v) per feasible candidate, then one batched
    # arc-length inversion for all candidates' stations.
    kinematics = []
    for v_tmp in candidates:
        v_tmp = float(v_tmp)
        try:
            t, s, v = _profile_kinematics(v_cur, v_tmp, params.a_max, params.dt, length)
        except RampTooLongError:
            continue
        kinematics.append((v_tmp, t, s, v))
    if not kinematics:
        return None
    pos = path.point_at_length(np.concatenate([s for _, _, s, _ in kinematics]) + s_start)

    profiles = []
    ofs = 0
    for v_tmp, t, s, v in kinematics:
        n = len(t)
        profiles.append((v_tmp, t, pos[ofs:ofs + n, 0], pos[ofs:ofs + n, 1], v))
        ofs += n

    best: OptVelResult | None = None
    for v_tmp, t, x, y, v in profiles:
        if fmap.points_in_obstacle(x, y):
            continue
        try:
            c_e, duration = segment_energy_cost(
                models.energy, v_cur, v_tmp, length, params.a_max, params.p_max
            )
        except RampTooLongError:
            continue
        c_p, quality = perception_cost_arrays(
            x, y, v, params.dt, fmap, models.motion, models.distance, params
        )
        cost = params.alpha_p * c_p + params.alpha_e * c_e
        if best is None or cost <= best.cost:
            best = OptVelResult(
                t=t, x=x, y=y, v=v, v_tmp=v_tmp, c_p=c_p, c_e=c_e,
                cost=cost, quality=quality, duration=duration, arc_len=length,
            )
    return best


def insert_segment(tree: PlanTree, parent_tip: int, res: OptVelResult, params: PlannerParams) -> int:
    """Attach an opt_vel result under ``parent_tip``; returns the new tip index.

    Raises if the segment does not start at the parent tip state.
    """
    px, py = tree.positions[parent_tip]
    pv = tree.tip_velocity(parent_tip)
    if (
        abs(res.x[0] - px) > _CONTINUITY_TOL
        or abs(res.y[0] - py) > _CONTINUITY_TOL
        or abs(res.v[0] - pv) > _CONTINUITY_TOL
    ):
        raise ValidationError("segment does not start at the parent tip state")
    seg = TrajectorySegment(
        t=res.t, x=res.x, y=res.y, v=res.v,
        parent_tip_index=parent_tip,
        c_p=res.c_p, c_e=res.c_e, cost=res.cost,
        cum_cost=tree.cum_cost(parent_tip) + res.cost,
        arc_length=res.arc_len, quality=res.quality, duration=res.duration,
    )
    return tree._append(seg, parent_tip)


def _control_points(tree: PlanTree, tip: int, new_xy: tuple[float, float] | None, window: int) -> np.ndarray:
    pts = [tuple(tree.positions[j]) for j in tree.ancestors_window(tip, window)]
    if new_xy is not None:
        pts.append(new_xy)
    return np.asarray(pts)


def _smooth_to(tree: PlanTree, tip: int, target_xy: tuple[float, float], window: int):
    """Smooth the ancestor window of ``tip`` plus the target point.

    Returns (path, s_start) where s_start is the arc length at the tip's
    knot, or None when the control polygon degenerates.
    """
    ctrl = _control_points(tree, tip, target_xy, window)
    try:
        path = smooth(ctrl)
    except ValidationError:
        return None
    return path, float(path.knot_lengths[-2])


def rewire(
    tree: PlanTree,
    new_tip: int,
    near: list[int],
    fmap: FeatureMap,
    models: PlannerModels,
    params: PlannerParams,
    window: int = SMOOTHING_WINDOW,
) -> None:
    """Re-route near tips through ``new_tip`` when that lowers their cost.

    The replacement segment keeps the near tip's node position and tip
    velocity (single-candidate opt_vel), so descendants remain continuous;
    their cumulative costs shift by the improvement delta.
    """
    for idx in near:
        if idx == new_tip or idx == 0 or tree.is_ancestor(idx, new_tip):
            continue
        smoothed = _smooth_to(tree, new_tip, (float(tree.positions[idx][0]), float(tree.positions[idx][1])), window)
        if smoothed is None:
            continue
        path, s_start = smoothed
        res = opt_vel(
            path, tree.tip_velocity(new_tip), fmap, models, params,
            s_start=s_start, candidates=np.array([tree.tip_velocity(idx)]),
        )
        if res is None:
            continue
        new_cum = tree.cum_cost(new_tip) + res.cost
        if new_cum >= tree.cum_cost(idx) - 1e-12:
            continue
        delta = new_cum - tree.cum_cost(idx)
        old_parent = tree.parent[idx]
        tree.children[old_parent].remove(idx)
        tree.children[new_tip].append(idx)
        tree.parent[idx] = new_tip
        tree.segments[idx] = TrajectorySegment(
            t=res.t, x=res.x, y=res.y, v=res.v,
            parent_tip_index=new_tip,
            c_p=res.c_p, c_e=res.c_e, cost=res.cost, cum_cost=new_cum,
            arc_length=res.arc_len, quality=res.quality, duration=res.duration,
        )
        tree._cum[idx] = new_cum
        for j in tree.descendants(idx):
            tree._cum[j] += delta
            tree.segments[j] = replace(tree.segments[j], cum_cost=float(tree._cum[j]))


def _try_extend(
    tree: PlanTree,
    new_xy: tuple[float, float],
    fmap: FeatureMap,
    models: PlannerModels,
    params: PlannerParams,
    window: int,
) -> int | None:
    """One extension attempt: pick the best near tip + velocity, insert."""
    near = near_tip_states(tree, new_xy[0], new_xy[1], params)
    best_total = math.inf
    best: tuple[int, OptVelResult] | None = None
    for idx in near:
        smoothed = _smooth_to(tree, idx, new_xy, window)
        if smoothed is None:
            continue
        path, s_start = smoothed
        res = opt_vel(path, tree.tip_velocity(idx), fmap, models, params, s_start=s_start)
        if res is None:
            continue
        total = tree.cum_cost(idx) + res.cost
        if total < best_total:
            best_total = total
            best = (idx, res)
    if best is None:
        return None
    return insert_segment(tree, best[0], best[1], params)


def extract_trajectory(tree: PlanTree, tip: int, params: PlannerParams, n_samples: int = 0) -> Trajectory:
    """Root-to-tip chain as a Trajectory with summary metrics."""
    chain = []
    i = tip
    while i >= 0:
        chain.append(tree.segments[i])
        i = tree.parent[i]
    chain.reverse()
    return Trajectory(
        segments=tuple(chain),
        total_energy=float(sum(s.c_e for s in chain)) * params.p_max,
        total_perception=float(sum(s.quality for s in chain)),
        duration=float(sum(s.duration for s in chain)),
        n_samples_used=n_samples,
    )


def plan(
    fmap: FeatureMap,
    start: UavState,
    goal: GoalRegion,
    params: PlannerParams,
    models: PlannerModels,
    bounds: Bounds | None = None,
    checkpoint=None,
    checkpoint_every: int = 100,
    window: int = SMOOTHING_WINDOW,
) -> Trajectory:
    """Run the sampling loop and return the cheapest goal-reaching trajectory.

    Terminates when the goal is reached AND ``max_samples`` samples are
    drawn; gives up (raising `GoalUnreachableError` with the partial tree)
    after four times the sampling threshold. ``checkpoint(n, best_cost,
    tree)`` is invoked every ``checkpoint_every`` samples.
    """
    bounds = bounds if bounds is not None else fmap.bounds
    v0 = min(max(start.v, params.v_min), params.v_max)
    tree = PlanTree(replace(start, v=v0), goal)
    rng = np.random.default_rng(params.rng_seed)
    hard_cap = 4 * params.max_samples
    n = 0
    while n < hard_cap and not (n >= params.max_samples and tree.goal_tips):
        x, y = sample_node(bounds, goal, params.goal_bias, rng)
        n += 1
        ni = nearest(tree, x, y)
        nx, ny = tree.positions[ni]
        if (x - nx) ** 2 + (y - ny) ** 2 == 0.0:
            continue
        new_xy = extend((float(nx), float(ny)), (x, y), params.step_len)
        if fmap.point_in_obstacle(new_xy[0], new_xy[1]):
            continue
        new_tip = _try_extend(tree, new_xy, fmap, models, params, window)
        if new_tip is not None:
            near2 = near_tip_states(tree, new_xy[0], new_xy[1], params)
            rewire(tree, new_tip, near2, fmap, models, params, window)
        if checkpoint is not None and n % checkpoint_every == 0:
            checkpoint(n, tree.best_goal_cost, tree)
    if not tree.goal_tips:
        raise GoalUnreachableError(
            f"goal unreachable after {n} samples (cap {hard_cap})", tree
        )
    return extract_trajectory(tree, tree.best_goal_tip, params, n_samples=n)


# --------------------------------------------------------------------------
# Receding-horizon replanning with a drift proxy
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftModel:
    """Localization-drift proxy: drift rate per meter is
    ``k_drift / max(s(I), epsilon_fim)`` evaluated on the true map."""

    k_drift: float = 0.01
    drift_limit: float = 30.0


@dataclass
class ReplanOutcome:
    """Result of one receding-horizon run."""

    success: bool
    reason: str
    drift: float
    distance: float
    trajectories: list[Trajectory] = field(default_factory=list)
    # per executed state: cumulative distance, x, y, v, s(I), cumulative drift
    trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))


def _reveal_mask(fmap: FeatureMap, xs: np.ndarray, ys: np.ndarray, r_max: float) -> np.ndarray:
    if fmap.n_features == 0:
        return np.zeros(0, dtype=bool)
    dx = fmap.features[:, 0][:, None] - xs[None, :]
    dy = fmap.features[:, 1][:, None] - ys[None, :]
    return np.any(dx * dx + dy * dy <= r_max * r_max, axis=1)


def replan_loop(
    fmap: FeatureMap,
    start: UavState,
    goal: GoalRegion,
    params: PlannerParams,
    models: PlannerModels,
    horizon: float = 30.0,
    drift_model: DriftModel = DriftModel(),
    max_cycles: int = 50,
) -> ReplanOutcome:
    """Plan, execute a horizon, sense, accumulate drift, repeat.

    Only features within ``r_max`` of already-executed states are visible
    to the planner (an initial scan reveals the start's surroundings). The
    drift proxy integrates ``k_drift / max(s(I), eps)`` per meter on the
    true map; exceeding ``drift_limit`` is a failure, entering the goal a
    success.
    """
    if horizon <= 0:
        raise ValidationError("horizon must be > 0")
    known = _reveal_mask(fmap, np.array([start.x]), np.array([start.y]), params.r_max)
    cur = start
    drift = 0.0
    dist = 0.0
    trace_rows = [[0.0, start.x, start.y, start.v, _s_true(fmap, start, models, params), 0.0]]
    trajectories: list[Trajectory] = []

    if drift > drift_model.drift_limit:
        return ReplanOutcome(False, "drift_exceeded", drift, dist, trajectories, np.array(trace_rows))

    for cycle in range(max_cycles):
        known_map = FeatureMap(
            features=fmap.features[known] if known.size else np.zeros((0, 2)),
            obstacles=fmap.obstacles,
            bounds=fmap.bounds,
        )
        cycle_params = replace(params, rng_seed=params.rng_seed + 1000003 * cycle)
        try:
            traj = plan(known_map, cur, goal, cycle_params, models, bounds=fmap.bounds)
        except GoalUnreachableError:
            return ReplanOutcome(False, "no_path", drift, dist, trajectories, np.array(trace_rows))
        trajectories.append(traj)

        t, x, y, v = traj.state_arrays()
        executed = 0.0
        last = cur
        for i in range(1, len(t)):
            ds = math.hypot(x[i] - x[i - 1], y[i] - y[i - 1])
            s_i = fim_metric_at(float(x[i]), float(y[i]), float(v[i]), fmap,
                                models.motion, models.distance, params)
            drift += ds * drift_model.k_drift / max(s_i, params.epsilon_fim)
            dist += ds
            executed += ds
            last = UavState(x=float(x[i]), y=float(y[i]), v=float(v[i]))
            trace_rows.append([dist, last.x, last.y, last.v, s_i, drift])
            if drift > drift_model.drift_limit:
                return ReplanOutcome(False, "drift_exceeded", drift, dist, trajectories, np.array(trace_rows))
            if goal.contains(last.x, last.y):
                return ReplanOutcome(True, "goal_reached", drift, dist, trajectories, np.array(trace_rows))
            if executed >= horizon:
                break
        xs = np.array([r[1] for r in trace_rows])
        ys = np.array([r[2] for r in trace_rows])
        if known.size:
            known = known | _reveal_mask(fmap, xs, ys, params.r_max)
        cur = last
    return ReplanOutcome(False, "cycle_limit", drift, dist, trajectories, np.array(trace_rows))


def _s_true(fmap: FeatureMap, state: UavState, models: PlannerModels, params: PlannerParams) -> float:
    return fim_metric_at(state.x, state.y, state.v, fmap, models.motion, models.distance, params)


# --------------------------------------------------------------------------
# Invariant checks (used by tests and checkpoints)
# --------------------------------------------------------------------------

def verify_tree(tree: PlanTree, tol: float = 1e-9) -> None:
    """Raise AssertionError if any structural tree invariant is violated."""
    assert tree.parent[0] == -1 and tree.segments[0].n_states == 1
    assert sum(1 for p in tree.parent if p == -1) == 1, "exactly one root"
    for i in range(1, tree.n):
        p = tree.parent[i]
        seg = tree.segments[i]
        pseg = tree.segments[p]
        assert abs(seg.x[0] - pseg.x[-1]) <= tol, f"x continuity at {i}"
        assert abs(seg.y[0] - pseg.y[-1]) <= tol, f"y continuity at {i}"
        assert abs(seg.v[0] - pseg.v[-1]) <= tol, f"v continuity at {i}"
        assert abs(seg.cum_cost - (pseg.cum_cost + seg.cost)) <= tol, f"cum_cost at {i}"
        assert abs(tree.cum_cost(i) - seg.cum_cost) <= tol, f"cum cache at {i}"
        # acyclicity: the parent chain must reach the root
        seen = set()
        j = i
        while j >= 0:
            assert j not in seen, f"cycle at {i}"
            seen.add(j)
            j = tree.parent[j]
    for i in range(tree.n):
        for c in tree.children[i]:
            assert tree.parent[c] == i, "children/parent mismatch"
