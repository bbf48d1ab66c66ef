"""Grid construction and least-cost path search over intervention variables.

An instance's continuous intervention features span a lattice; every lattice
node is scored by the surrogate's joint density at (node features, regressor
prediction there). The search walks the lattice label-setting style and the
chosen path is compared against random monotone baselines connecting the same
endpoints.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PlannerError",
    "GridSpec",
    "Node",
    "Constraints",
    "Step",
    "Path",
    "PlanResult",
    "NodeEvaluator",
    "build_grid",
    "neighbors",
    "path_search",
    "baseline_paths",
    "actionability_score",
]


class PlannerError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    """A lattice point, stored as integer offsets over the intervention
    features (offset 0 everywhere is the instance itself)."""

    offsets: tuple

    def shifted(self, axis: int, delta: int) -> "Node":
        o = list(self.offsets)
        o[axis] += delta
        return Node(tuple(o))


@dataclass(frozen=True)
class GridSpec:
    feature_ids: tuple          # column indices of intervention features
    feature_names: tuple
    cell_sizes: tuple           # real-unit step per intervention feature
    lo: tuple                   # integer offset bounds, lo <= 0 <= hi
    hi: tuple
    origin: tuple               # the instance's full feature vector
    direction: str              # "minimize" | "maximize"
    disc_ids: tuple = ()        # column indices of discrete features

    def __post_init__(self):
        if self.direction not in ("minimize", "maximize"):
            raise PlannerError(f"unknown direction {self.direction!r}")
        if len(self.feature_ids) != len(self.cell_sizes):
            raise PlannerError("cell size count must match intervention features")
        for c in self.cell_sizes:
            if not (c > 0):
                raise PlannerError("cell sizes must be positive")
        for l, h in zip(self.lo, self.hi):
            if not (l <= 0 <= h):
                raise PlannerError("origin must lie inside grid bounds")

    @property
    def n_axes(self) -> int:
        return len(self.feature_ids)

    @property
    def origin_node(self) -> Node:
        return Node((0,) * self.n_axes)

    def node_coords(self, node: Node) -> np.ndarray:
        """Real-space feature vector for a node: origin plus offsets times
        cell sizes on the intervention dims, origin values elsewhere."""
        v = np.array(self.origin, dtype=np.float64)
        for i, fid in enumerate(self.feature_ids):
            v[fid] += node.offsets[i] * self.cell_sizes[i]
        return v

    def in_bounds(self, node: Node) -> bool:
        return all(l <= o <= h for o, l, h in zip(node.offsets, self.lo, self.hi))

    def better(self, pred_a: float, pred_b: float) -> bool:
        """True when pred_a improves on pred_b in this grid's direction."""
        if self.direction == "minimize":
            return pred_a < pred_b
        return pred_a > pred_b

    def to_dict(self) -> dict:
        return {
            "feature_ids": list(self.feature_ids),
            "feature_names": list(self.feature_names),
            "cell_sizes": list(self.cell_sizes),
            "lo": list(self.lo),
            "hi": list(self.hi),
            "origin": list(self.origin),
            "direction": self.direction,
            "disc_ids": list(self.disc_ids),
        }


@dataclass(frozen=True)
class Constraints:
    """Optional node filters applied during the search.

    feature_bounds maps an intervention feature name to (lo, hi) in real
    units; prediction_floor/ceiling reject nodes whose predicted response
    falls outside; target_value stops the search once a settled node reaches
    it in the grid's direction.
    """

    feature_bounds: dict = field(default_factory=dict)
    prediction_floor: float | None = None
    prediction_ceiling: float | None = None
    target_value: float | None = None

    def __post_init__(self):
        if (
            self.prediction_floor is not None
            and self.prediction_ceiling is not None
            and self.prediction_ceiling < self.prediction_floor
        ):
            raise PlannerError("prediction ceiling must be >= floor")

    def allows_coords(self, grid: GridSpec, node: Node) -> bool:
        if not self.feature_bounds:
            return True
        coords = grid.node_coords(node)
        for name, (lo, hi) in self.feature_bounds.items():
            if name not in grid.feature_names:
                continue
            i = grid.feature_names.index(name)
            v = coords[grid.feature_ids[i]]
            if lo is not None and v < lo:
                return False
            if hi is not None and v > hi:
                return False
        return True

    def allows_prediction(self, pred: float) -> bool:
        if self.prediction_floor is not None and pred < self.prediction_floor:
            return False
        if self.prediction_ceiling is not None and pred > self.prediction_ceiling:
            return False
        return True

    def target_met(self, grid: GridSpec, pred: float) -> bool:
        if self.target_value is None:
            return False
        if grid.direction == "minimize":
            return pred <= self.target_value
        return pred >= self.target_value

    def to_dict(self) -> dict:
        return {
            "feature_bounds": {k: list(v) for k, v in self.feature_bounds.items()},
            "prediction_floor": self.prediction_floor,
            "prediction_ceiling": self.prediction_ceiling,
            "target_value": self.target_value,
        }


@dataclass(frozen=True)
class Step:
    node: Node
    feature: str | None         # None for the origin step
    move: int                   # -1, 0, +1
    prediction: float
    neg_log_density: float

    def to_dict(self, grid: GridSpec | None = None) -> dict:
        d = {
            "offsets": list(self.node.offsets),
            "feature": self.feature,
            "move": self.move,
            "prediction": self.prediction,
            "log_density": -self.neg_log_density,
        }
        if grid is not None:
            d["coords"] = [float(v) for v in grid.node_coords(self.node)]
        return d


@dataclass
class Path:
    steps: list

    @property
    def log_actionability(self) -> float:
        """Sum of node log-densities over every non-initial step."""
        return -sum(s.neg_log_density for s in self.steps[1:])

    @property
    def cost(self) -> float:
        return sum(s.neg_log_density for s in self.steps[1:])

    def __len__(self):
        return len(self.steps)


@dataclass
class PlanResult:
    path: Path
    log_actionability: float
    baseline_log_actionabilities: list
    score: float
    settled_count: int
    negative_weight_count: int
    early_exhaustion: bool
    seed: int
    config: dict

    def to_dict(self, grid: GridSpec | None = None) -> dict:
        return {
            "steps": [s.to_dict(grid) for s in self.path.steps],
            "log_actionability": self.log_actionability,
            "baseline_log_actionabilities": list(self.baseline_log_actionabilities),
            "score": self.score,
            "diagnostics": {
                "settled_count": self.settled_count,
                "negative_weight_count": self.negative_weight_count,
                "early_exhaustion": self.early_exhaustion,
            },
            "seed": self.seed,
            "config": self.config,
        }


class NodeEvaluator:
    """Memoized (prediction, negative log-density) lookup for lattice nodes.

    Batch evaluation builds one feature matrix for all unseen nodes, runs the
    regressor over it, and scores the surrogate density at the predictions.
    The memo is private to one search.
    """

    def __init__(self, grid: GridSpec, surrogate, regressor):
        self.grid = grid
        self.surrogate = surrogate
        self.regressor = regressor
        n_feat = len(grid.origin)
        self.cont_ids = [i for i in range(n_feat) if i not in set(grid.disc_ids)]
        self.memo = {}

    def evaluate(self, nodes) -> None:
        missing = [n for n in nodes if n not in self.memo]
        if not missing:
            return
        M = np.stack([self.grid.node_coords(n) for n in missing])
        preds = self.regressor.predict_batch(M)
        xc = M[:, self.cont_ids]
        xd = M[:, list(self.grid.disc_ids)].astype(np.int64) if self.grid.disc_ids else np.zeros(
            (len(missing), 0), dtype=np.int64
        )
        logdens = self.surrogate.node_log_density_batch(xc, xd, preds)
        for node, p, ld in zip(missing, preds, logdens):
            if not (np.isfinite(p) and np.isfinite(ld)):
                raise PlannerError(f"non-finite node evaluation at offsets {node.offsets}")
            self.memo[node] = (float(p), float(-ld))

    def prediction(self, node: Node) -> float:
        self.evaluate([node])
        return self.memo[node][0]

    def neg_log_density(self, node: Node) -> float:
        self.evaluate([node])
        return self.memo[node][1]


def build_grid(
    instance,
    schema,
    train_stats: dict,
    intervention: list,
    cell_sigma: float,
    direction: str,
) -> GridSpec:
    """Lay a lattice over the chosen intervention features.

    instance: full feature vector (standardized units). schema: ColumnSpec
    list for the feature columns, same order. train_stats: per-feature dict
    name -> (sigma, min, max) from the training split. Cell size is
    cell_sigma * sigma per feature; bounds are the training range expanded by
    one cell, snapped to integer offsets around the instance.
    """
    if cell_sigma <= 0:
        raise PlannerError("cell_sigma must be positive")
    names = [c.name for c in schema]
    kinds = {c.name: c.kind for c in schema}
    instance = np.asarray(instance, dtype=np.float64)
    feature_ids, cell_sizes, lo, hi = [], [], [], []
    for fname in intervention:
        if fname not in names:
            raise PlannerError(f"unknown intervention feature {fname!r}")
        if kinds[fname] != "continuous":
            raise PlannerError(f"intervention feature {fname!r} is not continuous")
        fid = names.index(fname)
        value = instance[fid]
        if not np.isfinite(value):
            raise PlannerError(f"instance is missing intervention feature {fname!r}")
        sigma, fmin, fmax = train_stats[fname]
        cell = cell_sigma * sigma
        if not (cell > 0):
            raise PlannerError(f"degenerate cell size for feature {fname!r}")
        # training range + one cell, as integer offsets from the instance
        lo_off = math.floor((fmin - value) / cell) - 1
        hi_off = math.ceil((fmax - value) / cell) + 1
        lo_off = min(lo_off, 0)
        hi_off = max(hi_off, 0)
        feature_ids.append(fid)
        cell_sizes.append(cell)
        lo.append(lo_off)
        hi.append(hi_off)
    disc_ids = tuple(i for i, c in enumerate(schema) if c.kind == "discrete")
    return GridSpec(
        feature_ids=tuple(feature_ids),
        feature_names=tuple(intervention),
        cell_sizes=tuple(cell_sizes),
        lo=tuple(lo),
        hi=tuple(hi),
        origin=tuple(float(v) for v in instance),
        direction=direction,
        disc_ids=disc_ids,
    )


def neighbors(grid: GridSpec, node: Node, constraints: Constraints | None = None):
    """All +-1 single-feature moves that stay in bounds and inside the
    constraint box. Order is deterministic: feature index ascending, the
    minus move before the plus move."""
    out = []
    for axis in range(grid.n_axes):
        for delta in (-1, 1):
            cand = node.shifted(axis, delta)
            if not grid.in_bounds(cand):
                continue
            if constraints is not None and not constraints.allows_coords(grid, cand):
                continue
            out.append(cand)
    return out


def _reconstruct(grid: GridSpec, evaluator: NodeEvaluator, pred_map, dest: Node) -> Path:
    chain = [dest]
    while pred_map[chain[-1]] is not None:
        chain.append(pred_map[chain[-1]])
    chain.reverse()
    steps = []
    for i, node in enumerate(chain):
        if i == 0:
            feature, move = None, 0
        else:
            prev = chain[i - 1]
            axis = next(
                a for a in range(grid.n_axes) if node.offsets[a] != prev.offsets[a]
            )
            feature = grid.feature_names[axis]
            move = node.offsets[axis] - prev.offsets[axis]
        pred = evaluator.prediction(node)
        nld = evaluator.neg_log_density(node)
        steps.append(Step(node=node, feature=feature, move=move, prediction=pred, neg_log_density=nld))
    return Path(steps)


def path_search(
    grid: GridSpec,
    surrogate,
    regressor,
    L: int = 20000,
    constraints: Constraints | None = None,
    seed: int = 0,
    weight_floor: bool = False,
    baseline_count: int = 10,
    cancel_check=None,
) -> PlanResult:
    """Label-setting search over the lattice, then baseline comparison.

    Repeats up to L times: relax every admissible neighbor of the current
    node (a neighbor's tentative cost is the current cost plus the neighbor's
    own negative log-density), mark the current node settled, and move to the
    cheapest unsettled labeled node. The destination is the settled node with
    the best prediction in the grid's direction (ties broken by lower cost),
    and the result scores its path against random monotone baselines.

    weight_floor clamps negative weights to zero before accumulation; it is
    off by default and the count of negative weights seen is always reported.
    cancel_check, when given, is polled once per iteration; returning True
    abandons the search with an error.
    """
    if L < 0:
        raise PlannerError("L must be >= 0")
    constraints = constraints or Constraints()
    evaluator = NodeEvaluator(grid, surrogate, regressor)

    origin = grid.origin_node
    origin_pred = evaluator.prediction(origin)
    if not constraints.allows_prediction(origin_pred):
        raise PlannerError("origin violates the prediction constraints")

    cost = {origin: 0.0}
    pred_map = {origin: None}
    visited = set()
    frontier = []  # (cost, insertion order, node)
    counter = 0
    negative_seen = set()
    early_exhaustion = False

    current = origin
    for _ in range(L):
        if cancel_check is not None and cancel_check():
            raise PlannerError("search cancelled")
        cand = [
            nb
            for nb in neighbors(grid, current, constraints)
            if nb not in visited
        ]
        evaluator.evaluate(cand)
        for nb in cand:
            p, w = evaluator.memo[nb]
            if not constraints.allows_prediction(p):
                continue
            if w < 0:
                negative_seen.add(nb)
                if weight_floor:
                    w = 0.0
            tentative = cost[current] + w
            if tentative < cost.get(nb, math.inf):
                cost[nb] = tentative
                pred_map[nb] = current
                counter += 1
                heapq.heappush(frontier, (tentative, counter, nb))
        visited.add(current)
        if constraints.target_met(grid, evaluator.prediction(current)):
            break
        nxt = None
        while frontier:
            c, _, node = heapq.heappop(frontier)
            if node not in visited and c <= cost.get(node, math.inf):
                nxt = node
                break
        if nxt is None:
            early_exhaustion = True
            break
        current = nxt
    else:
        # L moves exhausted with a live current node: settle it too
        visited.add(current)

    # destination: best prediction among settled nodes, ties to lower cost
    dest = origin
    dest_pred = origin_pred
    for node in visited:
        p = evaluator.prediction(node)
        if grid.better(p, dest_pred) or (
            p == dest_pred and cost.get(node, math.inf) < cost.get(dest, math.inf)
        ):
            dest, dest_pred = node, p
    if constraints.target_value is not None:
        # prefer the settled node that met the target, if any did
        met = [n for n in visited if constraints.target_met(grid, evaluator.prediction(n))]
        if met:
            dest = min(met, key=lambda n: (cost.get(n, math.inf), n.offsets))
            dest_pred = evaluator.prediction(dest)

    path = _reconstruct(grid, evaluator, pred_map, dest)
    base_seed = np.random.SeedSequence([seed, 3]).generate_state(1)[0]
    baselines = baseline_paths(grid, origin, dest, evaluator, count=baseline_count, seed=int(base_seed))
    base_acts = [b.log_actionability for b in baselines]
    score = actionability_score(path, baselines) if baselines else 0.0

    config = {
        "L": L,
        "direction": grid.direction,
        "intervention": list(grid.feature_names),
        "cell_sizes": list(grid.cell_sizes),
        "bounds": {"lo": list(grid.lo), "hi": list(grid.hi)},
        "constraints": constraints.to_dict(),
        "weight_floor": weight_floor,
        "baseline_count": baseline_count,
    }
    return PlanResult(
        path=path,
        log_actionability=path.log_actionability,
        baseline_log_actionabilities=base_acts,
        score=score,
        settled_count=len(visited),
        negative_weight_count=len(negative_seen),
        early_exhaustion=early_exhaustion,
        seed=seed,
        config=config,
    )


def baseline_paths(
    grid: GridSpec,
    start: Node,
    end: Node,
    evaluator: NodeEvaluator,
    count: int = 10,
    seed: int = 0,
):
    """Random Manhattan-shortest monotone paths from start to end.

    Each path is a uniformly random permutation of the required unit moves,
    sampled with replacement across paths. Node scores come from the same
    evaluator as the optimal path."""
    if not (grid.in_bounds(start) and grid.in_bounds(end)):
        raise PlannerError("baseline endpoints out of bounds")
    moves = []
    for axis in range(grid.n_axes):
        delta = end.offsets[axis] - start.offsets[axis]
        moves.extend([(axis, 1 if delta > 0 else -1)] * abs(delta))
    rng = np.random.default_rng(seed)
    paths = []
    for _ in range(count):
        order = rng.permutation(len(moves)) if moves else []
        node = start
        nodes = [node]
        for idx in order:
            axis, sign = moves[idx]
            node = node.shifted(axis, sign)
            nodes.append(node)
        evaluator.evaluate(nodes)
        steps = []
        for i, n in enumerate(nodes):
            p, nld = evaluator.memo[n]
            if i == 0:
                steps.append(Step(node=n, feature=None, move=0, prediction=p, neg_log_density=nld))
            else:
                axis, sign = moves[order[i - 1]]
                steps.append(
                    Step(
                        node=n,
                        feature=grid.feature_names[axis],
                        move=sign,
                        prediction=p,
                        neg_log_density=nld,
                    )
                )
        paths.append(Path(steps))
    return paths


def actionability_score(optimal: Path, baselines) -> float:
    """Log-actionability of the optimal path minus the mean baseline
    log-actionability (the log of the geometric-mean baseline
    actionability)."""
    if not baselines:
        raise PlannerError("need at least one baseline path")
    vals = [b.log_actionability for b in baselines]
    if not all(math.isfinite(v) for v in vals) or not math.isfinite(optimal.log_actionability):
        raise PlannerError("non-finite path actionability")
    return optimal.log_actionability - sum(vals) / len(vals)
