"""Episode and room-segmentation metrics."""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

Cell = Tuple[int, int]

MAX_BUDGET = 5000


def success_rate(successes: Sequence[bool]) -> float:
    if len(successes) == 0:
        raise ValueError("success_rate needs at least one result")
    return sum(bool(s) for s in successes) / len(successes)


def spl(rows: Sequence[Tuple[bool, float, float]]) -> float:
    """Mean of success * shortest / max(shortest, traveled) over (success, traveled, shortest) rows."""
    if len(rows) == 0:
        raise ValueError("spl needs at least one result")
    total = 0.0
    for success, traveled, shortest in rows:
        if traveled < 0 or shortest < 0:
            raise ValueError("path lengths must be non-negative")
        if not success or not math.isfinite(shortest):
            continue
        denom = max(shortest, traveled)
        total += 1.0 if denom == 0 else shortest / denom
    return total / len(rows)


@dataclass(frozen=True)
class EfficiencyCurve:
    budgets: np.ndarray  # 0..max_budget inclusive
    fraction: np.ndarray  # share of episodes succeeding within each budget

    def __post_init__(self) -> None:
        if self.budgets.shape != self.fraction.shape:
            raise ValueError("budgets and fraction differ in length")
        if np.any(np.diff(self.budgets) <= 0):
            raise ValueError("budgets must be strictly increasing")
        if np.any(np.diff(self.fraction) < 0) or np.any((self.fraction < 0) | (self.fraction > 1)):
            raise ValueError("curve must be nondecreasing within [0, 1]")

    @property
    def max_budget(self) -> int:
        return int(self.budgets[-1])

    def __call__(self, budget: float) -> float:
        i = int(np.searchsorted(self.budgets, budget, side="right")) - 1
        return 0.0 if i < 0 else float(self.fraction[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["budget", "fraction"])
        for b, f in zip(self.budgets.tolist(), self.fraction.tolist()):
            writer.writerow([b, repr(float(f))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EfficiencyCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["budget", "fraction"]:
            raise ValueError("curve csv: expected header 'budget,fraction'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(data[:, 0].astype(int), data[:, 1])


def efficiency_curve(costs: Sequence[float], max_budget: int = MAX_BUDGET) -> EfficiencyCurve:
    """Share of episodes whose weighted cost at success is within each integer budget.

    Failures carry an infinite cost.
    """
    if len(costs) == 0:
        raise ValueError("efficiency_curve needs at least one result")
    budgets = np.arange(max_budget + 1)
    c = np.sort(np.asarray(costs, dtype=float))
    if np.any(np.isnan(c)) or np.any(c < 0):
        raise ValueError("costs must be non-negative or inf")
    counts = np.searchsorted(c, budgets, side="right")
    return EfficiencyCurve(budgets, counts / len(c))


def auc_e(curve: EfficiencyCurve) -> float:
    """Left Riemann sum over unit budgets, normalised by the maximum budget."""
    n = curve.max_budget
    return float(sum(curve(b) for b in range(n)) / n) if n > 0 else 0.0


# -- room segmentation ---------------------------------------------------------


def densify_rooms(free: np.ndarray, seeds: Sequence[Sequence[Cell]]) -> np.ndarray:
    """Multi-source 4-connected BFS over ``free`` from each room's seed cells.

    Returns a label grid (-1 unreached). At equal distance the lower room index wins.
    """
    h, w = free.shape
    label = np.full((h, w), -1, dtype=np.int32)
    frontier = []
    for k, cells in enumerate(seeds):
        for r, c in cells:
            if free[r, c] and label[r, c] < 0:
                label[r, c] = k
                frontier.append((r, c))
    queue = deque(frontier)
    while queue:
        r, c = queue.popleft()
        k = label[r, c]
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and free[rr, cc] and label[rr, cc] < 0:
                label[rr, cc] = k
                queue.append((rr, cc))
    return label


def label_sets(label: np.ndarray) -> List[Set[Cell]]:
    """Cell sets per non-negative label, ordered by label."""
    out = []
    for k in np.unique(label[label >= 0]):
        rows, cols = np.nonzero(label == k)
        out.append(set(zip(rows.tolist(), cols.tolist())))
    return out


def precision_recall(pred: Sequence[Set[Cell]], gt: Sequence[Set[Cell]]) -> Tuple[float, float]:
    """Max-overlap precision over predicted rooms and recall over ground-truth rooms."""
    pred = [p for p in pred if p]
    gt = [g for g in gt if g]
    if not pred or not gt:
        return 0.0, 0.0
    p = sum(max(len(e & g) for g in gt) / len(e) for e in pred) / len(pred)
    r = sum(max(len(e & g) for e in pred) / len(g) for g in gt) / len(gt)
    return p, r


def purity(components: Sequence[Sequence[int]]) -> float:
    """Share of Voronoi nodes that carry their component's majority ground-truth room.

    ``components`` lists the ground-truth room label of every node per predicted
    component; negative labels (nodes outside any room) are ignored.
    """
    total, hits = 0, 0
    for comp in components:
        labels = [x for x in comp if x >= 0]
        if not labels:
            continue
        _, counts = np.unique(labels, return_counts=True)
        hits += int(counts.max())
        total += len(labels)
    return hits / total if total else 0.0


@dataclass(frozen=True)
class SegFrame:
    """Segmentation state at one policy step."""

    pred: List[Set[Cell]]
    gt: List[Set[Cell]]
    components: List[List[int]]


@dataclass(frozen=True)
class SegScore:
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    purity: float
    steps: int

    def to_json(self) -> Dict:
        return {k: (round(v, 6) if isinstance(v, float) else v) for k, v in self.__dict__.items()}


def seg_scores(frames: Sequence[SegFrame]) -> SegScore:
    """Means and population standard deviations across steps, plus mean purity."""
    if not frames:
        raise ValueError("seg_scores needs at least one frame")
    pr = np.array([precision_recall(f.pred, f.gt) for f in frames])
    pur = np.array([purity(f.components) for f in frames])
    return SegScore(float(pr[:, 0].mean()), float(pr[:, 0].std()), float(pr[:, 1].mean()),
                    float(pr[:, 1].std()), float(pur.mean()), len(frames))


def segmentation_frame(sg, bev, room_grid: np.ndarray) -> SegFrame:
    """Frame from a scene graph: predicted rooms are densified from their Voronoi nodes over
    known free space; ground-truth rooms are restricted to the same known free space."""
    free = bev.free
    if not sg.rooms:
        return SegFrame([], [], [])
    seeds = [[sg.graph.cell(n) for n in r.voronoi_nodes] for r in sg.rooms]
    pred = label_sets(densify_rooms(free, seeds))
    gt = label_sets(np.where(free, room_grid, -1))
    components = [[int(room_grid[c]) for c in cells] for cells in seeds]
    return SegFrame(pred, gt, components)


def summarize(results: Sequence, max_budget: int = MAX_BUDGET) -> Tuple[Dict, EfficiencyCurve]:
    """Suite report from episode results (anything with success, distance_m, shortest_m, cost_at_success)."""
    curve = efficiency_curve([r.cost_at_success for r in results], max_budget)
    sr = success_rate([r.success for r in results])
    report = {
        "episodes": len(results),
        "success_rate": round(sr, 6),
        "spl": round(spl([(r.success, r.distance_m, r.shortest_m) for r in results]), 6),
        "auc_e": round(auc_e(curve), 6),
        "max_budget": max_budget,
        "mean_weighted_cost_success": _mean([r.weighted_cost for r in results if r.success]),
        "reasons": _counts(r.reason for r in results),
    }
    return report, curve


def _mean(xs) -> Optional[float]:
    xs = list(xs)
    return round(float(np.mean(xs)), 6) if xs else None


def _counts(xs) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for x in xs:
        out[x] = out.get(x, 0) + 1
    return dict(sorted(out.items()))
