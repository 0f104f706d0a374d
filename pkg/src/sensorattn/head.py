"""Box decoding, set matching and the weighted detection loss.

Regression vectors are ordered (x, y, z, w, h, l, sin, cos, vx, vy). The BEV
footprint of a box spans ``w`` along x and ``l`` along y (axis-aligned).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import SceneBounds
from .tensor import (
    Linear,
    Tensor,
    abs_,
    add,
    as_tensor,
    concat,
    exp,
    maximum,
    minimum,
    mul,
    relu,
    sigmoid,
    softplus,
    sub,
    sum_,
    take,
)

CLS_WEIGHT, L1_WEIGHT, IOU_WEIGHT = 0.7, 0.2, 0.1
FOCAL_GAMMA, FOCAL_ALPHA = 2.0, 0.25
REG_DIM = 10
REG_FIELDS = ("x", "y", "z", "w", "h", "l", "sin", "cos", "vx", "vy")


@dataclass(frozen=True)
class BoxPrediction:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    orientation: tuple[float, float]
    velocity: tuple[float, float]
    class_scores: tuple[float, ...]

    @property
    def label(self) -> int:
        return int(np.argmax(self.class_scores))

    @property
    def score(self) -> float:
        return float(max(self.class_scores))

    def heading(self) -> float:
        s, c = self.orientation
        return float(np.arctan2(s, c))

    def regression(self) -> tuple[float, ...]:
        return (*self.center, *self.size, *self.orientation, *self.velocity)


@dataclass(frozen=True)
class GroundTruth:
    boxes: np.ndarray  # [G x 10]
    labels: np.ndarray  # [G] int

    def __post_init__(self):
        boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, REG_DIM)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if boxes.shape[0] != labels.shape[0]:
            raise ValueError(f"{boxes.shape[0]} boxes but {labels.shape[0]} labels")
        if np.any(boxes[:, 3:6] <= 0):
            raise ValueError("ground-truth sizes must be positive")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class Predictions:
    """Batched decoder output; every field is a Tensor with a leading N_q axis."""

    regression: Tensor  # [N x 10]
    logits: Tensor  # [N x n_classes]
    scores: Tensor  # sigmoid(logits)

    def __len__(self) -> int:
        return self.regression.shape[0]

    def to_boxes(self) -> list[BoxPrediction]:
        r, s = self.regression.data, self.scores.data
        return [
            BoxPrediction(tuple(row[0:3]), tuple(row[3:6]), tuple(row[6:8]), tuple(row[8:10]), tuple(sc))
            for row, sc in zip(r.tolist(), s.tolist())
        ]


@dataclass(frozen=True)
class HeadParams:
    reg: Linear  # [d -> 10]
    cls: Linear  # [d -> n_classes]

    @classmethod
    def init(cls, d_model: int, n_classes: int, rng: np.random.Generator, gain: float = 1.0, prior: float = 0.5):
        bias = -np.log((1.0 - prior) / prior)
        return cls(Linear.init(d_model, REG_DIM, rng, gain), Linear.init(d_model, n_classes, rng, gain, bias=bias))

    @property
    def n_classes(self) -> int:
        return self.cls.weight.shape[1]


def inverse_sigmoid(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    x = np.clip(x, eps, 1.0 - eps)
    return np.log(x / (1.0 - x))


def decode_boxes(queries: Tensor, refs: np.ndarray, params: HeadParams, bounds: SceneBounds) -> Predictions:
    """Linear heads per field.

    Centers refine the query's reference point in logit space and are mapped
    to meters by the scene bounds; sizes are exp of the raw output, class
    scores a per-class sigmoid.
    """
    raw = params.reg(queries)
    lo, hi = np.asarray(bounds.lo), np.asarray(bounds.hi)
    rel = sigmoid(add(Tensor(inverse_sigmoid(refs)), take(raw, (slice(None), slice(0, 3)))))
    center = add(mul(rel, Tensor(hi - lo)), Tensor(lo))
    size = exp(take(raw, (slice(None), slice(3, 6))))
    rest = take(raw, (slice(None), slice(6, 10)))
    logits = params.cls(queries)
    return Predictions(concat([center, size, rest], axis=1), logits, sigmoid(logits))


# ---------------------------------------------------------------------------
# geometry


def bev_iou_np(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise axis-aligned BEV IoU of [A x 10] and [B x 10] boxes -> [A x B]."""
    a, b = a[:, None, :], b[None, :, :]
    ix = np.minimum(a[..., 0] + a[..., 3] / 2, b[..., 0] + b[..., 3] / 2) - np.maximum(
        a[..., 0] - a[..., 3] / 2, b[..., 0] - b[..., 3] / 2
    )
    iy = np.minimum(a[..., 1] + a[..., 5] / 2, b[..., 1] + b[..., 5] / 2) - np.maximum(
        a[..., 1] - a[..., 5] / 2, b[..., 1] - b[..., 5] / 2
    )
    ix = np.minimum(ix, np.minimum(a[..., 3], b[..., 3]))
    iy = np.minimum(iy, np.minimum(a[..., 5], b[..., 5]))
    inter = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
    union = a[..., 3] * a[..., 5] + b[..., 3] * b[..., 5] - inter
    return inter / union


def bev_iou(a: Tensor, b) -> Tensor:
    """Row-wise axis-aligned BEV IoU of two [M x 10] box sets."""
    b = as_tensor(b)

    def col(t, j):
        return take(t, (slice(None), j))

    def extent(t, c, s):
        half = mul(col(t, s), 0.5)
        return sub(col(t, c), half), add(col(t, c), half)

    ax0, ax1 = extent(a, 0, 3)
    bx0, bx1 = extent(b, 0, 3)
    ay0, ay1 = extent(a, 1, 5)
    by0, by1 = extent(b, 1, 5)
    # overlap capped at the smaller side so rounding in the extents cannot push IoU above 1
    ix = relu(minimum(sub(minimum(ax1, bx1), maximum(ax0, bx0)), minimum(col(a, 3), col(b, 3))))
    iy = relu(minimum(sub(minimum(ay1, by1), maximum(ay0, by0)), minimum(col(a, 5), col(b, 5))))
    inter = mul(ix, iy)
    union = sub(add(mul(col(a, 3), col(a, 5)), mul(col(b, 3), col(b, 5))), inter)
    return inter / union


# ---------------------------------------------------------------------------
# matching


def min_cost_assignment(cost: np.ndarray) -> np.ndarray:
    """Optimal one-to-one assignment of rows to columns (rows <= columns).

    Shortest augmenting paths with dual potentials, O(R^2 C). Rows are
    inserted in order and strict comparisons keep the lowest column index
    on ties. Returns the column chosen for each row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n > m:
        raise ValueError(f"cannot assign {n} rows to {m} columns")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row matched to column j (0 = free)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.zeros(n, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def matching_cost(preds: Predictions, gts: GroundTruth) -> np.ndarray:
    """[G x N] cost: 0.7 (1 - p_class) + 0.2 center L1 + 0.1 (1 - BEV IoU)."""
    reg, scores = preds.regression.data, preds.scores.data
    cls_cost = 1.0 - scores[:, gts.labels].T
    center = np.abs(gts.boxes[:, None, 0:3] - reg[None, :, 0:3]).sum(axis=-1)
    iou = bev_iou_np(gts.boxes, reg)
    return CLS_WEIGHT * cls_cost + L1_WEIGHT * center + IOU_WEIGHT * (1.0 - iou)


@dataclass(frozen=True)
class Assignment:
    pred: np.ndarray  # matched prediction index, one per gt
    gt: np.ndarray

    def __len__(self) -> int:
        return len(self.gt)


def match(preds: Predictions, gts: GroundTruth) -> Assignment:
    if len(gts) == 0:
        return Assignment(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    if len(gts) > len(preds):
        raise ValueError(f"{len(gts)} ground-truth boxes exceed {len(preds)} predictions")
    cols = min_cost_assignment(matching_cost(preds, gts))
    return Assignment(cols, np.arange(len(gts)))


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class LossBreakdown:
    cls: Tensor
    reg_l1: Tensor
    reg_iou: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k).item() for k in ("cls", "reg_l1", "reg_iou", "total")}


def classification_targets(n_preds: int, n_classes: int, gts: GroundTruth, assignment: Assignment) -> np.ndarray:
    t = np.zeros((n_preds, n_classes))
    t[assignment.pred, gts.labels[assignment.gt]] = 1.0
    return t


def classification_loss(preds: Predictions, gts: GroundTruth, assignment: Assignment) -> Tensor:
    """Sigmoid focal loss over every prediction and class, divided by max(1, #positives)."""
    n, k = preds.logits.shape
    t = classification_targets(n, k, gts, assignment)
    z, p = preds.logits, preds.scores
    one_minus_p = sub(1.0, p)
    pos = mul(mul(one_minus_p, one_minus_p), softplus(mul(z, -1.0)))  # (1-p)^2 * -log p
    neg = mul(mul(p, p), softplus(z))  # p^2 * -log(1-p)
    per = add(mul(pos, Tensor(FOCAL_ALPHA * t)), mul(neg, Tensor((1.0 - FOCAL_ALPHA) * (1.0 - t))))
    return mul(sum_(per), 1.0 / max(1, len(assignment)))


def l1_loss(preds: Predictions, gts: GroundTruth, assignment: Assignment) -> Tensor:
    if len(assignment) == 0:
        return Tensor(0.0)
    diff = sub(take(preds.regression, assignment.pred), Tensor(gts.boxes[assignment.gt]))
    return mul(sum_(abs_(diff)), 1.0 / len(assignment))


def iou_loss(preds: Predictions, gts: GroundTruth, assignment: Assignment) -> Tensor:
    if len(assignment) == 0:
        return Tensor(0.0)
    iou = bev_iou(take(preds.regression, assignment.pred), gts.boxes[assignment.gt])
    return sub(1.0, mul(sum_(iou), 1.0 / len(assignment)))


def combine(cls: Tensor, reg_l1: Tensor, reg_iou: Tensor) -> LossBreakdown:
    total = CLS_WEIGHT * cls + L1_WEIGHT * reg_l1 + IOU_WEIGHT * reg_iou
    return LossBreakdown(cls, reg_l1, reg_iou, total)


def total_loss(preds: Predictions, gts: GroundTruth, assignment: Assignment | None = None) -> LossBreakdown:
    """Match (unless an assignment is supplied, e.g. frozen for gradient checks) and combine."""
    if assignment is None:
        assignment = match(preds, gts)
    return combine(
        classification_loss(preds, gts, assignment),
        l1_loss(preds, gts, assignment),
        iou_loss(preds, gts, assignment),
    )


# ---------------------------------------------------------------------------
# prediction dump

DUMP_HEADER = "# class score " + " ".join(REG_FIELDS)


def format_predictions(preds: Predictions | list[BoxPrediction]) -> str:
    boxes = preds.to_boxes() if isinstance(preds, Predictions) else preds
    lines = [DUMP_HEADER]
    for box in boxes:
        lines.append(" ".join([str(box.label), repr(box.score), *(repr(float(v)) for v in box.regression())]))
    return "\n".join(lines) + "\n"


def parse_predictions(text: str) -> list[tuple[int, float, tuple[float, ...]]]:
    rows = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 + REG_DIM:
            raise ValueError(f"prediction row needs {2 + REG_DIM} fields, got {len(parts)}")
        rows.append((int(parts[0]), float(parts[1]), tuple(float(x) for x in parts[2:])))
    return rows
