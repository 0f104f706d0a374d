"""Central finite-difference checks of tape gradients.

Each named target builds a random instance (inputs drawn from [-1, 1]) and a
scalar loss ``sum(output * R)`` with a fixed random ``R``, so that no
direction of the output is invisible to the check.

Derivatives use the five-point central stencil at x +- h, x +- 2h
(truncation O(h^4)); batch norm over tiny planes has enough curvature that
the three-point stencil's O(h^2) term alone can exceed 1e-6.

The per-entry error is ``|analytic - numeric| / max(|analytic|, |numeric|, 1)``:
relative for gradients of magnitude above one, absolute below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dual, fusion, head, mixed, triple
from .tensor import (
    ConvKernel,
    Tensor,
    Tape,
    adaptive_max_pool,
    backward,
    batchnorm2d,
    conv2d_same,
    layer_norm,
    linear,
    matmul,
    parameters,
    sigmoid,
    softmax_last,
    sum_,
    with_parameters,
)

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class GradcheckReport:
    target: str
    trials: int
    checked: int
    worst_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst_rel_err < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} gradcheck {self.target}: worst rel err {self.worst_rel_err:.3e} over {self.checked} entries, {self.trials} trials (tol {self.tol:g})"


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)


def check_gradients(fn: Callable[..., Tensor], inputs: list[Tensor], h: float = DEFAULT_H) -> tuple[float, int]:
    """Worst error and entry count comparing tape gradients to central differences."""
    with Tape() as tape:
        loss = fn(*inputs)
    grads = backward(tape, loss)
    worst, count = 0.0, 0
    for idx, x in enumerate(inputs):
        analytic = grads.get(x, np.zeros(x.shape))
        numeric = np.zeros(x.shape)
        base = x.data.reshape(-1)
        for j in range(base.size):
            step = h * max(1.0, abs(base[j]))
            vals = []
            for k in (2.0, 1.0, -1.0, -2.0):
                pert = base.copy()
                pert[j] += k * step
                args = list(inputs)
                args[idx] = Tensor(pert.reshape(x.shape))
                vals.append(fn(*args).item())
            f2, f1, m1, m2 = vals
            numeric.reshape(-1)[j] = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * step)
        err = rel_error(analytic, numeric)
        worst = max(worst, float(err.max()))
        count += x.size
    return worst, count


def _projected(out: Tensor, r: np.ndarray) -> Tensor:
    return sum_(out * Tensor(r))


def _u(rng, shape):
    return rng.uniform(-1.0, 1.0, shape)


def _dims(rng, lo=1, hi=3, n=3):
    return [int(v) for v in rng.integers(lo, hi + 1, n)]


# ---------------------------------------------------------------------------
# instance builders: rng -> (fn, inputs)


def _linear_case(rng):
    m, k, n = _dims(rng)
    r = _u(rng, (m, n))
    return (lambda t, w, b: _projected(linear(t, w, b), r)), [Tensor(_u(rng, s)) for s in ((m, k), (k, n), (n,))]


def _matmul_case(rng):
    m, k, n = _dims(rng)
    r = _u(rng, (m, n))
    return (lambda a, b: _projected(matmul(a, b), r)), [Tensor(_u(rng, (m, k))), Tensor(_u(rng, (k, n)))]


def _softmax_case(rng):
    m, n = _dims(rng, n=2)
    r = _u(rng, (m, n))
    return (lambda t: _projected(softmax_last(t), r)), [Tensor(_u(rng, (m, n)))]


def _layer_norm_case(rng):
    m, n = _dims(rng, n=2)
    n = max(n, 2)
    r = _u(rng, (m, n))
    return (lambda t: _projected(layer_norm(t), r)), [Tensor(_u(rng, (m, n)))]


def _sigmoid_case(rng):
    shape = tuple(_dims(rng))
    r = _u(rng, shape)
    return (lambda t: _projected(sigmoid(t), r)), [Tensor(_u(rng, shape))]


def _conv_case(rng):
    c_in, c_out, h, w = _dims(rng, n=4)
    size = int(rng.choice([1, 3, 5]))
    r = _u(rng, (c_out, h, w))

    def fn(x, wt, b):
        return _projected(conv2d_same(x, ConvKernel(size, wt, b)), r)

    return fn, [Tensor(_u(rng, (c_in, h, w))), Tensor(_u(rng, (c_out, c_in, size, size))), Tensor(_u(rng, (c_out,)))]


def _batchnorm_case(rng):
    d, h, w = _dims(rng)
    h = max(h, 2)
    r = _u(rng, (d, h, w))
    return (lambda t, g, b: _projected(batchnorm2d(t, g, b), r)), [
        Tensor(_u(rng, (d, h, w))),
        Tensor(_u(rng, (d,))),
        Tensor(_u(rng, (d,))),
    ]


def _maxpool_case(rng):
    d, h, w = _dims(rng)
    r = _u(rng, (1, h, w))
    return (lambda t: _projected(adaptive_max_pool(t, (h, w)), r)), [Tensor(_u(rng, (d, h, w)))]


def _bilinear_case(rng):
    c, h, w = _dims(rng, lo=2)
    p = 4
    r = _u(rng, (p, c))
    rows = rng.uniform(0.05, h - 1.05, p)
    cols = rng.uniform(0.05, w - 1.05, p)
    return (lambda m, y, x: _projected(fusion.bilinear_gather(m, y, x), r)), [
        Tensor(_u(rng, (c, h, w))),
        Tensor(rows),
        Tensor(cols),
    ]


def _module_case(rng, params, forward):
    def build(q_shape):
        leaves = parameters(params)
        r = _u(rng, q_shape)

        def fn(q, *flat):
            return _projected(forward(q, with_parameters(params, flat)), r)

        return fn, [Tensor(_u(rng, q_shape)), *leaves]

    return build


def _dual_case(rng):
    n, h, w = _dims(rng)
    p = dual.DualAttentionParams.init(n, rng, alpha=rng.uniform(-1, 1), beta=rng.uniform(-1, 1))
    p = with_parameters(p, [Tensor(_u(rng, t.shape)) for t in parameters(p)])
    return _module_case(rng, p, dual.dual_forward)((n, h, w))


def _triple_case(rng):
    n, h, w = _dims(rng)
    h = max(h, 2)
    p = triple.TripleAttentionParams.init(rng)
    p = with_parameters(p, [Tensor(_u(rng, t.shape)) for t in parameters(p)])
    return _module_case(rng, p, triple.triple_forward)((n, h, w))


def _mixed_case(rng):
    n, h, w = _dims(rng)
    n_mix = int(rng.integers(1, 3))
    p = mixed.MixedAttentionParams.init(n, rng, n_mix=n_mix, head_dim=int(rng.integers(1, 4)))
    p = with_parameters(p, [Tensor(_u(rng, t.shape)) for t in parameters(p)])
    return _module_case(rng, p, mixed.mixed_forward)((n, h, w))


def _fuse_case(rng):
    n_q, c, c_n, d = _dims(rng, lo=1, hi=4, n=4)
    d = max(d, 2)
    bounds = fusion.SceneBounds((-4.0, -4.0, -1.0), (4.0, 4.0, 1.0))
    refs = rng.uniform(0, 1, (n_q, 3))
    p = fusion.FuseParams.init(2 * c + c_n, d, rng)
    leaves = parameters(p)
    r = _u(rng, (n_q, d))

    def fn(fc, fl, fr, q, *flat):
        return _projected(fusion.fuse_and_update(fc, fl, fr, q, refs, with_parameters(p, flat), bounds), r)

    feats = [Tensor(_u(rng, s)) for s in ((n_q, c), (n_q, c), (n_q, c_n), (n_q, d))]
    return fn, feats + [Tensor(_u(rng, t.shape)) for t in leaves]


def _total_loss_case(rng):
    n_q, d, n_cls = int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
    n_gt = int(rng.integers(1, n_q + 1))
    bounds = fusion.SceneBounds((-4.0, -4.0, -1.0), (4.0, 4.0, 1.0))
    refs = rng.uniform(0.1, 0.9, (n_q, 3))
    params = head.HeadParams.init(d, n_cls, rng)
    q0 = Tensor(_u(rng, (n_q, d)))
    gts = random_ground_truth(rng, n_gt, n_cls, bounds)
    preds = head.decode_boxes(q0, refs, params, bounds)
    assignment = head.match(preds, gts)
    leaves = parameters(params)

    def fn(q, *flat):
        p = with_parameters(params, flat)
        return head.total_loss(head.decode_boxes(q, refs, p, bounds), gts, assignment).total

    return fn, [q0, *leaves]


def random_ground_truth(rng, n: int, n_classes: int, bounds) -> head.GroundTruth:
    lo, hi = np.asarray(bounds.lo), np.asarray(bounds.hi)
    centers = lo + rng.uniform(0.15, 0.85, (n, 3)) * (hi - lo)
    sizes = rng.uniform(0.5, 2.5, (n, 3))
    theta = rng.uniform(-np.pi, np.pi, n)
    vel = rng.uniform(-1, 1, (n, 2))
    boxes = np.column_stack([centers, sizes, np.sin(theta), np.cos(theta), vel])
    return head.GroundTruth(boxes, rng.integers(0, n_classes, n))


TARGETS: dict[str, Callable] = {
    "linear": _linear_case,
    "matmul": _matmul_case,
    "softmax_last": _softmax_case,
    "sigmoid": _sigmoid_case,
    "layer_norm": _layer_norm_case,
    "conv2d_same": _conv_case,
    "batchnorm2d": _batchnorm_case,
    "adaptive_max_pool": _maxpool_case,
    "bilinear_sample": _bilinear_case,
    "dual_forward": _dual_case,
    "triple_forward": _triple_case,
    "mixed_forward": _mixed_case,
    "fuse_and_update": _fuse_case,
    "total_loss": _total_loss_case,
}


def gradcheck(target: str, trials: int = 20, h: float = DEFAULT_H, tol: float = DEFAULT_TOL, seed: int = 0) -> GradcheckReport:
    if target not in TARGETS:
        raise KeyError(f"unknown gradcheck target {target!r}; known: {sorted(TARGETS)}")
    rng = np.random.default_rng(seed)
    worst, checked = 0.0, 0
    for _ in range(trials):
        fn, inputs = TARGETS[target](rng)
        w, c = check_gradients(fn, inputs, h)
        worst, checked = max(worst, w), checked + c
    return GradcheckReport(target, trials, checked, worst, tol)
