"""Verification suites: loop-oracle equivalence, gradient checks, conformance vectors.

Oracle cases draw every dimension from 1..3 and every value from [-1, 1];
each case is rerun for many seeds and reports the worst absolute difference.

Conformance vectors live in ``fixtures/v1/<case>/`` as TSR1 files:
``input*.tsr1``, ``param_XX.tsr1`` (leaves in parameter-tree order) and
``expected.tsr1``, plus a ``case.yaml`` with the op name and integer settings.
Expected outputs are produced by the loop oracles, not by the code under test.
"""

from __future__ import annotations

import shutil
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import dual, fusion, head, mixed, oracles, triple
from .gradcheck import gradcheck
from .tensor import (
    ConvKernel,
    Linear,
    Tensor,
    adaptive_max_pool,
    batchnorm2d,
    conv2d_same,
    matmul,
    parameters,
    read_tsr1,
    softmax_last,
    with_parameters,
    write_tsr1,
)

ORACLE_TOL = 1e-12
GRADCHECK_TOL = 1e-6
FIXTURE_VERSION = "v1"
FIXTURE_ROOT = Path(__file__).parent / "fixtures"
MODULE_GRADCHECKS = ("dual_forward", "triple_forward", "mixed_forward", "fuse_and_update", "total_loss")


@dataclass(frozen=True)
class CheckResult:
    kind: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.kind} {self.name}: {self.detail}"


def _u(rng, shape):
    return rng.uniform(-1.0, 1.0, shape)


def _d(rng, lo: int = 1, hi: int = 3) -> int:
    return int(rng.integers(lo, hi + 1))


def _randomized(tree, rng):
    return with_parameters(tree, [Tensor(_u(rng, t.shape)) for t in parameters(tree)])


def _dual(rng):
    n, h, w = _d(rng), _d(rng), _d(rng)
    return Tensor(_u(rng, (n, h, w))), _randomized(dual.DualAttentionParams.init(n, rng), rng)


def _triple(rng):
    n, h, w = _d(rng), _d(rng), _d(rng)
    return Tensor(_u(rng, (n, h, w))), _randomized(triple.TripleAttentionParams.init(rng), rng)


def _mixed(rng):
    n, h, w = _d(rng), _d(rng), _d(rng)
    p = mixed.MixedAttentionParams.init(n, rng, n_mix=_d(rng), head_dim=_d(rng))
    return Tensor(_u(rng, (n, h, w))), _randomized(p, rng)


# ---------------------------------------------------------------------------
# oracle cases: rng -> (actual, expected)


def _case_matmul(rng):
    a = _u(rng, (_d(rng), _d(rng)))
    b = _u(rng, (a.shape[1], _d(rng)))
    return matmul(Tensor(a), Tensor(b)).data, oracles.matmul(a, b)


def _case_softmax(rng):
    x = _u(rng, (_d(rng), _d(rng))) * 5.0
    return softmax_last(Tensor(x)).data, oracles.softmax_rows(x)


def _case_conv(rng):
    c_in, c_out, h, w = (_d(rng) for _ in range(4))
    size = int(rng.choice([1, 3, 5]))
    x, wt, b = _u(rng, (c_in, h, w)), _u(rng, (c_out, c_in, size, size)), _u(rng, c_out)
    return conv2d_same(Tensor(x), ConvKernel(size, Tensor(wt), Tensor(b))).data, oracles.conv2d_same(x, wt, b)


def _case_maxpool(rng):
    x = _u(rng, (_d(rng), _d(rng), _d(rng)))
    return adaptive_max_pool(Tensor(x), x.shape[1:]).data, oracles.adaptive_max_pool(x)


def _case_batchnorm(rng):
    x = _u(rng, (_d(rng), _d(rng), _d(rng)))
    g, b = _u(rng, x.shape[0]), _u(rng, x.shape[0])
    return batchnorm2d(Tensor(x), Tensor(g), Tensor(b)).data, oracles.batchnorm2d(x, g, b, 1e-5)


def _case_spatial_map(rng):
    shape = (_d(rng), _d(rng), _d(rng))
    q1, q2 = _u(rng, shape), _u(rng, shape)
    return dual.spatial_map(Tensor(q1), Tensor(q2)).data, oracles.spatial_map(q1, q2)


def _case_spatial_branch(rng):
    q, p = _dual(rng)
    return dual.spatial_branch(q, p).data, oracles.spatial_branch(q.data, oracles.dual_params(p))


def _case_channel_branch(rng):
    q, p = _dual(rng)
    return dual.channel_branch(q, p).data, oracles.channel_branch(q.data, oracles.dual_params(p))


def _case_dual_forward(rng):
    q, p = _dual(rng)
    return dual.dual_forward(q, p).data, oracles.dual_forward(q.data, oracles.dual_params(p))


def _case_triple_branch(rng):
    q, p = _triple(rng)
    branch = triple.BRANCHES[int(rng.integers(3))]
    return triple.branch_forward(q, branch, p).data, oracles.triple_branch(q.data, branch, oracles.triple_params(p))


def _case_triple_forward(rng):
    q, p = _triple(rng)
    return triple.triple_forward(q, p).data, oracles.triple_forward(q.data, oracles.triple_params(p))


def _case_qkv(rng):
    q, p = _mixed(rng)
    m = mixed.qkv_project(q, p)
    ref = oracles.qkv_project(q.data, oracles.mixed_params(p))
    return np.stack([m.x1.data, m.x2.data, m.x3.data]), np.stack(ref)


def _case_conv_branch(rng):
    q, p = _mixed(rng)
    m = mixed.qkv_project(q, p)
    return mixed.conv_branch(m, p).data, oracles.conv_branch(m.x1.data, m.x2.data, m.x3.data, oracles.mixed_params(p))


def _case_head_attention(rng):
    q, p = _mixed(rng)
    m = mixed.qkv_project(q, p)
    return mixed.head_attention(m, p).data, oracles.head_attention(m.x1.data, m.x2.data, p.n_mix)


def _case_attention_branch(rng):
    q, p = _mixed(rng)
    m = mixed.qkv_project(q, p)
    expected = oracles.attention_branch(m.x1.data, m.x2.data, m.x3.data, oracles.mixed_params(p))
    return mixed.attention_branch(m, p).data, expected


def _case_mixed_forward(rng):
    q, p = _mixed(rng)
    return mixed.mixed_forward(q, p).data, oracles.mixed_forward(q.data, oracles.mixed_params(p))


SMALL_BOUNDS = fusion.SceneBounds((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))


def _small_camera(rng) -> fusion.CameraModel:
    yaw = rng.uniform(-np.pi, np.pi)
    return fusion.CameraModel.looking_along(yaw, rng.uniform(0.0, 0.5), 8.0, (_d(rng) * 8, _d(rng) * 8))


def _small_bev(rng, resolution=None) -> fusion.BevSpec:
    res = resolution if resolution is not None else float(rng.choice([2.0 / 3.0, 1.0, 2.0]))
    return fusion.BevSpec.from_range((-1.0, 1.0), (-1.0, 1.0), res)


def _case_project_camera(rng):
    cam = _small_camera(rng)
    refs = rng.uniform(0, 1, (_d(rng), 3))
    u, v, vis = fusion.project_to_camera(refs, cam, SMALL_BOUNDS)
    ref = [oracles.project_to_camera(r, cam, SMALL_BOUNDS) for r in refs]
    actual = np.column_stack([u, v, vis.astype(float)])
    return actual, np.array([[a, b, float(c)] for a, b, c in ref])


def _case_project_bev(rng):
    bev = _small_bev(rng)
    refs = rng.uniform(0, 1, (_d(rng), 3))
    x, y, inside = fusion.project_to_bev(refs, bev, SMALL_BOUNDS)
    ref = [oracles.project_to_bev(r, bev, SMALL_BOUNDS) for r in refs]
    return np.column_stack([x, y, inside.astype(float)]), np.array([[a, b, float(c)] for a, b, c in ref])


def _case_bilinear(rng):
    c, h, w, p = (_d(rng) for _ in range(4))
    fmap = _u(rng, (c, h, w))
    x, y = rng.uniform(-0.5, w - 0.5, p), rng.uniform(-0.5, h - 0.5, p)
    expected = np.stack([oracles.bilinear(fmap, xi, yi) for xi, yi in zip(x, y)])
    return fusion.bilinear_sample(Tensor(fmap), x, y).data, expected


def _module_out(rng, n_q):
    s = _d(rng, 1, 2)
    return Tensor(_u(rng, (n_q, s, s)))


def _case_aggregate_camera(rng):
    n_q, c, n_views, m = _d(rng), _d(rng), _d(rng, 1, 2), _d(rng, 1, 2)
    cams = tuple(_small_camera(rng) for _ in range(n_views))
    maps = tuple(tuple(Tensor(_u(rng, (c, _d(rng), _d(rng)))) for _ in range(m)) for _ in range(n_views))
    refs = rng.uniform(0, 1, (n_q, 3))
    out = _module_out(rng, n_q)
    lin = Linear(Tensor(_u(rng, (out.size // n_q, n_views * m))), Tensor(_u(rng, n_views * m)))
    agg = fusion.aggregate_camera(maps, cams, SMALL_BOUNDS, refs, out, lin)
    np_maps = [[t.data for t in view] for view in maps]
    expected, empty = oracles.aggregate_camera(np_maps, cams, SMALL_BOUNDS, refs, out.data, lin.weight.data, lin.bias.data)
    return np.column_stack([agg.feature.data, agg.mask]), np.column_stack([expected, empty])


def _case_aggregate_lidar(rng):
    n_q, c, m, k = _d(rng), _d(rng), _d(rng, 1, 2), _d(rng, 1, 2)
    base = float(rng.choice([2.0 / 3.0, 1.0]))
    bevs = tuple(_small_bev(rng, base * 2**i) for i in range(m))
    maps = tuple(Tensor(_u(rng, (c, *b.grid))) for b in bevs)
    refs = rng.uniform(0, 1, (n_q, 3))
    offsets = Tensor(_u(rng, (n_q, m, k, 2)))
    out = _module_out(rng, n_q)
    lin = Linear(Tensor(_u(rng, (out.size // n_q, m * k))), Tensor(_u(rng, m * k)))
    agg = fusion.aggregate_lidar(maps, bevs, SMALL_BOUNDS, refs, offsets, out, lin)
    expected = oracles.aggregate_bev(
        [t.data for t in maps], bevs, SMALL_BOUNDS, refs, offsets.data, out.data, lin.weight.data, lin.bias.data
    )
    return agg.feature.data, expected


def _case_aggregate_radar(rng):
    n_q, c, k = _d(rng), _d(rng), _d(rng)
    bev = _small_bev(rng)
    fmap = Tensor(_u(rng, (c, *bev.grid)))
    refs = rng.uniform(0, 1, (n_q, 3))
    offsets = Tensor(_u(rng, (n_q, k, 2)))
    out = _module_out(rng, n_q)
    lin = Linear(Tensor(_u(rng, (out.size // n_q, k))), Tensor(_u(rng, k)))
    agg = fusion.aggregate_radar(fmap, bev, SMALL_BOUNDS, refs, offsets, out, lin)
    expected = oracles.aggregate_bev(
        [fmap.data], (bev,), SMALL_BOUNDS, refs, offsets.data[:, None], out.data, lin.weight.data, lin.bias.data
    )
    return agg.feature.data, expected


def _case_focal(rng):
    n, k = _d(rng), _d(rng)
    logits = _u(rng, (n, k)) * 3.0
    n_gt = _d(rng, 0, n)
    gts = head.GroundTruth(np.tile([0, 0, 0, 1, 1, 1, 0, 1, 0, 0], (n_gt, 1)), rng.integers(0, k, n_gt))
    assignment = head.Assignment(rng.permutation(n)[:n_gt], np.arange(n_gt))
    preds = head.Predictions(Tensor(np.zeros((n, 10))), Tensor(logits), Tensor(np.vectorize(oracles.sigmoid)(logits)))
    targets = head.classification_targets(n, k, gts, assignment)
    actual = head.classification_loss(preds, gts, assignment).data
    return np.atleast_1d(actual), np.array([oracles.focal_loss(logits, targets, n_gt)])


def _case_bev_iou(rng):
    n = _d(rng)
    a = np.column_stack([_u(rng, (n, 3)), rng.uniform(0.2, 2.0, (n, 3)), np.zeros((n, 4))])
    b = np.column_stack([_u(rng, (n, 3)), rng.uniform(0.2, 2.0, (n, 3)), np.zeros((n, 4))])
    actual = head.bev_iou(Tensor(a), b).data
    return actual, np.array([oracles.rect_iou(x, y) for x, y in zip(a, b)])


ORACLE_CASES: dict[str, Callable] = {
    "matmul": _case_matmul,
    "softmax_last": _case_softmax,
    "conv2d_same": _case_conv,
    "adaptive_max_pool": _case_maxpool,
    "batchnorm2d": _case_batchnorm,
    "spatial_map": _case_spatial_map,
    "spatial_branch": _case_spatial_branch,
    "channel_branch": _case_channel_branch,
    "dual_forward": _case_dual_forward,
    "triple_branch": _case_triple_branch,
    "triple_forward": _case_triple_forward,
    "qkv_project": _case_qkv,
    "conv_branch": _case_conv_branch,
    "head_attention": _case_head_attention,
    "attention_branch": _case_attention_branch,
    "mixed_forward": _case_mixed_forward,
    "project_to_camera": _case_project_camera,
    "project_to_bev": _case_project_bev,
    "bilinear_sample": _case_bilinear,
    "aggregate_camera": _case_aggregate_camera,
    "aggregate_lidar": _case_aggregate_lidar,
    "aggregate_radar": _case_aggregate_radar,
    "classification_loss": _case_focal,
    "bev_iou": _case_bev_iou,
}


def oracle_check(name: str, seeds: int = 100, tol: float = ORACLE_TOL) -> CheckResult:
    worst = 0.0
    for seed in range(seeds):
        actual, expected = ORACLE_CASES[name](np.random.default_rng([seed, 7919]))
        if actual.shape != expected.shape:
            return CheckResult("oracle", name, False, f"seed {seed}: shape {actual.shape} vs oracle {expected.shape}")
        worst = max(worst, float(np.max(np.abs(actual - expected), initial=0.0)))
    return CheckResult("oracle", name, worst < tol, f"max abs diff {worst:.3e} over {seeds} seeds (tol {tol:g})")


def run_oracles(seeds: int = 100) -> list[CheckResult]:
    return [oracle_check(name, seeds) for name in ORACLE_CASES]


def run_gradchecks(trials: int = 20, targets=None) -> list[CheckResult]:
    out = []
    for name in targets or MODULE_GRADCHECKS:
        rep = gradcheck(name, trials=trials, tol=GRADCHECK_TOL)
        detail = f"worst rel err {rep.worst_rel_err:.3e} over {rep.checked} entries, {rep.trials} trials (tol {rep.tol:g})"
        out.append(CheckResult("gradcheck", name, rep.passed, detail))
    return out


# ---------------------------------------------------------------------------
# conformance vectors


@dataclass(frozen=True)
class FixtureCase:
    name: str
    op: str
    inputs: tuple[np.ndarray, ...]
    params: object | None
    settings: dict


def _fixture_cases() -> list[FixtureCase]:
    rng = np.random.default_rng([2024, 1])
    cases = []
    for i in range(3):
        a = _u(rng, (3, 4))
        cases.append(FixtureCase(f"matmul_{i}", "matmul", (a, _u(rng, (4, 2))), None, {}))
        x = _u(rng, (2, 4, 4))
        k = ConvKernel(3, Tensor(_u(rng, (3, 2, 3, 3))), Tensor(_u(rng, 3)))
        cases.append(FixtureCase(f"conv2d_same_{i}", "conv2d_same", (x,), k, {}))
        cases.append(FixtureCase(f"softmax_last_{i}", "softmax_last", (_u(rng, (3, 4)) * 4.0,), None, {}))
        x = _u(rng, (2, 3, 3))
        cases.append(FixtureCase(f"batchnorm2d_{i}", "batchnorm2d", (x, _u(rng, 2), _u(rng, 2)), None, {}))
        cases.append(FixtureCase(f"adaptive_max_pool_{i}", "adaptive_max_pool", (_u(rng, (4, 2, 3)),), None, {}))
        q, p = _dual(rng)
        cases.append(FixtureCase(f"dual_forward_{i}", "dual_forward", (q.data,), p, {"n_q": q.shape[0]}))
        q, p = _triple(rng)
        cases.append(FixtureCase(f"triple_forward_{i}", "triple_forward", (q.data,), p, {}))
        for branch in triple.BRANCHES:
            cases.append(FixtureCase(f"triple_{branch}_{i}", "triple_branch", (q.data,), p, {"branch": branch}))
        q, p = _mixed(rng)
        settings = {"n_q": q.shape[0], "n_mix": p.n_mix, "head_dim": p.head_dim}
        cases.append(FixtureCase(f"mixed_forward_{i}", "mixed_forward", (q.data,), p, settings))
    return cases


def _template(op: str, settings: dict, inputs):
    rng = np.random.default_rng(0)
    if op == "conv2d_same":
        return ConvKernel.init(3, inputs[0].shape[0], 1, rng)
    if op == "dual_forward":
        return dual.DualAttentionParams.init(settings["n_q"], rng)
    if op in ("triple_forward", "triple_branch"):
        return triple.TripleAttentionParams.init(rng)
    if op == "mixed_forward":
        return mixed.MixedAttentionParams.init(settings["n_q"], rng, settings["n_mix"], settings["head_dim"])
    return None


def _evaluate(op: str, inputs, params, settings) -> np.ndarray:
    t = [Tensor(x) for x in inputs]
    if op == "matmul":
        return matmul(*t).data
    if op == "conv2d_same":
        return conv2d_same(t[0], params).data
    if op == "softmax_last":
        return softmax_last(t[0]).data
    if op == "batchnorm2d":
        return batchnorm2d(*t).data
    if op == "adaptive_max_pool":
        return adaptive_max_pool(t[0], t[0].shape[1:]).data
    if op == "dual_forward":
        return dual.dual_forward(t[0], params).data
    if op == "triple_forward":
        return triple.triple_forward(t[0], params).data
    if op == "triple_branch":
        return triple.branch_forward(t[0], settings["branch"], params).data
    if op == "mixed_forward":
        return mixed.mixed_forward(t[0], params).data
    raise KeyError(op)


def _oracle_value(case: FixtureCase) -> np.ndarray:
    x, p = case.inputs, case.params
    if case.op == "matmul":
        return oracles.matmul(*x)
    if case.op == "conv2d_same":
        return oracles.conv2d_same(x[0], p.weights.data, p.bias.data)
    if case.op == "softmax_last":
        return oracles.softmax_rows(x[0])
    if case.op == "batchnorm2d":
        return oracles.batchnorm2d(*x, 1e-5)
    if case.op == "adaptive_max_pool":
        return oracles.adaptive_max_pool(x[0])
    if case.op == "dual_forward":
        return oracles.dual_forward(x[0], oracles.dual_params(p))
    if case.op == "triple_forward":
        return oracles.triple_forward(x[0], oracles.triple_params(p))
    if case.op == "triple_branch":
        return oracles.triple_branch(x[0], case.settings["branch"], oracles.triple_params(p))
    if case.op == "mixed_forward":
        return oracles.mixed_forward(x[0], oracles.mixed_params(p))
    raise KeyError(case.op)


def export_fixtures(root: Path | str = FIXTURE_ROOT) -> Path:
    """Write every conformance case under ``root/v1``; returns that directory."""
    target = Path(root) / FIXTURE_VERSION
    if target.exists():
        shutil.rmtree(target)
    for case in _fixture_cases():
        d = target / case.name
        d.mkdir(parents=True)
        for i, x in enumerate(case.inputs):
            write_tsr1(Tensor(x), d / f"input{i}.tsr1")
        leaves = parameters(case.params) if case.params is not None else []
        for i, leaf in enumerate(leaves):
            write_tsr1(leaf, d / f"param_{i:02d}.tsr1")
        write_tsr1(Tensor(_oracle_value(case)), d / "expected.tsr1")
        meta = {"op": case.op, "inputs": len(case.inputs), "params": len(leaves), **case.settings}
        (d / "case.yaml").write_text(yaml.safe_dump(meta, sort_keys=True))
    return target


def check_fixture(case_dir: Path, tol: float = ORACLE_TOL) -> CheckResult:
    meta = yaml.safe_load((case_dir / "case.yaml").read_text())
    inputs = [read_tsr1(case_dir / f"input{i}.tsr1").data for i in range(meta["inputs"])]
    params = _template(meta["op"], meta, inputs)
    if params is not None:
        leaves = [read_tsr1(case_dir / f"param_{i:02d}.tsr1") for i in range(meta["params"])]
        params = with_parameters(params, leaves)
    expected = read_tsr1(case_dir / "expected.tsr1").data
    actual = _evaluate(meta["op"], inputs, params, meta)
    if actual.shape != expected.shape:
        return CheckResult("conformance", case_dir.name, False, f"shape {actual.shape} vs expected {expected.shape}")
    diff = float(np.max(np.abs(actual - expected), initial=0.0))
    return CheckResult("conformance", case_dir.name, diff < tol, f"max abs diff {diff:.3e} (tol {tol:g})")


def run_conformance(root: Path | str = FIXTURE_ROOT) -> list[CheckResult]:
    base = Path(root) / FIXTURE_VERSION
    if not base.is_dir():
        return [CheckResult("conformance", str(base), False, "fixture directory missing")]
    return [check_fixture(d) for d in sorted(p for p in base.iterdir() if p.is_dir())]


@dataclass
class VerifyReport:
    results: list[CheckResult]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def verify_all(seeds: int = 100, trials: int = 20, fixtures: Path | str = FIXTURE_ROOT) -> VerifyReport:
    start = time.perf_counter()
    results = run_oracles(seeds) + run_gradchecks(trials) + run_conformance(fixtures)
    return VerifyReport(results, time.perf_counter() - start)
