"""Scalar brute-force reference implementations.

Everything here is written with explicit Python loops over plain floats and
shares no code with the vectorized modules, so the two can be compared.
Inputs are numpy arrays (read element by element); outputs are numpy arrays.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


def softmax_rows(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape)
    flat_in = x.reshape(-1, x.shape[-1])
    flat_out = out.reshape(-1, x.shape[-1])
    for r in range(flat_in.shape[0]):
        row = [float(v) for v in flat_in[r]]
        top = max(row)
        exps = [math.exp(v - top) for v in row]
        s = sum(exps)
        for c, e in enumerate(exps):
            flat_out[r, c] = e / s
    return out


def conv2d_same(x, w, b):
    c_in, h, wd = x.shape
    c_out, _, s, _ = w.shape
    p = s // 2
    out = np.zeros((c_out, h, wd))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                acc = float(b[o])
                for c in range(c_in):
                    for di in range(s):
                        for dj in range(s):
                            ii, jj = i + di - p, j + dj - p
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += float(w[o, c, di, dj]) * float(x[c, ii, jj])
                out[o, i, j] = acc
    return out


def adaptive_max_pool(x):
    d, h, w = x.shape
    out = np.zeros((1, h, w))
    for i in range(h):
        for j in range(w):
            best = float(x[0, i, j])
            for c in range(1, d):
                if x[c, i, j] > best:
                    best = float(x[c, i, j])
            out[0, i, j] = best
    return out


def batchnorm2d(x, gamma, beta, eps):
    d, h, w = x.shape
    out = np.zeros(x.shape)
    n = h * w
    for c in range(d):
        total = 0.0
        for i in range(h):
            for j in range(w):
                total += float(x[c, i, j])
        mu = total / n
        sq = 0.0
        for i in range(h):
            for j in range(w):
                sq += (float(x[c, i, j]) - mu) ** 2
        denom = math.sqrt(sq / n + eps)
        for i in range(h):
            for j in range(w):
                out[c, i, j] = float(gamma[c]) * (float(x[c, i, j]) - mu) / denom + float(beta[c])
    return out


def sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


# ---------------------------------------------------------------------------
# dual attention


def spatial_map(q1, q2):
    n, h, w = q1.shape
    hw = h * w
    logits = np.zeros((hw, hw))
    for m in range(hw):
        for k in range(hw):
            acc = 0.0
            for c in range(n):
                acc += float(q1[c, m // w, m % w]) * float(q2[c, k // w, k % w])
            logits[m, k] = acc
    return softmax_rows(logits)


def spatial_branch(q, p):
    """``p`` holds numpy arrays: w1, b1, w2, b2, w3, b3, alpha."""
    n, h, w = q.shape
    s = spatial_map(conv2d_same(q, p["w1"], p["b1"]), conv2d_same(q, p["w2"], p["b2"]))
    v = conv2d_same(q, p["w3"], p["b3"])
    out = np.zeros(q.shape)
    for c in range(n):
        for k in range(h * w):
            acc = 0.0
            for m in range(h * w):
                acc += float(s[m, k]) * float(v[c, m // w, m % w])
            out[c, k // w, k % w] = float(p["alpha"]) * acc + float(q[c, k // w, k % w])
    return out


def channel_map(q):
    n, h, w = q.shape
    logits = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            acc = 0.0
            for i in range(h):
                for j in range(w):
                    acc += float(q[a, i, j]) * float(q[b, i, j])
            logits[a, b] = acc
    return softmax_rows(logits)


def channel_branch(q, p):
    n, h, w = q.shape
    cm = channel_map(q)
    out = np.zeros(q.shape)
    for k in range(n):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for m in range(n):
                    acc += float(cm[m, k]) * float(q[m, i, j])
                out[k, i, j] = float(p["beta"]) * acc + float(q[k, i, j])
    return out


def dual_forward(q, p):
    return spatial_branch(q, p) + channel_branch(q, p)


def dual_params(params) -> dict:
    return {
        "w1": params.conv_q1.weights.data,
        "b1": params.conv_q1.bias.data,
        "w2": params.conv_q2.weights.data,
        "b2": params.conv_q2.bias.data,
        "w3": params.conv_q3.weights.data,
        "b3": params.conv_q3.bias.data,
        "alpha": float(params.alpha.data),
        "beta": float(params.beta.data),
    }


# ---------------------------------------------------------------------------
# triple attention


def _gate_2d(plane, w, b, gamma, beta, eps):
    """plane: rows x cols list-of-lists -> sigmoid(BN(conv5x5(plane)))."""
    arr = np.array(plane, dtype=np.float64)[None]
    z = conv2d_same(arr, w, b)
    z = batchnorm2d(z, [gamma], [beta], eps)
    rows, cols = arr.shape[1:]
    return [[sigmoid(float(z[0, i, j])) for j in range(cols)] for i in range(rows)]


def triple_branch(q, branch, p, eps=1e-5):
    """``p``: dict with w{1,2,3}, b{1,2,3}, gamma (3), beta (3), alphas (3)."""
    n, h, w = q.shape
    idx = {"HW": 0, "NH": 1, "NW": 2}[branch]
    args = (p[f"w{idx + 1}"], p[f"b{idx + 1}"], float(p["gamma"][idx]), float(p["beta"][idx]), eps)
    out = np.zeros(q.shape)
    if branch == "HW":
        plane = [[max(float(q[c, i, j]) for c in range(n)) for j in range(w)] for i in range(h)]
        g = _gate_2d(plane, *args)
        for c in range(n):
            for i in range(h):
                for j in range(w):
                    out[c, i, j] = float(q[c, i, j]) * g[i][j]
    elif branch == "NH":
        plane = [[max(float(q[c, i, j]) for j in range(w)) for i in range(h)] for c in range(n)]
        g = _gate_2d(plane, *args)
        for c in range(n):
            for i in range(h):
                for j in range(w):
                    out[c, i, j] = float(q[c, i, j]) * g[c][i]
    else:
        plane = [[max(float(q[c, i, j]) for i in range(h)) for j in range(w)] for c in range(n)]
        g = _gate_2d(plane, *args)
        for c in range(n):
            for i in range(h):
                for j in range(w):
                    out[c, i, j] = float(q[c, i, j]) * g[c][j]
    return out


def triple_forward(q, p, eps=1e-5):
    out = np.zeros(q.shape)
    for k, branch in enumerate(("HW", "NH", "NW")):
        out = out + float(p["alphas"][k]) * triple_branch(q, branch, p, eps)
    return out


def triple_params(params) -> dict:
    return {
        "w1": params.conv_b1.weights.data,
        "b1": params.conv_b1.bias.data,
        "w2": params.conv_b2.weights.data,
        "b2": params.conv_b2.bias.data,
        "w3": params.conv_b3.weights.data,
        "b3": params.conv_b3.bias.data,
        "gamma": params.bn_gamma.data,
        "beta": params.bn_beta.data,
        "alphas": params.alphas.data,
    }


# ---------------------------------------------------------------------------
# mixed attention


def qkv_project(q, p):
    return tuple(conv2d_same(q, p[f"pw{i}"], p[f"pb{i}"]) for i in (1, 2, 3))


def _position_linear(feats, weight, bias):
    """feats: list over positions of feature lists -> list over positions of outputs."""
    k, n = weight.shape
    out = []
    for f in feats:
        row = []
        for o in range(n):
            acc = float(bias[o])
            for t in range(k):
                acc += float(f[t]) * float(weight[t, o])
            row.append(acc)
        out.append(row)
    return out


def _to_map(rows, h, w):
    n = len(rows[0])
    out = np.zeros((n, h, w))
    for pos, row in enumerate(rows):
        for c in range(n):
            out[c, pos // w, pos % w] = row[c]
    return out


def conv_branch(x1, x2, x3, p):
    _, h, w = x1.shape
    feats = []
    for i in range(h):
        for j in range(w):
            feats.append([float(x[c, i, j]) for x in (x1, x2, x3) for c in range(x.shape[0])])
    return _to_map(_position_linear(feats, p["fcn_w"], p["fcn_b"]), h, w)


def head_attention(x1, x2, n_mix):
    width, h, w = x1.shape
    d = width // n_mix
    hw = h * w
    attn = np.zeros((n_mix, hw, hw))
    for head in range(n_mix):
        for a in range(hw):
            logits = []
            for b in range(hw):
                acc = 0.0
                for t in range(d):
                    c = head * d + t
                    acc += float(x1[c, a // w, a % w]) * float(x2[c, b // w, b % w])
                logits.append(acc / math.sqrt(d))
            attn[head, a] = softmax_rows([logits])[0]
    return attn


def attention_branch(x1, x2, x3, p):
    width, h, w = x1.shape
    n_mix = p["n_mix"]
    d = width // n_mix
    hw = h * w
    attn = head_attention(x1, x2, n_mix)
    feats = []
    for a in range(hw):
        f = []
        for head in range(n_mix):
            for t in range(d):
                c = head * d + t
                acc = 0.0
                for b in range(hw):
                    acc += float(attn[head, a, b]) * float(x3[c, b // w, b % w])
                f.append(acc)
        feats.append(f)
    return _to_map(_position_linear(feats, p["out_w"], p["out_b"]), h, w)


def mixed_forward(q, p):
    x1, x2, x3 = qkv_project(q, p)
    return float(p["alphas"][0]) * conv_branch(x1, x2, x3, p) + float(p["alphas"][1]) * attention_branch(x1, x2, x3, p)


def mixed_params(params) -> dict:
    return {
        "pw1": params.proj1.weights.data,
        "pb1": params.proj1.bias.data,
        "pw2": params.proj2.weights.data,
        "pb2": params.proj2.bias.data,
        "pw3": params.proj3.weights.data,
        "pb3": params.proj3.bias.data,
        "fcn_w": params.fcn_w.data,
        "fcn_b": params.fcn_b.data,
        "out_w": params.out_w.data,
        "out_b": params.out_b.data,
        "alphas": params.alphas.data,
        "n_mix": params.n_mix,
    }


# ---------------------------------------------------------------------------
# geometry and sampling


def denormalize(ref, bounds):
    return [float(bounds.lo[i]) + float(ref[i]) * (float(bounds.hi[i]) - float(bounds.lo[i])) for i in range(3)]


def project_to_camera(ref, cam, bounds):
    """Homogeneous-coordinate projection: P = K [I|0] E [x y z 1]^T."""
    world = denormalize(ref, bounds) + [1.0]
    e, k = cam.extrinsics, cam.intrinsics
    cam_h = [sum(float(e[r, c]) * world[c] for c in range(4)) for r in range(4)]
    img = [sum(float(k[r, c]) * cam_h[c] for c in range(3)) for r in range(3)]
    if cam_h[2] <= 1e-9:
        return 0.0, 0.0, False
    u_px, v_px = img[0] / img[2], img[1] / img[2]
    h, w = cam.image_size
    visible = 0 <= u_px < w and 0 <= v_px < h
    return u_px / w, v_px / h, visible


def project_to_bev(ref, bev, bounds):
    x, y, _ = denormalize(ref, bounds)
    h, w = bev.grid
    xc = (x - bev.x_range[0]) * (w - 1) / (bev.x_range[1] - bev.x_range[0])
    yc = (y - bev.y_range[0]) * (h - 1) / (bev.y_range[1] - bev.y_range[0])
    return xc, yc, (0 <= xc <= w - 1) and (0 <= yc <= h - 1)


def bilinear(fmap, x, y):
    """Sample [C x H x W] at column x, row y with border clamping."""
    c, h, w = fmap.shape
    x = min(max(float(x), 0.0), w - 1.0)
    y = min(max(float(y), 0.0), h - 1.0)
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    out = np.zeros(c)
    for ch in range(c):
        out[ch] = (
            (1 - fy) * (1 - fx) * float(fmap[ch, y0, x0])
            + (1 - fy) * fx * float(fmap[ch, y0, x1])
            + fy * (1 - fx) * float(fmap[ch, y1, x0])
            + fy * fx * float(fmap[ch, y1, x1])
        )
    return out


def _masked_softmax(logits, mask):
    valid = [float(v) for v, ok in zip(logits, mask) if ok]
    if not valid:
        return [0.0] * len(logits)
    top = max(valid)
    exps = [math.exp(float(v) - top) if ok else 0.0 for v, ok in zip(logits, mask)]
    s = sum(exps)
    return [e / s for e in exps]


def _head_logits(module_out, weight, bias):
    n = module_out.shape[0]
    feats = [[float(v) for v in module_out[i].reshape(-1)] for i in range(n)]
    return _position_linear(feats, weight, bias)


def aggregate_camera(maps, cameras, bounds, refs, module_out, weight, bias):
    """Loop form of the camera sum over views x scales. Returns (features, mask)."""
    logits = _head_logits(module_out, weight, bias)
    c = maps[0][0].shape[0]
    n_q = refs.shape[0]
    out = np.zeros((n_q, c))
    empty = np.zeros(n_q, dtype=bool)
    for qi in range(n_q):
        samples, ok = [], []
        for view, cam in zip(maps, cameras):
            u, v, vis = project_to_camera(refs[qi], cam, bounds)
            for fmap in view:
                _, h, w = fmap.shape
                samples.append(bilinear(fmap, u * (w - 1), v * (h - 1)))
                ok.append(vis)
        wts = _masked_softmax(logits[qi], ok)
        empty[qi] = not any(ok)
        for s, wt in zip(samples, wts):
            out[qi] += wt * s
    return out, empty


def aggregate_bev(maps, bevs, bounds, refs, offsets, module_out, weight, bias):
    """Loop form of the BEV sum over scales x K points; offsets [N_q, m, K, 2]."""
    logits = _head_logits(module_out, weight, bias)
    n_q, m, k, _ = offsets.shape
    out = np.zeros((n_q, maps[0].shape[0]))
    for qi in range(n_q):
        samples = []
        for i in range(m):
            xc, yc, _ = project_to_bev(refs[qi], bevs[i], bounds)
            for j in range(k):
                samples.append(bilinear(maps[i], xc + float(offsets[qi, i, j, 0]), yc + float(offsets[qi, i, j, 1])))
        wts = _masked_softmax(logits[qi], [True] * len(samples))
        for s, wt in zip(samples, wts):
            out[qi] += wt * s
    return out


# ---------------------------------------------------------------------------
# losses and matching


def focal_loss(logits, targets, n_pos, alpha=0.25, gamma=2.0):
    total = 0.0
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            p = sigmoid(float(logits[i, j]))
            if targets[i, j] > 0.5:
                total += -alpha * (1 - p) ** gamma * math.log(p)
            else:
                total += -(1 - alpha) * p**gamma * math.log(1 - p)
    return total / max(1, n_pos)


def rect_iou(a, b):
    """Axis-aligned BEV IoU of two 10-vectors (x, y, ., w, ., l, ...)."""
    ax0, ax1 = a[0] - a[3] / 2, a[0] + a[3] / 2
    ay0, ay1 = a[1] - a[5] / 2, a[1] + a[5] / 2
    bx0, bx1 = b[0] - b[3] / 2, b[0] + b[3] / 2
    by0, by1 = b[1] - b[5] / 2, b[1] + b[5] / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    return inter / (a[3] * a[5] + b[3] * b[5] - inter)


def brute_force_assignment(cost):
    """Minimum total cost over every injective row -> column map."""
    n, m = cost.shape
    best, best_cols = math.inf, None
    for cols in itertools.permutations(range(m), n):
        total = sum(float(cost[r, c]) for r, c in enumerate(cols))
        if total < best:
            best, best_cols = total, cols
    return best, best_cols
