"""Independent reference implementations used as test oracles.

Everything here is written the slow, obvious way (nested loops, scalar
formulas, textbook recursions) and shares no code with the package. Tests
compare the package's vectorized implementations against these.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_oracle(x, w, b, stride=1, padding=0):
    """Direct nested-loop cross-correlation. x: (B,C,H,W), w: (O,C,kh,kw)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    bs, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    xp = np.zeros((bs, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    out = np.zeros((bs, oc, oh, ow))
    for n in range(bs):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = b[o]
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += (w[o, ci, u, v] *
                                        xp[n, ci, i * stride + u,
                                           j * stride + v])
                    out[n, o, i, j] = acc
    return out


def batch_norm_oracle(x, scale, shift, eps=1e-5):
    """Training-mode batch norm via scalar per-channel statistics."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for c in range(x.shape[1]):
        vals = x[:, c, :, :].reshape(-1)
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        out[:, c] = ((x[:, c] - mean) / math.sqrt(var + eps)
                     * scale[c] + shift[c])
    return out


def layer_norm_oracle(x, scale, shift, eps=1e-5):
    """Last-dim normalization per (b, n) row, scalar math."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    out = np.empty_like(flat)
    for r in range(flat.shape[0]):
        row = flat[r]
        mean = sum(row) / len(row)
        var = sum((v - mean) ** 2 for v in row) / len(row)
        out[r] = (row - mean) / math.sqrt(var + eps) * scale + shift
    return out.reshape(x.shape)


def bilinear_upsample2x_oracle(x):
    """Per-output-pixel bilinear interpolation, source = (dst+0.5)/2 - 0.5."""
    x = np.asarray(x, dtype=np.float64)
    b, c, h, w = x.shape
    out = np.zeros((b, c, 2 * h, 2 * w))
    for n in range(b):
        for ci in range(c):
            for i in range(2 * h):
                for j in range(2 * w):
                    si = max((i + 0.5) / 2.0 - 0.5, 0.0)
                    sj = max((j + 0.5) / 2.0 - 0.5, 0.0)
                    i0 = min(int(math.floor(si)), h - 1)
                    j0 = min(int(math.floor(sj)), w - 1)
                    i1 = min(i0 + 1, h - 1)
                    j1 = min(j0 + 1, w - 1)
                    di = si - i0
                    dj = sj - j0
                    out[n, ci, i, j] = (
                        x[n, ci, i0, j0] * (1 - di) * (1 - dj)
                        + x[n, ci, i0, j1] * (1 - di) * dj
                        + x[n, ci, i1, j0] * di * (1 - dj)
                        + x[n, ci, i1, j1] * di * dj)
    return out


def adaptive_avg_pool_oracle(x, out_h, out_w):
    """Bin rule: start = floor(i*H/out), end = ceil((i+1)*H/out)."""
    x = np.asarray(x, dtype=np.float64)
    b, c, h, w = x.shape
    out = np.zeros((b, c, out_h, out_w))
    for n in range(b):
        for ci in range(c):
            for i in range(out_h):
                r0 = math.floor(i * h / out_h)
                r1 = math.ceil((i + 1) * h / out_h)
                for j in range(out_w):
                    c0 = math.floor(j * w / out_w)
                    c1 = math.ceil((j + 1) * w / out_w)
                    block = x[n, ci, r0:r1, c0:c1]
                    out[n, ci, i, j] = block.sum() / block.size
    return out


def max_pool_3x3s2_oracle(x):
    """3x3 stride-2 max pool, padding 1, scalar loops."""
    x = np.asarray(x, dtype=np.float64)
    b, c, h, w = x.shape
    oh = (h + 2 - 3) // 2 + 1
    ow = (w + 2 - 3) // 2 + 1
    out = np.zeros((b, c, oh, ow))
    for n in range(b):
        for ci in range(c):
            for i in range(oh):
                for j in range(ow):
                    best = -math.inf
                    for u in range(3):
                        for v in range(3):
                            r = i * 2 + u - 1
                            s = j * 2 + v - 1
                            if 0 <= r < h and 0 <= s < w:
                                best = max(best, x[n, ci, r, s])
                    out[n, ci, i, j] = best
    return out


def uniform_knots(lo, hi, intervals, order):
    """Uniform knot vector extended ``order`` knots beyond each boundary."""
    spacing = (hi - lo) / intervals
    return [lo + (i - order) * spacing
            for i in range(intervals + 2 * order + 1)]


def bspline_oracle(x, lo=-1.0, hi=1.0, intervals=5, order=3):
    """Textbook Cox-de Boor recursion at a single scalar point.

    Degree-0 bases are half-open interval indicators; the final knot
    interval is treated as closed so x = hi lands in the last basis. Input
    is clamped to [lo, hi] first. Returns ``intervals + order`` values.
    """
    t = uniform_knots(lo, hi, intervals, order)
    x = min(max(float(x), lo), hi)
    n0 = len(t) - 1

    def b(j, k):
        if k == 0:
            if x == hi:  # closed last interior interval, nothing else
                return 1.0 if j == order + intervals - 1 else 0.0
            return 1.0 if t[j] <= x < t[j + 1] else 0.0
        left = 0.0
        if t[j + k] != t[j]:
            left = (x - t[j]) / (t[j + k] - t[j]) * b(j, k - 1)
        right = 0.0
        if t[j + k + 1] != t[j + 1]:
            right = (t[j + k + 1] - x) / (t[j + k + 1] - t[j + 1]) * b(j + 1,
                                                                       k - 1)
        return left + right

    return [b(j, order) for j in range(n0 - order)]


def kan_linear_oracle(x, coeffs, base_weight, spline_scale,
                      lo=-1.0, hi=1.0, intervals=5, order=3):
    """Naive per-edge loop: y[o] = sum_i bw[o,i]*silu(x[i])
    + ss[o,i]*sum_j c[o,i,j]*B_j(x[i])."""
    x = np.asarray(x, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    base_weight = np.asarray(base_weight, dtype=np.float64)
    spline_scale = np.asarray(spline_scale, dtype=np.float64)
    batch, n_in = x.shape
    n_out = base_weight.shape[0]
    out = np.zeros((batch, n_out))
    for n in range(batch):
        basis = [bspline_oracle(x[n, i], lo, hi, intervals, order)
                 for i in range(n_in)]
        for o in range(n_out):
            acc = 0.0
            for i in range(n_in):
                xi = x[n, i]
                silu = xi / (1.0 + math.exp(-xi))
                spline = sum(coeffs[o, i, j] * basis[i][j]
                             for j in range(coeffs.shape[2]))
                acc += (base_weight[o, i] * silu
                        + spline_scale[o, i] * spline)
            out[n, o] = acc
    return out


def confusion_oracle(pred, target, n_classes=2):
    """Exhaustive per-pixel scan; returns per-class (tp, fp, fn, tn)."""
    pred = np.asarray(pred).reshape(-1)
    target = np.asarray(target).reshape(-1)
    counts = {c: [0, 0, 0, 0] for c in range(n_classes)}
    for p, t in zip(pred.tolist(), target.tolist()):
        for c in range(n_classes):
            if p == c and t == c:
                counts[c][0] += 1
            elif p == c and t != c:
                counts[c][1] += 1
            elif p != c and t == c:
                counts[c][2] += 1
            else:
                counts[c][3] += 1
    return counts


def metrics_oracle(pred, target, eps=1e-5):
    """Scalar metric formulas from the exhaustive confusion counts.

    mIoU averages per-class IoU over {background, foreground} with the
    absent-class rule (0/0 -> 1); dice uses the smoothed foreground form;
    recall is foreground with 0/0 -> 1.
    """
    counts = confusion_oracle(pred, target, 2)
    ious = []
    for c in (0, 1):
        tp, fp, fn, _ = counts[c]
        denom = tp + fp + fn
        ious.append(1.0 if denom == 0 else tp / denom)
    miou = sum(ious) / 2.0
    tp, fp, fn, tn = counts[1]
    dice = (2.0 * tp + eps) / (2.0 * tp + fp + fn + eps)
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total
    recall = 1.0 if (tp + fn) == 0 else tp / (tp + fn)
    return {"miou": miou, "dice": dice, "accuracy": accuracy,
            "recall": recall}
