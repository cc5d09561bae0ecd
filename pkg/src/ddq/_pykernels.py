"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation so both backends
return bit-identical results. Used when the compiled extension is missing
or ``DDQ_PURE_PYTHON=1`` is set.
"""

import numpy as np

NAME = "python"


def pairwise_iou(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    union = (area_a[:, None] + area_b[None, :]) - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def greedy_nms(boxes, order, iou_threshold, max_keep):
    """Visit ``order`` front to back, keeping a box unless it overlaps an
    already kept box with IoU >= ``iou_threshold``."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    order = np.asarray(order, dtype=np.intp)
    keep = []
    while order.size > 0 and len(keep) < max_keep:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        if rest.size == 0:
            break
        ovr = pairwise_iou(boxes[i:i + 1], boxes[rest])[0]
        order = rest[ovr < iou_threshold]
    return np.asarray(keep, dtype=np.intp)


def solve_assignment(cost):
    """Shortest augmenting path assignment for an n x m matrix, n <= m.

    Returns the column assigned to each row. Ties resolve to the lowest
    column index reachable first.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n > m:
        raise ValueError("solve_assignment needs rows <= columns")
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.intp)
    way = np.zeros(m + 1, dtype=np.intp)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = (cost[i0 - 1] - u[i0]) - v[1:]
            free = ~used[1:]
            upd = free & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    assignment = np.full(n, -1, dtype=np.intp)
    for j in range(1, m + 1):
        if p[j] != 0:
            assignment[p[j] - 1] = j - 1
    return assignment


def roi_align(data, fx1, fy1, fx2, fy2, out_h, out_w, sampling):
    """Average of ``sampling**2`` bilinear samples per output bin.

    Box corners are continuous feature coordinates where index ``k`` sits at
    coordinate ``k``. Samples outside the map clamp to the border.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    height, width, _ = data.shape
    bin_h = (fy2 - fy1) / out_h
    bin_w = (fx2 - fx1) / out_w
    ys = fy1 + np.arange(out_h)[:, None] * bin_h + (np.arange(sampling)[None, :] + 0.5) * bin_h / sampling
    xs = fx1 + np.arange(out_w)[:, None] * bin_w + (np.arange(sampling)[None, :] + 0.5) * bin_w / sampling
    y_lo, y_hi, ly = _axis_weights(ys.ravel(), height)
    x_lo, x_hi, lx = _axis_weights(xs.ravel(), width)

    v00 = data[y_lo[:, None], x_lo[None, :]]
    v01 = data[y_lo[:, None], x_hi[None, :]]
    v10 = data[y_hi[:, None], x_lo[None, :]]
    v11 = data[y_hi[:, None], x_hi[None, :]]
    lxb = lx[None, :, None]
    top = v00 + lxb * (v01 - v00)
    bottom = v10 + lxb * (v11 - v10)
    val = top + ly[:, None, None] * (bottom - top)

    # (out_h*s, out_w*s, C) -> running mean over each bin's samples
    val = val.reshape(out_h, sampling, out_w, sampling, -1)
    out = np.zeros((out_h, out_w, data.shape[2]))
    k = 0
    for iy in range(sampling):
        for ix in range(sampling):
            k += 1
            out += (val[:, iy, :, ix, :] - out) / k
    return out


def _axis_weights(coords, size):
    c = np.clip(coords, 0.0, size - 1.0)
    lo = np.floor(c).astype(np.intp)
    hi = np.minimum(lo + 1, size - 1)
    frac = c - lo
    return lo, hi, frac
