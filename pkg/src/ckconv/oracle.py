"""Straight-line reference for the CKConv layer.

Plain Python floats and lists throughout.  The only things taken from the
layer object are its raw parameter values; the neighbour search draws from
``rng`` with the same calls as :func:`ckconv.pointcloud.radius_neighbors`
so both paths see the same local point sets given the same seed.
"""

from __future__ import annotations

import math

import numpy as np


def _act(x: float, kind: str) -> float:
    if kind == "relu":
        return x if x > 0.0 else 0.0
    if kind == "tanh":
        return math.tanh(x)
    return x


def _dense(x: list[float], weight: list[list[float]], bias: list[float], kind: str) -> list[float]:
    out = []
    for o in range(len(bias)):
        s = bias[o]
        for i in range(len(x)):
            s += x[i] * weight[i][o]
        out.append(_act(s, kind))
    return out


def _mlp(x, layers):
    for weight, bias, kind in layers:
        x = _dense(x, weight, bias, kind)
    return x


def _unpack_mlp(mlp):
    return [(l.weight.data.tolist(), l.bias.data[0].tolist(), l.activation) for l in mlp.layers]


def _neighbors(positions: list[list[float]], c: int, r: float, n: int, rng) -> list[int]:
    cx, cy, cz = positions[c]
    cands, best, best_d = [], 0, math.inf
    for j, (x, y, z) in enumerate(positions):
        dx, dy, dz = x - cx, y - cy, z - cz
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < r * r:
            cands.append(j)
        if d2 < best_d:
            best, best_d = j, d2
    arr = np.array(cands, dtype=np.intp)
    if len(cands) >= n:
        return [int(i) for i in rng.choice(arr, n, replace=False)]
    if cands:
        first = [int(i) for i in rng.permutation(arr)]
        return first + [int(i) for i in rng.choice(arr, n - len(cands), replace=True)]
    return [best] * n


def _normalize(w: list[float], kind: str) -> list[float]:
    m = len(w)
    if kind == "l2":
        norm = math.sqrt(sum(x * x for x in w))
        return list(w) if norm < 1e-12 else [x / norm for x in w]
    if kind == "st":
        mu = sum(w) / m
        sd = math.sqrt(sum((x - mu) ** 2 for x in w) / m)
        return [0.0] * m if sd < 1e-12 else [(x - mu) / sd for x in w]
    return list(w)


def _conv3d(vox, v: int, layers) -> list[float]:
    """``vox[i][j][k][c]``; each layer is ``(kernel[a][b][d][c][o], bias[o], k, kind)``."""
    for kernel, bias, k, kind in layers:
        v_out = v - k + 1
        c_in = len(vox[0][0][0])
        nxt = []
        for i in range(v_out):
            plane = []
            for j in range(v_out):
                row = []
                for l in range(v_out):
                    cell = []
                    for o in range(len(bias)):
                        s = bias[o]
                        for a in range(k):
                            for b in range(k):
                                for d in range(k):
                                    src = vox[i + a][j + b][l + d]
                                    ker = kernel[a][b][d]
                                    for c in range(c_in):
                                        s += ker[c][o] * src[c]
                        cell.append(_act(s, kind))
                    row.append(cell)
                plane.append(row)
            nxt.append(plane)
        vox, v = nxt, v_out
    return vox[0][0][0]


def ckconv_oracle(layer, positions, feats, centers, r: float, n: int, rng,
                  return_neighbors: bool = False):
    """Scalar-loop evaluation of ``ckconv_forward`` with the same arguments."""
    pos = np.asarray(positions, dtype=np.float64).tolist()
    f = (feats.data if hasattr(feats, "data") else np.asarray(feats, dtype=np.float64)).tolist()
    v = layer.kernel.v
    front = _unpack_mlp(layer.kernel.front)
    head = _unpack_mlp(layer.kernel.head)
    lsa = _unpack_mlp(layer.lsa.head) if layer.lsa is not None else None
    conv = [(cl.kernel5d().tolist(), cl.bias.data[0].tolist(), cl.k, cl.activation)
            for cl in layer.conv.layers]
    c_in = len(f[0])

    rows, groups = [], []
    for c in centers:
        c = int(c)
        nbrs = _neighbors(pos, c, r, n, rng)
        groups.append(nbrs)
        vox = [[[[0.0] * c_in for _ in range(v)] for _ in range(v)] for _ in range(v)]
        pooled = None
        for j in nbrs:
            p = [pos[j][0] - pos[c][0], pos[j][1] - pos[c][1], pos[j][2] - pos[c][2]]
            if layer.radius is not None:
                p = [x / layer.radius for x in p]
            inter = _mlp(p, front)
            pooled = list(inter) if pooled is None else [max(a, b) for a, b in zip(pooled, inter)]
            w = _normalize(_mlp(inter, head), layer.norm)
            for a in range(v):
                for b in range(v):
                    for d in range(v):
                        wv = w[(a * v + b) * v + d]
                        cell = vox[a][b][d]
                        for ch in range(c_in):
                            cell[ch] += wv * f[j][ch]
        if lsa is not None:
            att = _mlp(pooled, lsa)
            for a in range(v):
                for b in range(v):
                    for d in range(v):
                        g = 1.0 + att[(a * v + b) * v + d]
                        vox[a][b][d] = [g * x for x in vox[a][b][d]]
        rows.append(_conv3d(vox, v, conv))
    out = np.array(rows, dtype=np.float64).reshape(len(rows), layer.conv.c_out)
    if return_neighbors:
        return out, np.array(groups, dtype=np.intp).reshape(len(groups), n)
    return out
