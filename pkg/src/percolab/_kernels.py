"""Compiled exploration kernels.

The kernels read a direction table (see ``lattice.Table``) and draw every
edge and site state from ``rng.key_uniform`` with exactly the keys used by
the pure-Python graph classes, so compiled and reference explorations agree
configuration by configuration.

Sites are packed into one int64 (four 15-bit fields), which bounds every
coordinate to ``[-16384, 16383]``.
"""

import numpy as np
from numba import njit

from .rng import NS_BLOCK, NS_EDGE, NS_LAYER, NS_SITE, key_hash, key_uniform, mix64

OFF = 16384
COORD_LIMIT = OFF - 1

KIND_LAYERED = 0
KIND_HORIZONTAL = 1
GEOMETRY_HEX = 1

FRONTIER_EMPTY = 0
HEIGHT_REACHED = 1
SITE_BUDGET = 2
RADIUS_BUDGET = 3


@njit(cache=True, nogil=True)
def _pack(c0, c1, c2, c3):
    return ((c0 + OFF) << 45) | ((c1 + OFF) << 30) | ((c2 + OFF) << 15) | (c3 + OFF)


@njit(cache=True, nogil=True)
def _find(keys, key):
    mask = keys.shape[0] - 1
    i = np.int64(mix64(np.uint64(key)) & np.uint64(mask))
    while True:
        k = keys[i]
        if k == key or k == -1:
            return i
        i = (i + 1) & mask


@njit(cache=True, nogil=True)
def _rehash(keys, vals):
    nk = np.full(keys.shape[0] * 2, -1, np.int64)
    nv = np.empty(keys.shape[0] * 2, np.int64)
    for i in range(keys.shape[0]):
        if keys[i] != -1:
            j = _find(nk, keys[i])
            nk[j] = keys[i]
            nv[j] = vals[i]
    return nk, nv


@njit(cache=True, nogil=True)
def _grow1(a):
    out = np.empty(a.shape[0] * 2, a.dtype)
    out[:a.shape[0]] = a
    return out


@njit(cache=True, nogil=True)
def _grow2(a):
    out = np.empty((a.shape[0] * 2, a.shape[1]), a.dtype)
    out[:a.shape[0]] = a
    return out


@njit(cache=True, nogil=True)
def _radius(geometry, radius_axes, c0, c1, c2):
    if geometry == GEOMETRY_HEX:
        return (abs(2 * c0 + c2) + abs(2 * c1 + c2)) // 2
    if radius_axes == 1:
        return abs(c0)
    return abs(c0) + abs(c1)


@njit(cache=True, nogil=True)
def _layered_prob(layer, seed, delta, p_g, p_b):
    if p_g == p_b:
        return p_g
    if key_uniform(seed, NS_LAYER, layer, 0, 0, 0, 0, 0) < delta:
        return p_b
    return p_g


@njit(cache=True, nogil=True)
def _neighbor(c, deltas, lo, hi, mod, d, nb):
    """Write the neighbor of ``c`` along row ``d`` into ``nb``; False if outside."""
    for a in range(4):
        x = c[a] + deltas[d, a]
        if mod[a] > 0:
            x = x % mod[a]
        if x < lo[a] or x > hi[a]:
            return False
        nb[a] = x
    return True


@njit(cache=True, nogil=True)
def _edge_uniform(seed, c, nb, d, dir_ids, canon):
    r = canon[d]
    if r == d:
        return key_uniform(seed, NS_EDGE, c[0], c[1], c[2], c[3], dir_ids[d], 0)
    return key_uniform(seed, NS_EDGE, nb[0], nb[1], nb[2], nb[3], dir_ids[r], 0)


@njit(cache=True, nogil=True)
def explore_kernel(deltas, dir_ids, oriented, kind, canon, dh, height_w, lo, hi,
                   mod, geometry, radius_axes, seed, delta, p_g, p_b, p_h,
                   site_mode, sources, max_sites, max_height, max_radius,
                   stop_at_height, dfs):
    """Explore the open cluster of ``sources``.

    The default order is layered: a FIFO per height, the current height is
    exhausted before the next one is opened.  ``dfs`` switches to a stack
    that tries upward edges first, which is much cheaper when only the
    survival indicator is needed.

    Returns (size, max_height_reached, termination, radii, coords, heights).
    """
    n_dir = deltas.shape[0]
    keys = np.full(1024, -1, np.int64)
    vals = np.empty(1024, np.int64)
    coords = np.empty((256, 4), np.int64)
    heights = np.empty(256, np.int64)
    radii = np.full(max_height + 1, -1, np.int64)
    cur = np.empty(256, np.int64)
    nxt = np.empty(256, np.int64)
    cur_head = 0
    cur_tail = 0
    nxt_len = 0
    n = 0
    maxh = -1
    height_capped = False
    radius_capped = False
    nb = np.empty(4, np.int64)

    for s in range(sources.shape[0]):
        c = sources[s]
        h = 0
        for a in range(4):
            h += height_w[a] * c[a]
        if h > max_height:
            height_capped = True
            continue
        if site_mode and key_uniform(seed, NS_SITE, c[0], c[1], c[2], c[3], 0, 0) \
                >= _layered_prob(h, seed, delta, p_g, p_b):
            continue
        key = _pack(c[0], c[1], c[2], c[3])
        slot = _find(keys, key)
        if keys[slot] == key:
            continue
        keys[slot] = key
        vals[slot] = n
        if n == coords.shape[0]:
            coords = _grow2(coords)
            heights = _grow1(heights)
        coords[n] = c
        heights[n] = h
        if n == cur.shape[0]:
            cur = _grow1(cur)
        cur[cur_tail] = n
        cur_tail += 1
        r = _radius(geometry, radius_axes, c[0], c[1], c[2])
        if r > radii[h]:
            radii[h] = r
        if h > maxh:
            maxh = h
        n += 1
        if 2 * n > keys.shape[0]:
            keys, vals = _rehash(keys, vals)
        if stop_at_height and h >= max_height:
            return n, maxh, HEIGHT_REACHED, radii, coords[:n], heights[:n]

    term = FRONTIER_EMPTY
    top = cur_tail  # stack pointer in DFS mode (the stack lives in ``cur``)
    while True:
        if dfs:
            if top == 0:
                break
            top -= 1
            s = cur[top]
        else:
            if cur_head == cur_tail:
                if nxt_len == 0:
                    break
                cur, nxt = nxt, cur
                cur_head = 0
                cur_tail = nxt_len
                nxt_len = 0
            s = cur[cur_head]
            cur_head += 1
        h = heights[s]
        c = coords[s]
        for dd in range(n_dir):
            d = n_dir - 1 - dd if dfs else dd
            if not _neighbor(c, deltas, lo, hi, mod, d, nb):
                continue
            key = _pack(nb[0], nb[1], nb[2], nb[3])
            slot = _find(keys, key)
            if keys[slot] == key:
                continue
            nh = h + dh[d]
            if site_mode:
                u = key_uniform(seed, NS_SITE, nb[0], nb[1], nb[2], nb[3], 0, 0)
                if u >= _layered_prob(nh, seed, delta, p_g, p_b):
                    continue
            else:
                u = _edge_uniform(seed, c, nb, d, dir_ids, canon)
                if kind[d] == KIND_HORIZONTAL:
                    prob = p_h
                else:
                    prob = _layered_prob(h, seed, delta, p_g, p_b)
                if u >= prob:
                    continue
            if nh > max_height:
                height_capped = True
                continue
            r = _radius(geometry, radius_axes, nb[0], nb[1], nb[2])
            if r > max_radius:
                radius_capped = True
                continue
            keys[slot] = key
            vals[slot] = n
            if n == coords.shape[0]:
                coords = _grow2(coords)
                heights = _grow1(heights)
            coords[n, 0] = nb[0]
            coords[n, 1] = nb[1]
            coords[n, 2] = nb[2]
            coords[n, 3] = nb[3]
            heights[n] = nh
            if r > radii[nh]:
                radii[nh] = r
            if nh > maxh:
                maxh = nh
            if dfs:
                if top == cur.shape[0]:
                    cur = _grow1(cur)
                cur[top] = n
                top += 1
            elif dh[d] == 0:
                if cur_tail == cur.shape[0]:
                    cur = _grow1(cur)
                cur[cur_tail] = n
                cur_tail += 1
            else:
                if nxt_len == nxt.shape[0]:
                    nxt = _grow1(nxt)
                nxt[nxt_len] = n
                nxt_len += 1
            n += 1
            if 2 * n > keys.shape[0]:
                keys, vals = _rehash(keys, vals)
            if stop_at_height and nh >= max_height:
                return n, maxh, HEIGHT_REACHED, radii, coords[:n], heights[:n]
            if n >= max_sites:
                term = SITE_BUDGET
                break
        if term == SITE_BUDGET:
            break
    if term != SITE_BUDGET:
        if radius_capped:
            term = RADIUS_BUDGET
        elif height_capped:
            term = HEIGHT_REACHED
    return n, maxh, term, radii, coords[:n], heights[:n]


@njit(cache=True, nogil=True)
def survival_batch(deltas, dir_ids, oriented, kind, canon, dh, height_w, lo, hi,
                   mod, geometry, radius_axes, seeds, delta, p_g, p_b, p_h,
                   site_mode, sources, max_sites, max_height, max_radius,
                   stop_at_height, out_height, out_size, out_term):
    for t in range(seeds.shape[0]):
        n, maxh, term, _, _, _ = explore_kernel(
            deltas, dir_ids, oriented, kind, canon, dh, height_w, lo, hi, mod,
            geometry, radius_axes, seeds[t], delta, p_g, p_b, p_h, site_mode,
            sources, max_sites, max_height, max_radius, stop_at_height, True)
        out_height[t] = maxh
        out_size[t] = n
        out_term[t] = term


@njit(cache=True, nogil=True)
def _heap_less(hv, hk, i, j):
    return hv[i] < hv[j] or (hv[i] == hv[j] and hk[i] < hk[j])


@njit(cache=True, nogil=True)
def _heap_swap(hv, hk, hi, i, j):
    hv[i], hv[j] = hv[j], hv[i]
    hk[i], hk[j] = hk[j], hk[i]
    hi[i], hi[j] = hi[j], hi[i]


@njit(cache=True, nogil=True)
def _heap_sift_up(hv, hk, hi, i):
    while i > 0:
        p = (i - 1) >> 1
        if _heap_less(hv, hk, i, p):
            _heap_swap(hv, hk, hi, i, p)
            i = p
        else:
            break


@njit(cache=True, nogil=True)
def _heap_sift_down(hv, hk, hi, size):
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        m = left
        if left + 1 < size and _heap_less(hv, hk, left + 1, left):
            m = left + 1
        if _heap_less(hv, hk, m, i):
            _heap_swap(hv, hk, hi, i, m)
            i = m
        else:
            break


@njit(cache=True, nogil=True)
def bottleneck_kernel(deltas, dir_ids, oriented, kind, canon, dh, height_w, lo, hi,
                      mod, geometry, radius_axes, seed, site_mode, sources,
                      target_axis, levels, cap, max_sites, max_radius):
    """Minimax search: the smallest p at which the sources reach each target.

    With homogeneous probability p an edge is open iff its latent uniform is
    below p, so the target is reached at p iff some path has all latents
    below p.  ``target_axis < 0`` targets the heights in ``levels``;
    otherwise the single target is ``coord[target_axis] >= levels[0]``.
    Unreached or censored (value >= ``cap``) targets get +inf.

    Returns (thresholds, settled, budget_hit).
    """
    n_dir = deltas.shape[0]
    m = levels.shape[0]
    out = np.full(m, np.inf)
    keys = np.full(1024, -1, np.int64)
    vals = np.empty(1024, np.int64)
    coords = np.empty((256, 4), np.int64)
    heights = np.empty(256, np.int64)
    best = np.empty(256, np.float64)
    done = np.zeros(256, np.bool_)
    hv = np.empty(256, np.float64)
    hk = np.empty(256, np.int64)
    hidx = np.empty(256, np.int64)
    size = 0
    n = 0
    nb = np.empty(4, np.int64)
    for s in range(sources.shape[0]):
        c = sources[s]
        h = 0
        for a in range(4):
            h += height_w[a] * c[a]
        v = 0.0
        if site_mode:
            v = key_uniform(seed, NS_SITE, c[0], c[1], c[2], c[3], 0, 0)
        key = _pack(c[0], c[1], c[2], c[3])
        slot = _find(keys, key)
        if keys[slot] == key:
            continue
        keys[slot] = key
        vals[slot] = n
        if n == coords.shape[0]:
            coords = _grow2(coords)
            heights = _grow1(heights)
            best = _grow1(best)
            done = _grow1(done)
        coords[n] = c
        heights[n] = h
        best[n] = v
        done[n] = False
        if size == hv.shape[0]:
            hv = _grow1(hv)
            hk = _grow1(hk)
            hidx = _grow1(hidx)
        hv[size] = v
        hk[size] = -(c[target_axis] if target_axis >= 0 else h)
        hidx[size] = n
        _heap_sift_up(hv, hk, hidx, size)
        size += 1
        n += 1
        if 2 * n > keys.shape[0]:
            keys, vals = _rehash(keys, vals)

    next_level = 0
    settled = 0
    budget_hit = False
    top_level = levels[m - 1]
    while size > 0:
        v = hv[0]
        s = hidx[0]
        size -= 1
        if size > 0:
            hv[0] = hv[size]
            hk[0] = hk[size]
            hidx[0] = hidx[size]
            _heap_sift_down(hv, hk, hidx, size)
        if done[s] or v > best[s]:
            continue
        if v >= cap:
            break
        done[s] = True
        settled += 1
        h = heights[s]
        if target_axis < 0:
            while next_level < m and h >= levels[next_level]:
                out[next_level] = v
                next_level += 1
            if next_level == m:
                break
        elif coords[s, target_axis] >= levels[0]:
            out[0] = v
            break
        if settled >= max_sites:
            budget_hit = True
            break
        if target_axis < 0 and h >= top_level:
            continue
        c = coords[s]
        for d in range(n_dir):
            if not _neighbor(c, deltas, lo, hi, mod, d, nb):
                continue
            if site_mode:
                u = key_uniform(seed, NS_SITE, nb[0], nb[1], nb[2], nb[3], 0, 0)
            else:
                u = _edge_uniform(seed, c, nb, d, dir_ids, canon)
            w = u if u > v else v
            if w >= cap:
                continue
            if _radius(geometry, radius_axes, nb[0], nb[1], nb[2]) > max_radius:
                continue
            key = _pack(nb[0], nb[1], nb[2], nb[3])
            slot = _find(keys, key)
            if keys[slot] == key:
                j = vals[slot]
                if done[j] or w >= best[j]:
                    continue
                best[j] = w
            else:
                j = n
                keys[slot] = key
                vals[slot] = j
                if n == coords.shape[0]:
                    coords = _grow2(coords)
                    heights = _grow1(heights)
                    best = _grow1(best)
                    done = _grow1(done)
                coords[j, 0] = nb[0]
                coords[j, 1] = nb[1]
                coords[j, 2] = nb[2]
                coords[j, 3] = nb[3]
                heights[j] = h + dh[d]
                best[j] = w
                done[j] = False
                n += 1
                if 2 * n > keys.shape[0]:
                    keys, vals = _rehash(keys, vals)
            if size == hv.shape[0]:
                hv = _grow1(hv)
                hk = _grow1(hk)
                hidx = _grow1(hidx)
            hv[size] = w
            hk[size] = -(coords[j, target_axis] if target_axis >= 0 else heights[j])
            hidx[size] = j
            _heap_sift_up(hv, hk, hidx, size)
            size += 1
    return out, settled, budget_hit


@njit(cache=True, nogil=True)
def bottleneck_batch(deltas, dir_ids, oriented, kind, canon, dh, height_w, lo, hi,
                     mod, geometry, radius_axes, seeds, site_mode, sources,
                     target_axis, levels, cap, max_sites, max_radius, out, out_budget):
    for t in range(seeds.shape[0]):
        thr, _, hit = bottleneck_kernel(
            deltas, dir_ids, oriented, kind, canon, dh, height_w, lo, hi, mod,
            geometry, radius_axes, seeds[t], site_mode, sources, target_axis,
            levels, cap, max_sites, max_radius)
        out[t, :] = thr
        out_budget[t] = hit


_HEX_H = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], np.int64)


@njit(cache=True, nogil=True)
def _hex_h_open(seed, p_h, a1, a2, n, j):
    # canonical keys of the four horizontal directions (ids 4..7)
    if j == 0:
        return key_uniform(seed, NS_EDGE, a1, a2, n, 0, 4, 0) < p_h
    if j == 1:
        return key_uniform(seed, NS_EDGE, a1 - 1, a2, n, 0, 4, 0) < p_h
    if j == 2:
        return key_uniform(seed, NS_EDGE, a1, a2, n, 0, 6, 0) < p_h
    return key_uniform(seed, NS_EDGE, a1, a2 - 1, n, 0, 6, 0) < p_h


# Bit-packed layer masks: bit j of row i lives in word j >> 6 at position j & 63.
_U0 = np.uint64(0)
_U1 = np.uint64(1)
_U2 = np.uint64(2)
_U4 = np.uint64(4)
_U6 = np.uint64(6)
_U8 = np.uint64(8)
_U16 = np.uint64(16)
_U32 = np.uint64(32)
_U56 = np.uint64(56)
_U58 = np.uint64(58)
_U63 = np.uint64(63)
_M55 = np.uint64(0x5555555555555555)
_M33 = np.uint64(0x3333333333333333)
_M0F = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_DEBRUIJN = 0x03F79D71B4CB0A89
_CTZ = np.zeros(64, np.int64)
for _i in range(64):
    _CTZ[(((1 << _i) * _DEBRUIJN) & 0xFFFFFFFFFFFFFFFF) >> 58] = _i
_U_DEBRUIJN = np.uint64(_DEBRUIJN)


@njit(cache=True, nogil=True)
def _popcount(x):
    x = x - ((x >> _U1) & _M55)
    x = (x & _M33) + ((x >> _U2) & _M33)
    x = (x + (x >> _U4)) & _M0F
    return np.int64((x * _H01) >> _U56)


@njit(cache=True, nogil=True)
def _ctz(x):
    return _CTZ[np.int64(((x & (~x + _U1)) * _U_DEBRUIJN) >> _U58)]


@njit(cache=True, nogil=True)
def _msb(x):
    x |= x >> _U1
    x |= x >> _U2
    x |= x >> _U4
    x |= x >> _U8
    x |= x >> _U16
    x |= x >> _U32
    return _popcount(x) - 1


@njit(cache=True, nogil=True)
def _bit(q, i, j):
    return (q[i, j >> 6] >> np.uint64(j & 63)) & _U1


@njit(cache=True, nogil=True)
def _set_bit(q, i, j):
    q[i, j >> 6] |= _U1 << np.uint64(j & 63)


@njit(cache=True, nogil=True)
def _clear_bit(q, i, j):
    q[i, j >> 6] &= ~(_U1 << np.uint64(j & 63))


@njit(cache=True, nogil=True)
def _cell_radius(i, j, n1, n2, n):
    return (abs(2 * (i - n1) + n) + abs(2 * (j - n2) + n)) // 2


@njit(cache=True, nogil=True)
def _fill_layer(prev, o1, o2, n, mrow, mword, seed, p_h, max_radius):
    """One step of C_n = cluster_n(up-neighbors of C_{n-1}) on packed masks.

    ``prev`` holds C_{n-1} (row i is a1 = i - o1, bit j is a2 = j - o2).
    Returns (mask, n1, n2, ok, capped); ``ok`` is False when the layer
    cluster reached the array margin and must be redone with a wider one.
    """
    H, WW = prev.shape
    QH = H + 2 * mrow
    QW = WW + 2 * mword
    q = np.zeros((QH, QW), np.uint64)
    n1 = o1 + mrow
    n2 = o2 + 64 * mword
    capped = False
    if n == 0:
        _set_bit(q, n1, n2)
    else:
        # site a of C_{n-1} feeds a, a - (1,0), a - (0,1), a - (1,1) one layer up
        for i in range(H):
            for w in range(WW):
                x = prev[i, w]
                q[i + mrow, w + mword] |= x
                q[i + mrow - 1, w + mword] |= x
        for i in range(QH):
            row = q[i]
            carry = _U0
            for w in range(QW - 1, -1, -1):
                x = row[w]
                row[w] = x | (x >> _U1) | carry
                carry = x << _U63
    far = 0
    for i in (0, QH - 1):
        for j in (0, 64 * QW - 1):
            r = _cell_radius(i, j, n1, n2, n)
            if r > far:
                far = r
    if far > max_radius:
        for i in range(QH):
            for w in range(QW):
                x = q[i, w]
                while x:
                    b = _ctz(x)
                    x &= x - _U1
                    j = 64 * w + b
                    if _cell_radius(i, j, n1, n2, n) > max_radius:
                        _clear_bit(q, i, j)
                        capped = True
    stack_i = np.empty(1024, np.int64)
    stack_j = np.empty(1024, np.int64)
    top = 0
    for i in range(1, QH - 1):
        up = q[i - 1]
        row = q[i]
        down = q[i + 1]
        for w in range(QW):
            x = row[w]
            if x == _U0:
                continue
            left = x << _U1
            right = x >> _U1
            if w > 0:
                left |= row[w - 1] >> _U63
            if w + 1 < QW:
                right |= row[w + 1] << _U63
            bnd = x & ~(up[w] & down[w] & left & right)
            while bnd:
                b = _ctz(bnd)
                bnd &= bnd - _U1
                if top == stack_i.shape[0]:
                    stack_i = _grow1(stack_i)
                    stack_j = _grow1(stack_j)
                stack_i[top] = i
                stack_j[top] = 64 * w + b
                top += 1
    jmax = 64 * QW - 1
    while top > 0:
        top -= 1
        i = stack_i[top]
        j = stack_j[top]
        a1 = i - n1
        a2 = j - n2
        for k in range(4):
            ii = i + _HEX_H[k, 0]
            jj = j + _HEX_H[k, 1]
            if _bit(q, ii, jj):
                continue
            if not _hex_h_open(seed, p_h, a1, a2, n, k):
                continue
            if _cell_radius(ii, jj, n1, n2, n) > max_radius:
                capped = True
                continue
            if ii == 0 or jj == 0 or ii == QH - 1 or jj == jmax:
                return q, n1, n2, False, capped
            _set_bit(q, ii, jj)
            if top == stack_i.shape[0]:
                stack_i = _grow1(stack_i)
                stack_j = _grow1(stack_j)
            stack_i[top] = ii
            stack_j[top] = jj
            top += 1
    return q, n1, n2, True, capped


@njit(cache=True, nogil=True)
def hex_layer_radii(seed, p_h, n_layers, max_radius):
    """Per-layer radii R_n and sizes of the origin cluster when p_g = 1.

    Bit-packed propagation of the layer recursion; only boundary cells
    query horizontal edges.
    """
    radii = np.full(n_layers + 1, -1, np.int64)
    sizes = np.zeros(n_layers + 1, np.int64)
    capped_any = False
    prev = np.zeros((1, 1), np.uint64)
    o1 = 0
    o2 = 0
    mrow = 8
    mword = 1
    if max_radius < 0:
        return radii, sizes, capped_any
    for n in range(n_layers + 1):
        while True:
            q, n1, n2, ok, capped = _fill_layer(prev, o1, o2, n, mrow, mword,
                                                 seed, p_h, max_radius)
            if ok:
                break
            mrow *= 2
            mword *= 2
        capped_any = capped_any or capped
        QH, QW = q.shape
        imin = QH
        imax = -1
        wmin = QW
        wmax = -1
        r = -1
        cnt = 0
        for i in range(QH):
            row = q[i]
            first = -1
            for w in range(QW):
                if row[w]:
                    first = w
                    break
            if first < 0:
                continue
            last = first
            for w in range(QW - 1, first - 1, -1):
                if row[w]:
                    last = w
                    break
            for w in range(first, last + 1):
                cnt += _popcount(row[w])
            if i < imin:
                imin = i
            imax = i
            if first < wmin:
                wmin = first
            if last > wmax:
                wmax = last
            # the radius is convex along a row: its extremes carry the maximum
            jf = 64 * first + _ctz(row[first])
            jl = 64 * last + _msb(row[last])
            for j in (jf, jl):
                rr = _cell_radius(i, j, n1, n2, n)
                if rr > r:
                    r = rr
        radii[n] = r
        sizes[n] = cnt
        if cnt == 0:
            break
        prev = q[imin:imax + 1, wmin:wmax + 1].copy()
        o1 = n1 - imin
        o2 = n2 - 64 * wmin
        if mrow > 8:
            mrow //= 2
            mword //= 2
    return radii, sizes, capped_any


_SQ = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], np.int64)
_UP2 = np.array([[0, 0], [-1, 0], [0, -1], [-1, -1]], np.int64)


@njit(cache=True, nogil=True)
def _layer_closure(keys, xs, ys, count, p_h):
    """Grow the set (xs, ys)[:count] by fresh p_h horizontal edges.

    Each edge is looked at only from a visited site towards an unvisited
    one, so it is sampled at most once.
    """
    head = 0
    while head < count:
        x = xs[head]
        y = ys[head]
        head += 1
        for k in range(4):
            nx = x + _SQ[k, 0]
            ny = y + _SQ[k, 1]
            key = _pack(nx, ny, 0, 0)
            slot = _find(keys, key)
            if keys[slot] == key:
                continue
            if np.random.random() >= p_h:
                continue
            keys[slot] = key
            if count == xs.shape[0]:
                xs = _grow1(xs)
                ys = _grow1(ys)
            xs[count] = nx
            ys[count] = ny
            count += 1
            if 2 * count > keys.shape[0]:
                keys, _ = _rehash(keys, np.empty(keys.shape[0], np.int64))
    return keys, xs, ys, count


@njit(cache=True, nogil=True)
def block_crossing_weights(seed, n, lo, p_b, p_h, entry_width, out):
    """Sequential importance weights for crossing n all-bad layers.

    Layer j holds the horizontal cluster C_j.  The next layer is entered
    through the 4|C_j| upward edges, conditioned on at least one being open,
    and the weight picks up q_j = P(at least one open).  The product of the
    q_j is an unbiased estimate of the crossing probability.  Trial ``lo + t``
    writes ``out[t]`` from its own stream keyed by (seed, n, trial).
    """
    log_fail = np.log1p(-p_b) if p_b < 1.0 else -np.inf
    for t in range(out.shape[0]):
        h = key_hash(seed, NS_BLOCK, n, lo + t, 0, 0, 0, 0)
        np.random.seed(np.int64(h % np.uint64(2147483647)))
        keys = np.full(1024, -1, np.int64)
        xs = np.empty(256, np.int64)
        ys = np.empty(256, np.int64)
        count = 0
        for a in range(-entry_width, entry_width + 1):
            rest = entry_width - abs(a)
            for b in range(-rest, rest + 1):
                key = _pack(a, b, 0, 0)
                slot = _find(keys, key)
                keys[slot] = key
                if count == xs.shape[0]:
                    xs = _grow1(xs)
                    ys = _grow1(ys)
                xs[count] = a
                ys[count] = b
                count += 1
                if 2 * count > keys.shape[0]:
                    keys, _ = _rehash(keys, np.empty(keys.shape[0], np.int64))
        keys, xs, ys, count = _layer_closure(keys, xs, ys, count, p_h)
        weight = 1.0
        for j in range(n):
            m = 4 * count
            q = 1.0 if p_b >= 1.0 else -np.expm1(m * log_fail)
            weight *= q
            if weight == 0.0 or j == n - 1:
                break
            nkeys = np.full(1024, -1, np.int64)
            nxs = np.empty(64, np.int64)
            nys = np.empty(64, np.int64)
            ncount = 0
            # first open edge J given at least one: P(J <= i) = (1 - (1-p)^(i+1)) / q
            if p_b >= 1.0:
                e = 0
            else:
                u = 1.0 - np.random.random()
                e = np.int64(np.ceil(np.log1p(-u * q) / log_fail)) - 1
                if e < 0:
                    e = 0
                if e > m - 1:
                    e = m - 1
            while e < m:
                i = e // 4
                d = e % 4
                hx = xs[i] + _UP2[d, 0]
                hy = ys[i] + _UP2[d, 1]
                key = _pack(hx, hy, 0, 0)
                slot = _find(nkeys, key)
                if nkeys[slot] != key:
                    nkeys[slot] = key
                    if ncount == nxs.shape[0]:
                        nxs = _grow1(nxs)
                        nys = _grow1(nys)
                    nxs[ncount] = hx
                    nys[ncount] = hy
                    ncount += 1
                    if 2 * ncount > nkeys.shape[0]:
                        nkeys, _ = _rehash(nkeys, np.empty(nkeys.shape[0], np.int64))
                # skip to the next open edge
                if p_b >= 1.0:
                    e += 1
                elif p_b <= 0.0:
                    break
                else:
                    u = 1.0 - np.random.random()
                    e += 1 + np.int64(np.floor(np.log(u) / log_fail))
            keys, xs, ys, count = _layer_closure(nkeys, nxs, nys, ncount, p_h)
        out[t] = weight


@njit(cache=True, nogil=True)
def first_bad_run(seed, delta, start, stop, n):
    """First j in [start, stop) with layers j..j+n-1 all bad, or -1."""
    run = 0
    j = start
    while j < stop + n - 1:
        if key_uniform(seed, NS_LAYER, j, 0, 0, 0, 0, 0) < delta:
            run += 1
            if run == n:
                return j - n + 1
        else:
            run = 0
            if j >= stop:
                break
        j += 1
    return -1


@njit(cache=True, nogil=True)
def box_crossing_batch(seeds, W, H, site_mode, cap, max_sites, out, out_budget):
    """Left-to-right minimax crossing of the W x H box of Z^2, dense storage.

    Same edge and site keys as the generic kernel on ``FiniteGrid(W, H)``
    with sources x = 0 and target x = W - 1, but indexed arrays replace the
    hash table, which roughly halves the cost per trial.
    """
    nsite = W * H
    best = np.empty(nsite, np.float64)
    done = np.empty(nsite, np.bool_)
    cap_heap = 4 * nsite + H + 1
    hv = np.empty(cap_heap, np.float64)
    hk = np.empty(cap_heap, np.int64)
    hidx = np.empty(cap_heap, np.int64)
    for t in range(seeds.shape[0]):
        seed = seeds[t]
        best[:] = np.inf
        done[:] = False
        size = 0
        for y in range(H):
            v = 0.0
            if site_mode:
                v = key_uniform(seed, NS_SITE, 0, y, 0, 0, 0, 0)
            best[y * W] = v
            hv[size] = v
            hk[size] = 0
            hidx[size] = y * W
            _heap_sift_up(hv, hk, hidx, size)
            size += 1
        result = np.inf
        settled = 0
        hit = False
        while size > 0:
            v = hv[0]
            s = hidx[0]
            size -= 1
            if size > 0:
                hv[0] = hv[size]
                hk[0] = hk[size]
                hidx[0] = hidx[size]
                _heap_sift_down(hv, hk, hidx, size)
            if done[s] or v > best[s]:
                continue
            if v >= cap:
                break
            done[s] = True
            settled += 1
            x = s % W
            y = s // W
            if x == W - 1:
                result = v
                break
            if settled >= max_sites:
                hit = True
                break
            for d in range(4):
                if d == 0:
                    nx, ny = x + 1, y
                elif d == 1:
                    nx, ny = x - 1, y
                elif d == 2:
                    nx, ny = x, y + 1
                else:
                    nx, ny = x, y - 1
                if nx < 0 or nx >= W or ny < 0 or ny >= H:
                    continue
                if site_mode:
                    u = key_uniform(seed, NS_SITE, nx, ny, 0, 0, 0, 0)
                elif d == 0:
                    u = key_uniform(seed, NS_EDGE, x, y, 0, 0, 0, 0)
                elif d == 1:
                    u = key_uniform(seed, NS_EDGE, nx, ny, 0, 0, 0, 0)
                elif d == 2:
                    u = key_uniform(seed, NS_EDGE, x, y, 0, 0, 2, 0)
                else:
                    u = key_uniform(seed, NS_EDGE, nx, ny, 0, 0, 2, 0)
                w = u if u > v else v
                if w >= cap:
                    continue
                j = ny * W + nx
                if done[j] or w >= best[j]:
                    continue
                best[j] = w
                hv[size] = w
                hk[size] = -nx
                hidx[size] = j
                _heap_sift_up(hv, hk, hidx, size)
                size += 1
        out[t] = result
        out_budget[t] = hit
