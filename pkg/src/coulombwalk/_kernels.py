"""Blocked pairwise kernels with a deterministic reduction order.

All O(n^2) pair sums are tiled into 256x256 index blocks. Workers own whole
blocks, each block is accumulated left-to-right, and the per-block partial
sums are combined serially in block order, so results are bit-identical for
any worker count. Only the upper triangle i < j is visited; callers double
the sum (exact in floating point) to get the ordered off-diagonal total.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

# the omp layer is always present in our builds; selecting it up front avoids
# the noisy TBB version probe
numba.config.THREADING_LAYER = "omp"

BLOCK_EDGE = 256


def set_workers(requested: int | None) -> int:
    """Set the active numba thread count, clamped to this process's maximum."""
    maximum = numba.config.NUMBA_NUM_THREADS
    if requested is None:
        return numba.get_num_threads()
    count = max(1, min(int(requested), maximum))
    numba.set_num_threads(count)
    return count


class workers:
    """Context manager pinning the worker count for the enclosed kernels."""

    def __init__(self, requested: int | None):
        self.requested = requested

    def __enter__(self):
        self._previous = numba.get_num_threads()
        return set_workers(self.requested)

    def __exit__(self, *exc):
        numba.set_num_threads(self._previous)
        return False


_block_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def triangle_blocks(n_points: int, block: int = BLOCK_EDGE) -> tuple[np.ndarray, np.ndarray]:
    """Block-start pairs (bi <= bj) covering the upper triangle of n_points."""
    key = (n_points, block)
    cached = _block_cache.get(key)
    if cached is not None:
        return cached
    n_blocks = (n_points + block - 1) // block
    bi, bj = np.triu_indices(n_blocks)
    pair = (bi.astype(np.int64) * block, bj.astype(np.int64) * block)
    if len(_block_cache) > 64:
        _block_cache.clear()
    _block_cache[key] = pair
    return pair


def rectangle_blocks(n_rows: int, n_cols: int, block: int = BLOCK_EDGE):
    """Block-start pairs covering the full n_rows x n_cols rectangle."""
    nbi = (n_rows + block - 1) // block
    nbj = (n_cols + block - 1) // block
    bi = np.repeat(np.arange(nbi, dtype=np.int64), nbj) * block
    bj = np.tile(np.arange(nbj, dtype=np.int64), nbi) * block
    return bi, bj


@njit(cache=True)
def _sum_in_order(partials: np.ndarray) -> float:
    total = 0.0
    for v in partials:
        total += v
    return total


@njit(cache=True, parallel=True)
def _inv_dist_partials(pos, bi, bj, block, eps):
    n = pos.shape[0]
    nb = bi.shape[0]
    partials = np.zeros(nb)
    clamps = np.zeros(nb, dtype=np.int64)
    for b in prange(nb):
        i_hi = min(bi[b] + block, n)
        j_hi = min(bj[b] + block, n)
        s = 0.0
        c = 0
        for i in range(bi[b], i_hi):
            for j in range(max(bj[b], i + 1), j_hi):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < eps:
                    d = eps
                    c += 1
                s += 1.0 / d
        partials[b] = s
        clamps[b] = c
    return partials, clamps


def inv_distance_sum(pos: np.ndarray, eps: float) -> tuple[float, int]:
    """(sum over i<j of 1/|x_i-x_j|, clamped pair count)."""
    bi, bj = triangle_blocks(pos.shape[0])
    partials, clamps = _inv_dist_partials(pos, bi, bj, BLOCK_EDGE, eps)
    return _sum_in_order(partials), int(clamps.sum())


@njit(cache=True, parallel=True)
def _sq_dist_partials(pos, bi, bj, block):
    n = pos.shape[0]
    nb = bi.shape[0]
    partials = np.zeros(nb)
    for b in prange(nb):
        i_hi = min(bi[b] + block, n)
        j_hi = min(bj[b] + block, n)
        s = 0.0
        for i in range(bi[b], i_hi):
            for j in range(max(bj[b], i + 1), j_hi):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                s += dx * dx + dy * dy + dz * dz
        partials[b] = s
    return partials


def sq_distance_sum(pos: np.ndarray) -> float:
    """Sum over i<j of |x_i-x_j|^2, blocked and order-fixed."""
    bi, bj = triangle_blocks(pos.shape[0])
    return _sum_in_order(_sq_dist_partials(pos, bi, bj, BLOCK_EDGE))


@njit(cache=True, parallel=True)
def _pair_moment_partials(pos, bi, bj, block, eps):
    n = pos.shape[0]
    nb = bi.shape[0]
    sq = np.zeros(nb)
    inv = np.zeros(nb)
    clamps = np.zeros(nb, dtype=np.int64)
    for b in prange(nb):
        i_hi = min(bi[b] + block, n)
        j_hi = min(bj[b] + block, n)
        s2 = 0.0
        s_inv = 0.0
        c = 0
        for i in range(bi[b], i_hi):
            for j in range(max(bj[b], i + 1), j_hi):
                dx = pos[i, 0] - pos[j, 0]
                dy = pos[i, 1] - pos[j, 1]
                dz = pos[i, 2] - pos[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                s2 += r2
                d = np.sqrt(r2)
                if d < eps:
                    d = eps
                    c += 1
                s_inv += 1.0 / d
        sq[b] = s2
        inv[b] = s_inv
        clamps[b] = c
    return sq, inv, clamps


def pair_moment_sums(pos: np.ndarray, eps: float) -> tuple[float, float, int]:
    """(sum |x_i-x_j|^2, sum 1/|x_i-x_j|, clamp count) over i<j."""
    bi, bj = triangle_blocks(pos.shape[0])
    sq, inv, clamps = _pair_moment_partials(pos, bi, bj, BLOCK_EDGE, eps)
    return _sum_in_order(sq), _sum_in_order(inv), int(clamps.sum())


@njit(cache=True, parallel=True)
def _straddle_delta_partials(head, old_tail, new_tail, bi, bj, block, eps):
    nh = head.shape[0]
    nt = old_tail.shape[0]
    nb = bi.shape[0]
    old_partials = np.zeros(nb)
    new_partials = np.zeros(nb)
    clamps = np.zeros(nb, dtype=np.int64)
    for b in prange(nb):
        i_hi = min(bi[b] + block, nh)
        j_hi = min(bj[b] + block, nt)
        s_old = 0.0
        s_new = 0.0
        c = 0
        for i in range(bi[b], i_hi):
            hx = head[i, 0]
            hy = head[i, 1]
            hz = head[i, 2]
            for j in range(bj[b], j_hi):
                dx = hx - old_tail[j, 0]
                dy = hy - old_tail[j, 1]
                dz = hz - old_tail[j, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < eps:
                    d = eps
                s_old += 1.0 / d
                dx = hx - new_tail[j, 0]
                dy = hy - new_tail[j, 1]
                dz = hz - new_tail[j, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < eps:
                    d = eps
                    c += 1
                s_new += 1.0 / d
        old_partials[b] = s_old
        new_partials[b] = s_new
        clamps[b] = c
    return old_partials, new_partials, clamps


def straddle_inv_sums(
    head: np.ndarray, old_tail: np.ndarray, new_tail: np.ndarray, eps: float
) -> tuple[float, float, int]:
    """Head-tail cross sums of 1/d for the old and new tails ({new clamps} counted)."""
    bi, bj = rectangle_blocks(head.shape[0], old_tail.shape[0])
    old_p, new_p, clamps = _straddle_delta_partials(
        head, old_tail, new_tail, bi, bj, BLOCK_EDGE, eps
    )
    return _sum_in_order(old_p), _sum_in_order(new_p), int(clamps.sum())


@njit(cache=True, parallel=True)
def _batch_inv_dist(posb, bi, bj, block, eps):
    m = posb.shape[0]
    n = posb.shape[1]
    nb = bi.shape[0]
    sums = np.zeros(m)
    clamps = np.zeros(m, dtype=np.int64)
    for p in prange(m):
        total = 0.0
        c_total = 0
        for b in range(nb):
            i_hi = min(bi[b] + block, n)
            j_hi = min(bj[b] + block, n)
            s = 0.0
            for i in range(bi[b], i_hi):
                for j in range(max(bj[b], i + 1), j_hi):
                    dx = posb[p, i, 0] - posb[p, j, 0]
                    dy = posb[p, i, 1] - posb[p, j, 1]
                    dz = posb[p, i, 2] - posb[p, j, 2]
                    d = np.sqrt(dx * dx + dy * dy + dz * dz)
                    if d < eps:
                        d = eps
                        c_total += 1
                    s += 1.0 / d
            total += s
        sums[p] = total
        clamps[p] = c_total
    return sums, clamps


def batch_inv_distance_sum(posb: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-path sum over i<j of 1/d for a batch of paths; same order as the
    single-path kernel, so values agree bit-for-bit."""
    bi, bj = triangle_blocks(posb.shape[1])
    return _batch_inv_dist(posb, bi, bj, BLOCK_EDGE, eps)


@njit(cache=True, parallel=True)
def _batch_pair_moments(posb, bi, bj, block, eps):
    m = posb.shape[0]
    n = posb.shape[1]
    nb = bi.shape[0]
    sq = np.zeros(m)
    inv = np.zeros(m)
    clamps = np.zeros(m, dtype=np.int64)
    for p in prange(m):
        sq_total = 0.0
        inv_total = 0.0
        c_total = 0
        for b in range(nb):
            i_hi = min(bi[b] + block, n)
            j_hi = min(bj[b] + block, n)
            s2 = 0.0
            s_inv = 0.0
            for i in range(bi[b], i_hi):
                for j in range(max(bj[b], i + 1), j_hi):
                    dx = posb[p, i, 0] - posb[p, j, 0]
                    dy = posb[p, i, 1] - posb[p, j, 1]
                    dz = posb[p, i, 2] - posb[p, j, 2]
                    r2 = dx * dx + dy * dy + dz * dz
                    s2 += r2
                    d = np.sqrt(r2)
                    if d < eps:
                        d = eps
                        c_total += 1
                    s_inv += 1.0 / d
            sq_total += s2
            inv_total += s_inv
        sq[p] = sq_total
        inv[p] = inv_total
        clamps[p] = c_total
    return sq, inv, clamps


def batch_pair_moment_sums(posb: np.ndarray, eps: float):
    """Per-path (sum d^2, sum 1/d, clamps) over i<j for a batch of paths."""
    bi, bj = triangle_blocks(posb.shape[1])
    return _batch_pair_moments(posb, bi, bj, BLOCK_EDGE, eps)
