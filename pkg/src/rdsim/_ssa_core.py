"""Hot loop of the lattice stochastic simulation.

Next-reaction (Gibson-Bruck) sampling over aggregated event channels: one
hop channel per species plus one channel per reaction.  Channel clocks live
in an indexed binary heap; when a propensity changes the pending firing time
is rescaled by the old/new propensity ratio instead of being redrawn.  Voxel
lookups are served by per-species Fenwick trees, and each bimolecular
reaction maintains kernel-smoothed partner fields so propensity updates after
a hop cost only the kernel stencil.

Everything here is plain arrays and scalars so the module JIT-compiles with
numba when available and still runs (slowly) as pure Python when not.  The
random stream is a PCG32 generator (64-bit state, 32-bit output) implemented
inline; its output sequence is part of the package's reproducibility
contract.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def deco(func):
            return func

        return deco


_PCG_MULT = np.uint64(6364136223846793005)
_MASK32 = np.uint64(0xFFFFFFFF)
_U18 = np.uint64(18)
_U27 = np.uint64(27)
_U32 = np.uint64(32)
_U59 = np.uint64(59)
_U31 = np.uint64(31)
_ONE = np.uint64(1)
_INV32 = 1.0 / 4294967296.0


@njit(cache=True)
def _rng_u32(rng):
    old = rng[0]
    rng[0] = old * _PCG_MULT + rng[1]
    xorshifted = (((old >> _U18) ^ old) >> _U27) & _MASK32
    rot = old >> _U59
    return ((xorshifted >> rot) | (xorshifted << ((_U32 - rot) & _U31))) & _MASK32


@njit(cache=True)
def _rng_seed(rng, state, seq):
    rng[0] = np.uint64(0)
    rng[1] = (seq << _ONE) | _ONE
    _rng_u32(rng)
    rng[0] = rng[0] + state
    _rng_u32(rng)


@njit(cache=True)
def _rng_double(rng):
    return float(_rng_u32(rng)) * _INV32


@njit(cache=True)
def _rng_exp(rng):
    return -np.log(1.0 - _rng_double(rng))


# --------------------------------------------------------------------------
# Fenwick tree over voxel counts (1-based internal indexing)


@njit(cache=True)
def _fen_add(fen, i, delta):
    n = fen.shape[0] - 1
    i += 1
    while i <= n:
        fen[i] += delta
        i += i & (-i)


@njit(cache=True)
def _fen_total(fen):
    n = fen.shape[0] - 1
    total = 0
    i = n
    while i > 0:
        total += fen[i]
        i -= i & (-i)
    return total


@njit(cache=True)
def _fen_sample(fen, target):
    """Smallest voxel index whose cumulative count exceeds ``target``."""
    n = fen.shape[0] - 1
    idx = 0
    bit = 1
    while bit * 2 <= n:
        bit *= 2
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and fen[nxt] <= target:
            idx = nxt
            target -= fen[nxt]
        bit //= 2
    return idx


# --------------------------------------------------------------------------
# Indexed binary min-heap of channel firing times


@njit(cache=True)
def _heap_swap(nodes, pos, i, j):
    a, b = nodes[i], nodes[j]
    nodes[i], nodes[j] = b, a
    pos[a], pos[b] = j, i


@njit(cache=True)
def _heap_sift_up(nodes, pos, keys, i):
    while i > 0:
        parent = (i - 1) // 2
        if keys[nodes[i]] < keys[nodes[parent]]:
            _heap_swap(nodes, pos, i, parent)
            i = parent
        else:
            break


@njit(cache=True)
def _heap_sift_down(nodes, pos, keys, i):
    n = nodes.shape[0]
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < n and keys[nodes[left]] < keys[nodes[smallest]]:
            smallest = left
        if right < n and keys[nodes[right]] < keys[nodes[smallest]]:
            smallest = right
        if smallest == i:
            break
        _heap_swap(nodes, pos, i, smallest)
        i = smallest


@njit(cache=True)
def _heap_update(nodes, pos, keys, channel):
    i = pos[channel]
    _heap_sift_up(nodes, pos, keys, i)
    _heap_sift_down(nodes, pos, keys, i)


@njit(cache=True)
def _heap_build(nodes, pos, keys):
    n = nodes.shape[0]
    for i in range(n):
        nodes[i] = i
        pos[i] = i
    for i in range(n // 2 - 1, -1, -1):
        _heap_sift_down(nodes, pos, keys, i)


# --------------------------------------------------------------------------
# Propensity bookkeeping


@njit(cache=True)
def _recompute(dim, n, coef, counts, hop_coef,
               rxn_kind, rxn_r1, rxn_r2, rxn_rate,
               kern_off, kern_do, kern_w, kern_w0,
               f_idx1, f_idx2, fields, a):
    n_species, m = counts.shape
    n_rxn = rxn_kind.shape[0]
    fields[:, :] = 0.0
    for ell in range(n_rxn):
        if rxn_kind[ell] != 1:
            continue
        for which in range(2):
            fi = f_idx1[ell] if which == 0 else f_idx2[ell]
            if which == 1 and f_idx2[ell] == f_idx1[ell]:
                continue
            sp = rxn_r1[ell] if which == 0 else rxn_r2[ell]
            for v in range(m):
                c = counts[sp, v]
                if c == 0:
                    continue
                for s in range(kern_off[ell], kern_off[ell + 1]):
                    w = _wrap_voxel(dim, n, v, kern_do[s, 0], kern_do[s, 1])
                    fields[fi, w] += kern_w[s] * c
    for j in range(n_species):
        total = 0
        for v in range(m):
            total += counts[j, v]
        a[j] = hop_coef[j] * total
    for ell in range(n_rxn):
        ch = n_species + ell
        if rxn_kind[ell] == 0:
            total = 0
            for v in range(m):
                total += counts[rxn_r1[ell], v]
            a[ch] = rxn_rate[ell] * total
        else:
            i_sp, k_sp = rxn_r1[ell], rxn_r2[ell]
            acc = 0.0
            if i_sp == k_sp:
                fi = f_idx1[ell]
                for v in range(m):
                    c = counts[i_sp, v]
                    if c:
                        acc += c * (fields[fi, v] - kern_w0[ell])
                acc *= 0.5
            else:
                fk = f_idx2[ell]
                for v in range(m):
                    c = counts[i_sp, v]
                    if c:
                        acc += c * fields[fk, v]
            a[ch] = coef * acc


@njit(cache=True)
def _wrap_voxel(dim, n, v, o1, o2):
    if dim == 1:
        return (v + o1) % n
    i1 = v // n
    i2 = v - i1 * n
    return ((i1 + o1) % n) * n + ((i2 + o2) % n)


@njit(cache=True)
def _apply_delta(sp, v, delta, dim, n, coef,
                 counts, fen, hop_coef,
                 rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                 kern_off, kern_do, kern_w, kern_w0,
                 f_idx1, f_idx2, fields, a):
    """Add ``delta`` particles of species ``sp`` at voxel ``v``.

    Propensities are adjusted before the partner fields so that the
    self-reaction pair count stays exact.
    """
    n_species = counts.shape[0]
    n_rxn = rxn_kind.shape[0]
    for ell in range(n_rxn):
        ch = n_species + ell
        if rxn_kind[ell] == 0:
            if rxn_r1[ell] == sp:
                a[ch] += delta * rxn_rate[ell]
            continue
        i_sp, k_sp = rxn_r1[ell], rxn_r2[ell]
        if i_sp == k_sp:
            if sp == i_sp:
                fv = fields[f_idx1[ell], v]
                if delta > 0:
                    a[ch] += coef * fv
                else:
                    a[ch] -= coef * (fv - kern_w0[ell])
        else:
            if sp == i_sp:
                a[ch] += delta * coef * fields[f_idx2[ell], v]
            elif sp == k_sp:
                a[ch] += delta * coef * fields[f_idx1[ell], v]
    a[sp] += delta * hop_coef[sp]
    for ell in range(n_rxn):
        if rxn_kind[ell] != 1:
            continue
        fi = -1
        if rxn_r1[ell] == sp:
            fi = f_idx1[ell]
        elif rxn_r2[ell] == sp:
            fi = f_idx2[ell]
        if fi < 0:
            continue
        for s in range(kern_off[ell], kern_off[ell + 1]):
            w = _wrap_voxel(dim, n, v, kern_do[s, 0], kern_do[s, 1])
            fields[fi, w] += delta * kern_w[s]
    counts[sp, v] += delta
    _fen_add(fen[sp], v, delta)


@njit(cache=True)
def _stochastic_round(rng, x):
    base = int(np.floor(x))
    frac = x - base
    if frac > 0.0 and _rng_double(rng) < frac:
        base += 1
    return base


@njit(cache=True)
def _place_index(dim, n, v, o1, o2, scale, rng):
    """Voxel at (position of v) + scale * offset, stochastically rounded per axis."""
    if dim == 1:
        return (v + _stochastic_round(rng, scale * o1)) % n
    i1 = v // n
    i2 = v - i1 * n
    s1 = _stochastic_round(rng, scale * o1)
    s2 = _stochastic_round(rng, scale * o2)
    return ((i1 + s1) % n) * n + ((i2 + s2) % n)


@njit(cache=True)
def _hop_target(dim, n, v, direction):
    if dim == 1:
        return (v + 1) % n if direction == 0 else (v - 1) % n
    i1 = v // n
    i2 = v - i1 * n
    if direction == 0:
        i1 = (i1 + 1) % n
    elif direction == 1:
        i1 = (i1 - 1) % n
    elif direction == 2:
        i2 = (i2 + 1) % n
    else:
        i2 = (i2 - 1) % n
    return i1 * n + i2


@njit(cache=True)
def _pick_component(rng, plc_cump, lo, hi):
    """Index into the placement component block [lo, hi)."""
    u = _rng_double(rng)
    for c in range(lo, hi):
        if u < plc_cump[c]:
            return c
    return hi - 1


@njit(cache=True)
def _sample_partner(rng, dim, n, v, k_sp, self_pair, counts,
                    kern_lo, kern_hi, kern_do, kern_w):
    """Partner voxel and the kernel-table slot that joins it to ``v``."""
    total = 0.0
    for s in range(kern_lo, kern_hi):
        w = _wrap_voxel(dim, n, v, kern_do[s, 0], kern_do[s, 1])
        c = counts[k_sp, w]
        if self_pair and w == v:
            c -= 1
        if c > 0:
            total += kern_w[s] * c
    if total <= 0.0:
        return -1, kern_lo
    target = _rng_double(rng) * total
    acc = 0.0
    for s in range(kern_lo, kern_hi):
        w = _wrap_voxel(dim, n, v, kern_do[s, 0], kern_do[s, 1])
        c = counts[k_sp, w]
        if self_pair and w == v:
            c -= 1
        if c > 0:
            acc += kern_w[s] * c
            if target < acc:
                return w, s
    # roundoff fallback: last populated slot
    for s in range(kern_hi - 1, kern_lo - 1, -1):
        w = _wrap_voxel(dim, n, v, kern_do[s, 0], kern_do[s, 1])
        c = counts[k_sp, w]
        if self_pair and w == v:
            c -= 1
        if c > 0:
            return w, s
    return v, kern_lo


@njit(cache=True)
def _rescale_clock(next_t, a_old, a_new, channel, t, rng):
    if a_new == a_old:
        return
    if a_new <= 0.0:
        next_t[channel] = np.inf
    elif a_old <= 0.0 or next_t[channel] == np.inf:
        next_t[channel] = t + _rng_exp(rng) / a_new
    else:
        scaled = t + (a_old / a_new) * (next_t[channel] - t)
        next_t[channel] = scaled if scaled >= t else t


@njit(cache=True)
def run_core(dim, n, coef, t_final,
             counts, hop_coef,
             rxn_kind, rxn_r1, rxn_r2, rxn_p1, rxn_p2, rxn_rate,
             plc_kind, plc_off, plc_cump, plc_alpha, pair_p,
             kern_off, kern_do, kern_w, kern_w0,
             sep_off, sep_do, sep_cdf,
             f_idx1, f_idx2, n_fields,
             save_times, out_counts,
             rng_state, rng_seq, refresh_every):
    """Simulate the jump process to ``t_final``, snapshotting at save_times.

    Returns the number of fired events.  ``counts`` is advanced in place.
    """
    n_species, m = counts.shape
    n_rxn = rxn_kind.shape[0]
    n_channels = n_species + n_rxn
    n_saves = save_times.shape[0]

    rng = np.empty(2, dtype=np.uint64)
    _rng_seed(rng, rng_state, rng_seq)

    fen = np.zeros((n_species, m + 1), dtype=np.int64)
    for j in range(n_species):
        for v in range(m):
            if counts[j, v]:
                _fen_add(fen[j], v, counts[j, v])

    fields = np.zeros((max(n_fields, 1), m), dtype=np.float64)
    a = np.zeros(n_channels, dtype=np.float64)
    _recompute(dim, n, coef, counts, hop_coef,
               rxn_kind, rxn_r1, rxn_r2, rxn_rate,
               kern_off, kern_do, kern_w, kern_w0,
               f_idx1, f_idx2, fields, a)

    next_t = np.empty(n_channels, dtype=np.float64)
    for c in range(n_channels):
        next_t[c] = _rng_exp(rng) / a[c] if a[c] > 0.0 else np.inf
    heap_nodes = np.empty(n_channels, dtype=np.int64)
    heap_pos = np.empty(n_channels, dtype=np.int64)
    _heap_build(heap_nodes, heap_pos, next_t)

    a_before = np.empty(n_channels, dtype=np.float64)
    t = 0.0
    save_idx = 0
    events = 0
    while True:
        ch = heap_nodes[0]
        tc = next_t[ch]
        while save_idx < n_saves and save_times[save_idx] < tc:
            for j in range(n_species):
                for v in range(m):
                    out_counts[save_idx, j, v] = counts[j, v]
            save_idx += 1
        if tc > t_final:
            break
        if tc < t:
            raise RuntimeError("event queue corruption: next event precedes the clock")
        t = tc
        events += 1
        for c in range(n_channels):
            a_before[c] = a[c]

        if ch < n_species:
            # diffusive hop: uniform particle of the species, uniform direction
            j = ch
            total = _fen_total(fen[j])
            target = int(_rng_double(rng) * total)
            if target >= total:
                target = total - 1
            v = _fen_sample(fen[j], target)
            direction = int(_rng_double(rng) * (2 * dim))
            if direction >= 2 * dim:
                direction = 2 * dim - 1
            w = _hop_target(dim, n, v, direction)
            if w != v:
                _apply_delta(j, v, -1, dim, n, coef, counts, fen, hop_coef,
                             rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                             kern_off, kern_do, kern_w, kern_w0,
                             f_idx1, f_idx2, fields, a)
                _apply_delta(j, w, 1, dim, n, coef, counts, fen, hop_coef,
                             rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                             kern_off, kern_do, kern_w, kern_w0,
                             f_idx1, f_idx2, fields, a)
        else:
            ell = ch - n_species
            if rxn_kind[ell] == 0:
                sp = rxn_r1[ell]
                total = _fen_total(fen[sp])
                target = int(_rng_double(rng) * total)
                if target >= total:
                    target = total - 1
                v = _fen_sample(fen[sp], target)
                _apply_delta(sp, v, -1, dim, n, coef, counts, fen, hop_coef,
                             rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                             kern_off, kern_do, kern_w, kern_w0,
                             f_idx1, f_idx2, fields, a)
                kind = plc_kind[ell]
                if kind == 1:  # product at the reactant position
                    _apply_delta(rxn_p1[ell], v, 1, dim, n, coef, counts, fen, hop_coef,
                                 rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                 kern_off, kern_do, kern_w, kern_w0,
                                 f_idx1, f_idx2, fields, a)
                elif kind == 4:  # dissociation with sampled separation
                    c = _pick_component(rng, plc_cump, plc_off[ell], plc_off[ell + 1])
                    alpha = plc_alpha[c]
                    lo, hi = sep_off[ell], sep_off[ell + 1]
                    u = _rng_double(rng)
                    s = lo
                    while s < hi - 1 and sep_cdf[s] <= u:
                        s += 1
                    o1, o2 = sep_do[s, 0], sep_do[s, 1]
                    w1 = _place_index(dim, n, v, o1, o2, 1.0 - alpha, rng)
                    w2 = _place_index(dim, n, v, -o1, -o2, alpha, rng)
                    _apply_delta(rxn_p1[ell], w1, 1, dim, n, coef, counts, fen, hop_coef,
                                 rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                 kern_off, kern_do, kern_w, kern_w0,
                                 f_idx1, f_idx2, fields, a)
                    _apply_delta(rxn_p2[ell], w2, 1, dim, n, coef, counts, fen, hop_coef,
                                 rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                 kern_off, kern_do, kern_w, kern_w0,
                                 f_idx1, f_idx2, fields, a)
            else:
                # bimolecular firing: voxel by partner-field weight, then pair
                i_sp, k_sp = rxn_r1[ell], rxn_r2[ell]
                self_pair = i_sp == k_sp
                fpartner = f_idx1[ell] if self_pair else f_idx2[ell]
                total = 0.0
                for v in range(m):
                    c = counts[i_sp, v]
                    if c:
                        g = fields[fpartner, v] - (kern_w0[ell] if self_pair else 0.0)
                        if g > 0.0:
                            total += c * g
                target = _rng_double(rng) * total
                acc = 0.0
                v = -1
                w = -1
                slot = 0
                for vv in range(m):
                    c = counts[i_sp, vv]
                    if c:
                        g = fields[fpartner, vv] - (kern_w0[ell] if self_pair else 0.0)
                        if g > 0.0:
                            acc += c * g
                            if target < acc:
                                v = vv
                                break
                if v < 0:
                    for vv in range(m - 1, -1, -1):
                        c = counts[i_sp, vv]
                        if c and fields[fpartner, vv] - (kern_w0[ell] if self_pair else 0.0) > 0.0:
                            v = vv
                            break
                if v < 0:
                    # propensity drift left a phantom event; resynchronize
                    _recompute(dim, n, coef, counts, hop_coef,
                               rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                               kern_off, kern_do, kern_w, kern_w0,
                               f_idx1, f_idx2, fields, a)
                else:
                    w, slot = _sample_partner(rng, dim, n, v, k_sp, self_pair, counts,
                                              kern_off[ell], kern_off[ell + 1], kern_do, kern_w)
                    if w < 0:
                        _recompute(dim, n, coef, counts, hop_coef,
                                   rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                   kern_off, kern_do, kern_w, kern_w0,
                                   f_idx1, f_idx2, fields, a)
                        v = -1
                if v >= 0:
                    _apply_delta(i_sp, v, -1, dim, n, coef, counts, fen, hop_coef,
                                 rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                 kern_off, kern_do, kern_w, kern_w0,
                                 f_idx1, f_idx2, fields, a)
                    _apply_delta(k_sp, w, -1, dim, n, coef, counts, fen, hop_coef,
                                 rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                 kern_off, kern_do, kern_w, kern_w0,
                                 f_idx1, f_idx2, fields, a)
                    kind = plc_kind[ell]
                    if kind == 2:  # product on the segment joining the pair
                        c = _pick_component(rng, plc_cump, plc_off[ell], plc_off[ell + 1])
                        alpha = plc_alpha[c]
                        z = _place_index(dim, n, v, kern_do[slot, 0], kern_do[slot, 1],
                                         1.0 - alpha, rng)
                        _apply_delta(rxn_p1[ell], z, 1, dim, n, coef, counts, fen, hop_coef,
                                     rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                     kern_off, kern_do, kern_w, kern_w0,
                                     f_idx1, f_idx2, fields, a)
                    elif kind == 3:  # products keep the reactant positions
                        if _rng_double(rng) < pair_p[ell]:
                            z1, z2 = v, w
                        else:
                            z1, z2 = w, v
                        _apply_delta(rxn_p1[ell], z1, 1, dim, n, coef, counts, fen, hop_coef,
                                     rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                     kern_off, kern_do, kern_w, kern_w0,
                                     f_idx1, f_idx2, fields, a)
                        _apply_delta(rxn_p2[ell], z2, 1, dim, n, coef, counts, fen, hop_coef,
                                     rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                                     kern_off, kern_do, kern_w, kern_w0,
                                     f_idx1, f_idx2, fields, a)

        if refresh_every > 0 and events % refresh_every == 0:
            _recompute(dim, n, coef, counts, hop_coef,
                       rxn_kind, rxn_r1, rxn_r2, rxn_rate,
                       kern_off, kern_do, kern_w, kern_w0,
                       f_idx1, f_idx2, fields, a)

        for c in range(n_channels):
            if c == ch:
                next_t[c] = t + _rng_exp(rng) / a[c] if a[c] > 0.0 else np.inf
                _heap_update(heap_nodes, heap_pos, next_t, c)
            elif a[c] != a_before[c]:
                _rescale_clock(next_t, a_before[c], a[c], c, t, rng)
                _heap_update(heap_nodes, heap_pos, next_t, c)

    while save_idx < n_saves:
        for j in range(n_species):
            for v in range(m):
                out_counts[save_idx, j, v] = counts[j, v]
        save_idx += 1
    return events
