"""Compiled bundle-Kruskal assembly.

Mirrors ``solver._Assembler`` step for step on packed arrays; the Python
class is the reference used by the tests. Bundles are rows of per-view
candidate pairs ``(bm[v], bn[v])`` (-1 = view absent) plus a prior index.
"""

import numpy as np
from numba import njit

from ._cliques import _size_term


@njit(cache=True, nogil=True)
def _key_less(la, ma, na, pa, lb, mb, nb, pb):
    """Order of (limb, parts, prior) with parts compared as sorted (view, m, n) tuples."""
    if la != lb:
        return la < lb
    N = ma.shape[0]
    va = 0
    vb = 0
    while True:
        while va < N and ma[va] < 0:
            va += 1
        while vb < N and mb[vb] < 0:
            vb += 1
        if va == N or vb == N:
            if va == N and vb == N:
                break
            return va == N
        if va != vb:
            return va < vb
        if ma[va] != mb[vb]:
            return ma[va] < mb[vb]
        if na[va] != nb[vb]:
            return na[va] < nb[vb]
        va += 1
        vb += 1
    return pa < pb


@njit(cache=True, nogil=True)
def _score(l, bm, bn, prior, limbs, offsets, paf, mat, trk, w_p, w_m, w_t, w_size, c, use_size_term):
    """Clique score recomputed in the same summation order as ``solver.clique_energy``."""
    i = limbs[l, 0]
    j = limbs[l, 1]
    N = bm.shape[0]
    E = 0.0
    size = 0
    for v in range(N):
        if bm[v] >= 0:
            E += w_p * paf[l, v, bm[v], bn[v]]
            size += 1
    for va in range(N):
        if bm[va] < 0:
            continue
        for vb in range(va + 1, N):
            if bm[vb] < 0:
                continue
            E += w_m * (mat[i, offsets[i, va] + bm[va], offsets[i, vb] + bm[vb]]
                        + mat[j, offsets[j, va] + bn[va], offsets[j, vb] + bn[vb]])
    if prior >= 0:
        for v in range(N):
            if bm[v] >= 0:
                E += w_t * (trk[i, offsets[i, v] + bm[v], prior] + trk[j, offsets[j, v] + bn[v], prior])
        size += 1
    if size == 0:
        return -np.inf
    return E / size + _size_term(size, w_size, c, use_size_term)


@njit(cache=True, nogil=True)
def _grow(arr, n):
    shape = (n,) + arr.shape[1:]
    out = np.empty(shape, arr.dtype)
    out[:arr.shape[0]] = arr
    return out


@njit(cache=True, nogil=True)
def assemble(b_limb, b_m, b_n, b_prior, b_score, limbs, counts, offsets, paf, mat, mat_mask, trk, trk_mask,
             prior_valid, w_p, w_m, w_t, w_size, c, use_size_term):
    """Returns (assign (P, N, J), prior_of (P,), n_splits) for the surviving persons in creation order."""
    J, N = counts.shape
    K = prior_valid.shape[0]
    cmax = 1
    for jj in range(J):
        for v in range(N):
            cmax = max(cmax, counts[jj, v])
    labels = np.full((N, J, cmax), -1, np.int64)
    total = 0
    for jj in range(J):
        for v in range(N):
            total += counts[jj, v]
    pcap = total + 1
    assign = np.full((pcap, N, J), -1, np.int64)
    prior_of = np.full(pcap, -1, np.int64)
    alive = np.zeros(pcap, np.bool_)
    n_persons = 0
    prior_owner = np.full(max(K, 1), -1, np.int64)

    B = b_limb.shape[0]
    cap = max(2 * B, 16)
    h_limb = np.empty(cap, np.int64)
    h_m = np.empty((cap, N), np.int64)
    h_n = np.empty((cap, N), np.int64)
    h_prior = np.empty(cap, np.int64)
    h_score = np.empty(cap)
    h_seq = np.empty(cap, np.int64)
    h_active = np.zeros(cap, np.bool_)
    n_h = 0
    seq = 0
    for b in range(B):
        h_limb[n_h] = b_limb[b]
        h_m[n_h] = b_m[b]
        h_n[n_h] = b_n[b]
        h_prior[n_h] = b_prior[b]
        h_score[n_h] = b_score[b]
        h_seq[n_h] = seq
        h_active[n_h] = True
        n_h += 1
        seq += 1
    n_active = B
    n_splits = 0

    li = np.empty(N, np.int64)
    lj = np.empty(N, np.int64)
    merged = np.empty((N, J), np.int64)
    source = np.empty((N, J), np.int64)
    involved = np.empty(2 * N + 1, np.int64)
    owner = np.empty(N, np.int64)
    fm = np.empty(N, np.int64)
    fn = np.empty(N, np.int64)

    while n_active > 0:
        # pop: highest score, then smallest key, then earliest push
        top = -1
        for r in range(n_h):
            if not h_active[r]:
                continue
            if top < 0:
                top = r
                continue
            if h_score[r] != h_score[top]:
                if h_score[r] > h_score[top]:
                    top = r
                continue
            if _key_less(h_limb[r], h_m[r], h_n[r], h_prior[r], h_limb[top], h_m[top], h_n[top], h_prior[top]):
                top = r
            elif not _key_less(h_limb[top], h_m[top], h_n[top], h_prior[top],
                               h_limb[r], h_m[r], h_n[r], h_prior[r]) and h_seq[r] < h_seq[top]:
                top = r
        h_active[top] = False
        n_active -= 1
        l = h_limb[top]
        bm = h_m[top]
        bn = h_n[top]
        bprior = h_prior[top]
        i = limbs[l, 0]
        j = limbs[l, 1]

        for v in range(N):
            li[v] = labels[v, i, bm[v]] if bm[v] >= 0 else -1
            lj[v] = labels[v, j, bn[v]] if bm[v] >= 0 else -1

        # ---- try_merge
        ok = True
        n_inv = 0
        for v in range(N):
            if bm[v] < 0:
                continue
            for lab in (li[v], lj[v]):
                if lab < 0:
                    continue
                seen = False
                for q in range(n_inv):
                    if involved[q] == lab:
                        seen = True
                        break
                if not seen:
                    involved[n_inv] = lab
                    n_inv += 1
        if bprior >= 0 and prior_owner[bprior] >= 0:
            lab = prior_owner[bprior]
            seen = False
            for q in range(n_inv):
                if involved[q] == lab:
                    seen = True
                    break
            if not seen:
                involved[n_inv] = lab
                n_inv += 1
        involved[:n_inv].sort()

        pk = -1
        for q in range(n_inv):
            pp = prior_of[involved[q]]
            if pp >= 0:
                if pk < 0:
                    pk = pp
                elif pk != pp:
                    ok = False
        if ok and bprior >= 0:
            if pk < 0:
                pk = bprior
            elif pk != bprior:
                ok = False

        if ok:
            merged[:, :] = -1
            source[:, :] = -2
            for q in range(n_inv):
                p = involved[q]
                for v in range(N):
                    for jj in range(J):
                        a = assign[p, v, jj]
                        if a >= 0:
                            if merged[v, jj] >= 0 and merged[v, jj] != a:
                                ok = False
                            merged[v, jj] = a
                            source[v, jj] = p
        if ok:
            for v in range(N):
                if bm[v] < 0:
                    continue
                for side in range(2):
                    joint = i if side == 0 else j
                    cand = bm[v] if side == 0 else bn[v]
                    lab = li[v] if side == 0 else lj[v]
                    if merged[v, joint] >= 0 and merged[v, joint] != cand:
                        ok = False
                    if merged[v, joint] < 0:
                        merged[v, joint] = cand
                        source[v, joint] = lab if lab >= 0 else -1
        if ok:
            for jj in range(J):
                s0 = -3
                multi = False
                nv = 0
                vlast = -1
                for v in range(N):
                    if merged[v, jj] >= 0:
                        nv += 1
                        vlast = v
                        if s0 == -3:
                            s0 = source[v, jj]
                        elif source[v, jj] != s0:
                            multi = True
                if multi:
                    for vx in range(N):
                        if merged[vx, jj] < 0:
                            continue
                        for vy in range(vx + 1, N):
                            if merged[vy, jj] < 0 or source[vx, jj] == source[vy, jj]:
                                continue
                            if not mat_mask[jj, offsets[jj, vx] + merged[vx, jj], offsets[jj, vy] + merged[vy, jj]]:
                                ok = False
                                break
                        if not ok:
                            break
                if not ok:
                    break
                if pk >= 0 and prior_valid[pk, jj] and nv == 1:
                    src = source[vlast, jj]
                    if src == -1:
                        bound = bprior == pk
                    else:
                        bound = prior_of[src] == pk
                    if not bound and not trk_mask[jj, offsets[jj, vlast] + merged[vlast, jj], pk]:
                        ok = False
                        break
        if ok:
            if n_inv > 0:
                target = involved[0]
                for q in range(1, n_inv):
                    alive[involved[q]] = False
            else:
                target = n_persons
                n_persons += 1
                alive[target] = True
            assign[target] = merged
            prior_of[target] = pk
            if pk >= 0:
                prior_owner[pk] = target
            for v in range(N):
                for jj in range(J):
                    if merged[v, jj] >= 0:
                        labels[v, jj, merged[v, jj]] = target
            for k in range(K):
                if prior_owner[k] >= 0 and not alive[prior_owner[k]]:
                    prior_owner[k] = target
            continue

        # ---- split
        n_splits += 1
        n_parts = 0
        for v in range(N):
            if bm[v] >= 0:
                owner[v] = li[v] if li[v] >= 0 else lj[v]
                n_parts += 1
        groups = np.empty(n_parts, np.int64)
        n_groups = 0
        for v in range(N):
            if bm[v] < 0:
                continue
            seen = False
            for q in range(n_groups):
                if groups[q] == owner[v]:
                    seen = True
                    break
            if not seen:
                groups[n_groups] = owner[v]
                n_groups += 1
        groups = np.sort(groups[:n_groups])
        holder = -2
        if bprior >= 0:
            holder = prior_owner[bprior]
        n_frag = 0
        frag_m = np.full((N, N), -1, np.int64)
        frag_n = np.full((N, N), -1, np.int64)
        frag_k = np.full(N, -1, np.int64)
        if n_groups >= 2:
            for g in range(n_groups):
                for v in range(N):
                    if bm[v] >= 0 and owner[v] == groups[g]:
                        frag_m[n_frag, v] = bm[v]
                        frag_n[n_frag, v] = bn[v]
                frag_k[n_frag] = bprior if (bprior >= 0 and groups[g] == holder) else -1
                n_frag += 1
        elif bprior >= 0:
            frag_m[0] = bm
            frag_n[0] = bn
            frag_k[0] = -1
            n_frag = 1
        elif n_parts > 1:
            for v in range(N):
                if bm[v] >= 0:
                    frag_m[n_frag, v] = bm[v]
                    frag_n[n_frag, v] = bn[v]
                    frag_k[n_frag] = -1
                    n_frag += 1
        for f in range(n_frag):
            fm[:] = frag_m[f]
            fn[:] = frag_n[f]
            if n_h == h_limb.shape[0]:
                newcap = 2 * n_h
                h_limb = _grow(h_limb, newcap)
                h_m = _grow(h_m, newcap)
                h_n = _grow(h_n, newcap)
                h_prior = _grow(h_prior, newcap)
                h_score = _grow(h_score, newcap)
                h_seq = _grow(h_seq, newcap)
                h_active = _grow(h_active, newcap)
                h_active[n_h:] = False
            h_limb[n_h] = l
            h_m[n_h] = fm
            h_n[n_h] = fn
            h_prior[n_h] = frag_k[f]
            h_score[n_h] = _score(l, fm, fn, frag_k[f], limbs, offsets, paf, mat, trk,
                                  w_p, w_m, w_t, w_size, c, use_size_term)
            h_seq[n_h] = seq
            h_active[n_h] = True
            n_h += 1
            n_active += 1
            seq += 1

    keep = np.nonzero(alive[:n_persons])[0]
    return assign[keep], prior_of[keep], n_splits
