"""Compiled beam search over limb cliques.

A limb graph has ``L`` nodes: 2D limbs (slot = their view) and last-frame
3D limbs (slot ``n_slots - 1``). A clique holds at most one node per slot
and is stored as an ``n_slots`` vector of node indices (-1 = empty slot).
Node indices are ordered by (view, cand_i, cand_j) then prior person, so
comparing slot vectors lexicographically gives the documented tie order.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _size_term(size, w_size, c, use_size_term):
    if not use_size_term:
        return 0.0
    x = size / c
    return w_size * (1.0 - np.exp(-0.5 * x * x))


@njit(cache=True, nogil=True)
def _lex_less(a, b):
    for k in range(a.shape[0]):
        if a[k] != b[k]:
            return a[k] < b[k]
    return False


@njit(cache=True, nogil=True)
def _better(score_a, slots_a, score_b, slots_b):
    if score_a != score_b:
        return score_a > score_b
    return _lex_less(slots_a, slots_b)


_HASH_MUL = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True, nogil=True)
def _node_hash(b):
    h = np.uint64(b + 1) * _HASH_MUL
    h ^= h >> np.uint64(29)
    return h


@njit(cache=True, nogil=True)
def _workspace(beam, n_slots, max_deg):
    cap = max(beam * max_deg, 1)
    size = 16
    while size < 2 * cap:
        size *= 2
    deg = max(max_deg, 1)
    return (np.empty((2, beam, n_slots), np.int64), np.empty((2, beam)), np.empty((2, beam), np.uint64),
            np.empty((2, beam, deg), np.int64), np.empty((2, beam, deg)), np.empty((2, beam), np.int64),
            np.empty(cap), np.empty(cap), np.empty(cap, np.uint64),
            np.empty(cap, np.int64), np.empty(cap, np.int64), np.empty(cap, np.bool_),
            np.full(size, -1, np.int64))


@njit(cache=True, nogil=True)
def _child_less(beam_slots, cur, node_slot, pa, ba, pb, bb, n_slots):
    """Lexicographic order of the slot vectors of children (pa + ba) and (pb + bb)."""
    sa = node_slot[ba]
    sb = node_slot[bb]
    for k in range(n_slots):
        x = ba if k == sa else beam_slots[cur, pa, k]
        y = bb if k == sb else beam_slots[cur, pb, k]
        if x != y:
            return x < y
    return False


@njit(cache=True, nogil=True)
def _grow_seed(s, node_slot, unary, compat, pair, alive, adj_ptr, adj_idx,
               n_slots, beam, w_size, c, use_size_term,
               out_slots, out_score, out_size, ws):
    """Beam-grow cliques from seed ``s``; writes every beam member of every size.

    Every beam member keeps the neighbours of ``s`` that can still join it,
    with their summed unary and pair weights towards the members so far.
    A child clique is held as (parent, option) until it survives selection.
    ``ws`` holds preallocated scratch arrays from ``_workspace``.
    Returns the number of candidates written.
    """
    (beam_slots, beam_E, beam_hash, cand, gain, n_cand,
     tmp_E, tmp_score, tmp_hash, tmp_parent, tmp_pos, taken, table) = ws
    mask = np.uint64(table.shape[0] - 1)
    cur = 0
    beam_slots[cur, 0, :] = -1
    beam_slots[cur, 0, node_slot[s]] = s
    beam_hash[cur, 0] = _node_hash(s)
    beam_E[cur, 0] = unary[s]
    n = 0
    for q in range(adj_ptr[s], adj_ptr[s + 1]):
        b = adj_idx[q]
        if alive[b] and node_slot[b] != node_slot[s]:
            cand[cur, 0, n] = b
            gain[cur, 0, n] = unary[b] + pair[s, b]
            n += 1
    n_cand[cur, 0] = n
    nb = 1
    for k in range(n_slots):
        out_slots[0, k] = beam_slots[cur, 0, k]
    out_score[0] = unary[s] + _size_term(1, w_size, c, use_size_term)
    out_size[0] = 1
    n_out = 1
    for level in range(1, n_slots):
        count = 0
        dedupe = nb > 1
        for p in range(nb):
            for t in range(n_cand[cur, p]):
                b = cand[cur, p, t]
                h = beam_hash[cur, p] ^ _node_hash(b)
                if dedupe:
                    # the same clique can be reached from different parents;
                    # set hashes are XORs of node hashes, full compare only on a hit
                    sb = node_slot[b]
                    pos = h & mask
                    dup = False
                    while table[pos] >= 0:
                        r = table[pos]
                        if tmp_hash[r] == h:
                            pr = tmp_parent[r]
                            br = cand[cur, pr, tmp_pos[r]]
                            if br == b or node_slot[br] != sb:
                                same = True
                                sr = node_slot[br]
                                for k in range(n_slots):
                                    x = br if k == sr else beam_slots[cur, pr, k]
                                    y = b if k == sb else beam_slots[cur, p, k]
                                    if x != y:
                                        same = False
                                        break
                                if same:
                                    dup = True
                                    break
                        pos = (pos + np.uint64(1)) & mask
                    if dup:
                        continue
                    table[pos] = count
                tmp_E[count] = beam_E[cur, p] + gain[cur, p, t]
                tmp_hash[count] = h
                tmp_parent[count] = p
                tmp_pos[count] = t
                count += 1
        if dedupe:
            for r in range(count):
                pos = tmp_hash[r] & mask
                while table[pos] >= 0:
                    table[pos] = -1
                    pos = (pos + np.uint64(1)) & mask
        if count == 0:
            break
        size = level + 1
        pen = _size_term(size, w_size, c, use_size_term)
        for r in range(count):
            tmp_score[r] = tmp_E[r] / size + pen
            taken[r] = False
        nxt = 1 - cur
        nb_next = min(beam, count)
        for t in range(nb_next):
            best = -1
            for r in range(count):
                if taken[r]:
                    continue
                if best < 0 or tmp_score[r] > tmp_score[best]:
                    best = r
                elif tmp_score[r] == tmp_score[best]:
                    if _child_less(beam_slots, cur, node_slot, tmp_parent[r], cand[cur, tmp_parent[r], tmp_pos[r]],
                                   tmp_parent[best], cand[cur, tmp_parent[best], tmp_pos[best]], n_slots):
                        best = r
            taken[best] = True
            p = tmp_parent[best]
            nb_node = cand[cur, p, tmp_pos[best]]
            sb = node_slot[nb_node]
            for k in range(n_slots):
                beam_slots[nxt, t, k] = beam_slots[cur, p, k]
            beam_slots[nxt, t, sb] = nb_node
            beam_E[nxt, t] = tmp_E[best]
            beam_hash[nxt, t] = tmp_hash[best]
            # the child's options: the parent's options compatible with the new node
            n = 0
            for u in range(n_cand[cur, p]):
                d = cand[cur, p, u]
                if node_slot[d] != sb and compat[nb_node, d]:
                    cand[nxt, t, n] = d
                    gain[nxt, t, n] = gain[cur, p, u] + pair[nb_node, d]
                    n += 1
            n_cand[nxt, t] = n
            for k in range(n_slots):
                out_slots[n_out, k] = beam_slots[nxt, t, k]
            out_score[n_out] = tmp_score[best]
            out_size[n_out] = size
            n_out += 1
        nb = nb_next
        cur = nxt
    return n_out


@njit(cache=True, nogil=True)
def _max_degree(ptr):
    m = 0
    for a in range(ptr.shape[0] - 1):
        m = max(m, ptr[a + 1] - ptr[a])
    return m


@njit(cache=True, nogil=True)
def _adjacency(compat):
    L = compat.shape[0]
    ptr = np.zeros(L + 1, np.int64)
    for a in range(L):
        n = 0
        for b in range(L):
            if compat[a, b]:
                n += 1
        ptr[a + 1] = ptr[a] + n
    idx = np.empty(ptr[L], np.int64)
    for a in range(L):
        k = ptr[a]
        for b in range(L):
            if compat[a, b]:
                idx[k] = b
                k += 1
    return ptr, idx


@njit(cache=True, nogil=True)
def enumerate_all(node_slot, unary, compat, pair, n_slots, beam, w_size, c, use_size_term):
    """Grow every seed once; returns (slots, scores, sizes, seed) of all candidates."""
    L = node_slot.shape[0]
    alive = np.ones(L, np.bool_)
    ptr, idx = _adjacency(compat)
    ws = _workspace(beam, n_slots, _max_degree(ptr))
    per = beam * (n_slots - 1) + 1
    slots = np.full((L * per, n_slots), -1, np.int64)
    scores = np.empty(L * per)
    sizes = np.empty(L * per, np.int64)
    seeds = np.empty(L * per, np.int64)
    n = 0
    for s in range(L):
        k = _grow_seed(s, node_slot, unary, compat, pair, alive, ptr, idx, n_slots, beam,
                       w_size, c, use_size_term, slots[n:n + per], scores[n:n + per], sizes[n:n + per], ws)
        seeds[n:n + k] = s
        n += k
    return slots[:n], scores[:n], sizes[:n], seeds[:n]


@njit(cache=True, nogil=True)
def greedy_parse(node_slot, node_m, node_n, unary, compat, pair, n_slots, beam,
                 w_size, c, use_size_term, stop_score):
    """Repeatedly take the best clique and delete every node sharing a joint with it.

    Seeds are only re-grown when one of their cached beam members lost a
    node: dropping options that no beam member used cannot change a beam.
    Returns emitted (slots, scores) in extraction order.
    """
    L = node_slot.shape[0]
    ptr, idx = _adjacency(compat)
    ws = _workspace(beam, n_slots, _max_degree(ptr))
    per = beam * (n_slots - 1) + 1
    cand_slots = np.full((L, per, n_slots), -1, np.int64)
    cand_score = np.full((L, per), -np.inf)
    cand_size = np.zeros((L, per), np.int64)
    n_cand = np.zeros(L, np.int64)
    best_of = np.full(L, -1, np.int64)
    valid = np.zeros(L, np.bool_)
    alive = np.ones(L, np.bool_)
    killed = np.zeros(L, np.bool_)
    uses = np.zeros((L, L), np.bool_)  # uses[s, a]: a cached beam member of seed s contains node a
    dead = np.empty(L, np.int64)
    out_slots = np.full((L, n_slots), -1, np.int64)
    out_score = np.empty(L)
    n_out = 0
    while True:
        for s in range(L):
            if alive[s] and not valid[s]:
                k = _grow_seed(s, node_slot, unary, compat, pair, alive, ptr, idx, n_slots, beam,
                               w_size, c, use_size_term, cand_slots[s], cand_score[s], cand_size[s], ws)
                n_cand[s] = k
                uses[s, :] = False
                for r in range(k):
                    for q in range(n_slots):
                        a = cand_slots[s, r, q]
                        if a >= 0:
                            uses[s, a] = True
                b = 0
                for r in range(1, k):
                    if _better(cand_score[s, r], cand_slots[s, r], cand_score[s, b], cand_slots[s, b]):
                        b = r
                best_of[s] = b
                valid[s] = True
        bs = -1
        for s in range(L):
            if not alive[s]:
                continue
            if bs < 0 or _better(cand_score[s, best_of[s]], cand_slots[s, best_of[s]],
                                 cand_score[bs, best_of[bs]], cand_slots[bs, best_of[bs]]):
                bs = s
        if bs < 0:
            break
        top = best_of[bs]
        if not cand_score[bs, top] > stop_score:
            break
        out_slots[n_out, :] = cand_slots[bs, top, :]
        out_score[n_out] = cand_score[bs, top]
        n_out += 1
        killed[:] = False
        for k in range(n_slots):
            a = out_slots[n_out - 1, k]
            if a < 0:
                continue
            for b in range(L):
                if alive[b] and node_slot[b] == node_slot[a] and (node_m[b] == node_m[a] or node_n[b] == node_n[a]):
                    killed[b] = True
        n_killed = 0
        for b in range(L):
            if killed[b]:
                alive[b] = False
                dead[n_killed] = b
                n_killed += 1
        for s in range(L):
            if not alive[s] or not valid[s]:
                continue
            for q in range(n_killed):
                if uses[s, dead[q]]:
                    valid[s] = False
                    break
    return out_slots[:n_out], out_score[:n_out]


@njit(cache=True, nogil=True)
def limb_graph(l, i, j, counts, paf, paf_mask, mat, mat_mask, trk, trk_mask, prior_valid, offsets,
               w_p, w_m, w_t):
    """Nodes and pairwise terms of one limb type from the packed graph.

    2D limbs are ordered by (view, cand_i, cand_j), prior limbs by person.
    Returns (node_view, node_m, node_n, unary, compat, pair, n_2d).
    """
    N = counts.shape[1]
    K = prior_valid.shape[0]
    L2 = 0
    for v in range(N):
        for m in range(counts[i, v]):
            for n in range(counts[j, v]):
                if paf_mask[l, v, m, n]:
                    L2 += 1
    nk = 0
    for k in range(K):
        if prior_valid[k, i] and prior_valid[k, j]:
            nk += 1
    L = L2 + nk
    node_view = np.empty(L, np.int64)
    node_m = np.empty(L, np.int64)
    node_n = np.empty(L, np.int64)
    unary = np.zeros(L)
    gi = np.empty(L2, np.int64)
    gj = np.empty(L2, np.int64)
    a = 0
    for v in range(N):
        for m in range(counts[i, v]):
            for n in range(counts[j, v]):
                if paf_mask[l, v, m, n]:
                    node_view[a] = v
                    node_m[a] = m
                    node_n[a] = n
                    unary[a] = w_p * paf[l, v, m, n]
                    gi[a] = offsets[i, v] + m
                    gj[a] = offsets[j, v] + n
                    a += 1
    for k in range(K):
        if prior_valid[k, i] and prior_valid[k, j]:
            node_view[a] = N
            node_m[a] = k
            node_n[a] = k
            a += 1
    compat = np.zeros((L, L), np.bool_)
    pair = np.zeros((L, L))
    for a in range(L2):
        # same-view limbs never match; the matching weights are symmetric
        for b in range(a + 1, L2):
            if node_view[b] == node_view[a]:
                continue
            if mat_mask[i, gi[a], gi[b]] and mat_mask[j, gj[a], gj[b]]:
                compat[a, b] = True
                compat[b, a] = True
                pair[a, b] = w_m * (mat[i, gi[a], gi[b]] + mat[j, gj[a], gj[b]])
                pair[b, a] = w_m * (mat[i, gi[b], gi[a]] + mat[j, gj[b], gj[a]])
        for t in range(L2, L):
            k = node_m[t]
            if trk_mask[i, gi[a], k] and trk_mask[j, gj[a], k]:
                compat[a, t] = True
                compat[t, a] = True
                pair[a, t] = w_t * (trk[i, gi[a], k] + trk[j, gj[a], k])
                pair[t, a] = pair[a, t]
    return node_view, node_m, node_n, unary, compat, pair, L2


@njit(cache=True, nogil=True)
def parse_packed(l, i, j, counts, paf, paf_mask, mat, mat_mask, trk, trk_mask, prior_valid, offsets,
                 w_p, w_m, w_t, beam, w_size, c, use_size_term, stop_score):
    """Limb graph plus greedy extraction; bundles as per-view (m, n) rows.

    Returns (bm, bn, prior, score): ``bm[b, v]``/``bn[b, v]`` are the
    candidates of joints i and j in view v (-1 if absent).
    """
    N = counts.shape[1]
    node_view, node_m, node_n, unary, compat, pair, L2 = limb_graph(
        l, i, j, counts, paf, paf_mask, mat, mat_mask, trk, trk_mask, prior_valid, offsets, w_p, w_m, w_t)
    slots, scores = greedy_parse(node_view, node_m, node_n, unary, compat, pair, N + 1, beam,
                                 w_size, c, use_size_term, stop_score)
    nb = slots.shape[0]
    bm = np.full((nb, N), -1, np.int64)
    bn = np.full((nb, N), -1, np.int64)
    prior = np.full(nb, -1, np.int64)
    for b in range(nb):
        for k in range(N + 1):
            a = slots[b, k]
            if a < 0:
                continue
            if a >= L2:
                prior[b] = node_m[a]
            else:
                bm[b, node_view[a]] = node_m[a]
                bn[b, node_view[a]] = node_n[a]
    return bm, bn, prior, scores
