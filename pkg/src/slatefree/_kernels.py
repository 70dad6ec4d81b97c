"""Numba kernels: user choice, slate selection, TD updates and the episode loop.

Everything here works on plain arrays so that the public modules can wrap
it with friendlier signatures while the simulation loop stays compiled.
Random numbers come from a ``numpy.random.Generator`` passed in by the
caller; numba advances the same bit-generator state numpy would.
"""

import numpy as np
from numba import njit

VANILLA_Q = 0
VANILLA_SARSA = 1
SLATEFREE_Q = 2
SLATEFREE_SARSA = 3
SLATEQ = 4

USER1 = 1
USER2 = 2
USER3 = 3


# --------------------------------------------------------------------------
# user choice


@njit(cache=True)
def choice_probs(variant, alpha, xmask, ymask, full_reject, s, slate, out):
    k = out.shape[0]
    n = slate.shape[0]
    for i in range(k):
        out[i] = 0.0
    if variant == USER1:
        lib = (1.0 - alpha) / k
        for i in range(k):
            out[i] = lib
        for t in range(n):
            out[slate[t]] += alpha / n
    elif variant == USER2:
        n_lib = 0
        for i in range(k):
            if not xmask[i]:
                n_lib += 1
        n_ok = 0
        for t in range(n):
            if not xmask[slate[t]]:
                n_ok += 1
        if n_ok == 0:
            lib = 1.0 / n_lib
        else:
            lib = (1.0 - alpha) / n_lib
        for i in range(k):
            if not xmask[i]:
                out[i] = lib
        if n_ok > 0:
            for t in range(n):
                if not xmask[slate[t]]:
                    out[slate[t]] += alpha / n_ok
    else:
        hit = False
        for t in range(n):
            if ymask[slate[t]]:
                hit = True
        if hit:
            for t in range(n):
                out[slate[t]] = 1.0 / n
        elif full_reject:
            for i in range(k):
                out[i] = 1.0 / k
        else:
            n_lib = 0
            for i in range(k):
                if not ymask[i]:
                    n_lib += 1
            for i in range(k):
                if not ymask[i]:
                    out[i] = 1.0 / n_lib


@njit(cache=True)
def sample_index(probs, rng):
    u = rng.random()
    acc = 0.0
    last = -1
    for i in range(probs.shape[0]):
        p = probs[i]
        if p > 0.0:
            last = i
            acc += p
            if u < acc:
                return i
    # u landed in the rounding gap above the cumulative sum
    return last


@njit(cache=True)
def contains(slate, item):
    for t in range(slate.shape[0]):
        if slate[t] == item:
            return True
    return False


# --------------------------------------------------------------------------
# slate construction


@njit(cache=True)
def sort_small(a, n):
    for i in range(1, n):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


@njit(cache=True)
def greedy_items(row, s, n, out, taken):
    """N smallest entries of ``row`` excluding ``s``; ties go to the lower id."""
    k = row.shape[0]
    for j in range(k):
        taken[j] = False
    for _ in range(n):
        best = -1
        best_v = 0.0
        for j in range(k):
            if j == s or taken[j]:
                continue
            v = row[j]
            if best < 0 or v < best_v:
                best = j
                best_v = v
        taken[best] = True
    c = 0
    for j in range(k):
        if taken[j]:
            out[c] = j
            c += 1


@njit(cache=True)
def argmin_first(row):
    best = 0
    best_v = row[0]
    for i in range(1, row.shape[0]):
        if row[i] < best_v:
            best = i
            best_v = row[i]
    return best


@njit(cache=True)
def random_slate(rng, k, s, n, scratch, out):
    """Uniform N-subset of ``[0, k) minus {s}`` via partial Fisher-Yates."""
    c = 0
    for i in range(k):
        if i != s:
            scratch[c] = i
            c += 1
    m = k - 1
    for i in range(n):
        j = rng.integers(i, m)
        tmp = scratch[i]
        scratch[i] = scratch[j]
        scratch[j] = tmp
    for i in range(n):
        out[i] = scratch[i]
    sort_small(out, n)


def binomial_table(m, n):
    """``B[a, b] = C(a, b)`` for ``a <= m``, ``b <= n`` as int64."""
    table = np.zeros((m + 1, n + 1), dtype=np.int64)
    for a in range(m + 1):
        table[a, 0] = 1
        for b in range(1, min(a, n) + 1):
            table[a, b] = table[a - 1, b - 1] + (table[a - 1, b] if b <= a - 1 else 0)
    return table


@njit(cache=True)
def rank_items(slate, s, k, binom):
    n = slate.shape[0]
    m = k - 1
    colex = 0
    for pos in range(n):
        c = slate[pos]
        if c > s:
            c -= 1
        colex += binom[m - 1 - c, n - pos]
    return binom[m, n] - 1 - colex


# --------------------------------------------------------------------------
# TD updates (in place)


@njit(cache=True)
def vanilla_sarsa_update(table, s, r, cost, s2, r2, gamma, lam):
    table[s, r] += gamma * (cost + lam * table[s2, r2] - table[s, r])


@njit(cache=True)
def vanilla_q_update(table, s, r, cost, s2, gamma, lam):
    boot = table[s2, argmin_first(table[s2])]
    table[s, r] += gamma * (cost + lam * boot - table[s, r])


@njit(cache=True)
def row_min_offdiag(row, s):
    best = np.inf
    for j in range(row.shape[0]):
        if j != s and row[j] < best:
            best = row[j]
    return best


@njit(cache=True)
def slatefree_sarsa_update(table, s, slate, positions, m, item_costs, s2, slate2, gamma, lam):
    n2 = slate2.shape[0]
    acc = 0.0
    for t in range(n2):
        acc += table[s2, slate2[t]]
    boot = acc / n2
    for t in range(m):
        p = positions[t]
        j = slate[p]
        table[s, j] += gamma * (item_costs[p] + lam * boot - table[s, j])


@njit(cache=True)
def slatefree_q_update(table, s, slate, positions, m, cost, s2, gamma, lam):
    boot = row_min_offdiag(table[s2], s2)
    for t in range(m):
        j = slate[positions[t]]
        table[s, j] += gamma * (cost + lam * boot - table[s, j])


@njit(cache=True)
def slateq_update(table, null_q, s, cost, s2, selected, boot_slate, boot_probs, gamma, lam, null_item):
    """Single-entry SlateQ backup; returns the number of entries touched."""
    n = boot_slate.shape[0]
    mass = 0.0
    acc = 0.0
    for t in range(n):
        k = boot_slate[t]
        mass += boot_probs[k]
        acc += boot_probs[k] * table[s2, k]
    if null_item:
        boot = acc + (1.0 - mass) * null_q[s2]
    elif mass > 0.0:
        boot = acc / mass
    else:
        acc = 0.0
        for t in range(n):
            acc += table[s2, boot_slate[t]]
        boot = acc / n
    if selected >= 0:
        table[s, selected] += gamma * (cost + lam * boot - table[s, selected])
        return 1
    if null_item:
        null_q[s] += gamma * (cost + lam * boot - null_q[s])
        return 1
    return 0


# --------------------------------------------------------------------------
# episode loop


@njit(cache=True)
def act(algo, rng, eps, k, n, s, item_q, slate_q, slate_items, binom, out, scratch, taken):
    """Epsilon-greedy slate at ``s`` written to ``out``; returns its rank (vanilla) or -1."""
    vanilla = algo == VANILLA_Q or algo == VANILLA_SARSA
    if rng.random() < eps:
        random_slate(rng, k, s, n, scratch, out)
        if vanilla:
            return rank_items(out, s, k, binom)
        return -1
    if vanilla:
        r = argmin_first(slate_q[s])
        for t in range(n):
            out[t] = slate_items[s, r, t]
        return r
    greedy_items(item_q[s], s, n, out, taken)
    return -1


@njit(cache=True)
def run_episodes(
    algo, k, n, m_updates, gamma, lam, eps,
    costs, penalty, slate_cost,
    variant, alpha, xmask, ymask, full_reject,
    o_variant, o_alpha, o_xmask, o_ymask, o_full_reject,
    item_q, null_q, slate_q, slate_items, binom,
    slateq_null, slateq_greedy_boot,
    start_state, cont, discounted, rng,
    returns, lengths, updates,
    record, trace_steps, trace_slates,
):
    """Simulate ``returns.shape[0]`` episodes, learning online.

    Each step: user picks ``s'``, cost is realised, the next slate is chosen
    at ``s'``, the agent updates, and the episode continues with probability
    ``cont``.  Return per episode is the cost sum, discounted by ``cont``
    per step when ``discounted`` is set.
    """
    n_episodes = returns.shape[0]
    scratch = np.empty(k, dtype=np.int64)
    taken = np.empty(k, dtype=np.bool_)
    probs = np.empty(k)
    probs2 = np.empty(k)
    slate = np.empty(n, dtype=np.int64)
    slate2 = np.empty(n, dtype=np.int64)
    boot_slate = np.empty(n, dtype=np.int64)
    positions = np.arange(n)
    item_costs = np.empty(n)
    m = min(m_updates, n)
    for e in range(n_episodes):
        if start_state < 0:
            s = rng.integers(0, k)
        else:
            s = start_state
        r = act(algo, rng, eps, k, n, s, item_q, slate_q, slate_items, binom, slate, scratch, taken)
        total = 0.0
        disc = 1.0
        t = 0
        count = 0
        while True:
            choice_probs(variant, alpha, xmask, ymask, full_reject, s, slate, probs)
            s2 = sample_index(probs, rng)
            c = costs[s]
            if slate_cost and not contains(slate, s2):
                c += penalty
            total += disc * c
            if discounted:
                disc *= cont
            r2 = act(algo, rng, eps, k, n, s2, item_q, slate_q, slate_items, binom, slate2, scratch, taken)

            if algo == VANILLA_Q:
                vanilla_q_update(slate_q, s, r, c, s2, gamma, lam)
                count += 1
            elif algo == VANILLA_SARSA:
                vanilla_sarsa_update(slate_q, s, r, c, s2, r2, gamma, lam)
                count += 1
            elif algo == SLATEFREE_Q or algo == SLATEFREE_SARSA:
                if m < n:
                    for i in range(n):
                        positions[i] = i
                    for i in range(m):
                        j = rng.integers(i, n)
                        tmp = positions[i]
                        positions[i] = positions[j]
                        positions[j] = tmp
                if algo == SLATEFREE_Q:
                    slatefree_q_update(item_q, s, slate, positions, m, c, s2, gamma, lam)
                else:
                    for i in range(n):
                        item_costs[i] = c
                    slatefree_sarsa_update(
                        item_q, s, slate, positions, m, item_costs, s2, slate2, gamma, lam
                    )
                count += m
            else:
                selected = s2 if contains(slate, s2) else -1
                if slateq_greedy_boot:
                    greedy_items(item_q[s2], s2, n, boot_slate, taken)
                else:
                    for i in range(n):
                        boot_slate[i] = slate2[i]
                choice_probs(o_variant, o_alpha, o_xmask, o_ymask, o_full_reject, s2, boot_slate, probs2)
                count += slateq_update(
                    item_q, null_q, s, c, s2, selected, boot_slate, probs2, gamma, lam, slateq_null
                )

            if record:
                trace_steps.append((e, t, s, s2, c))
                trace_slates.append(slate.copy())
            t += 1
            if rng.random() >= cont:
                break
            s = s2
            r = r2
            for i in range(n):
                slate[i] = slate2[i]
        returns[e] = total
        lengths[e] = t
        updates[e] = count
