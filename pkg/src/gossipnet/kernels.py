"""Hot loops of the simulators, specialised to quadratic local functions.

Every function here is written as plain Python over numpy arrays and wrapped
with :func:`gossipnet._accel.kernel`, so it runs compiled under numba or as
ordinary Python when the JIT is disabled. Both paths produce identical floats.

Quadratic conventions: ``f_i(x) = (a_i/2)||x - c_i||^2``, so the primal point of
dual ``w_i`` is ``w_i / a_i + c_i``.
"""

import math

import numpy as np

from ._accel import kernel

# activation outcomes in the loss-network filter
DROPPED = 0
FAILED = 1
ACCEPTED = 2


@kernel
def rlnm_filter(times, edges, flips, eu, ev, tau, eps, busy, status, initiator):
    """Apply busy-locking to a chunk of candidate ticks.

    A tick on edge ``k`` at time ``t`` is initiated by ``eu[k]`` when
    ``flips < 0.5`` and by ``ev[k]`` otherwise. ``busy`` holds per-node lock
    expiry times and is updated in place; ``status`` and ``initiator`` receive
    the outcome and initiating node of every tick.
    """
    for q in range(times.shape[0]):
        t = times[q]
        k = edges[q]
        if flips[q] < 0.5:
            i = eu[k]
            j = ev[k]
        else:
            i = ev[k]
            j = eu[k]
        initiator[q] = i
        if t < busy[i]:
            status[q] = DROPPED
        elif t < busy[j]:
            busy[i] = t + eps * tau[k]
            status[q] = FAILED
        else:
            end = t + (1.0 + eps) * tau[k]
            busy[i] = end
            busy[j] = end
            status[q] = ACCEPTED


@kernel
def node_gap(w, ws, a, c):
    """``f^*(w) - f^*(ws)`` for one node, written to avoid cancellation."""
    s = 0.0
    for r in range(w.shape[0]):
        s += (w[r] - ws[r]) * ((w[r] + ws[r]) / (2.0 * a) + c[r])
    return s


@kernel
def quad_metrics(w, a, c, xstar, vstar):
    """Dual gap, squared distance to ``x*`` and consensus spread of a dual field."""
    n = w.shape[0]
    d = w.shape[1]
    gap = 0.0
    perr = 0.0
    mean = np.zeros(d)
    for i in range(n):
        gap += node_gap(w[i], vstar[i], a[i], c[i])
        for r in range(d):
            x = w[i, r] / a[i] + c[i, r]
            perr += (x - xstar[r]) ** 2
            mean[r] += x
    for r in range(d):
        mean[r] /= n
    cerr = 0.0
    for i in range(n):
        for r in range(d):
            x = w[i, r] / a[i] + c[i, r]
            cerr += (x - mean[r]) ** 2
    return max(gap, 0.0), perr, cerr


@kernel
def _mix(u, v, i, h):
    for r in range(u.shape[1]):
        du = h * (v[i, r] - u[i, r])
        u[i, r] += du
        v[i, r] -= du


@kernel
def cdm_quad_run(v, a, c, xstar, vstar, eu, ev, times, edges, rec_times, rec_pos,
                 out, node_gaps, gap_total, log_gap, flush_all):
    """Run dual coordinate steps over accepted activations.

    ``out`` is ``(R, 3)`` for (gap, primal error, consensus error); rows are
    filled for every record time strictly before the next activation.
    ``node_gaps``/``gap_total`` carry the incremental per-activation gap when
    ``log_gap`` is non-empty. Returns the next record position.
    """
    n = v.shape[0]
    d = v.shape[1]
    R = rec_times.shape[0]
    logging = log_gap.shape[0] > 0
    for q in range(times.shape[0]):
        t = times[q]
        while rec_pos < R and rec_times[rec_pos] < t:
            g, p, s = quad_metrics(v, a, c, xstar, vstar)
            out[rec_pos, 0] = g
            out[rec_pos, 1] = p
            out[rec_pos, 2] = s
            rec_pos += 1
        k = edges[q]
        i = eu[k]
        j = ev[k]
        denom = 1.0 / a[i] + 1.0 / a[j]
        for r in range(d):
            diff = (v[i, r] / a[i] + c[i, r]) - (v[j, r] / a[j] + c[j, r])
            step = diff / denom
            v[i, r] -= step
            v[j, r] += step
        if logging:
            gi = node_gap(v[i], vstar[i], a[i], c[i])
            gj = node_gap(v[j], vstar[j], a[j], c[j])
            gap_total[0] += gi - node_gaps[i] + gj - node_gaps[j]
            node_gaps[i] = gi
            node_gaps[j] = gj
            gap_total[1] += 1.0
            if gap_total[1] >= n:
                # periodic exact resummation bounds the drift of the running total
                tot = 0.0
                for m in range(n):
                    tot += node_gaps[m]
                gap_total[0] = tot
                gap_total[1] = 0.0
            log_gap[q] = max(gap_total[0], 0.0)
    if flush_all:
        while rec_pos < R:
            g, p, s = quad_metrics(v, a, c, xstar, vstar)
            out[rec_pos, 0] = g
            out[rec_pos, 1] = p
            out[rec_pos, 2] = s
            rec_pos += 1
    return rec_pos


@kernel
def _cacdm_record(u, v, last, a, c, xstar, vstar, rate, t, out_row, su, sv, rec_states, slot):
    n = u.shape[0]
    uu = u.copy()
    vv = v.copy()
    for m in range(n):
        h = -0.5 * math.expm1(-2.0 * rate * (t - last[m]))
        _mix(uu, vv, m, h)
    g, p, s = quad_metrics(uu, a, c, xstar, vstar)
    out_row[0] = g
    out_row[1] = p
    out_row[2] = s
    if rec_states:
        su[slot] = uu
        sv[slot] = vv


@kernel
def cacdm_quad_run(u, v, last, a, c, xstar, vstar, rate, kappa, eu, ev, times, edges,
                   rec_times, rec_pos, out, state_u, state_v, log_gap, flush_all):
    """Run accelerated steps with lazy per-node contraction.

    ``state_u``/``state_v`` are ``(R, n, d)`` snapshots of the fully contracted
    pair at record times, or empty to skip them. ``log_gap`` receives the
    contracted dual gap after each activation when non-empty.
    """
    n = u.shape[0]
    d = u.shape[1]
    R = rec_times.shape[0]
    keep = state_u.shape[0] > 0
    logging = log_gap.shape[0] > 0
    for q in range(times.shape[0]):
        t = times[q]
        while rec_pos < R and rec_times[rec_pos] < t:
            _cacdm_record(u, v, last, a, c, xstar, vstar, rate, rec_times[rec_pos],
                          out[rec_pos], state_u, state_v, keep, rec_pos)
            rec_pos += 1
        k = edges[q]
        i = eu[k]
        j = ev[k]
        _mix(u, v, i, -0.5 * math.expm1(-2.0 * rate * (t - last[i])))
        _mix(u, v, j, -0.5 * math.expm1(-2.0 * rate * (t - last[j])))
        last[i] = t
        last[j] = t
        denom = 1.0 / a[i] + 1.0 / a[j]
        for r in range(d):
            g = (u[i, r] / a[i] + c[i, r]) - (u[j, r] / a[j] + c[j, r])
            step = g / denom
            u[i, r] -= step
            u[j, r] += step
            v[i, r] -= kappa * g
            v[j, r] += kappa * g
        if logging:
            gap = 0.0
            for m in range(n):
                h = -0.5 * math.expm1(-2.0 * rate * (t - last[m]))
                wm = u[m] + h * (v[m] - u[m])
                gap += node_gap(wm, vstar[m], a[m], c[m])
            log_gap[q] = max(gap, 0.0)
    if flush_all:
        while rec_pos < R:
            _cacdm_record(u, v, last, a, c, xstar, vstar, rate, rec_times[rec_pos],
                          out[rec_pos], state_u, state_v, keep, rec_pos)
            rec_pos += 1
    return rec_pos


@kernel
def window_violations(seq, num_edges, T, stride, gap_limit, adj_ptr, adj_idx, count_limit):
    """Check the three window conditions on a discrete activation sequence.

    For each window ``[s, s + T)`` with ``s`` a multiple of ``stride``:
    bit 0 marks an edge missing from the window, bit 1 a run of more than
    ``gap_limit[e]`` activations without edge ``e``, bit 2 an adjacent edge
    ``f`` firing more than ``count_limit[e, f]`` times between consecutive
    activations of ``e``. Runs touching the window border are clipped to it.
    Returns one bitmask per window.
    """
    K = seq.shape[0]
    nwin = (K - T) // stride + 1 if K >= T else 0
    flags = np.zeros(nwin, dtype=np.int64)
    last = np.empty(num_edges, dtype=np.int64)
    counts = np.zeros((num_edges, num_edges), dtype=np.int64)
    for w in range(nwin):
        s0 = w * stride
        for e in range(num_edges):
            last[e] = s0 - 1
        for e in range(num_edges):
            for p in range(adj_ptr[e], adj_ptr[e + 1]):
                counts[e, adj_idx[p]] = 0
        bits = 0
        for s in range(s0, s0 + T):
            e = seq[s]
            # e's run closes: check gap and neighbour counts accumulated since its last firing
            if s - last[e] - 1 > gap_limit[e]:
                bits |= 2
            for p in range(adj_ptr[e], adj_ptr[e + 1]):
                f = adj_idx[p]
                if counts[e, f] > count_limit[e, p - adj_ptr[e]]:
                    bits |= 4
                counts[e, f] = 0
            last[e] = s
            # e fires inside the open run of every edge adjacent to it
            for p in range(adj_ptr[e], adj_ptr[e + 1]):
                f = adj_idx[p]
                counts[f, e] += 1
        end = s0 + T
        for e in range(num_edges):
            if last[e] < s0:
                bits |= 1
            if end - last[e] - 1 > gap_limit[e]:
                bits |= 2
            for p in range(adj_ptr[e], adj_ptr[e + 1]):
                if counts[e, adj_idx[p]] > count_limit[e, p - adj_ptr[e]]:
                    bits |= 4
        flags[w] = bits
    return flags
