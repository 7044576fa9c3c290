"""Pure numpy versions of the compiled kernels in ``_ckernels``."""
import numpy as np


def divergence_gap_scan(p_pts, p_negent, p_ent, q_log, q_ent, cell_start, cell_logmax,
                        cell_hmin, cell_hmax, eta, threshold):
    violations = 0
    evaluated = 0
    best = np.inf
    with np.errstate(invalid="ignore"):
        for a in range(p_pts.shape[0]):
            p, hp = p_pts[a], p_ent[a]
            live = p > 0
            reach = ~((cell_hmin > hp - eta) & (cell_hmax < hp + eta))
            lb = p_negent[a] - cell_logmax[:, live] @ p[live]
            cells = np.nonzero(reach & np.isfinite(lb) & (lb <= threshold + 1e-12))[0]
            for c in cells:
                lo, hi = cell_start[c], cell_start[c + 1]
                hq = q_ent[lo:hi]
                elig = ~((hq > hp - eta) & (hq < hp + eta))
                cross = -(q_log[lo:hi][:, live] @ p[live])
                dv = p_negent[a] + cross[elig]
                dv = dv[np.isfinite(dv)]
                if dv.size:
                    evaluated += dv.size
                    best = min(best, float(dv.min()))
                    violations += int(np.sum(dv < threshold))
    return violations, best, evaluated


def _inverse(perm):
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def orbit_values(table, n_symbols, length, perms):
    f = np.asarray(table).reshape((n_symbols,) * length)
    return np.stack([f.transpose(_inverse(np.asarray(p))).reshape(-1) for p in perms])


def orbit_mean(table, n_symbols, length, perms):
    f = np.asarray(table).reshape((n_symbols,) * length)
    acc = np.zeros(f.size)
    for p in perms:
        acc += f.transpose(_inverse(np.asarray(p))).reshape(-1)
    return acc / len(perms)
