import logging

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from .exceptions import NonFiniteInputError

logger = logging.getLogger(__name__)

SOLVED = 'solved'
INFEASIBLE = 'infeasible'
MAX_ITERATIONS = 'max_iterations'


class QpSolution:
    """Primal/dual solution of min 1/2 x'Hx + g'x s.t. A_eq x = b_eq, G x <= h, lb <= x <= ub.

    Multipliers follow the convention H x + g + A_eq' lam + G' mu + mu_ub - mu_lb = 0
    with mu, mu_ub, mu_lb >= 0.
    """
    def __init__(self, x, status, *, iterations=0, lam=None, mu=None, mu_lb=None, mu_ub=None, active=(), kkt=np.inf):
        self.x = x
        self.status = status
        self.iterations = iterations
        self.lam = lam
        self.mu = mu
        self.mu_lb = mu_lb
        self.mu_ub = mu_ub
        self.active = tuple(active)
        self.kkt = kkt

    def __repr__(self):
        return f'QpSolution(status={self.status!r}, iterations={self.iterations}, kkt={self.kkt:.3g})'

    @property
    def success(self):
        return self.status == SOLVED


def qp_solve(H, g, A_eq=None, b_eq=None, *, G=None, h=None, lb=None, ub=None, x0=None, max_iter=200, tol=1e-9):
    """Primal active-set method for a small dense convex QP.

    Starts from ``x0`` when it is feasible, otherwise from a feasible point
    found by a phase-one linear program.  ``active`` in the result indexes the
    rows of the stacked inequalities [G; I (upper bounds); -I (lower bounds)].
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    if H.shape != (n, n):
        raise ValueError(f'H must have shape ({n}, {n}), got {H.shape}')
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
        raise NonFiniteInputError('QP data H and g must be finite')
    H = (H + H.T) / 2
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    G = np.zeros((0, n)) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    h = np.zeros(0) if h is None else np.atleast_1d(np.asarray(h, dtype=float))
    lb = np.full(n, -np.inf) if lb is None else np.broadcast_to(np.asarray(lb, dtype=float), (n,))
    ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, dtype=float), (n,))
    if np.any(lb > ub):
        return QpSolution(np.clip(np.zeros(n), lb, ub), INFEASIBLE)

    upper = np.flatnonzero(np.isfinite(ub))
    lower = np.flatnonzero(np.isfinite(lb))
    eye = np.eye(n)
    C = np.vstack([G, eye[upper], -eye[lower]])
    d = np.concatenate([h, ub[upper], -lb[lower]])
    n_eq = A_eq.shape[0]

    x = _feasible_start(x0, A_eq, b_eq, G, h, lb, ub, C, d, tol)
    if x is None:
        logger.debug('QP phase one found no feasible point')
        return QpSolution(np.clip(np.zeros(n), lb, ub), INFEASIBLE)

    working = []
    multipliers = np.zeros(n_eq)
    status = MAX_ITERATIONS
    iteration = 0
    for iteration in range(1, max_iter + 1):
        A_w = np.vstack([A_eq, C[working]])
        target, multipliers = _solve_eqp(H, g, A_w, np.concatenate([b_eq, d[working]]))
        p = target - x
        if np.max(np.abs(p), initial=0.0) <= tol * max(1.0, np.max(np.abs(x), initial=0.0)):
            x = target
            mu_w = multipliers[n_eq:]
            if not working or mu_w.min() >= -tol:
                status = SOLVED
                break
            working.pop(int(np.argmin(mu_w)))
            continue
        Cp = C @ p
        slack = d - C @ x
        alpha, blocking = 1.0, None
        for i in np.flatnonzero(Cp > tol * max(1.0, np.max(np.abs(p)))):
            if i in working:
                continue
            step = max(slack[i], 0.0) / Cp[i]
            if step < alpha:
                alpha, blocking = step, i
        x = x + alpha * p
        if blocking is not None:
            working.append(int(blocking))

    mu = np.zeros(C.shape[0])
    if working:
        mu[working] = multipliers[n_eq:]
    lam = multipliers[:n_eq]
    if status == SOLVED:
        # clamp round-off so bounds hold exactly
        x = np.clip(x, lb, ub)
    m_g = G.shape[0]
    mu_ub = np.zeros(n)
    mu_lb = np.zeros(n)
    mu_ub[upper] = mu[m_g:m_g + len(upper)]
    mu_lb[lower] = mu[m_g + len(upper):]
    stationarity = H @ x + g + A_eq.T @ lam + C.T @ mu
    infeasibility = max(np.max(C @ x - d, initial=0.0), np.max(np.abs(A_eq @ x - b_eq), initial=0.0))
    complementarity = np.max(np.abs(mu * (d - C @ x)), initial=0.0)
    kkt = float(max(np.max(np.abs(stationarity), initial=0.0), infeasibility, complementarity))
    if status != SOLVED:
        logger.debug('QP stopped after %d iterations with KKT residual %.3g', iteration, kkt)
    return QpSolution(
        x, status, iterations=iteration, lam=lam, mu=mu[:m_g], mu_lb=mu_lb, mu_ub=mu_ub, active=sorted(working),
        kkt=kkt,
    )


def _solve_eqp(H, g, A, b):
    """Solve min 1/2 x'Hx + g'x s.t. A x = b; returns (x, multipliers)"""
    n, m = H.shape[0], A.shape[0]
    kkt = np.block([
        [H, A.T],
        [A, np.zeros((m, m))],
    ])
    rhs = np.concatenate([-g, b])
    try:
        solution = linalg.solve(kkt, rhs, assume_a='sym')
    except linalg.LinAlgError:
        solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return solution[:n], solution[n:]


def _is_feasible(x, A_eq, b_eq, C, d, tol):
    scale = max(1.0, np.max(np.abs(x), initial=0.0))
    return (
        np.all(C @ x <= d + tol * scale)
        and np.all(np.abs(A_eq @ x - b_eq) <= tol * scale)
    )


def _feasible_start(x0, A_eq, b_eq, G, h, lb, ub, C, d, tol):
    n = C.shape[1]
    if x0 is not None:
        x = np.clip(np.asarray(x0, dtype=float), lb, ub)
        if _is_feasible(x, A_eq, b_eq, C, d, tol):
            return x
    if A_eq.shape[0] == 0 and G.shape[0] == 0:
        return np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None) for lo, hi in zip(lb, ub)]
    result = linprog(
        np.zeros(n),
        A_ub=G if G.shape[0] else None,
        b_ub=h if G.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=bounds,
        method='highs',
        options={'primal_feasibility_tolerance': 1e-10},
    )
    if result.status != 0:
        return None
    return np.clip(result.x, lb, ub)
