"""Coupled generalized Riccati machinery for the mixed H2/Hinf game.

The solution of the two-player problem is a pair (P1, P2) of symmetric
matrices satisfying coupled fixed-point equations whose gains come from one
stacked linear solve.  The value recursion from (0, 0),

    P1+ = A(P1, K1, K2) - Q - K2'K2 + g^2 K1'K1,
    P2+ = A(P2, K1, K2) + Q + K2'K2,

with A(X, Y1, Y2) the closed-loop quadratic map, converges monotonically
(P1 nonincreasing, P2 nondecreasing) for feasible gamma.  Mean-square
stability of a realized closed loop is certified through the spectral
radius of the Kronecker second-moment map.
"""

from dataclasses import dataclass

import numpy as np

from .model import (
    AttenuationInfeasibleError,
    ConvergenceError,
    CostSpec,
    GainExtractionError,
    GainPair,
    SdltiSystem,
    ValuePair,
    symmetrize,
)

_PD_TOL = 1e-12


def closed_loop_quadratic_map(sys, X, Y1, Y2):
    """A(X, Y1, Y2) = (A2+C2Y1)'X(A2+C2Y1) + (A1+B1Y2+C1Y1)'X(A1+B1Y2+C1Y1)."""
    X = np.asarray(X, dtype=float)
    if X.shape != (sys.n, sys.n):
        raise ValueError(f"X must be {sys.n}x{sys.n}, got {X.shape}")
    Ad = sys.A1 + sys.B1 @ Y2 + sys.C1 @ Y1
    An = sys.A2 + sys.C2 @ Y1
    return symmetrize(An.T @ X @ An + Ad.T @ X @ Ad)


def _delta_blocks(sys, cost, vals):
    P1, P2 = vals.P1, vals.P2
    g2 = cost.gamma**2
    D1 = g2 * np.eye(sys.m2) + sys.C2.T @ P1 @ sys.C2 + sys.C1.T @ P1 @ sys.C1
    D2 = np.eye(sys.m1) + sys.B1.T @ P2 @ sys.B1
    return D1, D2


def gains_from_values(sys, cost, vals):
    """Solve the stacked system for (K1, K2) at the current (P1, P2).

    The stack is [[Delta1, C1'P1B1], [B1'P2C1, Delta2]] against
    -[C1'P1A1 + C2'P1A2; B1'P2A1].  Delta1 and Delta2 must be positive
    definite; losing that signals the attenuation level is infeasible.
    """
    P1, P2 = vals.P1, vals.P2
    D1, D2 = _delta_blocks(sys, cost, vals)
    for name, D in (("Delta1", D1), ("Delta2", D2)):
        if float(np.linalg.eigvalsh(symmetrize(D)).min()) <= _PD_TOL:
            raise AttenuationInfeasibleError(
                f"{name} is not positive definite; gamma={cost.gamma} too small"
            )
    blk = np.block(
        [
            [D1, sys.C1.T @ P1 @ sys.B1],
            [sys.B1.T @ P2 @ sys.C1, D2],
        ]
    )
    rhs = -np.vstack(
        [
            sys.C1.T @ P1 @ sys.A1 + sys.C2.T @ P1 @ sys.A2,
            sys.B1.T @ P2 @ sys.A1,
        ]
    )
    try:
        KK = np.linalg.solve(blk, rhs)
    except np.linalg.LinAlgError as exc:
        raise GainExtractionError(f"stacked gain system is singular: {exc}") from exc
    return GainPair(KK[: sys.m2], KK[sys.m2 :])


def vi_value_update(sys, cost, vals, gains):
    """One value-iteration sweep using the supplied (current) gains."""
    K1, K2 = gains.K1, gains.K2
    g2 = cost.gamma**2
    P1n = (
        closed_loop_quadratic_map(sys, vals.P1, K1, K2)
        - cost.Q
        - K2.T @ K2
        + g2 * (K1.T @ K1)
    )
    P2n = closed_loop_quadratic_map(sys, vals.P2, K1, K2) + cost.Q + K2.T @ K2
    return ValuePair(symmetrize(P1n), symmetrize(P2n))


def qlearn_value_update(sys, cost, vals):
    """Gain improvement then value sweep: the recursion the learner mirrors."""
    gains = gains_from_values(sys, cost, vals)
    return vi_value_update(sys, cost, vals, gains), gains


def gare_residuals(sys, cost, vals, gains):
    """Left-hand sides of the two coupled equations at (P1, P2, K1, K2).

    Both come back as symmetric matrices; zero at an exact solution.
    """
    P1, P2 = vals.P1, vals.P2
    K1, K2 = gains.K1, gains.K2
    g2 = cost.gamma**2
    D1, D2 = _delta_blocks(sys, cost, vals)
    Au = sys.A1 + sys.B1 @ K2
    M1 = Au.T @ P1 @ sys.C1 + sys.A2.T @ P1 @ sys.C2
    try:
        S1 = M1 @ np.linalg.solve(D1, M1.T)
    except np.linalg.LinAlgError as exc:
        raise AttenuationInfeasibleError(f"Delta1 is singular: {exc}") from exc
    R1 = -P1 + Au.T @ P1 @ Au - cost.Q + sys.A2.T @ P1 @ sys.A2 - K2.T @ K2 - S1

    Av = sys.A1 + sys.C1 @ K1
    An = sys.A2 + sys.C2 @ K1
    M2 = Av.T @ P2 @ sys.B1
    try:
        S2 = M2 @ np.linalg.solve(D2, M2.T)
    except np.linalg.LinAlgError as exc:
        raise AttenuationInfeasibleError(f"Delta2 is singular: {exc}") from exc
    R2 = -P2 + Av.T @ P2 @ Av + cost.Q + An.T @ P2 @ An - S2
    return symmetrize(R1), symmetrize(R2)


def ms_radius(Abar1, Abar2):
    """Spectral radius of the second-moment map X -> Abar1'XAbar1 + Abar2'XAbar2."""
    Abar1 = np.asarray(Abar1, dtype=float)
    Abar2 = np.asarray(Abar2, dtype=float)
    if Abar1.shape != Abar2.shape or Abar1.shape[0] != Abar1.shape[1]:
        raise ValueError("Abar1 and Abar2 must be square and same-shaped")
    T = np.kron(Abar1, Abar1) + np.kron(Abar2, Abar2)
    return float(np.abs(np.linalg.eigvals(T)).max())


def ms_stable(Abar1, Abar2):
    """True iff the closed loop is asymptotically stable in the mean square."""
    return ms_radius(Abar1, Abar2) < 1.0


def closed_loop_pair(sys, gains):
    """Drift and noise matrices of the loop u = K2 x, v = K1 x."""
    Abar1 = sys.A1 + sys.B1 @ gains.K2 + sys.C1 @ gains.K1
    Abar2 = sys.A2 + sys.C2 @ gains.K1
    return Abar1, Abar2


@dataclass(frozen=True)
class SolveReport:
    """Fixed-point solve outcome with per-iteration diagnostics.

    history rows are (dP1_fro, dP2_fro, res1_fro, res2_fro), one per
    iteration; residual_norms repeats the final row's residuals recomputed
    from scratch at the returned (values, gains).
    """

    values: ValuePair
    gains: GainPair
    iterations: int
    residual_norms: tuple
    history: tuple
    stable: bool

    def to_csv(self, path):
        lines = ["iter,dP1_fro,dP2_fro,res1_fro,res2_fro"]
        for i, row in enumerate(self.history, start=1):
            lines.append(f"{i}," + ",".join(f"{x:.12g}" for x in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def solve_coupled_gare(sys, cost, tol=1e-9, max_iters=5000):
    """Iterate the coupled value recursion from (0, 0) to its fixed point.

    Stops when both Frobenius iterate differences fall below tol; raises
    ConvergenceError(report attached) if max_iters is exhausted first.
    """
    vals = ValuePair.zeros(sys.n)
    gains = GainPair.zeros(sys.n, sys.m1, sys.m2)
    history = []
    for i in range(1, max_iters + 1):
        nxt, gains = qlearn_value_update(sys, cost, vals)
        d1 = float(np.linalg.norm(nxt.P1 - vals.P1))
        d2 = float(np.linalg.norm(nxt.P2 - vals.P2))
        R1, R2 = gare_residuals(sys, cost, nxt, gains)
        history.append((d1, d2, float(np.linalg.norm(R1)), float(np.linalg.norm(R2))))
        vals = nxt
        if d1 < tol and d2 < tol:
            res = history[-1][2], history[-1][3]
            stable = ms_stable(*closed_loop_pair(sys, gains))
            return SolveReport(vals, gains, i, res, tuple(history), stable)
    report = SolveReport(
        vals,
        gains,
        max_iters,
        (history[-1][2], history[-1][3]),
        tuple(history),
        ms_stable(*closed_loop_pair(sys, gains)),
    )
    err = ConvergenceError(
        f"no fixed point within {max_iters} iterations (tol={tol:g}); "
        f"last dP=({history[-1][0]:.3e}, {history[-1][1]:.3e})"
    )
    err.report = report
    raise err


def fixed_policy_value_sequence(sys, cost, eta1, eta2, iters):
    """Value sequence of the frozen policy (eta1, eta2) from zero init.

    Returns the whole list [(0,0), step1, ..., step_iters]; used by the
    comparison arguments that sandwich the optimal recursion.
    """
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    gains = GainPair(eta1, eta2)
    seq = [ValuePair.zeros(sys.n)]
    for _ in range(iters):
        seq.append(vi_value_update(sys, cost, seq[-1], gains))
    return seq


def random_feasible_system(rng, n=3, m1=1, m2=1, gamma=5.0, max_tries=200):
    """Draw a random system the solver provably handles; rejection-sampled.

    A1 is scaled to spectral radius 0.9, A2 so the open-loop second-moment
    radius stays below 0.95, and the input/disturbance columns are kept
    small.  Retries until solve_coupled_gare converges feasibly.
    """
    for _ in range(max_tries):
        A1 = rng.standard_normal((n, n))
        A1 *= 0.9 / max(np.abs(np.linalg.eigvals(A1)).max(), 1e-12)
        A2 = 0.3 * rng.standard_normal((n, n))
        for _ in range(30):
            if ms_radius(A1, A2) < 0.95:
                break
            A2 *= 0.7
        else:
            continue
        B1 = 0.1 * rng.standard_normal((n, m1))
        C1 = 0.1 * rng.standard_normal((n, m2))
        C2 = 0.1 * rng.standard_normal((n, m2))
        sys = SdltiSystem(A1, A2, B1, C1, C2)
        cost = CostSpec(gamma, np.eye(n))
        try:
            solve_coupled_gare(sys, cost, tol=1e-9, max_iters=3000)
        except (AttenuationInfeasibleError, ConvergenceError, GainExtractionError):
            continue
        return sys, cost
    raise RuntimeError(f"no feasible random system found in {max_tries} tries")
