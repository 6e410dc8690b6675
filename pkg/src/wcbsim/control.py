"""Controller design for the pool string.

The design model has 15 states ordered (x1_1..x1_5, x2_1..x2_5, x3_1..x3_5):
level deviation, a first-order surrogate for the delayed inflow, and the
level integral. Two delay surrogates are supported:

  "pade"  x1' = (1/tau) x2 - (1/alpha)(u_i + u_{i+1} + d_i),
          x2' = -(2/tau) x2 + (4/alpha) u_i
          (Pade(1,1) of the transport delay; non-minimum-phase)

  "lag"   x1' = (1/tau) x2 - (1/alpha)(u_{i+1} + d_i),
          x2' = -(2/tau) x2 + (2/alpha) u_i
          (first-order lag; the variant shipped in the presets, see README)

Both give the same DC mass balance: a steady inflow u_i raises pool i at
u_i/alpha_i and drains it through gate i+1 at u_{i+1}/alpha_i. The gain is
synthesized by a Newton-Kleinman iteration on the continuous algebraic
Riccati equation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from .pools import N_POOLS, PoolParams

N_DESIGN_STATES = 3 * N_POOLS


class NoStabilizingSolution(RuntimeError):
    """The Riccati iteration failed to produce a stabilizing solution."""


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    delay_approx: str = "pade"


@dataclass(frozen=True)
class LqrWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        qd = np.diag(self.Q)
        rd = np.diag(self.R)
        if not (np.allclose(self.Q, np.diag(qd)) and np.allclose(self.R, np.diag(rd))):
            raise ValueError("Q and R must be diagonal")
        if (qd < 0).any() or (rd <= 0).any():
            raise ValueError("Q must be PSD and R PD")


@dataclass(frozen=True)
class ControllerGain:
    """Raw Riccati gain K = R^-1 B' P plus the sign making u = sign*K*x stabilizing."""

    K: np.ndarray
    sign: float
    rho: float

    @property
    def effective(self) -> np.ndarray:
        return self.sign * self.K


# LQR weights: level deviations, nothing on the flow surrogates, gentle integral action
DEFAULT_Q_DIAG = np.array([1250.0, 1250.0, 2500.0, 5000.0, 7500.0]
                          + [0.0] * 5
                          + [1.25, 1.25, 2.5, 5.0, 7.5])
DEFAULT_WEIGHTS = LqrWeights(Q=np.diag(DEFAULT_Q_DIAG), R=np.eye(N_POOLS))


def build_state_space(pools: tuple[PoolParams, ...], delay_approx: str = "pade") -> StateSpaceModel:
    if delay_approx not in ("pade", "lag"):
        raise ValueError(f"unknown delay approximation {delay_approx!r}")
    A = np.zeros((N_DESIGN_STATES, N_DESIGN_STATES))
    B = np.zeros((N_DESIGN_STATES, N_POOLS))
    E = np.zeros((N_DESIGN_STATES, N_POOLS))
    for i, p in enumerate(pools):
        A[i, N_POOLS + i] = 1.0 / p.tau
        A[N_POOLS + i, N_POOLS + i] = -2.0 / p.tau
        A[2 * N_POOLS + i, i] = 1.0
        if delay_approx == "pade":
            B[i, i] += -1.0 / p.alpha
            B[N_POOLS + i, i] = 4.0 / p.alpha
        else:
            B[N_POOLS + i, i] = 2.0 / p.alpha
        if i + 1 < N_POOLS:
            B[i, i + 1] += -1.0 / p.alpha
        E[i, i] = -1.0 / p.alpha
    return StateSpaceModel(A=A, B=B, E=E, delay_approx=delay_approx)


def spectral_abscissa(M: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(M).real))


def _stabilizing_initial_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Initial gain for the Newton iteration via eigenvalue-shifted pole placement."""
    if spectral_abscissa(A) < 0:
        return np.zeros((B.shape[1], A.shape[0]))
    eigs = np.linalg.eigvals(A)
    shift = max(0.05, 2.0 * abs(eigs.real).max())
    # push every non-negative real part strictly into the left half plane,
    # perturbing slightly to avoid repeated targets that place_poles rejects
    targets = []
    for k, ev in enumerate(eigs):
        re = ev.real if ev.real < -1e-9 else -shift * (1.0 + 0.01 * k)
        targets.append(complex(re, ev.imag))
    targets = _conjugate_paired(targets)
    with warnings.catch_warnings():
        # the placement optimizer grumbles about its own tolerance even when
        # the result is comfortably stabilizing, which is all we need here
        warnings.simplefilter("ignore", UserWarning)
        placed = scipy.signal.place_poles(A, B, np.array(targets))
    K0 = placed.gain_matrix
    if spectral_abscissa(A - B @ K0) >= 0:
        raise NoStabilizingSolution("pole placement failed to stabilize (A, B)")
    return K0


def _conjugate_paired(targets):
    # place_poles requires complex targets in conjugate pairs
    out = []
    used = [False] * len(targets)
    for i, t in enumerate(targets):
        if used[i]:
            continue
        if abs(t.imag) < 1e-12:
            out.append(complex(t.real, 0.0))
            used[i] = True
            continue
        for j in range(i + 1, len(targets)):
            if not used[j] and abs(targets[j].conjugate() - t) < 1e-6 * max(1.0, abs(t)):
                out.extend([t, t.conjugate()])
                used[i] = used[j] = True
                break
        else:
            out.append(complex(t.real, 0.0))
            used[i] = True
    return out


def solve_care(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray,
               max_iter: int = 60, rel_tol: float = 1e-10) -> np.ndarray:
    """Stabilizing solution of A'P + PA - P B R^-1 B' P + Q = 0.

    Newton-Kleinman: each iterate solves the Lyapunov equation of the
    current closed loop, giving quadratic convergence from a stabilizing
    start. Raises NoStabilizingSolution when no stabilizing P exists
    (including the degenerate Q=0 case with a non-Hurwitz plant).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    Rinv = np.linalg.inv(R)

    K = _stabilizing_initial_gain(A, B)
    P_prev = None
    for _ in range(max_iter):
        Acl = A - B @ K
        # Lyapunov step: Acl' P + P Acl = -(Q + K' R K)
        P = scipy.linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K = Rinv @ B.T @ P
        if P_prev is not None:
            if np.linalg.norm(P - P_prev, "fro") <= rel_tol * max(1.0, np.linalg.norm(P, "fro")):
                break
        P_prev = P
    else:
        raise NoStabilizingSolution("Newton iteration did not converge")

    if spectral_abscissa(A - B @ (Rinv @ B.T @ P)) >= 0:
        raise NoStabilizingSolution("converged P is not stabilizing")
    resid = A.T @ P + P @ A - P @ B @ Rinv @ B.T @ P + Q
    if np.linalg.norm(resid, "fro") > 1e-8 * max(np.linalg.norm(Q, "fro"), 1e-300):
        raise NoStabilizingSolution(
            f"CARE residual too large: {np.linalg.norm(resid, 'fro'):.3e}")
    return P


def lqr_gain(model: StateSpaceModel, weights: LqrWeights) -> ControllerGain:
    P = solve_care(model.A, model.B, weights.Q, weights.R)
    K = np.linalg.solve(weights.R, model.B.T @ P)
    # resolve the application sign by checking which loop is Hurwitz
    for sign in (-1.0, 1.0):
        abscissa = spectral_abscissa(model.A + sign * model.B @ K)
        if abscissa < 0:
            return ControllerGain(K=K, sign=sign, rho=-abscissa)
    raise NoStabilizingSolution("neither sign of the gain stabilizes the loop")


def control_law(gain: ControllerGain, xhat: np.ndarray) -> np.ndarray:
    xhat = np.asarray(xhat, dtype=float)
    if xhat.shape != (gain.K.shape[1],):
        raise ValueError(f"state estimate must have shape ({gain.K.shape[1]},)")
    if not np.all(np.isfinite(xhat)):
        raise ValueError("state estimate contains non-finite entries")
    return gain.effective @ xhat
