"""Continuous-time simulation of the pool string.

Each pool follows the third-order wave model

    (alpha/w^2) (y''' + 2 zeta w y'' + w^2 y') = u_i(t - tau_i) - u_{i+1}(t) - d_i(t)

with w the natural wave frequency, u_i the controlled flow over gate i
(u_6 = 0) and d_i the off-take disturbance. Levels y are deviations from
setpoint. Two auxiliary states are co-integrated for the benefit of the
sensor stubs: x2 (a low-pass filter on the gate flow) and x3 (the running
integral of the level deviation).

Integration is classical fixed-step RK4. Because the dynamics are LTI and
all inputs are zero-order held on the step grid, one RK4 step is an affine
map; `PlantStepper` exploits this to advance whole constant-input segments
with cached matrix powers while producing the same trajectory as repeated
`wis_step` calls (up to float round-off).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pools import N_POOLS, PoolParams

STATES_PER_POOL = 5          # y, ydot, yddot, x2, x3
N_STATES = N_POOLS * STATES_PER_POOL
N_INPUTS = 3 * N_POOLS       # delayed gate flows, applied gate flows, disturbances

X2_GAIN_NUMERATOR = {"pade": 4.0, "lag": 2.0}


class NonFiniteState(RuntimeError):
    """The plant state left the finite range (diverged or NaN)."""


@dataclass
class DisturbanceSchedule:
    """Piecewise-constant off-take steps: (time [min], pool index 0-based, flow)."""

    steps: list[tuple[float, int, float]] = field(default_factory=list)

    def __post_init__(self):
        times = [t for t, _, _ in self.steps]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("disturbance step times must be strictly increasing")
        if any(flow < 0 for _, _, flow in self.steps):
            raise ValueError("off-take flows must be non-negative")

    def disturbance_at(self, t: float) -> np.ndarray:
        d = np.zeros(N_POOLS)
        for time, pool, flow in self.steps:
            if t >= time:
                d[pool] = flow
        return d


def plant_matrices(pools: tuple[PoolParams, ...], x2_realization: str = "pade"):
    """Continuous-time (A, B) of the stacked pool dynamics.

    State order is pool-major (y, ydot, yddot, x2, x3); input order is
    [u_delayed(1..5), u_applied(1..5), d(1..5)].
    """
    A = np.zeros((N_STATES, N_STATES))
    B = np.zeros((N_STATES, N_INPUTS))
    x2_num = X2_GAIN_NUMERATOR[x2_realization]
    for i, p in enumerate(pools):
        o = STATES_PER_POOL * i
        w = p.omega_n
        A[o, o + 1] = 1.0
        A[o + 1, o + 2] = 1.0
        A[o + 2, o + 1] = -(w**2)
        A[o + 2, o + 2] = -2.0 * p.zeta * w
        g = w**2 / p.alpha
        B[o + 2, i] = g                          # delayed inflow raises the level
        if i + 1 < N_POOLS:
            B[o + 2, N_POOLS + i + 1] = -g       # downstream gate drains instantly
        B[o + 2, 2 * N_POOLS + i] = -g           # off-take withdrawal
        A[o + 3, o + 3] = -2.0 / p.tau
        B[o + 3, N_POOLS + i] = x2_num / p.alpha
        A[o + 4, o] = 1.0                        # x3 integrates the level deviation
    return A, B


@dataclass
class WisPlantState:
    """Plant state plus per-gate delay ring buffers of applied flows."""

    pools: tuple[PoolParams, ...]
    dt: float
    y: np.ndarray
    ydot: np.ndarray
    yddot: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    delay_buffers: list[np.ndarray]
    t: float = 0.0
    x2_realization: str = "pade"

    @classmethod
    def initial(cls, pools: tuple[PoolParams, ...], dt: float, y0=0.0,
                u0: float = 0.0, x2_realization: str = "pade") -> "WisPlantState":
        _check_dt(pools, dt)
        y = np.full(N_POOLS, y0, dtype=float) if np.isscalar(y0) else np.asarray(y0, dtype=float).copy()
        buffers = [np.full(_delay_steps(p, dt) + 1, u0, dtype=float) for p in pools]
        return cls(pools=pools, dt=dt, y=y,
                   ydot=np.zeros(N_POOLS), yddot=np.zeros(N_POOLS),
                   x2=np.zeros(N_POOLS), x3=np.zeros(N_POOLS),
                   delay_buffers=buffers, x2_realization=x2_realization)

    def delayed_inputs(self) -> np.ndarray:
        # buffer[1] is the flow applied tau minutes ago on the step grid
        return np.array([buf[1] for buf in self.delay_buffers])

    def as_vector(self) -> np.ndarray:
        x = np.empty(N_STATES)
        for i in range(N_POOLS):
            o = STATES_PER_POOL * i
            x[o:o + 5] = (self.y[i], self.ydot[i], self.yddot[i], self.x2[i], self.x3[i])
        return x

    def set_vector(self, x: np.ndarray) -> None:
        for i in range(N_POOLS):
            o = STATES_PER_POOL * i
            self.y[i], self.ydot[i], self.yddot[i], self.x2[i], self.x3[i] = x[o:o + 5]


def _delay_steps(pool: PoolParams, dt: float) -> int:
    return int(round(pool.tau / dt))


def _check_dt(pools, dt: float) -> None:
    if dt <= 0:
        raise ValueError("dt must be positive")
    for p in pools:
        ratio = p.tau / dt
        if abs(ratio - round(ratio)) > 1e-6 * ratio:
            raise ValueError(f"dt={dt} does not divide transport delay tau={p.tau}")


def rk4_affine_maps(A: np.ndarray, B: np.ndarray, dt: float):
    """One RK4 step on an LTI system with held inputs: x+ = Phi x + Gam v.

    Phi and Gam are the degree-4 Taylor truncations of the exact maps;
    this is algebraically identical to classical RK4 on xdot = Ax + Bv.
    """
    n = A.shape[0]
    hA = dt * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    Phi = np.eye(n) + hA + hA2 / 2.0 + hA3 / 6.0 + hA3 @ hA / 24.0
    Gam = (dt * (np.eye(n) + hA / 2.0 + hA2 / 6.0 + hA3 / 24.0)) @ B
    return Phi, Gam


def wis_step(state: WisPlantState, u_applied: np.ndarray, d: np.ndarray,
             dt: float | None = None) -> WisPlantState:
    """Advance the plant one RK4 step with flows and disturbances held.

    Returns a new state; the input ring buffers are shifted by one step.
    """
    if dt is None:
        dt = state.dt
    elif abs(dt - state.dt) > 1e-12:
        raise ValueError("step size must match the state's delay-buffer grid")
    u_applied = np.asarray(u_applied, dtype=float)
    d = np.asarray(d, dtype=float)

    A, B = plant_matrices(state.pools, state.x2_realization)
    Phi, Gam = rk4_affine_maps(A, B, dt)
    v = np.concatenate([state.delayed_inputs(), u_applied, d])
    if not np.all(np.isfinite(v)):
        raise NonFiniteState(f"non-finite inputs at t={state.t}")
    x_new = Phi @ state.as_vector() + Gam @ v
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteState(f"plant state diverged at t={state.t}")

    new = WisPlantState(
        pools=state.pools, dt=state.dt,
        y=state.y.copy(), ydot=state.ydot.copy(), yddot=state.yddot.copy(),
        x2=state.x2.copy(), x3=state.x3.copy(),
        delay_buffers=[np.concatenate([buf[1:], [u]]) for buf, u in zip(state.delay_buffers, u_applied)],
        t=state.t + dt, x2_realization=state.x2_realization,
    )
    new.set_vector(x_new)
    return new


class PlantStepper:
    """Segment integrator equivalent to repeated `wis_step` calls.

    For a segment of n steps with constant inputs v the state advances as
    x <- Phi^n x + S_n Gam v with S_n = I + Phi + ... + Phi^(n-1); the
    per-step level outputs needed for error integrals come from stacked
    output maps. Maps are cached per segment length.
    """

    def __init__(self, pools: tuple[PoolParams, ...], dt: float,
                 x2_realization: str = "pade"):
        _check_dt(pools, dt)
        self.pools = pools
        self.dt = dt
        A, B = plant_matrices(pools, x2_realization)
        self.Phi, self.Gam = rk4_affine_maps(A, B, dt)
        self._seg_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._traj_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._C = np.zeros((N_POOLS, N_STATES))
        for i in range(N_POOLS):
            self._C[i, STATES_PER_POOL * i] = 1.0

    def _segment_maps(self, n: int):
        if n not in self._seg_cache:
            Phi_n = np.linalg.matrix_power(self.Phi, n)
            S = np.zeros_like(self.Phi)
            P = np.eye(N_STATES)
            for _ in range(n):
                S += P
                P = self.Phi @ P
            self._seg_cache[n] = (Phi_n, S @ self.Gam)
        return self._seg_cache[n]

    def _trajectory_maps(self, n: int):
        # stacked level outputs after 1..n steps
        if n not in self._traj_cache:
            W = np.empty((n, N_POOLS, N_STATES))
            U = np.empty((n, N_POOLS, N_INPUTS))
            P = self.Phi.copy()
            S = self.Gam.copy()
            for j in range(n):
                W[j] = self._C @ P
                U[j] = self._C @ S
                P = self.Phi @ P
                S = self.Phi @ S + self.Gam
            self._traj_cache[n] = (W.reshape(n * N_POOLS, N_STATES),
                                   U.reshape(n * N_POOLS, N_INPUTS))
        return self._traj_cache[n]

    def advance(self, x: np.ndarray, v: np.ndarray, n: int):
        """Advance n steps under constant inputs; returns (x_end, levels (n,5))."""
        W, U = self._trajectory_maps(n)
        levels = (W @ x + U @ v).reshape(n, N_POOLS)
        Phi_n, G = self._segment_maps(n)
        x_end = Phi_n @ x + G @ v
        if not (np.isfinite(x_end).all() and abs(x_end).max() < 1e9):
            raise NonFiniteState("plant state diverged during segment advance")
        return x_end, levels
