"""Explicit symplectic time stepping for M x' = K x.

Leapfrog staggering: H (with H^F) is kicked by half a step, E drifts a full
step with the half-step H, then H is kicked again. Both stored fields live
at integer time levels, and the map equals the symplectic Euler map
conjugated by a half H kick.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dg import SemiDiscreteSystem, apply_inverse_mass_flat

POWER_RTOL = 1e-10


@dataclass(frozen=True)
class State:
    t: float
    E: np.ndarray
    H: np.ndarray
    HF: np.ndarray

    @classmethod
    def zeros(cls, system: SemiDiscreteSystem) -> "State":
        a, b, c = system.sizes
        return cls(0.0, np.zeros(a), np.zeros(b), np.zeros(c))

    @classmethod
    def from_vector(cls, system: SemiDiscreteSystem, x, t: float = 0.0) -> "State":
        E, H, HF = system.split(np.asarray(x, dtype=float))
        return cls(t, E.copy(), H.copy(), HF.copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.E, self.H, self.HF])

    def check(self, system: SemiDiscreteSystem):
        if (len(self.E), len(self.H), len(self.HF)) != system.sizes:
            raise ValueError(f"state sizes {(len(self.E), len(self.H), len(self.HF))} "
                             f"do not match the system layout {system.sizes}")


def kick_H(system: SemiDiscreteSystem, state: State, dt: float) -> State:
    rH, rF = system.rhs_H(state.E)
    H = state.H + dt * apply_inverse_mass_flat(system, "H", rH)
    HF = state.HF + dt * apply_inverse_mass_flat(system, "HF", rF) if system.nF else state.HF
    return replace(state, H=H, HF=HF)


def drift_E(system: SemiDiscreteSystem, state: State, dt: float) -> State:
    rE = system.rhs_E(state.H, state.HF)
    return replace(state, E=state.E + dt * apply_inverse_mass_flat(system, "E", rE))


def step_symplectic_euler(system: SemiDiscreteSystem, state: State, dt: float) -> State:
    """H first from the old E, then E from the new H."""
    s = drift_E(system, kick_H(system, state, dt), dt)
    return replace(s, t=state.t + dt)


def step_leapfrog(system: SemiDiscreteSystem, state: State, dt: float) -> State:
    s = kick_H(system, state, 0.5 * dt)
    s = drift_E(system, s, dt)
    s = kick_H(system, s, 0.5 * dt)
    return replace(s, t=state.t + dt)


STEPPERS = {"symplectic_euler": step_symplectic_euler, "leapfrog": step_leapfrog}


def energy(system: SemiDiscreteSystem, state: State) -> float:
    """1/2 E.M_eps E + 1/2 H.M_mu H + 1/2 HF.M_F HF."""
    x = state.vector()
    return 0.5 * float(x @ system.apply_mass(x))


def frequency_operator(system: SemiDiscreteSystem, e) -> np.ndarray:
    """M_eps^{-1/2} C^T M_H^{-1} C M_eps^{-1/2} e, matrix free."""
    scale = 1.0 / np.sqrt(system.mass_E().ravel())
    rH, rF = system.rhs_H(scale * e)
    u = apply_inverse_mass_flat(system, "H", rH)
    uF = apply_inverse_mass_flat(system, "HF", rF)
    return -scale * system.rhs_E(u, uF)


def spectral_radius(system: SemiDiscreteSystem, iterations: int = 1000, seed: int = 0,
                    rtol: float = POWER_RTOL):
    """Power iteration; returns (rho, iterations used)."""
    if iterations < 1:
        raise ValueError("need at least one iteration")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(system.sizes[0])
    x /= np.linalg.norm(x)
    rho = 0.0
    for it in range(1, iterations + 1):
        y = frequency_operator(system, x)
        new = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0, it
        x = y / norm
        if it > 1 and abs(new - rho) <= rtol * abs(new):
            return new, it
        rho = new
    return rho, iterations


def estimate_dt_max(system: SemiDiscreteSystem, iterations: int = 1000, seed: int = 0) -> float:
    """Largest stable step 2 / sqrt(rho); +inf for a zero operator."""
    rho, _ = spectral_radius(system, iterations, seed)
    if rho <= 0.0:
        return float("inf")
    return 2.0 / np.sqrt(rho)


def integrate(system: SemiDiscreteSystem, state: State, dt: float, steps: int,
              scheme: str = "leapfrog", record_every: int = 1, blowup: float | None = None):
    """Run ``steps`` steps; returns (final state, [(step, t, energy)], diverged flag).

    With ``blowup`` set, stops as soon as the energy exceeds blowup times the
    initial energy.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    state.check(system)
    step = STEPPERS[scheme]
    e0 = energy(system, state)
    history = [(0, state.t, e0)]
    for n in range(1, steps + 1):
        state = step(system, state, dt)
        if n % record_every == 0 or n == steps or blowup is not None:
            e = energy(system, state)
            if n % record_every == 0 or n == steps:
                history.append((n, state.t, e))
            if blowup is not None and (not np.isfinite(e) or e > blowup * e0):
                if history[-1][0] != n:
                    history.append((n, state.t, e))
                return state, history, True
    return state, history, False
