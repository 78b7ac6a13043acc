import numpy as np
import pytest

from dgmaxwell.analysis import project_mode
from dgmaxwell.dg import assemble_dense, make_system, stiffness_frequency_domain
from dgmaxwell.mesh import build_structured_square
from dgmaxwell.timestep import (State, energy, estimate_dt_max, integrate, kick_H,
                                spectral_radius, step_leapfrog, step_symplectic_euler)

from conftest import perturbed_mesh


@pytest.fixture(scope="module")
def small():
    return make_system(build_structured_square(2), 1)


def _random_state(system, rng):
    return State.from_vector(system, rng.standard_normal(system.ndof))


def _step_matrix(system, step, dt):
    return np.array([step(system, State.from_vector(system, c), dt).vector()
                     for c in np.eye(system.ndof)]).T


def test_zero_state_stays_zero(small):
    s = State.zeros(small)
    for step in (step_symplectic_euler, step_leapfrog):
        out = step(small, s, 0.01)
        assert np.all(out.vector() == 0) and out.t == pytest.approx(0.01)


def test_zero_dt_is_identity(small, rng):
    s = _random_state(small, rng)
    for step in (step_symplectic_euler, step_leapfrog):
        assert np.array_equal(step(small, s, 0.0).vector(), s.vector())


def test_symplectic_euler_matches_dense(small, rng):
    M, K = assemble_dense(small)
    nE = small.sizes[0]
    dt = 0.01
    x = rng.standard_normal(small.ndof)
    Minv = np.linalg.inv(M)
    y = x.copy()
    y[nE:] += dt * (Minv @ K @ y)[nE:]
    y[:nE] += dt * (Minv @ K @ y)[:nE]
    got = step_symplectic_euler(small, State.from_vector(small, x), dt).vector()
    assert np.allclose(got, y, atol=1e-12)


def test_leapfrog_conjugate_to_symplectic_euler(small, rng):
    dt = 0.02
    s = _random_state(small, rng)
    a = step_leapfrog(small, s, dt).vector()
    b = kick_H(small, step_symplectic_euler(small, kick_H(small, s, -0.5 * dt), dt), 0.5 * dt)
    assert np.allclose(a, b.vector(), atol=1e-12)


def test_leapfrog_reversible(small, rng):
    s = _random_state(small, rng)
    back = step_leapfrog(small, step_leapfrog(small, s, 0.01), -0.01)
    assert np.allclose(back.vector(), s.vector(), atol=1e-12)


@pytest.mark.parametrize("step", [step_symplectic_euler, step_leapfrog])
def test_update_is_volume_preserving(step):
    system = make_system(build_structured_square(1), 1)
    G = _step_matrix(system, step, 0.01)
    assert np.linalg.det(G) == pytest.approx(1.0, abs=1e-10)


def test_leapfrog_second_order():
    system = make_system(build_structured_square(2), 2)
    M, K = assemble_dense(system)
    x0 = project_mode(system, 1, 1).vector()
    T = 0.25
    w, V = np.linalg.eig(np.linalg.solve(M, K))
    exact = np.real(V @ (np.exp(w * T) * np.linalg.solve(V, x0)))
    errs, dts = [], []
    for n in (20, 40, 80, 160):
        s, _, _ = integrate(system, State.from_vector(system, x0), T / n, n, "leapfrog")
        errs.append(np.linalg.norm(s.vector() - exact))
        dts.append(T / n)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.2


def _dense_rho(system):
    M, K = assemble_dense(system)
    nE = system.sizes[0]
    A = stiffness_frequency_domain(system, K, M)
    s = 1 / np.sqrt(np.diag(M)[:nE])
    return np.linalg.eigvalsh(s[:, None] * A * s).max()


@pytest.mark.parametrize("n,k", [(1, 1), (1, 2), (2, 3)])
def test_power_iteration_matches_dense(n, k):
    system = make_system(build_structured_square(n), k)
    exact = _dense_rho(system)
    rho, its = spectral_radius(system, iterations=500)
    assert abs(rho - exact) <= 1e-6 * exact


def test_power_iteration_never_overshoots(rng):
    """A clustered top spectrum slows convergence, but the Rayleigh quotient stays below."""
    system = make_system(perturbed_mesh(rng, n=2), 2)
    exact = _dense_rho(system)
    rho, _ = spectral_radius(system)
    assert rho <= exact * (1 + 1e-12)
    assert rho >= 0.999 * exact


def test_power_iteration_deterministic(small):
    assert spectral_radius(small, seed=3) == spectral_radius(small, seed=3)
    with pytest.raises(ValueError):
        spectral_radius(small, iterations=0)


def test_dt_scales_with_material():
    mesh = build_structured_square(2)
    dt1 = estimate_dt_max(make_system(mesh, 2))
    dt4 = estimate_dt_max(make_system(mesh, 2, eps=0.25))
    # eps/4 multiplies rho by 4 and halves the step
    assert dt4 == pytest.approx(0.5 * dt1, rel=1e-6)


def test_zero_operator_gives_infinite_step(monkeypatch):
    system = make_system(build_structured_square(1), 1)
    monkeypatch.setattr(system, "rhs_H", lambda E: (np.zeros(system.sizes[1]),
                                                    np.zeros(system.sizes[2])))
    assert estimate_dt_max(system) == float("inf")


def test_integrate_records_and_validates(small, rng):
    s = _random_state(small, rng)
    out, hist, div = integrate(small, s, 0.001, 10, record_every=4)
    assert [h[0] for h in hist] == [0, 4, 8, 10]
    assert not div and hist[0][2] == pytest.approx(energy(small, s))
    with pytest.raises(ValueError):
        integrate(small, s, -1.0, 1)
    with pytest.raises(ValueError):
        integrate(small, State(0.0, s.E[:-1], s.H, s.HF), 0.01, 1)


def test_energy_nearly_conserved_short_run(small, rng):
    s = project_mode(small, 1, 1)
    dt = 0.5 * estimate_dt_max(small)
    _, hist, _ = integrate(small, s, dt, 200)
    e = np.array([h[2] for h in hist])
    assert np.abs(e - e[0]).max() <= 1e-2 * e[0]


def test_symplectic_euler_unstable_above_limit(small):
    s = project_mode(small, 1, 1)
    dt = 1.5 * estimate_dt_max(small)
    _, hist, div = integrate(small, s, dt, 1000, "symplectic_euler", blowup=1e6)
    assert div and hist[-1][0] < 1000
