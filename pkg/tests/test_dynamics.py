"""Transit schedule, analytic propagators, and the numeric integrators."""

import numpy as np
import pytest
from scipy.linalg import expm

from cavres.fock import HilbertConfig, coherent_state, density, kerr_propagator
from cavres import dynamics as dyn
from cavres.thermal import CavityParams

OMEGA0 = 2 * np.pi * 50e3
WAIST = 6e-3

# slow crossing used by the two-component scenario
CAT2 = dyn.TransitProfile(
    omega0=OMEGA0, w=WAIST, v=70.0, delta_disp=2.2 * OMEGA0, t_r=5e-6
)
# fast strongly detuned crossing used by the squeezing scenario
SQUEEZE = dyn.TransitProfile(
    omega0=OMEGA0, w=WAIST, v=300.0, delta_disp=70 * OMEGA0, t_r=1.7e-6
)
BANANA = dyn.TransitProfile(
    omega0=OMEGA0, w=WAIST, v=150.0, delta_disp=7 * OMEGA0, t_r=5e-6
)
CAT3 = dyn.TransitProfile(
    omega0=OMEGA0, w=WAIST, v=70.0, delta_disp=3.7 * OMEGA0, t_r=5e-6
)


class TestTransitProfile:
    def test_transit_time(self):
        assert CAT2.t_i == pytest.approx(2 * 1.5 * WAIST / 70.0)

    def test_rejects_resonant_span_longer_than_transit(self):
        with pytest.raises(ValueError):
            dyn.TransitProfile(
                omega0=OMEGA0, w=WAIST, v=70.0, delta_disp=0.0, t_r=1.0
            )

    def test_rejects_nonpositive_geometry(self):
        with pytest.raises(ValueError):
            dyn.TransitProfile(omega0=OMEGA0, w=WAIST, v=-3.0, delta_disp=0.0, t_r=1e-6)
        with pytest.raises(ValueError):
            dyn.TransitProfile(omega0=OMEGA0, w=WAIST, v=70.0, delta_disp=-1.0, t_r=1e-6)


class TestSchedule:
    def test_peak_coupling(self):
        assert dyn.rabi_coupling(0.0, CAT2) == pytest.approx(OMEGA0)

    def test_window_edge_value(self):
        # at |v t| = 1.5 w the envelope is exp(-2.25) of the peak
        edge = CAT2.t_i / 2
        want = OMEGA0 * 0.10539922456186433
        assert dyn.rabi_coupling(edge, CAT2) == pytest.approx(want, rel=1e-12)

    def test_outside_window_raises(self):
        with pytest.raises(dyn.ScheduleError):
            dyn.rabi_coupling(CAT2.t_i, CAT2)
        with pytest.raises(dyn.ScheduleError):
            dyn.detuning_schedule(-CAT2.t_i, CAT2)

    def test_detuning_segments(self):
        half_r = CAT2.t_r / 2
        assert dyn.detuning_schedule(-CAT2.t_i / 2, CAT2) == +CAT2.delta_disp
        assert dyn.detuning_schedule(-half_r, CAT2) == 0.0
        assert dyn.detuning_schedule(+half_r, CAT2) == 0.0
        assert dyn.detuning_schedule(+half_r * 1.001, CAT2) == -CAT2.delta_disp

    def test_pulse_areas(self):
        # quadrature of the Gaussian envelope over the resonant windows,
        # frozen from the closed erf forms
        assert dyn.theta_of(CAT2) == pytest.approx(1.570351017877908, rel=1e-9)
        assert dyn.theta_of(SQUEEZE) == pytest.approx(0.5337493701799607, rel=1e-9)
        assert dyn.theta_of(BANANA) == pytest.approx(1.5687534136951802, rel=1e-9)

    def test_dispersive_phases(self):
        # phi0 = -(1/4 delta) int Omega^2 over the strict segment bounds
        assert dyn.phi0_of(CAT2, "second") == pytest.approx(
            1.8231899075379754, rel=1e-9
        )
        assert dyn.phi0_of(CAT2, "first") == pytest.approx(
            -1.8231899075379754, rel=1e-9
        )
        assert dyn.phi0_of(CAT3, "second") == pytest.approx(
            1.0840588639414988, rel=1e-9
        )
        assert dyn.phi0_of(SQUEEZE, "second") == pytest.approx(
            0.013071636193054969, rel=1e-9
        )
        assert dyn.phi0_of(BANANA, "second") == pytest.approx(
            0.25250667731891474, rel=1e-9
        )

    def test_zero_detuning_rejected(self):
        flat = dyn.TransitProfile(
            omega0=OMEGA0, w=WAIST, v=70.0, delta_disp=0.0, t_r=5e-6
        )
        with pytest.raises(dyn.ZeroDetuningError):
            dyn.phi0_of(flat, "second")
        with pytest.raises(ValueError):
            dyn.phi0_of(CAT2, "middle")


class TestAnalyticPropagators:
    cfg = HilbertConfig(n_max=14)

    def test_resonant_unitary(self):
        dyn.validate_unitary(dyn.u_resonant(1.3, self.cfg))

    def test_pi_pulse_swaps_lowest_pair(self):
        u = dyn.u_resonant(np.pi, self.cfg)
        dim = self.cfg.dim
        e0 = np.zeros(2 * dim, dtype=complex)
        e0[dim] = 1.0
        out = u @ e0
        assert abs(out[1] - 1.0) < 1e-14
        # and a 2 pi pulse returns |e,0> with a sign flip
        out2 = dyn.u_resonant(2 * np.pi, self.cfg) @ e0
        assert abs(out2[dim] + 1.0) < 1e-14

    def test_exchange_sign_convention(self):
        theta = 0.7
        u = dyn.u_resonant(theta, self.cfg)
        dim = self.cfg.dim
        assert u[1, dim + 0] == pytest.approx(+np.sin(theta / 2))
        assert u[dim + 0, 1] == pytest.approx(-np.sin(theta / 2))
        assert u[0, 0] == pytest.approx(1.0)          # |g,0> untouched
        assert u[-1, -1] == pytest.approx(1.0)        # orphaned |e,n_max>

    def test_resonant_is_exponential_of_generator(self):
        theta = 2.1
        gen = dyn.jc_hamiltonian(1.0, 0.0, self.cfg)
        want = expm(-1j * theta * gen)
        got = dyn.u_resonant(theta, self.cfg)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_dispersive_diagonal(self):
        phi0 = 0.37
        u = dyn.u_dispersive(phi0, self.cfg)
        dim = self.cfg.dim
        n = np.arange(dim)
        assert np.max(np.abs(np.diag(u)[:dim] - np.exp(-1j * phi0 * n))) < 1e-14
        assert np.max(np.abs(np.diag(u)[dim:] - np.exp(1j * phi0 * (n + 1)))) < 1e-14
        dyn.validate_unitary(u)

    def test_composite_equals_kerr_conjugation(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            theta, phi0 = rng.uniform(0, 2 * np.pi, size=2)
            uc = dyn.u_composite(theta, phi0, self.cfg)
            k = np.kron(np.eye(2), kerr_propagator(phi0, self.cfg))
            ref = k @ dyn.u_resonant(theta, self.cfg) @ k.conj().T
            assert np.max(np.abs(uc - ref)) < 1e-12

    def test_hamiltonian_structure(self):
        h = dyn.jc_hamiltonian(OMEGA0, 0.3 * OMEGA0, self.cfg)
        assert np.max(np.abs(h - h.conj().T)) < 1e-9
        dim = self.cfg.dim
        n = 4
        assert h[n + 1, dim + n] == pytest.approx(1j * 0.5 * OMEGA0 * np.sqrt(n + 1))


class TestBlockStep:
    cfg = HilbertConfig(n_max=15)

    def test_single_step_matches_matrix_exponential(self):
        omega, delta, dt = 3.1e5, 7.7e5, 2.3e-6
        h = dyn.jc_hamiltonian(omega, delta, self.cfg)
        want = expm(-1j * h * dt)
        got = dyn._coeffs_to_matrix(
            dyn._pair_coefficients(omega, delta, dt, self.cfg), self.cfg
        )
        assert np.max(np.abs(got - want)) < 1e-13

    def test_zero_coupling_step_is_pure_detuning_phase(self):
        delta, dt = 5.5e5, 1.1e-6
        u = dyn._coeffs_to_matrix(
            dyn._pair_coefficients(0.0, delta, dt, self.cfg), self.cfg
        )
        dim = self.cfg.dim
        want = np.diag(
            np.concatenate(
                [
                    np.full(dim, np.exp(+0.5j * delta * dt)),
                    np.full(dim, np.exp(-0.5j * delta * dt)),
                ]
            )
        )
        assert np.max(np.abs(u - want)) < 1e-14

    def test_sparse_apply_matches_dense(self):
        rng = np.random.default_rng(3)
        co = dyn._pair_coefficients(2.2e5, -4e5, 3e-6, self.cfg)
        u = dyn._coeffs_to_matrix(co, self.cfg)
        x = rng.normal(size=(2 * self.cfg.dim, 2 * self.cfg.dim)) + 1j * rng.normal(
            size=(2 * self.cfg.dim, 2 * self.cfg.dim)
        )
        assert np.max(np.abs(dyn._apply_left(co, x, self.cfg.dim) - u @ x)) < 1e-12


class TestTransitIntegration:
    cfg = HilbertConfig(n_max=18)

    def test_transit_unitary_is_unitary(self):
        u = dyn.transit_unitary(CAT2, self.cfg)
        dyn.validate_unitary(u, tol=1e-9)

    def test_time_reversal(self):
        # flipping the coupling sign (conjugation by sigma_z on the atom)
        # inverts the crossing because Omega(t) is even and delta(t) is odd
        u = dyn.transit_unitary(CAT2, self.cfg)
        sz = np.kron(np.diag([1.0, -1.0]), np.eye(self.cfg.dim))
        assert np.max(np.abs(sz @ u @ sz @ u - np.eye(2 * self.cfg.dim))) < 1e-9

    def test_blockstep_agrees_with_rk4(self):
        u_fast = dyn.transit_unitary(CAT2, self.cfg)
        u_ref = dyn.transit_unitary(
            CAT2, self.cfg, dyn.TransitOptions(method="rk4")
        )
        assert np.linalg.norm(u_fast - u_ref, 2) < 2e-4

    def test_dispersive_segment_phases(self):
        # strongly detuned wing: numeric block phases follow the
        # photon-number grating of the dispersive limit
        cfg = HilbertConfig(n_max=30)
        u = dyn.segment_unitary(SQUEEZE, "second", cfg, method="blockstep")
        phi0 = dyn.phi0_of(SQUEEZE, "second")
        dim = cfg.dim
        n = np.arange(dim)
        gg = np.diag(u)[:dim]
        ee = np.diag(u)[dim:]
        # strip the residual interaction-frame phase via the n = 0 entry
        gg_rel = np.angle(gg * np.conj(gg[0]) * np.exp(1j * phi0 * n))
        ee_rel = np.angle(ee * np.conj(ee[0]) * np.exp(-1j * phi0 * n))
        assert np.max(np.abs(gg_rel)) < 2e-3
        # the orphaned |e, n_max> level carries no light shift; exclude it
        assert np.max(np.abs(ee_rel[:-1])) < 2e-3

    def test_analytic_backend_matches_composite(self):
        cfg = HilbertConfig(n_max=20)
        rho_f = density(coherent_state(0.9, cfg))
        atom = dyn.AtomPreparation(0.45 * np.pi).ket()
        joint = dyn.embed_with_atom(rho_f, atom)
        out = dyn.transit_propagate(joint, CAT2, backend="analytic")
        u = dyn.u_composite(dyn.theta_of(CAT2), dyn.phi0_of(CAT2, "second"), cfg)
        want = u @ joint @ u.conj().T
        assert np.max(np.abs(out - want)) < 1e-12

    def test_analytic_backend_resonant_only(self):
        cfg = HilbertConfig(n_max=12)
        flat = dyn.TransitProfile(
            omega0=OMEGA0, w=WAIST, v=70.0, delta_disp=0.0, t_r=5e-6
        )
        joint = dyn.embed_with_atom(
            density(coherent_state(0.5, cfg)), dyn.AtomPreparation(0.1).ket()
        )
        out = dyn.transit_propagate(joint, flat, backend="analytic")
        u = dyn.u_resonant(dyn.theta_of(flat), cfg)
        want = u @ joint @ u.conj().T
        assert np.max(np.abs(out - want)) < 1e-12

    def test_analytic_backend_rejects_loss(self):
        cfg = HilbertConfig(n_max=8)
        joint = dyn.embed_with_atom(
            density(coherent_state(0.3, cfg)), dyn.AtomPreparation(0.2).ket()
        )
        with pytest.raises(ValueError):
            dyn.transit_propagate(
                joint, CAT2, cavity=CavityParams(), backend="analytic"
            )

    def test_embed_trace_roundtrip(self):
        cfg = HilbertConfig(n_max=9)
        rho = density(coherent_state(0.8, cfg))
        atom = dyn.AtomPreparation(1.1).ket()
        joint = dyn.embed_with_atom(rho, atom)
        assert np.trace(joint) == pytest.approx(1.0)
        assert np.max(np.abs(dyn.trace_atom(joint) - rho)) < 1e-14


@pytest.mark.slow
class TestAgainstMasterEquation:
    def test_fast_path_matches_rk4_with_loss(self):
        # one full crossing from vacuum, thermal damping on: the slice
        # decomposition must agree with brute-force integration
        cfg = HilbertConfig(n_max=20)
        cav = CavityParams()
        rho_f = np.zeros((cfg.dim, cfg.dim), dtype=complex)
        rho_f[0, 0] = 1.0
        joint = dyn.embed_with_atom(rho_f, dyn.AtomPreparation(0.45 * np.pi).ket())
        fast = dyn.transit_propagate(joint, CAT2, cavity=cav, backend="numeric")
        ref = dyn.rk4_master(joint, CAT2, cav, cfg)
        assert abs(np.trace(fast).real - 1.0) < 1e-10
        assert np.max(np.abs(fast - ref)) < 1e-5

    def test_convergence_check_passes_for_defaults(self):
        cfg = HilbertConfig(n_max=14)
        rho_f = np.zeros((cfg.dim, cfg.dim), dtype=complex)
        rho_f[0, 0] = 1.0
        joint = dyn.embed_with_atom(rho_f, dyn.AtomPreparation(0.45 * np.pi).ket())
        dyn.transit_propagate(
            joint, CAT2, cavity=CavityParams(), check_convergence=True
        )


def test_convergence_guard_raises_on_drift():
    cfg = HilbertConfig(n_max=6)
    a = np.zeros((2 * cfg.dim, 2 * cfg.dim), dtype=complex)
    a[1, 1] = 1.0
    b = a.copy()
    b[1, 1] = 0.999
    b[2, 2] = 0.001
    with pytest.raises(dyn.ConvergenceError):
        dyn._check_step_convergence(a, b, cfg)
