"""Single-atom transit dynamics through the cavity.

The atom crosses the Gaussian cavity mode with velocity v, so the vacuum
Rabi coupling seen along the trajectory is

    Omega(t) = Omega_0 exp(-(v t / w)^2),   |v t| <= window_factor * w.

While it crosses, the atom-cavity detuning follows a three-segment
schedule: +Delta (dispersive), 0 for a span t_r centered on the waist
(resonant), then -Delta.  In the interaction frame the Hamiltonian is

    H(t) = (delta(t)/2) (|e><e| - |g><g|) +
           i (Omega(t)/2) (|g><e| a' - |e><g| a)

which couples only the pairs {|e,n>, |g,n+1>}.  Every exact-step,
analytic, and RK4 propagator below lives on the joint space ordered
atom (x) field with atom basis (|g>, |e>), joint dimension 2*(n_max+1).

Analytic limits: a resonant segment of pulse area Theta realizes the
block rotation u_resonant(Theta); a far-detuned segment realizes the
dephasing u_dispersive(phi0) with phi0 = -(1/4 delta) * int Omega^2 dt;
the full crossing approaches the composite
u_dispersive(phi0) u_resonant(Theta) u_dispersive(phi0)', whose
off-diagonal blocks pick up exp(+-2i phi0 N) gratings.  On the truncated
space the top pair partner |g, n_max+1> is absent, so the resonant blocks
complete the lone |e, n_max> level as identity; this is exactly the
exponential of the truncated generator and keeps every constructor
unitary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from cavres.fock import HilbertConfig
from cavres.thermal import CavityParams, ThermalPropagator, dissipator_rhs

__all__ = [
    "TransitProfile",
    "AtomPreparation",
    "TransitOptions",
    "ZeroDetuningError",
    "ConvergenceError",
    "ScheduleError",
    "rabi_coupling",
    "detuning_schedule",
    "theta_of",
    "phi0_of",
    "jc_hamiltonian",
    "u_resonant",
    "u_dispersive",
    "u_composite",
    "embed_with_atom",
    "trace_atom",
    "transit_unitary",
    "transit_propagate",
    "segment_unitary",
    "rk4_propagator",
    "rk4_master",
    "validate_unitary",
    "get_kernel",
]

ATOM_G = np.array([1.0, 0.0], dtype=complex)
ATOM_E = np.array([0.0, 1.0], dtype=complex)


class ZeroDetuningError(ValueError):
    """Dispersive phase requested for a schedule with no detuning."""


class ConvergenceError(RuntimeError):
    """Halving the integrator step still moves the result too much."""


class ScheduleError(ValueError):
    """Time outside the transit window, or an ill-formed schedule."""


@dataclass(frozen=True)
class TransitProfile:
    """Geometry and schedule of one atomic crossing.

    omega0         peak vacuum Rabi frequency (rad/s)
    w              Gaussian mode waist (m)
    v              atomic velocity (m/s)
    delta_disp     magnitude of the dispersive detuning (rad/s, >= 0)
    t_r            resonant span centered on the waist crossing (s)
    window_factor  half-window in units of w/v (transit time t_i = 2*f*w/v)
    """

    omega0: float
    w: float
    v: float
    delta_disp: float
    t_r: float
    window_factor: float = 1.5

    def __post_init__(self) -> None:
        for name in ("omega0", "w", "v", "t_r", "window_factor"):
            val = getattr(self, name)
            if not (val > 0 and np.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")
        if not (self.delta_disp >= 0 and np.isfinite(self.delta_disp)):
            raise ValueError(f"delta_disp must be >= 0, got {self.delta_disp}")
        if not self.t_r < self.t_i:
            raise ValueError(
                f"resonant span t_r = {self.t_r} must fit inside the transit t_i = {self.t_i}"
            )

    @property
    def t_i(self) -> float:
        """Transit duration: |v t| <= window_factor * w."""
        return 2.0 * self.window_factor * self.w / self.v


@dataclass(frozen=True)
class AtomPreparation:
    """Injected atom state cos(u/2)|g> + sin(u/2)|e>."""

    u: float

    def ket(self) -> np.ndarray:
        return np.array([np.cos(self.u / 2), np.sin(self.u / 2)], dtype=complex)


@dataclass(frozen=True)
class TransitOptions:
    """Numeric-integration knobs for one transit.

    method            "blockstep" (exact frozen-midpoint two-level steps) or
                      "rk4" (fixed-step RK4 on the full master equation)
    fine_steps        blockstep substeps per dispersive segment
    loss_slices       Strang slices per dispersive segment for the dissipator;
                      keep the slice span well below the pair-rotation period
                      2 pi / sqrt((delta/2)^2 + g_n^2), otherwise the O(tau^3)
                      splitting errors add coherently instead of averaging out
    rk4_phase_per_step   step bound max(|delta|, omega0)*dt for the rk4 method
    """

    method: str = "blockstep"
    fine_steps: int = 1024
    loss_slices: int = 32
    rk4_phase_per_step: float = 0.05

    def __post_init__(self) -> None:
        if self.method not in ("blockstep", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.fine_steps < 1 or self.loss_slices < 1:
            raise ValueError("fine_steps and loss_slices must be >= 1")
        if not 0 < self.rk4_phase_per_step <= 0.05:
            raise ValueError("rk4_phase_per_step must be in (0, 0.05]")


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

def rabi_coupling(t: float, profile: TransitProfile) -> float:
    """Omega(t) along the crossing; defined only inside the transit window."""
    half = profile.t_i / 2
    if abs(t) > half * (1 + 1e-12):
        raise ScheduleError(f"t = {t} outside the transit window +-{half}")
    x = profile.v * t / profile.w
    return profile.omega0 * float(np.exp(-x * x))


def detuning_schedule(t: float, profile: TransitProfile) -> float:
    """delta(t): +Delta, then 0 on [-t_r/2, t_r/2], then -Delta.

    The boundaries |t| = t_r/2 belong to the resonant window.
    """
    half = profile.t_i / 2
    if abs(t) > half * (1 + 1e-12):
        raise ScheduleError(f"t = {t} outside the transit window +-{half}")
    if abs(t) <= profile.t_r / 2:
        return 0.0
    return profile.delta_disp if t < 0 else -profile.delta_disp


def _segments(profile: TransitProfile) -> list[tuple[float, float, float]]:
    """(t0, t1, delta) for the dispersive/resonant/dispersive segments."""
    half_i, half_r = profile.t_i / 2, profile.t_r / 2
    return [
        (-half_i, -half_r, +profile.delta_disp),
        (-half_r, +half_r, 0.0),
        (+half_r, +half_i, -profile.delta_disp),
    ]


def theta_of(profile: TransitProfile) -> float:
    """Pulse area of the resonant window, Theta = int Omega dt over [-t_r/2, t_r/2]."""
    val, _ = quad(
        lambda t: rabi_coupling(t, profile),
        -profile.t_r / 2,
        profile.t_r / 2,
        epsabs=0.0,
        epsrel=1e-12,
    )
    return val


def phi0_of(profile: TransitProfile, segment: str = "second") -> float:
    """Dispersive phase phi0 = -(1/(4 delta)) int Omega(t)^2 dt over one segment.

    segment "first" is the approach (delta = +Delta, phi0 < 0, realizing the
    adjoint dephasing); "second" is the exit (delta = -Delta, phi0 > 0).
    """
    if profile.delta_disp == 0:
        raise ZeroDetuningError("dispersive phase undefined for delta_disp = 0")
    segs = {"first": _segments(profile)[0], "second": _segments(profile)[2]}
    try:
        t0, t1, delta = segs[segment]
    except KeyError:
        raise ValueError(f"segment must be 'first' or 'second', got {segment!r}") from None
    val, _ = quad(
        lambda t: rabi_coupling(t, profile) ** 2, t0, t1, epsabs=0.0, epsrel=1e-12
    )
    return -val / (4.0 * delta)


# ---------------------------------------------------------------------------
# analytic propagators
# ---------------------------------------------------------------------------

def _pair_coefficients(omega: float, delta: float, dt: float, cfg: HilbertConfig):
    """Exact exp(-i H dt) for frozen (omega, delta) in the paired basis.

    Returns the four coefficient arrays of the step unitary:
      ag[m]  amplitude |g,m> -> |g,m>           (m = 0..n_max)
      ae[n]  amplitude |e,n> -> |e,n>           (n = 0..n_max)
      bg[n]  amplitude |e,n> -> |g,n+1>         (n = 0..n_max-1)
      bl[n]  amplitude |g,n+1> -> |e,n>
    The lone levels |g,0> and |e,n_max> carry pure detuning phases.
    """
    n = np.arange(cfg.n_max, dtype=float)
    g = 0.5 * omega * np.sqrt(n + 1.0)
    lam = np.hypot(0.5 * delta, g)
    ang = lam * dt
    c = np.cos(ang)
    # sin(lam dt)/lam with the lam -> 0 limit dt
    s = np.where(lam > 0, np.sin(ang) / np.where(lam > 0, lam, 1.0), dt)

    ag = np.empty(cfg.dim, dtype=complex)
    ae = np.empty(cfg.dim, dtype=complex)
    ag[0] = np.exp(+0.5j * delta * dt)
    ag[1:] = c + 0.5j * delta * s
    ae[:-1] = c - 0.5j * delta * s
    ae[-1] = np.exp(-0.5j * delta * dt)
    bg = g * s
    bl = -g * s
    return ag, ae, bg.astype(complex), bl.astype(complex)


def _coeffs_to_matrix(coeffs, cfg: HilbertConfig) -> np.ndarray:
    ag, ae, bg, bl = coeffs
    dim = cfg.dim
    u = np.zeros((2 * dim, 2 * dim), dtype=complex)
    idx = np.arange(dim)
    u[idx, idx] = ag
    u[dim + idx, dim + idx] = ae
    u[1 + idx[:-1], dim + idx[:-1]] = bg
    u[dim + idx[:-1], 1 + idx[:-1]] = bl
    return u


def _apply_left(coeffs, x: np.ndarray, dim: int) -> np.ndarray:
    """U @ x using the sparse pair structure (x has 2*dim rows)."""
    ag, ae, bg, bl = coeffs
    xg, xe = x[:dim], x[dim:]
    yg = ag[:, None] * xg
    yg[1:] += bg[:, None] * xe[:-1]
    ye = ae[:, None] * xe
    ye[:-1] += bl[:, None] * xg[1:]
    return np.concatenate([yg, ye], axis=0)


def u_resonant(theta: float, cfg: HilbertConfig) -> np.ndarray:
    """Resonant block rotation of pulse area theta.

    |g,n>  ->  cos(theta sqrt(n)/2)   |g,n> - sin(theta sqrt(n)/2)   |e,n-1>
    |e,n>  ->  cos(theta sqrt(n+1)/2) |e,n> + sin(theta sqrt(n+1)/2) |g,n+1>

    The truncation-orphaned |e, n_max> is left untouched (identity), which
    matches the exponential of the truncated generator and keeps the matrix
    unitary.
    """
    return _coeffs_to_matrix(_pair_coefficients(1.0, 0.0, theta, cfg), cfg)


def u_dispersive(phi0: float, cfg: HilbertConfig) -> np.ndarray:
    """Dispersive dephasing: diag blocks exp(-i phi0 N) on g, exp(+i phi0 (N+1)) on e."""
    n = np.arange(cfg.dim)
    diag = np.concatenate([np.exp(-1j * phi0 * n), np.exp(1j * phi0 * (n + 1))])
    return np.diag(diag)


def u_composite(theta: float, phi0: float, cfg: HilbertConfig) -> np.ndarray:
    """Composite crossing U_d(phi0) U_r(theta) U_d(phi0)'.

    Equivalently exp(-i h0(N)) U_r(theta) exp(+i h0(N)) with
    h0(N) = phi0 N (N+1) acting on the field factor: the dispersive wings
    turn the resonant exchange into a Kerr-conjugated one.
    """
    ud = u_dispersive(phi0, cfg)
    return ud @ u_resonant(theta, cfg) @ ud.conj().T


def jc_hamiltonian(omega: float, delta: float, cfg: HilbertConfig) -> np.ndarray:
    """Dense interaction-frame Hamiltonian for frozen (omega, delta)."""
    dim = cfg.dim
    h = np.zeros((2 * dim, 2 * dim), dtype=complex)
    idx = np.arange(dim)
    h[idx, idx] = -0.5 * delta
    h[dim + idx, dim + idx] = +0.5 * delta
    g = 0.5 * omega * np.sqrt(idx[:-1] + 1.0)
    h[1 + idx[:-1], dim + idx[:-1]] = +1j * g   # <g,n+1| H |e,n>
    h[dim + idx[:-1], 1 + idx[:-1]] = -1j * g
    return h


def embed_with_atom(rho_field: np.ndarray, atom_ket: np.ndarray) -> np.ndarray:
    """rho_field tensor |atom><atom| in atom (x) field ordering."""
    return np.kron(np.outer(atom_ket, atom_ket.conj()), rho_field)


def trace_atom(rho_joint: np.ndarray) -> np.ndarray:
    """Partial trace over the two-level atom."""
    dim = rho_joint.shape[0] // 2
    blocks = rho_joint.reshape(2, dim, 2, dim)
    return blocks[0, :, 0, :] + blocks[1, :, 1, :]


def validate_unitary(u: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    defect = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if defect > tol:
        raise ValueError(f"unitarity defect {defect:.3e} > {tol}")
    return u


# ---------------------------------------------------------------------------
# numeric integration
# ---------------------------------------------------------------------------

def _blockstep_segment_unitary(
    profile: TransitProfile,
    t0: float,
    t1: float,
    delta: float,
    n_steps: int,
    cfg: HilbertConfig,
) -> np.ndarray:
    """Frozen-midpoint product of exact steps across [t0, t1] at detuning delta."""
    dim = cfg.dim
    dt = (t1 - t0) / n_steps
    mids = t0 + dt * (np.arange(n_steps) + 0.5)
    omegas = profile.omega0 * np.exp(-((profile.v * mids / profile.w) ** 2))
    u = np.eye(2 * dim, dtype=complex)
    for om in omegas:
        u = _apply_left(_pair_coefficients(om, delta, dt, cfg), u, dim)
    return u


class TransitKernel:
    """Precomputed one-crossing propagation machinery for a fixed scenario.

    The crossing is cut into Strang slices (loss_slices per dispersive
    segment, the resonant window as one slice).  Each slice carries a dense
    unitary built from exact frozen-midpoint substeps -- the resonant slice
    is u_resonant(Theta) exactly, since there H(t) commutes with itself --
    and, when a cavity is attached, the thermal half-slice propagators that
    Strang-wrap it.
    """

    def __init__(
        self,
        profile: TransitProfile,
        cfg: HilbertConfig,
        cavity: CavityParams | None = None,
        options: TransitOptions = TransitOptions(),
    ):
        self.profile = profile
        self.cfg = cfg
        self.cavity = cavity
        self.options = options

        d1, res, d2 = _segments(profile)
        n_sub = -(-options.fine_steps // options.loss_slices)  # ceil per slice
        self.slice_unitaries: list[np.ndarray] = []
        self.slice_durations: list[float] = []
        for (t0, t1, delta) in (d1, d2):
            edges = np.linspace(t0, t1, options.loss_slices + 1)
            for lo, hi in zip(edges[:-1], edges[1:]):
                self.slice_unitaries.append(
                    _blockstep_segment_unitary(profile, lo, hi, delta, n_sub, cfg)
                )
                self.slice_durations.append(hi - lo)
        # insert the resonant slice between the two dispersive runs
        res_u = u_resonant(theta_of(profile), cfg)
        k = options.loss_slices
        self.slice_unitaries.insert(k, res_u)
        self.slice_durations.insert(k, res[1] - res[0])

        self._half_loss: dict[float, ThermalPropagator] = {}
        if cavity is not None:
            for tau in set(self.slice_durations):
                self._half_loss[tau] = ThermalPropagator(tau / 2, cavity, cfg.dim)

    def unitary(self) -> np.ndarray:
        """Loss-free transit propagator (ordered product of the slices)."""
        u = np.eye(2 * self.cfg.dim, dtype=complex)
        for s in self.slice_unitaries:
            u = s @ u
        return u

    def propagate(self, rho_joint: np.ndarray) -> np.ndarray:
        return self.propagate_batched(rho_joint[None])[0]

    def propagate_batched(self, stack: np.ndarray) -> np.ndarray:
        """Propagate a stack (M, 2 dim, 2 dim) of joint states through the crossing."""
        out = stack
        for u, tau in zip(self.slice_unitaries, self.slice_durations):
            if self.cavity is not None:
                out = self._loss_half_batched(out, tau)
            out = u @ out @ u.conj().T
            if self.cavity is not None:
                out = self._loss_half_batched(out, tau)
        return out

    def _loss_half_batched(self, stack: np.ndarray, tau: float) -> np.ndarray:
        dim = self.cfg.dim
        m = stack.shape[0]
        blocks = (
            stack.reshape(m, 2, dim, 2, dim)
            .transpose(0, 1, 3, 2, 4)
            .reshape(m * 4, dim, dim)
        )
        relaxed = self._half_loss[tau].apply_batched(np.ascontiguousarray(blocks))
        return (
            relaxed.reshape(m, 2, 2, dim, dim)
            .transpose(0, 1, 3, 2, 4)
            .reshape(m, 2 * dim, 2 * dim)
        )


@lru_cache(maxsize=16)
def get_kernel(
    profile: TransitProfile,
    cfg: HilbertConfig,
    cavity: CavityParams | None,
    options: TransitOptions,
) -> TransitKernel:
    return TransitKernel(profile, cfg, cavity, options)


def rk4_propagator(
    omega_fn,
    delta: float,
    t0: float,
    t1: float,
    n_steps: int,
    cfg: HilbertConfig,
) -> np.ndarray:
    """Fixed-step RK4 for dU/dt = -i H(t) U over one constant-delta span."""
    dim = cfg.dim
    dt = (t1 - t0) / n_steps
    u = np.eye(2 * dim, dtype=complex)

    def f(t, m):
        co = _h_coeffs(omega_fn(t), delta, cfg)
        return -1j * _h_apply(co, m, dim)

    t = t0
    for _ in range(n_steps):
        k1 = f(t, u)
        k2 = f(t + dt / 2, u + dt / 2 * k1)
        k3 = f(t + dt / 2, u + dt / 2 * k2)
        k4 = f(t + dt, u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return u


def _h_coeffs(omega: float, delta: float, cfg: HilbertConfig):
    g = 0.5 * omega * np.sqrt(np.arange(1, cfg.dim, dtype=float))
    return 0.5 * delta, g


def _h_apply(coeffs, x: np.ndarray, dim: int) -> np.ndarray:
    """H @ x via the pair structure."""
    half_delta, g = coeffs
    xg, xe = x[:dim], x[dim:]
    yg = -half_delta * xg
    yg[1:] += 1j * g[:, None] * xe[:-1]
    ye = +half_delta * xe
    ye[:-1] += -1j * g[:, None] * xg[1:]
    return np.concatenate([yg, ye], axis=0)


def rk4_master(
    rho_joint: np.ndarray,
    profile: TransitProfile,
    cavity: CavityParams | None,
    cfg: HilbertConfig,
    phase_per_step: float = 0.05,
) -> np.ndarray:
    """Fixed-step RK4 of the full master equation across the crossing.

    Step bound: max(|delta|, omega0) * dt <= phase_per_step, with step
    boundaries aligned to the three segment edges.  This is the reference
    integrator the fast blockstep path is validated against.
    """
    dim = cfg.dim
    rho = rho_joint.astype(complex)
    rate = max(profile.delta_disp, profile.omega0)

    def f(t, r, delta):
        co = _h_coeffs(rabi_coupling(t, profile), delta, cfg)
        comm = _h_apply(co, r, dim) - _h_apply(co, r.conj().T, dim).conj().T
        out = -1j * comm
        if cavity is not None:
            out = out + dissipator_rhs(r, cavity, joint=True)
        return out

    for (t0, t1, delta) in _segments(profile):
        n_steps = max(1, int(np.ceil((t1 - t0) * rate / phase_per_step)))
        dt = (t1 - t0) / n_steps
        t = t0
        for _ in range(n_steps):
            k1 = f(t, rho, delta)
            k2 = f(t + dt / 2, rho + dt / 2 * k1, delta)
            k3 = f(t + dt / 2, rho + dt / 2 * k2, delta)
            k4 = f(t + dt, rho + dt * k3, delta)
            rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            rho = 0.5 * (rho + rho.conj().T)
            t += dt
    return rho


def segment_unitary(
    profile: TransitProfile,
    segment: str,
    cfg: HilbertConfig,
    method: str = "blockstep",
    n_steps: int | None = None,
) -> np.ndarray:
    """Loss-free numeric propagator of one schedule segment.

    segment is "first", "resonant", or "second".
    """
    order = {"first": 0, "resonant": 1, "second": 2}
    if segment not in order:
        raise ValueError(f"segment must be first/resonant/second, got {segment!r}")
    t0, t1, delta = _segments(profile)[order[segment]]
    if method == "blockstep":
        n = n_steps or 1024
        return _blockstep_segment_unitary(profile, t0, t1, delta, n, cfg)
    if method == "rk4":
        rate = max(profile.delta_disp, profile.omega0)
        n = n_steps or max(1, int(np.ceil((t1 - t0) * rate / 0.05)))
        return rk4_propagator(
            lambda t: rabi_coupling(t, profile), delta, t0, t1, n, cfg
        )
    raise ValueError(f"unknown method {method!r}")


def transit_unitary(
    profile: TransitProfile,
    cfg: HilbertConfig,
    options: TransitOptions = TransitOptions(),
) -> np.ndarray:
    """Loss-free numeric propagator of the whole crossing."""
    if options.method == "rk4":
        u = np.eye(2 * cfg.dim, dtype=complex)
        for seg in ("first", "resonant", "second"):
            u = segment_unitary(profile, seg, cfg, method="rk4") @ u
        return u
    return get_kernel(profile, cfg, None, options).unitary()


def transit_propagate(
    rho_joint: np.ndarray,
    profile: TransitProfile,
    cavity: CavityParams | None = None,
    backend: str = "numeric",
    options: TransitOptions = TransitOptions(),
    check_convergence: bool = False,
) -> np.ndarray:
    """Propagate a joint (atom x field) state through one crossing.

    backend "numeric" integrates the schedule (with cavity loss interleaved
    when a cavity is given); "analytic" applies the instantaneous composite
    propagator and requires loss to be disabled here (the reservoir layer
    composes relaxation separately).
    """
    dim2 = rho_joint.shape[0]
    if dim2 % 2:
        raise ValueError("joint state dimension must be even")
    cfg = HilbertConfig(n_max=dim2 // 2 - 1)

    if backend == "analytic":
        if cavity is not None:
            raise ValueError("analytic transit backend requires cavity loss disabled")
        theta = theta_of(profile)
        phi0 = 0.0 if profile.delta_disp == 0 else phi0_of(profile, "second")
        u = u_composite(theta, phi0, cfg)
        return u @ rho_joint @ u.conj().T

    if backend != "numeric":
        raise ValueError(f"unknown backend {backend!r}")

    if options.method == "rk4":
        out = rk4_master(rho_joint, profile, cavity, cfg, options.rk4_phase_per_step)
        if check_convergence:
            finer = rk4_master(
                rho_joint, profile, cavity, cfg, options.rk4_phase_per_step / 2
            )
            _check_step_convergence(out, finer, cfg)
        return out

    kernel = get_kernel(profile, cfg, cavity, options)
    out = kernel.propagate(rho_joint)
    if check_convergence:
        finer_opts = TransitOptions(
            method=options.method,
            fine_steps=2 * options.fine_steps,
            loss_slices=2 * options.loss_slices,
            rk4_phase_per_step=options.rk4_phase_per_step,
        )
        finer = get_kernel(profile, cfg, cavity, finer_opts).propagate(rho_joint)
        _check_step_convergence(out, finer, cfg)
    return out


def _check_step_convergence(coarse: np.ndarray, fine: np.ndarray, cfg: HilbertConfig):
    n_op = np.arange(cfg.dim)
    for rho_c, rho_f in ((coarse, fine),):
        fc, ff = trace_atom(rho_c), trace_atom(rho_f)
        d_nbar = abs(np.real(np.diag(fc) @ n_op) - np.real(np.diag(ff) @ n_op))
        d_pur = abs(
            np.real(np.trace(fc @ fc)) - np.real(np.trace(ff @ ff))
        )
        if d_nbar > 1e-4 or d_pur > 1e-4:
            raise ConvergenceError(
                f"halving the step moved nbar by {d_nbar:.2e} and purity by "
                f"{d_pur:.2e} (tolerance 1e-4); refine the step settings"
            )
