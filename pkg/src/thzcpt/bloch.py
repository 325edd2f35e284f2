"""Four-level N-scheme optical Bloch equations.

Basis order is (S, P, D, Q).  The rotating frame puts |P> at zero energy; the
remaining diagonal is (Delta_B, Delta_R, Delta_B - Delta_W) and every coupling
enters as Omega/2.  Density matrices are vectorised column-first, so that
``vec(A X B) = kron(B.T, A) vec(X)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .constants import TWO_PI
from .species import IonSpecies

S, P, D, Q = 0, 1, 2, 3
LEVELS = ("S", "P", "D", "Q")
DIM = 4

TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-12
POSITIVITY_TOL = 1e-10
RESIDUAL_TOL = 1e-9


class BlochError(RuntimeError):
    pass


class DensityMatrixError(BlochError):
    pass


class DegenerateKernelError(BlochError):
    def __init__(self, nullity: int, singular_values):
        self.nullity = nullity
        self.singular_values = np.asarray(singular_values)
        super().__init__(
            f"degenerate kernel: Liouvillian null space has dimension {nullity}; "
            "pass an initial state to select the steady state"
        )


class StiffnessError(BlochError):
    pass


@dataclass(frozen=True)
class LaserParams:
    """Rabi frequencies, detunings and phase-diffusion rates, all angular (s^-1).

    Detunings follow Delta_X = omega_laser - omega_atom for the B (S-P),
    R (D-P) and W (S-Q) transitions.
    """

    omega_B: float = 0.0
    omega_R: float = 0.0
    omega_W: float = 0.0
    delta_B: float = 0.0
    delta_R: float = 0.0
    delta_W: float = 0.0
    dephase_B: float = 0.0
    dephase_R: float = 0.0
    dephase_W: float = 0.0

    def __post_init__(self):
        for name in ("omega_B", "omega_R", "omega_W", "delta_B", "delta_R", "delta_W",
                     "dephase_B", "dephase_R", "dephase_W"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if not name.startswith("delta") and value < 0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")

    @classmethod
    def from_hz(cls, **kwargs) -> "LaserParams":
        """Build from ordinary frequencies in Hz (every field gets 2*pi)."""
        return cls(**{k: TWO_PI * float(v) for k, v in kwargs.items()})

    def to_hz(self) -> dict:
        return {k: getattr(self, k) / TWO_PI for k in self.__dataclass_fields__}

    def replace(self, **changes) -> "LaserParams":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return LaserParams(**values)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    return np.asarray(v).reshape(DIM, DIM, order="F")


@dataclass(frozen=True, eq=False)
class DensityMatrix4:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex)
        if arr.shape != (DIM, DIM):
            raise DensityMatrixError(f"expected a 4x4 matrix, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def basis(cls, level: str | int) -> "DensityMatrix4":
        idx = LEVELS.index(level) if isinstance(level, str) else int(level)
        rho = np.zeros((DIM, DIM), complex)
        rho[idx, idx] = 1.0
        return cls(rho)

    @classmethod
    def pure(cls, amplitudes) -> "DensityMatrix4":
        psi = np.asarray(amplitudes, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def populations(self) -> np.ndarray:
        return self.data.diagonal().real.copy()

    def __getitem__(self, key):
        return self.data[key]

    def expectation(self, psi) -> float:
        """<psi|rho|psi> for a normalised state vector (fidelity with a pure state)."""
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return float((psi.conj() @ self.data @ psi).real)

    def invariant_violations(self) -> list[str]:
        rho = self.data
        problems = []
        herm = np.abs(rho - rho.conj().T).max()
        if herm > HERMITIAN_TOL:
            problems.append(f"hermiticity deviation {herm:.3g} > {HERMITIAN_TOL}")
        tr = np.trace(rho)
        if abs(tr - 1.0) > TRACE_TOL:
            problems.append(f"trace {tr:.15g} differs from 1 by more than {TRACE_TOL}")
        lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        if lam.min() < -POSITIVITY_TOL:
            problems.append(f"eigenvalue {lam.min():.3g} below -{POSITIVITY_TOL}")
        return problems

    def check(self) -> "DensityMatrix4":
        problems = self.invariant_violations()
        if problems:
            raise DensityMatrixError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return {"re": self.data.real.tolist(), "im": self.data.imag.tolist()}


def build_hamiltonian(lasers: LaserParams) -> np.ndarray:
    """Rotating-frame Hamiltonian divided by hbar (s^-1)."""
    h = np.zeros((DIM, DIM), complex)
    h[S, S] = lasers.delta_B
    h[D, D] = lasers.delta_R
    h[Q, Q] = lasers.delta_B - lasers.delta_W
    h[S, P] = h[P, S] = lasers.omega_B / 2
    h[D, P] = h[P, D] = lasers.omega_R / 2
    h[S, Q] = h[Q, S] = lasers.omega_W / 2
    return h


def _dissipator(c: np.ndarray) -> np.ndarray:
    eye = np.eye(DIM)
    cdc = c.conj().T @ c
    return np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)


def _jump(to: int, frm: int) -> np.ndarray:
    c = np.zeros((DIM, DIM))
    c[to, frm] = 1.0
    return c


@dataclass(frozen=True, eq=False)
class Liouvillian:
    matrix: np.ndarray
    channels: dict = field(default_factory=dict)
    include_metastable_decay: bool = False

    def apply(self, rho) -> np.ndarray:
        data = rho.data if isinstance(rho, DensityMatrix4) else np.asarray(rho)
        return unvec(self.matrix @ vec(data))

    @property
    def shape(self):
        return self.matrix.shape


def build_liouvillian(
    H: np.ndarray,
    species: IonSpecies,
    lasers: LaserParams | None = None,
    include_metastable_decay: bool = False,
    metastable_rates: tuple[float, float] = (1.0, 1.0),
) -> Liouvillian:
    """Lindblad generator for the N scheme.

    Decay of P goes to S at gamma_P*beta_PS and to D at gamma_P*beta_PD.  Laser
    phase diffusion is a pure-dephasing channel on S, D and Q (rates taken
    from ``lasers``), normalised so that every coherence involving that level
    decays at the given rate.  ``metastable_rates`` are the D->S and Q->S decay
    rates used only when ``include_metastable_decay`` is set.
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != (DIM, DIM):
        raise ValueError(f"Hamiltonian must be 4x4, got {H.shape}")
    if np.abs(H - H.conj().T).max() > 0:
        raise ValueError("Hamiltonian is not Hermitian")
    eye = np.eye(DIM)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))

    channels = {
        "P->S": species.gamma_P * species.beta_PS,
        "P->D": species.gamma_P * species.beta_PD,
    }
    if lasers is not None:
        channels.update({"dephase S": lasers.dephase_B,
                         "dephase D": lasers.dephase_R,
                         "dephase Q": lasers.dephase_W})
    if include_metastable_decay:
        channels.update({"D->S": metastable_rates[0], "Q->S": metastable_rates[1]})

    ops = {
        "P->S": _jump(S, P),
        "P->D": _jump(D, P),
        "dephase S": math.sqrt(2.0) * _jump(S, S),
        "dephase D": math.sqrt(2.0) * _jump(D, D),
        "dephase Q": math.sqrt(2.0) * _jump(Q, Q),
        "D->S": _jump(S, D),
        "Q->S": _jump(S, Q),
    }
    for name, rate in channels.items():
        if rate < 0:
            raise ValueError(f"negative rate for channel {name}")
        if rate > 0:
            L = L + rate * _dissipator(ops[name])
    return Liouvillian(L, channels, include_metastable_decay)


def _kernel(matrix: np.ndarray, rel_tol: float):
    U, s, Vh = np.linalg.svd(matrix)
    cutoff = rel_tol * (s[0] if s[0] > 0 else 1.0)
    null = s <= cutoff
    return U, s, Vh, int(null.sum())


def steady_state(
    liouv: Liouvillian,
    rho0: DensityMatrix4 | None = None,
    kernel_tol: float = 1e-14,
) -> DensityMatrix4:
    """Stationary state of ``liouv``.

    The solve runs in an orthonormal Hermitian-operator basis whose first
    element is I/2, so the trace condition replaces that redundant row and the
    result is Hermitian with unit trace by construction.  With a
    one-dimensional kernel the remaining 15x15 real system is LU-solved.  If
    the kernel is larger (e.g. an uncoupled level or all lasers off) the answer
    depends on where the system started: pass ``rho0`` and the long-time limit
    is returned by fixing every conserved quantity to its initial value;
    without ``rho0`` a :class:`DegenerateKernelError` is raised.
    """
    M = _real_generator(liouv)
    A = M[1:, 1:]
    b = 0.5 * M[1:, 0]
    scale = max(np.abs(A).max(), np.abs(b).max())
    if scale > 0:
        A, b = A / scale, b / scale
    U, s, _, nullity = _kernel(A, kernel_tol)

    if nullity == 0:
        z = np.linalg.solve(A, -b)
    else:
        if rho0 is None:
            raise DegenerateKernelError(nullity + 1, s)
        left = U[:, -nullity:].T
        conserved = left @ _to_coords(rho0.data)[1:]
        z = np.linalg.lstsq(np.vstack([A, left]), np.concatenate([-b, conserved]), rcond=None)[0]

    rho = _from_coords(np.concatenate([[0.5], z]))
    rho = 0.5 * (rho + rho.conj().T)

    # Slow optical pumping (weak couplings against a fast P decay) makes the
    # system ill-conditioned; negative eigenvalues at the level of that
    # round-off are clipped, anything larger is left for check() to reject.
    nonzero = s[: s.size - nullity]
    noise = 64 * np.finfo(float).eps * s[0] / nonzero[-1] if nonzero.size else 0.0
    lam, vecs = np.linalg.eigh(rho)
    if lam.min() < -POSITIVITY_TOL and -lam.min() <= noise:
        lam = np.clip(lam, 0.0, None)
        rho = (vecs * (lam / lam.sum())) @ vecs.conj().T

    L = liouv.matrix
    residual = np.linalg.norm(L @ vec(rho)) / max(np.linalg.norm(L), 1e-300)
    if residual > RESIDUAL_TOL:
        raise BlochError(f"steady-state residual {residual:.3g} exceeds {RESIDUAL_TOL}")
    return DensityMatrix4(rho).check()


def _hermitian_basis() -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of 4x4 Hermitian matrices; element 0 is I/2."""
    mats = [np.eye(DIM, dtype=complex) / 2.0]
    for diag in ([1, -1, 0, 0], [1, 1, -2, 0], [1, 1, 1, -3]):
        d = np.array(diag, dtype=float)
        mats.append(np.diag(d / np.linalg.norm(d)).astype(complex))
    r2 = 1.0 / math.sqrt(2.0)
    for j in range(DIM):
        for k in range(j + 1, DIM):
            sym = np.zeros((DIM, DIM), complex)
            sym[j, k] = sym[k, j] = r2
            anti = np.zeros((DIM, DIM), complex)
            anti[j, k] = -1j * r2
            anti[k, j] = 1j * r2
            mats.extend([sym, anti])
    return np.array(mats)


_BASIS = _hermitian_basis()
_T = np.column_stack([vec(g) for g in _BASIS])


def _real_generator(liouv: Liouvillian) -> np.ndarray:
    M = (_T.conj().T @ liouv.matrix @ _T).real
    M[0, :] = 0.0  # trace preservation, exact
    return M


def _affine_propagator(M: np.ndarray, h: float) -> np.ndarray:
    n = DIM * DIM
    aug = np.zeros((n, n))
    aug[: n - 1, : n - 1] = M[1:, 1:]
    aug[: n - 1, n - 1] = M[1:, 0] * 0.5  # r0 = tr(rho)/2 = 1/2
    return expm(aug * h)


def _to_coords(rho: np.ndarray) -> np.ndarray:
    return np.einsum("kij,ji->k", _BASIS, rho).real


def _from_coords(r: np.ndarray) -> np.ndarray:
    return np.einsum("k,kij->ij", r, _BASIS)


MODAL_COND_LIMIT = 1e8


class _ExpmStepper:
    """Affine exact-exponential step on the 15 traceless coordinates."""

    def __init__(self, M: np.ndarray, liouv: Liouvillian):
        self.M = M
        self.liouv = liouv

    def start(self, z0: np.ndarray):
        return np.append(z0, 1.0)

    def step(self, state, h: float):
        U = _affine_propagator(self.M, h)
        if not np.all(np.isfinite(U)):
            raise StiffnessError(
                f"non-finite propagator for step {h:.3g} s "
                f"(|L|max = {np.abs(self.liouv.matrix).max():.3g} s^-1, "
                f"channels={self.liouv.channels})"
            )
        return U @ state

    def coords(self, state) -> np.ndarray:
        return state[:-1]


class _ModalStepper:
    """Eigen-decomposed propagation about the fixed point.

    z(t) = z_ss + V exp(w t) V^-1 (z0 - z_ss).  Each step multiplies modal
    amplitudes by scalars, so round-off does not pile up over long times the
    way it does in a scaled-and-squared exponential of a stiff generator.
    """

    def __init__(self, w, V, z_ss):
        self.w, self.V, self.z_ss = w, V, z_ss
        self.Vinv = np.linalg.inv(V)

    @classmethod
    def build(cls, M: np.ndarray):
        A = M[1:, 1:]
        b = M[1:, 0] * 0.5
        try:
            w, V = np.linalg.eig(A)
            if np.linalg.cond(V) > MODAL_COND_LIMIT or np.min(np.abs(w)) == 0:
                return None
            z_ss = np.linalg.solve(A, -b)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(A @ z_ss + b) > 1e-9 * max(np.linalg.norm(b), 1e-300):
            return None
        return cls(w, V, z_ss)

    def start(self, z0: np.ndarray):
        return self.Vinv @ (z0 - self.z_ss)

    def step(self, state, h: float):
        return state * np.exp(self.w * h)

    def coords(self, state) -> np.ndarray:
        return self.z_ss + (self.V @ state).real


def _propagate(rho0: DensityMatrix4, liouv: Liouvillian, times, dt_max: float | None):
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and non-decreasing")
    if dt_max is not None and not dt_max > 0:
        raise ValueError("dt_max must be > 0")
    M = _real_generator(liouv)
    stepper = _ModalStepper.build(M) or _ExpmStepper(M, liouv)
    state = stepper.start(_to_coords(rho0.data)[1:])

    def current():
        return _from_coords(np.concatenate([[0.5], stepper.coords(state)]))

    now = 0.0
    out = []
    for target in times:
        span = target - now
        if span > 0:
            nsteps = 1 if dt_max is None else max(1, math.ceil(span / dt_max))
            if nsteps > 1_000_000:
                raise ValueError(f"dt_max={dt_max} needs {nsteps} steps; refusing")
            h = span / nsteps
            for i in range(nsteps):
                state = stepper.step(state, h)
                problems = DensityMatrix4(current()).invariant_violations()
                if problems:
                    raise StiffnessError(
                        f"invariant lost during propagation at t={now + (i + 1) * h:.6g} s: "
                        f"{'; '.join(problems)}"
                    )
            now = target
        out.append(DensityMatrix4(current()))
    return out


def time_evolve(
    rho0: DensityMatrix4,
    liouv: Liouvillian,
    t: float,
    dt_max: float | None = None,
) -> DensityMatrix4:
    """Evolve ``rho0`` for ``t`` seconds under ``liouv``.

    The generator is time independent, so each step uses the exact exponential
    propagator written in a Hermitian-operator basis; trace and Hermiticity
    are preserved by construction and positivity is checked after every step
    (at most ``dt_max`` long).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    rho0 = rho0 if isinstance(rho0, DensityMatrix4) else DensityMatrix4(rho0)
    if t == 0:
        return rho0
    return _propagate(rho0, liouv, [t], dt_max)[0]


def trajectory(rho0: DensityMatrix4, liouv: Liouvillian, times, dt_max: float | None = None):
    rho0 = rho0 if isinstance(rho0, DensityMatrix4) else DensityMatrix4(rho0)
    return _propagate(rho0, liouv, times, dt_max)


def fluorescence_rate(rho: DensityMatrix4, species: IonSpecies) -> float:
    """Photons per second per ion scattered on the P -> S line."""
    # a dark state can leave rho_PP at -1e-17 from round-off
    return species.gamma_P * species.beta_PS * max(float(rho.data[P, P].real), 0.0)


def solve_point(
    species: IonSpecies,
    lasers: LaserParams,
    rho0: DensityMatrix4 | None = None,
    include_metastable_decay: bool = False,
) -> DensityMatrix4:
    """Steady state for one set of laser parameters."""
    H = build_hamiltonian(lasers)
    L = build_liouvillian(H, species, lasers, include_metastable_decay)
    return steady_state(L, rho0)
