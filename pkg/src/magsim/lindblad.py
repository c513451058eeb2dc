"""Open-system time evolution of pulse schedules.

States are density matrices on a HilbertLayout. The master equation

    drho/dt = -i[H(t), rho] + sum_k rate_k D[L_k] rho

is integrated in the rotating frame of model.build_hamiltonian, slice by
slice between segment boundaries. Slices with a time-independent generator
are propagated by an exact-action truncated Taylor expansion (deterministic:
fixed scaling from a 1-norm bound, data-dependent early exit only); slices
with an oscillating carrier or a shaped envelope use fixed-step RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegratorAccuracyError, InvalidStateError
from .model import PhysicalParams, build_hamiltonian, layout_operators
from .operators import HilbertLayout

__all__ = [
    "DensityMatrix",
    "EvolutionResult",
    "build_collapse",
    "evolve",
    "expectation",
    "partial_trace",
    "readout_excited",
]

#: Taylor scaling target for ||generator * substep||_1.
_TAYLOR_THETA = 4.0
_TAYLOR_MAX_TERMS = 60

TRACE_TOL = 1e-7
HERMITICITY_TOL = 1e-9
EIGENVALUE_TOL = -1e-8


@dataclass(frozen=True)
class DensityMatrix:
    """Validated density matrix on a tensor layout."""

    layout: HilbertLayout
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        object.__setattr__(self, "data", d)
        if d.shape != (self.layout.dim, self.layout.dim):
            raise InvalidStateError(
                f"state shape {d.shape} does not match layout dim {self.layout.dim}"
            )
        self.validate()

    def validate(self):
        d = self.data
        herm = float(np.max(np.abs(d - d.conj().T)))
        if herm > HERMITICITY_TOL:
            raise InvalidStateError(f"state not Hermitian: deviation {herm:.2e}")
        tr = complex(np.trace(d))
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"state trace {tr:.10f} != 1")
        w = np.linalg.eigvalsh(d)
        if w[0] < EIGENVALUE_TOL:
            raise InvalidStateError(f"state has negative eigenvalue {w[0]:.2e}")

    def __getitem__(self, idx):
        return self.data[idx]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)

    @classmethod
    def ground(cls, layout: HilbertLayout) -> "DensityMatrix":
        d = np.zeros((layout.dim, layout.dim), dtype=complex)
        d[0, 0] = 1.0
        return cls(layout=layout, data=d)

    @classmethod
    def from_pure(cls, layout: HilbertLayout, ket: np.ndarray) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex).reshape(-1)
        if v.shape != (layout.dim,):
            raise InvalidStateError(
                f"ket length {v.shape[0]} does not match layout dim {layout.dim}"
            )
        n = np.linalg.norm(v)
        if n == 0:
            raise InvalidStateError("ket has zero norm")
        v = v / n
        return cls(layout=layout, data=np.outer(v, v.conj()))


@dataclass(frozen=True)
class EvolutionResult:
    """Sampled trajectory: states[i] is the density matrix at times[i]."""

    layout: HilbertLayout
    times: np.ndarray
    states: np.ndarray  # (n, dim, dim)

    @property
    def final(self) -> DensityMatrix:
        return DensityMatrix(layout=self.layout, data=self.states[-1])

    def expectations(self, op: np.ndarray) -> np.ndarray:
        """Tr(rho(t) op) along the trajectory (real part)."""
        return np.einsum("nij,ji->n", self.states, op).real


def build_collapse(
    p: PhysicalParams, layout: HilbertLayout
) -> tuple[tuple[np.ndarray, np.ndarray, float], ...]:
    """Collapse channels as (L, L^dag L, rate) triples, rates in 1/ns.

    Qutrit: g-e decay at 1/T1, e-f decay at 2/T1 (harmonic dipole scaling),
    pure dephasing sqrt(2/T_phi) * diag(0, 1, 2) so the g-e coherence damps
    at 1/T_phi. Magnon: decay at 1/T1m, optional number-operator dephasing
    (rate parameter = 0-1 coherence decay rate). Cavity: photon decay at
    2 pi kappa. Zero-rate channels are dropped.
    """
    ops = layout_operators(layout)
    chans: list[tuple[np.ndarray, float]] = []
    if layout.qutrit_dim:
        g1 = 0.0 if math.isinf(p.t1_qubit_us) else 1.0 / (p.t1_qubit_us * 1e3)
        gphi = 0.0 if math.isinf(p.t_phi_qubit_us) else 2.0 / (p.t_phi_qubit_us * 1e3)
        chans.append((ops["raise_ge"].conj().T, g1))
        chans.append((ops["raise_ef"].conj().T, 2.0 * g1))
        if gphi:
            lphi = ops["proj_e"] + 2.0 * ops["proj_f"]
            chans.append((lphi, gphi))
    if layout.magnon_dim:
        gm = 0.0 if math.isinf(p.t1_magnon_ns) else 1.0 / p.t1_magnon_ns
        chans.append((ops["b"], gm))
        if p.magnon_dephasing_rate_per_ns:
            chans.append((ops["n_m"], 2.0 * p.magnon_dephasing_rate_per_ns))
    if layout.cavity_dim and p.cavity_decay_mhz:
        chans.append((ops["a"], 2.0 * math.pi * p.cavity_decay_mhz * 1e-3))
    return tuple(
        (op, op.conj().T @ op, rate) for op, rate in chans if rate > 0.0
    )


def _apply_generator(h, collapse, x):
    out = -1j * (h @ x - x @ h)
    for op, mdag, rate in collapse:
        out += rate * (op @ x @ op.conj().T - 0.5 * (mdag @ x + x @ mdag))
    return out


def _one_norm(m) -> float:
    return float(np.max(np.abs(m).sum(axis=0)))


def _generator_norm_bound(h, collapse) -> float:
    """Upper bound on the vectorized generator's 1-norm (Kronecker-factor
    norms); only used for Taylor substep scaling, so overestimates are safe."""
    b = 2.0 * _one_norm(h)
    for op, mdag, rate in collapse:
        b += rate * (_one_norm(op) ** 2 + _one_norm(mdag))
    return b


def _taylor_static_step(h, collapse, rho, dt, norm_bound):
    """exp(generator * dt) applied to rho, exact to machine precision."""
    m = max(1, int(math.ceil(dt * norm_bound / _TAYLOR_THETA)))
    sub = dt / m
    for _ in range(m):
        acc = rho.copy()
        term = rho
        small_runs = 0
        for k in range(1, _TAYLOR_MAX_TERMS + 1):
            term = (sub / k) * _apply_generator(h, collapse, term)
            acc += term
            if np.max(np.abs(term)) <= 1e-16 * max(1.0, np.max(np.abs(acc))):
                small_runs += 1
                if small_runs == 2:
                    break
            else:
                small_runs = 0
        else:
            raise IntegratorAccuracyError(
                f"Taylor series not converged in {_TAYLOR_MAX_TERMS} terms "
                f"(substep norm {sub * norm_bound:.3f})"
            )
        rho = acc
    return rho


def _rk4_slice(p, layout, collapse, segments, at_mode, rho, t0, t1, step):
    n = max(1, int(math.ceil((t1 - t0) / step)))
    h_sub = (t1 - t0) / n
    # segments live on half-open intervals, so the slice's right edge t1
    # would read as "drive off"; stages there need the left limit
    t_top = t1 - 1e-9 * max(1.0, abs(t1))

    def ham(t):
        return build_hamiltonian(
            p, layout, segments=segments, t=min(t, t_top), at_mode=at_mode
        )

    h_right = ham(t0)
    for i in range(n):
        t = t0 + i * h_sub
        h1 = h_right
        h2 = ham(t + 0.5 * h_sub)
        h_right = ham(t + h_sub)
        k1 = _apply_generator(h1, collapse, rho)
        k2 = _apply_generator(h2, collapse, rho + 0.5 * h_sub * k1)
        k3 = _apply_generator(h2, collapse, rho + 0.5 * h_sub * k2)
        k4 = _apply_generator(h_right, collapse, rho + h_sub * k3)
        rho = rho + (h_sub / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


def _check_and_clean(rho, where: str):
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > TRACE_TOL:
        raise IntegratorAccuracyError(f"trace drift {tr - 1.0:.2e} at {where}")
    return rho / tr


def _slice_is_static(segments, at_mode: str) -> bool:
    for seg in segments:
        if seg.envelope != "rectangular":
            return False
        if seg.carrier_detuning_mhz != 0.0 and not (
            seg.channel == "at_control" and at_mode == "dressed"
        ):
            return False
    return True


def evolve(
    p: PhysicalParams,
    layout: HilbertLayout,
    rho0: DensityMatrix,
    schedule,
    *,
    at_mode: str = "dressed",
    sample_times=None,
    rk4_step_ns: float = 0.05,
) -> EvolutionResult:
    """Propagate rho0 through a PulseSchedule.

    sample_times defaults to (readout_at,); all samples must lie in
    [0, readout_at]. Returns the sampled trajectory in time order. The final
    state of the trajectory is fully validated (including positivity).
    """
    if rho0.layout != layout:
        raise InvalidStateError("initial state layout does not match")
    t_end = schedule.readout_at_ns
    if sample_times is None:
        samples = np.array([t_end], dtype=float)
    else:
        samples = np.asarray(sorted(float(t) for t in sample_times))
        if samples.size == 0:
            raise ValueError("sample_times must not be empty")
        if samples[0] < 0.0 or samples[-1] > t_end + 1e-9:
            raise ValueError("sample times must lie within [0, readout_at]")

    cuts = {0.0, t_end}
    for seg in schedule.segments:
        cuts.add(min(seg.start_ns, t_end))
        cuts.add(min(seg.end_ns, t_end))
    cuts.update(samples.tolist())
    grid = sorted(cuts)

    collapse = build_collapse(p, layout)
    rho = rho0.data.copy()
    out_states = []
    out_times = []
    sample_left = list(samples)

    def emit(t):
        while sample_left and abs(sample_left[0] - t) <= 1e-9:
            out_times.append(sample_left.pop(0))
            out_states.append(rho.copy())

    emit(grid[0])
    for t0, t1 in zip(grid, grid[1:]):
        if t1 - t0 <= 1e-12:
            emit(t1)
            continue
        mid = 0.5 * (t0 + t1)
        active = schedule.active_at(mid)
        if _slice_is_static(active, at_mode):
            h = build_hamiltonian(p, layout, segments=active, t=mid, at_mode=at_mode)
            bound = _generator_norm_bound(h, collapse)
            rho = _taylor_static_step(h, collapse, rho, t1 - t0, bound)
        else:
            rho = _rk4_slice(
                p, layout, collapse, active, at_mode, rho, t0, t1, rk4_step_ns
            )
        rho = _check_and_clean(rho, f"t={t1:g} ns")
        emit(t1)

    if sample_left:
        raise AssertionError(f"unsampled times left: {sample_left}")
    result = EvolutionResult(
        layout=layout, times=np.array(out_times), states=np.array(out_states)
    )
    result.final.validate()
    return result


def _matrix(rho) -> np.ndarray:
    return rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)


def expectation(rho, op: np.ndarray) -> float:
    """Tr(rho op), real part."""
    return float(np.einsum("ij,ji->", _matrix(rho), op).real)


def readout_excited(rho, layout: HilbertLayout) -> float:
    """Qubit excited-level population Tr(rho |e><e|)."""
    return expectation(rho, layout_operators(layout)["proj_e"])


def partial_trace(rho, layout: HilbertLayout, keep: str) -> DensityMatrix:
    """Reduced density matrix of one tensor factor, typed on its own layout."""
    names = [name for name, _ in layout.factors]
    if keep not in names:
        raise InvalidStateError(f"factor {keep!r} not in layout {names}")
    dims = [d for _, d in layout.factors]
    k = names.index(keep)
    n = len(dims)
    r = _matrix(rho).reshape(dims + dims)
    # trace out every factor except k, back to front so axes stay valid
    for i in reversed(range(n)):
        if i == k:
            continue
        r = np.trace(r, axis1=i, axis2=i + (r.ndim // 2))
    kept_dim = dims[k]
    reduced = HilbertLayout(
        qutrit_dim=kept_dim if keep == "qutrit" else 0,
        magnon_dim=kept_dim if keep == "magnon" else 0,
        cavity_dim=kept_dim if keep == "cavity" else 0,
    )
    return DensityMatrix(layout=reduced, data=r)
