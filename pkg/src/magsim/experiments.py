"""Experiment drivers: spectroscopy maps, the chevron scan, swap curves,
state preparation, and shot-noise sampling.

The 2D spectroscopy maps (avoided crossing, AT scan) are synthesized from
eigenvalues plus Lorentzian broadening; `probe_spectrum_dynamic` is the slow
full-dynamics cross-check. Chevron and swap curves run the full Lindblad
engine, one trajectory per detuning column, sampled along the plateau.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from scipy import optimize

from .errors import ConfigError, InvalidStateError, ResolutionError
from .lindblad import DensityMatrix, evolve, partial_trace, readout_excited
from .model import (
    PhysicalParams,
    at_doublet,
    channel_frame_freq,
    effective_coupling,
    required_drive_amplitude,
)
from .operators import HilbertLayout, fock_state
from . import schedule as sch

__all__ = [
    "Axis",
    "ScanResult",
    "ShotModel",
    "run_avoided_crossing",
    "run_at_scan",
    "run_chevron",
    "run_swap",
    "fourier_analysis",
    "prepare_magnon_state",
    "probe_spectrum_dynamic",
    "sample_readout",
    "spectral_peaks",
    "first_minimum",
]

DEFAULT_SHOTS = 82_500

_PREP_LAYOUT = HilbertLayout(qutrit_dim=3, magnon_dim=6)


# --------------------------------------------------------------- containers

@dataclass(frozen=True)
class Axis:
    name: str
    unit: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ConfigError(f"axis {self.name!r} has no grid points")


@dataclass(frozen=True)
class ScanResult:
    """Gridded scan output. data has one index per axis, in axis order."""

    axes: tuple[Axis, ...]
    data: np.ndarray
    metadata: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None
    probability: bool = False

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", d)
        shape = tuple(len(ax.values) for ax in self.axes)
        if d.shape != shape:
            raise InvalidStateError(f"data shape {d.shape} != axis grid {shape}")
        if self.stderr is not None:
            e = np.asarray(self.stderr, dtype=float)
            object.__setattr__(self, "stderr", e)
            if e.shape != shape:
                raise InvalidStateError(f"stderr shape {e.shape} != axis grid {shape}")
        if self.probability:
            if d.min() < -1e-8 or d.max() > 1.0 + 1e-8:
                raise InvalidStateError(
                    f"probabilities outside [0, 1]: min {d.min():.3e}, max {d.max():.3e}"
                )
            # integrator-scale overshoot is clipped, not reported
            object.__setattr__(self, "data", np.clip(d, 0.0, 1.0))

    def to_dict(self) -> dict:
        out = {
            "axes": [
                {"name": ax.name, "unit": ax.unit, "values": list(ax.values)}
                for ax in self.axes
            ],
            "data": self.data.tolist(),
            "metadata": self.metadata,
            "probability": self.probability,
        }
        if self.stderr is not None:
            out["stderr"] = self.stderr.tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ScanResult":
        axes = tuple(
            Axis(name=a["name"], unit=a["unit"], values=tuple(a["values"]))
            for a in d["axes"]
        )
        return cls(
            axes=axes,
            data=np.asarray(d["data"], dtype=float),
            metadata=d.get("metadata", {}),
            stderr=None if d.get("stderr") is None else np.asarray(d["stderr"]),
            probability=d.get("probability", False),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScanResult":
        return cls.from_dict(json.loads(text))

    def to_csv(self, value_name: str = "value") -> str:
        """One row per grid point: axis columns, value, then stderr if any."""
        cols = [f"{ax.name}_{ax.unit}" for ax in self.axes] + [value_name]
        if self.stderr is not None:
            cols.append("stderr")
        lines = [",".join(cols)]
        grids = [ax.values for ax in self.axes]
        for idx in np.ndindex(self.data.shape):
            row = [repr(float(grids[k][i])) for k, i in enumerate(idx)]
            row.append(repr(float(self.data[idx])))
            if self.stderr is not None:
                row.append(repr(float(self.stderr[idx])))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ShotModel:
    """Finite sampling of a readout probability.

    assignment_matrix[i][j] is the probability of reporting outcome i given
    true outcome j (columns sum to 1); outcome 1 is "excited".
    """

    shots: int = DEFAULT_SHOTS
    seed: int = 0
    assignment_matrix: tuple = ((1.0, 0.0), (0.0, 1.0))

    def __post_init__(self):
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        a = np.asarray(self.assignment_matrix, dtype=float)
        if a.shape != (2, 2) or a.min() < 0:
            raise ConfigError("assignment matrix must be 2x2 with entries >= 0")
        if np.max(np.abs(a.sum(axis=0) - 1.0)) > 1e-9:
            raise ConfigError("assignment matrix columns must sum to 1")
        object.__setattr__(
            self, "assignment_matrix", tuple(tuple(float(x) for x in r) for r in a)
        )

    def reported_probability(self, prob: float) -> float:
        a = self.assignment_matrix
        return a[1][1] * prob + a[1][0] * (1.0 - prob)


def sample_readout(
    prob: float, shots: ShotModel, index: int = 0
) -> tuple[float, float]:
    """Binomial estimate of a readout probability and its standard error.

    The per-point RNG stream is derived from (master seed, point index) so
    grids sample identically regardless of execution order.
    """
    if not 0.0 <= prob <= 1.0 + 1e-12:
        raise InvalidStateError(f"probability {prob} outside [0, 1]")
    q = min(1.0, max(0.0, shots.reported_probability(prob)))
    rng = np.random.default_rng(np.random.SeedSequence((shots.seed, index)))
    k = int(rng.binomial(shots.shots, q))
    est = k / shots.shots
    err = math.sqrt(est * (1.0 - est) / shots.shots)
    return est, err


# ------------------------------------------------------------- concurrency

def _indexed_map(fn, items, workers: int | None):
    """Ordered map over independent work items; per-item arithmetic is
    identical for any pool size."""
    n = len(items)
    if workers is None:
        workers = min(32, os.cpu_count() or 1)
    workers = max(1, min(workers, n))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _params_snapshot(p: PhysicalParams) -> dict:
    return {k: float(v) for k, v in dataclasses.asdict(p).items()}


# ------------------------------------------------------- peak/min extraction

def _parabolic_refine(x: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    """Vertex of the parabola through points i-1, i, i+1 (falls back to the
    grid point at the edges)."""
    if i == 0 or i == len(y) - 1:
        return float(x[i]), float(y[i])
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom == 0.0:
        return float(x[i]), float(y[i])
    delta = 0.5 * (y[i - 1] - y[i + 1]) / denom
    delta = max(-0.5, min(0.5, delta))
    step = 0.5 * (x[min(i + 1, len(x) - 1)] - x[max(i - 1, 0)])
    return float(x[i] + delta * step), float(y[i] - 0.25 * (y[i - 1] - y[i + 1]) * delta)


def spectral_peaks(
    grid: np.ndarray, values: np.ndarray, n_peaks: int
) -> list[float]:
    """Positions of the n_peaks tallest local maxima, parabola-refined,
    sorted by position."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    cand = [
        i
        for i in range(1, len(values) - 1)
        if values[i] > values[i - 1] and values[i] >= values[i + 1]
    ]
    if not cand:
        cand = [int(np.argmax(values))]
    cand.sort(key=lambda i: values[i], reverse=True)
    picked = cand[:n_peaks]
    return sorted(_parabolic_refine(grid, values, i)[0] for i in picked)


def first_minimum(grid: np.ndarray, values: np.ndarray) -> float:
    """Position of the first local minimum, parabola-refined."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    for i in range(1, len(values) - 1):
        if values[i] < values[i - 1] and values[i] <= values[i + 1]:
            return _parabolic_refine(grid, values, i)[0]
    raise ResolutionError("no local minimum inside the grid; extend the tau span")


def _dft_peak_mhz(
    tau: np.ndarray, row: np.ndarray, pad_factor: int = 8
) -> tuple[np.ndarray, np.ndarray, float]:
    """Zero-padded DFT magnitude of a uniform-grid row and its dominant
    nonzero-frequency component, parabola-refined. Returns
    (frequencies_mhz, magnitudes, peak_mhz)."""
    n_pad = pad_factor * len(row)
    freqs_mhz = np.fft.rfftfreq(n_pad, d=float(tau[1] - tau[0])) * 1e3
    mag = np.abs(np.fft.rfft(row - np.mean(row), n=n_pad))
    i = 1 + int(np.argmax(mag[1:]))
    return freqs_mhz, mag, _parabolic_refine(freqs_mhz, mag, i)[0]


def _fit_oscillation(
    tau: np.ndarray, values: np.ndarray, f0_mhz: float
) -> float:
    """Frequency of the damped oscillation in values, MHz.

    Least squares against c0 + (c1 + a cos + b sin)(2 pi f tau) e^(-g tau)
    with the linear coefficients projected out, so only (f, g) are searched.
    The padded-DFT peak alone is biased by a few percent of a bin for a
    decaying waveform; the time-domain fit removes that.
    """
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)

    def residual(x) -> float:
        f_mhz, gamma = x
        envelope = np.exp(-gamma * tau)
        phase = 2e-3 * math.pi * f_mhz * tau
        cols = np.column_stack(
            (
                np.ones_like(tau),
                envelope,
                envelope * np.cos(phase),
                envelope * np.sin(phase),
            )
        )
        coef, _, _, _ = np.linalg.lstsq(cols, values, rcond=None)
        r = values - cols @ coef
        return float(r @ r)

    half_window = max(1.5, 0.15 * f0_mhz)
    res = optimize.minimize(
        residual,
        x0=(f0_mhz, 8e-3),
        method="L-BFGS-B",
        bounds=((max(0.05, f0_mhz - half_window), f0_mhz + half_window), (1e-6, 0.06)),
    )
    return float(res.x[0])


# ------------------------------------------------------ spectroscopy (fast)

def _coherence_hwhm_ghz(p: PhysicalParams) -> dict[str, float]:
    """Half-widths (GHz, linear frequency) of the bare transition lines."""
    t1 = p.t1_qubit_us * 1e3
    tphi = p.t_phi_qubit_us * 1e3
    gamma_q = 0.5 / t1 + 1.0 / tphi          # g-e coherence decay, rad/ns / (2pi)
    gamma_f = 1.0 / t1 + 4.0 / tphi          # g-f coherence
    gamma_m = 0.5 / p.t1_magnon_ns + p.magnon_dephasing_rate_per_ns
    two_pi = 2.0 * math.pi
    return {
        "qubit": gamma_q / two_pi,
        "f": gamma_f / two_pi,
        "magnon": gamma_m / two_pi,
    }


def _lorentzian_sum(
    probe: np.ndarray, centers: list[float], amps: list[float], hwhms: list[float]
) -> np.ndarray:
    out = np.zeros_like(probe)
    for c, a, w in zip(centers, amps, hwhms):
        out += a * w * w / ((probe - c) ** 2 + w * w)
    return out


def run_avoided_crossing(
    p: PhysicalParams,
    coil_grid_ma,
    probe_grid_ghz,
) -> ScanResult:
    """Qubit-line spectroscopy versus coil current, synthesized from the
    eigenvalues of the undriven single-excitation block."""
    coil = np.asarray(list(coil_grid_ma), dtype=float)
    probe = np.asarray(list(probe_grid_ghz), dtype=float)
    g = effective_coupling(p) * 1e-3  # GHz
    wq = p.qubit_freq_ghz
    widths = _coherence_hwhm_ghz(p)
    data = np.zeros((coil.size, probe.size))
    for i, cur in enumerate(coil):
        wm = p.magnon_freq_at_current(cur)
        h = np.array([[wq, g], [g, wm]])
        evals, evecs = np.linalg.eigh(h)
        centers, amps, hwhms = [], [], []
        for k in range(2):
            w_qubit = float(abs(evecs[0, k]) ** 2)
            centers.append(float(evals[k]))
            amps.append(w_qubit)
            hwhms.append(w_qubit * widths["qubit"] + (1 - w_qubit) * widths["magnon"])
        data[i] = _lorentzian_sum(probe, centers, amps, hwhms)
    meta = {
        "params": _params_snapshot(p),
        "mode": "eigenvalue_synthesis",
        "resonant_coil_ma": float(p.coil_resonance_ma),
    }
    return ScanResult(
        axes=(
            Axis("coil_current", "ma", tuple(coil)),
            Axis("probe_freq", "ghz", tuple(probe)),
        ),
        data=data,
        metadata=meta,
    )


def _at_triplet(p: PhysicalParams, amp_mhz: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the driven single-excitation block
    {|e,0>, |f,0>, |g,1>} in the drive's rotating frame (absolute GHz)."""
    wq = p.qubit_freq_ghz
    wm = p.magnon_idle_freq_ghz
    dd = p.at_detuning_mhz * 1e-3
    half_omega = 0.5 * amp_mhz * 1e-3
    g = effective_coupling(p) * 1e-3
    h = np.array(
        [
            [wq, half_omega, g],
            [half_omega, wq + dd, 0.0],
            [g, 0.0, wm],
        ]
    )
    return np.linalg.eigh(h)


def run_at_scan(
    p: PhysicalParams,
    amp_grid_mhz,
    probe_grid_ghz,
) -> ScanResult:
    """Qubit-line spectroscopy versus e-f drive amplitude. The magnon line
    is included so the upper-branch anticrossing shows up; metadata carries
    the closed-form branch separations for each amplitude."""
    amps_grid = np.asarray(list(amp_grid_mhz), dtype=float)
    probe = np.asarray(list(probe_grid_ghz), dtype=float)
    widths = _coherence_hwhm_ghz(p)
    data = np.zeros((amps_grid.size, probe.size))
    separations = []
    for i, amp in enumerate(amps_grid):
        evals, evecs = _at_triplet(p, amp)
        centers, line_amps, hwhms = [], [], []
        for k in range(3):
            w_e = float(abs(evecs[0, k]) ** 2)
            w_f = float(abs(evecs[1, k]) ** 2)
            w_m = float(abs(evecs[2, k]) ** 2)
            centers.append(float(evals[k]))
            line_amps.append(w_e)
            hwhms.append(
                w_e * widths["qubit"] + w_f * widths["f"] + w_m * widths["magnon"]
            )
        data[i] = _lorentzian_sum(probe, centers, line_amps, hwhms)
        separations.append(at_doublet(p, float(amp)).splitting_mhz)
    meta = {
        "params": _params_snapshot(p),
        "mode": "eigenvalue_synthesis",
        "branch_separation_mhz": separations,
        "magnon_crossing_amp_mhz": float(
            required_drive_amplitude(
                (p.magnon_idle_freq_ghz - p.qubit_freq_ghz) * 1e3,
                p.at_detuning_mhz,
            )
        ),
    }
    return ScanResult(
        axes=(
            Axis("drive_amp", "mhz", tuple(amps_grid)),
            Axis("probe_freq", "ghz", tuple(probe)),
        ),
        data=data,
        metadata=meta,
    )


# --------------------------------------------------------- dynamics scans

def _swap_trajectory(
    p: PhysicalParams,
    tau_grid: np.ndarray,
    detuning_mhz: float,
    layout: HilbertLayout,
) -> np.ndarray:
    """P_plus along the swap plateau: one trajectory, sampled mid-plateau."""
    tau_max = float(tau_grid[-1])
    plateau = tau_max if tau_max > 0 else 1.0
    sched = sch.seq_swap(p, plateau, detuning_mhz)
    t0 = sched.readout_at_ns - plateau  # plateau start (after the work hold)
    samples = tuple(t0 + float(t) for t in tau_grid)
    res = evolve(p, layout, DensityMatrix.ground(layout), sched, sample_times=samples)
    return np.array([readout_excited(s, layout) for s in res.states])


def run_chevron(
    p: PhysicalParams,
    tau_grid_ns,
    detuning_grid_mhz,
    shots: ShotModel | None = None,
    workers: int | None = None,
    layout: HilbertLayout | None = None,
) -> ScanResult:
    """P_plus(tau, detuning) from the full Lindblad engine."""
    tau = np.asarray(list(tau_grid_ns), dtype=float)
    det = np.asarray(list(detuning_grid_mhz), dtype=float)
    if tau.size == 0 or det.size == 0:
        raise ConfigError("chevron grids must be non-empty")
    if tau.size > 1 and np.any(np.diff(tau) <= 0):
        raise ConfigError("tau grid must be strictly increasing")
    layout = layout or _PREP_LAYOUT

    cols = _indexed_map(
        lambda d: _swap_trajectory(p, tau, float(d), layout), list(det), workers
    )
    data = np.column_stack(cols)  # (tau, detuning)
    stderr = None
    meta = {
        "params": _params_snapshot(p),
        "layout": [layout.qutrit_dim, layout.magnon_dim, layout.cavity_dim],
    }
    if shots is not None:
        est = np.empty_like(data)
        err = np.empty_like(data)
        for i in range(tau.size):
            for j in range(det.size):
                idx = i * det.size + j
                est[i, j], err[i, j] = sample_readout(float(data[i, j]), shots, idx)
        data, stderr = est, err
        meta["shots"] = shots.shots
        meta["seed"] = shots.seed
    return ScanResult(
        axes=(
            Axis("tau", "ns", tuple(tau)),
            Axis("detuning", "mhz", tuple(det)),
        ),
        data=data,
        metadata=meta,
        stderr=stderr,
        probability=True,
    )


def run_swap(
    p: PhysicalParams,
    tau_grid_ns,
    magnon_detuning_mhz: float = 0.0,
    shots: ShotModel | None = None,
    layout: HilbertLayout | None = None,
) -> ScanResult:
    """Resonant (or detuned) swap curve P_plus(tau).

    Metadata reports the full swap time first_minimum_ns as the half period
    of the fitted exchange oscillation. That is where the first minimum of
    the undamped exchange sits; the raw sampled minimum trails it by about
    1.5 ns at the default lifetimes, because the magnon decays much faster
    than the qubit and the asymmetry retards the zero crossing of the qubit
    amplitude by (gamma_m - gamma_q)/4 in phase. The raw reading is kept
    alongside as raw_minimum_ns.
    """
    tau = np.asarray(list(tau_grid_ns), dtype=float)
    if tau.size < 3:
        raise ConfigError("swap needs at least 3 tau points")
    if np.any(np.diff(tau) <= 0):
        raise ConfigError("tau grid must be strictly increasing")
    layout = layout or _PREP_LAYOUT
    curve = _swap_trajectory(p, tau, magnon_detuning_mhz, layout)
    stderr = None
    meta = {"params": _params_snapshot(p), "detuning_mhz": float(magnon_detuning_mhz)}
    if shots is not None:
        pairs = [sample_readout(float(v), shots, i) for i, v in enumerate(curve)]
        curve = np.array([a for a, _ in pairs])
        stderr = np.array([b for _, b in pairs])
        meta["shots"] = shots.shots
        meta["seed"] = shots.seed

    try:
        raw_min = first_minimum(tau, curve)
    except ResolutionError:
        raw_min = None
    steps = np.diff(tau)
    uniform = tau.size >= 8 and float(np.max(np.abs(steps - steps[0]))) < 1e-9
    if uniform:
        _, _, f0 = _dft_peak_mhz(tau, curve)
    elif raw_min is not None:
        f0 = 500.0 / raw_min
    else:
        raise ResolutionError(
            "tau grid too short to locate the swap oscillation; extend it"
        )
    f_hat = _fit_oscillation(tau, curve, f0)
    meta["oscillation_mhz"] = f_hat
    meta["first_minimum_ns"] = 500.0 / f_hat
    if raw_min is not None:
        meta["raw_minimum_ns"] = raw_min
    return ScanResult(
        axes=(Axis("tau", "ns", tuple(tau)),),
        data=curve,
        metadata=meta,
        stderr=stderr,
        probability=True,
    )


def fourier_analysis(chevron: ScanResult, pad_factor: int = 8) -> ScanResult:
    """Per-detuning DFT magnitude of the chevron rows, the extracted peak
    frequencies, and the least-squares fit of peak(detuning) to
    sqrt(4 g^2 + detuning^2)."""
    if len(chevron.axes) != 2 or chevron.axes[0].name != "tau":
        raise ConfigError("fourier_analysis expects a (tau, detuning) chevron scan")
    tau = np.asarray(chevron.axes[0].values)
    det = np.asarray(chevron.axes[1].values)
    steps = np.diff(tau)
    if tau.size < 4 or np.max(np.abs(steps - steps[0])) > 1e-9:
        raise ConfigError("fourier_analysis needs a uniform tau grid of >= 4 points")
    span = float(tau[-1] - tau[0])
    resolution_mhz = 1e3 / span

    freqs_mhz = None
    spectra = np.zeros((det.size, pad_factor * tau.size // 2 + 1))
    dft_peaks = []
    for j in range(det.size):
        freqs_mhz, mag, pk = _dft_peak_mhz(tau, chevron.data[:, j], pad_factor)
        spectra[j] = mag
        dft_peaks.append(pk)
    dft_peaks = np.array(dft_peaks)

    if float(dft_peaks.min()) < 2.0 * resolution_mhz:
        raise ResolutionError(
            f"tau span {span:g} ns cannot resolve the slowest oscillation "
            f"({dft_peaks.min():.2f} MHz < 2 bins); extend the tau grid"
        )

    # time-domain refinement: the DFT peak of a decaying row is biased
    peaks = np.array(
        [
            _fit_oscillation(tau, chevron.data[:, j], dft_peaks[j])
            for j in range(det.size)
        ]
    )

    def misfit(g_mhz: float) -> float:
        model = np.sqrt(4.0 * g_mhz**2 + det**2)
        return float(np.sum((peaks - model) ** 2))

    res = optimize.minimize_scalar(
        misfit, bounds=(0.1, 50.0), method="bounded", options={"xatol": 1e-10}
    )
    fitted_g = float(res.x)

    meta = {
        "peak_frequencies_mhz": [float(v) for v in peaks],
        "fitted_g_mhz": fitted_g,
        "fit_residual": float(res.fun),
        "resolution_mhz": resolution_mhz,
    }
    meta.update({k: v for k, v in chevron.metadata.items() if k in ("params", "seed", "shots")})
    return ScanResult(
        axes=(
            Axis("detuning", "mhz", tuple(det)),
            Axis("frequency", "mhz", tuple(freqs_mhz)),
        ),
        data=spectra,
        metadata=meta,
    )


# ---------------------------------------------------------- state prep

def _ideal_prep_state(
    p: PhysicalParams, target: str, coeff: complex, layout: HilbertLayout
) -> DensityMatrix:
    """Instantaneous perfect rotation: the qubit ket that one full swap maps
    onto the requested magnon state (the swap contributes a -i on the
    transferred amplitude, absorbed here)."""
    dim_m = layout.magnon_dim
    if target == "single_magnon":
        qubit = np.array([0.0, 1.0, 0.0], dtype=complex)
    else:
        c = complex(coeff)
        qubit = np.array([1.0, 1j * c, 0.0], dtype=complex) / math.sqrt(
            1.0 + abs(c) ** 2
        )
    ket = np.kron(qubit, fock_state(dim_m, 0))
    return DensityMatrix.from_pure(layout, ket)


def prepare_magnon_state(
    p: PhysicalParams,
    target: str,
    superposition_coeff: complex = 1.0,
    *,
    ideal_pulses: bool = False,
    layout: HilbertLayout | None = None,
    **prep_kwargs,
) -> DensityMatrix:
    """Simulate the preparation sequence and return the reduced magnon state.

    ideal_pulses replaces the rotation pulse by an instantaneous unitary (the
    protocol limit with perfect calibration); the swap window is still
    simulated.
    """
    layout = layout or _PREP_LAYOUT
    if target not in sch.PREP_TARGETS:
        raise ConfigError(f"unknown prep target {target!r}")
    if target == "vacuum":
        rho0 = DensityMatrix.ground(layout)
        return partial_trace(rho0, layout, "magnon")
    if ideal_pulses:
        rho0 = _ideal_prep_state(p, target, superposition_coeff, layout)
        swap = sch.PulseSegment(
            channel="at_control",
            start_ns=0.0,
            duration_ns=sch.full_swap_duration_ns(p),
            amplitude_mhz=sch.swap_drive_amplitude(p),
        )
        sched = sch.PulseSchedule(segments=(swap,), readout_at_ns=swap.end_ns)
    else:
        rho0 = DensityMatrix.ground(layout)
        sched = sch.seq_state_prep(p, target, superposition_coeff, **prep_kwargs)
    final = evolve(p, layout, rho0, sched).final
    return partial_trace(final, layout, "magnon")


# ------------------------------------------------- slow spectroscopy check

def probe_spectrum_dynamic(
    p: PhysicalParams,
    probe_grid_ghz,
    coil_ma: float | None = None,
    probe_amp_mhz: float = 0.05,
    duration_ns: float = 2000.0,
    layout: HilbertLayout | None = None,
    workers: int | None = None,
) -> ScanResult:
    """Full-dynamics weak-probe spectroscopy (validation path): drive the
    qubit softly at each probe frequency and record P_plus."""
    probe = np.asarray(list(probe_grid_ghz), dtype=float)
    layout = layout or _PREP_LAYOUT
    if coil_ma is not None:
        p = dataclasses.replace(
            p, magnon_idle_freq_ghz=p.magnon_freq_at_current(coil_ma)
        )
    frame = channel_frame_freq(p, "qubit_xy")

    def one(f_ghz: float) -> float:
        seg = sch.PulseSegment(
            channel="qubit_xy",
            start_ns=0.0,
            duration_ns=duration_ns,
            amplitude_mhz=probe_amp_mhz,
            carrier_detuning_mhz=(f_ghz - frame) * 1e3,
        )
        sched = sch.PulseSchedule(segments=(seg,), readout_at_ns=duration_ns)
        rho = evolve(p, layout, DensityMatrix.ground(layout), sched).final
        return readout_excited(rho, layout)

    vals = np.array(_indexed_map(one, [float(f) for f in probe], workers))
    return ScanResult(
        axes=(Axis("probe_freq", "ghz", tuple(probe)),),
        data=vals,
        metadata={"params": _params_snapshot(p), "mode": "weak_probe_dynamics"},
        probability=True,
    )
