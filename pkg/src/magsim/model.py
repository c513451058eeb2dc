"""Physical parameter record and Hamiltonian assembly.

The hybrid consists of a transmon qutrit (levels g/e/f), the magnon Kittel
mode of a YIG sphere, and optionally the microwave cavity mode that mediates
their coupling. Absolute frequencies are in GHz, couplings/detunings/drive
amplitudes in MHz (linear), times in ns; assembled Hamiltonians are in
angular units (rad/ns).

Rotating frame: the magnon mode and the qutrit g–e transition co-rotate at
the magnon idle frequency, and the qutrit g–f ladder additionally rotates at
the e–f drive carrier. This keeps the exchange block, the e–f control drive
and a resonant magnon drive time-independent, so the long segments of every
pulse sequence propagate exactly; only qubit pulses at the work point carry
an oscillating carrier term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import (
    AssemblyError,
    DegenerateInputError,
    DispersiveRegimeError,
    NoSolutionError,
)
from .operators import (
    HilbertLayout,
    embed,
    fock_annihilation,
    number_operator,
    qutrit_operators,
)

__all__ = [
    "PhysicalParams",
    "ATDoublet",
    "effective_coupling",
    "at_shift_mhz",
    "at_doublet",
    "required_drive_amplitude",
    "frame_frequencies",
    "channel_frame_freq",
    "build_hamiltonian",
]

TWO_PI = 2.0 * math.pi

#: Supported drive channels.
CHANNELS = ("qubit_xy", "at_control", "magnon_drive")


@dataclass(frozen=True)
class PhysicalParams:
    """Device parameters. Defaults reproduce the experiment's calibration.

    ``effective_coupling_override_mhz`` pins the qubit-magnon exchange
    strength directly (the fitted value); set it to None to use the
    cavity-mediated virtual-photon formula instead.
    """

    cavity_freq_ghz: float = 6.388
    qubit_freq_ghz: float = 5.846
    anharmonicity_ghz: float = -0.354
    magnon_idle_freq_ghz: float = 5.928
    qubit_cavity_coupling_mhz: float = 52.6
    magnon_cavity_coupling_mhz: float = 52.6
    effective_coupling_override_mhz: float | None = 5.55
    t1_qubit_us: float = 3.65
    t_phi_qubit_us: float = 9.20
    t1_magnon_ns: float = 128.0
    magnon_dephasing_rate_per_ns: float = 0.0
    cavity_decay_mhz: float = 0.0
    at_detuning_mhz: float = 3.0
    work_point_freq_ghz: float = 5.870
    coil_slope_ghz_per_ma: float = 0.028
    coil_resonance_ma: float = -4.5
    dispersive_guard_ratio: float = 8.0

    def __post_init__(self):
        for name in ("cavity_freq_ghz", "qubit_freq_ghz", "magnon_idle_freq_ghz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("t1_qubit_us", "t_phi_qubit_us", "t1_magnon_ns"):
            if not getattr(self, name) > 0:  # inf allowed, NaN/0/negative not
                raise ValueError(f"{name} must be strictly positive")
        if self.magnon_dephasing_rate_per_ns < 0 or self.cavity_decay_mhz < 0:
            raise ValueError("decay rates must be non-negative")
        if self.dispersive_guard_ratio <= 0:
            raise ValueError("dispersive_guard_ratio must be positive")
        # dispersive-regime guard: both modes far detuned from the cavity
        r = self.dispersive_guard_ratio
        dq = abs(self.qubit_freq_ghz - self.cavity_freq_ghz) * 1e3
        dm = abs(self.magnon_idle_freq_ghz - self.cavity_freq_ghz) * 1e3
        if dq < r * self.qubit_cavity_coupling_mhz:
            raise DispersiveRegimeError(
                f"qubit-cavity detuning {dq:.1f} MHz < {r:g} x "
                f"{self.qubit_cavity_coupling_mhz:g} MHz"
            )
        if dm < r * self.magnon_cavity_coupling_mhz:
            raise DispersiveRegimeError(
                f"magnon-cavity detuning {dm:.1f} MHz < {r:g} x "
                f"{self.magnon_cavity_coupling_mhz:g} MHz"
            )

    @property
    def ef_freq_ghz(self) -> float:
        """e-f transition frequency; exactly qubit + anharmonicity."""
        return self.qubit_freq_ghz + self.anharmonicity_ghz

    @property
    def at_carrier_ghz(self) -> float:
        """e-f control drive carrier: omega_ef - at_detuning."""
        return self.ef_freq_ghz - self.at_detuning_mhz * 1e-3

    def magnon_freq_at_current(self, current_ma: float) -> float:
        """Affine coil map, calibrated so the Kittel mode crosses the qubit
        transition at ``coil_resonance_ma``."""
        return self.qubit_freq_ghz + self.coil_slope_ghz_per_ma * (
            current_ma - self.coil_resonance_ma
        )

    def without_decoherence(self) -> "PhysicalParams":
        """Copy with all decay and dephasing channels switched off."""
        return replace(
            self,
            t1_qubit_us=math.inf,
            t_phi_qubit_us=math.inf,
            t1_magnon_ns=math.inf,
            magnon_dephasing_rate_per_ns=0.0,
            cavity_decay_mhz=0.0,
        )


@dataclass(frozen=True)
class ATDoublet:
    """Dressed doublet of the driven e-f transition.

    The drive (amplitude Omega_d, detuning Delta_d = omega_ef - omega_d)
    hybridizes |e,N> and |f,N-1> into

        |+,N> = cos(theta)|e,N> + sin(theta)|f,N-1>
        |-,N> = sin(theta)|e,N> - cos(theta)|f,N-1>

    observed from |g> at omega_pm = omega_q + Delta_d/2 ± R/2 with
    R = sqrt(Delta_d^2 + Omega_d^2) and tan(theta) = Omega_d / (R - Delta_d).
    """

    omega_plus_ghz: float
    omega_minus_ghz: float
    theta_rad: float
    plus_coeffs: tuple[float, float]
    minus_coeffs: tuple[float, float]

    def __post_init__(self):
        if self.omega_plus_ghz < self.omega_minus_ghz:
            raise AssemblyError("doublet ordering violated: omega_+ < omega_-")
        c = np.array([self.plus_coeffs, self.minus_coeffs])
        gram = c @ c.T
        if np.max(np.abs(gram - np.eye(2))) > 1e-12:
            raise AssemblyError("doublet coefficient vectors not orthonormal")

    @property
    def splitting_mhz(self) -> float:
        return (self.omega_plus_ghz - self.omega_minus_ghz) * 1e3


def effective_coupling(p: PhysicalParams) -> float:
    """Qubit-magnon exchange strength g_mq in MHz.

    Returns the override when set. Otherwise the cavity-mediated value

        g_mq = | g_mc g_qc / 2 * (1/Delta_m + 1/Delta_q) |

    with Delta_m, Delta_q the magnon/qubit detunings from the cavity.
    The dispersive guard is enforced at parameter construction.
    """
    if p.effective_coupling_override_mhz is not None:
        return float(p.effective_coupling_override_mhz)
    dm = (p.magnon_idle_freq_ghz - p.cavity_freq_ghz) * 1e3
    dq = (p.qubit_freq_ghz - p.cavity_freq_ghz) * 1e3
    return abs(
        p.magnon_cavity_coupling_mhz
        * p.qubit_cavity_coupling_mhz
        / 2.0
        * (1.0 / dm + 1.0 / dq)
    )


def at_shift_mhz(drive_amp_mhz: float, detuning_mhz: float) -> float:
    """Upper-branch shift omega_+ - omega_q in MHz.

    At zero amplitude this returns the branch limit: detuning_d for
    Delta_d > 0 (the branch is f-like there) and 0 for Delta_d < 0.
    """
    if drive_amp_mhz < 0:
        raise ValueError("drive amplitude must be non-negative")
    if drive_amp_mhz == 0.0 and detuning_mhz == 0.0:
        raise DegenerateInputError(
            "doublet undefined at zero drive and zero detuning"
        )
    r = math.hypot(detuning_mhz, drive_amp_mhz)
    return 0.5 * detuning_mhz + 0.5 * r


def at_doublet(
    p: PhysicalParams,
    drive_amp_mhz: float,
    detuning_mhz: float | None = None,
) -> ATDoublet:
    """Dressed-state doublet for a given e-f drive amplitude.

    ``detuning_mhz`` defaults to the configured at_detuning_mhz.
    """
    det = p.at_detuning_mhz if detuning_mhz is None else float(detuning_mhz)
    amp = float(drive_amp_mhz)
    if amp < 0:
        raise ValueError("drive amplitude must be non-negative")
    if amp == 0.0 and det == 0.0:
        raise DegenerateInputError("doublet undefined at zero drive and zero detuning")
    r = math.hypot(det, amp)
    shift_plus = 0.5 * det + 0.5 * r
    shift_minus = 0.5 * det - 0.5 * r
    # tan(theta) = amp / (r - det). At amp == 0 with det > 0 the ratio is
    # 0/0 but the limit is pi/2 (the upper branch is pure |f>); atan2 would
    # return 0 there and swap the branches.
    if amp == 0.0 and det > 0.0:
        theta = 0.5 * math.pi
    else:
        theta = math.atan2(amp, r - det)
    c, s = math.cos(theta), math.sin(theta)
    return ATDoublet(
        omega_plus_ghz=p.qubit_freq_ghz + shift_plus * 1e-3,
        omega_minus_ghz=p.qubit_freq_ghz + shift_minus * 1e-3,
        theta_rad=theta,
        plus_coeffs=(c, s),
        minus_coeffs=(s, -c),
    )


def required_drive_amplitude(target_shift_mhz: float, detuning_mhz: float) -> float:
    """Invert the upper-branch law: the Omega_d that puts omega_+ at
    omega_q + target_shift.

    Solves target = Delta_d/2 + sqrt(Delta_d^2 + Omega_d^2)/2, which requires
    2*target - Delta_d >= |Delta_d|; otherwise the shift is unreachable on
    this branch.
    """
    s2 = 2.0 * target_shift_mhz - detuning_mhz
    if s2 < abs(detuning_mhz):
        raise NoSolutionError(
            f"shift {target_shift_mhz:g} MHz unreachable on the upper branch "
            f"at detuning {detuning_mhz:g} MHz"
        )
    return math.sqrt(s2 * s2 - detuning_mhz * detuning_mhz)


def frame_frequencies(p: PhysicalParams) -> dict[str, float]:
    """Rotation frequency (GHz) of each tensor factor; the g-f ladder adds
    the e-f carrier on top of the |e> frame."""
    f_e = p.magnon_idle_freq_ghz
    return {
        "qutrit_e": f_e,
        "qutrit_f": f_e + p.at_carrier_ghz,
        "magnon": p.magnon_idle_freq_ghz,
        "cavity": p.magnon_idle_freq_ghz,
    }


def channel_frame_freq(p: PhysicalParams, channel: str) -> float:
    """Carrier frequency (GHz) a zero-detuning segment drives at."""
    frames = frame_frequencies(p)
    if channel == "qubit_xy":
        return frames["qutrit_e"]
    if channel == "at_control":
        return p.at_carrier_ghz
    if channel == "magnon_drive":
        return frames["magnon"]
    raise KeyError(f"unknown channel {channel!r}")


def _layout_ops(layout: HilbertLayout) -> dict[str, np.ndarray]:
    ops: dict[str, np.ndarray] = {}
    q = qutrit_operators()
    if layout.qutrit_dim:
        ops["proj_e"] = embed(q.proj_e, layout, "qutrit")
        ops["proj_f"] = embed(q.proj_f, layout, "qutrit")
        ops["raise_ge"] = embed(q.lower_ge.conj().T, layout, "qutrit")
        ops["raise_ef"] = embed(q.lower_ef.conj().T, layout, "qutrit")
    if layout.magnon_dim:
        b = fock_annihilation(layout.magnon_dim)
        ops["b"] = embed(b, layout, "magnon")
        ops["n_m"] = embed(number_operator(layout.magnon_dim), layout, "magnon")
    if layout.cavity_dim:
        a = fock_annihilation(layout.cavity_dim)
        ops["a"] = embed(a, layout, "cavity")
        ops["n_c"] = embed(number_operator(layout.cavity_dim), layout, "cavity")
    return ops


# embedded-operator cache, keyed by layout (frozen dataclass, hashable)
_OPS_CACHE: dict[HilbertLayout, dict[str, np.ndarray]] = {}


def layout_operators(layout: HilbertLayout) -> dict[str, np.ndarray]:
    """Embedded operators for a layout (cached; treat entries as read-only)."""
    try:
        return _OPS_CACHE[layout]
    except KeyError:
        ops = _layout_ops(layout)
        _OPS_CACHE[layout] = ops
        return ops


def build_hamiltonian(
    p: PhysicalParams,
    layout: HilbertLayout,
    segments: Iterable = (),
    t: float = 0.0,
    at_mode: str = "dressed",
) -> np.ndarray:
    """Instantaneous rotating-frame Hamiltonian in rad/ns.

    ``segments`` are the drive segments active at time ``t`` (objects with
    channel, phase_rad, carrier_detuning_mhz attributes and an
    ``amplitude_at(t)`` method returning MHz, e.g. schedule.PulseSegment).

    at_mode selects how the e-f control drive enters:

    - "dressed": a diagonal shift placing the excited level at omega_+ from
      `at_doublet` (the frequency-control reading used for sequence
      dynamics; the exchange then runs at the full g_mq). Zero amplitude
      means drive off (bare qubit), avoiding the discontinuous
      zero-amplitude branch limit.
    - "literal": the three-level RWA drive term (Omega_d/2)|f><e| + h.c.,
      used for dressed-state spectroscopy oracles and leakage studies.

    Exchange terms: direct qubit-magnon g_mq when the cavity factor is
    absent; otherwise qubit-cavity (with the sqrt(2)-enhanced e-f dipole)
    plus magnon-cavity, and no direct term.
    """
    if at_mode not in ("dressed", "literal"):
        raise ValueError(f"unknown at_mode {at_mode!r}")
    ops = layout_operators(layout)
    frames = frame_frequencies(p)
    dim = layout.dim
    h = np.zeros((dim, dim), dtype=complex)

    if layout.qutrit_dim:
        eps_e = p.qubit_freq_ghz - frames["qutrit_e"]
        eps_f = p.qubit_freq_ghz + p.ef_freq_ghz - frames["qutrit_f"]
        h += TWO_PI * eps_e * ops["proj_e"]
        h += TWO_PI * eps_f * ops["proj_f"]
    if layout.magnon_dim:
        h += TWO_PI * (p.magnon_idle_freq_ghz - frames["magnon"]) * ops["n_m"]

    if layout.cavity_dim:
        h += TWO_PI * (p.cavity_freq_ghz - frames["cavity"]) * ops["n_c"]
        if layout.qutrit_dim:
            gqc = p.qubit_cavity_coupling_mhz * 1e-3
            dip = ops["raise_ge"] + math.sqrt(2.0) * ops["raise_ef"]
            term = gqc * (dip @ ops["a"])
            h += TWO_PI * (term + term.conj().T)
        if layout.magnon_dim:
            gmc = p.magnon_cavity_coupling_mhz * 1e-3
            term = gmc * (ops["a"].conj().T @ ops["b"])
            h += TWO_PI * (term + term.conj().T)
    elif layout.qutrit_dim and layout.magnon_dim:
        g = effective_coupling(p) * 1e-3
        term = g * (ops["raise_ge"] @ ops["b"])
        h += TWO_PI * (term + term.conj().T)

    for seg in segments:
        amp = seg.amplitude_at(t)  # MHz
        if amp == 0.0 and seg.channel != "at_control":
            continue
        if seg.channel == "qubit_xy":
            phase = TWO_PI * seg.carrier_detuning_mhz * 1e-3 * t + seg.phase_rad
            term = 0.5 * amp * 1e-3 * np.exp(-1j * phase) * ops["raise_ge"]
            h += TWO_PI * (term + term.conj().T)
        elif seg.channel == "magnon_drive":
            phase = TWO_PI * seg.carrier_detuning_mhz * 1e-3 * t + seg.phase_rad
            term = 0.5 * amp * 1e-3 * np.exp(-1j * phase) * ops["b"].conj().T
            h += TWO_PI * (term + term.conj().T)
        elif seg.channel == "at_control":
            if at_mode == "literal":
                phase = TWO_PI * seg.carrier_detuning_mhz * 1e-3 * t + seg.phase_rad
                term = 0.5 * amp * 1e-3 * np.exp(-1j * phase) * ops["raise_ef"]
                h += TWO_PI * (term + term.conj().T)
            elif amp > 0.0:
                det_eff = p.at_detuning_mhz - seg.carrier_detuning_mhz
                shift = at_shift_mhz(amp, det_eff)
                h += TWO_PI * shift * 1e-3 * ops["proj_e"]
        else:
            raise KeyError(f"unknown channel {seg.channel!r}")

    resid = np.max(np.abs(h - h.conj().T))
    if resid > 1e-12 * max(1.0, float(np.max(np.abs(h)))):
        raise AssemblyError(f"assembled Hamiltonian not Hermitian: {resid:.2e}")
    return h
