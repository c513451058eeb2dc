"""Pulse segments, schedules, and the experiment's sequence builders.

Times in ns, amplitudes in MHz, phases in rad. Carrier detunings are
relative to the channel's frame frequency (see model.channel_frame_freq).
Segments live on half-open intervals [start, start + duration).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

from .errors import ScheduleError
from .model import (
    CHANNELS,
    PhysicalParams,
    at_doublet,
    channel_frame_freq,
    effective_coupling,
    required_drive_amplitude,
)

__all__ = [
    "PulseSegment",
    "PulseSchedule",
    "PI_DURATION_NS",
    "DISPLACEMENT_DURATION_NS",
    "PREP_TARGETS",
    "full_swap_duration_ns",
    "work_drive_amplitude",
    "swap_drive_amplitude",
    "displacement_loss_factor",
    "displacement_segment",
    "seq_swap",
    "seq_state_prep",
    "seq_wigner_point",
]

PI_DURATION_NS = 20.0
DISPLACEMENT_DURATION_NS = 12.0

ENVELOPES = ("rectangular", "gaussian", "ramp")


@dataclass(frozen=True)
class PulseSegment:
    channel: str
    start_ns: float
    duration_ns: float
    amplitude_mhz: float
    phase_rad: float = 0.0
    carrier_detuning_mhz: float = 0.0
    envelope: str = "rectangular"
    sigma_ns: float = 0.0          # gaussian only
    ramp_from_mhz: float = 0.0     # ramp only: start amplitude

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ScheduleError(f"unknown channel {self.channel!r}")
        if self.envelope not in ENVELOPES:
            raise ScheduleError(f"unknown envelope {self.envelope!r}")
        if self.duration_ns <= 0:
            raise ScheduleError("segment duration must be positive")
        if self.start_ns < 0:
            raise ScheduleError("segment start must be non-negative")
        if self.amplitude_mhz < 0 or (self.envelope == "ramp" and self.ramp_from_mhz < 0):
            raise ScheduleError("amplitudes must be non-negative (sign goes in phase)")
        if self.envelope == "gaussian" and self.sigma_ns <= 0:
            raise ScheduleError("gaussian envelope needs sigma_ns > 0")

    @property
    def end_ns(self) -> float:
        return self.start_ns + self.duration_ns

    def amplitude_at(self, t: float) -> float:
        """Instantaneous amplitude in MHz (0 outside the segment)."""
        if not self.start_ns <= t < self.end_ns:
            return 0.0
        if self.envelope == "rectangular":
            return self.amplitude_mhz
        if self.envelope == "gaussian":
            center = self.start_ns + 0.5 * self.duration_ns
            arg = (t - center) / self.sigma_ns
            return self.amplitude_mhz * math.exp(-0.5 * arg * arg)
        # linear ramp
        frac = (t - self.start_ns) / self.duration_ns
        return self.ramp_from_mhz + (self.amplitude_mhz - self.ramp_from_mhz) * frac


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple[PulseSegment, ...]
    readout_at_ns: float

    def __post_init__(self):
        object.__setattr__(
            self, "segments", tuple(sorted(self.segments, key=lambda s: (s.start_ns, s.channel)))
        )
        by_channel: dict[str, list[PulseSegment]] = {}
        for seg in self.segments:
            by_channel.setdefault(seg.channel, []).append(seg)
        for ch, segs in by_channel.items():
            for a, b in zip(segs, segs[1:]):
                if b.start_ns < a.end_ns - 1e-9:
                    raise ScheduleError(
                        f"overlapping segments on {ch}: "
                        f"[{a.start_ns}, {a.end_ns}) and [{b.start_ns}, {b.end_ns})"
                    )
        last_end = max((s.end_ns for s in self.segments), default=0.0)
        if self.readout_at_ns < last_end - 1e-9:
            raise ScheduleError(
                f"readout at {self.readout_at_ns} ns before last segment end {last_end} ns"
            )

    @property
    def total_duration_ns(self) -> float:
        return self.readout_at_ns

    def active_at(self, t: float) -> tuple[PulseSegment, ...]:
        return tuple(s for s in self.segments if s.start_ns <= t < s.end_ns)

    def shifted(self, dt: float) -> "PulseSchedule":
        """Copy with every segment and the readout moved later by dt >= 0."""
        segs = tuple(
            PulseSegment(**{**asdict(s), "start_ns": s.start_ns + dt})
            for s in self.segments
        )
        return PulseSchedule(segments=segs, readout_at_ns=self.readout_at_ns + dt)

    def to_dict(self) -> dict:
        return {
            "segments": [asdict(s) for s in self.segments],
            "readout_at_ns": self.readout_at_ns,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSchedule":
        segs = tuple(PulseSegment(**s) for s in d["segments"])
        return cls(segments=segs, readout_at_ns=d["readout_at_ns"])

    @classmethod
    def from_json(cls, text: str) -> "PulseSchedule":
        return cls.from_dict(json.loads(text))


PREP_TARGETS = ("vacuum", "single_magnon", "superposition")


def full_swap_duration_ns(p: PhysicalParams) -> float:
    """Duration of one complete excitation transfer, 1/(4 g_mq)."""
    return 1e3 / (4.0 * effective_coupling(p))


def work_drive_amplitude(p: PhysicalParams) -> float:
    """e-f drive amplitude parking the dressed qubit at the work point."""
    shift = (p.work_point_freq_ghz - p.qubit_freq_ghz) * 1e3
    return required_drive_amplitude(shift, p.at_detuning_mhz)


def swap_drive_amplitude(p: PhysicalParams, magnon_detuning_mhz: float = 0.0) -> float:
    """e-f drive amplitude putting the dressed qubit at the magnon frequency
    plus an optional detuning."""
    shift = (p.magnon_idle_freq_ghz - p.qubit_freq_ghz) * 1e3 + magnon_detuning_mhz
    return required_drive_amplitude(shift, p.at_detuning_mhz)


def _xy_carrier_detuning(p: PhysicalParams) -> float:
    """Carrier detuning (MHz) of a qubit pulse resonant with the work point."""
    amp = work_drive_amplitude(p)
    work_freq = at_doublet(p, amp).omega_plus_ghz
    return (work_freq - channel_frame_freq(p, "qubit_xy")) * 1e3


def displacement_loss_factor(p: PhysicalParams, duration_ns: float) -> float:
    """Amplitude shrink factor of a resonant displacement drive under magnon
    decay: (1 - e^(-x))/x with x = duration / (2 T1m). 1 when lossless."""
    x = duration_ns / (2.0 * p.t1_magnon_ns)
    if x == 0.0:
        return 1.0
    return -math.expm1(-x) / x


def displacement_segment(
    p: PhysicalParams,
    alpha: complex,
    start_ns: float,
    duration_ns: float = DISPLACEMENT_DURATION_NS,
) -> PulseSegment:
    """Resonant magnon drive realizing the displacement D(alpha).

    A drive (A/2)(e^{-i phi} b† + h.c.) for time T displaces vacuum to
    alpha = -i pi A T e^{-i phi} (A in GHz), so |alpha| = pi A T and the
    phase sets arg(alpha); the loss factor absorbs the slight decay-induced
    shrinkage during the pulse.
    """
    alpha = complex(alpha)
    scale = displacement_loss_factor(p, duration_ns)
    amp_mhz = 1e3 * abs(alpha) / (math.pi * duration_ns * scale)
    phase = -math.pi / 2.0 - (math.atan2(alpha.imag, alpha.real) if alpha != 0 else 0.0)
    return PulseSegment(
        channel="magnon_drive",
        start_ns=start_ns,
        duration_ns=duration_ns,
        amplitude_mhz=amp_mhz,
        phase_rad=phase,
    )


def _at_step_segments(
    p: PhysicalParams,
    t0: float,
    amp_from: float,
    amp_to: float,
    plateau_ns: float,
    ramp_ns: float,
) -> tuple[list[PulseSegment], float]:
    """AT amplitude step at t0, optional linear ramp, then a plateau.
    Returns (segments, plateau end time)."""
    segs: list[PulseSegment] = []
    t = t0
    if ramp_ns > 0.0:
        segs.append(
            PulseSegment(
                channel="at_control",
                start_ns=t,
                duration_ns=ramp_ns,
                amplitude_mhz=amp_to,
                envelope="ramp",
                ramp_from_mhz=amp_from,
            )
        )
        t += ramp_ns
    if plateau_ns > 0.0:
        segs.append(
            PulseSegment(
                channel="at_control",
                start_ns=t,
                duration_ns=plateau_ns,
                amplitude_mhz=amp_to,
            )
        )
        t += plateau_ns
    return segs, t


def _rotation_segments(
    p: PhysicalParams,
    angle_rad: float,
    phase_rad: float,
    pi_amplitude_mhz: float | None,
    pi_duration_ns: float,
    spacing_ns: float | None = None,
) -> tuple[list[PulseSegment], float]:
    """Work-point qubit rotation with the AT drive parked at the work
    amplitude for the pulse plus a short hold. The hold (auto-calibrated
    when None) lets the residual exchange coherence left by the sharp
    pulse edge rotate into the real quadrature before the swap step; see
    calibration.calibrate_swap_spacing. Returns (segments, end time)."""
    from . import calibration  # deferred: calibration simulates schedules

    if pi_amplitude_mhz is None:
        pi_amplitude_mhz = calibration.calibrate_pi_pulse(
            p, duration_ns=pi_duration_ns
        ).amplitude_mhz
    if spacing_ns is None:
        spacing_ns = calibration.calibrate_swap_spacing(
            p, pi_duration_ns=pi_duration_ns
        )
    if spacing_ns < 0:
        raise ScheduleError("work spacing must be non-negative")
    amp_work = work_drive_amplitude(p)
    segs = [
        PulseSegment(
            channel="at_control",
            start_ns=0.0,
            duration_ns=pi_duration_ns + spacing_ns,
            amplitude_mhz=amp_work,
        ),
        PulseSegment(
            channel="qubit_xy",
            start_ns=0.0,
            duration_ns=pi_duration_ns,
            amplitude_mhz=pi_amplitude_mhz * angle_rad / math.pi,
            phase_rad=phase_rad,
            carrier_detuning_mhz=_xy_carrier_detuning(p),
        ),
    ]
    return segs, pi_duration_ns + spacing_ns


def seq_swap(
    p: PhysicalParams,
    tau_ns: float,
    magnon_detuning_mhz: float = 0.0,
    *,
    pi_amplitude_mhz: float | None = None,
    pi_duration_ns: float = PI_DURATION_NS,
    work_spacing_ns: float | None = None,
    at_ramp_ns: float = 0.0,
) -> PulseSchedule:
    """Excite the dressed qubit at the work point, then step the e-f drive
    so the upper branch meets the magnon (plus an optional detuning) for
    tau_ns, then read out."""
    if tau_ns < 0:
        raise ScheduleError("tau must be non-negative")
    segs, t = _rotation_segments(
        p, math.pi, 0.0, pi_amplitude_mhz, pi_duration_ns, work_spacing_ns
    )
    step, t = _at_step_segments(
        p,
        t,
        work_drive_amplitude(p),
        swap_drive_amplitude(p, magnon_detuning_mhz),
        tau_ns,
        at_ramp_ns,
    )
    segs += step
    return PulseSchedule(segments=tuple(segs), readout_at_ns=t)


def seq_state_prep(
    p: PhysicalParams,
    target: str,
    superposition_coeff: complex = 1.0,
    *,
    over_rotation: float | None = None,
    pi_amplitude_mhz: float | None = None,
    pi_duration_ns: float = PI_DURATION_NS,
    work_spacing_ns: float | None = None,
    at_ramp_ns: float = 0.0,
) -> PulseSchedule:
    """Magnon state preparation sequence.

    vacuum: no pulses. single_magnon: work-point pi pulse, then one full
    swap. superposition: rotation by 2*atan(|c|) (times the loss-compensating
    over-rotation factor, auto-calibrated when None) with phase arg(c), then
    one full swap; the transferred state approximates
    (|0> + c|1>)/sqrt(1+|c|^2).
    """
    if target not in PREP_TARGETS:
        raise ScheduleError(f"unknown prep target {target!r}")
    if target == "vacuum":
        return PulseSchedule(segments=(), readout_at_ns=0.0)

    if target == "single_magnon":
        angle = math.pi
        phase = 0.0
    else:
        c = complex(superposition_coeff)
        if c == 0:
            raise ScheduleError("superposition coefficient must be non-zero")
        from . import calibration  # deferred: calibration simulates schedules

        cal = calibration.calibrate_superposition(p, pi_duration_ns=pi_duration_ns)
        if over_rotation is None:
            over_rotation = cal.over_rotation
        angle = 2.0 * math.atan(abs(c)) * over_rotation
        # pulse phase enters the transferred coherence with slope -1
        phase = cal.phase_offset_rad - math.atan2(c.imag, c.real)

    segs, t = _rotation_segments(
        p, angle, phase, pi_amplitude_mhz, pi_duration_ns, work_spacing_ns
    )
    step, t = _at_step_segments(
        p,
        t,
        work_drive_amplitude(p),
        swap_drive_amplitude(p),
        full_swap_duration_ns(p),
        at_ramp_ns,
    )
    segs += step
    return PulseSchedule(segments=tuple(segs), readout_at_ns=t)


def seq_wigner_point(
    p: PhysicalParams,
    prep_target: str,
    alpha: complex,
    tau_ns: float,
    *,
    superposition_coeff: complex = 1.0,
    displacement_duration_ns: float = DISPLACEMENT_DURATION_NS,
    at_ramp_ns: float = 0.0,
    **prep_kwargs,
) -> PulseSchedule:
    """Prep, displace the magnon by alpha, then swap toward the qubit for
    tau_ns and read out. alpha = 0 still inserts the (zero-amplitude)
    displacement window so all tomography points share one timeline."""
    prep = seq_state_prep(
        p,
        prep_target,
        superposition_coeff,
        at_ramp_ns=at_ramp_ns,
        **prep_kwargs,
    )
    t = prep.readout_at_ns
    disp = displacement_segment(p, alpha, t, displacement_duration_ns)
    t = disp.end_ns
    step, t = _at_step_segments(
        p, t, 0.0, swap_drive_amplitude(p), tau_ns, at_ramp_ns
    )
    segs = prep.segments + (disp,) + tuple(step)
    return PulseSchedule(segments=segs, readout_at_ns=t)
