import json
import math

import numpy as np
import pytest

from magsim.errors import ScheduleError
from magsim.model import PhysicalParams
from magsim.schedule import (
    DISPLACEMENT_DURATION_NS,
    PI_DURATION_NS,
    PulseSchedule,
    PulseSegment,
    displacement_loss_factor,
    displacement_segment,
    full_swap_duration_ns,
    seq_state_prep,
    seq_swap,
    seq_wigner_point,
    swap_drive_amplitude,
    work_drive_amplitude,
)
from magsim.schedule import _xy_carrier_detuning

P = PhysicalParams()


# ---------------------------------------------------------------- segments

def test_segment_validation():
    ok = dict(channel="qubit_xy", start_ns=0.0, duration_ns=10.0, amplitude_mhz=5.0)
    PulseSegment(**ok)
    with pytest.raises(ScheduleError):
        PulseSegment(**{**ok, "channel": "flux"})
    with pytest.raises(ScheduleError):
        PulseSegment(**{**ok, "duration_ns": 0.0})
    with pytest.raises(ScheduleError):
        PulseSegment(**{**ok, "start_ns": -1.0})
    with pytest.raises(ScheduleError):
        PulseSegment(**{**ok, "amplitude_mhz": -2.0})
    with pytest.raises(ScheduleError):
        PulseSegment(**{**ok, "envelope": "blackman"})
    with pytest.raises(ScheduleError):
        PulseSegment(**{**ok, "envelope": "gaussian"})  # sigma missing


def test_rectangular_amplitude_half_open():
    s = PulseSegment(channel="qubit_xy", start_ns=5.0, duration_ns=10.0, amplitude_mhz=3.0)
    assert s.amplitude_at(5.0) == 3.0
    assert s.amplitude_at(14.999) == 3.0
    assert s.amplitude_at(15.0) == 0.0  # half-open right edge
    assert s.amplitude_at(4.999) == 0.0
    assert s.end_ns == 15.0


def test_gaussian_amplitude_profile():
    s = PulseSegment(
        channel="qubit_xy", start_ns=0.0, duration_ns=20.0,
        amplitude_mhz=10.0, envelope="gaussian", sigma_ns=5.0,
    )
    assert s.amplitude_at(10.0) == pytest.approx(10.0)
    assert s.amplitude_at(15.0) == pytest.approx(10.0 * math.exp(-0.5))
    assert s.amplitude_at(5.0) == s.amplitude_at(15.0)


def test_ramp_amplitude_profile():
    s = PulseSegment(
        channel="at_control", start_ns=10.0, duration_ns=4.0,
        amplitude_mhz=8.0, envelope="ramp", ramp_from_mhz=2.0,
    )
    assert s.amplitude_at(10.0) == pytest.approx(2.0)
    assert s.amplitude_at(12.0) == pytest.approx(5.0)
    assert s.amplitude_at(13.999) == pytest.approx(8.0, rel=1e-3)


# --------------------------------------------------------------- schedules

def _seg(ch, start, dur, amp=1.0):
    return PulseSegment(channel=ch, start_ns=start, duration_ns=dur, amplitude_mhz=amp)


def test_same_channel_overlap_rejected():
    with pytest.raises(ScheduleError):
        PulseSchedule(
            segments=(_seg("qubit_xy", 0, 10), _seg("qubit_xy", 9, 10)),
            readout_at_ns=20.0,
        )


def test_cross_channel_overlap_allowed():
    sched = PulseSchedule(
        segments=(_seg("qubit_xy", 0, 10), _seg("at_control", 0, 10)),
        readout_at_ns=10.0,
    )
    assert len(sched.active_at(5.0)) == 2
    assert sched.active_at(10.0) == ()


def test_back_to_back_same_channel_allowed():
    PulseSchedule(
        segments=(_seg("at_control", 0, 10), _seg("at_control", 10, 5)),
        readout_at_ns=15.0,
    )


def test_readout_before_last_segment_rejected():
    with pytest.raises(ScheduleError):
        PulseSchedule(segments=(_seg("qubit_xy", 0, 10),), readout_at_ns=8.0)


def test_segments_sorted_by_start():
    sched = PulseSchedule(
        segments=(_seg("qubit_xy", 20, 5), _seg("at_control", 0, 10)),
        readout_at_ns=25.0,
    )
    assert [s.start_ns for s in sched.segments] == [0.0, 20.0]


def test_shifted_moves_everything():
    sched = PulseSchedule(
        segments=(_seg("qubit_xy", 0, 10), _seg("at_control", 10, 5)),
        readout_at_ns=15.0,
    )
    moved = sched.shifted(7.0)
    assert [s.start_ns for s in moved.segments] == [7.0, 17.0]
    assert moved.readout_at_ns == 22.0


def test_json_round_trip():
    sched = seq_swap(P, 45.0, pi_amplitude_mhz=25.0)
    again = PulseSchedule.from_json(sched.to_json())
    assert again == sched


def test_json_shape():
    sched = PulseSchedule(segments=(_seg("qubit_xy", 0, 10, 2.5),), readout_at_ns=10.0)
    d = json.loads(sched.to_json())
    assert d["readout_at_ns"] == 10.0
    (seg,) = d["segments"]
    assert seg["channel"] == "qubit_xy"
    assert seg["duration_ns"] == 10.0
    assert seg["amplitude_mhz"] == 2.5
    assert set(seg) >= {"start_ns", "phase_rad", "carrier_detuning_mhz", "envelope"}


# ------------------------------------------------------- derived amplitudes

def test_full_swap_duration():
    # 1/(4 g) with g = 5.55 MHz
    assert full_swap_duration_ns(P) == pytest.approx(45.04504504504504, abs=1e-9)


def test_work_drive_amplitude():
    # dressed shift 24 MHz at detuning 3 MHz
    assert work_drive_amplitude(P) == pytest.approx(44.8998886412873, abs=1e-9)


def test_swap_drive_amplitude():
    # dressed shift 82 MHz at detuning 3 MHz
    assert swap_drive_amplitude(P) == pytest.approx(160.9720472628711, abs=1e-9)
    # extra magnon detuning moves the shift target linearly
    up = swap_drive_amplitude(P, 5.0)
    assert up == pytest.approx(math.sqrt((2 * 87 - 3) ** 2 - 9), abs=1e-9)


def test_xy_carrier_detuning_hits_work_point():
    # work point 5.870 GHz sits 58 MHz below the magnon-anchored frame
    assert _xy_carrier_detuning(P) == pytest.approx(-58.0, abs=1e-9)


def test_displacement_loss_factor():
    assert displacement_loss_factor(P, 0.0) == 1.0
    assert displacement_loss_factor(P, 12.0) == pytest.approx(0.9769244593239826, abs=1e-12)
    assert displacement_loss_factor(P.without_decoherence(), 12.0) == pytest.approx(1.0)


def test_displacement_segment_amp_and_phase():
    seg = displacement_segment(P, 1.0, 100.0)
    assert seg.channel == "magnon_drive"
    assert seg.start_ns == 100.0
    assert seg.duration_ns == DISPLACEMENT_DURATION_NS
    assert seg.amplitude_mhz == pytest.approx(27.152379690651518, abs=1e-9)
    assert seg.phase_rad == pytest.approx(-math.pi / 2, abs=1e-12)
    # amplitude linear in |alpha|, phase tracks -arg(alpha)
    seg2 = displacement_segment(P, 2.0j, 100.0)
    assert seg2.amplitude_mhz == pytest.approx(2 * seg.amplitude_mhz, abs=1e-9)
    assert seg2.phase_rad == pytest.approx(-math.pi, abs=1e-12)
    seg0 = displacement_segment(P, 0.0, 100.0)
    assert seg0.amplitude_mhz == 0.0


# ----------------------------------------------------------------- builders

def test_seq_swap_structure():
    sched = seq_swap(P, 45.0, pi_amplitude_mhz=25.0, work_spacing_ns=0.0)
    xy = [s for s in sched.segments if s.channel == "qubit_xy"]
    at = [s for s in sched.segments if s.channel == "at_control"]
    assert len(xy) == 1 and len(at) == 2
    assert xy[0].start_ns == 0.0 and xy[0].duration_ns == PI_DURATION_NS
    assert xy[0].amplitude_mhz == 25.0
    assert xy[0].carrier_detuning_mhz == pytest.approx(-58.0, abs=1e-9)
    work, swap = at
    assert work.amplitude_mhz == pytest.approx(work_drive_amplitude(P))
    assert swap.start_ns == PI_DURATION_NS and swap.duration_ns == 45.0
    assert swap.amplitude_mhz == pytest.approx(swap_drive_amplitude(P))
    assert sched.readout_at_ns == pytest.approx(65.0)


def test_seq_swap_zero_tau():
    sched = seq_swap(P, 0.0, pi_amplitude_mhz=25.0, work_spacing_ns=0.0)
    at = [s for s in sched.segments if s.channel == "at_control"]
    assert len(at) == 1  # no swap plateau
    assert sched.readout_at_ns == pytest.approx(PI_DURATION_NS)


def test_seq_swap_negative_tau_rejected():
    with pytest.raises(ScheduleError):
        seq_swap(P, -1.0, pi_amplitude_mhz=25.0)


def test_seq_swap_ramp_inserts_segment():
    sched = seq_swap(P, 45.0, pi_amplitude_mhz=25.0, work_spacing_ns=0.0, at_ramp_ns=2.0)
    ramps = [s for s in sched.segments if s.envelope == "ramp"]
    assert len(ramps) == 1
    assert ramps[0].ramp_from_mhz == pytest.approx(work_drive_amplitude(P))
    assert ramps[0].amplitude_mhz == pytest.approx(swap_drive_amplitude(P))
    assert sched.readout_at_ns == pytest.approx(PI_DURATION_NS + 2.0 + 45.0)


def test_seq_swap_detuned_amplitude():
    sched = seq_swap(P, 30.0, magnon_detuning_mhz=7.0, pi_amplitude_mhz=25.0)
    swap = [s for s in sched.segments if s.channel == "at_control"][1]
    assert swap.amplitude_mhz == pytest.approx(swap_drive_amplitude(P, 7.0))


def test_prep_vacuum_is_empty():
    sched = seq_state_prep(P, "vacuum")
    assert sched.segments == ()
    assert sched.readout_at_ns == 0.0


def test_prep_unknown_target_rejected():
    with pytest.raises(ScheduleError):
        seq_state_prep(P, "cat_state")


def test_prep_single_magnon_structure():
    sched = seq_state_prep(P, "single_magnon", pi_amplitude_mhz=25.0, work_spacing_ns=0.0)
    xy = [s for s in sched.segments if s.channel == "qubit_xy"]
    at = [s for s in sched.segments if s.channel == "at_control"]
    assert xy[0].amplitude_mhz == pytest.approx(25.0)  # full pi
    assert at[1].duration_ns == pytest.approx(full_swap_duration_ns(P))
    assert sched.readout_at_ns == pytest.approx(PI_DURATION_NS + full_swap_duration_ns(P))


def test_prep_superposition_zero_coeff_rejected():
    with pytest.raises(ScheduleError):
        seq_state_prep(P, "superposition", 0.0)


def test_prep_superposition_angle_scaling():
    # pin over_rotation and amplitude so no calibration runs
    sched = seq_state_prep(
        P, "superposition", 1.0, over_rotation=1.2, pi_amplitude_mhz=25.0
    )
    xy = [s for s in sched.segments if s.channel == "qubit_xy"][0]
    angle = 2.0 * math.atan(1.0) * 1.2
    assert xy.amplitude_mhz == pytest.approx(25.0 * angle / math.pi)


def test_prep_large_coeff_approaches_pi_rotation():
    big = seq_state_prep(
        P, "superposition", 1e8, over_rotation=1.0, pi_amplitude_mhz=25.0
    )
    ref = seq_state_prep(P, "single_magnon", pi_amplitude_mhz=25.0)
    xy_big = [s for s in big.segments if s.channel == "qubit_xy"][0]
    xy_ref = [s for s in ref.segments if s.channel == "qubit_xy"][0]
    assert xy_big.amplitude_mhz == pytest.approx(xy_ref.amplitude_mhz, rel=1e-6)


def test_wigner_point_structure():
    sched = seq_wigner_point(
        P, "single_magnon", 0.7 + 0.2j, 30.0, pi_amplitude_mhz=25.0,
        work_spacing_ns=0.0,
    )
    prep_end = PI_DURATION_NS + full_swap_duration_ns(P)
    disp = [s for s in sched.segments if s.channel == "magnon_drive"]
    assert len(disp) == 1
    assert disp[0].start_ns == pytest.approx(prep_end)
    assert disp[0].duration_ns == DISPLACEMENT_DURATION_NS
    probe = [s for s in sched.segments if s.channel == "at_control"][-1]
    assert probe.start_ns == pytest.approx(prep_end + DISPLACEMENT_DURATION_NS)
    assert probe.duration_ns == pytest.approx(30.0)
    assert probe.amplitude_mhz == pytest.approx(swap_drive_amplitude(P))
    assert sched.readout_at_ns == pytest.approx(prep_end + DISPLACEMENT_DURATION_NS + 30.0)


def test_wigner_point_zero_alpha_keeps_window():
    sched = seq_wigner_point(P, "vacuum", 0.0, 20.0)
    disp = [s for s in sched.segments if s.channel == "magnon_drive"]
    assert len(disp) == 1 and disp[0].amplitude_mhz == 0.0
    # vacuum prep is empty, so the timeline is displacement + probe
    assert sched.readout_at_ns == pytest.approx(DISPLACEMENT_DURATION_NS + 20.0)


def test_default_work_spacing_extends_hold():
    sched = seq_swap(P, 45.0, pi_amplitude_mhz=25.0)
    xy = [s for s in sched.segments if s.channel == "qubit_xy"][0]
    work, swap = [s for s in sched.segments if s.channel == "at_control"]
    spacing = work.duration_ns - xy.duration_ns
    assert 0.0 < spacing < 20.0
    assert swap.start_ns == pytest.approx(work.end_ns)
    assert sched.readout_at_ns == pytest.approx(work.end_ns + 45.0)
    # prep shares the same hold
    prep = seq_state_prep(P, "single_magnon", pi_amplitude_mhz=25.0)
    w2 = [s for s in prep.segments if s.channel == "at_control"][0]
    assert w2.duration_ns == pytest.approx(work.duration_ns)


def test_negative_work_spacing_rejected():
    with pytest.raises(ScheduleError):
        seq_swap(P, 45.0, pi_amplitude_mhz=25.0, work_spacing_ns=-1.0)
