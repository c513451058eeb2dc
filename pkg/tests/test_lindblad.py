import math

import numpy as np
import pytest

from magsim.errors import InvalidStateError
from magsim.lindblad import (
    DensityMatrix,
    build_collapse,
    evolve,
    expectation,
    partial_trace,
    readout_excited,
)
from magsim.model import PhysicalParams, layout_operators
from magsim.operators import HilbertLayout, coherent_state, fock_state
from magsim.schedule import (
    PulseSchedule,
    PulseSegment,
    displacement_segment,
    seq_swap,
    swap_drive_amplitude,
)

P = PhysicalParams()
LAY = HilbertLayout(qutrit_dim=3, magnon_dim=6)
QUTRIT = HilbertLayout(qutrit_dim=3, magnon_dim=0)


def excited_qutrit_magnon_vacuum(layout):
    d = np.zeros((layout.dim, layout.dim), dtype=complex)
    i = layout.index(qutrit=1, magnon=0)
    d[i, i] = 1.0
    return DensityMatrix(layout=layout, data=d)


def swap_schedule(duration, detuning_mhz=0.0):
    seg = PulseSegment(
        channel="at_control",
        start_ns=0.0,
        duration_ns=duration,
        amplitude_mhz=swap_drive_amplitude(P, detuning_mhz),
    )
    return PulseSchedule(segments=(seg,), readout_at_ns=duration)


class TestDensityMatrix:
    def test_ground(self):
        dm = DensityMatrix.ground(LAY)
        assert dm.data[0, 0] == 1.0
        assert np.trace(dm.data) == pytest.approx(1.0)

    def test_from_pure_normalizes(self):
        v = np.zeros(LAY.dim)
        v[0] = 2.0
        dm = DensityMatrix.from_pure(LAY, v)
        assert dm.data[0, 0] == pytest.approx(1.0)

    def test_rejects_bad_states(self):
        d = np.zeros((LAY.dim, LAY.dim), dtype=complex)
        d[0, 0] = 1.0
        d[0, 1] = 0.5  # not Hermitian
        with pytest.raises(InvalidStateError):
            DensityMatrix(layout=LAY, data=d)
        with pytest.raises(InvalidStateError):
            DensityMatrix(layout=LAY, data=np.eye(LAY.dim) / (LAY.dim - 1.0))
        neg = np.zeros((LAY.dim, LAY.dim), dtype=complex)
        neg[0, 0] = 1.5
        neg[1, 1] = -0.5
        with pytest.raises(InvalidStateError):
            DensityMatrix(layout=LAY, data=neg)
        with pytest.raises(InvalidStateError):
            DensityMatrix.from_pure(LAY, np.zeros(LAY.dim))
        with pytest.raises(InvalidStateError):
            DensityMatrix.from_pure(LAY, np.ones(3))


class TestCollapseRates:
    def test_channel_rates(self):
        chans = build_collapse(P, LAY)
        rates = sorted(rate for _, _, rate in chans)
        expect = sorted(
            [1.0 / 3650.0, 2.0 / 3650.0, 2.0 / 9200.0, 1.0 / 128.0]
        )
        assert rates == pytest.approx(expect, rel=1e-12)

    def test_decoherence_free_is_empty(self):
        assert build_collapse(P.without_decoherence(), LAY) == ()

    def test_magnon_dephasing_hook(self):
        p = PhysicalParams(magnon_dephasing_rate_per_ns=0.002)
        chans = build_collapse(p, HilbertLayout(qutrit_dim=0, magnon_dim=4))
        assert len(chans) == 2


class TestAnalyticOracles:
    def test_vacuum_rabi_exchange(self):
        # resonant two-level exchange: P_e(t) = cos^2(2 pi g t)
        pnd = P.without_decoherence()
        rho0 = excited_qutrit_magnon_vacuum(LAY)
        ts = np.linspace(0.0, 90.0, 31)
        res = evolve(pnd, LAY, rho0, swap_schedule(90.0), sample_times=ts)
        pe = res.expectations(layout_operators(LAY)["proj_e"])
        ref = np.cos(2.0 * math.pi * 5.55e-3 * ts) ** 2
        assert np.max(np.abs(pe - ref)) < 1e-9

    def test_detuned_exchange_chevron_law(self):
        # at detuning Delta = 2g the contrast is exactly 1/2 and the
        # oscillation runs at sqrt(4 g^2 + Delta^2)
        pnd = P.without_decoherence()
        det = 11.1
        rho0 = excited_qutrit_magnon_vacuum(LAY)
        ts = np.linspace(0.0, 80.0, 41)
        res = evolve(pnd, LAY, rho0, swap_schedule(80.0, det), sample_times=ts)
        pe = res.expectations(layout_operators(LAY)["proj_e"])
        omega_r = math.sqrt(4.0 * 5.55**2 + det**2)
        ref = 1.0 - 0.5 * np.sin(math.pi * omega_r * 1e-3 * ts) ** 2
        assert np.max(np.abs(pe - ref)) < 1e-9

    def test_qubit_t1_decay(self):
        rho0 = excited_qutrit_magnon_vacuum(QUTRIT)
        free = PulseSchedule(segments=(), readout_at_ns=2000.0)
        ts = [500.0, 1000.0, 2000.0]
        res = evolve(P, QUTRIT, rho0, free, sample_times=ts)
        pe = res.expectations(layout_operators(QUTRIT)["proj_e"])
        ref = np.exp(-np.array(ts) / 3650.0)
        assert pe == pytest.approx(ref, rel=1e-8)

    def test_qubit_t2_coherence(self):
        # |rho_ge| decays at 1/(2 T1) + 1/T_phi, i.e. T2 = 4070.3 ns
        v = np.zeros(QUTRIT.dim)
        v[0] = v[1] = 1.0
        rho0 = DensityMatrix.from_pure(QUTRIT, v)
        free = PulseSchedule(segments=(), readout_at_ns=1500.0)
        res = evolve(P, QUTRIT, rho0, free, sample_times=[750.0, 1500.0])
        gamma2 = 0.5 / 3650.0 + 1.0 / 9200.0
        for rho, t in zip(res.states, res.times):
            assert abs(rho[0, 1]) == pytest.approx(
                0.5 * math.exp(-gamma2 * t), rel=1e-8
            )

    def test_f_level_cascade(self):
        d = np.zeros((QUTRIT.dim, QUTRIT.dim), dtype=complex)
        d[2, 2] = 1.0
        rho0 = DensityMatrix(layout=QUTRIT, data=d)
        free = PulseSchedule(segments=(), readout_at_ns=800.0)
        res = evolve(P, QUTRIT, rho0, free, sample_times=[800.0])
        g1 = 1.0 / 3650.0
        t = 800.0
        rho = res.states[0]
        assert rho[2, 2].real == pytest.approx(math.exp(-2 * g1 * t), rel=1e-6)
        assert rho[1, 1].real == pytest.approx(
            2.0 * (math.exp(-g1 * t) - math.exp(-2 * g1 * t)), rel=1e-6
        )

    def test_magnon_t1_decay(self):
        lay = HilbertLayout(qutrit_dim=0, magnon_dim=4)
        rho0 = DensityMatrix.from_pure(lay, fock_state(4, 1))
        free = PulseSchedule(segments=(), readout_at_ns=128.0)
        res = evolve(P, lay, rho0, free, sample_times=[64.0, 128.0])
        n_m = layout_operators(lay)["n_m"]
        occ = res.expectations(n_m)
        assert occ == pytest.approx([math.exp(-0.5), math.exp(-1.0)], rel=1e-8)

    def test_magnon_dephasing_rate(self):
        p = PhysicalParams(magnon_dephasing_rate_per_ns=0.003)
        lay = HilbertLayout(qutrit_dim=0, magnon_dim=4)
        v = np.zeros(4)
        v[0] = v[1] = 1.0
        rho0 = DensityMatrix.from_pure(lay, v)
        free = PulseSchedule(segments=(), readout_at_ns=200.0)
        res = evolve(p, lay, rho0, free, sample_times=[200.0])
        # decay of the 0-1 coherence: T1 part 1/(2 T1m) plus the pure rate
        gamma = 0.5 / 128.0 + 0.003
        assert abs(res.states[0][0, 1]) == pytest.approx(
            0.5 * math.exp(-gamma * 200.0), rel=1e-8
        )

    def test_resonant_drive_displaces_vacuum(self):
        # alpha = -i pi A T e^{-i phi} * 1e-3 for A in MHz
        pnd = P.without_decoherence()
        lay = HilbertLayout(qutrit_dim=0, magnon_dim=14)
        amp, dur, phase = 15.0, 12.0, 0.6
        seg = PulseSegment(
            channel="magnon_drive",
            start_ns=0.0,
            duration_ns=dur,
            amplitude_mhz=amp,
            phase_rad=phase,
        )
        sched = PulseSchedule(segments=(seg,), readout_at_ns=dur)
        res = evolve(pnd, lay, DensityMatrix.ground(lay), sched)
        alpha = -1j * math.pi * amp * 1e-3 * dur * np.exp(-1j * phase)
        target = coherent_state(14, alpha)
        fid = np.real(target.conj() @ res.states[-1] @ target)
        assert fid == pytest.approx(1.0, abs=1e-8)

    def test_displacement_segment_compensates_loss(self):
        # with decay on, the calibrated segment still lands <b> on alpha
        lay = HilbertLayout(qutrit_dim=0, magnon_dim=14)
        alpha = 0.8j
        seg = displacement_segment(P, alpha, 0.0)
        sched = PulseSchedule(segments=(seg,), readout_at_ns=seg.end_ns)
        res = evolve(P, lay, DensityMatrix.ground(lay), sched)
        b = layout_operators(lay)["b"]
        got = complex(np.einsum("ij,ji->", res.states[-1], b))
        assert got == pytest.approx(alpha, abs=1e-8)
        # zero-temperature damped drive keeps vacuum input coherent
        target = coherent_state(14, alpha)
        fid = np.real(target.conj() @ res.states[-1] @ target)
        assert fid == pytest.approx(1.0, abs=1e-8)


class TestEngineBehavior:
    def test_composition_over_time(self):
        # Markovian evolution composes: full run equals prefix then tail
        sched = seq_swap(P, 45.0, pi_amplitude_mhz=25.0)
        swap_seg = max(sched.segments, key=lambda s: s.start_ns)
        t_split = swap_seg.start_ns
        rho0 = DensityMatrix.ground(LAY)
        full = evolve(P, LAY, rho0, sched, sample_times=[t_split, sched.readout_at_ns])
        first = DensityMatrix(layout=LAY, data=full.states[0])
        # the trajectory clock always starts at 0; re-anchor the tail there
        tail = PulseSchedule(
            segments=(
                PulseSegment(
                    channel=swap_seg.channel,
                    start_ns=0.0,
                    duration_ns=swap_seg.duration_ns,
                    amplitude_mhz=swap_seg.amplitude_mhz,
                ),
            ),
            readout_at_ns=45.0,
        )
        res2 = evolve(P, LAY, first, tail)
        assert np.max(np.abs(res2.states[-1] - full.states[-1])) < 1e-10

    def test_rk4_step_halving_converged(self):
        seg = PulseSegment(
            channel="qubit_xy",
            start_ns=0.0,
            duration_ns=20.0,
            amplitude_mhz=25.0,
            carrier_detuning_mhz=-58.0,
            envelope="gaussian",
            sigma_ns=5.0,
        )
        sched = PulseSchedule(segments=(seg,), readout_at_ns=20.0)
        rho0 = DensityMatrix.ground(LAY)
        a = evolve(P, LAY, rho0, sched, rk4_step_ns=0.05).states[-1]
        b = evolve(P, LAY, rho0, sched, rk4_step_ns=0.025).states[-1]
        assert np.max(np.abs(a - b)) < 1e-7

    def test_trajectory_stays_physical(self):
        sched = seq_swap(P, 45.0, pi_amplitude_mhz=25.0)
        res = evolve(
            P,
            LAY,
            DensityMatrix.ground(LAY),
            sched,
            sample_times=np.linspace(0.0, 65.0, 27),
        )
        for rho in res.states:
            assert abs(np.trace(rho) - 1.0) < 1e-7
            assert np.max(np.abs(rho - rho.conj().T)) < 1e-9
            assert np.linalg.eigvalsh(rho)[0] > -1e-8

    def test_sample_validation(self):
        sched = swap_schedule(30.0)
        rho0 = DensityMatrix.ground(LAY)
        with pytest.raises(ValueError):
            evolve(P, LAY, rho0, sched, sample_times=[40.0])
        with pytest.raises(ValueError):
            evolve(P, LAY, rho0, sched, sample_times=[])
        with pytest.raises(InvalidStateError):
            evolve(P, LAY, DensityMatrix.ground(QUTRIT), sched)
        res = evolve(P, LAY, rho0, sched, sample_times=[0.0])
        assert np.array_equal(res.states[0], rho0.data)

    def test_sampling_matches_time_order(self):
        sched = swap_schedule(30.0)
        rho0 = excited_qutrit_magnon_vacuum(LAY)
        res = evolve(P, LAY, rho0, sched, sample_times=[25.0, 5.0, 15.0])
        assert list(res.times) == [5.0, 15.0, 25.0]


class TestHelpers:
    def test_partial_trace_product_state(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho_q = a @ a.conj().T
        rho_q /= np.trace(rho_q)
        b = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        rho_m = b @ b.conj().T
        rho_m /= np.trace(rho_m)
        rho = np.kron(rho_q, rho_m)
        assert np.max(np.abs(partial_trace(rho, LAY, "magnon") - rho_m)) < 1e-12
        assert np.max(np.abs(partial_trace(rho, LAY, "qutrit") - rho_q)) < 1e-12
        with pytest.raises(InvalidStateError):
            partial_trace(rho, LAY, "cavity")

    def test_partial_trace_entangled(self):
        v = np.zeros(LAY.dim, dtype=complex)
        v[LAY.index(qutrit=0, magnon=1)] = 1.0 / math.sqrt(2.0)
        v[LAY.index(qutrit=1, magnon=0)] = 1.0 / math.sqrt(2.0)
        rho = np.outer(v, v.conj())
        red = partial_trace(rho, LAY, "magnon")
        assert red[0, 0].real == pytest.approx(0.5, abs=1e-12)
        assert red[1, 1].real == pytest.approx(0.5, abs=1e-12)
        assert abs(red[0, 1]) < 1e-12

    def test_readout_and_expectation(self):
        rho0 = excited_qutrit_magnon_vacuum(LAY)
        assert readout_excited(rho0.data, LAY) == pytest.approx(1.0)
        n_m = layout_operators(LAY)["n_m"]
        assert expectation(rho0.data, n_m) == pytest.approx(0.0)
