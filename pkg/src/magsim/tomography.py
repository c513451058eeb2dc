"""Wigner tomography: swap-template regression, parity maps, and constrained
density-matrix reconstruction.

The measurement chain mirrors the pulse sequence: displace the magnon, let it
exchange with the qubit over a window of interaction times, and regress the
qubit-excitation curve onto simulated Fock-state swap templates. The parity
sum of the fitted populations gives one Wigner point; a grid of points
determines the density matrix through a linear kernel built from the analytic
displaced-parity formula W(alpha) = (2/pi) Tr[D(-alpha) rho D(alpha) P].
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from scipy import optimize

from .errors import (
    ConditioningError,
    ConfigError,
    InformativenessError,
    InvalidDimensionError,
    InvalidStateError,
    ResolutionError,
    TruncationWarning,
)
from .experiments import (
    ShotModel,
    _indexed_map,
    _params_snapshot,
    first_minimum,
    sample_readout,
)
from .lindblad import DensityMatrix, evolve, partial_trace, readout_excited
from .model import PhysicalParams
from .operators import HilbertLayout, displacement, embed
from . import schedule as sch

__all__ = [
    "DEFAULT_N_MAX",
    "SwapTemplateSet",
    "PopulationFit",
    "WignerMap",
    "ReconstructionResult",
    "default_tau_grid",
    "default_alpha_grid",
    "reconstruction_alpha_grid",
    "swap_templates",
    "fit_populations",
    "wigner_point",
    "wigner_analytic",
    "analytic_wigner_map",
    "wigner_map",
    "simulated_probe_state",
    "reconstruct_density_matrix",
    "fidelity",
    "trace_distance",
    "density_matrix_csv",
]

DEFAULT_N_MAX = 9

TWO_OVER_PI = 2.0 / math.pi

_COND_LIMIT = 1e8
#: weight of the unit-sum row in the population NNLS; large enough that the
#: constraint binds to ~1e-12 before the exact simplex projection
_SUM_WEIGHT = 1e6


def default_tau_grid() -> np.ndarray:
    """0..200 ns in 2 ns steps: resolves exchange frequencies up to
    2 g sqrt(9) while keeping the template regression well conditioned."""
    return np.arange(0.0, 200.0 + 1e-9, 2.0)


def default_alpha_grid(points: int = 9, extent: float = 2.0) -> np.ndarray:
    """Uniform points x points grid over Re, Im in [-extent, extent],
    flattened row-major (imaginary part varies fastest)."""
    if points < 1 or extent <= 0:
        raise ConfigError("alpha grid needs points >= 1 and extent > 0")
    line = np.linspace(-extent, extent, points)
    re, im = np.meshgrid(line, line, indexing="ij")
    return (re + 1j * im).ravel()

def reconstruction_alpha_grid() -> np.ndarray:
    """25-point subset of the default map grid (every other node)."""
    return default_alpha_grid(points=5)


# ------------------------------------------------------------ swap templates

@dataclass(frozen=True)
class SwapTemplateSet:
    """Simulated qubit-excitation curves P_n(tau), n = 0..n_max, for the
    magnon prepared in |n> with the qubit in |g> and the exchange resonant.

    Rows are probabilities; the n = 0 row carries no exchange signal and must
    stay below 0.02; the first exchange maximum moves earlier as n grows
    (sqrt(n) vacuum-Rabi scaling).
    """

    tau_grid: tuple[float, ...]
    templates: np.ndarray  # (n_max + 1, n_tau)
    n_max: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        tau = tuple(float(t) for t in self.tau_grid)
        object.__setattr__(self, "tau_grid", tau)
        t = np.asarray(self.templates, dtype=float)
        if t.shape != (self.n_max + 1, len(tau)):
            raise InvalidStateError(
                f"templates shape {t.shape} != ({self.n_max + 1}, {len(tau)})"
            )
        if t.min() < -1e-8 or t.max() > 1.0 + 1e-8:
            raise InvalidStateError(
                f"templates outside [0, 1]: min {t.min():.3e}, max {t.max():.3e}"
            )
        t = np.clip(t, 0.0, 1.0)
        object.__setattr__(self, "templates", t)
        if float(t[0].max()) > 0.02:
            raise InvalidStateError(
                f"n=0 template reaches {t[0].max():.4f}; it carries no "
                "exchange signal and must stay <= 0.02"
            )
        self._check_peak_ordering()

    def _check_peak_ordering(self):
        # rows whose first peak the grid cannot resolve are skipped
        tau = np.asarray(self.tau_grid)
        prev = None
        for n in range(1, self.n_max + 1):
            try:
                pk = first_minimum(tau, 1.0 - self.templates[n])
            except ResolutionError:
                continue
            if prev is not None and pk > prev + 1e-6:
                raise InvalidStateError(
                    f"template n={n} peaks later than n={n - 1}; exchange "
                    "frequency must grow with n"
                )
            prev = pk


def _window_schedule(p: PhysicalParams, tau_max: float) -> sch.PulseSchedule:
    """Resonant exchange window: the e-f control parks the dressed qubit at
    the magnon frequency for tau_max."""
    if tau_max <= 0.0:
        return sch.PulseSchedule(segments=(), readout_at_ns=0.0)
    seg = sch.PulseSegment(
        channel="at_control",
        start_ns=0.0,
        duration_ns=tau_max,
        amplitude_mhz=sch.swap_drive_amplitude(p),
    )
    return sch.PulseSchedule(segments=(seg,), readout_at_ns=tau_max)


def _check_tau_grid(tau: np.ndarray):
    if tau.size < 2 or tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise ConfigError(
            "tau grid must hold >= 2 strictly increasing non-negative times"
        )


def _template_layout(n_max: int, layout: HilbertLayout | None) -> HilbertLayout:
    if layout is None:
        layout = HilbertLayout(qutrit_dim=3, magnon_dim=n_max + 2)
    if layout.qutrit_dim != 3:
        raise InvalidDimensionError("swap templates need the qutrit factor")
    if layout.magnon_dim < n_max + 2:
        raise InvalidDimensionError(
            f"magnon_dim {layout.magnon_dim} < n_max + 2 = {n_max + 2}: the "
            "top template would touch the truncation edge"
        )
    return layout


def swap_templates(
    p: PhysicalParams,
    n_max: int,
    tau_grid=None,
    *,
    layout: HilbertLayout | None = None,
    workers: int | None = None,
) -> SwapTemplateSet:
    """Simulate the regression basis P_n(tau) with the model's decoherence.

    Each row is one Lindblad trajectory from |g, n> under the resonant
    exchange window, sampled along the plateau.
    """
    if n_max < 1:
        raise InvalidDimensionError("n_max must be >= 1")
    layout = _template_layout(n_max, layout)
    tau = np.asarray(
        default_tau_grid() if tau_grid is None else list(tau_grid), dtype=float
    )
    _check_tau_grid(tau)
    sched = _window_schedule(p, float(tau[-1]))

    def one(n: int) -> np.ndarray:
        ket = np.zeros(layout.dim, dtype=complex)
        ket[layout.index(magnon=n)] = 1.0
        rho0 = DensityMatrix.from_pure(layout, ket)
        res = evolve(p, layout, rho0, sched, sample_times=tuple(tau))
        return np.array([readout_excited(s, layout) for s in res.states])

    rows = _indexed_map(one, list(range(n_max + 1)), workers)
    snap = {
        "params": _params_snapshot(p),
        "layout": [layout.qutrit_dim, layout.magnon_dim, layout.cavity_dim],
    }
    return SwapTemplateSet(
        tau_grid=tuple(tau), templates=np.array(rows), n_max=n_max, params=snap
    )


# ------------------------------------------------------- population regression

def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {p : p >= 0, sum p = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    k = int(np.nonzero(u * idx > css)[0][-1])
    return np.maximum(v - css[k] / (k + 1.0), 0.0)


@dataclass(frozen=True)
class PopulationFit:
    """Fock populations from template regression.

    The covariance is linearized around the active (nonzero) coordinates with
    the unit-sum constraint eliminated; inactive rows and columns are zero.
    """

    populations: np.ndarray
    covariance: np.ndarray
    residual: float


def _population_covariance(
    a: np.ndarray, w: np.ndarray, y: np.ndarray, p: np.ndarray, known_noise: bool
) -> np.ndarray:
    k = a.shape[1]
    active = np.nonzero(p > 1e-12)[0]
    cov = np.zeros((k, k))
    if active.size < 2:
        return cov
    # tangent basis of the simplex face spanned by the active coordinates
    basis = np.zeros((k, active.size - 1))
    for j, idx in enumerate(active[1:]):
        basis[active[0], j] = -1.0
        basis[idx, j] = 1.0
    b = (a * w[:, None]) @ basis
    gram = b.T @ b
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        gram_inv = np.linalg.pinv(gram)
    if not known_noise:
        dof = max(1, a.shape[0] - (active.size - 1))
        gram_inv = gram_inv * float(np.sum((a @ p - y) ** 2)) / dof
    return basis @ gram_inv @ basis.T


def fit_populations(
    measured, templates: SwapTemplateSet, stderr=None
) -> PopulationFit:
    """Fock populations of the measured swap curve.

    Solves min ||sum_n p_n P_n(tau) - measured||^2 subject to p_n >= 0 and
    sum p_n = 1: non-negative least squares with a heavily weighted unit-sum
    row, then an exact simplex projection. The sum constraint is what pins
    the n = 0 weight, whose template carries no signal of its own. Optional
    stderr turns the data rows into inverse-variance weighted rows.
    """
    y = np.asarray(measured, dtype=float)
    n_tau = len(templates.tau_grid)
    if y.shape != (n_tau,):
        raise InvalidStateError(
            f"measured curve length {y.shape} does not match tau grid ({n_tau},)"
        )
    a = templates.templates.T
    k = a.shape[1]
    ones = np.ones((1, k))
    # conditioning of the constrained system; the raw template matrix always
    # holds the (legitimately) zero n=0 column
    cond = float(np.linalg.cond(np.vstack((a, ones))))
    if not math.isfinite(cond) or cond > _COND_LIMIT:
        raise ConditioningError(
            f"template matrix condition {cond:.2e} > {_COND_LIMIT:.0e}; "
            "use a longer tau grid or a smaller n_max"
        )
    known_noise = False
    w = np.ones_like(y)
    if stderr is not None:
        s = np.asarray(stderr, dtype=float)
        if s.shape != y.shape:
            raise InvalidStateError("stderr shape does not match measured curve")
        if s.min() < 0:
            raise InvalidStateError("stderr entries must be non-negative")
        pos = s[s > 0]
        if pos.size:
            # zero errors (binomial estimate at 0 or 1) get the smallest
            # observed positive error instead of infinite weight
            w = 1.0 / np.where(s > 0, s, float(pos.min()))
            known_noise = True
    aw = a * w[:, None]
    lam = _SUM_WEIGHT * max(1.0, float(np.abs(aw).max()))
    sol, _ = optimize.nnls(np.vstack((aw, lam * ones)), np.append(y * w, lam))
    p = _project_simplex(sol)
    residual = float(np.linalg.norm(a @ p - y))
    cov = _population_covariance(a, w, y, p, known_noise)
    return PopulationFit(populations=p, covariance=cov, residual=residual)


# ------------------------------------------------------------- parity / Wigner

def wigner_point(populations) -> float:
    """Parity sum W = (2/pi) sum_n (-1)^n p_n of simplex populations."""
    p = np.asarray(populations, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidStateError("populations must be a non-empty 1-d vector")
    if p.min() < -1e-9 or abs(float(p.sum()) - 1.0) > 1e-6:
        raise InvalidStateError(
            f"populations off the simplex: min {p.min():.2e}, sum {p.sum():.8f}"
        )
    signs = (-1.0) ** np.arange(p.size)
    return TWO_OVER_PI * float(signs @ p)


def _magnon_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        if rho.layout.factors != (("magnon", rho.layout.magnon_dim),):
            raise InvalidStateError(
                "a magnon-only state is required; trace out the other factors"
            )
        return rho.data
    m = np.asarray(rho, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidStateError(f"square matrix required, got shape {m.shape}")
    return m


def wigner_analytic(rho, alpha: complex) -> float:
    """W(alpha) = (2/pi) Tr[D(-alpha) rho D(alpha) P] in the truncated space.

    Accepts a magnon-only DensityMatrix or a bare square matrix (the
    reconstruction kernel feeds basis operators |m><n|, which are not states).
    Warns when the displaced support reaches near the truncation edge; embed
    the operator in a larger space to silence that.
    """
    m = _magnon_matrix(rho)
    dim = m.shape[0]
    alpha = complex(alpha)
    mass = np.abs(m).sum(axis=0) + np.abs(m).sum(axis=1)
    top = int(np.nonzero(mass > 1e-9 * float(mass.max()))[0][-1]) if m.any() else 0
    stretch = abs(alpha) + math.sqrt(top)
    if stretch * stretch + 4.0 * stretch > dim:
        warnings.warn(
            f"displaced support ~{stretch * stretch + 4.0 * stretch:.1f} "
            f"reaches the truncation dim {dim}; result is degraded",
            TruncationWarning,
            stacklevel=2,
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        d = displacement(-alpha, dim)
    moved = d @ m @ d.conj().T
    signs = (-1.0) ** np.arange(dim)
    return TWO_OVER_PI * float(np.real(signs @ np.diag(moved)))


# ----------------------------------------------------------------- Wigner map

@dataclass(frozen=True)
class WignerMap:
    """Wigner values on a grid of phase-space points, with the per-point
    population tables behind them."""

    alpha_grid: tuple[complex, ...]
    values: np.ndarray
    stderr: np.ndarray
    populations: np.ndarray  # (n_alpha, n_pop)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        alphas = tuple(complex(a) for a in self.alpha_grid)
        object.__setattr__(self, "alpha_grid", alphas)
        if not alphas:
            raise ConfigError("alpha grid must be non-empty")
        v = np.asarray(self.values, dtype=float)
        e = np.asarray(self.stderr, dtype=float)
        t = np.asarray(self.populations, dtype=float)
        n = len(alphas)
        if v.shape != (n,) or e.shape != (n,):
            raise InvalidStateError("values/stderr length must match alpha grid")
        if t.ndim != 2 or t.shape[0] != n:
            raise InvalidStateError("populations table needs one row per alpha")
        if e.min() < 0:
            raise InvalidStateError("standard errors must be non-negative")
        over = np.abs(v) - (TWO_OVER_PI + 3.0 * e + 1e-9)
        if np.any(over > 0):
            worst = int(np.argmax(over))
            raise InvalidStateError(
                f"|W| exceeds the parity bound at alpha={alphas[worst]}: "
                f"{v[worst]:+.4f}"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "stderr", e)
        object.__setattr__(self, "populations", t)

    def to_dict(self) -> dict:
        return {
            "alpha_re": [a.real for a in self.alpha_grid],
            "alpha_im": [a.imag for a in self.alpha_grid],
            "values": self.values.tolist(),
            "stderr": self.stderr.tolist(),
            "populations": self.populations.tolist(),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "WignerMap":
        alphas = tuple(
            complex(re, im) for re, im in zip(d["alpha_re"], d["alpha_im"])
        )
        return cls(
            alpha_grid=alphas,
            values=np.asarray(d["values"], dtype=float),
            stderr=np.asarray(d["stderr"], dtype=float),
            populations=np.asarray(d["populations"], dtype=float),
            metadata=d.get("metadata", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "WignerMap":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        lines = ["alpha_re,alpha_im,w,stderr"]
        for a, v, e in zip(self.alpha_grid, self.values, self.stderr):
            lines.append(f"{a.real!r},{a.imag!r},{float(v)!r},{float(e)!r}")
        return "\n".join(lines) + "\n"


def analytic_wigner_map(rho, alpha_grid) -> WignerMap:
    """WignerMap filled from the analytic formula (noiseless oracle input for
    reconstruction round trips). The state is embedded in a space large
    enough that truncation is negligible for every grid point."""
    m = _magnon_matrix(rho)
    alphas = np.asarray(list(alpha_grid), dtype=complex).ravel()
    if alphas.size == 0:
        raise ConfigError("alpha grid must be non-empty")
    d0 = m.shape[0]
    stretch = float(np.abs(alphas).max()) + math.sqrt(d0 - 1)
    dim = max(d0, int(math.ceil(stretch * stretch + 4.0 * stretch)) + 2)
    big = np.zeros((dim, dim), dtype=complex)
    big[:d0, :d0] = m
    signs = (-1.0) ** np.arange(dim)
    values = np.empty(alphas.size)
    pops = np.empty((alphas.size, dim))
    for i, alpha in enumerate(alphas):
        d = displacement(-alpha, dim)
        diag = np.real(np.einsum("ij,jk,ik->i", d, big, d.conj()))
        values[i] = TWO_OVER_PI * float(signs @ diag)
        pops[i] = diag
    return WignerMap(
        alpha_grid=tuple(alphas),
        values=values,
        stderr=np.zeros(alphas.size),
        populations=pops,
        metadata={"population_mode": "analytic", "n_max": dim - 1},
    )


def simulated_probe_state(
    p: PhysicalParams,
    prep_target: str,
    superposition_coeff: complex = 1.0,
    *,
    layout: HilbertLayout | None = None,
    displacement_duration_ns: float = sch.DISPLACEMENT_DURATION_NS,
    **prep_kwargs,
) -> DensityMatrix:
    """Reduced magnon state at the start of the tomography exchange window
    (the alpha = 0 sequence simulated through the displacement slot)."""
    layout = layout or HilbertLayout(qutrit_dim=3, magnon_dim=DEFAULT_N_MAX + 2)
    sched = sch.seq_wigner_point(
        p,
        prep_target,
        0.0,
        0.0,
        superposition_coeff=superposition_coeff,
        displacement_duration_ns=displacement_duration_ns,
        **prep_kwargs,
    )
    final = evolve(p, layout, DensityMatrix.ground(layout), sched).final
    return partial_trace(final, layout, "magnon")


def wigner_map(
    p: PhysicalParams,
    prep_target: str,
    alpha_grid=None,
    tau_grid=None,
    shots: ShotModel | None = None,
    *,
    superposition_coeff: complex = 1.0,
    n_max: int = DEFAULT_N_MAX,
    layout: HilbertLayout | None = None,
    templates: SwapTemplateSet | None = None,
    population_mode: str = "regression",
    displacement_mode: str | None = None,
    displacement_duration_ns: float = sch.DISPLACEMENT_DURATION_NS,
    workers: int | None = None,
    **prep_kwargs,
) -> WignerMap:
    """Wigner map of a prepared magnon state, one pipeline run per alpha.

    Default pipeline per point: displace the magnon by -alpha with a resonant
    drive pulse on the seq_wigner_point timeline, record the qubit-excitation
    curve over tau_grid, optionally shot-sample it, regress onto the swap
    templates, and apply the parity sum.

    The exchange window starts from the displaced magnon state with the
    probe qubit reset to ground, matching the template basis (every template
    starts in |g, n>). Preparation and displacement act on the full joint
    state, so magnon back-action is kept; what the reset drops is the probe's
    own sub-percent residual excitation after the preparation swap, whose
    coherence would otherwise bleed into the excitation curves at the few
    percent level and bias the regression.

    population_mode="exact" skips sampling and regression and reads the
    displaced populations directly off the density matrix; it defaults to
    displacement_mode="instant" (apply D(-alpha) as an operator right at the
    end of the preparation), which makes the result comparable to
    wigner_analytic of the reduced prepared state at machine precision. The
    pulsed displacement instead runs concurrently with the always-on exchange
    coupling, which perturbs the populations at the 1e-5 level.
    """
    alphas = np.asarray(
        default_alpha_grid() if alpha_grid is None else list(alpha_grid),
        dtype=complex,
    ).ravel()
    if alphas.size == 0:
        raise ConfigError("alpha grid must be non-empty")
    if population_mode not in ("regression", "exact"):
        raise ConfigError(f"unknown population mode {population_mode!r}")
    if displacement_mode is None:
        displacement_mode = "instant" if population_mode == "exact" else "pulsed"
    if displacement_mode not in ("pulsed", "instant"):
        raise ConfigError(f"unknown displacement mode {displacement_mode!r}")
    layout = _template_layout(n_max, layout)
    if layout.cavity_dim:
        raise InvalidDimensionError(
            "the tomography pipeline runs on qutrit + magnon layouts"
        )

    tau = np.asarray(
        default_tau_grid() if tau_grid is None else list(tau_grid), dtype=float
    )
    if population_mode == "regression":
        _check_tau_grid(tau)
        if templates is None:
            templates = swap_templates(
                p, n_max, tau, layout=layout, workers=workers
            )
        else:
            t_tau = np.asarray(templates.tau_grid)
            if t_tau.shape != tau.shape or np.max(np.abs(t_tau - tau)) > 1e-9:
                raise ConfigError("templates were built on a different tau grid")

    prep_sched = sch.seq_state_prep(p, prep_target, superposition_coeff, **prep_kwargs)
    rho_prep = evolve(p, layout, DensityMatrix.ground(layout), prep_sched).final
    n_tau = tau.size
    signs = (-1.0) ** np.arange(templates.n_max + 1 if templates else layout.magnon_dim)

    def displaced_state(alpha: complex) -> DensityMatrix:
        """State at the end of the displacement stage."""
        if displacement_mode == "instant":
            d_op = embed(displacement(-alpha, layout.magnon_dim), layout, "magnon")
            return DensityMatrix(
                layout=layout, data=d_op @ rho_prep.data @ d_op.conj().T
            )
        seg = sch.displacement_segment(p, -alpha, 0.0, displacement_duration_ns)
        dsched = sch.PulseSchedule(segments=(seg,), readout_at_ns=seg.end_ns)
        return evolve(p, layout, rho_prep, dsched).final

    ground_q = np.zeros((layout.qutrit_dim, layout.qutrit_dim), dtype=complex)
    ground_q[0, 0] = 1.0

    def one(item) -> tuple[float, float, np.ndarray]:
        k, alpha = item
        rho_m = partial_trace(displaced_state(alpha), layout, "magnon")
        if population_mode == "exact":
            diag = np.clip(np.real(np.diag(rho_m.data)), 0.0, None)
            return wigner_point(diag), 0.0, diag
        # probe reset: the window starts from |g><g| (x) displaced magnon,
        # on its own clock (the displacement stage already ran)
        rho_w = DensityMatrix(layout=layout, data=np.kron(ground_q, rho_m.data))
        res = evolve(
            p, layout, rho_w, _window_schedule(p, float(tau[-1])),
            sample_times=tuple(tau),
        )
        curve = np.array([readout_excited(s, layout) for s in res.states])
        errs = None
        if shots is not None:
            pairs = [
                sample_readout(float(v), shots, k * n_tau + i)
                for i, v in enumerate(curve)
            ]
            curve = np.array([a for a, _ in pairs])
            errs = np.array([b for _, b in pairs])
        fit = fit_populations(curve, templates, errs)
        sigma = TWO_OVER_PI * math.sqrt(
            max(0.0, float(signs @ fit.covariance @ signs))
        )
        return wigner_point(fit.populations), sigma, fit.populations

    results = _indexed_map(one, list(enumerate(alphas)), workers)
    meta = {
        "params": _params_snapshot(p),
        "layout": [layout.qutrit_dim, layout.magnon_dim, layout.cavity_dim],
        "prep_target": prep_target,
        "coeff_re": float(np.real(superposition_coeff)),
        "coeff_im": float(np.imag(superposition_coeff)),
        "population_mode": population_mode,
        "displacement_mode": displacement_mode,
        "n_max": int(templates.n_max) if templates else layout.magnon_dim - 1,
        "tau_grid": tau.tolist() if population_mode == "regression" else [],
    }
    if shots is not None:
        meta["shots"] = shots.shots
        meta["seed"] = shots.seed
    return WignerMap(
        alpha_grid=tuple(alphas),
        values=np.array([r[0] for r in results]),
        stderr=np.array([r[1] for r in results]),
        populations=np.array([r[2] for r in results]),
        metadata=meta,
    )


# ------------------------------------------------------------- reconstruction

@dataclass(frozen=True)
class ReconstructionResult:
    """Constrained least-squares density matrix from a Wigner map."""

    rho: DensityMatrix
    residual: float
    fidelity: float | None = None
    fidelity_err: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fidelity is not None and not 0.0 <= self.fidelity <= 1.0:
            raise InvalidStateError(f"fidelity {self.fidelity} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "dim": self.rho.layout.dim,
            "rho_re": self.rho.data.real.tolist(),
            "rho_im": self.rho.data.imag.tolist(),
            "residual": self.residual,
            "fidelity": self.fidelity,
            "fidelity_err": self.fidelity_err,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionResult":
        data = np.asarray(d["rho_re"], dtype=float) + 1j * np.asarray(
            d["rho_im"], dtype=float
        )
        rho = DensityMatrix(
            layout=HilbertLayout(qutrit_dim=0, magnon_dim=int(d["dim"])), data=data
        )
        return cls(
            rho=rho,
            residual=float(d["residual"]),
            fidelity=d.get("fidelity"),
            fidelity_err=d.get("fidelity_err"),
            metadata=d.get("metadata", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "ReconstructionResult":
        return cls.from_dict(json.loads(text))


def _parity_kernel(alphas: np.ndarray, d_rec: int) -> np.ndarray:
    """K[k, m, n] = (2/pi) Tr[D(-a_k)|m><n|D(a_k) P], evaluated in a space
    large enough that truncation is negligible."""
    stretch = float(np.abs(alphas).max()) + math.sqrt(d_rec - 1)
    dim = max(2 * d_rec, int(math.ceil(stretch * stretch + 4.0 * stretch)) + 2, 12)
    signs = (-1.0) ** np.arange(dim)
    out = np.empty((alphas.size, d_rec, d_rec), dtype=complex)
    for i, alpha in enumerate(alphas):
        cols = displacement(-alpha, dim)[:, :d_rec]
        out[i] = TWO_OVER_PI * (cols.T @ (signs[:, None] * cols.conj()))
    return out


def _real_design(kernel: np.ndarray, d_rec: int) -> np.ndarray:
    """Real parameterization: diagonal entries, then (Re, Im) of each upper
    off-diagonal. A Hermitian rho contributes 2x Re K - 2y Im K per pair."""
    cols = [kernel[:, m, m].real for m in range(d_rec)]
    for m in range(d_rec):
        for n in range(m + 1, d_rec):
            cols.append(2.0 * kernel[:, m, n].real)
            cols.append(-2.0 * kernel[:, m, n].imag)
    return np.column_stack(cols)


def _assemble_rho(theta: np.ndarray, d_rec: int) -> np.ndarray:
    rho = np.zeros((d_rec, d_rec), dtype=complex)
    diag = np.append(theta[: d_rec - 1], 1.0 - float(np.sum(theta[: d_rec - 1])))
    rho[np.arange(d_rec), np.arange(d_rec)] = diag
    idx = d_rec - 1
    for m in range(d_rec):
        for n in range(m + 1, d_rec):
            rho[m, n] = theta[idx] + 1j * theta[idx + 1]
            rho[n, m] = theta[idx] - 1j * theta[idx + 1]
            idx += 2
    return rho


def _positive_projection(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues, renormalize the trace."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0.0, None)
    tr = float(np.sum(w))
    if tr <= 0.0:
        raise InformativenessError("reconstructed state projected to zero trace")
    out = (v * (w / tr)) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def _resolve_target(target, metadata: dict, d_rec: int) -> np.ndarray | None:
    if target is not None:
        v = np.asarray(target, dtype=complex).reshape(-1)
        if v.size != d_rec:
            raise InvalidStateError(
                f"target length {v.size} does not match d_rec {d_rec}"
            )
        return v
    name = metadata.get("prep_target")
    if name == "vacuum":
        v = np.zeros(d_rec, dtype=complex)
        v[0] = 1.0
    elif name == "single_magnon":
        v = np.zeros(d_rec, dtype=complex)
        v[1] = 1.0
    elif name == "superposition":
        c = complex(metadata.get("coeff_re", 1.0), metadata.get("coeff_im", 0.0))
        v = np.zeros(d_rec, dtype=complex)
        v[0] = 1.0
        v[1] = c
        v = v / np.linalg.norm(v)
    else:
        return None
    return v


def reconstruct_density_matrix(
    wmap: WignerMap,
    d_rec: int,
    *,
    target=None,
    bootstrap: int = 25,
    bootstrap_seed: int = 0,
) -> ReconstructionResult:
    """Density matrix whose analytic Wigner values best match the map.

    Linear model W(alpha_k) = sum_mn K_k,(m,n) rho_mn with the kernel from
    wigner_analytic on basis operators; Hermiticity is built into the real
    parameterization and the unit trace is eliminated exactly, then the
    least-squares solution is projected onto the positive cone (eigenvalue
    clipping with trace renormalization).

    The fidelity target is taken from the map's prep metadata when not given
    explicitly; its uncertainty comes from a parametric bootstrap that
    resamples the map values within their standard errors (default 25
    resamples).
    """
    alphas = np.asarray(wmap.alpha_grid, dtype=complex)
    n_alpha = alphas.size
    n_max = int(wmap.metadata.get("n_max", wmap.populations.shape[1] - 1))
    if d_rec < 2:
        raise InvalidDimensionError("d_rec must be >= 2")
    if d_rec > n_max + 1:
        raise InvalidDimensionError(
            f"d_rec {d_rec} exceeds the fitted Fock space (n_max {n_max})"
        )
    if n_alpha < d_rec * d_rec:
        raise InformativenessError(
            f"{n_alpha} alpha points underdetermine a {d_rec}x{d_rec} state; "
            f"need at least {d_rec * d_rec}"
        )
    kernel = _parity_kernel(alphas, d_rec)
    design = _real_design(kernel, d_rec)
    # eliminate the unit trace: the last diagonal entry is 1 - sum(others)
    c_last = design[:, d_rec - 1]
    reduced = np.column_stack(
        [design[:, m] - c_last for m in range(d_rec - 1)]
        + [design[:, j] for j in range(d_rec, design.shape[1])]
    )
    svals = np.linalg.svd(reduced, compute_uv=False)
    if svals[0] <= 0.0 or svals[-1] < 1e-10 * svals[0]:
        raise InformativenessError(
            "kernel is rank deficient for this alpha grid; widen the coverage "
            "(points along one axis only cannot fix the imaginary parts)"
        )

    def solve(values: np.ndarray) -> tuple[np.ndarray, float]:
        theta, *_ = np.linalg.lstsq(reduced, values - c_last, rcond=None)
        resid = float(np.linalg.norm(reduced @ theta - (values - c_last)))
        return _positive_projection(_assemble_rho(theta, d_rec)), resid

    rho_mat, residual = solve(wmap.values)
    rho = DensityMatrix(
        layout=HilbertLayout(qutrit_dim=0, magnon_dim=d_rec), data=rho_mat
    )
    ket = _resolve_target(target, wmap.metadata, d_rec)
    fid = fid_err = None
    resamples = 0
    if ket is not None:
        fid = fidelity(rho, ket)
        fid_err = 0.0
        if bootstrap > 0 and bool(np.any(wmap.stderr > 0)):
            vals = []
            for b in range(bootstrap):
                rng = np.random.default_rng(
                    np.random.SeedSequence((bootstrap_seed, b))
                )
                perturbed = wmap.values + wmap.stderr * rng.standard_normal(n_alpha)
                rho_b, _ = solve(perturbed)
                vals.append(fidelity(rho_b, ket))
            resamples = len(vals)
            fid_err = float(np.std(vals, ddof=1)) if resamples > 1 else 0.0
    meta = {
        "d_rec": int(d_rec),
        "n_alpha": int(n_alpha),
        "bootstrap": resamples,
    }
    for key in ("prep_target", "population_mode", "shots", "seed"):
        if key in wmap.metadata:
            meta[key] = wmap.metadata[key]
    return ReconstructionResult(
        rho=rho,
        residual=residual,
        fidelity=fid,
        fidelity_err=fid_err,
        metadata=meta,
    )


# ------------------------------------------------------------------ measures

def fidelity(rho, target) -> float:
    """F = sqrt(<psi|rho|psi>) against a normalized pure target."""
    v = np.asarray(target, dtype=complex).reshape(-1)
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > 1e-9:
        raise InvalidStateError(f"target state norm {nrm:.6f} != 1")
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if m.shape != (v.size, v.size):
        raise InvalidStateError(
            f"state shape {m.shape} does not match target length {v.size}"
        )
    val = float(np.real(np.vdot(v, m @ v)))
    return math.sqrt(min(1.0, max(0.0, val)))


def trace_distance(a, b) -> float:
    """(1/2)||a - b||_1 for Hermitian inputs."""
    ma = a.data if isinstance(a, DensityMatrix) else np.asarray(a, dtype=complex)
    mb = b.data if isinstance(b, DensityMatrix) else np.asarray(b, dtype=complex)
    if ma.shape != mb.shape:
        raise InvalidStateError(f"shape mismatch: {ma.shape} vs {mb.shape}")
    d = ma - mb
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


def density_matrix_csv(rho) -> str:
    """Two comment-separated blocks: the real part, then the imaginary part."""
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    lines = ["# real"]
    for row in m.real:
        lines.append(",".join(repr(float(x)) for x in row))
    lines.append("# imag")
    for row in m.imag:
        lines.append(",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"
