"""Exact state-vector dynamics of interacting qutrit clusters.

Evolution alternates free dipolar segments with impulsive global pulses.
Registers up to five qutrits use a cached dense eigendecomposition (and a
cached one-period propagator for stroboscopic runs); larger registers are
propagated matrix-free with an adaptive Lanczos exponential.  Times are
dimensionless (units of 1/J with J = J0/r0^3) and observables are recorded
stroboscopically at period boundaries.

Survival probability convention: the reported P is the ensemble-averaged
single-site survival, mean_i <s| rho_i(t) |s> for initial product state
|s>^N.  A global-overlap variant |<psi0|psi(t)>|^2 is available through
``global_overlap=True``.  The standard initial states are

    |up>   = (|+1> + |0>)/sqrt2,
    |down> = (|0> + |-1>)/sqrt2,
    |plus> = (|+1> + |-1>)/sqrt2,

and the headline trace p_avg is their mean.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .control import Pulse, PulseSequence, pulse_to_unitary
from .dipole import ClusterSpec, EnsembleHamiltonian, assemble_ensemble, sample_cluster

SQRT2 = np.sqrt(2.0)

INITIAL_STATES: dict[str, np.ndarray] = {
    "up": np.array([1.0, 1.0, 0.0], dtype=complex) / SQRT2,
    "down": np.array([0.0, 1.0, 1.0], dtype=complex) / SQRT2,
    "plus": np.array([1.0, 0.0, 1.0], dtype=complex) / SQRT2,
}
for _v in INITIAL_STATES.values():
    _v.setflags(write=False)

#: register size above which segment propagation switches to Lanczos
DENSE_SITE_LIMIT = 5


class KrylovAccuracyError(RuntimeError):
    """Lanczos did not reach the residual target at the dimension cap."""

    def __init__(self, residual: float, m: int):
        super().__init__(f"Lanczos residual {residual:.3e} at m={m}")
        self.residual = residual
        self.m = m


def product_state(single: np.ndarray, n_sites: int) -> np.ndarray:
    out = np.asarray(single, dtype=complex)
    for _ in range(n_sites - 1):
        out = np.kron(out, single)
    return out


def site_survival(psi: np.ndarray, single: np.ndarray, n_sites: int) -> float:
    """mean_i <s|rho_i|s>, evaluated as squared norms of site projections."""
    t = psi.reshape((3,) * n_sites)
    total = 0.0
    for i in range(n_sites):
        proj = np.tensordot(np.conj(single), t, axes=([0], [i]))
        total += float(np.vdot(proj, proj).real)
    return total / n_sites


def global_survival(psi: np.ndarray, psi0: np.ndarray) -> float:
    return float(abs(np.vdot(psi0, psi)) ** 2)


def apply_global_pulse(pulse: Pulse | np.ndarray, psi: np.ndarray,
                       n_sites: int) -> np.ndarray:
    """Apply u on every site (u^(x)N) without forming the big matrix."""
    u = (pulse_to_unitary(pulse).matrix if isinstance(pulse, Pulse)
         else np.asarray(pulse))
    t = psi.reshape((3,) * n_sites)
    for i in range(n_sites):
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [i])), 0, i)
    return np.ascontiguousarray(t).reshape(-1)


# ---------------------------------------------------------------------------
# segment propagation


def _cached_eigh(h: EnsembleHamiltonian):
    if not hasattr(h, "_eigh_cache"):
        w, v = np.linalg.eigh(h.dense())
        h._eigh_cache = (w, v)
    return h._eigh_cache


def expm_multiply_lanczos(apply_h, psi: np.ndarray, dt: float,
                          m_max: int = 40, tol: float = 1e-10) -> np.ndarray:
    """exp(-i dt H) psi by an adaptive Hermitian Lanczos subspace.

    Full reorthogonalization (cheap at these dimensions); the a-posteriori
    residual estimate is the next coupling times the last component of the
    small-problem solution.
    """
    beta0 = float(np.linalg.norm(psi))
    if beta0 == 0.0 or dt == 0.0:
        return psi.copy()
    v = psi / beta0
    basis = [v]
    alphas: list[float] = []
    betas: list[float] = []
    y = None
    residual = np.inf
    for m in range(1, m_max + 1):
        w = apply_h(basis[-1])
        alpha = float(np.vdot(basis[-1], w).real)
        alphas.append(alpha)
        w = w - alpha * basis[-1]
        if len(basis) > 1:
            w = w - betas[-1] * basis[-2]
        # full reorthogonalization
        for b in basis:
            w = w - np.vdot(b, w) * b
        beta = float(np.linalg.norm(w))

        evals, evecs = eigh_tridiagonal(alphas, betas)
        phases = np.exp(-1j * dt * evals)
        y = evecs @ (phases * evecs[0, :])
        residual = abs(beta * dt * y[-1])
        if residual < tol or beta < 1e-14:
            break
        betas.append(beta)
        basis.append(w / beta)
    else:
        raise KrylovAccuracyError(residual, m_max)
    out = np.zeros_like(psi)
    for coef, b in zip(y, basis):
        out += coef * b
    return beta0 * out


def segment_propagate(h: EnsembleHamiltonian, psi: np.ndarray, dt: float,
                      backend: str = "auto", m_max: int = 40,
                      tol: float = 1e-10) -> np.ndarray:
    """exp(-i H dt) psi.  backend: auto | dense | krylov."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0.0:
        return psi.copy()
    if backend == "auto":
        backend = "dense" if h.n_spins <= DENSE_SITE_LIMIT else "krylov"
    if backend == "dense":
        w, v = _cached_eigh(h)
        return v @ (np.exp(-1j * w * dt) * (v.conj().T @ psi))
    if backend == "krylov":
        return expm_multiply_lanczos(h.apply, psi, dt, m_max=m_max, tol=tol)
    raise ValueError(f"unknown backend {backend!r}")


def build_period_map(h: EnsembleHamiltonian, seq: PulseSequence,
                     tau: float) -> np.ndarray:
    """Dense one-period propagator (free segments alternating with pulses)."""
    w, v = _cached_eigh(h)
    seg = (v * np.exp(-1j * w * tau)) @ v.conj().T
    u = seg.copy()
    for p in seq.pulses:
        pu = pulse_to_unitary(p).matrix
        full = pu
        for _ in range(h.n_spins - 1):
            full = np.kron(full, pu)
        u = seg @ (full @ u)
    return u


def period_propagate(seq: PulseSequence, h: EnsembleHamiltonian,
                     psi: np.ndarray, tau: float,
                     backend: str = "auto") -> np.ndarray:
    """One protocol period applied to a state, matrix-free."""
    psi = segment_propagate(h, psi, tau, backend=backend)
    for p in seq.pulses:
        psi = apply_global_pulse(p, psi, h.n_spins)
        psi = segment_propagate(h, psi, tau, backend=backend)
    return psi


# ---------------------------------------------------------------------------
# stroboscopic runs


@dataclass(frozen=True)
class RunConfig:
    """One simulation task: cluster statistics, protocol, horizon."""

    jt: float
    n_periods: int
    cluster: ClusterSpec
    n_profiles: int = 1
    sequence: PulseSequence | None = None      # None = free induction decay
    signal_mu: float = 0.0
    master_seed: int = 0
    record_subdivisions: int = 1               # >1 refines the FID grid
    record_every: int = 1                      # sample every k-th period
    global_overlap: bool = False

    def __post_init__(self):
        if self.jt <= 0:
            raise ValueError("JT must be positive")
        if self.n_periods < 1:
            raise ValueError("need at least one period")
        if self.record_subdivisions < 1:
            raise ValueError("record_subdivisions must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class TimeSeries:
    """Stroboscopic traces on a common dimensionless time grid."""

    times: np.ndarray
    traces: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    @property
    def p_avg(self) -> np.ndarray:
        return np.mean(list(self.traces.values()), axis=0)

    def to_csv(self, path) -> None:
        labels = list(self.traces)
        with open(path, "w") as f:
            f.write("Jt," + ",".join(f"p_{k}" for k in labels) + ",p_avg\n")
            pavg = self.p_avg
            for k, t in enumerate(self.times):
                row = [f"{t:.9g}"] + [f"{self.traces[lab][k]:.12g}"
                                      for lab in labels]
                row.append(f"{pavg[k]:.12g}")
                f.write(",".join(row) + "\n")


def profile_seeds(master_seed: int, n: int) -> np.ndarray:
    """Deterministic per-profile cluster seeds from one master seed."""
    return np.random.SeedSequence(master_seed).generate_state(n, dtype=np.uint64)


def _single_profile_traces(cfg: RunConfig, seed: int,
                           states: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    spec = replace(cfg.cluster, seed=int(seed))
    geometry = sample_cluster(spec)
    h = assemble_ensemble(geometry, signal_mu=cfg.signal_mu)
    n = h.n_spins
    out = {}
    if cfg.sequence is not None:
        tau = cfg.jt / cfg.sequence.n_intervals
        dense = n <= DENSE_SITE_LIMIT
        u_period = build_period_map(h, cfg.sequence, tau) if dense else None
        n_samples = cfg.n_periods // cfg.record_every
        for label, s in states.items():
            psi0 = product_state(s, n)
            psi = psi0.copy()
            vals = [1.0]
            for _ in range(n_samples):
                for _ in range(cfg.record_every):
                    psi = (u_period @ psi if dense
                           else period_propagate(cfg.sequence, h, psi, tau))
                vals.append(global_survival(psi, psi0) if cfg.global_overlap
                            else site_survival(psi, s, n))
            out[label] = np.array(vals)
    else:
        dt = cfg.jt / cfg.record_subdivisions
        steps = cfg.n_periods * cfg.record_subdivisions
        for label, s in states.items():
            psi0 = product_state(s, n)
            psi = psi0.copy()
            vals = [1.0]
            for _ in range(steps):
                psi = segment_propagate(h, psi, dt)
                vals.append(global_survival(psi, psi0) if cfg.global_overlap
                            else site_survival(psi, s, n))
            out[label] = np.array(vals)
    return out


def stroboscopic_run(cfg: RunConfig,
                     initial_states: dict[str, np.ndarray] | None = None,
                     threads: int | None = None) -> TimeSeries:
    """Profile-averaged survival traces for a protocol (or FID baseline).

    Profiles are independent tasks; results are reduced in profile-index
    order with compensated summation, so the output is identical for any
    thread count.
    """
    states = initial_states if initial_states is not None else INITIAL_STATES
    seeds = profile_seeds(cfg.master_seed, cfg.n_profiles)
    if cfg.sequence is None:
        n_times = cfg.n_periods * cfg.record_subdivisions + 1
        dt_rec = cfg.jt / cfg.record_subdivisions
    else:
        n_times = cfg.n_periods // cfg.record_every + 1
        dt_rec = cfg.jt * cfg.record_every
    store = {lab: np.empty((cfg.n_profiles, n_times)) for lab in states}

    def work(k: int):
        res = _single_profile_traces(cfg, seeds[k], states)
        for lab, arr in res.items():
            store[lab][k] = arr

    if threads and threads > 1 and cfg.n_profiles > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(cfg.n_profiles)))
    else:
        for k in range(cfg.n_profiles):
            work(k)

    traces = {lab: np.array([math.fsum(store[lab][:, t]) / cfg.n_profiles
                             for t in range(n_times)])
              for lab in states}
    times = np.arange(n_times) * dt_rec
    meta = {"jt": cfg.jt, "n_periods": cfg.n_periods,
            "n_profiles": cfg.n_profiles, "master_seed": cfg.master_seed,
            "signal_mu": cfg.signal_mu,
            "sequence": cfg.sequence.label if cfg.sequence else "fid",
            "n_spins": cfg.cluster.n_spins}
    return TimeSeries(times, traces, meta)


# ---------------------------------------------------------------------------
# protection factor and fits


class InsufficientHorizon(RuntimeError):
    """A trace never crossed the threshold; carries the bound reached."""

    def __init__(self, message: str, q_lower_bound: float | None = None):
        super().__init__(message)
        self.q_lower_bound = q_lower_bound


def crossing_time(times: np.ndarray, trace: np.ndarray,
                  level: float = 0.95) -> float | None:
    """First downward crossing of ``level``, linearly interpolated."""
    for k in range(1, len(trace)):
        if trace[k] < level <= trace[k - 1]:
            f = (trace[k - 1] - level) / (trace[k - 1] - trace[k])
            return float(times[k - 1] + f * (times[k] - times[k - 1]))
    return None


def protection_factor(ts_protocol: TimeSeries, ts_fid: TimeSeries,
                      level: float = 0.95) -> dict:
    """Q = t_protocol / t_fid at the 95% survival threshold."""
    t_f = crossing_time(ts_fid.times, ts_fid.p_avg, level)
    if t_f is None:
        raise InsufficientHorizon("FID trace never crossed the threshold")
    t_z = crossing_time(ts_protocol.times, ts_protocol.p_avg, level)
    if t_z is None:
        bound = float(ts_protocol.times[-1] / t_f)
        raise InsufficientHorizon(
            f"protocol trace stayed above {level} for the whole horizon "
            f"(Q > {bound:.1f})", q_lower_bound=bound)
    return {"q": t_z / t_f, "t_protocol": t_z, "t_fid": t_f, "level": level}


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float         # exponent in Q ~ prefactor * (JT)^(-alpha)
    prefactor: float
    alpha_stderr: float

    def extrapolate(self, jt: float) -> float:
        return self.prefactor * jt ** (-self.alpha)


def fit_power_law(points) -> PowerLawFit:
    """Least-squares line in log-log coordinates for Q(JT)."""
    pts = [(float(x), float(q)) for x, q in points]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    if any(x <= 0 or q <= 0 for x, q in pts):
        raise ValueError("points must be positive")
    lx = np.log([x for x, _ in pts])
    ly = np.log([q for _, q in pts])
    a = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - a @ coef
    dof = len(pts) - 2
    sxx = np.sum((lx - lx.mean()) ** 2)
    stderr = (float(np.sqrt(np.sum(resid ** 2) / dof / sxx))
              if dof > 0 and sxx > 0 else 0.0)
    return PowerLawFit(alpha=float(-coef[0]), prefactor=float(np.exp(coef[1])),
                       alpha_stderr=stderr)


# ---------------------------------------------------------------------------
# finite-size saturation study


@dataclass(frozen=True)
class FiniteSizeResult:
    entries: tuple[tuple[int, float, float], ...]   # (N, P_s, sem)
    slope: float                                    # vs 1/N
    intercept: float
    r_squared: float
    window: tuple[float, float]
    window_warning: bool


def finite_size_study(cluster_specs: dict[int, ClusterSpec],
                      profiles: dict[int, int],
                      window: tuple[float, float] = (492.0, 500.0),
                      n_window_samples: int = 9,
                      step: float = 1.0,
                      master_seed: int = 0,
                      threads: int | None = None) -> FiniteSizeResult:
    """FID saturation average P_s per register size, regressed against 1/N.

    Each profile evolves the three standard product states to the window
    and time-averages the mean survival over it.  The window should lie
    far beyond the initial decay; a warning flag is set when the first and
    second half-window averages disagree beyond combined errors.
    """
    t_lo, t_hi = window
    sample_times = np.linspace(t_lo, t_hi, n_window_samples)
    entries = []
    halves = []
    for n_spins, spec in sorted(cluster_specs.items()):
        n_prof = profiles[n_spins]
        seeds = profile_seeds(master_seed + n_spins, n_prof)
        vals = np.empty(n_prof)
        first_half = np.empty(n_prof)

        def work(k: int):
            geometry = sample_cluster(replace(spec, seed=int(seeds[k])))
            h = assemble_ensemble(geometry)
            per_state = []
            for s in INITIAL_STATES.values():
                psi = product_state(s, n_spins)
                t_now = 0.0
                samples = []
                for t_target in sample_times:
                    psi = segment_propagate_stepping(h, psi, t_target - t_now,
                                                     step)
                    t_now = t_target
                    samples.append(site_survival(psi, s, n_spins))
                per_state.append(samples)
            arr = np.mean(per_state, axis=0)
            vals[k] = float(arr.mean())
            first_half[k] = float(arr[: len(arr) // 2].mean())

        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, range(n_prof)))
        else:
            for k in range(n_prof):
                work(k)
        ps = float(np.mean(vals))
        sem = float(np.std(vals) / np.sqrt(n_prof)) if n_prof > 1 else 0.0
        entries.append((n_spins, ps, sem))
        halves.append(abs(np.mean(first_half) - ps))

    x = np.array([1.0 / n for n, _, _ in entries])
    y = np.array([p for _, p, _ in entries])
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    yhat = a @ coef
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    sems = [max(s, 1e-12) for _, _, s in entries]
    warning = any(h > 4.0 * s for h, s in zip(halves, sems))
    return FiniteSizeResult(tuple(entries), float(coef[0]), float(coef[1]),
                            r2, window, warning)


def segment_propagate_stepping(h: EnsembleHamiltonian, psi: np.ndarray,
                               duration: float, step: float) -> np.ndarray:
    """Free evolution over ``duration`` in Lanczos-friendly substeps.

    The recording grid, not the propagator, sets the step; each substep is
    an independent time-independent segment.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    remaining = duration
    while remaining > 1e-12:
        dt = min(step, remaining)
        psi = segment_propagate(h, psi, dt)
        remaining -= dt
    return psi
