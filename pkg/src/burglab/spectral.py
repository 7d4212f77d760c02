"""Pseudo-spectral solver for the forced viscous Burgers equation on the unit circle.

Fourier-Galerkin truncation to modes 0 < |s| <= K in the real trigonometric
basis (cosine block first, sine block second; the mean mode is excluded and
stays zero).  The quadratic term is evaluated on a padded physical grid;
n_grid >= 3K + 1 keeps every retained product alias-free, and the default
grid is the next fast FFT length above that.

Time stepping is exponential Euler-Maruyama with the exact
Ornstein-Uhlenbeck treatment of the linear part: with lam_s = nu (2 pi s)^2,

    a_s <- exp(-lam_s dt) a_s
           + lam_s^-1 (1 - exp(-lam_s dt)) N_s(u)
           + b_s sqrt((1 - exp(-2 lam_s dt)) / (2 lam_s)) g_s,

where N(u) is the dealiased Galerkin projection of -u u_x and the g_s are
the per-step standard normals of the trajectory stream.  With the
nonlinearity switched off the scheme samples the exact OU transition
kernel at any dt, which the linear-regime checks rely on.

The adaptive dt policy follows dt = min(safety/(n_grid max(1, |u|_inf)),
dt_max), quantized downward to dt_max 2^-k so the per-dt exponential
factors can be cached instead of recomputed every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.fft

from .forcing import ForcingSpec, sample_normals

BLOWUP_LIMIT = 1.0e8


class BlowUpError(RuntimeError):
    """A trajectory left the resolvable range (non-finite or huge coefficients)."""

    def __init__(self, t: float, step: int, amplitude: float):
        super().__init__(
            f"solution blew up at t={t:.6g} (step {step}): max |coeff| = {amplitude:.3g}"
        )
        self.t = t
        self.step = step
        self.amplitude = amplitude


def default_n_grid(K: int) -> int:
    return scipy.fft.next_fast_len(3 * K + 1, real=True)


def default_truncation(nu: float) -> int:
    """Smallest power of two >= 4/nu: resolves the dissipative scale with margin."""
    if nu <= 0:
        raise ValueError("nu must be positive for the spectral solver")
    return 1 << max(4, math.ceil(math.log2(4.0 / nu)))


@dataclass
class SpectralField:
    """Real Fourier coefficients: coeffs[:K] cosine modes 1..K, coeffs[K:] sine modes."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 1 or self.coeffs.size % 2:
            raise ValueError("coeffs must be a flat array of even length")

    @property
    def K(self) -> int:
        return self.coeffs.size // 2

    @classmethod
    def zero(cls, K: int) -> "SpectralField":
        return cls(np.zeros(2 * K))

    @classmethod
    def from_modes(cls, amplitudes: dict, K: int) -> "SpectralField":
        """Build a field from {signed mode: coefficient} in the e_s basis."""
        out = np.zeros(2 * K)
        for s, a in amplitudes.items():
            s = int(s)
            if s == 0 or abs(s) > K:
                raise ValueError(f"mode {s} outside 0 < |s| <= {K}")
            out[s - 1 if s > 0 else K - s - 1] = a
        return cls(out)

    def mode_energies(self) -> np.ndarray:
        """Per-wavenumber energy a_k^2 + a_-k^2, k = 1..K."""
        K = self.K
        return self.coeffs[:K] ** 2 + self.coeffs[K:] ** 2

    def norm(self, m: int = 0) -> float:
        """Sobolev seminorm: (sum |2 pi s|^(2m) a_s^2)^(1/2)."""
        if m == 0:
            return float(np.sqrt(np.sum(self.coeffs**2)))
        k = 2.0 * np.pi * np.arange(1, self.K + 1)
        return float(np.sqrt(np.sum(k ** (2 * m) * self.mode_energies())))

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy())


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    K: int
    n_grid: int = 0  # 0 -> default_n_grid(K)
    dt_max: float = 1.0e-3
    safety: float = 0.25
    fixed_dt: float | None = None
    nonlinearity: bool = True

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise ValueError("nu must lie in (0, 1]")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.n_grid == 0:
            object.__setattr__(self, "n_grid", default_n_grid(self.K))
        if self.n_grid < 3 * self.K:
            raise ValueError("n_grid must be >= 3K for dealiased products")
        if self.dt_max <= 0 or self.safety <= 0:
            raise ValueError("dt_max and safety must be positive")
        if self.fixed_dt is not None and not 0.0 < self.fixed_dt <= self.dt_max:
            raise ValueError("fixed_dt must lie in (0, dt_max]")


@dataclass
class TrajectoryState:
    """Mutable trajectory: field, clock, step count, noise stream, and the
    running energy-budget terms.  dissipation_work accumulates the quadrature
    of int nu ||u||_1^2 ds (exact along the OU decay within each step);
    noise_work accumulates the discrete martingale sum_s b~_s g_s a_s, the
    work done by the noise on the pre-kick coefficients.  Together they close
    the pathwise energy balance
        1/2 ||u(t)||^2 - 1/2 ||u(0)||^2 + dissipation_work
            = 1/2 B_0 t + noise_work + O(dt)
    with the O(dt) defect coming only from the nonlinear discretization."""

    field: SpectralField
    t: float = 0.0
    step: int = 0
    stream: object = None
    noise_work: float = 0.0
    dissipation_work: float = 0.0


def to_physical(field_or_coeffs, n: int, offset: float = 0.0) -> np.ndarray:
    """Evaluate the trig polynomial on x_j = j/n + offset (requires n >= 2K + 1)."""
    coeffs = field_or_coeffs.coeffs if isinstance(field_or_coeffs, SpectralField) else np.asarray(field_or_coeffs)
    K = coeffs.size // 2
    if n < 2 * K + 1:
        raise ValueError(f"n={n} cannot carry K={K} modes (need n >= 2K + 1)")
    spec = np.zeros(n // 2 + 1, dtype=np.complex128)
    spec[1 : K + 1].real = coeffs[:K]
    spec[1 : K + 1].imag = -coeffs[K:]
    spec[1 : K + 1] *= n / np.sqrt(2.0)
    if offset:
        spec[1 : K + 1] *= np.exp(2j * np.pi * offset * np.arange(1, K + 1))
    return scipy.fft.irfft(spec, n)


def from_physical(values: np.ndarray, K: int) -> SpectralField:
    """Project grid samples onto modes 0 < |s| <= K (requires len(values) >= 2K + 1)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 2 * K + 1:
        raise ValueError(f"{n} samples cannot resolve K={K} modes (need n >= 2K + 1)")
    spec = scipy.fft.rfft(values)
    out = np.empty(2 * K)
    out[:K] = np.sqrt(2.0) * spec[1 : K + 1].real / n
    out[K:] = -np.sqrt(2.0) * spec[1 : K + 1].imag / n
    return SpectralField(out)


class _Workspace:
    """Per-(config, forcing) scratch state: wavenumbers, forcing layout, dt caches."""

    def __init__(self, cfg: SolverConfig, spec: ForcingSpec | None):
        K = cfg.K
        k = 2.0 * np.pi * np.arange(1, K + 1)
        self.lam = cfg.nu * np.concatenate([k, k]) ** 2
        self.dx_factor = np.concatenate([k, -k])  # see _derivative below
        if spec is not None:
            if spec.s_max > K:
                raise ValueError(f"forcing support |s| <= {spec.s_max} exceeds K={K}")
            modes = spec.modes
            self.f_idx = np.where(modes > 0, modes - 1, K - modes - 1)
            self.f_amp = spec.amplitudes
        else:
            self.f_idx = np.zeros(0, dtype=np.int64)
            self.f_amp = np.zeros(0)
        self._by_dt: dict[float, tuple] = {}

    def factors(self, dt: float) -> tuple:
        got = self._by_dt.get(dt)
        if got is None:
            decay = np.exp(-self.lam * dt)
            grow = -np.expm1(-self.lam * dt) / self.lam  # (1 - e^(-lam dt)) / lam
            noise = self.f_amp * np.sqrt(
                -np.expm1(-2.0 * self.lam[self.f_idx] * dt) / (2.0 * self.lam[self.f_idx])
            )
            # 1/2 a^2 (1 - e^(-2 lam dt)) is int nu |2 pi s|^2 a^2 e^(-2 lam tau)
            # over the step: the dissipation integral along the exact decay path.
            ediss = 0.5 * -np.expm1(-2.0 * self.lam * dt)
            if len(self._by_dt) > 64:
                self._by_dt.clear()
            got = self._by_dt[dt] = (decay, grow, noise, ediss)
        return got


@lru_cache(maxsize=16)
def _workspace(cfg: SolverConfig, spec: ForcingSpec | None) -> _Workspace:
    return _Workspace(cfg, spec)


def _derivative(coeffs: np.ndarray) -> np.ndarray:
    """d/dx in the real basis: cos_k' = 2 pi k * sin-part, sin_k' = -2 pi k * cos-part."""
    K = coeffs.size // 2
    k = 2.0 * np.pi * np.arange(1, K + 1)
    out = np.empty_like(coeffs)
    out[:K] = k * coeffs[K:]
    out[K:] = -k * coeffs[:K]
    return out


def nonlinear_term(field: SpectralField, n_grid: int | None = None) -> SpectralField:
    """Galerkin projection of -u u_x, dealiased on the padded grid."""
    K = field.K
    n = n_grid or default_n_grid(K)
    if n < 3 * K:
        raise ValueError("n_grid must be >= 3K to dealias the quadratic term")
    u = to_physical(field, n)
    half_sq = from_physical(0.5 * u * u, K)
    return SpectralField(-_derivative(half_sq.coeffs))


def step(
    state: TrajectoryState,
    cfg: SolverConfig,
    spec: ForcingSpec | None,
    dt: float | None = None,
    max_dt: float | None = None,
    normals: np.ndarray | None = None,
) -> TrajectoryState:
    """Advance one exponential Euler-Maruyama step in place.

    dt=None applies the config policy (fixed_dt, else the adaptive rule on
    the current |u|_inf).  max_dt clips the result so samples can land on
    exact times.  `normals` overrides the stream draw (same layout as the
    forcing support) for common-noise comparisons.
    """
    ws = _workspace(cfg, spec)
    a = state.field.coeffs
    if a.size != 2 * cfg.K:
        raise ValueError("state truncation does not match config")

    if cfg.nonlinearity:
        u = to_physical(a, cfg.n_grid)
        umax = float(np.max(np.abs(u)))
    else:
        u = None
        umax = 0.0

    if dt is None:
        dt = cfg.fixed_dt if cfg.fixed_dt is not None else _policy_dt(cfg, umax)
    if max_dt is not None:
        dt = min(dt, max_dt)

    decay, grow, noise_std, ediss = ws.factors(dt)
    state.dissipation_work += float(np.dot(a * a, ediss))
    if cfg.nonlinearity:
        half_sq = scipy.fft.rfft(0.5 * u * u)
        nl = np.empty_like(a)
        scale = np.sqrt(2.0) / cfg.n_grid
        nl[: cfg.K] = scale * half_sq[1 : cfg.K + 1].real
        nl[cfg.K :] = -scale * half_sq[1 : cfg.K + 1].imag
        nl = _derivative(nl)
        np.multiply(a, decay, out=a)
        a -= grow * nl  # N(u) = -d/dx (u^2/2)
    else:
        np.multiply(a, decay, out=a)

    if spec is not None and ws.f_idx.size:
        g = normals if normals is not None else sample_normals(spec, state.stream, state.step)
        kick = noise_std * g
        state.noise_work += float(np.dot(kick, a[ws.f_idx]))
        a[ws.f_idx] += kick

    state.t += dt
    state.step += 1

    amax = float(np.max(np.abs(a)))
    if not np.isfinite(amax) or amax > BLOWUP_LIMIT:
        raise BlowUpError(state.t, state.step, amax)
    return state


def _policy_dt(cfg: SolverConfig, umax: float) -> float:
    if not cfg.nonlinearity:
        return cfg.dt_max  # OU part is exact at any dt; no advective restriction
    raw = cfg.safety / (cfg.n_grid * max(1.0, umax))
    if raw >= cfg.dt_max:
        return cfg.dt_max
    return cfg.dt_max * 2.0 ** -math.ceil(math.log2(cfg.dt_max / raw))


def integrate(
    state: TrajectoryState,
    cfg: SolverConfig,
    spec: ForcingSpec | None,
    horizon: float,
    sample_every: float,
    sink,
) -> TrajectoryState:
    """Run to state.t + horizon, calling sink(field, t) at every sample time.

    Sample times are t0 + j * sample_every for j = 1 .. horizon/sample_every;
    steps are clipped so samples land exactly on the grid. horizon=0 emits
    nothing.
    """
    if horizon < 0 or sample_every <= 0:
        raise ValueError("horizon must be >= 0 and sample_every > 0")
    n_samples = round(horizon / sample_every)
    if abs(n_samples * sample_every - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be a multiple of sample_every")
    t0 = state.t
    for j in range(1, n_samples + 1):
        target = t0 + j * sample_every
        while state.t < target - 1e-12:
            step(state, cfg, spec, max_dt=target - state.t)
        state.t = target
        sink(state.field, state.t)
    return state


def refine_check(
    initial: SpectralField,
    cfg: SolverConfig,
    spec: ForcingSpec | None,
    horizon: float,
    sample_every: float,
    seed: int = 0,
    trajectory: int = 0,
) -> float:
    """Sup over sample times of the coarse-band coefficient distance between
    resolutions K and 2K driven by the same noise path (fixed dt required)."""
    from .rng import NoiseStream

    if cfg.fixed_dt is None:
        raise ValueError("refine_check needs fixed_dt so both runs share the step grid")
    K = cfg.K
    fine_cfg = replace(cfg, K=2 * K, n_grid=default_n_grid(2 * K))

    runs = {}
    for label, c in (("coarse", cfg), ("fine", fine_cfg)):
        pad = np.zeros(2 * c.K)
        pad[: K] = initial.coeffs[:K]
        pad[c.K : c.K + K] = initial.coeffs[K:]
        st = TrajectoryState(SpectralField(pad), stream=NoiseStream(seed, trajectory))
        snaps = []
        integrate(st, c, spec, horizon, sample_every, lambda f, t: snaps.append(f.copy()))
        runs[label] = snaps

    worst = 0.0
    for co, fi in zip(runs["coarse"], runs["fine"]):
        dc = fi.coeffs[:K] - co.coeffs[:K]
        ds = fi.coeffs[2 * K : 3 * K] - co.coeffs[K:]
        worst = max(worst, float(np.sqrt(np.sum(dc**2) + np.sum(ds**2))))
    return worst
