"""Scaling-law checks for stationary burgulence.

Everything here consumes ensemble statistics (StructureTable, mean spectra,
scalar series) and returns verdict objects: measured value, expected value,
tolerance, pass/fail.  The exact Karman-Howarth-Monin budget is the backbone;
the asymptotic laws (the strong 4/5 analogue E s_3(l) ~ -6 B_0 l, structure
exponents min(1, p), Sobolev growth nu^-(2m-1), Landau universality of the
prefactor -12 against the dissipation rate) are checked on explicitly
recorded separation ranges.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from . import forcing as forcing_mod
from .forcing import ForcingSpec
from .observables import BracketSpec, StructureTable, correlation_from_spectrum


@dataclass
class RangeSpec:
    """Separation window [floor, cap]; dissipation_cut marks where the
    dissipative range is assumed to end (floor >= dissipation_cut)."""

    floor: float
    cap: float
    dissipation_cut: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dissipation_cut <= self.floor < self.cap:
            raise ValueError(
                f"need dissipation_cut <= floor < cap, got "
                f"({self.dissipation_cut}, {self.floor}, {self.cap})"
            )

    def mask(self, l: np.ndarray) -> np.ndarray:
        return (l >= self.floor - 1e-15) & (l <= self.cap + 1e-15)


@dataclass
class ScalingFit:
    exponent: float
    exponent_stderr: float
    log_prefactor: float
    residual_rms: float
    n_points: int
    lo: float
    hi: float


@dataclass
class KHMReport:
    l: np.ndarray
    residual: np.ndarray
    terms: dict
    residual_stderr: np.ndarray | None = None

    @property
    def max_term(self) -> np.ndarray:
        return np.max(np.abs(np.stack(list(self.terms.values()))), axis=0)


@dataclass
class LawVerdict:
    law: str
    passed: bool
    measured: float
    expected: float
    tolerance: float
    stderr: float | None = None
    n_samples: int = 0
    details: dict = dfield(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "law": self.law,
            "passed": bool(self.passed),
            "measured": float(self.measured),
            "expected": float(self.expected),
            "tolerance": float(self.tolerance),
            "stderr": None if self.stderr is None else float(self.stderr),
            "n_samples": int(self.n_samples),
            "details": _plain(self.details),
        }
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def strong_inertial_range(nu: float, cap: float = 0.1, floor_exponent: float = 2.0 / 3.0, floor_min: float = 0.0) -> RangeSpec:
    """Separations [nu^floor_exponent, cap]: above the dissipative scales for
    every admissible choice (floor/nu -> infinity, floor -> 0 with nu)."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    floor = max(nu**floor_exponent if nu > 0 else 0.0, floor_min)
    if floor >= cap:
        raise ValueError(f"no strongly inertial separations: floor {floor:.4g} >= cap {cap}")
    return RangeSpec(floor=floor, cap=cap, dissipation_cut=min(nu, floor))


def khm_stationary(
    table: StructureTable,
    mean_spectrum: np.ndarray,
    spec: ForcingSpec,
    nu: float,
    per_traj_s3: np.ndarray | None = None,
    per_traj_spectrum: np.ndarray | None = None,
) -> KHMReport:
    """Stationary Karman-Howarth-Monin budget on the table's separations:

        E s_3(l) + 12 nu d_l E f(l) + 6 int_0^l B~0 = 0   (exactly).

    The derivative of the two-point correlation comes from the spectrum, not
    finite differences.  Per-trajectory inputs, when given, yield an honest
    stderr of the residual (correlations between terms included).
    """
    l = table.l
    s3 = table.signed_mean(3)
    _, df, _ = correlation_from_spectrum(mean_spectrum, l)
    forced = 6.0 * np.asarray(forcing_mod.integrated_correlation(spec, l))
    visc = 12.0 * nu * df
    residual = s3 + visc + forced

    stderr = None
    if per_traj_s3 is not None and per_traj_spectrum is not None:
        rows = []
        for s3_i, spec_i in zip(per_traj_s3, per_traj_spectrum):
            _, df_i, _ = correlation_from_spectrum(spec_i, l)
            rows.append(s3_i + 12.0 * nu * df_i + forced)
        rows = np.asarray(rows)
        stderr = rows.std(axis=0, ddof=1) / np.sqrt(rows.shape[0])
    elif table.trajectories > 1:
        stderr = table.signed_stderr(3)

    return KHMReport(
        l=l,
        residual=residual,
        terms={"s3": s3, "viscous": visc, "forcing": forced},
        residual_stderr=stderr,
    )


def khm_dynamic(
    times: np.ndarray,
    spectrum_series: np.ndarray,
    s3_series: np.ndarray,
    l: np.ndarray,
    spec: ForcingSpec,
    nu: float,
    index: int | None = None,
) -> KHMReport:
    """Dynamic budget d/dt E f = (1/6) d_l E s_3 + 2 nu d_l^2 E f + B~0(l),
    with centered differences in t (sample grid) and l (table grid).

    spectrum_series: (nt, K) ensemble-mean mode energies; s3_series: (nt, nl).
    Residual is reported at the middle sample unless index is given.
    """
    times = np.asarray(times, dtype=np.float64)
    nt = times.size
    if nt < 3:
        raise ValueError("need at least 3 samples for a centered time derivative")
    j = index if index is not None else nt // 2
    if not 1 <= j <= nt - 2:
        raise ValueError(f"index {j} has no centered neighbours in 0..{nt - 1}")

    f_lo, _, d2f = correlation_from_spectrum(spectrum_series[j], l)
    f_prev, _, _ = correlation_from_spectrum(spectrum_series[j - 1], l)
    f_next, _, _ = correlation_from_spectrum(spectrum_series[j + 1], l)
    dfdt = (f_next - f_prev) / (times[j + 1] - times[j - 1])

    s3 = np.asarray(s3_series[j], dtype=np.float64)
    ds3 = np.empty_like(s3)
    ds3[1:-1] = (s3[2:] - s3[:-2]) / (l[2:] - l[:-2])
    ds3[0] = (s3[1] - s3[0]) / (l[1] - l[0])
    ds3[-1] = (s3[-1] - s3[-2]) / (l[-1] - l[-2])

    terms = {
        "transfer": ds3 / 6.0,
        "viscous": 2.0 * nu * d2f,
        "forcing": np.broadcast_to(np.asarray(forcing_mod.correlation(spec, l)), s3.shape).copy(),
    }
    residual = dfdt - terms["transfer"] - terms["viscous"] - terms["forcing"]
    report = KHMReport(l=np.asarray(l), residual=residual, terms=terms)
    report.terms["df_dt"] = dfdt
    return report


def _origin_fit(l: np.ndarray, y: np.ndarray, yerr: np.ndarray | None):
    """Least-squares slope of y against l through the origin: the fitted C in
    y = C l over the window. Equivalently an l^2-weighted mean of y/l, which
    is what makes it the right inertial-range estimator: the separation grid
    is log-spaced, so a plain average of y/l would be dominated by the
    crowded small-l end where viscosity contaminates the ratio. The stderr is
    the naive quadrature propagation of the per-point errors, a diagnostic
    rather than a rigorous interval since neighbouring separations are
    strongly correlated.
    """
    l = np.asarray(l, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    denom = float(np.sum(l * l))
    slope = float(np.sum(l * y)) / denom
    err = float("nan")
    if yerr is not None:
        yerr = np.asarray(yerr, dtype=np.float64)
        if np.all(np.isfinite(yerr)) and np.all(yerr > 0):
            err = float(np.sqrt(np.sum((l * yerr) ** 2))) / denom
    return slope, err


def verify_45(
    table: StructureTable,
    spec: ForcingSpec,
    nu: float,
    window: RangeSpec | None = None,
    tolerance: float = 0.2,
    dissipation_rate: float | None = None,
) -> LawVerdict:
    """Strong 4/5-law analogue: the slope of the linear law E s_3(l) = C l,
    fitted through the origin over the strongly inertial window, should sit
    at C = -6 B_0 (equivalently -12 eps when the dissipation anchor is
    supplied). The fit is a weighted mean of the compensated ratio s_3(l)/l
    with least-squares weights l^2."""
    if window is None:
        window = strong_inertial_range(nu)
    mask = window.mask(table.l)
    if not np.any(mask):
        raise ValueError(f"no tabulated separations inside [{window.floor}, {window.cap}]")
    l = table.l[mask]
    ratio = table.signed_mean(3)[mask] / l
    rerr = table.signed_stderr(3)[mask] / l if table.trajectories > 1 else None
    s3err = table.signed_stderr(3)[mask] if table.trajectories > 1 else None
    measured, stderr = _origin_fit(l, table.signed_mean(3)[mask], s3err)

    b0 = spec.b0
    expected = -6.0 * b0
    details = {
        "window": [window.floor, window.cap],
        "n_separations": int(mask.sum()),
        "ratio_by_l": {"l": l, "ratio": ratio, "stderr": rerr},
    }
    if rerr is not None and np.all(rerr > 0):
        # diagnostic alternative: inverse-variance mean of the ratio itself.
        # stderr(s_3) grows roughly linearly in l, so these weights flatten to
        # near-uniform and the estimate soaks up the small-l viscous droop;
        # kept in the details for comparison, not used for the verdict.
        w = 1.0 / rerr**2
        details["ratio_inverse_variance_mean"] = float(np.sum(w * ratio) / np.sum(w))
    if dissipation_rate is not None:
        details["vs_dissipation"] = {
            "expected": -12.0 * dissipation_rate,
            "relative_error": abs(measured / (-12.0 * dissipation_rate) - 1.0),
        }
    return LawVerdict(
        law="four_fifths",
        passed=bool(abs(measured / expected - 1.0) <= tolerance),
        measured=measured,
        expected=expected,
        tolerance=tolerance,
        stderr=stderr,
        n_samples=table.trajectories,
        details=details,
    )


def fit_structure_exponent(
    table: StructureTable,
    p: float,
    lo: float,
    hi: float,
    flavor: str = "absolute",
    min_points: int = 6,
) -> ScalingFit:
    """Log-log least squares of S_p(l) ~ C l^zeta over [lo, hi]."""
    if flavor == "absolute":
        mean, err = table.absolute_mean(p), table.absolute_stderr(p)
    elif flavor == "signed":
        mean, err = np.abs(table.signed_mean(p)), table.signed_stderr(p)
    elif flavor == "pos_cubed":
        mean, err = table.pos_cubed.mean, table.pos_cubed.stderr()
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    mask = (table.l >= lo - 1e-15) & (table.l <= hi + 1e-15) & (mean > 0)
    if mask.sum() < min_points:
        raise ValueError(f"only {int(mask.sum())} usable separations in [{lo}, {hi}]; need >= {min_points}")
    x = np.log(table.l[mask])
    y = np.log(mean[mask])
    sig = None
    if table.trajectories > 1 and err is not None:
        rel = err[mask] / mean[mask]
        if np.all(np.isfinite(rel)) and np.all(rel > 0):
            sig = rel
    w = np.ones_like(x) if sig is None else 1.0 / sig**2
    A = np.stack([x, np.ones_like(x)], axis=1)
    Aw = A * w[:, None]
    cov = np.linalg.inv(A.T @ Aw)
    beta = cov @ (Aw.T @ y)
    resid = y - A @ beta
    dof = max(1, x.size - 2)
    scale = float(np.sum(w * resid**2) / dof)
    return ScalingFit(
        exponent=float(beta[0]),
        exponent_stderr=float(np.sqrt(cov[0, 0] * scale)),
        log_prefactor=float(beta[1]),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=int(x.size),
        lo=float(lo),
        hi=float(hi),
    )


def detect_inertial_range(table: StructureTable, band: float = 0.2, p: float = 2.0) -> RangeSpec:
    """Widest contiguous window where the local log-slope of S_2 sits in 1 +- band."""
    mean = table.absolute_mean(p)
    l = table.l
    ok = mean > 0
    x, y = np.log(l[ok]), np.log(mean[ok])
    slope = np.empty_like(x)
    slope[1:-1] = (y[2:] - y[:-2]) / (x[2:] - x[:-2])
    slope[0], slope[-1] = slope[1], slope[-2]
    inside = np.abs(slope - 1.0) <= band
    best, cur, best_span = None, None, 0
    for i, flag in enumerate(inside):
        if flag:
            cur = i if cur is None else cur
            if x[i] - x[cur] > best_span:
                best, best_span = (cur, i), x[i] - x[cur]
        else:
            cur = None
    if best is None:
        raise ValueError("no separations with local S_2 slope inside the band")
    lo, hi = np.exp(x[best[0]]), np.exp(x[best[1]])
    return RangeSpec(floor=float(lo), cap=float(hi), dissipation_cut=0.0)


def sobolev_scaling_check(
    nu_list,
    means,
    stderrs=None,
    m: int = 1,
    tolerance: float = 0.3,
) -> LawVerdict:
    """Fit <<||u||_m^2>> ~ nu^alpha; expected alpha = -(2m - 1) (so the energy,
    m = 0, stays bounded: alpha = 0)."""
    nu_arr = np.asarray(nu_list, dtype=np.float64)
    vals = np.asarray(means, dtype=np.float64)
    if nu_arr.size < 3:
        raise ValueError("need at least 3 viscosities")
    if nu_arr.max() / nu_arr.min() < 4.0:
        raise ValueError("viscosities must span at least a factor of 4")
    x, y = np.log(nu_arr), np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    expected = -(2.0 * m - 1.0) if m >= 1 else 0.0
    measured = float(slope)
    return LawVerdict(
        law=f"sobolev_m{m}",
        passed=bool(abs(measured - expected) <= tolerance),
        measured=measured,
        expected=expected,
        tolerance=tolerance,
        n_samples=int(nu_arr.size),
        details={
            "nu": nu_arr,
            "means": vals,
            "stderrs": None if stderrs is None else np.asarray(stderrs),
            "log_prefactor": float(intercept),
            "comparison": "absolute difference of exponents",
        },
    )


def energy_balance_check(
    times: np.ndarray,
    energy_mean: np.ndarray,
    dissipation_integral: np.ndarray,
    b0: float,
    noise_work: np.ndarray | None = None,
    t_min: float = 1.0,
    tolerance: float = 0.05,
) -> LawVerdict:
    """Trajectory energy budget from rest, averaged over the ensemble:

        0.5 E||u(t)||^2 - 0.5 E||u(0)||^2 + E int_0^t nu ||u||_1^2 ds = 0.5 B_0 t,

    residual normalized by the injected energy 0.5 B_0 t, max over sample
    times t >= t_min.

    dissipation_integral is the running int_0^t nu ||u||_1^2 ds at the
    sample times (the spectral stepper accumulates it exactly along the OU
    decay).  noise_work is the sampled martingale int sum_s b_s a_s dbeta_s
    along the same trajectories; its expectation vanishes, so subtracting
    the sampled value does not change what is measured, but it removes the
    mean-zero Wiener fluctuation whose std over N trajectories
    (~ sqrt(B_0 <||u||^2> t / N) / (0.5 B_0 t)) would otherwise swamp a 5%
    tolerance at any feasible ensemble size.  The uncorrected residual is
    kept in the details.
    """
    times = np.asarray(times, dtype=np.float64)
    energy = np.asarray(energy_mean, dtype=np.float64)
    cum = np.asarray(dissipation_integral, dtype=np.float64)
    if times[0] != 0.0:
        raise ValueError("balance check needs the series from t = 0")
    raw = 0.5 * energy - 0.5 * energy[0] + cum - cum[0] - 0.5 * b0 * times
    if noise_work is not None:
        mart = np.asarray(noise_work, dtype=np.float64)
        residual = raw - (mart - mart[0])
    else:
        residual = raw
    mask = times >= t_min
    if not np.any(mask):
        raise ValueError(f"no samples at or beyond t_min={t_min}")
    rel = np.abs(residual[mask]) / (0.5 * b0 * times[mask])
    measured = float(np.max(rel))
    details = {"worst_t": float(times[mask][np.argmax(rel)]), "residual": residual, "times": times}
    if noise_work is not None:
        details["raw_residual"] = raw
        details["raw_max_rel"] = float(np.max(np.abs(raw[mask]) / (0.5 * b0 * times[mask])))
    return LawVerdict(
        law="energy_balance",
        passed=bool(measured <= tolerance),
        measured=measured,
        expected=0.0,
        tolerance=tolerance,
        n_samples=int(mask.sum()),
        details=details,
    )


def dissipation_anchor_check(
    dissipation_bracket_mean: float,
    b0: float,
    tolerance: float = 0.10,
    stderr: float | None = None,
    n_samples: int = 0,
) -> LawVerdict:
    """Stationary input-output balance: <<nu ||u||_1^2>> = B_0 / 2."""
    expected = 0.5 * b0
    measured = float(dissipation_bracket_mean)
    return LawVerdict(
        law="dissipation_anchor",
        passed=bool(abs(measured / expected - 1.0) <= tolerance),
        measured=measured,
        expected=expected,
        tolerance=tolerance,
        stderr=stderr,
        n_samples=n_samples,
    )


def rescale_structure(table: StructureTable, mu: float) -> StructureTable:
    """Structure table of w(tau, x) = mu u(mu tau, x): moments scale by mu^p."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    out = StructureTable.empty(table.p_list, table.l.copy())
    p_pow = np.array([mu**p for p in table.p_list])[:, None]
    for src, dst, fac in (
        (table.signed, out.signed, p_pow),
        (table.absolute, out.absolute, p_pow),
        (table.pos_cubed, out.pos_cubed, mu**3),
    ):
        dst.count = src.count
        dst.mean = src.mean * fac
        dst.m2 = src.m2 * np.asarray(fac) ** 2
    return out


def landau_identity_check(fields, l, mu: float, p_list=(1.0, 2.0, 3.0, 4.0), tolerance: float = 1e-12) -> LawVerdict:
    """Data-level exactness of the amplitude rescaling: for each snapshot u,
    the moments of mu*u computed from scratch must equal mu^p times the
    moments of u. The two sides round differently ((mu delta)^p summed versus
    mu^p times the summed delta^p), so this genuinely exercises the moment
    pipeline rather than restating the algebraic map S -> mu^p S.
    """
    from .observables import increment_moments

    if mu <= 0:
        raise ValueError("mu must be positive")
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one snapshot field")
    worst = 0.0
    for u in fields:
        u = np.asarray(u, dtype=np.float64)
        base = increment_moments(u, l, p_list=p_list)
        scaled = increment_moments(mu * u, l, p_list=p_list)
        for i, p in enumerate(base.p_list):
            ref = base.absolute[i] * mu**p
            err = np.abs(scaled.absolute[i] - ref) / np.maximum(np.abs(ref), 1e-300)
            worst = max(worst, float(np.max(err)))
            if float(p).is_integer():
                ref = base.signed[i] * mu**p
                # odd signed moments can cancel to roundoff; measure those
                # relative to the absolute moment, not the cancelled value
                scale = np.maximum(np.abs(ref), base.absolute[i] * mu**p * 1e-3)
                worst = max(worst, float(np.max(np.abs(scaled.signed[i] - ref) / scale)))
    return LawVerdict(
        law="landau_identity",
        passed=bool(worst <= tolerance),
        measured=worst,
        expected=0.0,
        tolerance=tolerance,
        n_samples=len(fields),
        details={"mu": mu, "orders": [float(p) for p in p_list]},
    )


def universality_check(
    labelled_tables: dict,
    nu_by_label: dict,
    dissipation_by_label: dict,
    tolerance: float = 0.2,
    expected: float = -12.0,
    windows: dict | None = None,
) -> list:
    """Prefactor universality: C_* fitted from E s_3(l) = C_* eps l over each
    ensemble's strongly inertial window (same origin-constrained fit as the
    4/5-law slope) must match -12, independently of the forcing spectrum that
    produced it."""
    verdicts = []
    for label, table in labelled_tables.items():
        eps = dissipation_by_label[label]
        window = (windows or {}).get(label) or strong_inertial_range(nu_by_label[label])
        mask = window.mask(table.l)
        l = table.l[mask]
        yerr = table.signed_stderr(3)[mask] / eps if table.trajectories > 1 else None
        measured, stderr = _origin_fit(l, table.signed_mean(3)[mask] / eps, yerr)
        verdicts.append(
            LawVerdict(
                law=f"landau_prefactor[{label}]",
                passed=bool(abs(measured / expected - 1.0) <= tolerance),
                measured=measured,
                expected=expected,
                tolerance=tolerance,
                stderr=stderr,
                n_samples=table.trajectories,
                details={"window": [window.floor, window.cap], "dissipation_rate": eps},
            )
        )
    return verdicts


def forcing_exponent_check(fields, l, mu: float = 2.0, p_list=(2.0, 3.0, 4.0), tolerance: float = 1e-9) -> LawVerdict:
    """The exponent-forcing argument on data: w = mu u solves the equation
    with dissipation rate mu^3 eps, so if S_p = C (eps l)^q is to be
    mu-invariant then q = log(S_p(w)/S_p(u)) / log(mu^3) must equal p/3.
    The exponents are measured from freshly recomputed moments of the scaled
    snapshots; p = 3 is the only order with q = 1, i.e. the only moment
    relation linear in the dissipation rate."""
    from .observables import increment_moments

    if mu <= 1.0:
        raise ValueError("mu must exceed 1 to separate the scalings")
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one snapshot field")
    worst_by_p = {float(p): 0.0 for p in p_list}
    for u in fields:
        u = np.asarray(u, dtype=np.float64)
        base = increment_moments(u, l, p_list=p_list)
        scaled = increment_moments(mu * u, l, p_list=p_list)
        for i, p in enumerate(base.p_list):
            q = np.log(scaled.absolute[i] / base.absolute[i]) / np.log(mu**3)
            worst_by_p[p] = max(worst_by_p[p], float(np.max(np.abs(q - p / 3.0))))
    worst = max(worst_by_p.values())
    return LawVerdict(
        law="forcing_exponent_q",
        passed=bool(worst <= tolerance),
        measured=1.0 + worst_by_p.get(3.0, worst),
        expected=1.0,
        tolerance=tolerance,
        n_samples=len(fields),
        details={
            "mu": mu,
            "max_deviation_by_p": {f"{p:g}": v for p, v in worst_by_p.items()},
            "expected_q": {f"{p:g}": p / 3.0 for p in worst_by_p},
        },
    )


def weak_law_check(
    table: StructureTable,
    window: RangeSpec,
    exponent_slack: float = 0.3,
) -> LawVerdict:
    """Weak one-sided law: signed third moments stay strictly negative across
    the window with a bounded compensated ratio, while the positive part
    ((delta u)^+)^3 vanishes with exponent >= 3 - slack."""
    mask = window.mask(table.l)
    l = table.l[mask]
    s3 = table.signed_mean(3)[mask]
    ratio = s3 / l
    all_negative = bool(np.all(s3 < 0))
    fit = fit_structure_exponent(table, 3, window.floor, window.cap, flavor="pos_cubed")
    exponent_ok = fit.exponent >= 3.0 - exponent_slack
    return LawVerdict(
        law="weak_one_sided",
        passed=all_negative and bool(exponent_ok),
        measured=fit.exponent,
        expected=3.0,
        tolerance=exponent_slack,
        n_samples=table.trajectories,
        details={
            "all_negative": all_negative,
            "ratio_min": float(np.min(ratio)),
            "ratio_max": float(np.max(ratio)),
            "positive_part_fit": fit.__dict__,
        },
    )
