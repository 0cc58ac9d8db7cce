"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with a model registry.

Models are registered by name with an optional analytic Jacobian and an
initial-guess heuristic. Box and half-line bounds are enforced through a
smooth reparametrisation (logistic for boxes, exponential for half-lines),
so the solver core itself is unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

CONVERGED = "converged"
MAX_ITER = "max-iter"
SINGULAR = "singular"
DIVERGED = "diverged"
FAILED = "failed"


class DegenerateDataError(ValueError):
    """Data carry no information a model heuristic can start from."""


@dataclass(frozen=True)
class Model:
    name: str
    params: tuple[str, ...]
    func: Callable[..., np.ndarray]
    jac: Callable[..., np.ndarray] | None = None
    guess: Callable[..., np.ndarray] | None = None
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __call__(self, x, p, **options):
        return self.func(x, np.asarray(p, dtype=float), **options)

    def jacobian(self, x, p, **options) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.jac is not None:
            return self.jac(x, p, **options)
        return numeric_jacobian(lambda q: self.func(x, q, **options), p)


REGISTRY: dict[str, Model] = {}


def register(model: Model) -> Model:
    if model.name in REGISTRY:
        raise ValueError(f"model {model.name!r} already registered")
    REGISTRY[model.name] = model
    return model


def get_model(name: str) -> Model:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; registered: {sorted(REGISTRY)}") from None


def numeric_jacobian(f, p, rel_step=1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of ``f`` at ``p``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1.0)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((np.asarray(f(up)) - np.asarray(f(dn))) / (2 * h))
    return np.stack(cols, axis=-1)


# -- bounds transforms ------------------------------------------------------


class _Transform:
    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lo = lower
        self.hi = upper
        self.box = np.isfinite(lower) & np.isfinite(upper)
        self.low_only = np.isfinite(lower) & ~np.isfinite(upper)
        self.high_only = ~np.isfinite(lower) & np.isfinite(upper)

    def to_internal(self, p: np.ndarray) -> np.ndarray:
        u = p.astype(float).copy()
        lo, hi = self.lo, self.hi
        b = self.box
        width = hi[b] - lo[b]
        frac = np.clip((p[b] - lo[b]) / width, 1e-9, 1 - 1e-9)
        u[b] = np.log(frac / (1 - frac))
        m = self.low_only
        u[m] = np.log(np.maximum(p[m] - lo[m], 1e-300))
        m = self.high_only
        u[m] = np.log(np.maximum(hi[m] - p[m], 1e-300))
        return u

    def to_external(self, u: np.ndarray) -> np.ndarray:
        p = u.astype(float).copy()
        lo, hi = self.lo, self.hi
        b = self.box
        p[b] = lo[b] + (hi[b] - lo[b]) * expit(u[b])
        m = self.low_only
        p[m] = lo[m] + np.exp(u[m])
        m = self.high_only
        p[m] = hi[m] - np.exp(u[m])
        return p

    def derivative(self, u: np.ndarray) -> np.ndarray:
        """dp/du, elementwise."""
        p = self.to_external(u)
        d = np.ones_like(u)
        b = self.box
        d[b] = (p[b] - self.lo[b]) * (self.hi[b] - p[b]) / (self.hi[b] - self.lo[b])
        d[self.low_only] = p[self.low_only] - self.lo[self.low_only]
        d[self.high_only] = -(self.hi[self.high_only] - p[self.high_only])
        return d


# -- problem / result -------------------------------------------------------


@dataclass(frozen=True)
class FitProblem:
    """One weighted least-squares problem.

    ``y_err`` defaults to Poisson weights sqrt(max(y, 1)) when
    ``weighting == "poisson"`` and to unit weights otherwise. ``bounds``
    maps parameter names to (lower, upper); model defaults fill the rest.
    """

    model: str
    x: np.ndarray
    y: np.ndarray
    y_err: np.ndarray | None = None
    p0: np.ndarray | dict | None = None
    bounds: dict[str, tuple[float, float]] | None = None
    options: dict = field(default_factory=dict)
    weighting: str = "poisson"
    max_iter: int = 200
    gtol: float = 1e-10
    xtol: float = 1e-12
    ftol: float = 1e-14
    scale_covariance: bool = True

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x and y lengths differ: {x.shape[0]} vs {y.shape[0]}")
        if self.y_err is not None:
            e = np.asarray(self.y_err, dtype=float)
            if e.shape != y.shape:
                raise ValueError("y_err must match y")
            if np.any(~(e > 0)):
                raise ValueError("y_err must be > 0")
        if self.weighting not in ("poisson", "uniform"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        model = get_model(self.model)
        for name, (lo, hi) in (self.bounds or {}).items():
            if name not in model.params:
                raise ValueError(f"bound for unknown parameter {name!r}")
            if not lo < hi:
                raise ValueError(f"inconsistent bounds for {name}: {lo} >= {hi}")

    def sigma(self) -> np.ndarray:
        y = np.asarray(self.y, dtype=float)
        if self.y_err is not None:
            return np.asarray(self.y_err, dtype=float)
        if self.weighting == "poisson":
            return np.sqrt(np.maximum(y, 1.0))
        return np.ones_like(y)


@dataclass(frozen=True)
class FitResult:
    model: str
    names: tuple[str, ...]
    params: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int
    iterations: int
    status: str
    residuals: np.ndarray
    cost_history: tuple[float, ...] = ()
    message: str = ""

    @property
    def redchi(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else np.nan

    @property
    def ok(self) -> bool:
        return self.status == CONVERGED

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.errors[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.params)}

    def report(self) -> str:
        lines = [f"model: {self.model}", f"status: {self.status}"]
        for n, v, e in zip(self.names, self.params, self.errors):
            lines.append(f"{n} = {v:.6g} +/- {e:.2g}")
        lines.append(f"reduced chi2 = {self.redchi:.4g} (dof {self.dof})")
        lines.append(f"iterations = {self.iterations}")
        return "\n".join(lines)


def _failed(problem: FitProblem, model: Model, message: str, status: str = FAILED) -> FitResult:
    n = len(model.params)
    nan = np.full(n, np.nan)
    return FitResult(
        model=model.name, names=model.params, params=nan, errors=nan.copy(),
        covariance=np.full((n, n), np.nan), chi2=np.nan, dof=len(problem.y) - n,
        iterations=0, status=status, residuals=np.full(len(problem.y), np.nan),
        message=message,
    )


def initial_guess(model_name: str, x, y, **options) -> np.ndarray:
    """Deterministic heuristic starting point for ``model_name``.

    Raises DegenerateDataError for flat or empty data.
    """
    model = get_model(model_name)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0 or not np.all(np.isfinite(y)):
        raise DegenerateDataError("empty or non-finite data")
    if np.ptp(y) == 0:
        raise DegenerateDataError("flat data")
    if model.guess is None:
        raise DegenerateDataError(f"model {model_name!r} has no heuristic; supply p0")
    return np.asarray(model.guess(x, y, **options), dtype=float)


def _resolve_bounds(model: Model, problem: FitProblem) -> tuple[np.ndarray, np.ndarray]:
    merged = dict(model.bounds)
    merged.update(problem.bounds or {})
    lo = np.array([merged.get(n, (-np.inf, np.inf))[0] for n in model.params], dtype=float)
    hi = np.array([merged.get(n, (-np.inf, np.inf))[1] for n in model.params], dtype=float)
    return lo, hi


def fit(problem: FitProblem) -> FitResult:
    """Levenberg-Marquardt minimisation of the weighted residual norm.

    Damping follows the classic schedule: lambda starts at 1e-3, is divided
    by 10 after an accepted step and multiplied by 10 after a rejected one.
    The cost is non-increasing over accepted steps.
    """
    model = get_model(problem.model)
    x = np.asarray(problem.x, dtype=float)
    y = np.asarray(problem.y, dtype=float)
    sig = problem.sigma()
    opts = problem.options
    n_par = len(model.params)

    if problem.p0 is None:
        try:
            p0 = initial_guess(problem.model, x, y, **opts)
        except DegenerateDataError as exc:
            return _failed(problem, model, str(exc))
    elif isinstance(problem.p0, dict):
        p0 = np.array([problem.p0[n] for n in model.params], dtype=float)
    else:
        p0 = np.asarray(problem.p0, dtype=float)

    lo, hi = _resolve_bounds(model, problem)
    tr = _Transform(lo, hi)
    p0 = np.clip(p0, lo, hi)
    u = tr.to_internal(p0)

    def residual(uv):
        with np.errstate(all="ignore"):
            f = model(x, tr.to_external(uv), **opts)
        return (y - f) / sig

    r = residual(u)
    if not np.all(np.isfinite(r)):
        return _failed(problem, model, "model output is not finite at the start point", DIVERGED)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = 1e-3
    status = MAX_ITER
    it = 0
    # cost at which the model reproduces the data to rounding
    exact = 1e-26 * max(float(np.sum((y / sig) ** 2)), 1.0)
    for it in range(1, problem.max_iter + 1):
        if cost <= exact:
            status = CONVERGED
            break
        p = tr.to_external(u)
        with np.errstate(all="ignore"):
            jp = model.jacobian(x, p, **opts)
        j = (jp / sig[:, None]) * tr.derivative(u)[None, :]
        if not np.all(np.isfinite(j)):
            status = DIVERGED
            break
        a = j.T @ j
        g = j.T @ r
        if np.max(np.abs(g)) <= problem.gtol * max(cost, 1e-300) ** 0.5 * max(np.sqrt(np.max(np.diag(a))), 1e-300):
            status = CONVERGED
            break
        diag = np.maximum(np.diag(a), 1e-12 * max(np.max(np.diag(a)), 1e-300))
        accepted = False
        any_finite = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                step = None
            if step is None or not np.all(np.isfinite(step)):
                lam *= 10.0
                continue
            any_finite = True
            r_new = residual(u + step)
            with np.errstate(over="ignore"):
                cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # every damped step failed to lower the cost: either the normal
            # equations could not be solved at all, or we sit at the minimum
            status = CONVERGED if any_finite else SINGULAR
            break
        u_old = u
        u = u + step
        r = r_new
        dcost = cost - cost_new
        cost = cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if dcost <= problem.ftol * max(cost, 1e-300):
            status = CONVERGED
            break
        if np.linalg.norm(step) <= problem.xtol * (np.linalg.norm(u_old) + problem.xtol):
            status = CONVERGED
            break

    p = tr.to_external(u)
    resid = r * sig
    chi2 = float(r @ r)
    dof = len(y) - n_par
    cov = _covariance(model, x, p, sig, opts)
    if problem.scale_covariance and dof > 0:
        cov = cov * (chi2 / dof)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    if not np.all(np.isfinite(p)):
        status = DIVERGED
    return FitResult(
        model=model.name, names=model.params, params=p, errors=err, covariance=cov,
        chi2=chi2, dof=dof, iterations=it, status=status, residuals=resid,
        cost_history=tuple(history),
    )


def _covariance(model: Model, x, p, sig, opts) -> np.ndarray:
    """Inverse Gauss-Newton Hessian in the external parameters."""
    with np.errstate(all="ignore"):
        jp = model.jacobian(x, p, **opts) / sig[:, None]
    h = jp.T @ jp
    n = h.shape[0]
    if not np.all(np.isfinite(h)):
        return np.full((n, n), np.nan)
    try:
        c = np.linalg.cholesky(h)
        ci = np.linalg.inv(c)
        cov = ci.T @ ci
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(h)
    return 0.5 * (cov + cov.T)


def curve_fit(model_name: str, x, y, y_err=None, **kwargs) -> FitResult:
    """Shorthand for ``fit(FitProblem(model_name, x, y, y_err, ...))``."""
    return fit(FitProblem(model=model_name, x=x, y=y, y_err=y_err, **kwargs))


# -- models ------------------------------------------------------------------


def _linear(x, p):
    return p[0] * x + p[1]


def _linear_jac(x, p):
    return np.stack([x, np.ones_like(x)], axis=-1)


def _linear_guess(x, y):
    return np.polyfit(x, y, 1)


register(Model("linear", ("slope", "intercept"), _linear, _linear_jac, _linear_guess))


def _exp(x, p):
    amp, tau, off = p
    return amp * np.exp(-x / tau) + off


def _exp_jac(x, p):
    amp, tau, off = p
    e = np.exp(-x / tau)
    return np.stack([e, amp * e * x / tau**2, np.ones_like(x)], axis=-1)


def _block_offset(x, y):
    """Offset from three equal blocks of an evenly sampled decay, or None.

    Block sums S_k of A exp(-t/tau) + c obey (S2 - S3) / (S1 - S2) = q with
    q = exp(-L/tau), which fixes the exponential part of S3 and hence c.
    """
    n = len(y) // 3
    if n < 3 or not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-6):
        return None
    s1, s2, s3 = (float(np.sum(y[k * n:(k + 1) * n])) for k in range(3))
    if not s1 > s2 > s3:
        return None
    q = (s2 - s3) / (s1 - s2)
    if not 0.02 < q < 0.98:
        return None
    return (s3 - (s2 - s3) * q / (1 - q)) / n


def _exp_guess(x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    n = len(y)
    tail = y[-max(n // 10, 1):]
    off = float(np.min(tail)) if np.median(tail) > 0 else 0.0
    off = max(min(off, float(np.median(tail))), 0.0)
    block = _block_offset(x, y)
    if block is not None and block < off:
        off = max(block, 0.0)
    z = y - off
    keep = z > max(0.05 * np.max(z), 1e-12)
    if keep.sum() < 2:
        raise DegenerateDataError("no decaying signal above the offset")
    w = np.sqrt(z[keep])
    slope, icpt = np.polyfit(x[keep], np.log(z[keep]), 1, w=w)
    if slope >= 0:
        raise DegenerateDataError("data do not decay")
    return np.array([np.exp(icpt), -1.0 / slope, off])


register(Model(
    "exponential", ("amplitude", "tau", "offset"), _exp, _exp_jac, _exp_guess,
    bounds={"tau": (0.0, np.inf)},
))


def _lorentz(x, p):
    x0, fwhm, amp, off = p
    g = 0.5 * fwhm
    return amp * g * g / ((x - x0) ** 2 + g * g) + off


def _lorentz_jac(x, p):
    x0, fwhm, amp, off = p
    g = 0.5 * fwhm
    d = (x - x0) ** 2 + g * g
    shape = g * g / d
    d_x0 = amp * g * g * 2 * (x - x0) / d**2
    # d(shape)/dg = 2g (x-x0)^2 / d^2 ; dg/dfwhm = 1/2
    d_fwhm = amp * g * (x - x0) ** 2 / d**2
    return np.stack([d_x0, d_fwhm, shape, np.ones_like(x)], axis=-1)


def _lorentz_guess(x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    off = float(np.percentile(y, 10))
    i = int(np.argmax(y))
    amp = float(y[i] - off)
    if amp <= 0:
        raise DegenerateDataError("no peak above the baseline")
    half = off + 0.5 * amp
    left = i
    while left > 0 and y[left] > half:
        left -= 1
    right = i
    while right < len(y) - 1 and y[right] > half:
        right += 1
    fwhm = float(x[right] - x[left])
    if fwhm <= 0:
        fwhm = float(np.min(np.diff(x))) if len(x) > 1 else 1.0
    return np.array([x[i], fwhm, amp, off])


register(Model(
    "lorentzian", ("center", "fwhm", "amplitude", "offset"), _lorentz, _lorentz_jac,
    _lorentz_guess, bounds={"fwhm": (0.0, np.inf)},
))


def _malus(x, p):
    th0, imax, vis = p
    c = np.cos(np.deg2rad(x - th0)) ** 2
    return imax * ((1 - vis) + 2 * vis * c) / (1 + vis)


def _malus_jac(x, p):
    th0, imax, vis = p
    arg = np.deg2rad(x - th0)
    c = np.cos(arg) ** 2
    base = ((1 - vis) + 2 * vis * c) / (1 + vis)
    # d cos^2(x - th0)/d th0 = sin(2 arg) * pi/180
    d_th0 = imax * 2 * vis / (1 + vis) * np.sin(2 * arg) * np.pi / 180
    d_vis = imax * (2 * c - 2) / (1 + vis) ** 2
    return np.stack([d_th0, base, d_vis], axis=-1)


def _malus_guess(x, y):
    two = np.deg2rad(2 * x)
    design = np.stack([np.ones_like(x), np.cos(two), np.sin(two)], axis=-1)
    (c0, c1, c2), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp = float(np.hypot(c1, c2))
    if c0 <= 0:
        raise DegenerateDataError("non-positive mean intensity")
    th0 = 0.5 * np.rad2deg(np.arctan2(c2, c1)) % 180.0
    vis = float(np.clip(amp / c0, 1e-6, 1 - 1e-6))
    return np.array([th0, c0 + amp, vis])


register(Model(
    "malus", ("theta0", "i_max", "visibility"), _malus, _malus_jac, _malus_guess,
    bounds={"visibility": (0.0, 1.0), "i_max": (0.0, np.inf)},
))


def _sat(x, p):
    i_sat, p_sat = p
    return i_sat * x / (x + p_sat)


def _sat_jac(x, p):
    i_sat, p_sat = p
    return np.stack([x / (x + p_sat), -i_sat * x / (x + p_sat) ** 2], axis=-1)


def _sat_guess(x, y):
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        raise DegenerateDataError("need two positive points")
    # 1/I = 1/I_sat + (P_sat/I_sat) (1/P)
    slope, icpt = np.polyfit(1.0 / x[keep], 1.0 / y[keep], 1, w=y[keep])
    if icpt <= 0 or slope <= 0:
        return np.array([float(np.max(y)) * 1.5, float(np.median(x[keep]))])
    return np.array([1.0 / icpt, slope / icpt])


register(Model(
    "saturation", ("i_sat", "p_sat"), _sat, _sat_jac, _sat_guess,
    bounds={"i_sat": (0.0, np.inf), "p_sat": (0.0, np.inf)},
))


def _binned_exp(t, tau, w):
    """Mean of exp(-|s|/tau) over [t - w/2, t + w/2] and its tau derivative.

    With w == 0 the point value is returned.
    """
    if w == 0:
        e = np.exp(-np.abs(t) / tau)
        return e, e * np.abs(t) / tau**2
    lo = t - 0.5 * w
    hi = t + 0.5 * w

    def one_side(a, b):
        # integral over [a, b] with 0 <= a <= b
        ea, eb = np.exp(-a / tau), np.exp(-b / tau)
        val = tau * (ea - eb)
        der = ea * (1 + a / tau) - eb * (1 + b / tau)
        return val, der

    pos_a = np.clip(lo, 0, None)
    pos_b = np.clip(hi, 0, None)
    neg_a = np.clip(-hi, 0, None)
    neg_b = np.clip(-lo, 0, None)
    v1, d1 = one_side(pos_a, pos_b)
    v2, d2 = one_side(neg_a, neg_b)
    return (v1 + v2) / w, (d1 + d2) / w


def _g2_three(x, p, bin_width=0.0):
    tau1, tau2, a, rho = p
    e1, _ = _binned_exp(x, tau1, bin_width)
    e2, _ = _binned_exp(x, tau2, bin_width)
    return 1.0 + rho**2 * (a * e2 - (1 + a) * e1)


def _g2_three_jac(x, p, bin_width=0.0):
    tau1, tau2, a, rho = p
    e1, de1 = _binned_exp(x, tau1, bin_width)
    e2, de2 = _binned_exp(x, tau2, bin_width)
    r2 = rho**2
    return np.stack([
        -r2 * (1 + a) * de1,
        r2 * a * de2,
        r2 * (e2 - e1),
        2 * rho * (a * e2 - (1 + a) * e1),
    ], axis=-1)


def _g2_guess(x, y, bin_width=0.0):
    ax = np.abs(x)
    order = np.argsort(ax)
    ax, yy = ax[order], y[order]
    n_core = max(3, len(ax) // 50)
    g0 = float(np.clip(np.mean(yy[:n_core]), 0.0, 0.99))
    far = yy[ax >= np.percentile(ax, 80)]
    base = float(np.mean(far)) if far.size else 1.0
    rho2 = float(np.clip(base - g0, 0.05, 1.0))
    # antibunching time: first delay where the dip has recovered half way to the baseline
    half = g0 + 0.5 * (base - g0)
    above = np.nonzero(yy >= half)[0]
    tau1 = float(ax[above[0]] / np.log(2)) if above.size and ax[above[0]] > 0 else float(np.max(ax)) / 20
    tau1 = max(tau1, 1e-3 * float(np.max(ax)) + 1e-12)
    peak_i = int(np.argmax(yy))
    excess = float(yy[peak_i] - base)
    a = float(np.clip(excess / rho2 if excess > 0 else 0.05, 0.01, 10.0))
    # bunching decay from the area above baseline beyond the peak
    tail = ax > ax[peak_i]
    area = np.trapezoid(np.clip(yy[tail] - base, 0, None), ax[tail]) if tail.sum() > 1 else 0.0
    tau2 = float(area / (a * rho2)) if area > 0 else 10 * tau1
    tau2 = max(tau2, 3 * tau1)
    return np.array([tau1, tau2, a, np.sqrt(rho2)])


register(Model(
    "g2_three_level", ("tau1", "tau2", "a", "rho"), _g2_three, _g2_three_jac, _g2_guess,
    bounds={"tau1": (0.0, np.inf), "tau2": (0.0, np.inf), "a": (0.0, np.inf), "rho": (0.0, 1.0)},
))


def _g2_two(x, p, bin_width=0.0):
    tau1, rho = p
    e1, _ = _binned_exp(x, tau1, bin_width)
    return 1.0 - rho**2 * e1


def _g2_two_jac(x, p, bin_width=0.0):
    tau1, rho = p
    e1, de1 = _binned_exp(x, tau1, bin_width)
    return np.stack([-rho**2 * de1, -2 * rho * e1], axis=-1)


def _g2_two_guess(x, y, bin_width=0.0):
    tau1, _, _, rho = _g2_guess(x, y, bin_width)
    return np.array([tau1, rho])


register(Model(
    "g2_two_level", ("tau1", "rho"), _g2_two, _g2_two_jac, _g2_two_guess,
    bounds={"tau1": (0.0, np.inf), "rho": (0.0, 1.0)},
))


def _gauss2d(xy, p):
    x0, y0, s, amp, off = p
    r2 = (xy[:, 0] - x0) ** 2 + (xy[:, 1] - y0) ** 2
    return amp * np.exp(-0.5 * r2 / s**2) + off


def _gauss2d_jac(xy, p):
    x0, y0, s, amp, off = p
    dx = xy[:, 0] - x0
    dy = xy[:, 1] - y0
    e = np.exp(-0.5 * (dx**2 + dy**2) / s**2)
    return np.stack([
        amp * e * dx / s**2,
        amp * e * dy / s**2,
        amp * e * (dx**2 + dy**2) / s**3,
        e,
        np.ones_like(e),
    ], axis=-1)


def _gauss2d_guess(xy, z):
    off = float(np.percentile(z, 10))
    w = np.clip(z - off, 0, None)
    if w.sum() <= 0:
        raise DegenerateDataError("no spot above the baseline")
    x0 = float(np.sum(w * xy[:, 0]) / w.sum())
    y0 = float(np.sum(w * xy[:, 1]) / w.sum())
    var = float(np.sum(w * ((xy[:, 0] - x0) ** 2 + (xy[:, 1] - y0) ** 2)) / w.sum() / 2)
    return np.array([x0, y0, np.sqrt(max(var, 1e-12)), float(np.max(z) - off), off])


register(Model(
    "gaussian2d", ("x0", "y0", "sigma", "amplitude", "offset"), _gauss2d, _gauss2d_jac,
    _gauss2d_guess, bounds={"sigma": (0.0, np.inf)},
))
