"""Voigt lineshapes and damped least-squares fitting of CPT resonances.

The complex probability function w(z) = exp(-z**2) erfc(-iz) is evaluated
with Humlicek's 12-term rational approximation (JQSRT 21, 309, 1979) plus
a 15-term asymptotic series for |z| > 8.  Relative error is below 1e-6 for
Im z >= 0.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

_T = np.array([0.314240376, 0.947788391, 1.59768264, 2.27950708, 3.02063703, 3.8897249])
_U = np.array([1.01172805, -0.75197147, 1.2557727e-2, 1.00220082e-2,
               -2.42068135e-4, 5.00848061e-7])
_S = np.array([1.393237, 0.231152406, -0.155351466, 6.21836624e-3,
               9.19082986e-5, -6.27525958e-7])
_ASYMPTOTIC = np.arange(15) + 0.5
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
FWHM_GAUSS_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class FitError(RuntimeError):
    pass


class DegenerateData(FitError):
    pass


def humlicek_w(z):
    """w(z) for Im z >= 0 (vectorized)."""
    z = np.asarray(z, dtype=complex)
    x, y = np.real(z).astype(float), np.imag(z).astype(float)
    if np.any(y < 0):
        raise ValueError("humlicek_w requires Im z >= 0")
    wr = np.zeros(x.shape)
    wi = np.zeros(x.shape)

    far = np.hypot(x, y) > 8.0
    if np.any(far):
        zm1 = 1.0 / z[far]
        zm2 = zm1 * zm1
        term = np.ones_like(zm1)
        total = np.ones_like(zm1)
        for t in _ASYMPTOTIC:
            term = term * zm2 * t
            total = total + term
        total = total * 1j * zm1 * _INV_SQRT_PI
        wr[far], wi[far] = total.real, total.imag

    near = ~far
    y1 = y + 1.5
    y2 = y1 * y1
    region1 = near & ((y > 0.85) | (np.abs(x) < 18.1 * y + 1.65))
    region2 = near & ~region1

    if np.any(region1):
        xs, y1s, y2s = x[region1], y1[region1], y2[region1]
        r_minus = xs[:, None] - _T
        r_plus = xs[:, None] + _T
        d_minus = 1.0 / (r_minus**2 + y2s[:, None])
        d_plus = 1.0 / (r_plus**2 + y2s[:, None])
        d1, d2 = y1s[:, None] * d_minus, r_minus * d_minus
        d3, d4 = y1s[:, None] * d_plus, r_plus * d_plus
        wr[region1] = (_U * (d1 + d3) - _S * (d2 - d4)).sum(axis=1)
        wi[region1] = (_U * (d2 + d4) + _S * (d1 - d3)).sum(axis=1)

    if np.any(region2):
        xs, ys, y1s, y2s = x[region2], y[region2], y1[region2], y2[region2]
        y3 = ys + 3.0
        base = np.where(np.abs(xs) < 12.0, np.exp(-xs * xs), 0.0)
        r = xs[:, None] - _T
        r2 = r * r
        d = 1.0 / (r2 + y2s[:, None])
        d1, d2 = y1s[:, None] * d, r * d
        part = ys[:, None] * (_U * (r * d2 - 1.5 * d1) + _S * y3[:, None] * d2) / (r2 + 2.25)
        wi_part = _U * d2 + _S * d1
        r = xs[:, None] + _T
        r2 = r * r
        d = 1.0 / (r2 + y2s[:, None])
        d3, d4 = y1s[:, None] * d, r * d
        part = part + ys[:, None] * (_U * (r * d4 - 1.5 * d3) - _S * y3[:, None] * d4) / (r2 + 2.25)
        wi_part = wi_part + _U * d4 - _S * d3
        wr[region2] = base + part.sum(axis=1)
        wi[region2] = wi_part.sum(axis=1)
    return wr + 1j * wi


@dataclass(frozen=True)
class VoigtParams:
    center: float
    sigma: float
    gamma: float
    amplitude: float
    background: float

    def __post_init__(self):
        if self.sigma < 0 or self.gamma < 0:
            raise ValueError("widths must be non-negative")
        if self.sigma == 0 and self.gamma == 0:
            raise ValueError("at least one width must be positive")
        if not (math.isfinite(self.amplitude) and math.isfinite(self.background)):
            raise ValueError("amplitude and background must be finite")

    def as_array(self):
        return np.array([self.center, self.sigma, self.gamma, self.amplitude, self.background])

    @property
    def contrast(self):
        return self.amplitude / self.background


def _unit_profile(dx, sigma, gamma):
    """Peak-normalized Voigt shape: 1 at dx = 0."""
    dx = np.asarray(dx, dtype=float)
    if sigma == 0:
        return gamma**2 / (dx**2 + gamma**2)
    if gamma == 0:
        return np.exp(-0.5 * (dx / sigma) ** 2)
    s2 = sigma * math.sqrt(2.0)
    num = humlicek_w((dx + 1j * gamma) / s2).real
    den = humlicek_w(np.array([1j * gamma / s2])).real[0]
    return num / den


def voigt(x, p: VoigtParams):
    return p.background + p.amplitude * _unit_profile(np.asarray(x) - p.center, p.sigma, p.gamma)


def voigt_fwhm_approx(sigma, gamma):
    """Olivero-Longbothum width estimate."""
    fl = 2.0 * gamma
    fg = FWHM_GAUSS_PER_SIGMA * sigma
    return 0.5346 * fl + math.sqrt(0.2166 * fl**2 + fg**2)


def _bisect(f, lo, hi, rtol=1e-13):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= rtol * abs(hi):
            break
    return 0.5 * (lo + hi)


def fwhm_of(p: VoigtParams):
    """Full width at half maximum by bisection on each side of the center."""
    scale = voigt_fwhm_approx(p.sigma, p.gamma)

    def excess(dx):
        return float(_unit_profile(np.array([dx]), p.sigma, p.gamma)[0]) - 0.5

    def half_width(sign):
        hi = scale
        while excess(sign * hi) > 0:
            hi *= 2.0
        return _bisect(lambda d: excess(sign * d), 0.0, hi)

    return half_width(1.0) + half_width(-1.0)


@dataclass(frozen=True)
class FitResult:
    params: VoigtParams
    contrast: float
    fwhm: float
    residual_norm: float
    converged: bool
    iterations: int

    CSV_HEADER = "contrast,fwhm_rad_s,center_rad_s,sigma_rad_s,gamma_rad_s,background,residual,converged"

    def csv_row(self):
        p = self.params
        return ",".join([
            repr(self.contrast), repr(self.fwhm), repr(p.center), repr(p.sigma),
            repr(p.gamma), repr(p.background), repr(self.residual_norm),
            "true" if self.converged else "false",
        ])

    def to_csv(self, comments=()):
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        buf.write(self.CSV_HEADER + "\n")
        buf.write(self.csv_row() + "\n")
        return buf.getvalue()


def _model_and_jacobian(x, theta):
    """Voigt values and d/d(center, sigma, gamma, amplitude, background)."""
    c, s, g, a, b = theta
    s = max(abs(s), 1e-9 * abs(g) + 1e-300)
    g = abs(g)
    root2s = math.sqrt(2.0) * s
    z = (x - c + 1j * g) / root2s
    z0 = np.array([1j * g / root2s])
    w = humlicek_w(z)
    w0 = humlicek_w(z0)[0]
    dw = -2.0 * z * w + 2j * _INV_SQRT_PI
    dw0 = -2.0 * z0[0] * w0 + 2j * _INV_SQRT_PI
    u, u0 = w.real, w0.real
    shape = u / u0
    dz = {"c": -1.0 / root2s, "s": -z / s, "g": 1j / root2s}
    dz0 = {"c": 0.0, "s": -z0[0] / s, "g": 1j / root2s}
    jac = np.empty((x.size, 5))
    for col, key in enumerate(("c", "s", "g")):
        du = (dw * dz[key]).real
        du0 = (dw0 * dz0[key]).real
        jac[:, col] = a * (du / u0 - u * du0 / u0**2)
    jac[:, 3] = shape
    jac[:, 4] = 1.0
    return b + a * shape, jac


def initial_guess(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    n_edge = max(1, int(round(0.05 * x.size)))
    background = float(np.median(np.concatenate([y[:n_edge], y[-n_edge:]])))
    i_max = int(np.argmax(y))
    amplitude = float(y[i_max] - background)
    if amplitude < 1e-12:
        raise DegenerateData("no resonance above background (flat spectrum)")
    half = background + 0.5 * amplitude
    above = y >= half
    left = i_max
    while left > 0 and above[left - 1]:
        left -= 1
    right = i_max
    while right < x.size - 1 and above[right + 1]:
        right += 1

    def crossing(i_in, i_out):
        if i_out < 0 or i_out >= x.size:
            return x[i_in]
        t = (y[i_in] - half) / (y[i_in] - y[i_out])
        return x[i_in] + t * (x[i_out] - x[i_in])

    width = crossing(right, right + 1) - crossing(left, left - 1)
    if width <= 0:
        width = float(np.min(np.diff(x)))
    # equal Gaussian and Lorentzian FWHM f reproduce the estimate for f = width / 1.638
    f = width / voigt_fwhm_approx(1.0 / FWHM_GAUSS_PER_SIGMA, 0.5)
    return VoigtParams(
        center=float(x[i_max]),
        sigma=f / FWHM_GAUSS_PER_SIGMA,
        gamma=0.5 * f,
        amplitude=amplitude,
        background=background,
    )


def fit_voigt(spectrum_or_x, y=None, *, guess=None, max_iter=200, xtol=1e-8):
    """Levenberg-Marquardt fit of a peak-normalized Voigt profile.

    Accepts a :class:`~cptsim.spectroscopy.Spectrum` or ``(x, y)`` arrays.
    Returns the best parameters found; ``converged`` is False when the step
    criterion was not met within ``max_iter`` iterations.
    """
    if y is None:
        x, y = spectrum_or_x.deltas, spectrum_or_x.transmission
    else:
        x = spectrum_or_x
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 10:
        raise FitError("need at least 10 points")
    p0 = guess if guess is not None else initial_guess(x, y)
    theta = p0.as_array()

    model, jac = _model_and_jacobian(x, theta)
    resid = y - model
    cost = float(resid @ resid)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        grad = jac.T @ resid
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        improved = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            trial[1:3] = np.abs(trial[1:3])
            t_model, t_jac = _model_and_jacobian(x, trial)
            t_resid = y - t_model
            t_cost = float(t_resid @ t_resid)
            if np.isfinite(t_cost) and t_cost <= cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            # no downhill step at any damping: at a minimum to machine precision
            converged = True
            break
        width = abs(trial[1]) + abs(trial[2])
        scales = np.array([width, width, width, abs(trial[3]), abs(trial[4])])
        scales[scales == 0] = 1.0
        rel_step = np.max(np.abs(trial - theta) / scales)
        theta, model, jac, resid, cost = trial, t_model, t_jac, t_resid, t_cost
        lam = max(lam / 10.0, 1e-12)
        if rel_step < xtol:
            converged = True
            break

    s, g = abs(theta[1]), abs(theta[2])
    if s == 0 and g == 0:
        s = 1e-300
    p = VoigtParams(float(theta[0]), float(s), float(g), float(theta[3]), float(theta[4]))
    return FitResult(
        params=p,
        contrast=p.amplitude / p.background,
        fwhm=fwhm_of(p),
        residual_norm=math.sqrt(cost),
        converged=converged,
        iterations=it,
    )
