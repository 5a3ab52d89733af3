"""Checks of the standing assumptions on f, resonance, (H-)/(H+), and sampled geometry.

All spectral inputs are computed upper bounds (eta-hat, nu-hat).  Every
inequality therefore records whether the approximation errs on the safe
side: ``x > bound`` is conservative (the true value is below the bound),
``x < bound`` is not, and a non-conservative check only counts as
verified when its relative margin exceeds ten times the optimizer
tolerance.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .energy import energy_I
from .errors import HypothesisViolation, InvalidArgument, SpecInconsistency
from .fem import FeFunction, grad_seminorm, random_function
from .nonlinearity import eval_F, eval_f
from .quasi_eigen import SubspaceBasis, decompose, linear_eigenvectors

RESONANCE_MARGIN = 0.02
LIMIT_RTOL = 0.01
DEFAULT_RHO_GRID = tuple(np.logspace(-3, 0, 12))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# -- limits of f(t) / (|t|^(q-2) t) -------------------------------------------------

@dataclass
class LimitEstimate:
    ell0_declared: float
    ell0_estimate: float
    ell0_kind: str  # "finite", "-inf" or "+inf"
    infinity_verdict: str  # "decays-to-0", "nonzero-limit" or "grows"
    infinity_estimate: float
    log_slope_0: float
    log_slope_inf: float

    def to_dict(self):
        return _jsonable(dict(self.__dict__))


def _ratio(spec, t, q, x):
    return eval_f(spec, t, q, x) / (np.abs(t) ** (q - 2.0) * t)


def _aitken(v):
    """Aitken delta-squared extrapolation of the last three terms."""
    a, b, c = v[-3:]
    den = (c - b) - (b - a)
    if den == 0 or not np.isfinite(den):
        return float(c)
    est = c - (c - b) ** 2 / den
    # fall back when the sequence is not geometric enough to trust the formula
    return float(est) if abs(est - c) <= 10 * abs(c - b) + 1e-300 else float(c)


def _log_slope(t, v):
    a = np.abs(v)
    if np.all(a == 0):
        return 0.0
    a = np.maximum(a, 1e-300)
    return float(np.polyfit(np.log(t), np.log(a), 1)[0])


def estimate_limits(spec, q, grids=None, x=None, rtol=LIMIT_RTOL):
    """Estimate lim f(t)/(|t|^(q-2) t) at 0 and at infinity and compare with the declaration.

    ``grids`` is a pair (small_t, large_t) of increasing positive arrays;
    the defaults are log grids on [1e-8, 1e-2] and [1e2, 1e8].  A ratio
    whose magnitude follows a power law with exponent below -0.05 towards
    0 is reported as an infinite limit with the sign of the ratio.
    """
    small, large = grids if grids is not None else (np.logspace(-8, -2, 25), np.logspace(2, 8, 25))
    small, large = np.asarray(small, float), np.asarray(large, float)
    r0 = _ratio(spec, small, q, x)
    rinf = _ratio(spec, large, q, x)
    s0, sinf = _log_slope(small, r0), _log_slope(large, rinf)
    if s0 < -0.05 and np.abs(r0[0]) > 1.0:
        kind = "-inf" if r0[0] < 0 else "+inf"
        est0 = -math.inf if r0[0] < 0 else math.inf
    else:
        kind = "finite"
        est0 = _aitken(r0[::-1])  # sequence ordered towards t -> 0
    scale = max(1.0, float(np.abs(r0).max()) if np.all(np.isfinite(r0)) else 1.0)
    est_inf = _aitken(rinf)
    if np.all(rinf == 0) or (sinf < -0.05 and abs(rinf[-1]) < 1e-3 * scale):
        verdict, est_inf = "decays-to-0", 0.0
    elif sinf > 0.05:
        verdict = "grows"
    elif abs(est_inf) <= 1e-6 * scale:
        verdict = "decays-to-0"
    else:
        verdict = "nonzero-limit"
    declared = spec.declared_ell0
    est = LimitEstimate(declared, est0, kind, verdict, est_inf, s0, sinf)
    if math.isinf(declared) or kind != "finite":
        if not (math.isinf(declared) and kind == ("-inf" if declared < 0 else "+inf")):
            raise SpecInconsistency(f"declared ell0={declared} but the ratio near 0 looks {kind} "
                                    f"(estimate {est0})")
    elif abs(est0 - declared) > rtol * abs(declared) + 1e-12:
        raise SpecInconsistency(f"declared ell0={declared} but estimated {est0:.6g}")
    return est


# -- resonance --------------------------------------------------------------------

def fr_check(spec, q, t_grid=None, x=None):
    """Sampled test of f(t) t - q F(t) -> +inf as |t| -> inf.

    Requires strict increase on the grid in both directions and power-law
    growth (log-slope >= 0.05) over the last decade.
    """
    if t_grid is None:
        t_grid = np.logspace(1, 6, 41)
    out = {}
    ok = True
    for sgn in (1.0, -1.0):
        t = sgn * np.asarray(t_grid, float)
        g = eval_f(spec, t, q, x) * t - q * eval_F(spec, t, q, x)
        tail = np.abs(t) >= np.abs(t[-1]) / 10
        slope = _log_slope(np.abs(t[tail]), g[tail]) if np.all(g[tail] > 0) else -math.inf
        holds = bool(np.all(np.diff(g) > 0) and g[-1] > 0 and slope >= 0.05)
        out["positive" if sgn > 0 else "negative"] = dict(holds=holds, last=float(g[-1]), slope=slope)
        ok = ok and holds
    out["holds"] = ok
    return out


def check_resonance(ell_inf, spectrum_estimates, spec, q, margin=RESONANCE_MARGIN, x=None):
    """Compare ell_inf with the available eigenvalue proxies; test (f_r) when close.

    Raises HypothesisViolation when ell_inf is possibly resonant and the
    sampled (f_r) check fails.
    """
    spectrum = np.asarray(spectrum_estimates, float)
    if spectrum.size == 0:
        raise InvalidArgument("spectrum_estimates must be nonempty")
    rel = np.abs(ell_inf - spectrum) / np.abs(spectrum)
    j = int(np.argmin(rel))
    verdict = dict(ell_inf=float(ell_inf), nearest=float(spectrum[j]), nearest_index=j + 1,
                   relative_distance=float(rel[j]), margin=margin,
                   possibly_resonant=bool(rel[j] < margin), fr=None,
                   spectrum_proxy="eta^(0) upper bounds; partial proxy for the q-Laplacian spectrum")
    if verdict["possibly_resonant"]:
        verdict["fr"] = fr_check(spec, q, x=x)
        if not verdict["fr"]["holds"]:
            exc = HypothesisViolation(
                f"ell_inf={ell_inf:.6g} is within {100 * margin:g}% of {spectrum[j]:.6g} "
                "and f(t)t - qF(t) does not diverge to +inf")
            exc.verdict = verdict
            raise exc
    return verdict


# -- (H-) and (H+) ---------------------------------------------------------------

def _compare(name, lhs, op, rhs, quantity, tol):
    """Evaluate the strict inequality lhs op rhs; ``quantity`` names a computed upper bound.

    A relative margin within ``tol`` cannot separate the two sides and
    counts as not holding.
    """
    margin = (rhs - lhs if op == "<" else lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300)
    holds = margin > tol
    # x < bound: the true value may lie below the computed bound
    conservative = op == ">" or quantity is None
    if not holds:
        status = "violated" if margin <= 0 else "indeterminate"
    elif conservative or margin > 10.0 * tol:
        status = "verified"
    else:
        status = "unverified-direction"
    return dict(name=name, lhs=lhs, op=op, rhs=rhs, holds=bool(holds), relative_margin=margin,
                quantity=quantity, conservative=conservative, status=status)


def _worst(checks):
    st = [c["status"] for c in checks]
    return "unverified-direction" if "unverified-direction" in st else "verified"


def check_H(ell0, ell_inf, p, q, eta0, nu0, nu1=None, tol=1e-8, case=None, eta1=None):
    """Enumerate feasible (h, k), k >= h, under (H-) and/or (H+).

    ``eta0``, ``nu0``, ``nu1`` are lists indexed from level 1.  ``case`` may
    force "H-" or "H+"; otherwise the sign of ell0 decides (ell0 = 0 tries
    both).  With ell0 = -inf the lower condition on ell0 + ell_inf is void;
    with ell0 = +inf the count is unbounded once ell_inf < eta_h for some h.
    ``eta1`` (the alpha = 1 values) enables the optional alternative upper
    condition ell_inf + ell0 < eta_h^(1) under (H-), reported separately.
    """
    if not len(eta0) or not len(nu0):
        raise InvalidArgument("eta0 and nu0 must be nonempty")
    if case is None:
        cases = ["H-"] if ell0 < 0 else ["H+"] if ell0 > 0 else ["H-", "H+"]
    elif case == "H-":
        if ell0 > 0:
            raise InvalidArgument("(H-) needs ell0 <= 0")
        cases = ["H-"]
    elif case == "H+":
        if ell0 < 0:
            raise InvalidArgument("(H+) needs ell0 >= 0")
        cases = ["H+"]
    else:
        raise InvalidArgument(f"unknown case {case!r}")
    if "H+" in cases and ell0 != math.inf and (nu1 is None or not len(nu1)):
        raise InvalidArgument("(H+) needs nu1 values")
    checks, feasible, status = [], {c: [] for c in cases}, {}
    alt = []
    unbounded = False
    for h in range(1, len(eta0) + 1):
        eh = float(eta0[h - 1])
        if "H-" in cases:
            if ell0 == -math.inf:
                low = None
                up = None
            else:
                s = ell0 + ell_inf
                low = _compare(f"H-[h={h}] 0 < ell0+ell_inf", 0.0, "<", s, None, tol)
                up = _compare(f"H-[h={h}] ell0+ell_inf < eta0_h", s, "<", eh, "eta0 upper bound", tol)
                checks += [low, up]
                if eta1 is not None and h <= len(eta1):
                    alt.append(_compare(f"H-alt[h={h}] ell0+ell_inf < eta1_h", s, "<",
                                        float(eta1[h - 1]), "eta1 upper bound", tol))
            for k in range(h, len(nu0) + 1):
                c = _compare(f"H-[k={k}] ell_inf > nu0_k", ell_inf, ">", float(nu0[k - 1]),
                             "nu0 upper bound", tol)
                checks.append(c)
                used = [c] if low is None else [low, up, c]
                if all(u["holds"] for u in used):
                    feasible["H-"].append((h, k))
                    status[("H-", h, k)] = _worst(used)
        if "H+" in cases:
            up = _compare(f"H+[h={h}] ell_inf < eta0_h", ell_inf, "<", eh, "eta0 upper bound", tol)
            checks.append(up)
            if not up["holds"]:
                continue
            if ell0 == math.inf:
                unbounded = True
                feasible["H+"].append((h, math.inf))
                status[("H+", h, math.inf)] = _worst([up])
                continue
            for k in range(h, len(nu1) + 1):
                c = _compare(f"H+[k={k}] ell_inf+ell0 > (q/p) nu1_k", ell_inf + ell0, ">",
                             q / p * float(nu1[k - 1]), "nu1 upper bound", tol)
                checks.append(c)
                if c["holds"]:
                    feasible["H+"].append((h, k))
                    status[("H+", h, k)] = _worst([up, c])
    pairs = [hk for c in cases for hk in feasible[c]]
    if unbounded:
        count = math.inf
    else:
        count = max([k - h + 1 for h, k in pairs], default=0)
    best = max(pairs, key=lambda hk: (hk[1] - hk[0], -hk[0]), default=None)
    return dict(cases=cases, ell0=ell0, ell_inf=ell_inf, feasible={c: feasible[c] for c in cases},
                predicted_pairs=count, unbounded=unbounded, best=best, checks=checks,
                feasibility_status={f"{c}:{h},{k}": st for (c, h, k), st in status.items()},
                alternative_eta1=alt,
                spectrum=dict(eta0=[dict(h=i + 1, value=float(v), tag="upper-bound")
                                    for i, v in enumerate(eta0)],
                              nu0=[dict(k=i + 1, value=float(v), tag="upper-bound")
                                   for i, v in enumerate(nu0)],
                              nu1=[dict(k=i + 1, value=float(v), tag="upper-bound")
                                   for i, v in enumerate(nu1 or [])]))


# -- sampled geometry -------------------------------------------------------------

def _ray_max(fun, v, t_grid):
    """Max of fun(t v) over the grid, refined by a bounded scalar search."""
    vals = np.array([fun(v * t) for t in t_grid])
    j = int(np.argmax(vals))
    best = float(vals[j])
    if 0 < j < len(t_grid) - 1:
        res = minimize_scalar(lambda t: -fun(v * t), bounds=(t_grid[j - 1], t_grid[j + 1]),
                              method="bounded", options={"xatol": 1e-10 * t_grid[j]})
        best = max(best, float(-res.fun))
    return best, vals


def _sample_dirs(mesh, n, seed, stream):
    """Deterministic sample family: sample j depends only on (seed, stream, j).

    Even samples are smooth (low Laplacian modes plus a little noise), odd
    samples are mostly noise.
    """
    _, modes = linear_eigenvectors(mesh, min(8, mesh.n_interior))
    for j in range(n):
        rng = np.random.default_rng([seed, stream, j])
        yield random_function(mesh, rng, smooth_modes=modes, noise=0.05 if j % 2 == 0 else 1.0)


def geometry_check(prob, h, k, eta_pairs, nu_basis, rho_grid=None, n_samples=200, seed=0,
                   case="H-", t_grid=None):
    """Sample the two geometric conditions behind the multiplicity count.

    (H-): min of I on S_rho intersected with W_{h-1} (c0) and max of I on V
    (c_inf).  (H+): min of -I on S_rho intersected with V and max of -I on
    W_{h-1}.  S_rho is the sphere of radius rho in the gradient q-norm;
    ``nu_basis`` spans V; ``eta_pairs`` supply phi_1..phi_{h-1} (alpha = 0).
    Returns (c0, c_inf, report); c0 or c_inf is None when not detected.
    """
    if case not in ("H-", "H+"):
        raise InvalidArgument(f"unknown case {case!r}")
    mesh, q = prob.mesh, prob.q
    rho_grid = np.sort(np.asarray(rho_grid if rho_grid is not None else DEFAULT_RHO_GRID, float))
    if t_grid is None:
        t_grid = np.logspace(-3, 4, 71)
    sign = 1.0 if case == "H-" else -1.0

    def fun(u):
        return sign * energy_I(u, prob)

    eta = [pr for pr in eta_pairs if pr.kind == "eta"]
    basis = SubspaceBasis([pr.phi for pr in eta[: h - 1]], q) if h > 1 else None
    V = [v.coef for v in nu_basis[:k]]
    if len(V) < k:
        raise InvalidArgument(f"nu_basis has {len(V)} vectors, need {k}")
    Vmat = np.array(V).T

    def in_W(u):
        return decompose(u, basis)[1] if basis is not None else u

    def in_V(j):
        rng = np.random.default_rng([seed, 31, j])
        return FeFunction(mesh, Vmat @ rng.standard_normal(k))

    # directions for the small-sphere condition
    if case == "H-":
        small_dirs = [in_W(u) for u in _sample_dirs(mesh, n_samples, seed, 17)]
        if h <= len(eta):
            small_dirs.append(in_W(eta[h - 1].phi))
        large_dirs = [FeFunction(mesh, c) for c in V] + [in_V(j) for j in range(n_samples)]
    else:
        small_dirs = [FeFunction(mesh, c) for c in V] + [in_V(j) for j in range(n_samples)]
        large_dirs = [in_W(u) for u in _sample_dirs(mesh, n_samples, seed, 17)]
    small_dirs = [d / grad_seminorm(d, q) for d in small_dirs if grad_seminorm(d, q) > 0]
    large_dirs = [d / grad_seminorm(d, q) for d in large_dirs if grad_seminorm(d, q) > 0]

    per_rho = []
    for rho in rho_grid:
        vals = [fun(d * rho) for d in small_dirs]
        vals += [fun(-d * rho) for d in small_dirs]
        per_rho.append(dict(rho=float(rho), min=float(min(vals))))
    positive = [r for r in per_rho if r["min"] > 0]
    rho_hat = max(positive, key=lambda r: r["rho"]) if positive else None
    c0 = rho_hat["min"] if rho_hat else None

    c_inf = -math.inf
    diverges = True
    for d in large_dirs:
        for s in (1.0, -1.0):
            m, vals = _ray_max(fun, d * s, t_grid)
            c_inf = max(c_inf, m)
            # divergence to -inf along the ray: negative and decreasing at the end
            diverges = diverges and bool(vals[-1] < 0 and vals[-1] < vals[-2] < vals[-3])
    c_inf = float(c_inf) if diverges else None
    if c0 is not None and c_inf is not None and c_inf <= c0:
        # enlarge as in the abstract argument; keep the sampled value too
        c_inf_sampled = c_inf
        c_inf = c0 * (1.0 + 1e-12) if c0 > 0 else c_inf
    else:
        c_inf_sampled = c_inf
    report = dict(case=case, h=h, k=k, n_samples=n_samples, seed=seed,
                  rho=rho_hat["rho"] if rho_hat else None, c0=c0, c_inf=c_inf,
                  c_inf_sampled=c_inf_sampled, rays_diverge=diverges, per_rho=per_rho,
                  detected=c0 is not None and c_inf is not None,
                  note=None if (c0 is not None and c_inf is not None) else "geometry-not-detected")
    return c0, c_inf, report


# -- full report -----------------------------------------------------------------

@dataclass
class HypothesisReport:
    ell0_declared: float
    ell0_estimate: float
    ell0_kind: str
    infinity_verdict: str
    ell_inf: float
    resonance: dict
    H: dict
    predicted_pairs: float
    geometry: dict = field(default_factory=dict)

    def __post_init__(self):
        best = self.H.get("best")
        if self.predicted_pairs >= 1 and best is None:
            raise InvalidArgument("positive count without a feasible (h, k)")

    def to_dict(self):
        d = dict(self.__dict__)
        d["H"] = dict(self.H)
        return _jsonable(d)

    def summary(self):
        rows = [("ell0 (declared)", self.ell0_declared), ("ell0 (estimated)", self.ell0_estimate),
                ("behaviour at infinity", self.infinity_verdict), ("ell_inf", self.ell_inf),
                ("possibly resonant", self.resonance.get("possibly_resonant")),
                ("feasible (h,k)", self.H.get("feasible")), ("predicted pairs", self.predicted_pairs)]
        if self.geometry:
            rows += [("rho", self.geometry.get("rho")), ("c0", self.geometry.get("c0")),
                     ("c_inf", self.geometry.get("c_inf"))]
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{w}}  {_jsonable(val)}" for name, val in rows)


def build_report(spec, ell_inf, p, q, eta0, nu0, nu1=None, tol=1e-8, case=None, eta1=None,
                 x=None):
    lim = estimate_limits(spec, q, x=x)
    if lim.infinity_verdict != "decays-to-0":
        raise HypothesisViolation(
            f"f(t)/(|t|^(q-2) t) does not vanish at infinity ({lim.infinity_verdict})")
    res = check_resonance(ell_inf, eta0, spec, q, x=x)
    ell0 = lim.ell0_declared
    H = check_H(ell0, ell_inf, p, q, eta0, nu0, nu1, tol=tol, case=case, eta1=eta1)
    return HypothesisReport(ell0, lim.ell0_estimate, lim.ell0_kind, lim.infinity_verdict,
                            float(ell_inf), res, H, H["predicted_pairs"])
