"""Critical points of the energy I: Newton refinement, mountain pass, deflation.

The mountain-pass search lowers the maximum of I along rays t -> t v by
descent on the direction v, then refines the ray maximum by Newton's
method.  Deflation divides
out previously found roots (and u = 0) so repeated Newton solves from
random starts land on new solutions.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .energy import energy_I, jacobian, principal_hessian, residual
from .errors import ConvergenceFailure, GeometryFailure, InvalidArgument
from .fem import FeFunction, grad_seminorm

@dataclass
class CritOptions:
    accept_tol: float = 1e-8  # residual max-norm for an accepted record
    newton_tol: float = 1e-12
    max_newton: int = 60
    triviality: float = 1e-6  # gradient q-norm below which u counts as 0
    dist_tol: float = 1e-5  # gradient q-norm distance separating solutions
    sigma: float = 2.0
    beta: float = 1.0
    n_path: int = 32  # samples along each ray before the scalar refinement
    t_max: float = 1e4
    mp_max_iter: int = 500
    mp_switch: float = 1e-6  # ray-max gradient level at which Newton takes over
    max_deflated: int = 100
    amp_range: tuple = (0.2, 5.0)
    seed: int = 0
    threads: int = 1

    def to_dict(self):
        d = dict(self.__dict__)
        d["amp_range"] = list(self.amp_range)
        return d


@dataclass
class SolutionRecord:
    u: FeFunction
    energy: float
    residual_norm: float
    method: str
    lineage: list = field(default_factory=list)
    pair_id: str = ""
    id: str = ""
    nontrivial: bool = True
    grad_norm: float = 0.0
    diagnostics: dict = field(default_factory=dict)


class SearchResult(list):
    """List of accepted records with per-attempt diagnostics in ``attempts``."""

    def __init__(self, records=(), attempts=()):
        super().__init__(records)
        self.attempts = list(attempts)

    @property
    def n_pairs(self):
        return len({r.pair_id for r in self})


def _solve(J, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.splu(J.tocsc()).solve(b)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise np.linalg.LinAlgError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("non-finite Newton step")
    return x


def _rmax(r):
    return float(np.abs(r).max()) if r.size else 0.0


def _make_record(prob, u, method, opts, **kw):
    r = residual(u, prob)
    gn = grad_seminorm(u, prob.q)
    return SolutionRecord(u=u, energy=energy_I(u, prob), residual_norm=_rmax(r),
                          method=method, nontrivial=gn > opts.triviality, grad_norm=gn, **kw)


def newton_refine(prob, u0, opts=None, method="newton"):
    """Damped Newton on the residual with backtracking on its Euclidean norm."""
    opts = opts or CritOptions()
    if u0.mesh is not prob.mesh:
        raise InvalidArgument("start does not live on the problem mesh")
    u = u0.copy()
    r = residual(u, prob)
    hist = [_rmax(r)]
    for it in range(opts.max_newton):
        if hist[-1] <= opts.newton_tol:
            break
        try:
            d = _solve(jacobian(u, prob), -r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(f"Newton: {exc}", best=u, history=hist) from exc
        n0 = np.linalg.norm(r)
        t = 1.0
        while True:
            un = FeFunction(u.mesh, u.coef + t * d)
            rn = residual(un, prob)
            if np.all(np.isfinite(rn)) and np.linalg.norm(rn) < (1.0 - 1e-4 * t) * n0:
                break
            t *= 0.5
            if t < 1e-10:
                break
        if t < 1e-10:
            # no decrease possible: round-off floor or a genuine stall
            if hist[-1] <= opts.accept_tol:
                break
            raise ConvergenceFailure("Newton: line search failed", best=u, history=hist)
        u, r = un, rn
        hist.append(_rmax(r))
        if np.abs(t * d).max() <= 1e-15 * max(1.0, np.abs(u.coef).max()) and hist[-1] <= opts.accept_tol:
            break
    if hist[-1] > opts.accept_tol:
        raise ConvergenceFailure(
            f"Newton: residual {hist[-1]:.2e} above {opts.accept_tol:.0e} "
            f"after {opts.max_newton} iterations", best=u, history=hist)
    rec = _make_record(prob, u, method, opts)
    rec.diagnostics["newton_iterations"] = len(hist) - 1
    rec.diagnostics["residual_history"] = hist
    return rec


# -- mountain pass ------------------------------------------------------------------

def _metric(prob, u):
    K = prob.mesh.stiffness_matrix()
    return (principal_hessian(u, {prob.p: 1.0, prob.q: 1.0}, prob.eps_reg) + K).tocsc()


def find_endpoint(prob, direction, t_max=1e4):
    """Smallest t = 2^k * t0 (t <= t_max) with I(t * d) < 0, d normalised in the gradient q-norm."""
    nrm = grad_seminorm(direction, prob.q)
    if nrm == 0:
        raise InvalidArgument("direction must be nonzero")
    d = direction / nrm
    t = 1e-2
    while t <= t_max:
        e = d * t
        if energy_I(e, prob) < 0.0:
            return e, t
        t *= 2.0
    raise GeometryFailure(
        f"I(t d) >= 0 for all sampled t <= {t_max:g}; no mountain-pass endpoint "
        "(the hypotheses on ell_inf are likely not met)")


def ray_maximum(prob, v, t_max=1e4, n_path=32):
    """max of t -> I(t v) over [0, t_end], t_end the first sampled point with I < 0.

    ``v`` is normalised in the gradient q-norm.  Returns (value, t, t_end).
    """
    e, t_end = find_endpoint(prob, v, t_max)
    v = e / t_end
    ts = np.linspace(0.0, t_end, n_path + 1)[1:]
    vals = np.array([energy_I(v * t, prob) for t in ts])
    j = int(np.argmax(vals))
    lo, hi = ts[max(j - 1, 0)] if j > 0 else 0.0, ts[min(j + 1, len(ts) - 1)]
    res = minimize_scalar(lambda t: -energy_I(v * t, prob), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12 * t_end})
    if -res.fun >= vals[j]:
        return float(-res.fun), float(res.x), t_end
    return float(vals[j]), float(ts[j]), t_end


def mountain_pass(prob, direction, opts=None):
    """Mountain-pass critical point starting from the ray through ``direction``.

    The ray maximum w = t*(v) v is pushed down by preconditioned descent on
    the direction v (each accepted step lowers max_t I(t v)); once the
    gradient at w is small Newton's method finishes.  The final ray
    {t v : 0 <= t <= t_end} is a path from 0 to a negative-energy point
    whose maximum bounds the returned energy.
    """
    opts = opts or CritOptions()
    mesh = prob.mesh
    v = direction / grad_seminorm(direction, prob.q) if grad_seminorm(direction, prob.q) > 0 else None
    if v is None:
        raise InvalidArgument("direction must be nonzero")
    J, t, t_end = ray_maximum(prob, v, opts.t_max, opts.n_path)
    history = [J]
    rec = None
    for it in range(opts.mp_max_iter):
        w = v * t
        g = residual(w, prob)
        gmax = _rmax(g)
        if gmax <= opts.mp_switch:
            try:
                rec = newton_refine(prob, w, opts, method="mountain_pass")
                break
            except ConvergenceFailure:
                pass
        d = spla.splu(_metric(prob, w)).solve(-g)
        s = 1.0
        while s > 1e-12:
            trial = FeFunction(mesh, w.coef + s * d)
            nt = grad_seminorm(trial, prob.q)
            try:
                Jn, tn, te = ray_maximum(prob, trial / nt, opts.t_max, opts.n_path)
            except GeometryFailure:
                Jn = np.inf
            if Jn < J:
                break
            s *= 0.5
        if s <= 1e-12:
            break
        v, J, t, t_end = trial / nt, Jn, tn, te
        history.append(J)
    if rec is None:
        rec = newton_refine(prob, v * t, opts, method="mountain_pass")
    path_max = max(J, ray_maximum(prob, rec.u / rec.grad_norm, opts.t_max, opts.n_path)[0]) \
        if rec.grad_norm > 0 else J
    rec.diagnostics.update(path_max=path_max, descent_iterations=len(history) - 1,
                           endpoint_t=t_end, path_max_history=history)
    if not rec.nontrivial:
        raise ConvergenceFailure("mountain pass: Newton collapsed onto u = 0", best=rec.u)
    if not (0.0 < rec.energy <= path_max * (1.0 + 1e-9)):
        raise ConvergenceFailure(
            f"mountain pass: refined energy {rec.energy:.6g} outside (0, {path_max:.6g}]",
            best=rec.u)
    return rec


# -- deflation ----------------------------------------------------------------------

def _norm_and_grad(mesh, c, q):
    """||grad u||_q and its coefficient gradient."""
    u = FeFunction(mesh, c)
    grads = u.gradients()
    g = np.linalg.norm(grads, axis=1)
    nrm = float(np.dot(mesh.volumes, g ** q)) ** (1.0 / q)
    if nrm == 0:
        return 0.0, np.zeros_like(c)
    with np.errstate(divide="ignore", invalid="ignore"):
        sc = np.where(g > 0, g ** (q - 2.0), 0.0)
    flux = (sc * mesh.volumes)[:, None] * grads
    G = mesh.gradient_operator()
    return nrm, nrm ** (1.0 - q) * (G.T @ flux.ravel())


def deflation_factor(prob, u, roots, sigma=2.0, beta=1.0):
    """M(u) = prod_j (||u - u_j||^-sigma + beta) and grad log M."""
    M = 1.0
    glog = np.zeros(prob.mesh.n_interior)
    for rj in roots:
        d, gd = _norm_and_grad(prob.mesh, u.coef - rj, prob.q)
        if d == 0:
            return np.inf, glog
        m = d ** (-sigma) + beta
        M *= m
        glog += (-sigma * d ** (-sigma - 1.0) / m) * gd
    return M, glog


def _deflated_newton(prob, u0, roots, opts):
    u = u0.copy()
    for it in range(opts.max_deflated):
        r = residual(u, prob)
        rmax = _rmax(r)
        if not np.isfinite(rmax):
            return None, f"non-finite residual at iteration {it}"
        if rmax <= 1e2 * opts.newton_tol:
            return u, f"converged in {it} iterations"
        try:
            d = _solve(jacobian(u, prob), -r)
        except np.linalg.LinAlgError as exc:
            return None, f"singular Jacobian ({exc})"
        M, glog = deflation_factor(prob, u, roots, opts.sigma, opts.beta)
        if not np.isfinite(M):
            return None, "hit a deflated root"
        denom = 1.0 - float(glog @ d)
        tau = 1.0 / denom if abs(denom) > 1e-12 else 1.0
        step = tau * d
        # cap wild steps relative to the current size of u
        scale = max(1.0, np.abs(u.coef).max())
        big = np.abs(step).max()
        if big > 10.0 * scale:
            step *= 10.0 * scale / big
        u = FeFunction(u.mesh, u.coef + step)
    return None, "deflated Newton iteration limit"


def _random_start(prob, modes, rng, opts, attempt):
    mesh = prob.mesh
    if modes and attempt % 5 != 4:
        a = rng.standard_normal(len(modes))
        a *= rng.uniform() ** (1.0 / len(modes)) / np.linalg.norm(a)  # uniform in the unit ball
        c = sum(ai * m.coef for ai, m in zip(a, modes))
    else:
        c = rng.standard_normal(mesh.n_interior)
    amp = np.exp(rng.uniform(*np.log(opts.amp_range)))
    return FeFunction(mesh, amp * c / max(np.abs(c).max(), 1e-300))


def _distance(prob, a, b):
    return grad_seminorm(FeFunction(prob.mesh, a.coef - b.coef), prob.q)


def deflated_search(prob, known=(), n_attempts=50, opts=None, modes=None):
    """Look for nontrivial solutions distinct from ``known`` (and from u = 0).

    Every accepted solution u is returned together with its partner -u
    (same ``pair_id``).  ``modes`` (typically phi_1..phi_{k+2}) seed the
    random starts; without them only white-noise starts are used.
    """
    opts = opts or CritOptions()
    known = list(known)
    roots = [np.zeros(prob.mesh.n_interior)]
    for rec in known:
        roots += [rec.u.coef, -rec.u.coef]
    found = []
    attempts = []

    def attempt(i, snapshot):
        rng = np.random.default_rng([opts.seed, 104729, i])
        u0 = _random_start(prob, modes, rng, opts, i)
        u, msg = _deflated_newton(prob, u0, snapshot, opts)
        if u is None:
            return None, msg
        try:
            return newton_refine(prob, u, opts, method="deflated_descent"), msg
        except ConvergenceFailure as exc:
            return None, f"polish failed: {exc}"

    batch = max(1, int(opts.threads))
    pool = ThreadPoolExecutor(batch) if batch > 1 else None
    try:
        for b0 in range(0, int(n_attempts), batch):
            ids = range(b0, min(b0 + batch, int(n_attempts)))
            snapshot = tuple(roots)
            if pool is None:
                results = [attempt(i, snapshot) for i in ids]
            else:
                results = list(pool.map(lambda i: attempt(i, snapshot), ids))
            # accept in attempt order so the outcome does not depend on timing
            for i, (rec, msg) in zip(ids, results):
                outcome = dict(attempt=i, message=msg, accepted=False)
                attempts.append(outcome)
                if rec is None:
                    continue
                if not rec.nontrivial:
                    outcome["message"] = "trivial solution"
                    continue
                others = [r.u for r in known] + [r.u for r in found]
                if any(min(_distance(prob, rec.u, v), _distance(prob, rec.u, -v)) <= opts.dist_tol
                       for v in others):
                    outcome["message"] = "duplicate of a known solution"
                    continue
                rec.diagnostics["attempt"] = i
                found.append(rec)
                roots += [rec.u.coef, -rec.u.coef]
                outcome["accepted"] = True
    finally:
        if pool is not None:
            pool.shutdown()
    return pair_records(prob, found, known, opts, attempts)


def pair_records(prob, found, known=(), opts=None, attempts=()):
    """Sort deterministically, assign ids after those in ``known``, and add the -u partners."""
    opts = opts or CritOptions()
    for rec in found:
        # representative of the pair: largest-magnitude coefficient positive
        j = int(np.argmax(np.abs(rec.u.coef)))
        if rec.u.coef[j] < 0:
            rec.u = -rec.u
    order = {id(rec): n for n, rec in enumerate(found)}  # discovery order
    found.sort(key=lambda r: (r.energy, tuple(np.round(r.u.coef, 12))))
    offset = len({r.pair_id for r in known if r.pair_id})
    base = [r.id for r in known if r.id]
    for k, rec in enumerate(found):
        rec.pair_id = f"pair{offset + k}"
        rec.id = f"{rec.pair_id}+"
    out = []
    for rec in found:
        earlier = [r.pair_id for r in found if order[id(r)] < order[id(rec)]]
        rec.lineage = base + [f"{pid}{s}" for pid in sorted(earlier) for s in "+-"]
        partner = _make_record(prob, -rec.u, rec.method, opts, pair_id=rec.pair_id,
                               id=f"{rec.pair_id}-", lineage=list(rec.lineage))
        partner.diagnostics = dict(rec.diagnostics)
        out += [rec, partner]
    return SearchResult(out, attempts)


def verify_solution(prob, u):
    """Residual max-norm, energy, norm, and the u / -u consistency of a candidate."""
    r = residual(u, prob)
    rn = residual(-u, prob)
    e, en = energy_I(u, prob), energy_I(-u, prob)
    return dict(residual_max=_rmax(r), energy=e, grad_norm=grad_seminorm(u, prob.q),
                residual_max_neg=_rmax(rn), energy_neg=en,
                pair_consistent=abs(e - en) <= 1e-12 * max(1.0, abs(e))
                and abs(_rmax(r) - _rmax(rn)) <= 1e-12 * max(1.0, _rmax(r)))
