"""Command-line driver: ``pqlap {eig,nu,solve,verify,geometry} --config run.json``.

Exit codes: 0 success, 2 invalid config, 3 hypothesis violation,
4 convergence failure, 5 invariant failure.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .critical_points import (CritOptions, deflated_search, mountain_pass, pair_records,
                              verify_solution)
from .energy import ProblemSpec, apply_A, energy_I, holder_bound_A, residual
from .errors import (ConvergenceFailure, GeometryFailure, HypothesisViolation, InvalidArgument,
                     InvalidBasis, SpecInconsistency)
from .fem import random_function, read_field_csv, write_field_csv, write_vtk
from .hypothesis import DEFAULT_RHO_GRID, build_report, geometry_check
from .mesh import build_interval_mesh, build_rect_mesh, read_mesh
from .nonlinearity import NonlinearitySpec, growth_constant
from .quasi_eigen import (EigenOptions, SubspaceBasis, decompose, eta_sequence,
                          eta_sequence_certified, linear_eigenvectors, nu_sequence, operator_L)

log = logging.getLogger("pqlap")

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_CONVERGENCE, EXIT_INVARIANT = 0, 2, 3, 4, 5

CSV_COLUMNS = ["kind", "alpha", "h", "value", "constraint_violation", "kkt_residual", "restarts"]

DEFAULTS = {
    "mesh": {"type": "interval", "n": 256, "a": 0.0, "b": 1.0},
    "p": 2.0,
    "q": 4.0,
    "alpha": [0.0, 1.0],
    "ell_inf": 0.0,
    "nonlinearity": {"family": "zero"},
    "seed": 0,
    "threads": 1,
    "eig": {"h_max": 6, "k_max": 4, "disug_samples": 100},
    "solve": {"h_max": 4, "k_max": 3, "n_attempts": 50, "mountain_pass": True,
              "hypothesis_tol": 1e-8, "use_eta1_alternative": False},
    "geometry": {"h": None, "k": None, "n_samples": 200, "rho_grid": list(DEFAULT_RHO_GRID)},
    "verify": {"h_max": 5, "n_samples": 100, "gradient_pairs": 20, "decomposition_samples": 100,
               "basis_dir": None},
    "eigen_options": {},
    "crit_options": {},
    "plots": False,
}


class ConfigError(InvalidArgument):
    pass


# -- configuration ----------------------------------------------------------------

def _merge(base, over, where="config"):
    out = dict(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown key {where}.{key}")
        if isinstance(base[key], dict) and key not in ("mesh", "nonlinearity", "eigen_options",
                                                       "crit_options"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}.{key} must be an object")
            out[key] = _merge(base[key], val, f"{where}.{key}")
        else:
            out[key] = val
    return out


def _dataclass_options(cls, over, seed, threads, where):
    if not isinstance(over, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(over) - names
    if unknown:
        raise ConfigError(f"unknown {where} {sorted(unknown)}")
    kw = dict(over)
    kw.setdefault("seed", seed)
    if "threads" in names:
        kw.setdefault("threads", threads)
    if "amp_range" in kw:
        kw["amp_range"] = tuple(kw["amp_range"])
    return cls(**kw)


def load_config(path=None, seed=None, threads=None, base_dir=None):
    """Parse a JSON config, fill defaults, and validate.  Returns a plain dict."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        base_dir = base_dir or Path(path).resolve().parent
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    if not (isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2 ** 64):
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not (isinstance(cfg["threads"], int) and cfg["threads"] >= 1):
        raise ConfigError("threads must be a positive integer")
    p, q = cfg["p"], cfg["q"]
    if not all(isinstance(v, (int, float)) for v in (p, q)) or not 1 < p < q:
        raise ConfigError(f"exponents must satisfy 1 < p < q, got p={p}, q={q}")
    alphas = cfg["alpha"] if isinstance(cfg["alpha"], list) else [cfg["alpha"]]
    if not alphas or any(not isinstance(a, (int, float)) or a < 0 for a in alphas):
        raise ConfigError("alpha must be a nonempty list of numbers >= 0")
    cfg["alpha"] = [float(a) for a in alphas]
    mesh = cfg["mesh"]
    if "file" in mesh:
        mp = Path(mesh["file"])
        if not mp.is_absolute() and base_dir is not None:
            mp = Path(base_dir) / mp
        if not mp.exists():
            raise ConfigError(f"mesh file {mp} does not exist")
        cfg["mesh"] = {"file": str(mp)}
    elif mesh.get("type") == "interval":
        cfg["mesh"] = {"type": "interval", "n": 256, "a": 0.0, "b": 1.0, **mesh}
    elif mesh.get("type") == "rect":
        cfg["mesh"] = {"type": "rect", "nx": 32, "ny": 32, "rect": [0.0, 0.0, 1.0, 1.0], **mesh}
    else:
        raise ConfigError("mesh needs type 'interval' or 'rect', or a 'file'")
    bd = cfg["verify"]["basis_dir"]
    if bd is not None:
        bp = Path(bd)
        if not bp.is_absolute() and base_dir is not None:
            bp = Path(base_dir) / bp
        if not bp.is_dir():
            raise ConfigError(f"basis_dir {bp} is not a directory")
        cfg["verify"]["basis_dir"] = str(bp)
    for key in ("eig", "solve", "verify"):
        for sub in ("h_max", "k_max"):
            v = cfg[key].get(sub)
            if v is not None and not (isinstance(v, int) and v >= 1):
                raise ConfigError(f"{key}.{sub} must be a positive integer")
    # materialise the solver options so the provenance shows every default
    cfg["eigen_options"] = _dataclass_options(EigenOptions, cfg["eigen_options"], cfg["seed"],
                                              cfg["threads"], "eigen_options").to_dict()
    cfg["crit_options"] = _dataclass_options(CritOptions, cfg["crit_options"], cfg["seed"],
                                             cfg["threads"], "crit_options").to_dict()
    NonlinearitySpec.from_dict(_resolve_nonlinearity(cfg["nonlinearity"], 1.0))  # validates
    return cfg


def build_mesh(mcfg):
    try:
        if "file" in mcfg:
            return read_mesh(mcfg["file"])
        if mcfg["type"] == "interval":
            return build_interval_mesh(int(mcfg["n"]), float(mcfg["a"]), float(mcfg["b"]))
        return build_rect_mesh(int(mcfg["nx"]), int(mcfg["ny"]), tuple(mcfg["rect"]))
    except (InvalidArgument, OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid mesh: {exc}") from exc


def _resolve(value, lam1, name):
    """A number or {"lambda1_multiple": x}."""
    if isinstance(value, dict):
        if set(value) != {"lambda1_multiple"}:
            raise ConfigError(f"{name} must be a number or {{\"lambda1_multiple\": x}}")
        return float(value["lambda1_multiple"]) * lam1
    if isinstance(value, str) and value in ("inf", "-inf"):
        return float(value)
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number")
    return float(value)


def _resolve_nonlinearity(d, lam1):
    d = dict(d)
    if "ell0" in d:
        d["ell0"] = _resolve(d["ell0"], lam1, "nonlinearity.ell0")
    return d


def _needs_lambda1(cfg):
    nl = cfg["nonlinearity"]
    return isinstance(cfg["ell_inf"], dict) or isinstance(nl.get("ell0"), dict)


# -- output helpers ---------------------------------------------------------------

def _atomic_write(path, writer):
    """Write through ``writer(tmp_path)`` and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path, text):
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    _atomic_write(path, w)


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o)}")


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _write_json(path, obj):
    _write_text(path, json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n")


def _write_field(path, u):
    _atomic_write(path, lambda tmp: write_field_csv(u, tmp))


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _table_csv(pairs):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for pr in pairs:
        d = pr.diagnostics
        w.writerow([pr.kind, _fmt(pr.alpha), pr.h, _fmt(pr.value),
                    _fmt(d.get("constraint_violation", float("nan"))),
                    _fmt(d.get("kkt_residual", float("nan"))), d.get("restarts", 0)])
    return buf.getvalue()


def _alpha_tag(alpha):
    return f"{alpha:g}".replace(".", "p")


def _provenance(cmd, cfg, mesh, extra=None):
    import scipy
    prov = dict(command=cmd, package_version=__version__, numpy=np.__version__,
                scipy=scipy.__version__, seed=cfg["seed"], threads=cfg["threads"],
                mesh_hash=mesh.digest(), mesh_nodes=mesh.n_nodes, mesh_elements=mesh.n_elements,
                config=cfg)
    if extra:
        prov.update(extra)
    return prov


def _eigen_opts(cfg):
    return EigenOptions(**cfg["eigen_options"])


def _crit_opts(cfg):
    d = dict(cfg["crit_options"])
    d["amp_range"] = tuple(d["amp_range"])
    return CritOptions(**d)


def _pq(cfg, alpha):
    return cfg["p"] if alpha > 0 else None


# -- commands ---------------------------------------------------------------------

def _spectra(cfg, mesh, alphas, h_max, k_max, out, write_fields=True, with_nu=True):
    """eta (and nu) tables for every alpha; fields written as they are accepted."""
    opts = _eigen_opts(cfg)
    eta_rows, nu_rows, result = [], [], {}
    try:
        for alpha in alphas:
            pairs, rep = eta_sequence_certified(mesh, alpha, _pq(cfg, alpha), cfg["q"], h_max,
                                                opts, n_samples=cfg["eig"]["disug_samples"],
                                                seed=cfg["seed"])
            if not rep.passed:
                raise ConvergenceFailure(f"alpha={alpha:g}: eta levels fail the W_(h-1) "
                                         "inequality check after restarts", partial=pairs)
            eta_rows += pairs
            nus = []
            if with_nu:
                nus = nu_sequence(mesh, alpha, _pq(cfg, alpha), cfg["q"], k_max, pairs, opts)
                nu_rows += nus
            result[alpha] = (pairs, nus)
            if write_fields and out is not None:
                for pr in pairs + nus:
                    _write_field(out / f"phi_{pr.kind}_a{_alpha_tag(alpha)}_h{pr.h}.csv", pr.phi)
    except ConvergenceFailure as exc:
        exc.partial_rows = eta_rows + [pr for pr in exc.partial if pr not in eta_rows]
        exc.nu_rows = nu_rows
        raise
    return result, eta_rows, nu_rows


def cmd_eig(cfg, out, only_nu=False):
    mesh = build_mesh(cfg["mesh"])
    out.mkdir(parents=True, exist_ok=True)
    e = cfg["eig"]
    try:
        result, eta_rows, nu_rows = _spectra(cfg, mesh, cfg["alpha"], e["h_max"], e["k_max"], out)
    except ConvergenceFailure as exc:
        if not only_nu:
            _write_text(out / "eta.csv", _table_csv(exc.partial_rows))
        _write_text(out / "nu.csv", _table_csv(exc.nu_rows))
        _write_json(out / "provenance.json", _provenance("nu" if only_nu else "eig", cfg, mesh,
                                                         {"status": f"convergence failure: {exc}"}))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    if not only_nu:
        _write_text(out / "eta.csv", _table_csv(eta_rows))
    _write_text(out / "nu.csv", _table_csv(nu_rows))
    _write_json(out / "provenance.json", _provenance("nu" if only_nu else "eig", cfg, mesh,
                                                     {"status": "ok"}))
    for pr in ([] if only_nu else eta_rows) + nu_rows:
        print(f"{pr.kind}[alpha={pr.alpha:g}, h={pr.h}] = {pr.value:.10g}")
    if cfg.get("plots"):
        from .plotting import plot_sequences
        plot_sequences(eta_rows, nu_rows, out / "sequences.png")
    return EXIT_OK


def _problem(cfg, mesh, lam1):
    nl = NonlinearitySpec.from_dict(_resolve_nonlinearity(cfg["nonlinearity"], lam1))
    ell_inf = _resolve(cfg["ell_inf"], lam1, "ell_inf")
    try:
        return ProblemSpec(cfg["p"], cfg["q"], ell_inf, nl, mesh)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc


def _solve_setup(cfg, mesh, h_max, k_max):
    """Spectra needed by the hypothesis checks: eta^(0), nu^(0), nu^(1) (and eta^(1))."""
    opts = _eigen_opts(cfg)
    q = cfg["q"]
    eta0, rep = eta_sequence_certified(mesh, 0.0, None, q, max(h_max, 1), opts,
                                       n_samples=cfg["eig"]["disug_samples"], seed=cfg["seed"])
    nu0 = nu_sequence(mesh, 0.0, None, q, k_max, eta0, opts)
    eta1 = eta_sequence(mesh, 1.0, cfg["p"], q, max(h_max, 1), opts)
    nu1 = nu_sequence(mesh, 1.0, cfg["p"], q, k_max, eta1, opts)
    return eta0, nu0, eta1, nu1


def cmd_solve(cfg, out):
    mesh = build_mesh(cfg["mesh"])
    out.mkdir(parents=True, exist_ok=True)
    s = cfg["solve"]
    eta0, nu0, eta1, nu1 = _solve_setup(cfg, mesh, s["h_max"], s["k_max"])
    lam1 = eta0[0].value
    prob = _problem(cfg, mesh, lam1)
    prov = _provenance("solve", cfg, mesh, {"lambda1_hat": lam1, "ell_inf": prob.ell_inf,
                                            "nonlinearity_resolved": prob.f.to_dict()})
    try:
        report = build_report(prob.f, prob.ell_inf, prob.p, prob.q, [e.value for e in eta0],
                              [v.value for v in nu0], [v.value for v in nu1],
                              tol=s["hypothesis_tol"],
                              eta1=[e.value for e in eta1] if s["use_eta1_alternative"] else None)
    except HypothesisViolation as exc:
        _write_json(out / "hypothesis.json", {"violation": str(exc),
                                              "resonance": getattr(exc, "verdict", None)})
        _write_json(out / "provenance.json", dict(prov, status="hypothesis violation"))
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except SpecInconsistency as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    best = report.H["best"]
    case = "H-" if report.ell0_declared < 0 else "H+"
    if best is not None and math.isfinite(best[1]):
        h, k = best
        span = (nu0 if case == "H-" else nu1)[k - 1].diagnostics["span"]
        c0, cinf, geo = geometry_check(prob, h, k, eta0, span,
                                       rho_grid=cfg["geometry"]["rho_grid"],
                                       n_samples=cfg["geometry"]["n_samples"], seed=cfg["seed"],
                                       case=case)
        report.geometry = geo
    print(report.summary())

    copts = _crit_opts(cfg)
    records, mp_note = [], None
    if s["mountain_pass"]:
        try:
            mp = mountain_pass(prob, eta0[0].phi, copts)
            records = list(pair_records(prob, [mp], (), copts))
        except GeometryFailure as exc:
            mp_note = f"geometry failure: {exc}"
        except ConvergenceFailure as exc:
            mp_note = f"convergence failure: {exc}"
    k_modes = (best[1] if best is not None and math.isfinite(best[1]) else 1) + 2
    modes = [pr.phi for pr in eta0[:k_modes]]
    if len(modes) < k_modes:
        extra = eta_sequence(mesh, 0.0, None, prob.q, k_modes, _eigen_opts(cfg), prefix=eta0)
        modes = [pr.phi for pr in extra]
    found = deflated_search(prob, records, s["n_attempts"], copts, modes=modes)
    records += list(found)

    manifest = []
    geo = report.geometry or {}
    for rec in records:
        fname = f"solution_{rec.id.replace('+', 'p').replace('-', 'm')}.csv"
        _write_field(out / fname, rec.u)
        if mesh.dim == 2:
            _atomic_write(out / fname.replace(".csv", ".vtk"), lambda tmp, u=rec.u: write_vtk(u, tmp))
        window = None
        if geo.get("c0") is not None and geo.get("c_inf") is not None:
            window = bool(geo["c0"] <= rec.energy <= 2.0 * geo["c_inf"])
        manifest.append(dict(pair_id=rec.pair_id, id=rec.id, energy=rec.energy,
                             residual_norm=rec.residual_norm, method=rec.method,
                             field_file=fname, lineage=rec.lineage, in_energy_window=window))
    found_pairs = len({m["pair_id"] for m in manifest})
    hyp = report.to_dict()
    hyp["mountain_pass"] = mp_note or "ok"
    hyp["found_pairs"] = found_pairs
    hyp["attempts"] = found.attempts
    _write_json(out / "hypothesis.json", hyp)
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "provenance.json", dict(prov, status="ok"))
    P = report.predicted_pairs
    print(f"predicted_pairs={'inf' if math.isinf(P) else int(P)} found_pairs={found_pairs}")
    return EXIT_OK


def cmd_geometry(cfg, out):
    mesh = build_mesh(cfg["mesh"])
    out.mkdir(parents=True, exist_ok=True)
    s, g = cfg["solve"], cfg["geometry"]
    eta0, nu0, eta1, nu1 = _solve_setup(cfg, mesh, s["h_max"], s["k_max"])
    prob = _problem(cfg, mesh, eta0[0].value)
    case = "H-" if prob.f.declared_ell0 <= 0 else "H+"
    h = g["h"] if g["h"] is not None else 1
    k = g["k"] if g["k"] is not None else 1
    nus = nu0 if case == "H-" else nu1
    if k > len(nus) or h > len(eta0):
        raise ConfigError("geometry.h/k exceed the computed levels (raise solve.h_max/k_max)")
    c0, cinf, rep = geometry_check(prob, h, k, eta0, nus[k - 1].diagnostics["span"],
                                   rho_grid=g["rho_grid"], n_samples=g["n_samples"],
                                   seed=cfg["seed"], case=case)
    _write_json(out / "geometry.json", rep)
    _write_json(out / "provenance.json", _provenance("geometry", cfg, mesh, {"status": "ok"}))
    print(f"case={case} h={h} k={k} rho={rep['rho']} c0={c0} c_inf={cinf}"
          + ("" if rep["detected"] else " geometry-not-detected"))
    return EXIT_OK


def _check(results, name, ok, detail):
    results.append((name, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


def _load_basis(mesh, q, directory):
    files = sorted(Path(directory).glob("phi_eta_*_h*.csv"),
                   key=lambda p: (p.name.rsplit("_h", 1)[0], int(p.stem.rsplit("_h", 1)[1])))
    if not files:
        raise ConfigError(f"no phi_eta_*_h*.csv files in {directory}")
    groups = {}
    for f in files:
        groups.setdefault(f.name.rsplit("_h", 1)[0], []).append(f)
    return {g: [read_field_csv(mesh, f) for f in fs] for g, fs in groups.items()}


def cmd_verify(cfg, out):
    mesh = build_mesh(cfg["mesh"])
    v = cfg["verify"]
    q, p = cfg["q"], cfg["p"]
    rng = np.random.default_rng([cfg["seed"], 2718])
    results = []

    if v["basis_dir"] is not None:
        for tag, phis in _load_basis(mesh, q, v["basis_dir"]).items():
            err = SubspaceBasis(phis, q, check=False).biorthogonality_error()
            _check(results, f"biorthogonality[{tag}, file basis]", err < 1e-8, f"max error {err:.3e}")

    opts = _eigen_opts(cfg)
    pairs_by_alpha = {}
    for alpha in cfg["alpha"]:
        try:
            pairs, rep = eta_sequence_certified(mesh, alpha, _pq(cfg, alpha), q, v["h_max"], opts,
                                                n_samples=v["n_samples"], seed=cfg["seed"])
        except ConvergenceFailure as exc:
            _check(results, f"eta sequence[alpha={alpha:g}]", False, str(exc))
            continue
        pairs_by_alpha[alpha] = pairs
        basis = SubspaceBasis([pr.phi for pr in pairs], q, check=False)
        err = basis.biorthogonality_error()
        _check(results, f"biorthogonality[alpha={alpha:g}]", err < 1e-8, f"max error {err:.3e}")
        vals = [pr.value for pr in pairs]
        _check(results, f"monotone eta[alpha={alpha:g}]", all(b >= a for a, b in zip(vals, vals[1:])),
               ", ".join(f"{x:.6g}" for x in vals))
        worst = min(lv["min_margin"] for lv in rep.levels)
        _check(results, f"W_(h-1) inequalities[alpha={alpha:g}]", rep.passed,
               f"min relative margin {worst:.3e}")
        if err < 1e-8:
            hd = min(3, len(pairs))
            b3 = SubspaceBasis([pr.phi for pr in pairs[:hd]], q)
            dec_err = l_err = 0.0
            for _ in range(v["decomposition_samples"]):
                u = random_function(mesh, rng, smooth_modes=[pr.phi for pr in pairs])
                vv, ww = decompose(u, b3)
                dec_err = max(dec_err, float(np.abs(u.coef - vv.coef - ww.coef).max()))
                l_err = max(l_err, max(abs(operator_L(pr.phi, ww, q)) for pr in pairs[:hd]))
            _check(results, f"decomposition[alpha={alpha:g}, h={hd}]",
                   dec_err < 1e-10 and l_err < 1e-9, f"|u-(v+w)| {dec_err:.2e}, |L_i w| {l_err:.2e}")

    if 0.0 in pairs_by_alpha and 1.0 in pairs_by_alpha:
        a0, a1 = pairs_by_alpha[0.0][0].value, pairs_by_alpha[1.0][0].value
        _check(results, "eta_1^(1) > eta_1^(0)", a1 > a0 * (1 + 1e-3), f"{a1:.8g} vs {a0:.8g}")

    if q == 2.0 and 0.0 in pairs_by_alpha:
        import scipy.linalg as sla
        K = mesh.stiffness_matrix().toarray()
        M = mesh.mass_matrix().toarray()
        ref = sla.eigh(K, M, eigvals_only=True, subset_by_index=[0, len(pairs_by_alpha[0.0]) - 1])
        got = np.array([pr.value for pr in pairs_by_alpha[0.0]])
        rel = float(np.max(np.abs(got - ref) / ref))
        _check(results, "linear oracle (discrete Laplacian spectrum)", rel < 1e-6,
               f"max relative difference {rel:.2e}")

    # energy / residual consistency on the configured problem
    lam1 = pairs_by_alpha[0.0][0].value if 0.0 in pairs_by_alpha else 1.0
    try:
        prob = _problem(cfg, mesh, lam1)
    except ConfigError as exc:
        _check(results, "problem", False, str(exc))
        prob = None
    if prob is not None:
        _, modes = linear_eigenvectors(mesh, 6)
        worst = 0.0
        for _ in range(v["gradient_pairs"]):
            u = random_function(mesh, rng, smooth_modes=modes, noise=0.1)
            w = random_function(mesh, rng, smooth_modes=modes, noise=0.1)
            eps = 1e-5
            fd = (energy_I(u + w * eps, prob) - energy_I(u - w * eps, prob)) / (2 * eps)
            an = float(residual(u, prob) @ w.coef)
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
        _check(results, "residual is the gradient of I", worst < 1e-6, f"max relative error {worst:.2e}")
        hb = 0.0
        for _ in range(10):
            u = random_function(mesh, rng, smooth_modes=modes, noise=0.1)
            w = random_function(mesh, rng, smooth_modes=modes, noise=0.1)
            hb = max(hb, abs(apply_A(u, w, p, q)) / holder_bound_A(u, w, p, q))
        _check(results, "Hoelder bound for A", hb <= 1 + 1e-12, f"max ratio {hb:.6f}")
        A = [growth_constant(prob.f, q, e) for e in (0.5, 0.1)]
        _check(results, "growth bound |f| <= eps|t|^(q-1) + A_eps", all(map(math.isfinite, A)),
               f"A_0.5={A[0]:.4g}, A_0.1={A[1]:.4g}")
        rep = verify_solution(prob, random_function(mesh, rng, smooth_modes=modes))
        _check(results, "I(u) = I(-u) at a random point", rep["pair_consistent"],
               f"|I(u) - I(-u)| = {abs(rep['energy'] - rep['energy_neg']):.1e}")

    n_fail = sum(not ok for _, ok, _ in results)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "verify.json", [dict(check=n, passed=ok, detail=d) for n, ok, d in results])
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_INVARIANT


COMMANDS = {
    "eig": lambda cfg, out: cmd_eig(cfg, out),
    "nu": lambda cfg, out: cmd_eig(cfg, out, only_nu=True),
    "solve": cmd_solve,
    "verify": cmd_verify,
    "geometry": cmd_geometry,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="pqlap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None, help="JSON run configuration")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads")
        sp.add_argument("--plots", action="store_true",
                        help="also render PNG figures (needs matplotlib)")
        sp.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.threads)
        if args.plots:
            cfg["plots"] = True
        return COMMANDS[args.command](cfg, args.out)
    except (ConfigError, InvalidBasis) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgument as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
