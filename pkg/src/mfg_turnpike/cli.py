"""Command line runner: ``mfgt <verify|solve|turnpike|ergodic|uniqueness|replay>``.

A run reads one YAML (or JSON) config, executes the pipeline, and writes::

    config.json     the resolved config (seed included)
    report.json     versioned report; its derived block is recomputable from the traces
    traces/*.csv    raw columnar traces
    plots/*.svg     with --plots
    manifest.json   schema version, package version, config hash, file hashes

Time-valued fields carry a ``_time`` suffix and spatial ones ``_space``.
Exit status: 0 when every criterion in scope passes, 1 when one fails (or
a replay mismatches), 2 for an invalid config, 3 for other package errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import yaml

from . import reports as R
from .errors import ArtifactCorrupt, ConfigInvalid, MfgError
from .measures import EmpiricalMeasure, gaussian_quantiles, gaussian_sample
from .models import BuiltinModelSpec, MfgModel, build_model, with_final_cost
from .solve import (
    SolverConfig,
    load_solution,
    save_solution,
    solve_equilibrium_grid,
    solve_equilibrium_particles,
)
from .turnpike import ErgodicReport, ergodic_study, gap_functions, gradient_gap_field, lambda_T
from .verify import (
    check_confining,
    check_g_monotone,
    estimate_c0,
    workers_from_env,
    _pool_map,
)

logger = logging.getLogger(__name__)

KINDS = {"verify": "verify", "solve": "solve", "turnpike": "turnpike_pair",
         "ergodic": "ergodic_study", "uniqueness": "uniqueness"}
_TOP_KEYS = {"kind", "seed", "model", "rho0", "solver", "T_time", "horizons_time", "verify", "c0_hat",
             "turnpike", "ergodic", "uniqueness", "plots"}
_SOLVER_KEYS = {"dt_time": "dt", "N": "N", "damping": "damping", "max_iter": "max_iter", "eps_fp": "eps_fp",
                "bvp_tol": "bvp_tol", "L_space": "L", "h_space": "h", "scheme": "scheme"}
DEFAULT_HYPOTHESES = ("H2", "H4", "H5", "H6", "H7", "H8")


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------
def _package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def load_config(path: str | Path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a mapping")
    return data


def resolve_config(raw: Mapping, kind: str, seed: int | None) -> dict:
    """Validate a raw config for ``kind`` and fill in the seed."""
    cfg = R.plain(dict(raw))
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    declared = cfg.get("kind")
    if declared is not None and declared not in (kind, KINDS[kind]):
        raise ConfigInvalid(f"config kind {declared!r} does not match subcommand {kind!r}")
    cfg["kind"] = KINDS[kind]
    if seed is not None:
        cfg["seed"] = int(seed)
    if "seed" not in cfg:
        raise ConfigInvalid("a seed is required (config 'seed' or --seed)")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigInvalid("seed must be an unsigned 64-bit integer")
    if "model" not in cfg:
        raise ConfigInvalid("'model' is required")
    _model(cfg)
    if kind != "verify":
        if "rho0" not in cfg:
            raise ConfigInvalid("'rho0' is required")
        _solver_config(cfg)
    if kind in ("solve", "turnpike"):
        T = cfg.get("T_time")
        if not isinstance(T, (int, float)) or T <= 0:
            raise ConfigInvalid("'T_time' must be a positive number")
    if kind in ("ergodic", "uniqueness"):
        hs = cfg.get("horizons_time")
        if not isinstance(hs, list) or len(hs) < 2:
            raise ConfigInvalid("'horizons_time' must list at least two horizons")
        probes = (cfg.get(kind) or {}).get("probes")
        if not probes or "times_time" not in probes or "xs_space" not in probes:
            raise ConfigInvalid(f"'{kind}.probes' needs times_time and xs_space")
    if kind == "uniqueness" and not (cfg.get("uniqueness") or {}).get("final_cost_2"):
        raise ConfigInvalid("'uniqueness.final_cost_2' is required")
    if kind == "turnpike":
        sec = (cfg.get("turnpike") or {}).get("second") or {}
        if not sec.get("final_cost") and not sec.get("rho0"):
            raise ConfigInvalid("'turnpike.second' must change the final cost or the initial measure")
    return cfg


def _model(cfg: Mapping) -> MfgModel:
    try:
        return build_model(BuiltinModelSpec.from_dict(cfg["model"]))
    except MfgError as exc:
        raise ConfigInvalid(f"model: {exc}") from exc


def _solver_config(cfg: Mapping) -> SolverConfig:
    raw = dict(cfg.get("solver") or {})
    raw.pop("method", None)
    unknown = set(raw) - set(_SOLVER_KEYS)
    if unknown:
        raise ConfigInvalid(f"unknown solver keys: {sorted(unknown)}")
    try:
        return SolverConfig(seed=int(cfg["seed"]) % 2**32, **{_SOLVER_KEYS[k]: v for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"solver: {exc}") from exc


def _method(cfg: Mapping) -> str:
    m = (cfg.get("solver") or {}).get("method", "auto")
    if m not in ("auto", "particles", "grid"):
        raise ConfigInvalid("solver.method must be auto, particles or grid")
    return m


def _rho0(spec: Mapping, seed: int) -> EmpiricalMeasure:
    try:
        if "file" in spec:
            return EmpiricalMeasure.load(spec["file"])
        sampler = spec.get("sampler", "gaussian_quantiles")
        if sampler == "gaussian_quantiles":
            return gaussian_quantiles(float(spec["mean"]), float(spec["std"]), int(spec["n"]))
        if sampler == "gaussian":
            return gaussian_sample(spec["mean"], spec["cov"], int(spec["n"]), seed)
    except (KeyError, TypeError, ValueError, OSError, MfgError) as exc:
        raise ConfigInvalid(f"rho0: {exc}") from exc
    raise ConfigInvalid(f"unknown rho0 sampler {sampler!r}")


def _solve(model, rho0, T, scfg, method):
    if method == "grid" or (method == "auto" and model.beta > 0):
        return solve_equilibrium_grid(model, rho0, T, scfg)
    return solve_equilibrium_particles(model, rho0, T, scfg)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
class _Writer:
    """Collects every artifact in memory and writes them in one pass, so the
    manifest always describes exactly what is on disk."""

    def __init__(self):
        self.files: dict[str, bytes] = {}
        self.dirs: list[tuple[str, Callable[[Path], Any]]] = []

    def text(self, name: str, content: str):
        self.files[name] = content.encode()

    def directory(self, name: str, fn: Callable[[Path], Any]):
        self.dirs.append((name, fn))

    def commit(self, out: Path, manifest_head: Mapping):
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(self.files):
            p = out / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(self.files[name])
        for name, fn in self.dirs:
            fn(out / name)
        hashes = {}
        for p in sorted(out.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                hashes[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
        manifest = {**manifest_head, "files": hashes}
        (out / "manifest.json").write_text(R.canonical_json(manifest))


def _c0_samples(model: MfgModel, cfg: Mapping) -> np.ndarray:
    v = cfg.get("verify") or {}
    rep = estimate_c0(model, int(v.get("trials", 200)), int(v.get("cloud_size", 6)), seed=int(cfg["seed"]),
                      radius=float(v.get("radius_space", 3.0)))
    return rep.trace["ratio"]


def _c0_hat(cfg: Mapping, traces: Mapping[str, Mapping]) -> float:
    if cfg.get("c0_hat") is not None:
        return float(cfg["c0_hat"])
    return R.derive_c0(traces["c0"]["ratio"])


# ---------------------------------------------------------------------------
# pipelines: each returns (traces_as_text, extra_writer_actions, plots)
# and a derive function reproducible from the traces
# ---------------------------------------------------------------------------
def _verify_settings(cfg: Mapping) -> dict:
    v = cfg.get("verify") or {}
    return {"c0_threshold": float(v.get("c0_threshold", 0.0)), "g_tolerance": float(v.get("g_tolerance", 1e-9)),
            "delta_threshold": float(v.get("delta_threshold", 0.05)),
            "anchor_quantile": float(v.get("anchor_quantile", 0.9))}


def _run_verify(cfg, w: _Writer):
    model = _model(cfg)
    v = cfg.get("verify") or {}
    hyps = list(v.get("hypotheses", DEFAULT_HYPOTHESES))
    bad = set(hyps) - set(DEFAULT_HYPOTHESES) - {"H5'", "H6'", "H7'", "H8'"}
    if bad:
        raise ConfigInvalid(f"unknown hypotheses {sorted(bad)}")
    trials, size, seed = int(v.get("trials", 200)), int(v.get("cloud_size", 6)), int(cfg["seed"])
    radius = float(v.get("radius_space", 3.0))
    s = _verify_settings(cfg)
    for h in hyps:
        if h == "H2":
            rep = estimate_c0(model, trials, size, seed=seed, radius=radius)
        elif h == "H4":
            rep = check_g_monotone(model, trials, size, seed=seed, radius=radius)
        else:
            rep = check_confining(model, h, trials, size, model.beta, seed=seed, radius=radius,
                                  z_bound=float(v.get("z_bound", 0.5)), threshold=s["delta_threshold"],
                                  anchor_quantile=s["anchor_quantile"])
        w.text(f"traces/verify_{h}.csv", R.columns_to_text(rep.trace))


def _derive_verify(cfg, traces, out):
    hyp = {k[len("verify_"):]: v for k, v in traces.items() if k.startswith("verify_")}
    s = _verify_settings(cfg)
    d = R.derive_verify(hyp, s)
    return s, d, {f"{h}": bool(r["passed"]) for h, r in d["hypotheses"].items()}


def _run_solve(cfg, w: _Writer):
    model = _model(cfg)
    eq = _solve(model, _rho0(cfg["rho0"], cfg["seed"]), float(cfg["T_time"]), _solver_config(cfg), _method(cfg))
    w.directory("solution", lambda p: save_solution(eq, p))


def _derive_solve(cfg, traces, out):
    sol = load_solution(out / "solution")
    K = sol.times.size
    nodes = sorted({0, K // 2, K - 1})
    moments = []
    for k in nodes:
        mu = sol.rho(k)
        m1 = np.average(mu.points, weights=mu.weights, axis=0)
        m2 = float(np.average(np.sum(mu.points**2, -1), weights=mu.weights))
        moments.append({"t": float(sol.times[k]), "mean": m1.tolist(), "second_moment": m2})
    d = {"iterations": len(sol.residuals), "final_residual": float(sol.residuals[-1]),
         "solver": sol.solver, "moments": moments}
    if sol.T >= 2:
        d["lambda_T"] = lambda_T(sol.model, sol)
    tol = sol.config.tolerance(sol.solver)
    return {"tolerance": tol}, d, {"converged": bool(sol.residuals[-1] < tol)}


def _pair_models(cfg):
    model1 = _model(cfg)
    sec = (cfg.get("turnpike") or {}).get("second") or {}
    try:
        model2 = with_final_cost(model1, **sec["final_cost"]) if sec.get("final_cost") else model1
    except (MfgError, TypeError) as exc:
        raise ConfigInvalid(f"turnpike.second.final_cost: {exc}") from exc
    rho_spec2 = sec.get("rho0") or cfg["rho0"]
    return model1, model2, cfg["rho0"], rho_spec2


def _pair_shape(cfg) -> str:
    tp = cfg.get("turnpike") or {}
    shape = tp.get("shape", "auto")
    if shape != "auto":
        if shape not in ("forward", "backward", "two_sided"):
            raise ConfigInvalid("turnpike.shape must be auto, forward, backward or two_sided")
        return shape
    sec = tp.get("second") or {}
    same_rho0 = not sec.get("rho0") or sec["rho0"] == cfg["rho0"]
    same_g = not sec.get("final_cost")
    if same_rho0 and not same_g:
        return "backward"
    if same_g and not same_rho0:
        return "forward"
    return "two_sided"


def _run_turnpike(cfg, w: _Writer):
    model1, model2, r1, r2 = _pair_models(cfg)
    seed, T, scfg, method = cfg["seed"], float(cfg["T_time"]), _solver_config(cfg), _method(cfg)
    rho1, rho2 = _rho0(r1, seed), _rho0(r2, seed)
    e1, e2 = _pool_map(lambda a: _solve(a[0], a[1], T, scfg, method), [(model1, rho1), (model2, rho2)],
                       workers_from_env())
    g = gap_functions(e1.bundle("first"), e2.bundle("second"))
    w.text("traces/gaps.csv", R.columns_to_text(g.to_columns()))
    probes = (cfg.get("turnpike") or {}).get("gradient_probes")
    if probes:
        ts = [float(t) for t in probes["times_time"]]
        xs = np.asarray(probes["xs_space"], dtype=float).reshape(-1, model1.dim)
        sup = [float(np.max(gradient_gap_field(e1, e2, t, xs))) for t in ts]
        w.text("traces/gradient_gap.csv", R.columns_to_text({"t": ts, "sup_gap": sup}))
    if cfg.get("c0_hat") is None:
        w.text("traces/c0.csv", R.columns_to_text({"ratio": _c0_samples(model1, cfg)}))


def _derive_turnpike(cfg, traces, out):
    s = {"c0_hat": _c0_hat(cfg, traces), "shape": _pair_shape(cfg), "T_time": float(cfg["T_time"]),
         "same_rho": False}
    d = R.derive_turnpike(traces["gaps"], traces.get("gradient_gap"), s)
    return s, d, R.turnpike_criteria(d)


def _probes(cfg, kind):
    p = cfg[kind]["probes"]
    return {"times": [float(t) for t in p["times_time"]], "xs": [float(x) for x in p["xs_space"]]}


def _ergodic_settings(cfg, traces, section: str) -> dict:
    e = cfg.get(section) or {}
    s = {"c0_hat": _c0_hat(cfg, traces)}
    for k in ("lambda_reference", "lambda_rel_tol", "lambda_abs_tol"):
        if e.get(k) is not None:
            s[k] = float(e[k])
    return s


def _run_ergodic(cfg, w: _Writer):
    model = _model(cfg)
    rho0 = _rho0(cfg["rho0"], cfg["seed"])
    c0 = float(cfg["c0_hat"]) if cfg.get("c0_hat") is not None else None
    if c0 is None:
        ratios = _c0_samples(model, cfg)
        w.text("traces/c0.csv", R.columns_to_text({"ratio": ratios}))
        c0 = R.derive_c0(ratios)
    rep = ergodic_study(model, rho0, cfg["horizons_time"], _probes(cfg, "ergodic"), _solver_config(cfg),
                        solver=_method(cfg), c0=c0)
    _write_study(w, "ergodic", rep)


def _write_study(w: _Writer, label: str, rep: ErgodicReport):
    w.text(f"traces/{label}.json", R.canonical_json(rep.to_dict()))
    w.text(f"traces/{label}_lambda.csv", R.columns_to_text({"T": rep.horizons, "lambda": rep.lambda_T}))


def _read_study(out: Path, label: str) -> ErgodicReport:
    try:
        return ErgodicReport.from_dict(json.loads((out / "traces" / f"{label}.json").read_text()))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ArtifactCorrupt(f"unreadable study trace {label}.json") from exc


def _derive_ergodic(cfg, traces, out):
    s = _ergodic_settings(cfg, traces, "ergodic")
    d = R.derive_ergodic(_read_study(out, "ergodic"), s)
    return s, d, R.ergodic_criteria(d, s)


def _run_uniqueness(cfg, w: _Writer):
    model = _model(cfg)
    try:
        model2 = with_final_cost(model, **cfg["uniqueness"]["final_cost_2"])
    except (MfgError, TypeError) as exc:
        raise ConfigInvalid(f"uniqueness.final_cost_2: {exc}") from exc
    rho0 = _rho0(cfg["rho0"], cfg["seed"])
    c0 = float(cfg["c0_hat"]) if cfg.get("c0_hat") is not None else None
    if c0 is None:
        ratios = _c0_samples(model, cfg)
        w.text("traces/c0.csv", R.columns_to_text({"ratio": ratios}))
        c0 = R.derive_c0(ratios)
    scfg, method, probes = _solver_config(cfg), _method(cfg), _probes(cfg, "uniqueness")
    for label, m in (("study1", model), ("study2", model2)):
        _write_study(w, label, ergodic_study(m, rho0, cfg["horizons_time"], probes, scfg, solver=method, c0=c0))


def _derive_uniqueness(cfg, traces, out):
    s = {"c0_hat": _c0_hat(cfg, traces)}
    d = R.derive_uniqueness(_read_study(out, "study1"), _read_study(out, "study2"))
    return s, d, {"lambda": bool(d["lambda_ok"]), "rho": bool(d["rho_ok"]), "u_up_to_constant": bool(d["u_ok"])}


_PIPELINES = {
    "verify": (_run_verify, _derive_verify),
    "solve": (_run_solve, _derive_solve),
    "turnpike": (_run_turnpike, _derive_turnpike),
    "ergodic": (_run_ergodic, _derive_ergodic),
    "uniqueness": (_run_uniqueness, _derive_uniqueness),
}
_SUBCOMMAND = {v: k for k, v in KINDS.items()}


def _read_traces(out: Path) -> dict[str, dict[str, np.ndarray]]:
    traces = {}
    d = out / "traces"
    if d.is_dir():
        for p in sorted(d.glob("*.csv")):
            try:
                traces[p.stem] = R.text_to_columns(p.read_text())
            except (OSError, ValueError, IndexError) as exc:
                raise ArtifactCorrupt(f"unreadable trace {p.name}") from exc
    return traces


def _plots(kind: str, out: Path, report: Mapping, traces):
    from . import plotting

    if kind == "turnpike":
        g = traces["gaps"]
        rate = 2 * report["settings"]["c0_hat"]
        plotting.plot_gaps(g["t"], g["phi"], g["Phi"], g["w2"], out / "plots" / "gaps.svg", rate=rate,
                           shape="forward" if report["settings"]["shape"] == "forward" else "backward")
    elif kind in ("ergodic", "uniqueness"):
        labels = ["ergodic"] if kind == "ergodic" else ["study1", "study2"]
        for lb in labels:
            st = _read_study(out, lb)
            plotting.plot_lambda(st.horizons, st.lambda_T, out / "plots" / f"{lb}_lambda.svg",
                                 limit=report["settings"].get("lambda_reference"))
            plotting.plot_tilde_u(st.probe_xs, st.tilde_u, st.horizons, out / "plots" / f"{lb}_tilde_u.svg")


def run(kind: str, config: Mapping, out: str | Path, *, seed: int | None = None, plots: bool = False) -> dict:
    """Execute one pipeline, write all artifacts, and return the report."""
    if kind not in _PIPELINES:
        raise ConfigInvalid(f"unknown experiment kind {kind!r}")
    cfg = resolve_config(config, kind, seed)
    out = Path(out)
    runner, derive = _PIPELINES[kind]
    w = _Writer()
    runner(cfg, w)
    w.text("config.json", R.canonical_json(cfg))
    chash = R.config_hash(cfg)
    head = {"schema": R.SCHEMA, "schema_version": R.SCHEMA_VERSION, "package_version": _package_version(),
            "kind": cfg["kind"], "config_hash": chash}
    # the report is derived from the traces as they will be read back
    w.commit(out, head)
    traces = _read_traces(out)
    settings, derived, criteria = derive(cfg, traces, out)
    report = R.make_report(cfg["kind"], chash, settings, derived, criteria)
    w2 = _Writer()
    w2.files = dict(w.files)
    w2.text("report.json", R.canonical_json(report))
    if plots or cfg.get("plots"):
        _plots(kind, out, report, traces)
    w2.commit(out, head)
    return report


def replay(out: str | Path) -> tuple[int, list[str]]:
    """Recompute the report from the stored traces; returns (exit status, mismatches)."""
    out = Path(out)
    try:
        manifest = json.loads((out / "manifest.json").read_text())
        cfg = json.loads((out / "config.json").read_text())
        stored = (out / "report.json").read_text()
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactCorrupt(f"incomplete artifact set in {out}: {exc}") from exc
    kind = _SUBCOMMAND.get(cfg.get("kind"))
    if kind is None:
        raise ArtifactCorrupt(f"unknown kind {cfg.get('kind')!r}")
    mismatches = []
    for name, h in sorted(manifest.get("files", {}).items()):
        p = out / name
        if not p.is_file():
            mismatches.append(f"missing file {name}")
        elif hashlib.sha256(p.read_bytes()).hexdigest() != h:
            mismatches.append(f"file changed since the run: {name}")
    if R.config_hash(cfg) != manifest.get("config_hash"):
        mismatches.append("config hash differs from the manifest")
    settings, derived, criteria = _PIPELINES[kind][1](cfg, _read_traces(out), out)
    fresh = R.canonical_json(R.make_report(cfg["kind"], R.config_hash(cfg), settings, derived, criteria))
    if fresh != stored:
        old, new = json.loads(stored), json.loads(fresh)
        keys = sorted(k for k in set(old) | set(new) if old.get(k) != new.get(k))
        mismatches.append(f"recomputed report differs in {keys}")
    return (1 if mismatches else 0), mismatches


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfgt", description="Turnpike experiments for mean field games.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in KINDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--plots", action="store_true")
    r = sub.add_parser("replay")
    r.add_argument("out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "replay":
            status, mismatches = replay(args.out)
            for m in mismatches:
                print(f"MISMATCH {m}")
            print("replay ok" if status == 0 else "replay FAILED")
            return status
        report = run(args.command, load_config(args.config), args.out, seed=args.seed, plots=args.plots)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MfgError as exc:
        print(f"{type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for name, ok in sorted(report["criteria"].items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
