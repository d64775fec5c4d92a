"""Command-line experiment runner.

``qladder run CONFIG`` executes one JSON experiment and writes ``manifest.json``
plus one CSV per observable; ``qladder validate CONFIG`` only checks the
config. Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import basis as B
from . import dynamics as D
from . import hamiltonian as Hm
from . import scars as SC
from . import spectra as SP
from .core import LadderSpec, SectorError
from .disorder import DisorderSpec, distribution, sample_couplings, sample_cross_couplings, shipped_device_table
from .states import make_initial

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
RESIDUAL_TOL = 1e-10
NUMERIC_ERRORS = (SectorError, D.KrylovConvergenceError, np.linalg.LinAlgError, FloatingPointError)
RANGE2_NAMES = ("J1x", "J1y", "J2x", "J2y")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` is a list of ``(json_pointer, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in self.errors))


class NumericalFailure(RuntimeError):
    pass


def engine_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def load_schema():
    return json.loads((resources.files("qladder") / "data" / "config_schema.json").read_text(encoding="utf-8"))


def _pointer(path):
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate_config(cfg):
    """Schema check followed by semantic checks; returns the resolved config."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError((_pointer(e.absolute_path), e.message) for e in errors)
    return resolve_config(cfg)


# ---------------------------------------------------------------------------
# resolution: defaults and semantic checks (no heavy computation)
# ---------------------------------------------------------------------------

_OPTION_DEFAULTS = {
    "quench": {"subsystems": [[1, 2]], "evolution": {}},
    "spectrum": {"q": "largest", "bins": 40, "histogram_mode": "raw", "s_max": 4.0},
    "scars": {"families": [1, 2], "convention": 1, "overlaps_with": []},
    "entanglement": {"q": "all", "cut": "perpendicular"},
    "sweep": {"initial": "phi_L", "step_ns": 0.5, "evolution": {}},
}
_EVOLUTION_DEFAULTS = {"krylov_dim": 30, "tol": 1e-12, "method": "auto"}


def resolve_config(cfg):
    cfg = json.loads(json.dumps(cfg))  # deep copy, JSON types only
    cfg["geometry"].setdefault("local_dim", 2)
    cfg.setdefault("model", "ideal")
    cfg.setdefault("realizations", 1)
    cfg.setdefault("seed", 0)
    cfg.setdefault("output", "out")
    opts = cfg.setdefault("options", {})
    for k, v in _OPTION_DEFAULTS[cfg["kind"]].items():
        opts.setdefault(k, json.loads(json.dumps(v)))
    if "evolution" in opts:
        for k, v in _EVOLUTION_DEFAULTS.items():
            opts["evolution"].setdefault(k, v)
    if "times" in opts:
        opts["times"].setdefault("start_ns", 0.0)
    if "perturbations" in cfg:
        p = cfg["perturbations"]
        p.setdefault("J_x", "device")
        p.setdefault("eta", -175.0)
        p.setdefault("cross", True)
        p.setdefault("nonlinear", True)
    if "range2" in cfg:
        cfg["range2"].setdefault("rung", 0.5)
    Experiment(cfg).check()
    return cfg


@dataclass
class Realization:
    index: int
    couplings: object
    perturbations: object = None
    sub_seeds: dict = None


class Experiment:
    """A resolved configuration plus the helpers shared by every kind."""

    def __init__(self, cfg):
        self.cfg = cfg
        g = cfg["geometry"]
        self.spec = LadderSpec(g["M"], g["local_dim"])
        self.kind = cfg["kind"]
        self.model = cfg["model"]
        self.opts = cfg["options"]
        sources = {k: ("/couplings/" + k, v) for k, v in cfg.get("couplings", {}).items()}
        if self.model == "range2":
            sources.update({k: ("/range2/" + k, cfg["range2"][k]) for k in RANGE2_NAMES})
        pert = cfg.get("perturbations")
        if pert is not None and pert["J_x"] != "device":
            sources["J_x"] = ("/perturbations/J_x", pert["J_x"])
        params, errs = {}, []
        for name, (ptr, desc) in sources.items():
            try:
                params[name] = distribution(desc)
            except ValueError as exc:
                errs.append((ptr, str(exc)))
        if errs:
            raise ConfigError(errs)
        self.disorder = DisorderSpec(params, seed=cfg["seed"])

    # -- semantic validation ------------------------------------------------
    def check(self):
        errs = []
        M, d = self.spec.M, self.spec.local_dim
        if self.model == "experimental" and d != 3:
            errs.append(("/geometry/local_dim", "the experimental model needs local_dim 3"))
        if self.model != "experimental" and d != 2:
            errs.append(("/geometry/local_dim", f"the {self.model} model needs local_dim 2"))
        if "perturbations" in self.cfg and self.model != "experimental":
            errs.append(("/perturbations", "perturbations apply only to the experimental model"))
        if self.model == "range2" and self.kind != "scars":
            errs.append(("/kind", "the range2 model supports only the scars experiment"))
        if self.model == "experimental" and self.kind not in ("quench", "sweep"):
            errs.append(("/kind", "the experimental model supports quench and sweep experiments"))
        r = None
        try:
            r = self.realization(0)
            if r.perturbations is not None:
                r.perturbations.check(self.spec)
        except (ValueError, KeyError) as exc:
            errs.append(("/couplings" if self.model != "range2" else "/range2", str(exc).strip("'\"")))
        o = self.opts
        for key in ("initial", "imbalance_reference"):
            if key in o:
                try:
                    self.state(o[key], None if r is None else r.couplings)
                except (ValueError, SectorError) as exc:
                    errs.append((f"/options/{key}", str(exc)))
        for i, rungs in enumerate(o.get("subsystems", [])):
            if max(rungs) > M:
                errs.append((f"/options/subsystems/{i}", f"rung index exceeds M={M}"))
        if "times" in o:
            t = o["times"]
            if t["stop_ns"] <= t["start_ns"]:
                errs.append(("/options/times", "stop_ns must exceed start_ns"))
            elif (t["stop_ns"] - t["start_ns"]) / t["step_ns"] > 1e6:
                errs.append(("/options/times", "time grid has more than 10^6 points"))
        if self.kind in ("spectrum", "entanglement") and self.model == "ideal":
            exc = o.get("excitations", M)
            if not 0 <= exc <= 2 * M:
                errs.append(("/options/excitations", f"must lie in [0, {2 * M}]"))
            else:
                allowed = B.admissible_charges(self.spec, exc)
                qs = o.get("q")
                qs = [] if qs in ("largest", "all") else ([qs] if isinstance(qs, int) else qs)
                for q in qs:
                    if q not in allowed:
                        errs.append(("/options/q", f"Q={q} is not admissible; choose from {allowed}"))
        if self.kind == "scars" and self.model == "ideal" and 2 in o.get("families", []) and M < 3:
            errs.append(("/options/families", "the second family needs M >= 3"))
        if "window_ns" in o and o["window_ns"][1] <= o["window_ns"][0]:
            errs.append(("/options/window_ns", "window must be increasing"))
        if errs:
            raise ConfigError(errs)

    # -- per-realization inputs ----------------------------------------------
    def realization(self, k):
        dis = self.disorder.at(k)
        pert = None
        if self.model == "range2":
            M = self.spec.M
            vals = {n: dis.draw(n, M - 1 if n.startswith("J1") else max(M - 2, 0)) for n in RANGE2_NAMES}
            cpl = Hm.Range2Config(rung=self.cfg["range2"]["rung"], **vals)
            cpl.check(self.spec)
        else:
            cpl = sample_couplings(self.spec, dis)
        p = self.cfg.get("perturbations")
        if p is not None:
            if p["J_x"] == "device":
                jx = shipped_device_table().cross_couplings(self.spec.M) if p["cross"] else ()
            else:
                jx = sample_cross_couplings(self.spec, dis)
            pert = Hm.PerturbationConfig(J_x=jx, eta=p["eta"], cross=p["cross"], nonlinear=p["nonlinear"])
        return Realization(k, cpl, pert, dis.sub_seeds())

    def state(self, desc, couplings=None):
        if isinstance(desc, dict):
            return make_initial(self.spec, "fock", fock=desc["fock"]).state
        return make_initial(self.spec, desc, couplings=couplings).state

    def hamiltonian(self, r, sector=None):
        if self.model == "experimental":
            return Hm.build_experimental(self.spec, r.couplings, r.perturbations, sector)
        if self.model == "range2":
            return Hm.build_range2(self.spec, r.couplings, sector)
        return Hm.build_ideal(self.spec, r.couplings, sector)

    def evolution_options(self):
        e = self.opts["evolution"]
        return D.EvolutionOptions(krylov_dim=e["krylov_dim"], tol=e["tol"], method=e["method"])

    def rungs_to_sites(self, rungs):
        return B.subsystem_partition(self.spec, "rungs", rungs)

    # -- kinds -----------------------------------------------------------------
    def run_realization(self, k):
        r = self.realization(k)
        rows, extra = getattr(self, f"_run_{self.kind}")(r)
        return {"index": k, "rows": rows, "extra": extra, "couplings": _couplings_record(r)}

    def _run_quench(self, r):
        o = self.opts
        psi0 = self.state(o["initial"], r.couplings)
        ref = self.state(o.get("imbalance_reference", o["initial"]), r.couplings)
        H = self.hamiltonian(r, psi0.basis)
        t = o["times"]
        n = int(math.floor((t["stop_ns"] - t["start_ns"]) / t["step_ns"] + 1e-9)) + 1
        t_ns = t["start_ns"] + t["step_ns"] * np.arange(n)
        obs = {"imbalance": D.imbalance_observable(psi0.basis, ref), "loschmidt": D.loschmidt_observable(psi0)}
        for rungs in o["subsystems"]:
            tag = "_".join(str(x) for x in rungs)
            sites = self.rungs_to_sites(rungs)
            obs[f"sqrtF_rungs_{tag}"] = D.subsystem_fidelity_observable(psi0, sites, sqrt=True)
            obs[f"S_rungs_{tag}"] = D.entropy_observable(psi0.basis, sites)
        traj = D.evolve(H, psi0, t_ns * 1e-3, self.evolution_options(), obs, keep_states=False)
        names = list(obs)
        rows = [[r.index, t_ns[i]] + [traj.observables[nm][i] for nm in names] for i in range(n)]
        return rows, {"columns": ["realization", "t_ns"] + names, "propagator": traj.meta}

    def _run_spectrum(self, r):
        o = self.opts
        exc = o.get("excitations", self.spec.M)
        q = B.largest_charge_sector(self.spec, exc) if o["q"] == "largest" else o["q"]
        sector = B.enumerate_dimer_sector(self.spec, exc, q)
        es = SP.diagonalize_sector(self.hamiltonian(r, sector), with_vectors=False)
        mean_r, rv = SP.level_spacing_ratio(es.energies)
        return [[r.index, q, sector.dim, rv.size + 2, mean_r]], {"energies": es.energies}

    def _run_scars(self, r):
        o = self.opts
        rows = []
        if self.model == "range2":
            H = self.hamiltonian(r, B.enumerate_full(self.spec))
            for which in SC.RANGE2_STATES:
                s = SC.rainbow_states_range2(self.spec, r.couplings, which)
                E, res = SC.verify_eigenstate(H, s)
                rows.append([r.index, which, "", s.energy, E, res, ""])
            return rows, {}
        H = self.hamiltonian(r, B.half_filling(self.spec))
        overlaps = {w: self.state(w, r.couplings) for w in o["overlaps_with"]}
        for fam in o["families"]:
            if fam == 1:
                tower = [SC.first_family_state(self.spec, n, J_a=r.couplings.J_a) for n in range(self.spec.M + 1)]
            else:
                tower = [
                    SC.second_family_state(self.spec, r.couplings, n, convention=o["convention"]) for n in range(1, self.spec.M)
                ]
            for s in tower:
                if s.degenerate:
                    rows.append([r.index, fam, s.n, s.energy, math.nan, math.nan, "degenerate"])
                    continue
                E, res = SC.verify_eigenstate(H, s)
                rows.append([r.index, fam, s.n, s.energy, E, res, ""])
                for name, st in overlaps.items():
                    rows[-1].append(abs(st.vdot(s.state)) ** 2)
        return rows, {"overlap_columns": list(overlaps)}

    def _run_entanglement(self, r):
        o = self.opts
        exc = o.get("excitations", self.spec.M)
        qs = B.admissible_charges(self.spec, exc) if o["q"] == "all" else o["q"]
        subset = B.subsystem_partition(self.spec, o["cut"])
        rows = []
        for q in qs:
            sector = B.enumerate_dimer_sector(self.spec, exc, q)
            es = SP.diagonalize_sector(self.hamiltonian(r, sector), energy_window=o.get("energy_window"))
            if es.residual > 1e-8 * max(es.meta["norm_bound"], 1.0):
                raise NumericalFailure(f"eigenvector residual {es.residual:.3g} in sector Q={q}")
            es = SP.resolve_degeneracies(es, SP.doublon_holon_count(sector))
            table, _ = SP.eigenstate_entropy_scan(es, subset)
            labels = es.meta["resolved_labels"]
            for i, (E, S) in enumerate(zip(table.energy, table.entropy)):
                rows.append([r.index, q, E, S, "" if math.isnan(labels[i]) else int(round(labels[i]))])
        return rows, {}

    def first_revival_window(self, r):
        o = self.opts
        if "window_ns" in o:
            return tuple(o["window_ns"])
        period_ns = 1e3 / (2 * abs(r.couplings.J_a))
        return 0.5 * period_ns, 1.5 * period_ns

    def _run_sweep(self, r):
        o = self.opts
        lo, hi = self.first_revival_window(r)
        n = int(math.floor((hi - lo) / o["step_ns"] + 1e-9)) + 1
        t_ns = lo + o["step_ns"] * np.arange(n)
        rows = []
        for delta in o["delta1"]:
            J_e = list(r.couplings.J_e)
            J_e[0] += delta
            rr = Realization(r.index, r.couplings.replace(J_e=J_e), r.perturbations, r.sub_seeds)
            psi0 = self.state(o["initial"], rr.couplings)
            H = self.hamiltonian(rr, psi0.basis)
            traj = D.evolve(H, psi0, t_ns * 1e-3, self.evolution_options(), {"F": D.loschmidt_observable(psi0)}, keep_states=False)
            f = traj.observables["F"]
            i = int(np.argmax(f))
            rows.append([r.index, delta, t_ns[i], f[i]])
        return rows, {}


def _couplings_record(r):
    c = r.couplings
    if isinstance(c, Hm.Range2Config):
        rec = {k: list(getattr(c, k)) for k in RANGE2_NAMES}
        rec["rung"] = c.rung
    else:
        rec = {"J_a": c.J_a, "J_e": list(c.J_e), "omega": list(c.omega)}
    if r.perturbations is not None:
        rec["J_x"] = list(r.perturbations.J_x)
    rec["sub_seeds"] = {k: str(v) for k, v in r.sub_seeds.items()}
    return rec


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def write_csv(path, header, rows):
    """RFC 4180 CSV (CRLF line ends, minimal quoting) with 17-digit floats."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


_HEADERS = {
    "spectrum": ["realization", "q", "dim", "n_levels", "mean_r"],
    "scars": ["realization", "family", "n", "expected_energy", "energy", "residual", "note"],
    "entanglement": ["realization", "q", "energy", "entropy", "n_doublon_holon"],
    "sweep": ["realization", "delta1", "t_peak_ns", "fidelity"],
}
_FILES = {"quench": "quench.csv", "spectrum": "rstats.csv", "scars": "scars.csv", "entanglement": "entropy.csv", "sweep": "revival.csv"}


def _worker(cfg, k):
    return Experiment(cfg).run_realization(k)


def run_experiment(cfg, out_dir=None, serial=True, threads=1):
    """Run a resolved config; returns ``(manifest, exit_code)``."""
    exp = Experiment(cfg)
    out = Path(out_dir or cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    n = cfg["realizations"]
    if serial or threads <= 1 or n == 1:
        results = [exp.run_realization(k) for k in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, [cfg] * n, range(n)))
    results.sort(key=lambda res: res["index"])
    rows = [row for res in results for row in res["rows"]]
    kind = cfg["kind"]
    summary = {}
    if kind == "quench":
        header = results[0]["extra"]["columns"]
    elif kind == "scars":
        header = _HEADERS["scars"] + [f"overlap_{w}" for w in results[0]["extra"].get("overlap_columns", [])]
    else:
        header = _HEADERS[kind]
    write_csv(out / _FILES[kind], header, rows)
    files = [_FILES[kind]]
    exit_code = EXIT_OK
    if kind == "spectrum":
        o = cfg["options"]
        h = SP.spacing_histogram([res["extra"]["energies"] for res in results], n_bins=o["bins"], mode=o["histogram_mode"], s_max=o["s_max"])
        write_csv(out / "spacing_histogram.csv", ["s_center", "density", "wigner_surmise"], zip(h.centers, h.density, h.surmise))
        files.append("spacing_histogram.csv")
        means = [row[4] for row in rows]
        summary = {"ensemble_mean_r": float(np.mean(means)), "chi2": h.chi2, "dof": h.dof, "p_value": h.p_value, "n_spacings": h.n_spacings, "mode": o["histogram_mode"]}
    if kind == "scars":
        worst = max((row[5] for row in rows if not (isinstance(row[5], float) and math.isnan(row[5]))), default=0.0)
        summary = {"max_residual": worst}
        if worst > RESIDUAL_TOL:
            exit_code = EXIT_NUMERIC
    manifest = {
        "engine": "qladder",
        "version": engine_version(),
        "config": cfg,
        "seed": cfg["seed"],
        "realizations": [{"index": res["index"], **res["couplings"]} for res in results],
        "outputs": files,
        "summary": summary,
        "mode": "serial" if serial or threads <= 1 else f"pool:{threads}",
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest, exit_code


def _read_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([("", f"cannot read {path}: {exc.strerror}")]) from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")]) from None
    # a manifest from an earlier run is accepted as its own config
    if isinstance(cfg, dict) and cfg.get("engine") == "qladder" and "config" in cfg:
        cfg = cfg["config"]
    return cfg


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("SCAR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([("", f"SCAR_THREADS must be an integer, got {env!r}")]) from None
    return 1


def build_parser():
    p = argparse.ArgumentParser(prog="qladder", description="Qubit-ladder scar experiments from JSON configs.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("config")
    run.add_argument("--serial", action="store_true", help="run realizations sequentially (bit-exact)")
    run.add_argument("--threads", type=int, default=None, help="worker processes (default: $SCAR_THREADS or 1)")
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    run.add_argument("--seed-override", type=int, default=None, dest="seed_override")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.add_argument("--seed-override", type=int, default=None, dest="seed_override")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _read_config(args.config)
        if args.seed_override is not None and isinstance(cfg, dict):
            cfg["seed"] = args.seed_override
        cfg = validate_config(cfg)
        if args.command == "validate":
            print("config ok")
            return EXIT_OK
        threads = _threads(args.threads)
    except ConfigError as exc:
        for ptr, msg in exc.errors:
            print(f"config error at {ptr or '/'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest, code = run_experiment(cfg, args.out, serial=args.serial, threads=threads)
    except (NumericalFailure, *NUMERIC_ERRORS) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(args.out or cfg["output"])
    print(f"wrote {', '.join(manifest['outputs'])} and manifest.json to {out}")
    if code == EXIT_NUMERIC:
        print(f"numerical failure: residual {manifest['summary']['max_residual']:.3g} exceeds {RESIDUAL_TOL:g}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
