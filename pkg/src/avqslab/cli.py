"""Command-line scenario runner.

    avqslab run scenario.json [--out report.json] [--csv table.csv]
    avqslab validate scenario.json
    avqslab <command> [flags]        # builds the scenario from flags, then runs it

Exit status: 0 success, 1 a numerical assertion failed, 2 invalid scenario, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, kernels
from .avqs import (
    DerandomizationPlan, StateSet, check_iid_condition, check_robustification, constant_sequence_indicator,
    derandomize, orbit_average_table, random_monotone_table, reference_failure,
)
from .channels import Instrument, apply, hat_channel, one_shot_rate
from .merging import build_counterexample, counterexample_gap, detection_instrument, support_overlaps
from .optimize import MinimaxProblem, maximize_instrument
from .qcore import (
    DEFAULT_DIM_CAP, DimensionCapError, DensityMatrix, HilbertLayout, basis_state, bell_state,
    coherent_information, conditional_entropy, maximally_mixed, mutual_information, schmidt_state,
    state_from_json, von_neumann_entropy,
)
from .schur import enumerate_frames, entropy_band_instrument, irrep_dimension, isotypic_projector

EXIT_OK, EXIT_ASSERT, EXIT_SCHEMA, EXIT_IO = 0, 1, 2, 3

COMMANDS = ("entropy", "distill-rate", "optimize", "schur", "robustify", "derandomize", "counterexample")

DEFAULT_TOLERANCES = {
    "entropy": 1e-10,
    "hat_identity": 1e-9,
    "certified": 1e-8,
    "completeness": 1e-9,
    "oracle": 1e-12,
    "gap": 1e-6,
    "detection": 1e-9,
}


class ScenarioError(Exception):
    """Invalid scenario; maps to exit status 2."""


class ScenarioIOError(Exception):
    """Unreadable or unwritable file; maps to exit status 3."""


def load_schema() -> dict:
    text = resources.files("avqslab").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def _fmt_path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def schema_diagnostics(config) -> list[str]:
    validator = jsonschema.Draft202012Validator(load_schema())
    out = []
    for err in sorted(validator.iter_errors(config), key=lambda e: list(map(str, e.absolute_path))):
        leaf = err
        if err.context:
            leaf = min(err.context, key=lambda e: len(list(e.absolute_path)) * -1)
        out.append(f"{_fmt_path(leaf)}: {leaf.message}")
    return out


def _referenced_files(node):
    if isinstance(node, dict):
        if set(node) == {"file"} and isinstance(node["file"], str):
            yield node["file"]
        for v in node.values():
            yield from _referenced_files(v)
    elif isinstance(node, list):
        for v in node:
            yield from _referenced_files(v)


def missing_files(config: dict, base_dir: Path) -> list[str]:
    return [f"inputs: file {f!r} does not exist"
            for f in _referenced_files(config.get("inputs", {})) if not (base_dir / f).is_file()]


def _read_json(path: Path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioIOError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None


# ---------------------------------------------------------------------------
# inputs

def load_state(entry, base_dir: Path) -> DensityMatrix:
    if isinstance(entry, str):
        named = {
            "bell": lambda: bell_state(2),
            "bell3": lambda: bell_state(3),
            "mixed": lambda: maximally_mixed((2, 2), ("A", "B")),
            "product": lambda: basis_state(0, (2, 2), ("A", "B")),
            "classical": lambda: DensityMatrix(HilbertLayout((2, 2), ("A", "B")), np.diag([0.5, 0, 0, 0.5])),
        }
        return named[entry]()
    if "schmidt" in entry:
        w = np.asarray(entry["schmidt"], dtype=float)
        return schmidt_state(w / w.sum()).density()
    if "file" in entry:
        return state_from_json(_read_json(base_dir / entry["file"]))
    return state_from_json(entry)


def load_set(entry, base_dir: Path) -> StateSet:
    if isinstance(entry, dict):
        return StateSet.from_json(_read_json(base_dir / entry["file"]))
    return StateSet.of([load_state(s, base_dir) for s in entry])


def load_instrument(entry, rho: DensityMatrix, base_dir: Path) -> Instrument:
    a_layout = rho.layout.sub("A")
    if entry == "identity":
        return Instrument.trivial(a_layout)
    if entry == "computational":
        return Instrument.computational(a_layout)
    if "file" in entry:
        return Instrument.from_json(_read_json(base_dir / entry["file"]))
    return Instrument.from_json(entry)


# ---------------------------------------------------------------------------
# commands; each returns (results, checks, table)
# checks: list of (name, value, tol, passed)

def _check(name, value, tol, passed):
    return {"name": name, "value": float(value), "tol": float(tol), "passed": bool(passed)}


def cmd_entropy(cfg, tol, base_dir):
    rho = load_state(cfg["inputs"]["state"], base_dir)
    a, b = rho.layout.labels[0], rho.layout.labels[1:]
    res = {
        "S": von_neumann_entropy(rho),
        "S(A|B)": conditional_entropy(rho, b),
        "S(B|A)": conditional_entropy(rho, a),
        "I(A;B)": mutual_information(rho, a, b),
        "I_c(A>B)": coherent_information(rho, a, b),
    }
    resid = abs(res["I_c(A>B)"] + res["S(A|B)"])
    return res, [_check("I_c = -S(A|B)", resid, tol["entropy"], resid <= tol["entropy"])], None


def cmd_distill_rate(cfg, tol, base_dir):
    rho = load_state(cfg["inputs"]["state"], base_dir)
    inst = load_instrument(cfg["inputs"]["instrument"], rho, base_dir)
    rate = one_shot_rate(inst, rho)
    out = apply(hat_channel(inst), rho)
    a_labels = inst.out_layout.labels
    flagged = coherent_information(out, a_labels, [x for x in out.layout.labels if x not in a_labels]) \
        if a_labels else 0.0
    resid = abs(rate - flagged)
    res = {"one_shot_rate": rate, "flagged_coherent_information": flagged, "branches": len(inst)}
    return res, [_check("hat-channel identity", resid, tol["hat_identity"], resid <= tol["hat_identity"])], None


def cmd_optimize(cfg, tol, base_dir):
    states = load_set(cfg["inputs"]["set"], base_dir)
    p = cfg.get("params", {})
    prob = MinimaxProblem(states, k=p.get("k", 1), J=p.get("branches", 1), restarts=p.get("restarts", 4),
                          iterations=p.get("iters", 100), seed=cfg.get("seed", 0))
    result = maximize_instrument(prob)
    gap = result.certified_gap
    return result.to_dict(), [_check("certified value", gap, tol["certified"], gap <= tol["certified"])], None


def cmd_schur(cfg, tol, base_dir):
    p = cfg["params"]
    d, l = p["d"], p["l"]
    if d ** l > DEFAULT_DIM_CAP:
        raise DimensionCapError(f"{d}^{l} exceeds the dimension cap {DEFAULT_DIM_CAP}")
    rho = load_state(cfg["inputs"]["state"], base_dir) if "state" in cfg.get("inputs", {}) else None
    bands = entropy_band_instrument(d, l, p["eta"]) if "eta" in p else None
    rows, total = [], np.zeros((d ** l, d ** l))
    for f in enumerate_frames(d, l):
        proj = isotypic_projector(f, d)
        total = total + proj.matrix
        row = {"frame": str(f), "irrep_dimension": irrep_dimension(f), "rank": proj.rank,
               "entropy": f.entropy()}
        if bands is not None:
            row["band"] = bands.band_of(f.entropy())
        if rho is not None:
            from .schur import spectrum_probability
            row["mass"] = spectrum_probability(f, rho)
        rows.append(row)
    resid = float(np.abs(total - np.eye(d ** l)).max())
    res = {"d": d, "l": l, "frame_count": len(rows), "rank_sum": sum(r["rank"] for r in rows), "frames": rows}
    if bands is not None:
        res["band_edges"] = list(bands.edges)
        if rho is not None:
            res["band_masses"] = bands.masses(rho).tolist()
            res["off_band_mass"] = bands.off_band_mass(rho)
    checks = [_check("projector completeness", resid, tol["completeness"], resid <= tol["completeness"]),
              _check("frame count bound", len(rows), (l + 1) ** d, len(rows) <= (l + 1) ** d)]
    return res, checks, rows


def cmd_robustify(cfg, tol, base_dir):
    p = cfg.get("params", {})
    n, l = p.get("symbols", 2), p.get("l", 3)
    family = p.get("family", "monotone")
    rng = np.random.default_rng(cfg.get("seed", 0))
    count = p.get("tables", 1) if family == "monotone" else 1
    records, violations, table_rows = [], 0, []
    for t in range(count):
        f = random_monotone_table(n, l, rng) if family == "monotone" else constant_sequence_indicator(n, l)
        r = check_robustification(f)
        violations += r.violations
        records.append({"gamma": r.gamma, "bound": r.bound, "min_average": r.min_average,
                        "violations": r.violations})
        if t == 0:
            avg = orbit_average_table(f)
            for seq in itertools.product(range(n), repeat=l):
                table_rows.append({"s_sequence": "".join(map(str, seq)), "value": float(avg[seq]),
                                   "raw": float(f.table[seq])})
    res = {"symbols": n, "l": l, "family": family, "tables": records, "violations": violations}
    return res, [_check("robustification inequality", violations, 0, violations == 0)], table_rows


def cmd_derandomize(cfg, tol, base_dir):
    p = cfg.get("params", {})
    n, l = p.get("symbols", 2), p.get("l", 4)
    plan = DerandomizationPlan(K=p.get("K", 64), nu=p.get("nu", 0.3), seed=cfg.get("seed", 7),
                               max_retries=p.get("retries", 8))
    rep = derandomize(reference_failure(n, l), n, l, plan)
    res = {
        "K": plan.K, "nu": plan.nu, "seed": plan.seed, "epsilon": rep.epsilon, "bound": rep.bound,
        "bound_positive": rep.bound_positive, "worst_mean": rep.worst_mean,
        "oracle_worst_mean": rep.oracle_worst_mean, "success": rep.success, "attempts": rep.attempts,
        "rate_overhead": rep.rate_overhead, "permutations": [list(x) for x in rep.permutations],
    }
    rows = [{"s_sequence": "".join(map(str, seq)), "value": float(rep.means[seq])}
            for seq in itertools.product(range(n), repeat=l)]
    diff = abs(rep.worst_mean - rep.oracle_worst_mean)
    checks = [_check("worst empirical failure <= nu", rep.worst_mean, plan.nu, rep.success),
              _check("exhaustive oracle agreement", diff, tol["oracle"], diff <= tol["oracle"])]
    return res, checks, rows


def cmd_counterexample(cfg, tol, base_dir):
    inputs, p = cfg.get("inputs", {}), cfg.get("params", {})
    base = load_state(inputs.get("base", "bell"), base_dir)
    fam = build_counterexample(base, p.get("N", 2))
    rec = counterexample_gap(fam, grid=p.get("grid", 20), tol=tol["gap"])
    inst = detection_instrument(fam)
    det = 0.0
    for s, rho in enumerate(fam.states.states):
        for t, branch in enumerate(inst.branches):
            w = apply(branch, rho, "A").trace
            det = max(det, abs(w - (s == t)))
    res = {"N": fam.N, "avqs_cost": rec.avqs_cost, "compound_cost": rec.compound_cost, "gap": rec.gap,
           "classical_bound": rec.classical_avqs_bound, "classical_compound": rec.classical_compound,
           "grid_compound_cost": rec.grid_compound_cost, "max_identity_residual": rec.max_identity_residual,
           "max_support_overlap": float(np.max(support_overlaps(fam) - np.eye(fam.N) * support_overlaps(fam)))}
    gap_err = abs(rec.gap - math.log2(fam.N))
    checks = [_check("gap = log N", gap_err, tol["gap"], gap_err <= tol["gap"]),
              _check("detection weights", det, tol["detection"], det <= tol["detection"])]
    return res, checks, None


HANDLERS = {
    "entropy": cmd_entropy, "distill-rate": cmd_distill_rate, "optimize": cmd_optimize, "schur": cmd_schur,
    "robustify": cmd_robustify, "derandomize": cmd_derandomize, "counterexample": cmd_counterexample,
}


# ---------------------------------------------------------------------------
# runner

def _lookup(results, path: str):
    node = results
    for part in path.split("."):
        node = node[int(part)] if isinstance(node, list) else node[part]
    return float(node)


def user_assertions(cfg, results) -> list[dict]:
    out = []
    for a in cfg.get("assertions", []):
        try:
            v = _lookup(results, a["quantity"])
        except (KeyError, IndexError, ValueError, TypeError):
            raise ScenarioError(f"assertions: unknown quantity {a['quantity']!r}") from None
        t = a.get("tol", 0.0)
        op = a.get("op", "==")
        ok = {"==": abs(v - a["value"]) <= t, "<=": v <= a["value"] + t, ">=": v >= a["value"] - t}[op]
        out.append(_check(f"{a['quantity']} {op} {a['value']}", v, t, ok))
    return out


def run(config: dict, base_dir: Path | str = ".") -> tuple[dict, list | None]:
    """Validate and execute a scenario; returns (report, table rows or None)."""
    diags = schema_diagnostics(config)
    if diags:
        raise ScenarioError("; ".join(diags))
    base_dir = Path(base_dir)
    missing = missing_files(config, base_dir)
    if missing:
        raise ScenarioIOError("; ".join(missing))
    tol = dict(DEFAULT_TOLERANCES, **config.get("tolerances", {}))
    t0 = time.perf_counter()
    try:
        results, checks, table = HANDLERS[config["command"]](config, tol, base_dir)
    except (ScenarioError, ScenarioIOError):
        raise
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"{type(exc).__name__}: {exc}") from None
    checks = checks + user_assertions(config, results)
    report = {
        "config": config,
        "results": _jsonable(results),
        "assertions": checks,
        "passed": all(c["passed"] for c in checks),
        "tolerances": tol,
        "provenance": {"tool": "avqslab", "version": __version__, "seed": config.get("seed"),
                       "kernel_backend": kernels.BACKEND, "wall_time": time.perf_counter() - t0},
    }
    return report, table


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def comparable_payload(report: dict) -> str:
    """Serialized report without the wall-time field; identical configs give identical strings."""
    r = json.loads(json.dumps(report))
    r["provenance"].pop("wall_time", None)
    return json.dumps(r, sort_keys=True)


def config_from_report(report: dict) -> dict:
    return report["config"]


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _write(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ScenarioIOError(f"cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# argparse

def _state_arg(text: str):
    if text in ("bell", "bell3", "classical", "mixed", "product"):
        return text
    if text.startswith("schmidt:"):
        return {"schmidt": [float(x) for x in text.split(":", 1)[1].split(",")]}
    return {"file": text}


def _from_flags(args) -> dict:
    c = args.command
    cfg: dict = {"command": c}
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if c == "entropy":
        cfg["inputs"] = {"state": _state_arg(args.state)}
    elif c == "distill-rate":
        inst = args.instrument if args.instrument in ("identity", "computational") else {"file": args.instrument}
        cfg["inputs"] = {"state": _state_arg(args.state), "instrument": inst}
    elif c == "optimize":
        s = [_state_arg(x) for x in args.set] if len(args.set) > 1 or not args.set[0].endswith(".json") \
            else {"file": args.set[0]}
        cfg["inputs"] = {"set": s}
        cfg["params"] = {"k": args.k, "branches": args.branches, "restarts": args.restarts, "iters": args.iters}
    elif c == "schur":
        cfg["params"] = {"d": args.d, "l": args.l}
        if args.eta is not None:
            cfg["params"]["eta"] = args.eta
        if args.state is not None:
            cfg["inputs"] = {"state": _state_arg(args.state)}
    elif c == "robustify":
        cfg["params"] = {"symbols": args.symbols, "l": args.l, "tables": args.tables, "family": args.family}
    elif c == "derandomize":
        cfg["params"] = {"symbols": args.symbols, "l": args.l, "K": args.K, "nu": args.nu,
                         "retries": args.retries}
    elif c == "counterexample":
        cfg["inputs"] = {"base": _state_arg(args.base)}
        cfg["params"] = {"N": args.N, "grid": args.grid}
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="avqslab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"avqslab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--csv", help="write the tabular output (if any) as CSV")
        return p

    p = common(sub.add_parser("run", help="run a scenario file"))
    p.add_argument("config")
    p = sub.add_parser("validate", help="schema-check a scenario file")
    p.add_argument("config")

    p = common(sub.add_parser("entropy", help="entropic quantities of a bipartite state"))
    p.add_argument("--state", default="bell", help="named state, schmidt:w1,w2,..., or JSON file")
    p = common(sub.add_parser("distill-rate", help="one-shot rate of an instrument"))
    p.add_argument("--state", default="bell")
    p.add_argument("--instrument", default="identity", help="identity, computational, or JSON file")
    p = common(sub.add_parser("optimize", help="max-min search over instruments"))
    p.add_argument("--set", nargs="+", default=["bell"], help="state specs, or one StateSet JSON file")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--branches", type=int, default=1)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p = common(sub.add_parser("schur", help="Young frames, projector ranks and entropy bands"))
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--eta", type=float)
    p.add_argument("--state")
    p = common(sub.add_parser("robustify", help="permutation-averaging check on fidelity tables"))
    p.add_argument("--symbols", type=int, default=2)
    p.add_argument("--l", type=int, default=3)
    p.add_argument("--tables", type=int, default=1)
    p.add_argument("--family", choices=["monotone", "constant-indicator"], default="monotone")
    p.add_argument("--seed", type=int, default=0)
    p = common(sub.add_parser("derandomize", help="seeded permutation sampling"))
    p.add_argument("--symbols", type=int, default=2)
    p.add_argument("--l", type=int, default=4)
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--nu", type=float, default=0.3)
    p.add_argument("--retries", type=int, default=8)
    p.add_argument("--seed", type=int, default=7)
    p = common(sub.add_parser("counterexample", help="orthogonal-support cost gap"))
    p.add_argument("--base", default="bell")
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--grid", type=int, default=20)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = _read_json(Path(args.config))
            diags = schema_diagnostics(cfg)
            if not diags and isinstance(cfg, dict):
                io_diags = missing_files(cfg, Path(args.config).parent)
                for d in io_diags:
                    print(d)
                if io_diags:
                    return EXIT_IO
            for d in diags:
                print(d)
            return EXIT_SCHEMA if diags else EXIT_OK
        if args.command == "run":
            cfg = _read_json(Path(args.config))
            if isinstance(cfg, dict) and "config" in cfg and "results" in cfg:
                cfg = config_from_report(cfg)
            base_dir = Path(args.config).parent
        else:
            cfg, base_dir = _from_flags(args), Path(".")
        report, table = run(cfg, base_dir)
        _write(args.out, dumps(report))
        if args.csv and table:
            _write(args.csv, table_csv(table))
    except ScenarioError as exc:
        print(f"avqslab: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ScenarioIOError as exc:
        print(f"avqslab: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in report["assertions"]:
        if not c["passed"]:
            print(f"avqslab: assertion failed: {c['name']} (value {c['value']:.6g}, tol {c['tol']:.3g})",
                  file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
