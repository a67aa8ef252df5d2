"""Command-line runner: ``hflab validate <path>`` and ``hflab run <manifest>``.

Exit codes: 0 success, 1 input error, 2 a mathematical check failed.
Flags can also be set through ``HFLAB_WORKERS`` and ``HFLAB_SEED``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, corpus, gaussflow, io as hio, joints, matcore, perturbflow, tubes
from .errors import HFLabError, InvalidInputError
from .grid import GridSpec

log = logging.getLogger("hflab")

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2

KINDS = ("flow-scan", "flow-xval", "perturb-bound", "notmon-search", "kakeya-sweep",
         "sharpness-sweep", "joints-count", "joints-sweep")


# --------------------------------------------------------------------------
# manifests


class Manifest:
    """Parsed experiment manifest; relative paths resolve against its directory."""

    def __init__(self, data: dict, base: Path):
        if not isinstance(data, dict):
            raise InvalidInputError("manifest must be a JSON object")
        self.name = str(data.get("name", "unnamed"))
        self.kind = data.get("kind")
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        inputs = data.get("inputs", [])
        if isinstance(inputs, str):
            inputs = [inputs]
        self.inputs = [base / p for p in inputs]
        self.parameters = dict(data.get("parameters", {}))
        if "output" not in data:
            raise InvalidInputError("manifest needs an 'output' path")
        self.output = base / data["output"]
        self.seed = data.get("seed", self.parameters.get("seed", 0))
        self.raw = data

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        return cls(hio.read_json(path), path.parent)

    def param(self, key, default=None, required=False):
        if key in self.parameters:
            return self.parameters[key]
        if required:
            raise InvalidInputError(f"{self.kind}: missing parameter {key!r}")
        return default

    def single_input(self) -> Path:
        if len(self.inputs) != 1:
            raise InvalidInputError(f"{self.kind}: expected exactly one input, got {len(self.inputs)}")
        return self.inputs[0]


def _t_grid(m: Manifest) -> np.ndarray:
    t0, t1 = m.param("t_range", [0.0, 4.0])
    nodes = int(m.param("nodes", 81))
    if nodes < 2 or not t1 > t0 >= 0:
        raise InvalidInputError("t_range must satisfy 0 <= t0 < t1 and nodes >= 2")
    return np.linspace(float(t0), float(t1), nodes)


def _grid(m: Manifest, dim: int) -> GridSpec | None:
    g = m.param("grid")
    if g is None:
        return None
    center = g.get("center", [0.0] * dim)
    if isinstance(center, (int, float)):
        center = [center] * dim
    return GridSpec(tuple(center), float(g["half_width"]), int(g["points_per_axis"]))


# --------------------------------------------------------------------------
# experiment kinds; each returns (summary dict, passed)


def run_flow_scan(m: Manifest, workers: int, seed: int):
    system = hio.flow_system_from_dict(hio.read_json(m.single_input()))
    mode = m.param("mode", "exact" if system.integer_p else "quadrature")
    points = m.param("points_per_axis")
    base = m.param("base_points")
    t_grid = _t_grid(m)

    evaluator = None
    if mode == "quadrature":
        def evaluator(t):
            grid = gaussflow.default_grid(system, t, points, base)
            return gaussflow.q_quadrature(system, t, grid, workers)
    rep = gaussflow.monotonicity_scan(system, t_grid, mode=mode, evaluator=evaluator)
    slack = float(m.param("slack_rel", 1e-9)) * rep.q[0]
    passed = rep.max_violation <= slack
    hio.write_csv(m.output, hio.SCAN_COLUMNS, list(rep.rows()))
    ajab = None
    try:
        ajab = matcore.check_condition_ajab(system.family_matrices(), system.p)
    except HFLabError:
        pass
    return {"rows": len(rep.t), "max_violation": rep.max_violation, "slack": slack,
            "condition_ajab": ajab, "mode": mode, "passed": passed}, passed


def run_flow_xval(m: Manifest, workers: int, seed: int):
    if m.inputs:
        systems = [hio.flow_system_from_dict(hio.read_json(p)) for p in m.inputs]
    else:
        systems = corpus.corpus(corpus.integer_system, seed, int(m.param("count", 50, True)))
    times = [float(t) for t in m.param("times", [0.0, 0.5, 1.0, 2.0])]
    tol = float(m.param("tol", 1e-6))
    rows, worst = [], 0.0
    for i, s in enumerate(systems):
        table = gaussflow.TupleTable(s)
        for t in times:
            exact = table.q(t)
            quad = gaussflow.q_quadrature(s, t, workers=workers)
            rel = abs(quad - exact) / exact
            worst = max(worst, rel)
            rows.append((i, t, exact, quad, rel))
    hio.write_csv(m.output, ("system", "t", "exact", "quadrature", "rel_err"), rows)
    return {"systems": len(systems), "worst_rel_err": worst, "tol": tol,
            "passed": worst <= tol}, worst <= tol


def run_perturb_bound(m: Manifest, workers: int, seed: int):
    if m.inputs:
        systems = [(float("nan"), hio.perturbed_system_from_dict(hio.read_json(p)))
                   for p in m.inputs]
    else:
        eps_list = [float(e) for e in m.param("epsilons", [0.005, 0.01, 0.05])]
        d = int(m.param("dim", 3))
        atoms = int(m.param("atoms", 2))
        systems = [(e, corpus.lw_perturbed(e, seed + i, d=d, atoms=atoms))
                   for i, e in enumerate(eps_list)]
    t_grid = _t_grid(m)
    mult = float(m.param("slack_multiplier", 10.0))
    rows, ok = [], True
    for eps, ps in systems:
        rep = perturbflow.corollary_bound_check(ps, mult, workers=workers)
        real = perturbflow.epsilon_of(ps)
        rel = qt_viol = float("nan")
        good = rep.passed
        if ps.system.integer_p:
            table = gaussflow.TupleTable(ps.system)
            rel = max(abs(table.q(t) * ps.det_m_star / table.qtilde(t) - 1.0) for t in t_grid)
            scan = gaussflow.monotonicity_scan(ps.system, t_grid, evaluator=table.qtilde)
            qt_viol = scan.max_violation / scan.q[0]
            good = good and rel <= mult * real and qt_viol <= 1e-9
        ok &= good
        rows.append((eps, real, rep.q1, rep.bound, rep.ratio, rel, qt_viol, good))
    hio.write_csv(m.output, ("epsilon", "epsilon_realized", "q1", "bound", "ratio",
                             "qqtilde_rel", "qtilde_violation", "passed"), rows)
    return {"systems": len(rows), "passed": ok}, ok


def _lw_sets(d: int, mode: str, scale: float):
    """Admissible matrix sets: ``{A_j^0}``, plus ``scale * A_1^0`` in W_1 when non-singleton."""
    sets = [[m] for m in matcore.lw_matrices(d)]
    if mode == "nonsingleton":
        sets[0].append(matcore.sym(scale * sets[0][0]))
    elif mode != "singleton":
        raise InvalidInputError(f"unknown notmon mode {mode!r}")
    return sets


def run_notmon_search(m: Manifest, workers: int, seed: int):
    d = int(m.param("dim", 3))
    mode = m.param("mode", "singleton")
    trials = int(m.param("trials", 1000, True))
    rep = perturbflow.notmon_search(
        _lw_sets(d, mode, float(m.param("second_scale", 0.2))), seed, trials,
        velocity_scale=float(m.param("velocity_scale", 1.0)),
        max_atoms=int(m.param("max_atoms", 3)), threshold=float(m.param("threshold", 1e-6)),
        base_points=m.param("base_points", 61), workers=workers)
    hio.write_csv(m.output, ("violations", "trials", "failures", "best_ratio"),
                  [(len(rep.violations), rep.trials, len(rep.failures), rep.best_ratio)])
    hio.write_json(_with_suffix(m.output, ".witnesses.json"), rep.to_dict())
    # a violation is impossible with singleton sets, so it fails the run;
    # in non-singleton mode any witness is exploratory
    passed = mode != "singleton" or not rep.violations
    return {"mode": mode, "violations": len(rep.violations), "failures": len(rep.failures),
            "best_ratio": rep.best_ratio, "passed": passed}, passed


def _kakeya_grid(m: Manifest, d: int) -> GridSpec:
    g = _grid(m, d)
    if g is None:
        g = GridSpec((0.5,) * d, 0.6, 512 if d == 2 else 128)
    return g


def _tube_sets(m: Manifest, seed: int):
    """Yield ``(families)`` per sweep point, from inputs or a generator."""
    if m.inputs:
        for p in m.inputs:
            yield hio.tube_families_from_obj(hio.read_json(p))
        return
    gen = m.param("generator", required=True)
    d = int(m.param("dim", 2))
    deltas = [float(x) for x in m.param("deltas", required=True)]
    for i, delta in enumerate(deltas):
        if gen == "lw":
            yield tubes.lw_partition(d, delta)
        elif gen == "random":
            rng = np.random.default_rng(seed + i)
            yield tubes.random_transversal_families(d, delta, rng,
                                                    radius=float(m.param("radius", 0.05)))
        else:
            raise InvalidInputError(f"unknown tube generator {gen!r}")


def run_kakeya_sweep(m: Manifest, workers: int, seed: int):
    qs = [float(q) for q in m.param("q_list", [2.0])]
    refine = bool(m.param("refine", False))
    rows = []
    for fams in _tube_sets(m, seed):
        grid = _kakeya_grid(m, fams[0].dim)
        for q in qs:
            rows.append(tubes.kakeya_row(fams, q, grid, refine, workers).as_tuple())
    if not rows:
        raise InvalidInputError("kakeya-sweep has no tube families")
    hio.write_csv(m.output, hio.KAKEYA_COLUMNS, rows)
    passed = True
    summary = {"rows": len(rows)}
    band = m.param("ratio_band")
    if band is not None:
        lo, hi = band
        passed &= all(lo <= r[4] <= hi for r in rows)
    growth = m.param("max_growth")
    if growth is not None:
        ratios = [r[4] for r in rows]
        steps = [b / a for a, b in zip(ratios, ratios[1:])]
        summary["growth"] = steps
        passed &= all(s <= growth for s in steps)
    summary["passed"] = passed
    return summary, passed


def run_sharpness_sweep(m: Manifest, workers: int, seed: int):
    n = int(m.param("n", 2))
    d = int(m.param("dim", 2))
    q = float(m.param("q", 1.5))
    deltas = [float(x) for x in m.param("deltas", required=True)]
    rows = []
    for delta in deltas:
        fams = tubes.sharpness_family(n, d, delta)
        rows.append(tubes.kakeya_row(fams, q, _kakeya_grid(m, d), False, workers).as_tuple())
    hio.write_csv(m.output, hio.KAKEYA_COLUMNS, rows)
    slope = float(np.polyfit(np.log(deltas), np.log([r[4] for r in rows]), 1)[0])
    expected = m.param("expected_slope")
    passed = True
    if expected is not None:
        passed = abs(slope - expected) <= float(m.param("slope_rel_tol", 0.15)) * abs(expected)
    return {"slope": slope, "expected_slope": expected, "passed": passed}, passed


def _line_config(m: Manifest):
    if m.inputs:
        return hio.read_lines_csv(m.single_input())
    lat = m.param("lattice")
    if lat is None:
        raise InvalidInputError("joints-count needs a lines CSV input or a 'lattice' parameter")
    return joints.lattice_config(int(lat))


def run_joints_count(m: Manifest, workers: int, seed: int):
    config = _line_config(m)
    found = joints.find_joints(config, m.param("tol_meet"), float(m.param("tol_coplanar", 1e-12)))
    hio.write_joints_csv(m.output, found)
    expected = m.param("expected")
    passed = expected is None or len(found) == int(expected)
    rep = joints.bound_report(config, float(m.param("epsilon", 0.01)), found)
    return {"lines": len(config), "joints": len(found), "bins_passed": rep.passed,
            "passed": passed and rep.passed}, passed and rep.passed


def run_joints_sweep(m: Manifest, workers: int, seed: int):
    ms = [int(x) for x in m.param("lattice_sizes", [2, 3, 4, 5, 6])]
    rows = []
    for k in ms:
        found = joints.find_joints(joints.lattice_config(k))
        rows.append((k, 3 * k * k, len(found), min((j.theta for j in found), default=0.0)))
    hio.write_csv(m.output, ("m", "n_lines", "n_joints", "theta_min"), rows)
    expo = joints.fit_exponent([r[1] for r in rows], [r[2] for r in rows])
    lo, hi = m.param("exponent_range", [1.45, 1.55])
    passed = lo <= expo <= hi
    return {"exponent": expo, "passed": passed}, passed


RUNNERS = {
    "flow-scan": run_flow_scan,
    "flow-xval": run_flow_xval,
    "perturb-bound": run_perturb_bound,
    "notmon-search": run_notmon_search,
    "kakeya-sweep": run_kakeya_sweep,
    "sharpness-sweep": run_sharpness_sweep,
    "joints-count": run_joints_count,
    "joints-sweep": run_joints_sweep,
}


def _with_suffix(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def run(manifest_path, workers: int | None = None, seed: int | None = None) -> int:
    """Execute one manifest; returns the exit status."""
    try:
        m = Manifest.load(manifest_path)
    except HFLabError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    seed = int(m.seed if seed is None else seed)
    workers = max(1, int(workers or 1))
    meta = {"name": m.name, "kind": m.kind, "seed": seed, "workers": workers,
            "manifest": m.raw, "inputs": [str(p) for p in m.inputs],
            "output": str(m.output), "hflab_version": __version__,
            "numpy_version": np.__version__, "python": platform.python_version()}
    try:
        summary, passed = RUNNERS[m.kind](m, workers, seed)
        status = EXIT_OK if passed else EXIT_CHECK
    except (HFLabError, OSError, KeyError, TypeError, ValueError) as exc:
        log.error("%s: %s", m.kind, exc)
        summary, status = {"error": str(exc)}, EXIT_INPUT
    meta["summary"] = summary
    meta["exit_status"] = status
    hio.write_json(_with_suffix(m.output, ".meta.json"), meta)
    log.info("%s: %s", m.name, json.dumps(summary, default=str))
    return status


# --------------------------------------------------------------------------
# validate


def _validate_flow(data, out):
    if "base_matrices" in data:
        ps = hio.perturbed_system_from_dict(data)
        out.append(f"perturbed system: d={ps.dim}, n={ps.system.n}, p={ps.p.tolist()}")
        out.append(f"gap margin: {ps.gap:.6g} (gap: true)")
        out.append(f"epsilon: {perturbflow.epsilon_of(ps):.6g}")
        return
    system = hio.flow_system_from_dict(data)
    out.append(f"flow system: d={system.dim}, n={system.n}, p={system.p.tolist()}")
    try:
        mats = system.family_matrices()
    except HFLabError:
        out.append("(a-jab): n/a (atom-dependent matrices)")
        return
    out.append(f"(a-jab): {str(matcore.check_condition_ajab(mats, system.p)).lower()}")
    try:
        out.append(f"gap margin: {matcore.gap_margin(mats, system.p):.6g}")
    except HFLabError as exc:
        out.append(f"gap margin: n/a ({exc})")


def _validate_tubes(data, out):
    fams = hio.tube_families_from_obj(data)
    out.append(f"tube families: {len(fams)}, d={fams[0].dim}, width={fams[0].width:g}")
    if len(fams) <= fams[0].dim:
        cert = tubes.transversality_nu(fams)
        out.append(f"nu = {cert.nu:.6g}" + ("" if cert.valid else " (not transversal)"))
        if not cert.valid:
            raise InvalidInputError("families are not transversal: nu = 0")


def validate(path) -> tuple[bool, list[str]]:
    """Schema and invariant diagnostics for a config file; never mutates it."""
    path = Path(path)
    out: list[str] = []
    try:
        if path.suffix == ".csv":
            config = hio.read_lines_csv(path)
            out.append(f"lines: {len(config)}")
        else:
            data = hio.read_json(path)
            if isinstance(data, dict) and "kind" in data:
                m = Manifest(data, path.parent)
                out.append(f"manifest: kind={m.kind}, output={m.output}")
            elif isinstance(data, dict) and "families" in data and data["families"] \
                    and isinstance(data["families"][0], dict) and "atoms" in data["families"][0]:
                _validate_flow(data, out)
            else:
                _validate_tubes(data, out)
    except HFLabError as exc:
        out.append(f"error: {exc}")
        return False, out
    out.append("ok")
    return True, out


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hflab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a config file")
    v.add_argument("path")
    r = sub.add_parser("run", help="execute an experiment manifest")
    r.add_argument("manifest")
    r.add_argument("--workers", type=int, default=_env_int("HFLAB_WORKERS"))
    r.add_argument("--seed", type=int, default=_env_int("HFLAB_SEED"))
    return ap


def _env_int(name):
    val = os.environ.get(name)
    return int(val) if val else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "validate":
        ok, lines = validate(args.path)
        print("\n".join(lines))
        return EXIT_OK if ok else EXIT_INPUT
    return run(args.manifest, args.workers, args.seed)


if __name__ == "__main__":
    sys.exit(main())
