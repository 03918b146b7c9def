"""Declarative scenarios: schema validation, dispatch and expected outcomes.

A scenario is a JSON object with an ``id``, a ``kind`` and ``params``; an
optional ``expect`` block states the verdict and numeric checks that make
the run count as the expected outcome.  :func:`run_scenario` returns an
:class:`Outcome` whose ``report`` is a plain dict that depends only on the
scenario and the seed (timings go to ``meta``).
"""
from __future__ import annotations

import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import tolerances as tol
from .io import to_plain
from .curvature import SpaceFormAmbient, barrier_check, comparison_check, riccati_propagate
from .errors import CurvatureBlowup, InvalidInput, NestingFault, ScenarioError
from .fields import Grid
from .fixtures import CLOSED_SETS, REGION_SHAPES, build_closed_set, build_region
from .flow import avoidance_monitor, evolve, flow_to_limit, h_mean_convex_region, initial_state, region_radius
from .predicate import ExpBarrierProbe, Quadratic, critical_h, distance_enlargement_check, mh_test, probe_search
from .shapes import shape_from_dict
from .varifold import (
    blowup_set,
    boundary_mass,
    branch_count,
    counterexample_sequence,
    declared_density,
    density,
    disk_mesh,
    first_variation,
    gap_alpha_check,
    linear_schedule,
    mass,
    plane_patch,
    region_from_dict,
    sphere_mesh,
    square_mesh,
    tangent_angle_jump,
)

VIOLATION_VERDICTS = frozenset({"violation", "excess", "approach", "fault", "comparison-failure"})

MESHES = {
    "disk": disk_mesh,
    "sphere": sphere_mesh,
    "square": square_mesh,
    "plane": plane_patch,
    "counterexample": counterexample_sequence,
}

FAMILIES = ("plane", "disk", "half-plane")


def bundled_dir() -> Path:
    return Path(str(resources.files("mhsets") / "scenarios"))


def _schema():
    return json.loads((resources.files("mhsets") / "scenario.schema.json").read_text())


def validate(doc):
    try:
        jsonschema.Draft202012Validator(_schema()).validate(doc)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema error at {where}: {exc.message}") from None
    return doc


def load_scenario(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path.name}: {exc}") from None
    return validate(doc)


# ------------------------------------------------------------ descriptors


def _closed_set(d):
    try:
        return build_closed_set(d["fixture"], **d.get("params", {}))
    except (InvalidInput, TypeError) as exc:
        raise ScenarioError(f"cannot resolve fixture {d!r}: {exc}") from None


def _region(d):
    try:
        if "fixture" in d:
            return build_region(d["fixture"], **d.get("params", {}))
        return shape_from_dict(d)
    except (InvalidInput, TypeError, KeyError) as exc:
        raise ScenarioError(f"cannot resolve region {d!r}: {exc}") from None


def _grid(d):
    return Grid.cube(int(d["dim"]), float(d["half_width"]), int(d["nodes"]))


def _probe(d):
    kind = d["kind"]
    if kind == "quadratic":
        return Quadratic(np.asarray(d["center"], float), np.asarray(d["linear"], float),
                         np.asarray(d["matrix"], float), float(d.get("constant", 0.0)), float(d.get("tail", 0.0)))
    if kind == "exp-barrier":
        return ExpBarrierProbe(_region(d["u"]), float(d["alpha"]), float(d.get("scale", 1.0)))
    raise ScenarioError(f"unknown probe kind {kind!r}")


def _mesh(d):
    params = dict(d.get("params", {}))
    if "theta" in params and isinstance(params["theta"], list):
        raise ScenarioError("per-face multiplicities are not expressible in a scenario")
    return MESHES[d["builder"]](**params)


# ------------------------------------------------------------- runners


def _run_mh(p, seed, workers):
    Z = _closed_set(p["set"])
    m, h = int(p["m"]), float(p["h"])
    mode = p.get("mode", "test" if "probe" in p else "search")
    if mode == "test":
        if "probe" not in p:
            raise ScenarioError("mode 'test' needs a probe")
        res = mh_test(Z, _probe(p["probe"]), m, h)
    elif mode == "search":
        kw = {"families": tuple(p["families"])} if "families" in p else {}
        res = probe_search(Z, m, h, int(p.get("budget", 200)), seed, workers, **kw)
    else:
        lo, hi = critical_h(Z, m, float(p["lo"]), float(p["hi"]), budget=int(p.get("budget", 30)), seed=seed)
        return "bracketed", {"lo": lo, "hi": hi, "mid": 0.5 * (lo + hi)}, {}
    return ("violation" if res.violated else "pass"), res.to_dict(), {}


def _run_barrier(p, seed, workers):
    rep = barrier_check(_closed_set(p["set"]), _region(p["region"]), int(p["m"]), float(p["h"]), p.get("dx"))
    d = rep.to_dict()
    return d["verdict"], d, {}


def _run_tube(p, seed, workers):
    k0 = np.asarray(p["kappa0"], float)
    amb = SpaceFormAmbient(len(k0) + 1, float(p["K"]))
    s = float(p["s"])
    try:
        res = riccati_propagate(np.diag(k0), amb, s)
    except CurvatureBlowup as exc:
        return "blowup", {"blowup_distance": exc.distance}, {}
    comp = comparison_check(np.diag(k0), res.form, amb, s, int(p["m"]))
    out = {"eigenvalues": res.form.eigenvalues, "closed_form": res.closed_form,
           "max_abs_error": float(np.max(np.abs(res.form.eigenvalues - res.closed_form))),
           "comparison": comp.to_dict()}
    return ("pass" if comp.passed else "comparison-failure"), out, {"riccati": res.to_csv()}


def _position(P):
    return np.asarray(P, float), np.broadcast_to(np.eye(P.shape[1]), (len(P), P.shape[1], P.shape[1]))


def _unit_radial(P):
    r = np.linalg.norm(P, axis=1)
    u = P / r[:, None]
    n = P.shape[1]
    return u, (np.eye(n) - u[:, :, None] * u[:, None, :]) / r[:, None, None]


def _run_varifold(p, seed, workers):
    V = _mesh(p["mesh"])
    out = {"mesh": V.describe(), "mass": mass(V), "boundary_mass": boundary_mass(V)}
    verdict = "pass"
    if "regions" in p:
        out["regions"] = {k: mass(V, region_from_dict(d)) for k, d in sorted(p["regions"].items())}
    if "first_variation" in p:
        X = _position if p["first_variation"] == "position" else _unit_radial
        out["first_variation"] = first_variation(V, (lambda P: X(P)[0], lambda P: X(P)[1]))
    if "density" in p:
        d = p["density"]
        out["density"] = [list(density(V, x, d["radii"])) for x in d["points"]]
    if "gap_alpha" in p:
        rep = gap_alpha_check(V, float(p["gap_alpha"]))
        out["gap"] = rep.to_dict()
        verdict = "pass" if rep.ok else "violation"
    return verdict, out, {}


def _family(d):
    kind = d["kind"]
    k = int(d.get("members", 6))
    n = int(d.get("n", 40))
    if kind == "plane":
        return [plane_patch(1.0, n, theta=float(i)) for i in range(1, k + 1)]
    if kind == "disk":
        return [disk_mesh(0.4) for _ in range(k)]
    return [plane_patch(1.0, n, theta_fn=lambda c, i=i: np.where(c[:, 0] <= 0, float(i), 1.0))
            for i in range(1, k + 1)]


def _run_blowup(p, seed, workers):
    grid = _grid(p["grid"])
    r = grid.dx
    est = blowup_set(_family(p["family"]), r, linear_schedule(2, r, float(p.get("factor", 0.5))), grid.nodes())
    Z = est.closed_set.points
    out = est.to_dict()
    if len(Z):
        out["max_abs_x3"] = float(np.max(np.abs(Z[:, -1])))
        out["max_x1"] = float(np.max(Z[:, 0]))
        out["bounding_box"] = [Z.min(axis=0), Z.max(axis=0)]
    return ("empty" if not len(Z) else "nonempty"), out, {}


def _run_flow(p, seed, workers):
    grid = _grid(p["grid"])
    region = _region(p["region"])
    h = float(p["h"])
    Z = _closed_set(p["Z"]) if "Z" in p else None
    tables, fields = {}, {}
    if p.get("mode", "limit") == "evolve":
        run = evolve(initial_state(region, grid, h), int(p.get("steps", 500)),
                     record_every=int(p.get("record_every", 50)), Z=Z)
        out = {"t": run.states[-1].t, "radius": [region_radius(s.phi) for s in run.states],
               "times": [s.t for s in run.states], "extinct_at": run.extinct_at}
        verdict = "extinct" if run.extinct_at is not None else "evolved"
        if Z is not None:
            rep = avoidance_monitor(run, Z)
            out["avoidance"] = rep.to_dict()
            verdict = out["avoidance"]["verdict"]
        tables["flow"] = run.to_csv()
        fields["region"] = run.states[-1].phi
        return verdict, out, tables, fields
    N0 = h_mean_convex_region(region, grid, h)
    try:
        res = flow_to_limit(N0, Z=Z, constrained=bool(p.get("constrained", False)),
                            record_every=int(p.get("record_every", 50)))
    except NestingFault as exc:
        return "fault", {"error": str(exc)}, tables, fields
    out = dict(res.to_dict(), N0=N0.to_dict())
    if h > 0:
        out["equilibrium_radius"] = (grid.dim - 1) / h
    tables["flow"] = res.run.to_csv()
    if res.region is not None:
        fields["region"] = res.region
    return ("extinct" if res.extinct else "limit"), out, tables, fields


def _run_distance(p, seed, workers):
    kw = {"families": tuple(p["families"])} if "families" in p else {}
    amb = p.get("ambient")
    if amb is not None and "K" in amb:
        amb = SpaceFormAmbient(int(amb.get("n", 3)), float(amb["K"]))
    rep = distance_enlargement_check(_closed_set(p["set"]), float(p["s"]), int(p["m"]), float(p["h"]),
                                     _grid(p["grid"]), ambient=amb, budget=int(p.get("budget", 100)),
                                     seed=seed, **kw)
    d = rep.to_dict()
    return d["verdict"], d, {}


def _run_counterexample(p, seed, workers):
    res = float(p.get("resolution", 0.01))
    bump = p.get("bump", "cap")
    members = []
    for n in p["n"]:
        V = counterexample_sequence(n, res, bump)
        row = {"n": n, "mass": mass(V),
               "angle_jump": [tangent_angle_jump(V, b) for b in V.meta["branch_points"]],
               "branch_count": [branch_count(V, b) for b in V.meta["branch_points"]],
               "hausdorff_to_segment": float(np.max(np.abs(V.vertices[:, 1])))}
        if bump == "cap":
            row["angle_jump_exact"] = math.atan(2.0 / n)
        if "alphas" in p:
            row["gap_ok"] = [gap_alpha_check(V, a).ok for a in p["alphas"]]
        if "density_points" in p:
            radii = p.get("radii", [0.2, 0.1])
            row["density"] = [list(density(V, (x, 0.0), radii)) for x in p["density_points"]]
            row["declared_density"] = [declared_density(x) for x in p["density_points"]]
        members.append(row)
    jumps_nonzero = all(min(r["angle_jump"]) > 0 for r in members)
    return ("c1-failure" if jumps_nonzero else "smooth"), {"members": members}, {}


RUNNERS = {
    "mh-check": _run_mh,
    "barrier": _run_barrier,
    "tube": _run_tube,
    "varifold-audit": _run_varifold,
    "blowup": _run_blowup,
    "flow": _run_flow,
    "distance-set": _run_distance,
    "counterexample": _run_counterexample,
}


# ------------------------------------------------------------ outcomes


def lookup(obj, path):
    cur = obj
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        elif isinstance(cur, dict) and part in cur:
            cur = cur[part]
        else:
            raise KeyError(path)
    return cur


def _check(result, c):
    try:
        got = lookup(result, c["path"])
    except (KeyError, IndexError, ValueError):
        return {"path": c["path"], "op": c["op"], "ok": False, "got": None, "want": c.get("value")}
    want = c.get("value")
    op = c["op"]
    if op == "eq":
        ok = got == want
    elif op == "le":
        ok = got is not None and got <= want
    elif op == "ge":
        ok = got is not None and got >= want
    else:
        ok = got is not None and math.isclose(got, want, rel_tol=c.get("rel", 1e-9), abs_tol=c.get("abs", 0.0))
    return {"path": c["path"], "op": op, "ok": bool(ok), "got": got, "want": want}


@dataclass
class Outcome:
    report: dict
    meta: dict
    tables: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)

    @property
    def exit_code(self):
        if self.report.get("status") == "error":
            return 1
        return 0 if self.report["status"] == "expected" else 2


def run_scenario(doc, seed=None, workers=1) -> Outcome:
    """Validate and execute one scenario document (dict or path)."""
    if not isinstance(doc, dict):
        doc = load_scenario(doc)
    else:
        validate(doc)
    seed = int(doc.get("seed", 0) if seed is None else seed)
    started = time.time()
    out = RUNNERS[doc["kind"]](doc["params"], seed, workers)
    verdict, tables = out[0], out[2]
    result = to_plain(out[1])
    fields = out[3] if len(out) > 3 else {}
    expect = doc.get("expect")
    if expect is not None:
        checks = [_check(result, c) for c in expect.get("checks", [])]
        ok = all(c["ok"] for c in checks) and expect.get("verdict", verdict) == verdict
    else:
        checks = []
        ok = verdict not in VIOLATION_VERDICTS
    report = {"scenario": doc["id"], "kind": doc["kind"], "seed": seed, "verdict": verdict,
              "status": "expected" if ok else "unexpected", "expected_verdict": (expect or {}).get("verdict"),
              "checks": checks, "result": result, "version": __version__, "tolerances": tol.snapshot()}
    meta = {"scenario": doc["id"], "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "duration_s": time.time() - started, "python": platform.python_version(),
            "numpy": np.__version__}
    return Outcome(report, meta, tables, fields)


def error_outcome(name, exc) -> Outcome:
    report = {"scenario": name, "status": "error", "error": f"{type(exc).__name__}: {exc}",
              "version": __version__}
    return Outcome(report, {"scenario": name})


def _run_file(args):
    path, seed, workers = args
    try:
        doc = load_scenario(path)
        return run_scenario(doc, seed, workers)
    except Exception as exc:  # isolation: one bad scenario never stops the suite
        return error_outcome(Path(path).stem, exc)


def run_suite(directory, seed=None, workers=1):
    """Run every ``*.json`` in ``directory``; failures are isolated per file.

    Returns ``(aggregate_report, outcomes)`` with outcomes sorted by id.
    """
    files = sorted(Path(directory).glob("*.json"))
    jobs = [(str(f), seed, 1) for f in files]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outcomes = list(ex.map(_run_file, jobs))
    else:
        outcomes = [_run_file(j) for j in jobs]
    outcomes.sort(key=lambda o: o.report["scenario"])
    counts = {"expected": 0, "unexpected": 0, "error": 0}
    for o in outcomes:
        counts[o.report["status"]] += 1
    aggregate = {"suite": str(Path(directory).name), "total": len(outcomes), "counts": counts,
                 "scenarios": [{"scenario": o.report["scenario"], "status": o.report["status"],
                                "verdict": o.report.get("verdict"), "error": o.report.get("error")}
                               for o in outcomes],
                 "version": __version__}
    return aggregate, outcomes


def suite_exit_code(aggregate):
    c = aggregate["counts"]
    if c["error"]:
        return 1
    return 2 if c["unexpected"] else 0


def fixture_catalog():
    return {"closed_sets": sorted(CLOSED_SETS), "regions": sorted(REGION_SHAPES), "meshes": sorted(MESHES),
            "blowup_families": list(FAMILIES),
            "scenarios": sorted(p.stem for p in bundled_dir().glob("*.json"))}


__all__ = ["Outcome", "bundled_dir", "fixture_catalog", "load_scenario", "run_scenario",
           "run_suite", "suite_exit_code", "validate"]
