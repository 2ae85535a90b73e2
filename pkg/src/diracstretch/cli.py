"""Batch front-end: load a model file, run its tasks, emit reports.

Exit codes: 0 all task verdicts pass, 1 some verdict failed, 2 model/parse
error, 3 precondition violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import constraints as _constraints
from . import courant as _courant
from . import reduction as _reduction
from . import stretch as _stretch
from .errors import ModelError, NumericalError, PreconditionError
from .expressions import ScalarExpr, Var, add, mul, num, powi, to_source
from .fields import TensorField
from .model import ModelFile, Task, load_model
from .report import RunReport, TaskReport

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_NUMERICAL = 4

CASIMIR_TOL = 1e-9
JACOBI_TOL = 1e-7
AGREEMENT_TOL = 1e-9


class TaskError(Exception):
    def __init__(self, exit_code: int, message: str):
        self.exit_code = exit_code
        super().__init__(message)


def _random_polynomials(chart, count: int, seed: int, degree: int = 2) -> list[ScalarExpr]:
    """Deterministic random polynomial test functions on the chart."""
    rng = np.random.default_rng(seed)
    n = chart.dimension
    out = []
    for _ in range(count):
        acc = num(round(rng.uniform(-1, 1), 6))
        for i in range(n):
            acc = add(acc, mul(num(round(rng.uniform(-1, 1), 6)),
                               Var(i, chart.coordinate_names[i])))
            if degree >= 2:
                acc = add(acc, mul(num(round(rng.uniform(-1, 1), 6)),
                                   powi(Var(i, chart.coordinate_names[i]), 2)))
        out.append(acc)
    return out


def _frame_expressions(frame: _stretch.FrameBundle) -> list[dict]:
    out = []
    for sec in frame.sections:
        out.append({
            "vector": [to_source(sec.vector_field.component(i))
                       for i in range(sec.dimension)],
            "form": [to_source(sec.one_form_field.component(i))
                     for i in range(sec.dimension)],
        })
    return out


def _span_report_data(rep: _stretch.SpanResidualReport) -> dict:
    return {"max_residual": rep.max_residual, "tolerance": rep.tolerance,
            "worst_pair": list(rep.worst_pair), "worst_point": rep.worst_point,
            "passed": rep.passed}


# ---------------------------------------------------------------------------
# task executors


def _run_check_axioms(model: ModelFile, task: Task) -> TaskReport:
    sections = []
    for name in task.params["sections"]:
        obj = model.objects[name]
        if isinstance(obj, _stretch.FrameBundle):
            sections.extend(obj.sections)
        else:
            sections.append(obj)
    rep = _courant.check_axioms(model.chart, sections)
    data = {"residuals": dict(sorted(rep.residuals.items())),
            "tolerance": rep.tolerance, "n_sections": rep.n_sections,
            "n_points": rep.n_points, "passed": rep.passed}
    return TaskReport(task.name, task.kind, rep.passed, data, tuple(rep.lines()))


def _run_stretch(model: ModelFile, task: Task) -> TaskReport:
    d = model.objects[task.params["d"]]
    s = model.objects[task.params["s"]]
    res = _stretch.stretch_bundle(d, s, model.chart)
    data = {"lifted": res.lifted, "core_rank": res.core_rank, "rank": res.rank,
            "lift_angle": res.lift_angle, "smoothness": res.smoothness}
    text = [f"rank {res.rank}, core rank {res.core_rank}, "
            f"{'expression frame lifted' if res.lifted else 'pointwise bases only'}"]
    if res.lifted:
        data["frame"] = _frame_expressions(res.frame)
    else:
        text.append(f"neighbor-point smoothness angle {res.smoothness:.3e}")
    return TaskReport(task.name, task.kind, True, data, tuple(text))


def _run_check_involutive(model: ModelFile, task: Task) -> TaskReport:
    frame = model.objects[task.params["frame"]]
    rep = _stretch.check_involutive(frame, model.chart)
    expect = bool(task.params.get("expect_involutive", True))
    passed = rep.passed == expect
    data = _span_report_data(rep)
    data["expect_involutive"] = expect
    data["passed"] = passed
    return TaskReport(task.name, task.kind, passed, data,
                      (rep.line(), f"expected involutive: {expect}"))


def _run_decide_canonical(model: ModelFile, task: Task) -> TaskReport:
    d = model.objects[task.params["d"]]
    s = model.objects[task.params["s"]]
    rep = _stretch.decide_canonical(d, s, model.chart)
    expect_canonical = bool(task.params.get("expect_canonical", True))
    expect_closed_span = task.params.get("expect_closed_span")

    passed = rep.applicable and rep.canonical.certified is not None \
        and rep.canonical.certified == expect_canonical
    if expect_closed_span is not None and rep.closed_span_sufficient is not None:
        passed = passed and (rep.closed_span_sufficient.passed == bool(expect_closed_span))
    # chain consistency where measurable
    if rep.ds_involutive is not None and rep.condition_preserved is not None:
        if rep.ds_involutive.passed and not rep.condition_preserved.passed:
            passed = False

    data = {
        "applicable": rep.applicable,
        "hypothesis": {"constant_rank": rep.hypothesis_constant_rank,
                       "rank": rep.hypothesis_rank,
                       "holds": rep.hypothesis_holds},
        "verdicts": {
            "canonical": {"certified": rep.canonical.certified,
                          "route": rep.canonical.route},
            "stretch_is_involutive": {"certified": rep.stretch_is_involutive.certified,
                                      "route": rep.stretch_is_involutive.route},
            "stretch_preserved": {"certified": rep.stretch_preserved.certified,
                                  "route": rep.stretch_preserved.route},
        },
        "notes": list(rep.notes),
        "passed": passed,
    }
    for key, sub in (("d_involutive", rep.d_involutive),
                     ("s_involutive", rep.s_involutive),
                     ("frobenius", rep.hypothesis_frobenius),
                     ("condition_preserved", rep.condition_preserved),
                     ("ds_involutive", rep.ds_involutive),
                     ("closed_span_sufficient", rep.closed_span_sufficient)):
        if sub is not None:
            data[key] = _span_report_data(sub)
    return TaskReport(task.name, task.kind, passed, data, tuple(rep.lines()))


def _run_dirac_bracket(model: ModelFile, task: Task) -> TaskReport:
    pi = model.objects[task.params["bivector"]]
    phi = model.objects[task.params["constraints"]]
    chart = model.chart
    db = _constraints.dirac_bivector(pi, phi, chart)
    probes = _random_polynomials(chart, int(task.params.get("test_functions", 20)),
                                 model.seed + 101)
    casimir = _constraints.casimir_residual(db, probes, chart.sample_grid)
    data = {"constant_c": db.constant_c, "casimir_residual": casimir,
            "casimir_tolerance": CASIMIR_TOL,
            "matrix_at_first_point": db.at(chart.sample_grid[0]).tolist()}
    text = [f"constant constraint matrix: {db.constant_c}",
            f"casimir residual {casimir:.3e} (tol {CASIMIR_TOL:.1e})"]
    passed = casimir <= CASIMIR_TOL
    if db.tensor_field is not None:
        comps = {f"{i},{j}": to_source(e)
                 for (i, j), e in sorted(db.tensor_field.components.items())}
        jac = _constraints.dirac_jacobi_residual(db, chart.sample_grid)
        data["components"] = comps
        data["jacobi_residual"] = jac
        data["jacobi_tolerance"] = JACOBI_TOL
        passed = passed and jac <= JACOBI_TOL
        text.append(f"jacobi residual {jac:.3e} (tol {JACOBI_TOL:.1e})")
        text.extend(f"component {k} = {v}" for k, v in comps.items())
    data["passed"] = passed
    return TaskReport(task.name, task.kind, passed, data, tuple(text))


def _run_equiv_stretch(model: ModelFile, task: Task) -> TaskReport:
    pi = model.objects[task.params["bivector"]]
    phi = model.objects[task.params["constraints"]]
    rep = _constraints.equiv_stretch_check(pi, phi, model.chart)
    expect_graph = bool(task.params.get("expect_graph", True))
    passed = rep.passed if expect_graph else (not rep.all_graphs)
    data = {"max_angle": rep.max_angle, "tolerance": rep.tolerance,
            "all_graphs": rep.all_graphs,
            "non_graph_points": list(rep.non_graph_points),
            "expect_graph": expect_graph, "passed": passed,
            "notes": list(rep.notes)}
    return TaskReport(task.name, task.kind, passed, data, tuple(rep.lines()))


def _run_reduce(model: ModelFile, task: Task) -> TaskReport:
    pi = model.objects[task.params["bivector"]]
    data_obj = model.objects[task.params["reduction"]]
    res = _reduction.marsden_ratiu_reduce(pi, data_obj)
    passed = True
    data = {"quotient_coordinates": list(res.quotient_coords),
            "fiber_rank": res.f_rank,
            "fiber_discrepancy": res.fiber_discrepancy,
            "bivector_at_first_point": res.bivectors[0].tolist(),
            "n_points": int(res.points.shape[0]),
            "notes": list(res.notes)}
    text = [f"quotient on ({', '.join(res.quotient_coords)}), fiber rank {res.f_rank}",
            f"fiber discrepancy {res.fiber_discrepancy:.3e}"]
    expected = task.params.get("expect_bivector")
    if expected is not None:
        target = np.asarray(expected, dtype=float)
        err = float(np.max(np.abs(res.bivectors - target[None, :, :])))
        data["expected_bivector_error"] = err
        passed = err <= 1e-9
        text.append(f"match against expected bivector: {err:.3e}")
    data["passed"] = passed
    return TaskReport(task.name, task.kind, passed, data, tuple(text))


def _run_coupling(model: ModelFile, task: Task) -> TaskReport:
    raw = model.objects[task.params["coupling"]]
    chart = model.chart
    data_obj, load_rep = _reduction.validate_coupling(raw, chart)
    res_a = _reduction.coupling_build_a(data_obj, chart)
    res_b = _reduction.coupling_build_b(data_obj, chart)
    agreement = _reduction.coupling_agreement(res_a, res_b)
    cond = _reduction.coupling_conditions(data_obj, chart)

    expect = task.params.get("expect", {})
    expected = {
        "i": bool(expect.get("i", True)),
        "ii": bool(expect.get("ii", True)),
        "iii": bool(expect.get("iii", True)),
        "iii_prime": bool(expect.get("iii_prime", True)),
        "iv": bool(expect.get("iv", True)),
    }
    measured = {
        "i": cond.vertical_bivector_closed.passed,
        "ii": cond.horizontally_closed.passed,
        "iii": cond.vertical_invariance.passed,
        "iii_prime": cond.image_invariance.passed,
        "iv": cond.horizontal_invariance.passed,
    }
    matrix_ok = measured == expected
    passed = agreement <= AGREEMENT_TOL and cond.iii_implies_iii_prime_consistent and matrix_ok

    ds_inv = None
    if cond.derived["construction_a_dirac"] and res_a.frame is not None:
        ds_inv = _stretch.check_involutive(res_a.frame, chart, "coupled stretch involutive")
        passed = passed and ds_inv.passed

    data = {
        "agreement_angle": agreement,
        "agreement_tolerance": AGREEMENT_TOL,
        "load": {"omega_vertical_residual": load_rep.omega_vertical_residual,
                 "pi_v_horizontal_residual": load_rep.pi_v_horizontal_residual,
                 "projected": load_rep.projected},
        "conditions": {k: {"residual": getattr(cond, a).residual,
                           "passed": getattr(cond, a).passed}
                       for k, a in (("i", "vertical_bivector_closed"),
                                    ("ii", "horizontally_closed"),
                                    ("iii", "vertical_invariance"),
                                    ("iii_prime", "image_invariance"),
                                    ("iv", "horizontal_invariance"))},
        "projectable_frame_residual": cond.projectable_frame.residual,
        "expected": expected,
        "measured": measured,
        "derived": dict(sorted(cond.derived.items())),
        "passed": passed,
    }
    if ds_inv is not None:
        data["stretch_involutive"] = _span_report_data(ds_inv)
    text = [f"constructions agree within {agreement:.3e}"] + cond.lines()
    if ds_inv is not None:
        text.append(ds_inv.line())
    return TaskReport(task.name, task.kind, passed, data, tuple(text))


_EXECUTORS = {
    "check-axioms": _run_check_axioms,
    "stretch": _run_stretch,
    "check-involutive": _run_check_involutive,
    "decide-canonical": _run_decide_canonical,
    "dirac-bracket": _run_dirac_bracket,
    "equiv-stretch": _run_equiv_stretch,
    "reduce": _run_reduce,
    "coupling": _run_coupling,
}


def run_model(model: ModelFile) -> RunReport:
    """Execute all tasks in order; library errors propagate to the caller."""
    reports = []
    for task in model.tasks:
        try:
            reports.append(_EXECUTORS[task.kind](model, task))
        except (PreconditionError, NumericalError, ModelError) as err:
            code = (EXIT_PARSE if isinstance(err, ModelError)
                    else EXIT_PRECONDITION if isinstance(err, PreconditionError)
                    else EXIT_NUMERICAL)
            raise TaskError(code, f"task '{task.name}' ({task.kind}): {err}") from err
    tol = model.chart.tolerances
    return RunReport(
        model=Path(model.path).name,
        seed=model.seed,
        dimension=model.chart.dimension,
        grid_points=int(model.chart.sample_grid.shape[0]),
        tolerances={"rank_tolerance": tol.rank_tolerance,
                    "bracket_residual": tol.bracket_residual},
        tasks=tuple(reports),
    )


def _parse_tol(pairs: list[str]) -> dict[str, float]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ModelError(f"--tol expects KEY=VALUE, got '{pair}'")
        key, _, value = pair.partition("=")
        out[key.strip()] = float(value)
    return out


def run(model_path: str, out_dir: str | None = None, seed: int | None = None,
        grid: int | None = None, tols: dict[str, float] | None = None,
        emit_json: bool = False, stream=None) -> int:
    """Load a model, run it, write reports. Returns the process exit code."""
    stream = stream if stream is not None else sys.stdout
    try:
        model = load_model(model_path, seed_override=seed, grid_override=grid,
                           tol_overrides=tols)
    except ModelError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except PreconditionError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PRECONDITION

    try:
        report = run_model(model)
    except TaskError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code

    if emit_json:
        stream.write(report.to_json())
    else:
        stream.write(report.to_text())

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(model_path).stem
        (out / f"{stem}.summary.json").write_text(report.to_json())
        (out / f"{stem}.summary.txt").write_text(report.to_text())
        for i, t in enumerate(report.tasks):
            sub = RunReport(report.model, report.seed, report.dimension,
                            report.grid_points, report.tolerances, (t,))
            (out / f"{stem}.task{i}.{t.kind}.json").write_text(
                _task_json(t))
    return EXIT_PASS if report.all_passed else EXIT_FAIL


def _task_json(t: TaskReport) -> str:
    import json
    return json.dumps(t.tree(), sort_keys=True, indent=2) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="diracstretch",
        description="Verify stretching constructions on Dirac structures "
                    "declared in a model file.")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run the tasks of a model file")
    runp.add_argument("model", help="path to the model file")
    runp.add_argument("--seed", type=int, default=None,
                      help="override the probe/grid seed")
    runp.add_argument("--grid", type=int, default=None,
                      help="override the grid density")
    runp.add_argument("--tol", action="append", default=[],
                      metavar="KEY=VALUE", help="override a tolerance")
    runp.add_argument("--out", default=None, metavar="DIR",
                      help="directory for report files")
    runp.add_argument("--json", action="store_true",
                      help="print the machine-readable report to stdout")
    args = parser.parse_args(argv)
    try:
        tols = _parse_tol(args.tol)
    except (ModelError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    return run(args.model, out_dir=args.out, seed=args.seed, grid=args.grid,
               tols=tols, emit_json=args.json)


if __name__ == "__main__":
    sys.exit(main())
