"""Declarative model files.

A model file is TOML: a [chart] table, an optional [h_field] table, named
geometric objects under [objects.*], and an ordered task list under
[[tasks]]. All expressions are quoted strings parsed against the chart's
coordinates at load time; objects may reference earlier objects by name.
The grammar is documented in the README next to the expression grammar.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chart import ChartModel, Tolerances, build_chart
from .constraints import ConstraintSet
from .courant import Section
from .errors import ModelError
from .expressions import ScalarExpr, parse
from .fields import (TensorField, one_form_field, scalar_field, vector_field,
                     zero_field)
from .reduction import CouplingData, ReductionData
from .stretch import (FrameBundle, frame_from_covectors, frame_from_vectors,
                      graph_frame_of_bivector, graph_frame_of_two_form)

TASK_KINDS = ("check-axioms", "stretch", "check-involutive", "decide-canonical",
              "dirac-bracket", "equiv-stretch", "reduce", "coupling")

ANTISYM_KINDS = {"two_form": 2, "bivector": 2, "three_form": 3}


class ModelParseError(ModelError):
    def __init__(self, message: str, where: str):
        self.where = where
        super().__init__(f"{message} (in {where})")


@dataclass(frozen=True)
class Task:
    kind: str
    name: str
    params: dict[str, Any]


@dataclass(frozen=True)
class ModelFile:
    path: str
    chart: ChartModel
    objects: dict[str, Any]
    tasks: tuple[Task, ...]
    seed: int


def _expr(source: Any, chart: ChartModel, where: str) -> ScalarExpr:
    if not isinstance(source, str):
        raise ModelParseError(f"expected a quoted expression, got {source!r}", where)
    try:
        return parse(source, chart)
    except ModelError as err:
        raise ModelParseError(f"bad expression '{source}': {err}", where) from err


def _expr_list(sources: Any, chart: ChartModel, where: str) -> list[ScalarExpr]:
    if not isinstance(sources, list):
        raise ModelParseError("expected a list of expressions", where)
    return [_expr(s, chart, f"{where}[{i}]") for i, s in enumerate(sources)]


def _component_table(table: Any, kind: str, chart: ChartModel, where: str) -> TensorField:
    if table is None:
        return zero_field(kind, chart.dimension)
    if not isinstance(table, dict):
        raise ModelParseError("components must be a table of 'i,j' = \"expr\"", where)
    degree = ANTISYM_KINDS[kind]
    comps = {}
    for key, val in table.items():
        try:
            idx = tuple(int(part.strip()) for part in str(key).split(","))
        except ValueError:
            raise ModelParseError(f"bad component index '{key}'", where) from None
        if len(idx) != degree:
            raise ModelParseError(f"component index '{key}' must have {degree} entries", where)
        comps[idx] = _expr(val, chart, f"{where}[{key}]")
    try:
        return TensorField(kind, chart.dimension, comps)
    except ModelError as err:
        raise ModelParseError(str(err), where) from err


def _vector(components: Any, chart: ChartModel, where: str) -> TensorField:
    exprs = _expr_list(components, chart, where)
    if len(exprs) != chart.dimension:
        raise ModelParseError(
            f"vector needs {chart.dimension} components, got {len(exprs)}", where)
    return vector_field(exprs)


def _one_form(components: Any, chart: ChartModel, where: str) -> TensorField:
    exprs = _expr_list(components, chart, where)
    if len(exprs) != chart.dimension:
        raise ModelParseError(
            f"one-form needs {chart.dimension} components, got {len(exprs)}", where)
    return one_form_field(exprs)


def _section(table: Any, chart: ChartModel, where: str) -> Section:
    if not isinstance(table, dict) or "vector" not in table or "form" not in table:
        raise ModelParseError("a section needs 'vector' and 'form' lists", where)
    return Section(_vector(table["vector"], chart, f"{where}.vector"),
                   _one_form(table["form"], chart, f"{where}.form"))


def _lookup(objects: dict, name: Any, expected: type, where: str):
    if not isinstance(name, str) or name not in objects:
        raise ModelParseError(f"unknown object reference '{name}'", where)
    obj = objects[name]
    if not isinstance(obj, expected):
        raise ModelParseError(
            f"object '{name}' is a {type(obj).__name__}, expected {expected.__name__}", where)
    return obj


def _build_object(name: str, table: dict, chart: ChartModel, objects: dict, where: str):
    kind = table.get("kind")
    if kind == "scalar":
        return scalar_field(_expr(table.get("expr"), chart, where), chart.dimension)
    if kind == "vector":
        return _vector(table.get("components"), chart, where)
    if kind == "one_form":
        return _one_form(table.get("components"), chart, where)
    if kind in ANTISYM_KINDS:
        return _component_table(table.get("components"), kind, chart, where)
    if kind == "section":
        return _section(table, chart, where)
    if kind == "constraints":
        functions = _expr_list(table.get("functions"), chart, f"{where}.functions")
        level = table.get("level", [0.0] * len(functions))
        if not isinstance(level, list) or len(level) != len(functions):
            raise ModelParseError("level must list one value per constraint", where)
        return ConstraintSet(tuple(functions), tuple(float(v) for v in level))
    if kind == "frame":
        return _build_frame(table, chart, objects, where)
    if kind == "reduction":
        constraints = _lookup(objects, table.get("constraints"), ConstraintSet,
                              f"{where}.constraints")
        b_frame = [_vector(v, chart, f"{where}.b_frame[{i}]")
                   for i, v in enumerate(table.get("b_frame", []))]
        quotient = table.get("quotient_coordinates")
        if not isinstance(quotient, list):
            raise ModelParseError("reduction needs quotient_coordinates", where)
        return ReductionData(chart, constraints, tuple(b_frame), tuple(quotient))
    if kind == "coupling":
        hor = [_vector(v, chart, f"{where}.hor_frame[{i}]")
               for i, v in enumerate(table.get("hor_frame", []))]
        vert = [_vector(v, chart, f"{where}.vert_frame[{i}]")
                for i, v in enumerate(table.get("vert_frame", []))]
        if not hor or not vert:
            raise ModelParseError("coupling needs hor_frame and vert_frame", where)
        omega = _component_table(table.get("omega"), "two_form", chart, f"{where}.omega")
        pi_v = _component_table(table.get("pi_v"), "bivector", chart, f"{where}.pi_v")
        return CouplingData(tuple(hor), tuple(vert), omega, pi_v)
    raise ModelParseError(f"unknown object kind '{kind}'", where)


def _build_frame(table: dict, chart: ChartModel, objects: dict, where: str) -> FrameBundle:
    declared = table.get("declared_rank")
    if "graph_of_bivector" in table:
        pi = _lookup(objects, table["graph_of_bivector"], TensorField, where)
        if pi.kind != "bivector":
            raise ModelParseError("graph_of_bivector must name a bivector", where)
        return graph_frame_of_bivector(pi)
    if "graph_of_two_form" in table:
        w = _lookup(objects, table["graph_of_two_form"], TensorField, where)
        if w.kind != "two_form":
            raise ModelParseError("graph_of_two_form must name a two_form", where)
        return graph_frame_of_two_form(w)
    if "annihilator_of_constraints" in table:
        phi = _lookup(objects, table["annihilator_of_constraints"], ConstraintSet, where)
        from .expressions import diff
        forms = []
        for c in phi.constraints:
            forms.append(one_form_field([diff(c, i) for i in range(chart.dimension)]))
        return frame_from_covectors(forms, declared if declared is not None else len(forms))
    if "vectors" in table:
        vecs = [_vector(v, chart, f"{where}.vectors[{i}]")
                for i, v in enumerate(table["vectors"])]
        return frame_from_vectors(vecs, declared if declared is not None else len(vecs))
    if "covectors" in table:
        forms = [_one_form(v, chart, f"{where}.covectors[{i}]")
                 for i, v in enumerate(table["covectors"])]
        return frame_from_covectors(forms, declared if declared is not None else len(forms))
    if "sections" in table:
        secs = [_section(s, chart, f"{where}.sections[{i}]")
                for i, s in enumerate(table["sections"])]
        return FrameBundle(tuple(secs), declared if declared is not None else len(secs))
    raise ModelParseError(
        "frame needs sections, vectors, covectors, graph_of_bivector, "
        "graph_of_two_form or annihilator_of_constraints", where)


def load_model(path: str | Path, seed_override: int | None = None,
               grid_override: int | None = None,
               tol_overrides: dict[str, float] | None = None) -> ModelFile:
    """Load and validate a model file; all names resolved, all expressions
    parsed, the chart grid generated."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ModelError(f"model file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ModelParseError(str(err), str(path)) from err

    chart_tab = raw.get("chart")
    if not isinstance(chart_tab, dict):
        raise ModelParseError("missing [chart] table", str(path))
    try:
        dimension = int(chart_tab["dimension"])
        coordinates = list(chart_tab["coordinates"])
    except KeyError as err:
        raise ModelParseError(f"chart is missing {err}", "chart") from None
    box = chart_tab.get("box")
    seed = int(chart_tab.get("seed", 0)) if seed_override is None else int(seed_override)
    grid_size = chart_tab.get("grid_size")
    if grid_override is not None:
        grid_size = grid_override
    tol_tab = dict(chart_tab.get("tolerances", {}))
    if tol_overrides:
        tol_tab.update(tol_overrides)
    unknown_tols = set(tol_tab) - {"rank_tolerance", "bracket_residual"}
    if unknown_tols:
        raise ModelParseError(f"unknown tolerance keys {sorted(unknown_tols)}", "chart.tolerances")
    tolerances = Tolerances(**{k: float(v) for k, v in tol_tab.items()})

    # the h-field needs the coordinate names before the chart exists
    names_only = tuple(coordinates)
    h_tab = raw.get("h_field")
    h_field = None
    if h_tab is not None:
        comps = {}
        for key, val in h_tab.items():
            idx = tuple(int(p.strip()) for p in str(key).split(","))
            try:
                comps[idx] = parse(val, names_only)
            except ModelError as err:
                raise ModelParseError(f"bad expression '{val}': {err}", f"h_field[{key}]") from err
        h_field = TensorField("three_form", dimension, comps)

    require_closed = bool(chart_tab.get("require_closed_h", True))
    try:
        chart = build_chart(dimension, coordinates, box=box,
                            grid_size=grid_size if grid_size is None else int(grid_size),
                            seed=seed, h_field=h_field, tolerances=tolerances,
                            require_closed_h=require_closed)
    except ModelError:
        raise
    except Exception as err:
        raise ModelParseError(str(err), "chart") from err

    objects: dict[str, Any] = {}
    for name, table in raw.get("objects", {}).items():
        if not isinstance(table, dict):
            raise ModelParseError("object definitions must be tables", f"objects.{name}")
        objects[name] = _build_object(name, table, chart, objects, f"objects.{name}")

    tasks = []
    for i, ttab in enumerate(raw.get("tasks", [])):
        if not isinstance(ttab, dict):
            raise ModelParseError("tasks must be tables", f"tasks[{i}]")
        kind = ttab.get("kind")
        if kind not in TASK_KINDS:
            raise ModelParseError(f"unknown task kind '{kind}'", f"tasks[{i}]")
        name = str(ttab.get("name", f"task{i}_{kind}"))
        params = {k: v for k, v in ttab.items() if k not in ("kind", "name")}
        _validate_task_refs(kind, params, objects, f"tasks[{i}]")
        tasks.append(Task(kind, name, params))

    return ModelFile(str(path), chart, objects, tuple(tasks), seed)


_TASK_REFS = {
    "check-axioms": (("sections", (Section, FrameBundle), "list"),),
    "stretch": (("d", FrameBundle, "one"), ("s", FrameBundle, "one")),
    "check-involutive": (("frame", FrameBundle, "one"),),
    "decide-canonical": (("d", FrameBundle, "one"), ("s", FrameBundle, "one")),
    "dirac-bracket": (("bivector", TensorField, "one"), ("constraints", ConstraintSet, "one")),
    "equiv-stretch": (("bivector", TensorField, "one"), ("constraints", ConstraintSet, "one")),
    "reduce": (("bivector", TensorField, "one"), ("reduction", ReductionData, "one")),
    "coupling": (("coupling", CouplingData, "one"),),
}


def _validate_task_refs(kind: str, params: dict, objects: dict, where: str):
    for key, expected, mode in _TASK_REFS[kind]:
        if key not in params:
            raise ModelParseError(f"task '{kind}' needs '{key}'", where)
        refs = params[key] if mode == "list" else [params[key]]
        if not isinstance(refs, list):
            raise ModelParseError(f"'{key}' must be a list of object names", where)
        for ref in refs:
            if not isinstance(ref, str) or ref not in objects:
                raise ModelParseError(f"unknown object reference '{ref}'", where)
            if not isinstance(objects[ref], expected):
                raise ModelParseError(
                    f"object '{ref}' has the wrong type for '{key}'", where)
