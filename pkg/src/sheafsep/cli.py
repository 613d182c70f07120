"""Model files and the command-line surface.

Model files are JSON with an explicit schema_version.  Heap literals use
null for the unallocated value ({"x": 0, "y": null}, with bare
identifiers also accepted on the command line), and stage literals are
brace-wrapped location lists ("{x,y}").

JSON reports contain no wall-clock data, so identical inputs produce
byte-identical output; text mode appends timing as an extra line.
Exit codes: 0 all checks pass / formula satisfied, 1 otherwise, 2 on
usage or model errors.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

from .day import check_day_stability, check_monoid_laws
from .errors import ModelSchemaError, SheafSepError
from .fincat import validate_category, validate_monoidal
from .pred import (
    direct_image,
    implication,
    meet,
    random_closed_predicate,
    reindex_preimage,
)
from .presheaf import Heap, amalgamation_operator, build_resource_sheaf, check_sheaf
from .psl import ProbSpace, PslModel, RandomVariable, psl_sat
from .seplogic import (
    DistAtom,
    ResourceModel,
    eval_formula,
    formula_atoms,
    make_memory_model,
    parse_formula,
    sat,
)
from .site import validate_coverage

SCHEMA_VERSION = 1
POWERSET_LOCATION_BOUND = 4


# -- model loading -------------------------------------------------------------


def _require(cond, path, message):
    if not cond:
        raise ModelSchemaError(path, message)


def _load_memory_model(doc, name) -> ResourceModel:
    locations = doc.get("locations")
    _require(isinstance(locations, list) and locations, "locations", "nonempty list required")
    _require(all(isinstance(x, str) for x in locations), "locations", "location names must be strings")
    _require(
        len(locations) <= POWERSET_LOCATION_BOUND,
        "locations",
        f"bound exceeded: {len(locations)} > {POWERSET_LOCATION_BOUND}",
    )
    values = doc.get("values")
    _require(isinstance(values, list) and values, "values", "nonempty list required")
    _require(all(isinstance(v, int) for v in values), "values", "values must be integers")
    sheaf_kind = doc.get("sheaf", "partial-memory")
    _require(
        sheaf_kind in ("partial-memory", "strict-memory", "support-bounded"),
        "sheaf",
        f"unknown sheaf kind {sheaf_kind!r}",
    )
    coverage = doc.get("coverage", "downward-closed")
    _require(
        coverage in ("downward-closed", "finite-covers"),
        "coverage",
        f"unknown coverage kind {coverage!r}",
    )
    monoid = doc.get("monoid")
    _require(
        monoid in (None, "total", "weak-partial", "strong-partial"),
        "monoid",
        f"unknown monoid variant {monoid!r}",
    )
    if monoid is not None and sheaf_kind != "partial-memory":
        raise ModelSchemaError("monoid", "a partial monoid requires the partial-memory sheaf")
    support_bound = doc.get("support_bound")
    if sheaf_kind == "support-bounded":
        _require(isinstance(support_bound, int), "support_bound", "integer required")
    model = make_memory_model(
        locations,
        values,
        sheaf_kind=sheaf_kind,
        monoid_variant=monoid,
        coverage_kind=coverage,
        support_bound=support_bound,
        name=name,
    )
    rep = validate_coverage(model.site.cat, model.site.cov)
    if not rep.ok:
        raise ModelSchemaError("coverage", f"internal validation failed: {rep.summary()}")
    model.formulas = _load_formulas(doc, model.check_formula)
    return model


def _parse_fraction_field(value, path):
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ModelSchemaError(path, f"bad rational {value!r}") from exc
    raise ModelSchemaError(path, "rationals must be strings like '1/2' or integers")


def _load_psl_model(doc, name) -> PslModel:
    spaces_doc = doc.get("spaces")
    _require(isinstance(spaces_doc, dict) and spaces_doc, "spaces", "nonempty object required")
    spaces = {}
    for sp_name, sp_doc in spaces_doc.items():
        path = f"spaces.{sp_name}"
        _require(isinstance(sp_doc, dict), path, "object required")
        size = sp_doc.get("size")
        _require(isinstance(size, int) and size >= 1, f"{path}.size", "positive integer required")
        blocks = sp_doc.get("blocks")
        _require(isinstance(blocks, list) and blocks, f"{path}.blocks", "nonempty list required")
        measure = sp_doc.get("measure")
        _require(
            isinstance(measure, list) and len(measure) == len(blocks),
            f"{path}.measure",
            "one rational per block required",
        )
        fractions = [
            _parse_fraction_field(m, f"{path}.measure[{i}]") for i, m in enumerate(measure)
        ]
        try:
            spaces[sp_name] = ProbSpace.of(size, [tuple(b) for b in blocks], fractions)
        except ValueError as exc:
            raise ModelSchemaError(path, str(exc)) from exc
    variables = {}
    for var_name, vals in (doc.get("variables") or {}).items():
        path = f"variables.{var_name}"
        _require(
            isinstance(vals, list) and all(isinstance(v, int) for v in vals),
            path,
            "list of integers required",
        )
        variables[var_name] = RandomVariable(tuple(vals))
    model = PslModel(spaces, variables, {}, name=name)
    model.formulas = _load_formulas(doc, None)
    return model


def _load_formulas(doc, checker):
    formulas = {}
    for fname, text in (doc.get("formulas") or {}).items():
        _require(isinstance(text, str), f"formulas.{fname}", "formula text required")
        try:
            phi = parse_formula(text)
        except SheafSepError as exc:
            raise ModelSchemaError(f"formulas.{fname}", str(exc)) from exc
        if checker is not None:
            checker(phi)
        formulas[fname] = phi
    return formulas


def load_model(path):
    """Parse and validate a model file into a ResourceModel or PslModel."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelSchemaError("<file>", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ModelSchemaError("<file>", f"invalid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "<root>", "object required")
    _require(
        doc.get("schema_version") == SCHEMA_VERSION,
        "schema_version",
        f"expected {SCHEMA_VERSION}",
    )
    kind = doc.get("kind")
    if kind == "memory":
        return _load_memory_model(doc, name=str(path))
    if kind == "psl":
        return _load_psl_model(doc, name=str(path))
    raise ModelSchemaError("kind", f"expected 'memory' or 'psl', got {kind!r}")


# -- literals -------------------------------------------------------------------


def parse_stage(text, model: ResourceModel):
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise ModelSchemaError("--stage", f"expected a brace literal, got {text!r}")
    body = text[1:-1].strip()
    locs = tuple(sorted(x.strip() for x in body.split(",") if x.strip()))
    for x in locs:
        if x not in model.locations:
            raise ModelSchemaError("--stage", f"unknown location {x!r}")
    return locs


def parse_heap(text, stage) -> Heap:
    """Accepts {"x": 0} JSON or the bare-identifier form {x:0, y:null}."""
    text = text.strip()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        if not (text.startswith("{") and text.endswith("}")):
            raise ModelSchemaError("--heap", f"expected a brace literal, got {text!r}")
        doc = {}
        body = text[1:-1].strip()
        if body:
            for chunk in body.split(","):
                if ":" not in chunk:
                    raise ModelSchemaError("--heap", f"bad cell {chunk.strip()!r}")
                key, val = chunk.split(":", 1)
                val = val.strip()
                doc[key.strip()] = None if val == "null" else int(val)
    if set(doc) != set(stage):
        raise ModelSchemaError(
            "--heap", f"heap domain {sorted(doc)!r} must equal the stage {sorted(stage)!r}"
        )
    return Heap.of(stage, doc)


# -- reports ---------------------------------------------------------------------


@dataclass
class CommandReport:
    command: str
    model: str
    status: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)
    exit_code: int = 0
    seconds: float = 0.0

    def as_dict(self):
        return {
            "command": self.command,
            "model": self.model,
            "status": self.status,
            "witnesses": self.witnesses,
            "exit_code": self.exit_code,
        }

    def render_text(self):
        lines = [f"command: {self.command}", f"model: {self.model}"]
        for key, value in self.status.items():
            if isinstance(value, (list, dict)):
                value = json.dumps(value, sort_keys=True)
            lines.append(f"{key}: {value}")
        for w in self.witnesses:
            lines.append(f"witness: {json.dumps(w, sort_keys=True)}")
        lines.append(f"exit: {self.exit_code}")
        lines.append(f"elapsed: {self.seconds:.3f}s")
        return "\n".join(lines)


def _heap_json(h: Heap):
    return {x: v for x, v in zip(h.locations, h.values)}


def _family_table(pred):
    cat = pred.site.cat
    rows = []
    for p in cat.mors_into(pred.stage):
        rows.append(
            {
                "at": list(cat.src(p)),
                "members": [
                    _heap_json(s) if isinstance(s, Heap) else str(s)
                    for s in sorted(pred.family[p], key=lambda e: str(e))
                ],
            }
        )
    return rows


# -- commands ---------------------------------------------------------------------


def _cmd_check_site(model, args, report):
    site = model.site
    checks = {
        "category": validate_category(site.cat),
        "monoidal": validate_monoidal(site.cat, site.monoidal),
        "coverage": validate_coverage(site.cat, site.cov),
    }
    for key, rep in checks.items():
        report.status[key] = "ok" if rep.ok else "FAIL"
        report.witnesses += [
            {"check": key, "kind": v.kind, "detail": v.detail} for v in rep.violations
        ]
    report.exit_code = 0 if all(r.ok for r in checks.values()) else 1


def _cmd_check_sheaf(model, args, report):
    rep = check_sheaf(model.sheaf, model.site.cov)
    report.status["sheaf"] = "ok" if rep.ok else "FAIL"
    report.status["detail"] = rep.notes[0] if rep.notes else ""
    report.witnesses += [{"kind": v.kind, "detail": v.detail} for v in rep.violations]
    report.exit_code = 0 if rep.ok else 1


def _cmd_laws(model, args, report):
    rng = random.Random(args.seed)
    site, mp = model.site, model.sheaf
    stage = model.stage
    failures = []

    n = 0
    for _ in range(args.samples):
        p = random_closed_predicate(rng, mp, site, stage)
        q = random_closed_predicate(rng, mp, site, stage)
        r = random_closed_predicate(rng, mp, site, stage)
        if meet(p, q).issubset(r) != p.issubset(implication(q, r)):
            failures.append({"law": "residuation", "detail": "galois failure"})
        n += 1
    report.status["residuation"] = f"ok ({n} samples)" if not any(
        f["law"] == "residuation" for f in failures
    ) else "FAIL"

    if model.monoid is not None:
        rep = check_monoid_laws(model.monoid, site.monoidal)
        report.status["monoid-laws"] = "ok" if rep.ok else "FAIL"
        failures += [
            {"law": "monoid", "detail": v.detail} for v in rep.violations
        ]
    else:
        report.status["monoid-laws"] = "skipped (no monoid)"

    m_strict = build_resource_sheaf(site.cat, "strict-memory", values=model.values)
    inclusion = {a: {h: h for h in m_strict.at(a)} for a in site.cat.objects}
    rep = check_day_stability(site, [m_strict, mp], inclusions=[("M>->Mp", inclusion, m_strict)])
    report.status["day-stability"] = "ok" if rep.ok else "FAIL"
    failures += [{"law": "day-stability", "detail": v.detail} for v in rep.violations]

    if model.monoid is not None:
        from .seplogic import _pipeline_pieces

        decomp, mult_mor, amalg_mor = _pipeline_pieces(model)
        match = mult_mor.target
        ok_adj = True
        for alpha, source in ((mult_mor, decomp), (amalg_mor, match)):
            for _ in range(args.samples):
                p = random_closed_predicate(rng, source, site, stage)
                q = random_closed_predicate(rng, alpha.target, site, stage)
                lhs = direct_image(alpha, p).issubset(q)
                rhs = p.issubset(reindex_preimage(alpha, q))
                if lhs != rhs:
                    ok_adj = False
                    failures.append(
                        {"law": "adjunction", "detail": f"galois failure for {alpha.name}"}
                    )
        report.status["adjunction"] = "ok" if ok_adj else "FAIL"
    else:
        report.status["adjunction"] = "skipped (no monoid)"

    iso = amalgamation_operator(mp, site.cov)
    report.status["amalgamation-iso"] = "ok" if iso.report.ok else "FAIL"
    failures += [
        {"law": "amalgamation-iso", "detail": v.detail} for v in iso.report.violations
    ]

    report.witnesses += failures
    report.exit_code = 0 if not failures else 1


def _cmd_eval(model, args, report):
    phi = _formula_from_args(model, args)
    stage = parse_stage(args.stage, model) if args.stage else model.stage
    pred = eval_formula(model, phi, stage, mode=args.mode)
    report.status["formula"] = args.formula or args.name
    report.status["stage"] = "{" + ",".join(stage) + "}"
    report.status["family"] = _family_table(pred)
    report.exit_code = 0


def _cmd_sat(model, args, report):
    phi = _formula_from_args(model, args)
    stage = parse_stage(args.stage, model) if args.stage else model.stage
    heap = parse_heap(args.heap, stage)
    res = sat(model, phi, stage, heap, mode=args.mode)
    report.status["result"] = res.result
    report.status["stage"] = "{" + ",".join(stage) + "}"
    report.status["element"] = _heap_json(heap)
    if res.witness is not None:
        report.witnesses.append(res.witness)
    report.exit_code = 0 if res.result else 1


def _cmd_psl(model, args, report):
    phi = _formula_from_args(model, args)
    if not args.space:
        raise ModelSchemaError("--space", "a named space is required")
    sp = model.space(args.space)
    variables = model.variables_for(sp)
    for atom in formula_atoms(phi):
        if not isinstance(atom, DistAtom):
            raise ModelSchemaError("--formula", "psl formulas use distribution atoms only")
    res = psl_sat(sp, phi, variables, bound=model.bound)
    report.status["result"] = res.result
    report.status["space"] = args.space
    if res.witness is not None:
        report.witnesses.append(res.witness)
    report.exit_code = 0 if res.result else 1


def _formula_from_args(model, args):
    if args.formula:
        phi = parse_formula(args.formula)
        if isinstance(model, ResourceModel):
            model.check_formula(phi)
        return phi
    if args.name:
        formulas = getattr(model, "formulas", {})
        if args.name not in formulas:
            raise ModelSchemaError("--name", f"model has no formula named {args.name!r}")
        return formulas[args.name]
    raise ModelSchemaError("--formula", "a formula (or --name) is required")


_COMMANDS = {
    "check-site": (_cmd_check_site, ResourceModel),
    "check-sheaf": (_cmd_check_sheaf, ResourceModel),
    "laws": (_cmd_laws, ResourceModel),
    "eval": (_cmd_eval, ResourceModel),
    "sat": (_cmd_sat, ResourceModel),
    "psl": (_cmd_psl, PslModel),
}


def run_command(command, args) -> CommandReport:
    """Execute one CLI command against a loaded model; never raises for
    check failures (encoded in the exit code), only for usage errors."""
    report = CommandReport(command=command, model=args.model)
    model = load_model(args.model)
    handler, model_type = _COMMANDS[command]
    if not isinstance(model, model_type):
        raise ModelSchemaError(
            "kind", f"command {command!r} needs a {model_type.__name__} model"
        )
    started = time.perf_counter()
    handler(model, args, report)
    report.seconds = time.perf_counter() - started
    return report


def build_arg_parser():
    parser = argparse.ArgumentParser(
        prog="sheafsep",
        description="separation-logic model checking over finite sites",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--model", required=True, help="path to a model JSON file")
        p.add_argument("--formula", help="formula text")
        p.add_argument("--name", help="named formula from the model file")
        p.add_argument("--stage", help="stage literal like '{x,y}'")
        p.add_argument("--heap", help="heap literal like '{x:0, y:null}'")
        p.add_argument("--space", help="named probability space")
        p.add_argument("--mode", choices=["pipeline", "unfolded"], default="unfolded")
        p.add_argument("--seed", type=int, default=2024)
        p.add_argument("--samples", type=int, default=50)
        p.add_argument("--json", action="store_true", dest="as_json")
    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        report = run_command(args.command, args)
    except SheafSepError as exc:
        error = {"error": type(exc).__name__, "detail": str(exc)}
        if args.as_json:
            print(json.dumps(error))
        else:
            print(f"error: {error['detail']}", file=sys.stderr)
        return 2
    if args.as_json:
        print(json.dumps(report.as_dict()))
    else:
        print(report.render_text())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
