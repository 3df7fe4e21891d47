"""Domain types for problems and benchmark files.

Every symbol the pipeline manipulates lives here: linear conditions, algebraic
cores with preset solutions, narrative layers, atomic and compound problems,
and the one-JSON-object-per-line benchmark file format (``.evolmath.jsonl``).

Variable ids are abstract tokens ("v1", "u2", ...); human-readable entity
names exist only in the narrative layer. That split keeps the algebra exact
and lets language operators touch text without ever touching ground truth.
"""

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .algebra import RationalMatrix, rank

FORMAT_NAME = "evolmath-benchmark"

# Condition relations. Core truths are exact; pseudo/misleading conditions hedge.
EQUAL = "eq"
APPROX = "approx"
SIMILAR = "similar"
RELATIONS = (EQUAL, APPROX, SIMILAR)

# Condition tags.
TAG_CORE = "core"
TAG_SHORTCUT = "shortcut_pseudo"
TAG_USELESS = "useless_noise"
TAG_MISLEADING_MATH = "misleading_math"
TAGS = (TAG_CORE, TAG_SHORTCUT, TAG_USELESS, TAG_MISLEADING_MATH)


class ValidationError(ValueError):
    """Raised when an item violates a structural invariant."""


_VAR_RE = re.compile(r"^([A-Za-z_]+)(\d*)$")


def variable_sort_key(var: str):
    """Natural ordering for variable ids: v2 before v10."""
    m = _VAR_RE.match(var)
    if not m:
        return (var, -1)
    prefix, digits = m.groups()
    return (prefix, int(digits) if digits else -1)


@dataclass(frozen=True)
class LinearCondition:
    """One linear statement over variables: sum(coef * var) REL rhs."""

    terms: dict  # variable id -> nonzero int coefficient
    relation: str
    rhs: int
    tag: str

    def variables(self) -> set:
        return set(self.terms)

    def lhs_value(self, solution: dict) -> int:
        """Exact value of the left side under a full assignment."""
        return sum(c * solution[v] for v, c in self.terms.items())

    def structural_errors(self) -> list:
        errs = []
        if not self.terms:
            errs.append("condition has no terms")
        if any(c == 0 for c in self.terms.values()):
            errs.append("condition has a zero coefficient")
        if self.relation not in RELATIONS:
            errs.append(f"unknown relation {self.relation!r}")
        if self.tag not in TAGS:
            errs.append(f"unknown tag {self.tag!r}")
        if self.tag == TAG_CORE and self.relation != EQUAL:
            errs.append("core condition must use the exact relation")
        if self.tag in (TAG_SHORTCUT, TAG_MISLEADING_MATH) and self.relation == EQUAL:
            errs.append(f"{self.tag} condition must use a hedged relation")
        return errs


@dataclass(frozen=True)
class AlgebraicCore:
    """The exact linear system a problem is built around.

    The solution vector is preset; every core condition's rhs was computed
    from it, which is what guarantees a determinate ground truth.
    """

    variable_ids: tuple
    conditions: tuple  # all tag == TAG_CORE
    solution: dict  # variable id -> int
    target: str

    @property
    def answer(self) -> int:
        return self.solution[self.target]

    def coefficient_matrix(self) -> RationalMatrix:
        rows = [
            [Fraction(c.terms.get(v, 0)) for v in self.variable_ids]
            for c in self.conditions
        ]
        return RationalMatrix.from_rows(rows)

    def rhs_vector(self) -> list:
        return [Fraction(c.rhs) for c in self.conditions]


@dataclass(frozen=True)
class NarrativeLayer:
    background_theme: str | None = None
    entity_names: dict = field(default_factory=dict)  # variable id -> noun phrase
    misleading_sentences: tuple = ()
    irrelevant_fragments: tuple = ()


@dataclass(frozen=True)
class Problem:
    """The unit of evolution: core system + noise + narrative + rendered text."""

    id: str
    generation: int
    lineage: tuple  # ((operator name, parent id), ...)
    core: AlgebraicCore
    noise_conditions: tuple = ()
    narrative: NarrativeLayer = field(default_factory=NarrativeLayer)
    draft_text: str | None = None
    final_text: str | None = None
    answer: int = 0
    trap_answer: int | None = None

    def noise_variable_ids(self) -> tuple:
        core_vars = set(self.core.variable_ids)
        extra = set()
        for c in self.noise_conditions:
            extra |= c.variables() - core_vars
        return tuple(sorted(extra, key=variable_sort_key))

    def all_variable_ids(self) -> tuple:
        return tuple(self.core.variable_ids) + self.noise_variable_ids()

    def text(self) -> str | None:
        return self.final_text if self.final_text is not None else self.draft_text


@dataclass(frozen=True)
class CompoundProblem:
    """Two problems joined by an exact-ratio bridge.

    One core condition of part2 has its rhs withheld from the reader; the
    bridge instruction reconstructs it as bridge_ratio * (answer of part1),
    exactly, so part2's ground truth is unchanged.
    """

    id: str
    part1: Problem
    part2: Problem
    bridge_ratio: Fraction
    bridged_condition_index: int
    q1_answer: int
    final_answer: int
    final_text: str | None = None

    def text(self) -> str | None:
        return self.final_text


@dataclass(frozen=True)
class BenchmarkItem:
    """A problem plus (after scoring) its features and fitness verdict."""

    problem: object  # Problem | CompoundProblem
    features: object | None = None  # fitness.FeatureVector
    fitness: object | None = None  # fitness.FitnessReport

    @property
    def id(self) -> str:
        return self.problem.id

    @property
    def is_compound(self) -> bool:
        return isinstance(self.problem, CompoundProblem)

    @property
    def generation(self) -> int:
        if self.is_compound:
            return max(self.problem.part1.generation, self.problem.part2.generation)
        return self.problem.generation

    @property
    def final_answer(self) -> int:
        return self.problem.final_answer if self.is_compound else self.problem.answer

    @property
    def q1_answer(self) -> int | None:
        return self.problem.q1_answer if self.is_compound else None

    @property
    def trap_answer(self) -> int | None:
        if self.is_compound:
            return self.problem.part2.trap_answer
        return self.problem.trap_answer

    def text(self) -> str | None:
        return self.problem.text()

    def parts(self) -> tuple:
        if self.is_compound:
            return (self.problem.part1, self.problem.part2)
        return (self.problem,)


# ---------------------------------------------------------------------------
# Canonical serialization
#
# Dicts are built in a fixed key order and dumped with compact separators, so
# serialize(deserialize(line)) reproduces the line byte for byte.
# ---------------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def format_ratio(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def parse_ratio(s: str) -> Fraction:
    num, _, den = s.partition("/")
    return Fraction(int(num), int(den) if den else 1)


def _sorted_int_map(m: dict) -> dict:
    return {v: int(m[v]) for v in sorted(m, key=variable_sort_key)}


def _condition_to_dict(c: LinearCondition) -> dict:
    return {
        "terms": _sorted_int_map(c.terms),
        "relation": c.relation,
        "rhs": c.rhs,
        "tag": c.tag,
    }


def _condition_from_dict(d: dict) -> LinearCondition:
    return LinearCondition(
        terms={k: int(v) for k, v in d["terms"].items()},
        relation=d["relation"],
        rhs=int(d["rhs"]),
        tag=d["tag"],
    )


def _core_to_dict(core: AlgebraicCore) -> dict:
    return {
        "variable_ids": list(core.variable_ids),
        "conditions": [_condition_to_dict(c) for c in core.conditions],
        "solution": _sorted_int_map(core.solution),
        "target": core.target,
    }


def _core_from_dict(d: dict) -> AlgebraicCore:
    return AlgebraicCore(
        variable_ids=tuple(d["variable_ids"]),
        conditions=tuple(_condition_from_dict(c) for c in d["conditions"]),
        solution={k: int(v) for k, v in d["solution"].items()},
        target=d["target"],
    )


def _narrative_to_dict(n: NarrativeLayer) -> dict:
    return {
        "background_theme": n.background_theme,
        "entity_names": {k: n.entity_names[k] for k in sorted(n.entity_names, key=variable_sort_key)},
        "misleading_sentences": list(n.misleading_sentences),
        "irrelevant_fragments": list(n.irrelevant_fragments),
    }


def _narrative_from_dict(d: dict) -> NarrativeLayer:
    return NarrativeLayer(
        background_theme=d["background_theme"],
        entity_names=dict(d["entity_names"]),
        misleading_sentences=tuple(d["misleading_sentences"]),
        irrelevant_fragments=tuple(d["irrelevant_fragments"]),
    )


def _problem_to_dict(p: Problem) -> dict:
    return {
        "id": p.id,
        "generation": p.generation,
        "lineage": [[op, parent] for op, parent in p.lineage],
        "core": _core_to_dict(p.core),
        "noise_conditions": [_condition_to_dict(c) for c in p.noise_conditions],
        "narrative": _narrative_to_dict(p.narrative),
        "draft_text": p.draft_text,
        "final_text": p.final_text,
        "answer": p.answer,
        "trap_answer": p.trap_answer,
    }


def _problem_from_dict(d: dict) -> Problem:
    return Problem(
        id=d["id"],
        generation=int(d["generation"]),
        lineage=tuple((op, parent) for op, parent in d["lineage"]),
        core=_core_from_dict(d["core"]),
        noise_conditions=tuple(_condition_from_dict(c) for c in d["noise_conditions"]),
        narrative=_narrative_from_dict(d["narrative"]),
        draft_text=d["draft_text"],
        final_text=d["final_text"],
        answer=int(d["answer"]),
        trap_answer=None if d["trap_answer"] is None else int(d["trap_answer"]),
    )


def _compound_to_dict(c: CompoundProblem) -> dict:
    return {
        "id": c.id,
        "part1": _problem_to_dict(c.part1),
        "part2": _problem_to_dict(c.part2),
        "bridge_ratio": format_ratio(c.bridge_ratio),
        "bridged_condition_index": c.bridged_condition_index,
        "q1_answer": c.q1_answer,
        "final_answer": c.final_answer,
        "final_text": c.final_text,
    }


def _compound_from_dict(d: dict) -> CompoundProblem:
    return CompoundProblem(
        id=d["id"],
        part1=_problem_from_dict(d["part1"]),
        part2=_problem_from_dict(d["part2"]),
        bridge_ratio=parse_ratio(d["bridge_ratio"]),
        bridged_condition_index=int(d["bridged_condition_index"]),
        q1_answer=int(d["q1_answer"]),
        final_answer=int(d["final_answer"]),
        final_text=d["final_text"],
    )


def canonical_serialize(item: BenchmarkItem) -> str:
    """One canonical JSON line for a benchmark item (no trailing newline)."""
    violations = validate(item)
    if violations:
        raise ValidationError("; ".join(violations))
    if item.is_compound:
        d = {"kind": "compound", **_compound_to_dict(item.problem)}
    else:
        d = {"kind": "atomic", **_problem_to_dict(item.problem)}
    d["features"] = item.features.to_dict() if item.features is not None else None
    d["fitness"] = item.fitness.to_dict() if item.fitness is not None else None
    return _dump(d)


def deserialize_item(line: str) -> BenchmarkItem:
    from . import fitness as _fitness  # late import; fitness depends on model

    d = json.loads(line)
    kind = d.get("kind")
    if kind == "atomic":
        problem = _problem_from_dict(d)
    elif kind == "compound":
        problem = _compound_from_dict(d)
    else:
        raise ValidationError(f"unknown item kind {kind!r}")
    features = d.get("features")
    fitness_d = d.get("fitness")
    fv = _fitness.FeatureVector.from_dict(features) if features is not None else None
    fr = (
        _fitness.FitnessReport.from_dict(fitness_d, raw=fv)
        if fitness_d is not None
        else None
    )
    return BenchmarkItem(problem=problem, features=fv, fitness=fr)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _validate_problem(p: Problem, where: str = "") -> list:
    errs = []
    pre = f"{where}: " if where else ""
    core = p.core
    core_vars = set(core.variable_ids)

    if core.target not in core_vars:
        errs.append(f"{pre}target {core.target!r} is not a core variable")
    if set(core.solution) != core_vars:
        errs.append(f"{pre}solution does not assign exactly the core variables")

    for i, c in enumerate(core.conditions):
        for e in c.structural_errors():
            errs.append(f"{pre}core condition {i}: {e}")
        if c.tag != TAG_CORE:
            errs.append(f"{pre}core condition {i} tagged {c.tag!r}")
        elif not c.variables() <= core_vars:
            errs.append(f"{pre}core condition {i} uses unknown variables")
        elif set(core.solution) >= c.variables() and c.lhs_value(core.solution) != c.rhs:
            errs.append(f"{pre}core condition {i} is not satisfied by the preset solution")

    if len(core.conditions) < len(core.variable_ids):
        errs.append(f"{pre}fewer conditions than variables")
    elif core.conditions and not errs:
        if rank(core.coefficient_matrix()) != len(core.variable_ids):
            errs.append(f"{pre}coefficient matrix is not full rank")

    if core.target in core.solution and p.answer != core.solution[core.target]:
        errs.append(f"{pre}answer does not equal solution[target]")
    if p.trap_answer is not None and p.trap_answer == p.answer:
        errs.append(f"{pre}trap equals truth")

    for i, c in enumerate(p.noise_conditions):
        for e in c.structural_errors():
            errs.append(f"{pre}noise condition {i}: {e}")
        if c.tag == TAG_CORE:
            errs.append(f"{pre}noise condition {i} tagged core")
        if c.tag == TAG_USELESS and c.variables() & core_vars:
            errs.append(f"{pre}useless-noise condition {i} references a core variable")
        if c.tag == TAG_MISLEADING_MATH:
            if not c.variables() <= core_vars:
                errs.append(f"{pre}misleading-math condition {i} uses non-core variables")
            elif c.lhs_value(core.solution) == c.rhs:
                errs.append(f"{pre}misleading-math condition {i} is not contradictory")
        if c.tag == TAG_SHORTCUT:
            if not c.variables() <= core_vars:
                errs.append(f"{pre}shortcut condition {i} uses non-core variables")
            elif p.trap_answer is None:
                errs.append(f"{pre}shortcut condition {i} present but no trap answer stored")

    n = p.narrative
    if n.background_theme is not None:
        missing = [v for v in p.all_variable_ids() if v not in n.entity_names]
        if missing:
            errs.append(f"{pre}background set but variables {missing} lack entity names")
    constants = {abs(c.rhs) for c in (*core.conditions, *p.noise_conditions)}
    for text in (*n.misleading_sentences, *n.irrelevant_fragments, *n.entity_names.values()):
        for digits in re.findall(r"\d+", text):
            if int(digits) in constants:
                errs.append(f"{pre}narrative text contains colliding number {digits}")
    return errs


def validate(item: BenchmarkItem) -> list:
    """All invariant violations for an item; empty list means valid."""
    if item.is_compound:
        c = item.problem
        errs = _validate_problem(c.part1, "part1") + _validate_problem(c.part2, "part2")
        if not (0 <= c.bridged_condition_index < len(c.part2.core.conditions)):
            errs.append("bridged condition index out of range")
        else:
            bridged = c.part2.core.conditions[c.bridged_condition_index]
            if c.bridge_ratio * c.q1_answer != bridged.rhs:
                errs.append("bridge ratio does not reconstruct the bridged rhs")
        if c.q1_answer != c.part1.answer:
            errs.append("q1 answer does not equal part1 answer")
        if c.final_answer != c.part2.answer:
            errs.append("final answer does not equal part2 answer")
        return errs
    return _validate_problem(item.problem)


# ---------------------------------------------------------------------------
# Benchmark files
# ---------------------------------------------------------------------------


def make_header(command: str, config: dict, version: str) -> dict:
    return {"format": FORMAT_NAME, "version": version, "command": command, "config": config}


def write_benchmark(path, items, header: dict) -> None:
    items = sorted(items, key=lambda it: it.id)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(header) + "\n")
        for item in items:
            fh.write(canonical_serialize(item) + "\n")


def read_benchmark(path) -> tuple:
    """Returns (header dict, list of items). The header line is required."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise ValidationError(f"{path}: empty benchmark file")
        header = json.loads(first)
        if header.get("format") != FORMAT_NAME:
            raise ValidationError(f"{path}: missing or foreign header line")
        items = [deserialize_item(line) for line in fh if line.strip()]
    return header, items
