"""Mutation and crossover operators.

Each operator hardens a problem without ever touching the ground truth: noise
is layered around the core system, never into it. All operators are pure
given their rng stream, and each records itself in the problem's lineage.

Application order within one pass is fixed (shortcut trap, useless noise,
misleading math, background, misleading text, irrelevant topics, then
crossover at the population level) so lineages are comparable across runs.
"""

import logging
from dataclasses import dataclass, replace
from fractions import Fraction

from .banks import Banks
from .model import (
    APPROX,
    EQUAL,
    SIMILAR,
    TAG_MISLEADING_MATH,
    TAG_SHORTCUT,
    TAG_USELESS,
    AlgebraicCore,
    CompoundProblem,
    LinearCondition,
    Problem,
    variable_sort_key,
)

log = logging.getLogger(__name__)

HEDGED_RELATIONS = (APPROX, SIMILAR)
COEFFICIENTS = [c for c in range(-9, 10) if c != 0]
PERTURBATIONS = [d for d in range(-7, 8) if abs(d) >= 2]
TRAP_OFFSETS = list(range(-5, 6))
TRAP_MULTIPLIERS = (1, 2)


@dataclass(frozen=True)
class OperatorSuiteConfig:
    enable_formulaic: bool = True
    enable_linguistic: bool = True
    enable_crossover: bool = True
    useless_count: int = 2
    misleading_math_count: int = 1
    misleading_text_count: int = 1
    irrelevant_count: int = 1
    rng_seed: int = 0

    def check(self) -> None:
        counts = (
            self.useless_count,
            self.misleading_math_count,
            self.misleading_text_count,
            self.irrelevant_count,
        )
        if any(k < 0 for k in counts):
            raise ValueError("operator counts must be non-negative")
        if not (self.enable_formulaic or self.enable_linguistic or self.enable_crossover):
            raise ValueError("at least one operator group must be enabled")

    def to_dict(self) -> dict:
        return {
            "enable_formulaic": self.enable_formulaic,
            "enable_linguistic": self.enable_linguistic,
            "enable_crossover": self.enable_crossover,
            "useless_count": self.useless_count,
            "misleading_math_count": self.misleading_math_count,
            "misleading_text_count": self.misleading_text_count,
            "irrelevant_count": self.irrelevant_count,
            "rng_seed": self.rng_seed,
        }


def _with_lineage(p: Problem, op_name: str, parent: str) -> Problem:
    return replace(p, lineage=p.lineage + ((op_name, parent),))


def resolution_order(core: AlgebraicCore) -> list:
    """Variable ids in the order a step-by-step solver pins down their values.

    Symbolic minimum-degree elimination: repeatedly eliminate the variable
    appearing in the fewest remaining equations (merging those equations into
    their combination). Back-substitution then resolves variables in reverse
    pivot order, so the last-eliminated variable is the first one solved.
    """
    equations = [set(c.terms) for c in core.conditions]
    remaining = sorted(core.variable_ids, key=variable_sort_key)
    pivot_order = []
    while remaining:
        degrees = {v: sum(1 for eq in equations if v in eq) for v in remaining}
        v = min(remaining, key=lambda x: (degrees[x], variable_sort_key(x)))
        involved = [eq for eq in equations if v in eq]
        others = [eq for eq in equations if v not in eq]
        merged = set().union(*involved) - {v} if involved else set()
        equations = others + ([merged] if merged else [])
        remaining.remove(v)
        pivot_order.append(v)
    return list(reversed(pivot_order))


def shortcut_variable(core: AlgebraicCore) -> str | None:
    """The easily-solved variable a trap should point at: first resolved non-target."""
    for v in resolution_order(core):
        if v != core.target:
            return v
    return None


def approximate_replacement(p: Problem, rng) -> Problem:
    """Add a hedged pseudo-condition linking the target to a shortcut variable.

    The trap answer is what a solver gets by taking the hedge literally; it is
    guaranteed to differ from the true answer. A problem carries at most one
    shortcut condition: re-application replaces the previous one.
    """
    if len(p.core.variable_ids) < 2:
        log.info("approximate_replacement skipped on %s: no shortcut candidate", p.id)
        return p
    s = shortcut_variable(p.core)
    if s is None:
        log.info("approximate_replacement skipped on %s: no shortcut candidate", p.id)
        return p

    s_value = p.core.solution[s]
    m = d = trap = None
    for _ in range(32):
        m = rng.choice(TRAP_MULTIPLIERS)
        d = rng.choice(TRAP_OFFSETS)
        trap = m * s_value + d
        if trap != p.answer:
            break
    else:
        log.warning("approximate_replacement skipped on %s: trap always equals truth", p.id)
        return p

    condition = LinearCondition(
        terms={p.core.target: 1, s: -m},
        relation=rng.choice(HEDGED_RELATIONS),
        rhs=d,
        tag=TAG_SHORTCUT,
    )
    kept = tuple(c for c in p.noise_conditions if c.tag != TAG_SHORTCUT)
    p = replace(p, noise_conditions=kept + (condition,), trap_answer=trap)
    return _with_lineage(p, "approximate_replacement", p.id)


def _next_noise_index(p: Problem) -> int:
    best = 0
    for v in p.noise_variable_ids():
        key = variable_sort_key(v)
        if key[0] == "u":
            best = max(best, key[1])
    return best + 1


def add_useless_conditions(p: Problem, k: int, rng, banks: Banks | None = None) -> Problem:
    """Add k valid equations over k brand-new variables (decoupled noise)."""
    if k <= 0:
        return p
    start = _next_noise_index(p)
    fresh = [f"u{start + j}" for j in range(k)]
    mini_solution = {v: rng.randint(1, 20) for v in fresh}
    conditions = []
    for j in range(k):
        chosen = [fresh[j]] if k == 1 else [fresh[j], fresh[(j + 1) % k]]
        terms = {v: rng.choice(COEFFICIENTS) for v in chosen}
        rhs = sum(c * mini_solution[v] for v, c in terms.items())
        conditions.append(LinearCondition(terms=terms, relation=EQUAL, rhs=rhs, tag=TAG_USELESS))

    narrative = p.narrative
    if narrative.background_theme is not None and banks is not None:
        theme = banks.theme_by_id(narrative.background_theme)
        names = dict(narrative.entity_names)
        next_label = len(names)
        for v in fresh:
            names[v] = theme.entity_name(next_label)
            next_label += 1
        narrative = replace(narrative, entity_names=names)

    p = replace(p, noise_conditions=p.noise_conditions + tuple(conditions), narrative=narrative)
    return _with_lineage(p, "add_useless_conditions", p.id)


def add_misleading_math(p: Problem, k: int, rng) -> Problem:
    """Add k hedged conditions over core variables that contradict the truth."""
    if k <= 0:
        return p
    core_vars = list(p.core.variable_ids)
    conditions = []
    for _ in range(k):
        width = min(2, len(core_vars))
        chosen = rng.sample(core_vars, width)
        terms = {v: rng.choice(COEFFICIENTS) for v in chosen}
        exact = sum(c * p.core.solution[v] for v, c in terms.items())
        rhs = exact + rng.choice(PERTURBATIONS)
        conditions.append(
            LinearCondition(
                terms=terms, relation=rng.choice(HEDGED_RELATIONS), rhs=rhs, tag=TAG_MISLEADING_MATH
            )
        )
    p = replace(p, noise_conditions=p.noise_conditions + tuple(conditions))
    return _with_lineage(p, "add_misleading_math", p.id)


def _draw(bank: tuple, k: int, rng) -> list:
    if k <= len(bank):
        return rng.sample(list(bank), k)
    return [rng.choice(bank) for _ in range(k)]


def add_misleading_text(p: Problem, k: int, rng, banks: Banks) -> Problem:
    if k <= 0:
        return p
    sentences = _draw(banks.misleading_sentences, k, rng)
    narrative = replace(
        p.narrative, misleading_sentences=p.narrative.misleading_sentences + tuple(sentences)
    )
    return _with_lineage(replace(p, narrative=narrative), "add_misleading_text", p.id)


def add_background(p: Problem, rng, banks: Banks) -> Problem:
    """Wrap the problem in a scenario: theme plus one entity name per variable."""
    variables = p.all_variable_ids()
    themes = [t for t in banks.themes if t.capacity >= len(variables)]
    if not themes:
        log.warning("add_background skipped on %s: %d variables exceed theme capacity",
                    p.id, len(variables))
        return p
    theme = rng.choice(themes)
    names = {v: theme.entity_name(i) for i, v in enumerate(variables)}
    narrative = replace(p.narrative, background_theme=theme.id, entity_names=names)
    return _with_lineage(replace(p, narrative=narrative), "add_background", p.id)


def add_irrelevant_topic(p: Problem, k: int, rng, banks: Banks) -> Problem:
    if k <= 0:
        return p
    fragments = _draw(banks.irrelevant_fragments, k, rng)
    narrative = replace(
        p.narrative, irrelevant_fragments=p.narrative.irrelevant_fragments + tuple(fragments)
    )
    return _with_lineage(replace(p, narrative=narrative), "add_irrelevant_topic", p.id)


def crossover(p1: Problem, p2: Problem, rng) -> CompoundProblem | None:
    """Merge two problems into a sequential two-stage problem.

    One core condition of p2 is picked as the bridge; its rhs will be withheld
    from the rendered text and reconstructed as ratio * (part1's answer). The
    ratio is exact, so part2's ground truth is untouched. Returns None when
    p1's answer is zero (no ratio exists).
    """
    if p1.answer == 0:
        log.warning("crossover skipped: %s has answer 0", p1.id)
        return None
    bridged_index = rng.randrange(len(p2.core.conditions))
    bridged = p2.core.conditions[bridged_index]
    ratio = Fraction(bridged.rhs, p1.answer)
    part1 = _with_lineage(p1, "crossover", p2.id)
    part2 = _with_lineage(p2, "crossover", p1.id)
    return CompoundProblem(
        id=f"c-{p1.id}-{p2.id}",
        part1=part1,
        part2=part2,
        bridge_ratio=ratio,
        bridged_condition_index=bridged_index,
        q1_answer=p1.answer,
        final_answer=p2.answer,
    )


def apply_mutation_suite(p: Problem, cfg: OperatorSuiteConfig, rng, banks: Banks) -> Problem:
    """One full mutation pass; bumps the problem's generation."""
    p = replace(p, generation=p.generation + 1)
    if cfg.enable_formulaic:
        p = approximate_replacement(p, rng)
        p = add_useless_conditions(p, cfg.useless_count, rng, banks)
        p = add_misleading_math(p, cfg.misleading_math_count, rng)
    if cfg.enable_linguistic:
        p = add_background(p, rng, banks)
        p = add_misleading_text(p, cfg.misleading_text_count, rng, banks)
        p = add_irrelevant_topic(p, cfg.irrelevant_count, rng, banks)
    return p


def pair_population(problems: list, rng) -> tuple:
    """Uniform random disjoint pairing; odd populations leave one atomic."""
    order = list(problems)
    rng.shuffle(order)
    pairs = [(order[i], order[i + 1]) for i in range(0, len(order) - 1, 2)]
    leftover = order[-1] if len(order) % 2 else None
    if leftover is not None:
        log.info("odd population: %s stays atomic", leftover.id)
    return pairs, leftover
