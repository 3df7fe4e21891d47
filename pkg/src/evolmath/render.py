"""Template rendering of algebra into word-problem text, plus polish guarding.

Drafts are produced deterministically from the item alone (sentence order is
shuffled under a stream derived from the item id), so re-rendering a stored
item reproduces the same bytes. An optional LLM polish pass may reword the
draft, but its output is only accepted when it preserves every numeral, every
entity mention, and the question labels; otherwise the draft stands.
"""

import logging
import re
from collections import Counter
from dataclasses import replace

from .banks import Banks, load_banks
from .model import (
    APPROX,
    EQUAL,
    SIMILAR,
    TAG_SHORTCUT,
    BenchmarkItem,
    CompoundProblem,
    LinearCondition,
    Problem,
    variable_sort_key,
)
from .rng import derive_rng

log = logging.getLogger(__name__)

RELATION_PHRASES = {
    EQUAL: "is exactly",
    APPROX: "is approximately",
    SIMILAR: "is similar to",
}

WITHHELD_TOKEN = "R"


class RenderError(ValueError):
    """Raised when an item cannot be rendered (e.g. missing entity names)."""


def _mention(var: str, entity_names: dict) -> str:
    name = entity_names.get(var)
    return f"the number of {name}" if name else f"quantity {var}"


def _capitalize(sentence: str) -> str:
    return sentence[0].upper() + sentence[1:] if sentence else sentence


def _shortcut_sentence(cond: LinearCondition, core_target: str, names: dict) -> str:
    s_var = next(v for v in cond.terms if v != core_target)
    multiplier = -cond.terms[s_var]
    offset = cond.rhs
    rel = RELATION_PHRASES[cond.relation]
    base = _mention(s_var, names)
    if multiplier != 1:
        base = f"{multiplier} times {base}"
    if offset > 0:
        tail = f"{offset} more than {base}"
    elif offset < 0:
        tail = f"{-offset} less than {base}"
    else:
        tail = base
    return _capitalize(f"{_mention(core_target, names)} {rel} {tail}.")


def _linear_sentence(cond: LinearCondition, names: dict, withheld: bool = False) -> str:
    terms = sorted(cond.terms.items(), key=lambda kv: variable_sort_key(kv[0]))
    rhs = cond.rhs
    if terms[0][1] < 0:
        # Flip the whole condition for display so the sentence starts positive.
        terms = [(v, -c) for v, c in terms]
        rhs = -rhs
    pieces = []
    for i, (v, c) in enumerate(terms):
        mention = _mention(v, names)
        magnitude = mention if abs(c) == 1 else f"{abs(c)} times {mention}"
        if i == 0:
            pieces.append(magnitude)
        else:
            pieces.append(("plus " if c > 0 else "minus ") + magnitude)
    rel = RELATION_PHRASES[cond.relation]
    value = WITHHELD_TOKEN if withheld else str(rhs)
    return _capitalize(f"{' '.join(pieces)} {rel} {value}.")


def condition_sentence(cond: LinearCondition, target: str, names: dict,
                       withheld: bool = False) -> str:
    if cond.tag == TAG_SHORTCUT and cond.terms.get(target) == 1 and len(cond.terms) == 2:
        return _shortcut_sentence(cond, target, names)
    return _linear_sentence(cond, names, withheld=withheld)


def _render_problem(p: Problem, label: str, banks: Banks, withheld_index: int | None = None) -> str:
    names = p.narrative.entity_names
    if p.narrative.background_theme is not None:
        missing = [v for v in p.all_variable_ids() if v not in names]
        if missing:
            raise RenderError(f"{p.id}: background set but no entity names for {missing}")

    rng = derive_rng("render", p.id, p.generation)
    sentences = []
    for i, cond in enumerate(p.core.conditions):
        sentences.append(
            condition_sentence(cond, p.core.target, names, withheld=(i == withheld_index))
        )
    for cond in p.noise_conditions:
        sentences.append(condition_sentence(cond, p.core.target, names))
    rng.shuffle(sentences)

    for filler in (*p.narrative.misleading_sentences, *p.narrative.irrelevant_fragments):
        sentences.insert(rng.randrange(len(sentences) + 1), filler)

    if p.narrative.background_theme is not None:
        intro = banks.theme_by_id(p.narrative.background_theme).intro
        sentences.insert(0, intro)

    question = f"{label}: What is {_mention(p.core.target, names)}?"
    return " ".join(sentences + [question])


def _ratio_text(ratio) -> str:
    if ratio.denominator == 1:
        return str(ratio.numerator)
    return f"{ratio.numerator}/{ratio.denominator}"


def bridge_sentence(ratio) -> str:
    return (
        f"Take your answer to Q1 and multiply it by {_ratio_text(ratio)}; "
        f"call this result {WITHHELD_TOKEN}. Use {WITHHELD_TOKEN} as the value in what follows."
    )


def render_draft(item: BenchmarkItem, banks: Banks | None = None) -> str:
    """The full deterministic draft text for an item."""
    banks = banks or load_banks()
    if item.is_compound:
        c = item.problem
        part1 = _render_problem(c.part1, "Q1", banks)
        part2 = _render_problem(c.part2, "Final", banks, withheld_index=c.bridged_condition_index)
        return " ".join([part1, bridge_sentence(c.bridge_ratio), part2])
    return _render_problem(item.problem, "Final", banks)


def attach_draft(item: BenchmarkItem, banks: Banks | None = None) -> BenchmarkItem:
    """Render and store the draft on the item (compounds store assembled text)."""
    banks = banks or load_banks()
    if item.is_compound:
        c = item.problem
        part1_text = _render_problem(c.part1, "Q1", banks)
        part2_text = _render_problem(c.part2, "Final", banks, withheld_index=c.bridged_condition_index)
        assembled = " ".join([part1_text, bridge_sentence(c.bridge_ratio), part2_text])
        c = replace(
            c,
            part1=replace(c.part1, draft_text=part1_text),
            part2=replace(c.part2, draft_text=part2_text),
            final_text=assembled,
        )
        return replace(item, problem=c)
    p = replace(item.problem, draft_text=_render_problem(item.problem, "Final", banks))
    return replace(item, problem=p)


# ---------------------------------------------------------------------------
# Polish
# ---------------------------------------------------------------------------

_NUMERAL_RE = re.compile(r"\d+")
_ENTITY_RE = re.compile(
    r"the number of ([A-Za-z][A-Za-z ]*?)(?=\s+(?:is|plus|minus|and|or|was|were)\b|[,.?!;:])",
    re.IGNORECASE,
)
_QUANTITY_RE = re.compile(r"quantity (\w+)", re.IGNORECASE)
_LABELS = ("Q1:", "Final:")


def _entity_phrases(text: str) -> set:
    return {m.lower() for m in _ENTITY_RE.findall(text)} | {
        m.lower() for m in _QUANTITY_RE.findall(text)
    }


def verify_polish(draft: str, polished: str) -> bool:
    """True iff polishing preserved numerals, entity mentions, and labels."""
    if Counter(_NUMERAL_RE.findall(draft)) != Counter(_NUMERAL_RE.findall(polished)):
        return False
    if _entity_phrases(draft) != _entity_phrases(polished):
        return False
    return all(label in polished for label in _LABELS if label in draft)


def polish(draft: str, gateway, prompt_template: str | None = None) -> str:
    """Polished text when the gateway's rewrite passes verification, else the draft."""
    if prompt_template is None:
        prompt_template = load_banks().polish_prompt
    try:
        polished = gateway.complete("polisher", prompt_template.format(draft=draft), {})
    except Exception as exc:  # gateway failure is non-fatal by design
        log.warning("polish failed (%s); keeping draft", exc)
        return draft
    if verify_polish(draft, polished):
        return polished
    log.warning("polish rejected: rewrite altered numerals, entities, or labels")
    return draft


def polish_item(item: BenchmarkItem, gateway, banks: Banks | None = None) -> BenchmarkItem:
    banks = banks or load_banks()
    draft = item.text()
    if draft is None:
        raise RenderError(f"{item.id}: no draft to polish")
    polished = polish(draft, gateway, banks.polish_prompt)
    problem = replace(item.problem, final_text=polished)
    return replace(item, problem=problem)
