"""Text resource banks: scenario themes, misleading sentences, off-topic fragments.

Banks ship as plain-text files (one entry per line) under ``evolmath/data`` and
can be overridden with a directory of files carrying the same names. Bank text
must stay digit-free so inserted narrative can never collide with condition
constants.
"""

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

THEMES_FILE = "themes.txt"
MISLEADING_FILE = "misleading_sentences.txt"
IRRELEVANT_FILE = "irrelevant_fragments.txt"
REFEREE_PROMPT_FILE = "referee_prompt.txt"
SOLVER_PROMPT_FILE = "solver_prompt.txt"
POLISH_PROMPT_FILE = "polish_prompt.txt"

ENTITY_LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class Theme:
    """A real-world scenario: intro sentence plus a noun template per variable.

    The noun template contains ``{label}`` which is filled with a letter, so
    entity names are distinct and digit-free.
    """

    id: str
    intro: str
    noun_template: str

    def entity_name(self, index: int) -> str:
        return self.noun_template.format(label=ENTITY_LABELS[index])

    @property
    def capacity(self) -> int:
        return len(ENTITY_LABELS)


@dataclass(frozen=True)
class Banks:
    themes: tuple
    misleading_sentences: tuple
    irrelevant_fragments: tuple
    referee_prompt: str
    solver_prompt: str
    polish_prompt: str

    def theme_by_id(self, theme_id: str) -> Theme:
        for t in self.themes:
            if t.id == theme_id:
                return t
        raise KeyError(f"unknown theme {theme_id!r}")


def _read_resource(name: str, override_dir) -> str:
    if override_dir is not None:
        path = Path(override_dir) / name
        if path.exists():
            return path.read_text(encoding="utf-8")
    return resources.files("evolmath.data").joinpath(name).read_text(encoding="utf-8")


def _lines(text: str) -> list:
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _parse_themes(text: str) -> tuple:
    themes = []
    for ln in _lines(text):
        theme_id, intro, noun_template = (part.strip() for part in ln.split("|"))
        themes.append(Theme(id=theme_id, intro=intro, noun_template=noun_template))
    return tuple(themes)


def load_banks(override_dir=None) -> Banks:
    return Banks(
        themes=_parse_themes(_read_resource(THEMES_FILE, override_dir)),
        misleading_sentences=tuple(_lines(_read_resource(MISLEADING_FILE, override_dir))),
        irrelevant_fragments=tuple(_lines(_read_resource(IRRELEVANT_FILE, override_dir))),
        referee_prompt=_read_resource(REFEREE_PROMPT_FILE, override_dir).strip(),
        solver_prompt=_read_resource(SOLVER_PROMPT_FILE, override_dir).strip(),
        polish_prompt=_read_resource(POLISH_PROMPT_FILE, override_dir).strip(),
    )
