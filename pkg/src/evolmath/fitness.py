"""Difficulty features, data-driven weights, composite scoring, selection.

The composite difficulty score of an item is a weighted sum of standardized
features. Weights come from the statistical relationship between each feature
and solver accuracy: weight_i = -r_i * (1 - p_i) / sum_j |r_j * (1 - p_j)|,
where r is the Pearson correlation with accuracy and p its two-sided t-test
p-value. Features whose p-value exceeds 0.5 are dropped from the score (their
weight is zeroed) but still appear in the normalization denominator, which is
what reproduces the published weight vector. The sign flip encodes that
"harder" means "answered less often".

Selection is a dual filter: reject items whose composite score falls below a
threshold, and reject items that are deficient on any single retained metric
(their weighted contribution sits in the population's bottom percentile).
"""

import json
import logging
import math
import re
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as _scipy_stats

from .banks import Banks, load_banks
from .gateway import ScoreParseError, parse_referee_score
from .model import BenchmarkItem

log = logging.getLogger(__name__)

WEIGHTS_FORMAT_NAME = "evolmath-weights"
PAPER_TABLE1_NAME = "paper-table1"

# Canonical feature order for matrices and reports.
FEATURE_ORDER = (
    "noise_ratio",
    "lexical_entropy",
    "num_equations",
    "num_variables",
    "referee_score",
    "readability",
    "word_count",
    "syntactic_complexity",
)


class CalibrationError(ValueError):
    """Weights cannot be computed from the given data."""


class FitnessInputError(ValueError):
    """Population-level operation called with unusable input."""


class RefereeError(RuntimeError):
    """No usable referee scores for an entire population."""


@dataclass(frozen=True)
class FeatureVector:
    referee_score: int
    word_count: int
    readability: float
    syntactic_complexity: float
    lexical_entropy: float
    num_variables: int
    num_equations: int
    noise_ratio: float

    def value(self, feature: str):
        return getattr(self, feature)

    def as_array(self) -> np.ndarray:
        return np.array([float(self.value(f)) for f in FEATURE_ORDER])

    def to_dict(self) -> dict:
        return {
            "referee_score": self.referee_score,
            "word_count": self.word_count,
            "readability": self.readability,
            "syntactic_complexity": self.syntactic_complexity,
            "lexical_entropy": self.lexical_entropy,
            "num_variables": self.num_variables,
            "num_equations": self.num_equations,
            "noise_ratio": self.noise_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVector":
        return cls(
            referee_score=int(d["referee_score"]),
            word_count=int(d["word_count"]),
            readability=float(d["readability"]),
            syntactic_complexity=float(d["syntactic_complexity"]),
            lexical_entropy=float(d["lexical_entropy"]),
            num_variables=int(d["num_variables"]),
            num_equations=int(d["num_equations"]),
            noise_ratio=float(d["noise_ratio"]),
        )


# ---------------------------------------------------------------------------
# Text metrics
# ---------------------------------------------------------------------------

_SENTENCE_RE = re.compile(r"[.!?]+")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")
_WORD_STRIP_RE = re.compile(r"^\W+|\W+$")

# Fixed lexicon of subordinating connectives for the complexity metric.
SUBORDINATING_CONNECTIVES = frozenset(
    {
        "because", "although", "though", "while", "since", "if", "unless",
        "whereas", "after", "before", "when", "whenever", "until", "once",
        "that", "which", "who", "whom", "whose", "as",
    }
)


def _sentences(text: str) -> int:
    return max(1, sum(1 for s in _SENTENCE_RE.split(text) if s.strip()))


def count_syllables(word: str) -> int:
    """Maximal vowel groups (a, e, i, o, u, y), minimum one per word."""
    return max(1, len(_VOWEL_GROUP_RE.findall(word.lower())))


def word_count(text: str) -> int:
    return len(text.split())


def readability(text: str) -> float:
    """Flesch Reading Ease: 206.835 - 1.015*(words/sentences) - 84.6*(syllables/words)."""
    words = text.split()
    if not words:
        return 0.0
    n_sentences = _sentences(text)
    n_syllables = sum(count_syllables(w) for w in words)
    return 206.835 - 1.015 * (len(words) / n_sentences) - 84.6 * (n_syllables / len(words))


def syntactic_complexity(text: str) -> float:
    """Subordinating connectives per sentence."""
    tokens = [_WORD_STRIP_RE.sub("", t).lower() for t in text.split()]
    hits = sum(1 for t in tokens if t in SUBORDINATING_CONNECTIVES)
    return hits / _sentences(text)


def lexical_entropy(text: str) -> float:
    """Shannon entropy (bits) of the case-folded token distribution."""
    tokens = [t.lower() for t in text.split()]
    if not tokens:
        return 0.0
    counts = Counter(tokens)
    total = len(tokens)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------


def structural_counts(item: BenchmarkItem) -> tuple:
    """(num_variables, num_equations, noise_ratio) over core plus noise."""
    n_vars = n_core = n_noise_conds = n_text_noise = 0
    for part in item.parts():
        n_vars += len(part.all_variable_ids())
        n_core += len(part.core.conditions)
        n_noise_conds += len(part.noise_conditions)
        n_text_noise += len(part.narrative.misleading_sentences)
        n_text_noise += len(part.narrative.irrelevant_fragments)
    noise = n_noise_conds + n_text_noise
    ratio = noise / (noise + n_core) if (noise + n_core) else 0.0
    return n_vars, n_core + n_noise_conds, ratio


def referee_prompt_for(item: BenchmarkItem, banks: Banks) -> str:
    return banks.referee_prompt.format(problem=item.text())


def extract_features(item: BenchmarkItem, referee, banks: Banks | None = None) -> FeatureVector:
    """Features for one item; the referee gateway supplies the 0-10 score.

    Raises ScoreParseError when the referee reply has no usable score; callers
    scoring whole populations impute the median instead of aborting.
    """
    banks = banks or load_banks()
    text = item.text()
    if text is None:
        raise FitnessInputError(f"{item.id}: item has no rendered text")
    reply = referee.complete("referee", referee_prompt_for(item, banks), {"item_id": item.id})
    score = parse_referee_score(reply)
    return _features_with_score(item, text, score)


def _features_with_score(item: BenchmarkItem, text: str, score: int) -> FeatureVector:
    n_vars, n_eqs, noise_ratio = structural_counts(item)
    return FeatureVector(
        referee_score=score,
        word_count=word_count(text),
        readability=readability(text),
        syntactic_complexity=syntactic_complexity(text),
        lexical_entropy=lexical_entropy(text),
        num_variables=n_vars,
        num_equations=n_eqs,
        noise_ratio=noise_ratio,
    )


def extract_features_population(items, referee, banks: Banks | None = None,
                                jobs: int = 1) -> list:
    """Features for a population; unparsable referee replies get the median score."""
    banks = banks or load_banks()
    texts = []
    for item in items:
        text = item.text()
        if text is None:
            raise FitnessInputError(f"{item.id}: item has no rendered text")
        texts.append(text)

    def ask(item):
        reply = referee.complete("referee", referee_prompt_for(item, banks), {"item_id": item.id})
        try:
            return parse_referee_score(reply)
        except ScoreParseError:
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(ask, items))
    else:
        scores = [ask(item) for item in items]

    good = [s for s in scores if s is not None]
    if not good:
        raise RefereeError("no referee reply was parseable for any item")
    imputed = int(round(statistics.median(good)))
    out = []
    for item, text, score in zip(items, texts, scores):
        if score is None:
            log.warning("referee reply unparsable for %s; imputing median %d", item.id, imputed)
            score = imputed
        out.append(_features_with_score(item, text, score))
    return out


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightRow:
    feature: str
    r: float | None  # None when the feature column was constant
    p: float | None
    weight: float
    retained: bool

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "r": self.r,
            "p": self.p,
            "weight": self.weight,
            "retained": self.retained,
        }


@dataclass(frozen=True)
class WeightVector:
    rows: tuple

    def row_for(self, feature: str) -> WeightRow:
        for row in self.rows:
            if row.feature == feature:
                return row
        raise KeyError(feature)

    def retained_rows(self) -> list:
        return [row for row in self.rows if row.retained]

    def weight_map(self) -> dict:
        return {row.feature: row.weight for row in self.rows}


# Published weight vector (the built-in "paper-table1" preset).
PAPER_TABLE1 = WeightVector(
    rows=(
        WeightRow("noise_ratio", -0.151, 0.009, 0.19, True),
        WeightRow("lexical_entropy", -0.120, 0.039, 0.15, True),
        WeightRow("num_equations", 0.118, 0.040, -0.15, True),
        WeightRow("num_variables", 0.117, 0.043, -0.15, True),
        WeightRow("referee_score", 0.106, 0.064, -0.13, True),
        WeightRow("readability", 0.087, 0.130, -0.10, True),
        WeightRow("word_count", -0.080, 0.170, 0.09, True),
        WeightRow("syntactic_complexity", -0.054, 0.350, 0.05, True),
        WeightRow("semantic_uniqueness", 0.015, 0.791, 0.0, False),
        WeightRow("nonlinear_relations", 0.007, 0.902, 0.0, False),
    )
)


def weights_from_stats(stat_rows, exclusion_p: float = 0.5) -> WeightVector:
    """Weights from (feature, r, p) rows.

    Every row with defined statistics contributes |r * (1 - p)| to the
    normalization denominator; rows with p above the exclusion cutoff then get
    weight zero. Retained weights are -r * (1 - p) / denominator, so features
    anti-correlated with accuracy push the difficulty score up.
    """
    contributions = {}
    for feature, r, p in stat_rows:
        if r is None or p is None or math.isnan(r):
            log.warning("feature %s has undefined correlation; excluded", feature)
            contributions[feature] = None
        else:
            contributions[feature] = -r * (1.0 - p)
    denom = sum(abs(c) for c in contributions.values() if c is not None)
    if denom == 0:
        raise CalibrationError("all correlations are zero or undefined")
    rows = []
    for feature, r, p in stat_rows:
        c = contributions[feature]
        retained = c is not None and p <= exclusion_p
        weight = c / denom if retained else 0.0
        rows.append(WeightRow(feature=feature, r=r, p=p, weight=weight, retained=retained))
    return WeightVector(rows=tuple(rows))


def correlation_stats(values: np.ndarray, accuracy: np.ndarray) -> tuple:
    """Pearson r and two-sided p from the t statistic r*sqrt((N-2)/(1-r^2))."""
    n = len(values)
    if np.std(values) == 0:
        return None, None
    r = float(np.corrcoef(values, accuracy)[0, 1])
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(_scipy_stats.t.sf(abs(t), n - 2))
    return r, p


def calibrate_weights(features, accuracy, feature_names=None) -> WeightVector:
    """Data-driven weights from a problems x features matrix and per-problem accuracy.

    ``features`` is either a list of FeatureVector or a 2-D array-like whose
    columns follow ``feature_names`` (default: the canonical feature order).
    """
    if feature_names is None:
        feature_names = FEATURE_ORDER
    if features and isinstance(features[0], FeatureVector):
        matrix = np.array([fv.as_array() for fv in features])
        feature_names = FEATURE_ORDER
    else:
        matrix = np.asarray(features, dtype=float)
    accuracy = np.asarray(accuracy, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != len(feature_names):
        raise CalibrationError("feature matrix shape does not match feature names")
    if matrix.shape[0] != len(accuracy):
        raise CalibrationError("accuracy length does not match feature rows")
    if matrix.shape[0] < 3:
        raise CalibrationError("need at least 3 problems to calibrate")
    if np.std(accuracy) == 0:
        raise CalibrationError("accuracy has zero variance")
    stat_rows = []
    for j, name in enumerate(feature_names):
        r, p = correlation_stats(matrix[:, j], accuracy)
        stat_rows.append((name, r, p))
    return weights_from_stats(stat_rows)


def save_weights(path, wv: WeightVector, version: str, command: str = "calibrate") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": WEIGHTS_FORMAT_NAME, "version": version, "command": command}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for row in wv.rows:
            fh.write(json.dumps(row.to_dict(), separators=(",", ":")) + "\n")


def load_weights(path) -> WeightVector:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != WEIGHTS_FORMAT_NAME:
            raise CalibrationError(f"{path}: not a weights file")
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            rows.append(
                WeightRow(
                    feature=d["feature"], r=d["r"], p=d["p"],
                    weight=float(d["weight"]), retained=bool(d["retained"]),
                )
            )
    return WeightVector(rows=tuple(rows))


def resolve_weights(spec) -> WeightVector:
    """Accepts a WeightVector, the preset name, or a sidecar file path."""
    if isinstance(spec, WeightVector):
        return spec
    if spec == PAPER_TABLE1_NAME:
        return PAPER_TABLE1
    return load_weights(spec)


# ---------------------------------------------------------------------------
# Standardization, composite score, selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitnessReport:
    raw: FeatureVector
    standardized: dict  # feature -> z-score
    composite: float
    composite_pass: bool
    deficiency_pass: bool
    selected: bool

    def to_dict(self) -> dict:
        return {
            "standardized": {f: self.standardized[f] for f in FEATURE_ORDER},
            "composite": self.composite,
            "composite_pass": self.composite_pass,
            "deficiency_pass": self.deficiency_pass,
            "selected": self.selected,
        }

    @classmethod
    def from_dict(cls, d: dict, raw: FeatureVector) -> "FitnessReport":
        return cls(
            raw=raw,
            standardized={k: float(v) for k, v in d["standardized"].items()},
            composite=float(d["composite"]),
            composite_pass=bool(d["composite_pass"]),
            deficiency_pass=bool(d["deficiency_pass"]),
            selected=bool(d["selected"]),
        )


def standardize(features) -> list:
    """Per-feature z-scores over the population (population stddev).

    Constant features standardize to zero everywhere.
    """
    if len(features) < 2:
        raise FitnessInputError("standardization needs a population of at least 2")
    matrix = np.array([fv.as_array() for fv in features])
    means = matrix.mean(axis=0)
    stds = matrix.std(axis=0)  # ddof=0
    out = []
    for row in matrix:
        z = {}
        for j, name in enumerate(FEATURE_ORDER):
            z[name] = float((row[j] - means[j]) / stds[j]) if stds[j] > 0 else 0.0
        out.append(z)
    return out


def composite_score(standardized: dict, weights: WeightVector) -> float:
    """Weighted sum of z-scores over retained features."""
    return sum(
        row.weight * standardized[row.feature]
        for row in weights.retained_rows()
        if row.feature in standardized
    )


def build_reports(features, weights: WeightVector, threshold: float = -0.5,
                  percentile: float | None = 1.0) -> list:
    """Fitness reports for a population: composite filter plus deficiency filter.

    ``percentile`` is in percent (1.0 = bottom 1%); None or <= 0 disables the
    deficiency filter. An item is deficient when its weighted contribution on
    any retained, non-degenerate metric falls at or below the population's
    percentile cutoff for that metric.
    """
    if len(features) == 1:
        # Degenerate singleton population: no scale to standardize against.
        z = [{f: 0.0 for f in FEATURE_ORDER}]
    else:
        z = standardize(features)
    composites = [composite_score(zi, weights) for zi in z]

    deficient = [False] * len(features)
    if percentile is not None and percentile > 0 and len(features) >= 2:
        for row in weights.retained_rows():
            if row.feature not in FEATURE_ORDER or row.weight == 0:
                continue
            contribs = np.array([row.weight * zi[row.feature] for zi in z])
            if np.all(contribs == contribs[0]):
                continue  # no signal on this metric
            cutoff = float(np.percentile(contribs, percentile))
            for i, c in enumerate(contribs):
                if c <= cutoff:
                    deficient[i] = True

    reports = []
    for fv, zi, s, bad in zip(features, z, composites, deficient):
        composite_pass = s >= threshold
        deficiency_pass = not bad
        reports.append(
            FitnessReport(
                raw=fv,
                standardized=zi,
                composite=float(s),
                composite_pass=composite_pass,
                deficiency_pass=deficiency_pass,
                selected=composite_pass and deficiency_pass,
            )
        )
    return reports


def score_items(items, weights: WeightVector, threshold: float = -0.5,
                percentile: float | None = 1.0) -> list:
    """Attach fitness reports to items that already carry features."""
    features = []
    for item in items:
        if item.features is None:
            raise FitnessInputError(f"{item.id}: no features extracted")
        features.append(item.features)
    reports = build_reports(features, weights, threshold, percentile)
    return [replace(item, fitness=rep) for item, rep in zip(items, reports)]


def select(items, weights: WeightVector, threshold: float = -0.5,
           percentile: float | None = 1.0) -> tuple:
    """Dual-filter partition of a scored population: (qualified, rejected)."""
    scored = score_items(items, weights, threshold, percentile)
    qualified = [it for it in scored if it.fitness.selected]
    rejected = [it for it in scored if not it.fitness.selected]
    return qualified, rejected
