"""Seed problem generation.

Problems are built back to front: sample the solution vector first, then
construct sparse equations whose right-hand sides are computed from it.
Rejection sampling enforces two algebraic guarantees on every accepted seed:

* full rank - the system has exactly one solution (the preset one);
* necessity - deleting any single equation leaves the target variable
  underdetermined, so no equation is skippable.
"""

import logging
from dataclasses import dataclass

from .algebra import RationalMatrix, in_row_space, rank
from .model import EQUAL, TAG_CORE, AlgebraicCore, LinearCondition
from .rng import derive_rng

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for self-contradictory generator configuration."""


class GenerationError(RuntimeError):
    """Raised when rejection sampling exhausts its retry budget."""

    def __init__(self, attempts: int):
        super().__init__(f"no acceptable seed after {attempts} attempts")
        self.attempts = attempts


@dataclass(frozen=True)
class SeedConfig:
    num_variables: int = 5
    num_equations: int = 5
    solution_range: tuple = (1, 20)
    sparsity: int = 2  # variables per equation
    coefficient_range: tuple = (-9, 9)  # zero is never drawn
    max_retries: int = 10000
    rng_seed: int = 0

    def check(self) -> None:
        if self.num_variables < 1:
            raise ConfigError("need at least one variable")
        if self.num_equations != self.num_variables:
            raise ConfigError(
                "square systems required: num_equations must equal num_variables"
            )
        if not (1 <= self.sparsity <= self.num_variables):
            raise ConfigError("sparsity must be between 1 and num_variables")
        lo, hi = self.solution_range
        if lo > hi:
            raise ConfigError("empty solution range")
        clo, chi = self.coefficient_range
        if clo > chi or (clo == 0 and chi == 0):
            raise ConfigError("empty coefficient range")

    def to_dict(self) -> dict:
        return {
            "num_variables": self.num_variables,
            "num_equations": self.num_equations,
            "solution_range": list(self.solution_range),
            "sparsity": self.sparsity,
            "coefficient_range": list(self.coefficient_range),
            "max_retries": self.max_retries,
            "rng_seed": self.rng_seed,
        }


def full_rank_check(core: AlgebraicCore) -> bool:
    return rank(core.coefficient_matrix()) == len(core.variable_ids)


def necessity_check(core: AlgebraicCore) -> bool:
    """True iff removing any one equation leaves the target underdetermined.

    The target's value stays pinned down after deleting row i exactly when the
    target's unit vector lies in the row space of the remaining rows; we
    require that it never does.
    """
    if not full_rank_check(core):
        raise ValueError("necessity check requires a full-rank core")
    n = len(core.variable_ids)
    matrix_rows = core.coefficient_matrix().row_list()
    unit = [1 if v == core.target else 0 for v in core.variable_ids]
    for i in range(len(matrix_rows)):
        remaining = matrix_rows[:i] + matrix_rows[i + 1 :]
        reduced = RationalMatrix(len(remaining), n, [e for r in remaining for e in r])
        if in_row_space(unit, reduced):
            return False
    return True


def _nonzero_coefficients(cfg: SeedConfig) -> list:
    lo, hi = cfg.coefficient_range
    return [c for c in range(lo, hi + 1) if c != 0]


def generate_seed(cfg: SeedConfig, rng) -> AlgebraicCore:
    """One accepted seed core, deterministic in (cfg, rng state)."""
    cfg.check()
    variable_ids = tuple(f"v{i + 1}" for i in range(cfg.num_variables))
    coeffs = _nonzero_coefficients(cfg)
    lo, hi = cfg.solution_range

    for attempt in range(1, cfg.max_retries + 1):
        solution = {v: rng.randint(lo, hi) for v in variable_ids}
        conditions = []
        for _ in range(cfg.num_equations):
            chosen = rng.sample(variable_ids, cfg.sparsity)
            terms = {v: rng.choice(coeffs) for v in chosen}
            rhs = sum(c * solution[v] for v, c in terms.items())
            conditions.append(
                LinearCondition(terms=terms, relation=EQUAL, rhs=rhs, tag=TAG_CORE)
            )
        target = rng.choice(variable_ids)
        core = AlgebraicCore(
            variable_ids=variable_ids,
            conditions=tuple(conditions),
            solution=solution,
            target=target,
        )
        if full_rank_check(core) and necessity_check(core):
            if attempt > 1:
                log.debug("seed accepted after %d attempts", attempt)
            return core
    raise GenerationError(cfg.max_retries)


def generate_population(cfg: SeedConfig, count: int) -> list:
    """Independent seeds, one derived rng stream per index."""
    return [
        generate_seed(cfg, derive_rng(cfg.rng_seed, "seed", i)) for i in range(count)
    ]
