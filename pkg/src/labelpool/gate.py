"""Two-vector binary gate routing queries to a specialist branch.

The gate holds the mean of a selected subset of the pool's label vectors
(the "yes" side) and the mean of everything else; a query goes to the branch
iff it is strictly more similar to the yes side. Ties fall back to the main
pool, which covers all classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from .errors import ValidationError
from .head import LinearClassifier, predict
from .similarity import DEFAULT_SOFTMAX, SimilarityKind, SoftmaxConfig, classify, sim
from .types import ClassId, LabelVector, Pool, as_embedding


class Route(Enum):
    BRANCH = "branch"
    MAIN = "main"


@dataclass(frozen=True, eq=False)
class Gate:
    yes_vector: np.ndarray
    no_vector: np.ndarray
    kind: SimilarityKind
    branch_id: str = "branch"

    def __post_init__(self):
        object.__setattr__(self, "yes_vector", as_embedding(self.yes_vector))
        object.__setattr__(self, "no_vector", as_embedding(self.no_vector, dim=self.yes_vector.shape[0]))


def domain_selector(domain_id: Optional[int]) -> Callable[[LabelVector], bool]:
    return lambda entry: entry.domain_id == domain_id

def namespace_selector(namespace: str) -> Callable[[LabelVector], bool]:
    return lambda entry: entry.class_id.namespace == namespace


def build_gate(
    pool: Pool,
    predicate: Callable[[LabelVector], bool],
    kind: SimilarityKind,
    branch_id: str = "branch",
) -> Gate:
    """Unweighted means of the selected vs. unselected label vectors."""
    yes_acc = np.zeros(pool.dim)
    no_acc = np.zeros(pool.dim)
    n_yes = 0
    n_no = 0
    for entries in pool.entries.values():
        for entry in entries:
            if predicate(entry):
                yes_acc += entry.vector
                n_yes += 1
            else:
                no_acc += entry.vector
                n_no += 1
    if n_yes == 0 or n_no == 0:
        raise ValidationError(
            f"gate needs label vectors on both sides (selected={n_yes}, rest={n_no})"
        )
    return Gate(yes_acc / n_yes, no_acc / n_no, kind, branch_id)


def route(gate: Gate, query) -> Route:
    """BRANCH iff the query is strictly closer to the yes vector."""
    q = as_embedding(query, dim=gate.yes_vector.shape[0])
    if sim(gate.kind, gate.yes_vector, q) > sim(gate.kind, gate.no_vector, q):
        return Route.BRANCH
    return Route.MAIN


def gated_classify(
    gate: Gate,
    branch: Union[Pool, LinearClassifier],
    main_pool: Pool,
    query,
    kind: SimilarityKind,
    cfg: SoftmaxConfig = DEFAULT_SOFTMAX,
) -> ClassId:
    """Route, then classify with the chosen side."""
    if route(gate, query) is Route.BRANCH:
        if isinstance(branch, LinearClassifier):
            return predict(branch, query)
        return classify(kind, branch, query, cfg)[0]
    return classify(kind, main_pool, query, cfg)[0]
