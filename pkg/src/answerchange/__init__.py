"""Causal effects of answer changing on multiple-choice items.

Point-identified effects on changers, bounds for everyone else, and a
Monte Carlo search for test-level bounds when only pooled counts exist.
"""

from answerchange.response_model import (
    Choice,
    ItemTally,
    PotentialRow,
    ResponseRecord,
    ResponseType,
    ValidationError,
    classify,
    impute_rows,
    tally_from_matrix,
    tally_item,
)
from answerchange.estimators import (
    EffectResult,
    Estimand,
    ItemEffects,
    att_item,
    ate_bound_item,
    atu_bound_item,
    collapsed_ate_bound,
    collapsed_envelope,
    effects_true_false,
    item_effects,
    test_level,
)

__version__ = "0.1.0"

__all__ = [
    "Choice",
    "EffectResult",
    "Estimand",
    "ItemEffects",
    "ItemTally",
    "PotentialRow",
    "ResponseRecord",
    "ResponseType",
    "ValidationError",
    "att_item",
    "ate_bound_item",
    "atu_bound_item",
    "classify",
    "collapsed_ate_bound",
    "collapsed_envelope",
    "effects_true_false",
    "impute_rows",
    "item_effects",
    "tally_from_matrix",
    "tally_item",
    "test_level",
]
