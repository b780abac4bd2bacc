"""Evaluation metrics computed on parsed responses.

Token-level likelihood drives optimization; these metrics judge the parsed
*content* of generations instead. The combined cross-entropy treats a
response as one vector — a 0/1 category indicator with the travel cost
appended — softmax-normalizes truth and prediction, and scores
``-sum(p * log q)``. It is logged, never optimized.
"""

import math

from .decoding import ResponseTemplater
from .tokenizer import word_tokens

_Q_FLOOR = 1e-12


def response_fields(text: str, category_names) -> tuple:
    """(category name set, cost_km) parsed from a canonical response string."""
    names, cost = ResponseTemplater(category_names).extract(word_tokens(text))
    return frozenset(names), cost


def _softmax(values) -> list:
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def combined_cross_entropy(
    truth_names, truth_cost: float, pred_names, pred_cost: float, category_names
) -> float:
    truth_names, pred_names = set(truth_names), set(pred_names)
    truth_vec = [1.0 if n in truth_names else 0.0 for n in category_names]
    pred_vec = [1.0 if n in pred_names else 0.0 for n in category_names]
    truth_vec.append(float(truth_cost))
    pred_vec.append(float(pred_cost))
    p, q = _softmax(truth_vec), _softmax(pred_vec)
    return -sum(pi * math.log(max(qi, _Q_FLOOR)) for pi, qi in zip(p, q))


def category_set_match(truth_names, pred_names) -> bool:
    return set(truth_names) == set(pred_names)
