import math

from minitune.evalmetrics import (
    category_set_match,
    combined_cross_entropy,
    response_fields,
)

CATS = ("Bakery", "Harbor", "Museum")


def test_response_fields_parses_canonical_text():
    names, cost = response_fields(
        '"POIs": [Museum, Bakery], "traveling cost": [4.1 kilometers]', CATS
    )
    assert names == frozenset({"Museum", "Bakery"})
    assert cost == 4.1


def test_category_set_match_ignores_order():
    assert category_set_match(["Harbor", "Bakery"], ["Bakery", "Harbor"])
    assert not category_set_match(["Harbor"], ["Bakery", "Harbor"])


def test_combined_ce_equals_truth_entropy_on_exact_match():
    # CE(p, p) = H(p); hand value for indicator [1,0,1] with cost 2:
    # logits (1,0,1,2) -> softmax p = (e, 1, e, e^2)/Z.
    z = math.e + 1 + math.e + math.e**2
    p = [math.e / z, 1 / z, math.e / z, math.e**2 / z]
    expected = -sum(pi * math.log(pi) for pi in p)
    got = combined_cross_entropy(
        {"Bakery", "Museum"}, 2.0, {"Bakery", "Museum"}, 2.0, CATS
    )
    assert math.isclose(got, expected, rel_tol=0, abs_tol=1e-12)


def test_combined_ce_penalizes_divergence():
    exact = combined_cross_entropy({"Bakery"}, 1.0, {"Bakery"}, 1.0, CATS)
    wrong_set = combined_cross_entropy({"Bakery"}, 1.0, {"Harbor"}, 1.0, CATS)
    wrong_cost = combined_cross_entropy({"Bakery"}, 1.0, {"Bakery"}, 9.0, CATS)
    assert wrong_set > exact
    assert wrong_cost > exact


def test_combined_ce_finite_on_extreme_cost():
    value = combined_cross_entropy({"Bakery"}, 1.0, set(), 700.0, CATS)
    assert math.isfinite(value)
