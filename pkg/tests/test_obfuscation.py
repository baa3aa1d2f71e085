from __future__ import annotations

import math
import re

import pytest

from npmsift.corpus import obfuscation_corpus, plain_source
from npmsift.models import default_obfuscation_model
from npmsift.obfuscation import (FEATURE_NAMES, classify_obfuscated,
                                 extract_obf_features, feature_importance)
from npmsift.obfuscator import obfuscate


def test_line_count_feature():
    v = extract_obf_features("var a = 1;\n// c\n")
    assert v["of6"] == 2.0


def test_minified_single_line_ratio_one():
    src = "var a=1;var b=2;function f(x){return x+a;}"
    v = extract_obf_features(src)
    assert v["of1"] == 1.0


def test_of8_matches_independent_regex_oracle():
    src = obfuscate(plain_source(17), seed=17, string_array=False)

    def oracle(text: str) -> int:
        return (len(re.findall(r"\\x[0-9a-fA-F]{2}", text))
                + len(re.findall(r"\\u[0-9a-fA-F]{4}", text)))

    v = extract_obf_features(src)
    # the obfuscated fixture contains no bare hex literals, so the
    # escape-count oracle is exhaustive
    assert not re.search(r"(?<![\w$])0x[0-9a-fA-F]+", src)
    assert v["of8"] == float(oracle(src))
    assert v["of8"] > 0


def test_empty_source_is_error():
    with pytest.raises(ValueError):
        extract_obf_features("   \n  ")


def test_special_character_and_whitespace_counts():
    src = 'var a = "60%"; var b = a + "$" + "\\\\";\n'
    v = extract_obf_features(src)
    assert v["of5"] == 4.0   # one %, two $ (source has $ in string + code?)


def test_keyword_frequencies_bounded():
    v = extract_obf_features(plain_source(3))
    for name in FEATURE_NAMES[13:]:
        assert 0.0 <= v[name] <= 1.0


def test_identifier_stats_on_known_source():
    src = "var alpha = 1; var beta = alpha + 2;"
    v = extract_obf_features(src)
    # identifiers: alpha, beta, alpha
    assert v["of9"] == pytest.approx((5 + 4 + 5) / 3)


def test_obfuscation_increases_identifier_or_string_or_escape_features():
    for seed in range(12):
        src = plain_source(seed)
        plain_v = extract_obf_features(src)
        obf_v = extract_obf_features(obfuscate(src, seed=seed))
        assert (obf_v["of9"] > plain_v["of9"]
                or obf_v["of11"] > plain_v["of11"]
                or obf_v["of8"] > plain_v["of8"]), f"seed {seed}"


def test_classifier_on_plain_and_obfuscated_fixture():
    model = default_obfuscation_model()
    plain = "function add(a, b) {\n  return a + b;\n}\n" \
            "module.exports = { add };\n"
    label, _ = classify_obfuscated(extract_obf_features(plain), model)
    assert label == "plain"
    label, score = classify_obfuscated(
        extract_obf_features(obfuscate(plain_source(91), seed=91)), model)
    assert label == "obfuscated"
    again = classify_obfuscated(
        extract_obf_features(obfuscate(plain_source(91), seed=91)), model)
    assert again == (label, score)


def test_degraded_extraction_on_unlexable_source():
    v = extract_obf_features("var a = 'unterminated\nwhoops()")
    assert v.degraded
    assert v["of6"] == 2.0


def test_importances_sum_to_one():
    ranked = feature_importance(default_obfuscation_model())
    assert math.isclose(sum(v for _, v in ranked), 1.0, abs_tol=1e-9)
    assert all(v >= 0 for _, v in ranked)
    assert [n for n, _ in ranked] != sorted(n for n, _ in ranked)


def test_corpus_holdout_quick():
    from npmsift import mlcore
    from npmsift.mlcore import TrainParams
    rows = [(extract_obf_features(src).as_list(), label)
            for src, label in obfuscation_corpus(pairs=25, seed=77)]
    f1 = mlcore.kfold_f1(rows, folds=5, params=TrainParams(n_trees=30,
                                                           seed=5))
    assert f1 >= 0.9


def test_ratio_features_strictly_positive():
    sources = [src for src, _ in obfuscation_corpus(pairs=15, seed=3)]
    sources.append("x = 1;\ny = 2;\n")
    sources.append("const a = 'all spaces removable';\n")
    for src in sources:
        v = extract_obf_features(src)
        assert v["of1"] > 0.0
        assert v["of2"] > 0.0
        assert v["of10"] >= 0.0
        assert all(val >= 0.0 for val in v.as_list())
