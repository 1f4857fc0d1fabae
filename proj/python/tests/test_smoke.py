import math
import os
import shutil
from pathlib import Path

import pytest

import simeval

FIXTURES = Path(os.environ.get("SIMEVAL_FIXTURE_DIR", Path(__file__).resolve().parents[2] / "tests" / "fixtures"))


def test_rouge_worked_values():
    ref = "5/8 divided by 1/6?"
    assert simeval.rouge_l("5/8 divided by 1/6", ref) == pytest.approx(1.0)
    assert simeval.rouge_l("5/8", ref) == pytest.approx(0.5)
    assert simeval.rouge_l("8/5", ref) == pytest.approx(0.25)
    assert simeval.rouge_l("So, would I divide 1/6 by 5/8?", ref) == pytest.approx(0.2667, abs=5e-5)
    assert simeval.rouge_tokenize("So, 5/8?") == ["so", "5", "8"]
    assert simeval.lcs_length(["a", "b", "c"], ["b", "c"]) == 2


def test_knowledge_and_quantiles():
    gt = {f"kc{i}": q for i, q in enumerate([2, 2, 1, 2, 2, 1])}
    cand = {k: 3 for k in gt}
    assert simeval.knowledge_similarity(gt, cand) == pytest.approx(1 - 8 / 24)
    upper = [-0.0234, 0.0, 0.0156, 0.0430]
    assert simeval.quantize(0.0117, upper) == 2
    assert simeval.quantize(0.0391, upper) == 3
    assert simeval.quantize(1.0, upper) == 4
    assert simeval.fit_quantile_boundaries([1, 2, 3, 4, 5, 6]) == pytest.approx([2.0, 3.0, 4.0, 5.0])
    with pytest.raises(simeval.Error):
        simeval.fit_quantile_boundaries([1, 2])


def test_agreement_and_likelihood():
    assert simeval.cohen_kappa(["x", "x"], ["x", "x"]) == 1.0
    assert simeval.pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert simeval.pearson_r([1, 1, 1], [1, 2, 3]) is None
    assert simeval.tutor_response_likelihood([math.log(0.2)] * 4) == pytest.approx(0.2)


def test_preference_pairs():
    pairs = simeval.preference_pairs([0.9, 0.75, 0.85, 0.2], student_ordinal=6)
    assert len(pairs) == 4
    assert pairs[0][:2] == (0, 3)
    assert simeval.preference_pairs([1.0, 0.0], student_ordinal=2) == []
    assert len(simeval.preference_pairs([0.9, 0.75, 0.85, 0.2], student_ordinal=6, strict=False)) == 5


def test_fixture_pipeline(tmp_path):
    stats = simeval.corpus_stats(FIXTURES / "dialogues.jsonl")
    assert stats["dialogues"] == 5
    assert stats["rejected"] == 0
    for name in ("dialogues.jsonl", "backends.toml", "pipeline.toml"):
        shutil.copy(FIXTURES / name, tmp_path / name)
    first = simeval.run_pipeline(tmp_path / "pipeline.toml")
    assert [s[0] for s in first] == ["annotate", "simulate", "evaluate", "pairs", "report"]
    assert not any(s[1] for s in first)
    assert all(s[1] for s in simeval.run_pipeline(tmp_path / "pipeline.toml"))
