"""Smoke test for the prompttopic extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
then run:
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

import prompttopic as pt

FIXTURE = Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/demo"


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_ctfidf():
    corpus = pt.Corpus.from_texts(["a a b", "b c", "c c c"])
    scores = pt.ctfidf(corpus, [["t0"], ["t1"], ["t2"]])
    avg = 8 / 3
    assert close(scores["t0"]["a"], 2 * math.log(1 + avg / 2))
    assert close(scores["t2"]["c"], 3 * math.log(1 + avg / 4))
    assert pt.top_words(corpus, [["t0"], ["t1"], ["t2"]], "t1", 2) == ["b", "c"]


def check_corpus():
    corpus = pt.Corpus.from_texts(["The cats were running home", "dogs"], stopwords="english", lemmatize=True)
    assert len(corpus) == 2
    assert "the" not in corpus.tokens(0)
    size, avg_tokens, _ = corpus.stats()
    assert size == 2 and avg_tokens > 0


def check_npmi_and_diversity():
    corpus = pt.Corpus.from_texts(["a b c", "a b", "c d a", "b", "d d c"])
    assert close(pt.npmi(corpus, "a", "b", window=10), math.log(10 / 9) / math.log(2.5))
    assert -1.0 <= pt.topic_npmi(corpus, ["a", "b", "c", "d"], window=2) <= 1.0
    words = [f"w{i}" for i in range(10)]
    assert pt.topic_diversity({"x": words, "y": words}) == 0.5


def check_collapse():
    corpus = pt.Corpus.from_texts(["ball goal", "ball team", "oven bread", "oven flour"])
    topics, log = pt.collapse_wsm(corpus, [["soccer"], ["football"], ["baking"], ["bread"]], k=2, top_words=2)
    assert len(topics) == 2 and len(log) == 2
    assert sorted(d for docs in topics.values() for d in docs) == [0, 1, 2, 3]


def check_intrusion():
    topics = {f"t{k}": [f"t{k}w{i}" for i in range(10)] for k in range(4)}
    tasks = pt.make_intrusion_tasks(topics, tasks_per_topic=5, seed=3)
    assert len(tasks) == 20
    key = {task_id: intruder for task_id, _, _, intruder in tasks}
    answers = {task_id: (intruder if task_id < 13 else (intruder + 1) % 5) for task_id, intruder in key.items()}
    assert pt.score_intrusion(key, answers) == 0.65


def check_parse():
    assert pt.parse_topic_list("Topics: Movies, trailers.") == ["movies", "trailers"]
    try:
        pt.parse_topic_list("   ")
    except ValueError:
        pass
    else:
        raise AssertionError("empty answer should not parse")


def check_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp) / "demo"
        shutil.copytree(FIXTURE, work, ignore=shutil.ignore_patterns("out"))
        written = pt.run_pipeline(str(work / "config.toml"))
        names = {Path(p).name for p in written}
        assert {"topics.json", "representations.json", "report.json"} <= names, names


def main():
    checks = [check_corpus, check_ctfidf, check_npmi_and_diversity, check_collapse, check_intrusion, check_parse, check_pipeline]
    failed = 0
    for check in checks:
        try:
            check()
            print(f"ok    {check.__name__}")
        except Exception as e:  # noqa: BLE001
            failed += 1
            print(f"FAIL  {check.__name__}: {e!r}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
