"""Estimator facade: sklearn-style fit/predict/score plus input validation."""

import pytest

from intentdial import IntentPathEstimator
from intentdial import training as TR
from intentdial.graph import GeneratorSpec, synthesize_graph


@pytest.fixture(scope="module")
def graph():
    return synthesize_graph(
        GeneratorSpec(kinds=["card"], features_per_kind=2, n_queries=2), seed=1
    )


def make_estimator(graph, **kw):
    base = dict(
        graph=graph, epochs=6, batch_size=8, n_rollouts=8, eval_rollouts=8, horizon=3, seed=0
    )
    base.update(kw)
    return IntentPathEstimator(**base)


def dialogues_for(graph, count, seed):
    samples = TR.synthesize_dialogues(graph, count, (1, 1), seed=seed)
    X = [[" ".join(turn) for turn in s.turns] for s in samples]
    y = [s.query for s in samples]
    return X, y, samples


def test_requires_graph():
    with pytest.raises(ValueError):
        IntentPathEstimator().fit([["hi"]], ["q_0"])


def test_rejects_mismatched_lengths(graph):
    with pytest.raises(ValueError):
        make_estimator(graph).fit([["hi"]], [])


def test_rejects_unknown_labels(graph):
    with pytest.raises(ValueError):
        make_estimator(graph).fit([["hi"]], ["not_a_query"])


def test_predict_before_fit_raises(graph):
    with pytest.raises(RuntimeError):
        make_estimator(graph).predict([["hi"]])


def test_fit_predict_score_on_separable_task(graph):
    X, y, _ = dialogues_for(graph, 80, seed=2)
    est = make_estimator(graph, epochs=12).fit(X, y)
    acc = est.score(X[:40], y[:40])
    assert acc >= 0.9
    preds = est.predict(X[:5])
    assert all(isinstance(p, str) for p in preds)


def test_fit_samples_accepts_turn_level_labels(graph):
    _, _, samples = dialogues_for(graph, 30, seed=2)
    est = make_estimator(graph, epochs=1).fit_samples(samples)
    assert hasattr(est, "report_")
    assert len(est.report_.loss_trace) == 1


def test_sklearn_get_set_params_roundtrip(graph):
    est = make_estimator(graph)
    params = est.get_params()
    assert params["epochs"] == 6
    est.set_params(epochs=3)
    assert est.epochs == 3
