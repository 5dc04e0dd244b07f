import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from maskmix.estimator import MaskMixReenactor


@pytest.fixture(scope="module")
def fitted():
    est = MaskMixReenactor(layout="toy", iterations=10, batch_size=4, learning_rate=3e-3, hidden_width=8,
                           log_every=5)
    return est.fit()


def test_params_round_trip():
    est = MaskMixReenactor(layout="toy", iterations=3, cycle_enabled=False)
    params = est.get_params()
    assert params["iterations"] == 3 and params["cycle_enabled"] is False
    again = clone(est)
    assert again.get_params() == params
    est.set_params(lambda_id=0.5)
    assert est.lambda_id == 0.5


def test_fit_sets_attributes(fitted):
    assert fitted.n_iter_ == 10 and fitted.n_features_in_ == 128
    assert [r["iteration"] for r in fitted.log_] == [0, 5, 9]
    assert fitted.checkpoint_.world_digest == fitted.world_.digest


def test_transform_self_pairs_and_shapes(fitted):
    rng = np.random.default_rng(0)
    s = rng.normal(size=(3, 64))
    out = fitted.transform(np.hstack([s, s]))
    np.testing.assert_allclose(out, s, atol=1e-12)
    masks = fitted.predict_mask(np.hstack([s, rng.normal(size=(3, 64))]))
    assert masks.shape == (3, 64) and np.all((masks > 0) & (masks < 1))


def test_transform_checks_width(fitted):
    with pytest.raises(ValueError, match="128"):
        fitted.transform(np.zeros((2, 100)))


def test_score_and_evaluate(fitted):
    assert 0.0 <= fitted.score(n_pairs=20) <= 1.0
    assert fitted.evaluate(n_pairs=10).n_pairs == 10


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        MaskMixReenactor(layout="toy").transform(np.zeros((1, 128)))
