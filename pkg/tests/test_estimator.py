import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from edgepress.estimator import CoughNetClassifier, PrunedClassifier, QuantizedClassifier, check_inputs
from edgepress.exceptions import DataError, ShapeError
from edgepress.features.transformers import FeatureStandardizer

from conftest import separable_set, small_config

SHAPE = (6, 9, 2)


@pytest.fixture(scope="module")
def data():
    X, y = separable_set(120, SHAPE, seed=11)
    return X[:90] * 5 + 3, y[:90], X[90:] * 5 + 3, y[90:]


@pytest.fixture(scope="module")
def fitted(data):
    X, y, _, _ = data
    return make_pipeline(FeatureStandardizer(), CoughNetClassifier(small_config(), epochs=6, batch_size=16, seed=0)).fit(X, y)


class TestCheckInputs:
    def test_ok(self):
        X, y = check_inputs(np.zeros((3, 2)), [0, 1, 1])
        assert X.dtype == np.float32 and y.dtype == np.int64

    @pytest.mark.parametrize("X,y,err", [(np.zeros(3), None, ShapeError), (np.full((2, 2), np.nan), None, DataError),
                                         (np.zeros((3, 2)), [0, 1], DataError), (np.zeros((2, 2)), [0, 2], DataError)])
    def test_rejects(self, X, y, err):
        with pytest.raises(err):
            check_inputs(X, y)

    def test_shape(self):
        with pytest.raises(ShapeError):
            check_inputs(np.zeros((2, 3, 3)), input_shape=(3, 4))


class TestCoughNet:
    def test_params_and_clone(self):
        est = CoughNetClassifier(small_config(), epochs=3, learning_rate=0.01)
        assert est.get_params()["epochs"] == 3
        twin = clone(est).set_params(epochs=4)
        assert twin.epochs == 4 and est.epochs == 3

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            CoughNetClassifier(small_config()).predict(np.zeros((1,) + SHAPE))

    def test_pipeline_learns(self, fitted, data):
        _, _, Xt, yt = data
        proba = fitted.predict_proba(Xt)
        assert proba.shape == (len(Xt), 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-6)
        assert fitted[-1].auc(fitted[0].transform(Xt), yt) > 0.9
        assert fitted.score(Xt, yt) > 0.8

    def test_deterministic(self, data, fitted):
        X, y, Xt, _ = data
        again = clone(fitted).fit(X, y)
        np.testing.assert_array_equal(again.predict_proba(Xt), fitted.predict_proba(Xt))

    def test_wrong_shape(self, fitted):
        with pytest.raises(ShapeError):
            fitted[-1].predict(np.zeros((2, 3, 3, 2)))


class TestCompressed:
    def test_pruned(self, fitted, data):
        X, y, Xt, yt = data
        Xs = fitted[0].transform(X)
        p = PrunedClassifier(fitted[-1], sparsity=0.5, epochs=4, frequency=2, seed=0).fit(Xs, y)
        for k, mask in p.model_.masks.items():
            assert (~mask).sum() == int(0.5 * mask.size)
        assert p.auc(fitted[0].transform(Xt), yt) > 0.8
        assert p.estimator_ is fitted[-1]

    def test_pruned_fits_base_when_needed(self, data):
        X, y, _, _ = data
        pipe = make_pipeline(FeatureStandardizer(), PrunedClassifier(CoughNetClassifier(small_config(), epochs=2),
                                                                     sparsity=0.5, epochs=1))
        pipe.fit(X, y)
        assert hasattr(pipe[-1].estimator_, "model_")
        assert not hasattr(pipe[-1].estimator, "model_")

    @pytest.mark.parametrize("bits", [8, 16])
    def test_quantized(self, fitted, data, bits):
        _, _, Xt, _ = data
        Xs = fitted[0].transform(Xt)
        q = QuantizedClassifier(fitted[-1], bits=bits).fit()
        assert q.model_.bits == bits
        assert np.abs(q.decision_function(Xs) - fitted[-1].decision_function(Xs)).max() < 0.05

    def test_quantized_needs_data(self):
        with pytest.raises(DataError):
            QuantizedClassifier(CoughNetClassifier(small_config())).fit()
