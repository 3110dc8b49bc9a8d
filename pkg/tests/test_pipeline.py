"""Training pipeline: datasets, grid search, multiclass, metrics, sweeps."""

import numpy as np
import pytest

from ttkm.kernels import KernelSpec, LinearKernel, RbfKernel, build_gram
from ttkm.pipeline import (
    Dataset,
    GridConfig,
    Metrics,
    OvoModel,
    SvmModel,
    compute_metrics,
    decision_function,
    evaluate,
    make_pair_dataset,
    predict,
    rank_sweep,
    train_binary,
    train_multiclass_ovo,
)
from ttkm.tensor import DenseTensor, reconstruct


def blob_dataset(rng, classes=(0, 1), n_train=6, n_val=4, n_test=4,
                 dims=(3, 3, 4), noise=0.05):
    """Well-separated class clusters around random unit-norm centers."""
    centers = {}
    for c in classes:
        base = rng.standard_normal(dims)
        centers[c] = base / np.linalg.norm(base)
    samples, labels, split = [], [], []
    for c in classes:
        for name, count in (("train", n_train), ("validation", n_val), ("test", n_test)):
            for _ in range(count):
                x = centers[c] + noise * rng.standard_normal(dims)
                samples.append(DenseTensor(x))
                labels.append(c)
                split.append(name)
    return Dataset(samples=samples, labels=np.array(labels), split=np.array(split, dtype=object))


def small_grid(d=3, ranks=(2,), cs=(10.0,), sigmas=(1.0,), combine="prod",
               kinds=None):
    return GridConfig(
        c_values=cs,
        sigma_values=sigmas,
        rank_values=ranks,
        mode_kinds=("rbf",) * d if kinds is None else kinds,
        combine=combine,
    )


def linear_grid(d=3, ranks=(4,), cs=(10.0,)):
    """All-linear product grid: kernel values equal dense inner products,
    so jointly decomposed and per-sample decomposed TTs agree exactly
    whenever the rank chain is high enough for exact reconstruction."""
    return small_grid(d=d, ranks=ranks, cs=cs, kinds=("linear",) * d)


def bias_only_model(neg, pos, bias):
    """Degenerate model with no support vectors: decision value == bias."""
    return SvmModel(
        support=(),
        coef=np.zeros(0),
        bias=bias,
        spec=KernelSpec.uniform(LinearKernel(), 2),
        dims=(2, 2),
        interior_ranks=(1,),
        neg_class=neg,
        pos_class=pos,
    )


class TestDataset:
    def test_subset_and_counts(self):
        rng = np.random.default_rng(1)
        ds = blob_dataset(rng)
        tr_s, tr_y = ds.subset("train")
        assert len(tr_s) == 12 and len(tr_y) == 12
        assert ds.counts() == {"train": 12, "validation": 8, "test": 8}
        assert ds.classes == (0, 1)

    def test_validation_errors(self):
        s = [DenseTensor(np.zeros((2, 2)))]
        with pytest.raises(ValueError):
            Dataset(samples=s, labels=np.array([0, 1]), split=np.array(["train"], dtype=object))
        with pytest.raises(ValueError):
            Dataset(samples=s, labels=np.array([0]), split=np.array(["dev"], dtype=object))
        with pytest.raises(ValueError):
            Dataset(
                samples=[DenseTensor(np.zeros((2, 2))), DenseTensor(np.zeros((2, 3)))],
                labels=np.array([0, 1]),
                split=np.array(["train", "train"], dtype=object),
            )

    def test_restrict_classes(self):
        rng = np.random.default_rng(2)
        ds = blob_dataset(rng, classes=(0, 1, 2))
        sub = ds.restrict_classes((0, 2))
        assert sub.classes == (0, 2)
        assert len(sub.samples) == 28

    def test_from_arrays(self):
        x = np.zeros((3, 2, 2))
        ds = Dataset.from_arrays(x, np.array([0, 1, 0]), np.array(["train"] * 3, dtype=object))
        assert len(ds.samples) == 3
        assert ds.dims == (2, 2)


class TestMakePairDataset:
    def test_counts_and_split_layout(self):
        rng = np.random.default_rng(3)
        train_s = [DenseTensor(rng.standard_normal((2, 2))) for _ in range(40)]
        train_y = np.repeat([3, 7], 20)
        test_s = [DenseTensor(rng.standard_normal((2, 2))) for _ in range(10)]
        test_y = np.array([3, 7, 7, 3, 3, 9, 9, 7, 3, 7])
        ds = make_pair_dataset(train_s, train_y, test_s, test_y, (7, 3),
                               train_per_class=5, val_per_class=3, seed=11)
        assert ds.counts() == {"train": 10, "validation": 6, "test": 8}
        # class 9 test samples are excluded
        _, test_labels = ds.subset("test")
        assert set(test_labels) == {3, 7}

    def test_seed_determinism(self):
        rng = np.random.default_rng(4)
        train_s = [DenseTensor(rng.standard_normal((2, 2))) for _ in range(30)]
        train_y = np.repeat([0, 1], 15)
        a = make_pair_dataset(train_s, train_y, train_s[:2], train_y[:2], (0, 1), 4, 4, seed=5)
        b = make_pair_dataset(train_s, train_y, train_s[:2], train_y[:2], (0, 1), 4, 4, seed=5)
        for s1, s2 in zip(a.samples, b.samples):
            np.testing.assert_array_equal(s1.values, s2.values)

    def test_insufficient_pool_rejected(self):
        s = [DenseTensor(np.zeros((2, 2)))] * 4
        y = np.array([0, 0, 1, 1])
        with pytest.raises(ValueError, match="need"):
            make_pair_dataset(s, y, s, y, (0, 1), train_per_class=2, val_per_class=1, seed=0)


class TestGridConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_grid(cs=(0.0,))
        with pytest.raises(ValueError):
            small_grid(ranks=())
        with pytest.raises(ValueError):
            GridConfig(c_values=(1.0,), sigma_values=(1.0,), rank_values=(2,),
                       mode_kinds=("rbf", "sigmoid"))

    def test_rank_settings_expand_ints(self):
        g = small_grid(ranks=(2, (3, 4)))
        assert g.rank_settings(3) == [(2, 2), (3, 4)]
        with pytest.raises(ValueError):
            g.rank_settings(4)

    def test_sigma_axis_collapses_without_rbf(self):
        g = GridConfig(c_values=(1.0,), sigma_values=(1.0, 2.0), rank_values=(2,),
                       mode_kinds=("linear", "poly"))
        assert g.sigmas() == (None,)
        spec = g.make_spec(None)
        assert spec.order == 2

    def test_make_spec_substitutes_sigma(self):
        g = small_grid(d=2)
        spec = g.make_spec(42.0)
        assert spec.per_mode == (RbfKernel(42.0), RbfKernel(42.0))


class TestTrainBinary:
    def test_separable_blobs_reach_full_validation_accuracy(self):
        # rbf kernel, C=1, sigma=1, all interior ranks 2
        rng = np.random.default_rng(10)
        ds = blob_dataset(rng)
        model = train_binary(ds, small_grid(cs=(1.0,)))
        assert model.validation_accuracy == 1.0

    def test_linear_prod_blobs_reach_full_test_accuracy(self):
        rng = np.random.default_rng(10)
        ds = blob_dataset(rng)
        model = train_binary(ds, linear_grid())
        assert model.validation_accuracy == 1.0
        m = evaluate(model, ds, split="test")
        assert m.accuracy == 1.0

    def test_predictions_on_training_samples(self):
        # zero training error at large C on separable data, so predicting
        # on the training split must recover the training labels
        rng = np.random.default_rng(11)
        ds = blob_dataset(rng)
        model = train_binary(ds, linear_grid(cs=(100.0,)))
        tr_s, tr_y = ds.subset("train")
        np.testing.assert_array_equal(predict(model, tr_s), tr_y)

    def test_deterministic_retrain_matches_scan(self):
        rng = np.random.default_rng(12)
        ds = blob_dataset(rng, noise=0.4)
        grid = small_grid(ranks=(1, 2), cs=(1.0, 10.0), sigmas=(0.5, 2.0))
        model = train_binary(ds, grid)
        matching = [
            e for e in model.info["grid"]
            if list(e["ranks"]) == model.grid_point["ranks"]
            and e["C"] == model.grid_point["C"]
            and e["sigma"] == model.grid_point["sigma"]
        ]
        assert len(matching) == 1
        assert model.validation_accuracy == matching[0]["validation_accuracy"]

    def test_training_is_deterministic(self):
        rng = np.random.default_rng(13)
        ds = blob_dataset(rng, noise=0.3)
        grid = small_grid(ranks=(2,), cs=(1.0, 10.0), sigmas=(1.0, 2.0))
        a = train_binary(ds, grid)
        b = train_binary(ds, grid)
        np.testing.assert_array_equal(a.coef, b.coef)
        assert a.bias == b.bias
        assert a.grid_point == b.grid_point

    def test_tie_break_prefers_small_rank_then_c_then_sigma(self):
        # every grid point separates this easy data perfectly, so the
        # winner must be the lexicographically smallest combination
        rng = np.random.default_rng(14)
        ds = blob_dataset(rng, noise=0.01)
        grid = small_grid(ranks=(3, 1, 2), cs=(10.0, 1.0), sigmas=(5.0, 1.0))
        model = train_binary(ds, grid)
        assert all(e["validation_accuracy"] == 1.0 for e in model.info["grid"])
        assert model.grid_point == {"ranks": [1, 1], "C": 1.0, "sigma": 1.0}

    def test_grid_report_covers_every_point(self):
        rng = np.random.default_rng(15)
        ds = blob_dataset(rng)
        grid = small_grid(ranks=(1, 2), cs=(1.0, 10.0), sigmas=(1.0, 2.0))
        model = train_binary(ds, grid)
        assert len(model.info["grid"]) == 2 * 2 * 2

    def test_wrong_class_count_rejected(self):
        rng = np.random.default_rng(16)
        ds = blob_dataset(rng, classes=(0, 1, 2))
        with pytest.raises(ValueError, match="exactly 2"):
            train_binary(ds, small_grid())

    def test_validation_label_leak_rejected(self):
        rng = np.random.default_rng(17)
        ds = blob_dataset(rng)
        ds.labels[np.nonzero(ds.split == "validation")[0][0]] = 9
        with pytest.raises(ValueError, match="validation"):
            train_binary(ds, small_grid())

    def test_mode_kind_count_must_match_order(self):
        rng = np.random.default_rng(18)
        ds = blob_dataset(rng)
        with pytest.raises(ValueError, match="mode kinds"):
            train_binary(ds, small_grid(d=2))

    def test_class_mapping_smaller_id_is_negative(self):
        rng = np.random.default_rng(19)
        ds = blob_dataset(rng, classes=(5, 3))
        model = train_binary(ds, small_grid())
        assert (model.neg_class, model.pos_class) == (3, 5)


class TestPredict:
    def test_decision_values_and_labels_consistent(self):
        rng = np.random.default_rng(20)
        ds = blob_dataset(rng)
        model = train_binary(ds, small_grid())
        te_s, _ = ds.subset("test")
        vals = decision_function(model, te_s)
        labels = predict(model, te_s)
        np.testing.assert_array_equal(
            labels, np.where(vals >= 0, model.pos_class, model.neg_class)
        )

    def test_empty_input(self):
        model = bias_only_model(0, 1, bias=0.5)
        assert predict(model, []).shape == (0,)

    def test_no_support_vectors_returns_bias(self):
        model = bias_only_model(0, 1, bias=-0.25)
        samples = [DenseTensor(np.ones((2, 2)))] * 3
        np.testing.assert_allclose(decision_function(model, samples), -0.25)
        np.testing.assert_array_equal(predict(model, samples), [0, 0, 0])

    def test_zero_decision_value_goes_positive(self):
        model = bias_only_model(4, 9, bias=0.0)
        assert predict(model, [DenseTensor(np.ones((2, 2)))])[0] == 9

    def test_dims_mismatch_rejected(self):
        rng = np.random.default_rng(21)
        ds = blob_dataset(rng)
        model = train_binary(ds, small_grid())
        with pytest.raises(ValueError, match="dims"):
            predict(model, [DenseTensor(np.zeros((2, 2)))])

    def test_support_permutation_invariance(self):
        rng = np.random.default_rng(22)
        ds = blob_dataset(rng, noise=0.3)
        model = train_binary(ds, small_grid(cs=(1.0,)))
        assert len(model.support) >= 2
        perm = np.random.default_rng(0).permutation(len(model.support))
        shuffled = SvmModel(
            support=tuple(model.support[i] for i in perm),
            coef=model.coef[perm],
            bias=model.bias,
            spec=model.spec,
            dims=model.dims,
            interior_ranks=model.interior_ranks,
            neg_class=model.neg_class,
            pos_class=model.pos_class,
        )
        te_s, _ = ds.subset("test")
        np.testing.assert_allclose(
            decision_function(shuffled, te_s), decision_function(model, te_s), atol=1e-10
        )
        np.testing.assert_array_equal(predict(shuffled, te_s), predict(model, te_s))

    def test_normalize_makes_prediction_scale_invariant(self):
        rng = np.random.default_rng(23)
        ds = blob_dataset(rng)
        model = train_binary(ds, small_grid(), normalize=True)
        te_s, _ = ds.subset("test")
        scaled = [DenseTensor(7.0 * s.values) for s in te_s]
        np.testing.assert_array_equal(predict(model, scaled), predict(model, te_s))
        np.testing.assert_allclose(
            decision_function(model, scaled), decision_function(model, te_s), atol=1e-12
        )

    def test_support_rows_match_training_gram_at_full_rank(self):
        # at ranks high enough for exact decomposition, handing a support
        # vector's dense tensor back to the model must reproduce the
        # decision value implied by its training Gram row, rbf included
        rng = np.random.default_rng(24)
        ds = blob_dataset(rng)
        model = train_binary(ds, small_grid(ranks=(12,), cs=(1.0,)))
        gram = build_gram(list(model.support), model.spec).values
        sv_dense = [reconstruct(tt) for tt in model.support]
        vals = decision_function(model, sv_dense)
        np.testing.assert_allclose(vals, gram @ model.coef + model.bias, atol=1e-8)

    def test_rbf_test_accuracy_survives_truncated_ranks(self):
        # the predict-time representation stays aligned with the stored
        # support vectors even when the rank chain truncates the samples
        rng = np.random.default_rng(25)
        ds = blob_dataset(rng, n_train=10, n_val=6, n_test=8, noise=0.3)
        grid = small_grid(ranks=(2,), cs=(1.0, 10.0), sigmas=(0.5, 1.0, 2.0))
        model = train_binary(ds, grid)
        m = evaluate(model, ds, split="test")
        assert m.accuracy >= 0.9


class TestOvo:
    def test_two_class_ovo_matches_binary(self):
        rng = np.random.default_rng(30)
        ds = blob_dataset(rng, noise=0.3)
        grid = small_grid()
        binary = train_binary(ds, grid)
        ovo = train_multiclass_ovo(ds, grid)
        assert set(ovo.models) == {(0, 1)}
        te_s, _ = ds.subset("test")
        np.testing.assert_array_equal(ovo.predict(te_s), predict(binary, te_s))

    def test_three_class_blobs(self):
        rng = np.random.default_rng(31)
        ds = blob_dataset(rng, classes=(0, 1, 2))
        ovo = train_multiclass_ovo(ds, linear_grid())
        assert len(ovo.models) == 3
        m = evaluate(ovo, ds, split="test")
        assert m.accuracy >= 0.95

    def test_model_count_for_five_classes(self):
        rng = np.random.default_rng(32)
        ds = blob_dataset(rng, classes=(0, 1, 2, 3, 4), n_train=3, n_val=2, n_test=1)
        ovo = train_multiclass_ovo(ds, small_grid())
        assert len(ovo.models) == 10

    def test_vote_tie_broken_by_decision_strength(self):
        # three-way vote tie; class 1 accumulates the largest |value|
        ovo = OvoModel(
            classes=(0, 1, 2),
            models={
                (0, 1): bias_only_model(0, 1, bias=-1.0),
                (0, 2): bias_only_model(0, 2, bias=0.5),
                (1, 2): bias_only_model(1, 2, bias=-0.7),
            },
        )
        sample = [DenseTensor(np.ones((2, 2)))]
        assert ovo.predict(sample)[0] == 1

    def test_full_tie_broken_by_smallest_class_id(self):
        # vote tie and strength tie between classes 0 and 1
        ovo = OvoModel(
            classes=(0, 1, 2),
            models={
                (0, 1): bias_only_model(0, 1, bias=-1.0),
                (0, 2): bias_only_model(0, 2, bias=0.5),
                (1, 2): bias_only_model(1, 2, bias=-0.5),
            },
        )
        sample = [DenseTensor(np.ones((2, 2)))]
        assert ovo.predict(sample)[0] == 0


class TestMetrics:
    def test_hand_scored_fixture(self):
        m = compute_metrics([0, 0, 1, 1, 1], [0, 1, 1, 1, 0], classes=(0, 1))
        assert m.accuracy == pytest.approx(0.6)
        np.testing.assert_array_equal(m.confusion, [[1, 1], [1, 2]])
        assert m.per_class_recall[0] == pytest.approx(0.5)
        assert m.per_class_recall[1] == pytest.approx(2 / 3)

    def test_to_dict_round_trip_types(self):
        m = compute_metrics([0, 1], [0, 1], classes=(0, 1))
        d = m.to_dict()
        assert d["accuracy"] == 1.0
        assert d["confusion"] == [[1, 0], [0, 1]]

    def test_evaluate_rejects_unknown_labels(self):
        rng = np.random.default_rng(40)
        ds = blob_dataset(rng)
        model = train_binary(ds, small_grid())
        ds.labels[np.nonzero(ds.split == "test")[0][0]] = 9
        with pytest.raises(ValueError, match="not covered"):
            evaluate(model, ds, split="test")

    def test_evaluate_empty_split_rejected(self):
        rng = np.random.default_rng(41)
        ds = blob_dataset(rng, n_test=0)
        model = train_binary(ds, small_grid())
        with pytest.raises(ValueError, match="empty"):
            evaluate(model, ds, split="test")


def rank_one_dataset(rng, classes=(0, 1), n_train=6, n_val=4, n_test=4,
                     dims=(3, 3, 4), noise=0.05):
    """Separable clusters of exactly TT-rank-(1,...,1) samples: each sample
    is an outer product of per-mode factors, noise applied to the factors."""
    factors = {c: [rng.standard_normal(n) for n in dims] for c in classes}
    for fs in factors.values():
        for f in fs:
            f /= np.linalg.norm(f)
    samples, labels, split = [], [], []
    for c in classes:
        for name, count in (("train", n_train), ("validation", n_val), ("test", n_test)):
            for _ in range(count):
                parts = [f + noise * rng.standard_normal(f.shape) for f in factors[c]]
                x = parts[0]
                for p in parts[1:]:
                    x = np.multiply.outer(x, p)
                samples.append(DenseTensor(x))
                labels.append(c)
                split.append(name)
    return Dataset(samples=samples, labels=np.array(labels), split=np.array(split, dtype=object))


class TestRankSweep:
    def test_rows_and_accuracy_on_easy_data(self):
        # every swept rank is at least the true rank (1, 1), so accuracy
        # must hold up across the sweep instead of degrading
        rng = np.random.default_rng(50)
        ds = rank_one_dataset(rng)
        grid = linear_grid(ranks=(1, 2))
        rows = rank_sweep(ds, grid)
        assert [r["ranks"] for r in rows] == [[1, 1], [2, 2]]
        assert all(r["test_accuracy"] >= 0.95 for r in rows)
        assert rows[1]["test_accuracy"] >= rows[0]["test_accuracy"] - 1e-12
        assert all("validation_accuracy" in r and "C" in r for r in rows)

    def test_explicit_rank_list_overrides_grid(self):
        rng = np.random.default_rng(51)
        ds = blob_dataset(rng)
        rows = rank_sweep(ds, small_grid(ranks=(1,)), rank_values=(2,))
        assert rows[0]["ranks"] == [2, 2]
