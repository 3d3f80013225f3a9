"""Tests for benchmark generation, evaluation, the accuracy matrix, and the
Transfer/Avg/Last metrics (including a full 11-task fixture matrix with
independently computed metric values)."""

import numpy as np
import pytest

from zscl.benchmark import (
    AccuracyMatrix,
    DomainSpec,
    PretrainingFailedError,
    build_matrix,
    build_reference_set,
    compute_metrics,
    evaluate,
    gen_domain,
    global_class_texts,
    pretrain_toy,
    split_class_incremental,
    text_projection,
)
from zscl.model import Arch, TwoTowerModel, init_params
from zscl.numerics import DimensionError

ARCH = Arch(image_dim=8, text_dim=6, embed_dim=4, image_hidden=(6,), text_hidden=(6,))


def make_task(seed=0, classes=4, offset=0, **kw):
    spec = DomainSpec(
        domain_id=seed,
        num_classes=classes,
        train_per_class=kw.pop("train_per_class", 10),
        test_per_class=kw.pop("test_per_class", 6),
        pretrain_per_class=kw.pop("pretrain_per_class", 5),
        seed=seed,
        **kw,
    )
    return gen_domain(spec, ARCH.image_dim, ARCH.text_dim, class_offset=offset)


def make_model(seed=0):
    return TwoTowerModel(ARCH, init_params(ARCH, np.random.default_rng(seed)))


class TestDomainGeneration:
    def test_shapes_and_labels(self):
        t = make_task(classes=5)
        assert t.train_images.shape == (50, 8)
        assert t.test_images.shape == (30, 8)
        assert t.pretrain_images.shape == (25, 8)
        assert t.class_texts.shape == (5, 6)
        assert set(t.train_labels) == set(range(5))
        assert t.num_classes == 5

    def test_seeded_generation_reproducible(self):
        a, b = make_task(3), make_task(3)
        np.testing.assert_array_equal(a.train_images, b.train_images)
        np.testing.assert_array_equal(a.class_texts, b.class_texts)

    def test_different_seeds_differ(self):
        assert np.abs(make_task(1).train_images - make_task(2).train_images).max() > 0

    def test_prototypes_on_sphere(self):
        # noise-free samples collapse onto unit-norm class prototypes
        t = make_task(image_noise=0.0, prototype_scale=1.0)
        protos = t.train_images[:: t.train_images.shape[0] // 4][:4]
        np.testing.assert_allclose(np.linalg.norm(protos, axis=1), 1.0, atol=1e-12)

    def test_splits_disjoint_draws(self):
        t = make_task()
        assert np.abs(t.train_images[:5] - t.test_images[:5]).max() > 0
        assert np.abs(t.train_images[:5] - t.pretrain_images[:5]).max() > 0

    def test_rejects_single_class(self):
        with pytest.raises(ValueError):
            DomainSpec(domain_id=0, num_classes=1)

    def test_rejects_negative_noise(self):
        with pytest.raises(ValueError):
            DomainSpec(domain_id=0, num_classes=3, image_noise=-0.1)

    def test_projection_fixed_across_calls(self):
        np.testing.assert_array_equal(text_projection(8, 6), text_projection(8, 6))


class TestClassIncrementalSplit:
    def test_partition_covers_all_classes(self):
        base = make_task(classes=6)
        steps = split_class_incremental(base, [3, 2, 1])
        assert [t.num_classes for t in steps] == [3, 2, 1]
        assert [t.class_offset for t in steps] == [0, 3, 5]
        total = sum(t.train_images.shape[0] for t in steps)
        assert total == base.train_images.shape[0]

    def test_labels_reindexed_per_step(self):
        steps = split_class_incremental(make_task(classes=6), [3, 3])
        assert set(steps[1].train_labels) == {0, 1, 2}

    def test_rejects_wrong_total(self):
        with pytest.raises(ValueError):
            split_class_incremental(make_task(classes=6), [3, 2])


class TestReferenceSet:
    def test_pools_aggregate_all_tasks(self):
        tasks = [make_task(s, offset=4 * s) for s in range(3)]
        ref = build_reference_set(tasks, np.random.default_rng(0))
        assert ref.images.shape[0] == sum(t.pretrain_images.shape[0] for t in tasks)
        assert ref.texts.shape[0] == sum(t.num_classes for t in tasks)

    def test_random_text_source(self):
        tasks = [make_task(s, offset=4 * s) for s in range(2)]
        ref = build_reference_set(tasks, np.random.default_rng(0), text_source="random",
                                  random_texts=32)
        assert ref.texts.shape == (32, 6)


class TestEvaluate:
    def test_task_incremental_uses_own_classes(self):
        t = make_task(image_noise=0.0, text_noise=0.0)
        acc = evaluate(make_model(), t)
        assert 0.0 <= acc <= 1.0

    def test_class_incremental_needs_all_tasks(self):
        t = make_task()
        with pytest.raises(ValueError):
            evaluate(make_model(), t, mode="class_incremental")

    def test_class_incremental_at_most_task_incremental(self):
        tasks = [make_task(s, offset=4 * s) for s in range(3)]
        m = make_model()
        for t in tasks:
            ti = evaluate(m, t, "task_incremental")
            ci = evaluate(m, t, "class_incremental", all_tasks=tasks)
            assert ci <= ti + 1e-12

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            evaluate(make_model(), make_task(), mode="open_set")

    def test_global_class_texts_ordered_by_offset(self):
        tasks = [make_task(s, offset=4 * s) for s in range(2)]
        union = global_class_texts(list(reversed(tasks)))
        np.testing.assert_array_equal(union[:4], tasks[0].class_texts)


class TestAccuracyMatrix:
    def test_rejects_non_square(self):
        with pytest.raises(DimensionError):
            AccuracyMatrix(np.zeros((2, 3)), ["a", "b"])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            AccuracyMatrix(np.array([[1.5]]), ["a"])

    def test_build_matrix_shape(self):
        tasks = [make_task(s, offset=4 * s) for s in range(3)]
        snapshots = [make_model(s) for s in range(3)]
        mat = build_matrix(snapshots, tasks)
        assert mat.values.shape == (3, 3)
        assert mat.task_names == [t.name for t in tasks]

    def test_build_matrix_rejects_count_mismatch(self):
        tasks = [make_task(s, offset=4 * s) for s in range(2)]
        with pytest.raises(DimensionError):
            build_matrix([make_model()], tasks)


class TestMetrics:
    def test_hand_matrix(self):
        mat = AccuracyMatrix(
            np.array([[0.80, 0.50, 0.40], [0.70, 0.90, 0.45], [0.65, 0.85, 0.95]]),
            ["a", "b", "c"],
        )
        rep = compute_metrics(mat)
        assert rep.transfer == pytest.approx(0.4625, abs=1e-4)
        assert rep.avg == pytest.approx(0.688889, abs=1e-4)
        assert rep.last == pytest.approx(0.816667, abs=1e-4)
        # first task has no pre-training rows, so no transfer entry
        assert rep.per_dataset["a"]["transfer"] is None
        assert rep.per_dataset["b"]["transfer"] == pytest.approx((0.50), abs=1e-12)
        assert rep.per_dataset["c"]["transfer"] == pytest.approx((0.40 + 0.45) / 2, abs=1e-12)

    def test_eleven_task_fixture(self):
        # full 11-task accuracy matrix with independently computed summary
        # metrics: Transfer 68.1, Avg 75.4, Last 83.6 (percent)
        rows = [
            [55.1, 86.0, 66.3, 44.9, 49.2, 70.6, 88.3, 53.6, 87.4, 61.3, 65.7],
            [48.9, 94.2, 68.6, 44.7, 50.4, 67.0, 87.6, 55.2, 85.0, 61.0, 65.9],
            [47.1, 93.1, 86.2, 46.5, 50.1, 68.8, 87.7, 63.4, 87.6, 60.6, 67.4],
            [47.0, 93.8, 85.0, 76.2, 51.7, 69.9, 87.8, 65.9, 88.4, 61.2, 67.2],
            [46.1, 92.8, 84.0, 75.0, 97.8, 69.1, 87.1, 67.6, 88.0, 60.3, 67.1],
            [43.8, 92.5, 83.2, 73.5, 97.2, 96.3, 87.1, 63.3, 86.5, 58.8, 66.9],
            [44.3, 92.2, 82.9, 71.2, 96.8, 93.8, 92.2, 63.5, 87.3, 60.3, 67.9],
            [41.9, 91.9, 80.5, 67.8, 95.3, 89.5, 91.9, 99.0, 84.4, 58.4, 66.5],
            [41.6, 91.8, 81.3, 68.2, 95.7, 90.7, 92.0, 98.8, 95.3, 58.9, 66.4],
            [39.8, 91.9, 81.8, 68.9, 95.7, 91.6, 91.8, 98.8, 94.5, 85.8, 67.3],
            [40.6, 92.2, 81.3, 70.5, 94.8, 90.5, 91.9, 98.7, 93.9, 85.3, 80.2],
        ]
        names = [
            "Aircraft", "Caltech101", "CIFAR100", "DTD", "EuroSAT", "Flowers",
            "Food", "MNIST", "OxfordPet", "Cars", "SUN397",
        ]
        mat = AccuracyMatrix(np.array(rows) / 100.0, names)
        rep = compute_metrics(mat)
        assert 100.0 * rep.transfer == pytest.approx(68.1, abs=0.1)
        assert 100.0 * rep.avg == pytest.approx(75.4, abs=0.1)
        assert 100.0 * rep.last == pytest.approx(83.6, abs=0.1)

    def test_single_task_has_no_transfer(self):
        rep = compute_metrics(AccuracyMatrix(np.array([[0.7]]), ["only"]))
        assert rep.transfer is None
        assert rep.avg == pytest.approx(0.7)
        assert rep.last == pytest.approx(0.7)

    def test_identity_matrix_metrics(self):
        rep = compute_metrics(AccuracyMatrix(np.eye(3), ["a", "b", "c"]))
        assert rep.transfer == pytest.approx(0.0)
        assert rep.avg == pytest.approx(1.0 / 3.0)
        assert rep.last == pytest.approx(1.0 / 3.0)


class TestPretraining:
    def small_domains(self):
        return [
            make_task(s, classes=4, offset=4 * s, image_noise=0.1, train_per_class=8,
                      pretrain_per_class=20)
            for s in range(2)
        ]

    def test_reaches_above_chance(self):
        domains = self.small_domains()
        model = make_model()
        trained = pretrain_toy(model, domains, iterations=300, rng=np.random.default_rng(0))
        for t in domains:
            assert evaluate(trained, t) > 2.0 / t.num_classes

    def test_raises_when_underfit(self):
        domains = self.small_domains()
        with pytest.raises(PretrainingFailedError):
            pretrain_toy(make_model(), domains, iterations=0, min_accuracy_ratio=3.9,
                         rng=np.random.default_rng(0))

    def test_needs_two_domains(self):
        with pytest.raises(ValueError):
            pretrain_toy(make_model(), [make_task()], iterations=1)

    def test_temperature_trains_during_pretraining(self):
        domains = self.small_domains()
        model = make_model()
        trained = pretrain_toy(model, domains, iterations=50, rng=np.random.default_rng(0))
        assert trained.params.log_temperature != model.params.log_temperature
