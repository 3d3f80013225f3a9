"""Tests for training recipes and the named method presets."""

import pytest

from zscl.recipe import PRESETS, RecipeError, TrainRecipe, make_recipe


class TestPresets:
    def test_all_presets_construct_and_validate(self):
        for name in PRESETS:
            recipe = make_recipe(name)
            assert recipe.method == name

    def test_ft_is_plain_cross_entropy(self):
        r = make_recipe("FT")
        assert not r.distills
        assert not r.wc_on and not r.we_on and not r.replay_on
        assert not r.wise_ft_post_on

    def test_zscl_combines_distillation_and_weight_space(self):
        r = make_recipe("ZSCL")
        assert r.distill_sides == "both"
        assert r.data_source == "reference"
        assert r.teacher == "initial"
        assert r.we_on and r.wc_on
        assert r.wc_reference == "initial"

    def test_zscl_star_lacks_consolidation(self):
        r = make_recipe("ZSCL*")
        assert r.we_on and not r.wc_on

    def test_lwf_distills_current_task_from_previous(self):
        r = make_recipe("LwF")
        assert r.data_source == "current_task"
        assert r.teacher == "previous"

    def test_lwf_vr_uses_random_reference_texts(self):
        r = make_recipe("LwF-VR")
        assert r.data_source == "reference"
        assert r.ref_text_source == "random"

    def test_zero_shot_trains_nothing(self):
        assert make_recipe("ZeroShot").iterations == 0

    def test_unknown_preset(self):
        with pytest.raises(RecipeError):
            make_recipe("SGD")

    def test_overrides_apply(self):
        r = make_recipe("ZSCL", lam=2.5, iterations=10)
        assert r.lam == 2.5
        assert r.iterations == 10


class TestValidation:
    def test_rejects_unknown_enum_values(self):
        for kw in (
            {"distill_sides": "above"},
            {"teacher": "oracle"},
            {"data_source": "internet"},
            {"wc_reference": "best"},
            {"wise_ft_anchor": "midpoint"},
            {"ref_text_source": "book"},
        ):
            with pytest.raises(RecipeError):
                make_recipe("FT", **kw)

    def test_rejects_out_of_range_scalars(self):
        for kw in (
            {"label_smoothing": 1.0},
            {"label_smoothing": -0.1},
            {"lam": -1.0},
            {"iterations": -1},
            {"teacher_wise_alpha": 1.5},
            {"wise_ft_alpha": -0.5},
        ):
            with pytest.raises(RecipeError):
                make_recipe("FT", **kw)

    def test_rejects_bad_we_interval(self):
        with pytest.raises(RecipeError):
            make_recipe("ZSCL", we_interval=0)

    def test_rejects_bad_replay_capacity(self):
        with pytest.raises(RecipeError):
            make_recipe("Replay", replay_capacity=0)

    def test_defaults_match_training_protocol(self):
        r = TrainRecipe()
        assert r.iterations == 1000
        assert r.batch_size == 64
        assert r.label_smoothing == 0.2
        assert r.lam == 1.0
        assert r.we_interval == 100
        assert r.weight_decay == 0.0
        assert not r.train_log_temperature
