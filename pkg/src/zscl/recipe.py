"""Training recipes: the knobs that distinguish continual-learning methods,
plus the named presets used in method comparisons.
"""

from dataclasses import dataclass

DISTILL_SIDES = ("none", "image", "text", "both", "feat_dist")
DATA_SOURCES = ("current_task", "reference")
TEACHERS = ("initial", "previous", "wise")
ANCHORS = ("initial", "previous")


class RecipeError(ValueError):
    """A recipe field is missing, unknown, or out of range."""


@dataclass
class TrainRecipe:
    method: str = "FT"
    distill_sides: str = "none"
    data_source: str = "reference"
    ref_text_source: str = "pool"  # "pool" or "random" (LwF-VR style)
    teacher: str = "initial"
    teacher_wise_alpha: float = 0.5
    lam: float = 1.0
    wc_on: bool = False
    wc_mu: float = 0.02
    wc_reference: str = "initial"
    we_on: bool = False
    we_interval: int = 100
    we_carry_across_tasks: bool = False
    wise_ft_post_on: bool = False
    wise_ft_alpha: float = 0.5
    wise_ft_anchor: str = "previous"
    replay_on: bool = False
    replay_capacity: int = 100
    lr: float = 9.5e-5
    weight_decay: float = 0.0
    iterations: int = 1000
    batch_size: int = 64
    label_smoothing: float = 0.2
    literal_eq3: bool = False
    train_log_temperature: bool = False
    distill_tau_override: float = None
    ref_batch_images: int = 64
    ref_batch_texts: int = 64

    def validate(self):
        checks = [
            (self.distill_sides in DISTILL_SIDES, "distill_sides", DISTILL_SIDES),
            (self.data_source in DATA_SOURCES, "data_source", DATA_SOURCES),
            (self.ref_text_source in ("pool", "random"), "ref_text_source", ("pool", "random")),
            (self.teacher in TEACHERS, "teacher", TEACHERS),
            (self.wc_reference in ANCHORS, "wc_reference", ANCHORS),
            (self.wise_ft_anchor in ANCHORS, "wise_ft_anchor", ANCHORS),
        ]
        for ok, name, allowed in checks:
            if not ok:
                raise RecipeError(f"{name} must be one of {allowed}")
        if not 0.0 <= self.teacher_wise_alpha <= 1.0:
            raise RecipeError("teacher_wise_alpha must be in [0, 1]")
        if not 0.0 <= self.wise_ft_alpha <= 1.0:
            raise RecipeError("wise_ft_alpha must be in [0, 1]")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise RecipeError("label_smoothing must be in [0, 1)")
        if self.lam < 0.0:
            raise RecipeError("lam must be >= 0")
        if self.iterations < 0:
            raise RecipeError("iterations must be >= 0")
        if self.we_on and self.we_interval < 1:
            raise RecipeError("we_interval must be >= 1")
        if self.replay_on and self.replay_capacity < 1:
            raise RecipeError("replay_capacity must be >= 1 with replay on")
        return self

    @property
    def distills(self):
        return self.distill_sides != "none"


# Method presets mirroring the standard comparison rows. Values not listed
# fall back to the TrainRecipe defaults above.
PRESETS = {
    "ZeroShot": dict(distill_sides="none", iterations=0),
    "FT": dict(distill_sides="none"),
    "LwF": dict(distill_sides="both", data_source="current_task", teacher="previous"),
    "LwF-VR": dict(
        distill_sides="both",
        data_source="reference",
        ref_text_source="random",
        teacher="previous",
    ),
    "Replay": dict(distill_sides="none", replay_on=True),
    "WiSE-FT": dict(distill_sides="none", wise_ft_post_on=True, wise_ft_anchor="previous"),
    "ZSCL*": dict(distill_sides="both", data_source="reference", teacher="initial", we_on=True),
    "ZSCL": dict(
        distill_sides="both",
        data_source="reference",
        teacher="initial",
        we_on=True,
        wc_on=True,
        wc_reference="initial",
    ),
}


def make_recipe(method, **overrides):
    if method not in PRESETS:
        raise RecipeError(
            f"unknown method preset {method!r}; known: {sorted(PRESETS)}"
        )
    fields = dict(PRESETS[method])
    fields.update(overrides)
    return TrainRecipe(method=method, **fields).validate()
