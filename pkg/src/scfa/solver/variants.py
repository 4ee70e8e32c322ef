"""Problem variants and the named method presets."""

from dataclasses import dataclass, replace

from ..errors import ConfigurationError

OBJECTIVES = ("ml", "ls", "gls")
PSD_SUM_MODES = ("none", "with-gamma", "without-gamma")
RATF_BOX_MODES = ("none", "blind", "distance")


@dataclass(frozen=True)
class ProblemVariant:
    """Which parameters are estimated and which constraints are active."""

    estimate_gamma: bool = True
    shared_self_noise: bool = True
    positivity_on_psds: bool = True
    psd_sum: str = "none"
    ratf_box: str = "none"
    gamma_box: bool = False
    self_noise_box: bool = False
    objective: str = "ml"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"objective must be one of {OBJECTIVES}")
        if self.psd_sum not in PSD_SUM_MODES:
            raise ConfigurationError(f"psd_sum must be one of {PSD_SUM_MODES}")
        if self.ratf_box not in RATF_BOX_MODES:
            raise ConfigurationError(f"ratf_box must be one of {RATF_BOX_MODES}")
        if self.psd_sum == "with-gamma" and not self.estimate_gamma:
            raise ConfigurationError("the PSD-sum row including gamma needs estimate_gamma")
        if self.gamma_box and not self.estimate_gamma:
            raise ConfigurationError("gamma_box needs estimate_gamma")

    def with_objective(self, objective):
        return replace(self, objective=objective)


# Every preset shares one self-noise PSD across microphones, as in the
# experiments the presets reproduce.
METHODS = {
    "scfa-rev1": ProblemVariant(
        estimate_gamma=True, psd_sum="with-gamma", ratf_box="distance",
        gamma_box=True, self_noise_box=True),
    "scfa-rev2": ProblemVariant(
        estimate_gamma=True, ratf_box="distance", gamma_box=True, self_noise_box=True),
    "scfa-no-rev": ProblemVariant(estimate_gamma=False),
    "scfa-no-rev1": ProblemVariant(
        estimate_gamma=False, psd_sum="without-gamma", ratf_box="blind",
        self_noise_box=True),
    "scfa-no-rev2": ProblemVariant(
        estimate_gamma=False, psd_sum="without-gamma", ratf_box="distance",
        self_noise_box=True),
    "parra": ProblemVariant(estimate_gamma=False, positivity_on_psds=False),
}


def get_variant(name, objective=None):
    try:
        variant = METHODS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown method {name!r}; valid: {', '.join(sorted(METHODS))}") from None
    return variant if objective is None else variant.with_objective(objective)
