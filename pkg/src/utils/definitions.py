"""
Centralized definitions for boundary tags, pipeline stages and option values
"""


class Definitions:
    # Boundary region tags
    FRONT = "FRONT"
    BACK = "BACK"
    LATERAL = "LATERAL"
    GAMMA = "GAMMA"
    GAMMA_PRIME = "GAMMA_PRIME"
    # Boundary of G' where the state problem takes its Neumann data
    STATE_BOUNDARY = "S_T"

    ABSORBING_TAGS = (FRONT, BACK)

    # Pipeline stages accepted by --stage
    STAGE_SYNTH = "synth"
    STAGE_ONE = "one"
    STAGE_TWO = "two"
    STAGE_FULL = "full"

    # Thresholded image kinds
    IMAGE_DIELECTRIC = "diel"
    IMAGE_METAL = "metal"

    # Pseudo frequency at which the coefficient is read off v
    S_EVAL_LAYER = "s_n"
    S_EVAL_UPPER = "s_bar"
    S_EVAL_MEAN = "layer_mean"

    # Stage-2 starting guess after a refinement
    RESTART_GLOB = "glob"
    RESTART_CURRENT = "current"

    # Inclusion shapes
    SHAPE_BALL = "ball"
    SHAPE_BOX = "box"

    # Threshold rule per image kind (fraction of the maximum)
    IMAGE_THRESHOLDS = {
        IMAGE_DIELECTRIC: 0.5,
        IMAGE_METAL: 0.5,
    }

    @classmethod
    def get_supported_stages(cls) -> list:
        """Get list of all pipeline stages"""
        return [cls.STAGE_SYNTH, cls.STAGE_ONE, cls.STAGE_TWO, cls.STAGE_FULL]

    @classmethod
    def get_s_eval_modes(cls) -> list:
        return [cls.S_EVAL_LAYER, cls.S_EVAL_UPPER, cls.S_EVAL_MEAN]

    @classmethod
    def get_restart_modes(cls) -> list:
        return [cls.RESTART_GLOB, cls.RESTART_CURRENT]

    @classmethod
    def get_shapes(cls) -> list:
        return [cls.SHAPE_BALL, cls.SHAPE_BOX]

    @classmethod
    def get_threshold_for_kind(cls, kind: str) -> float:
        """Get the threshold fraction for an image kind"""
        if kind not in cls.IMAGE_THRESHOLDS:
            raise ValueError(f"Unknown image kind: {kind}")
        return cls.IMAGE_THRESHOLDS[kind]
