"""Exception types raised across the package.

Every error carries a short machine-readable ``code`` so the CLI can emit
structured failure JSON.
"""


class PolyRestrictError(Exception):
    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ResolutionTooCoarse(PolyRestrictError):
    """Frequency grid too coarse for the requested spatial scale (aliasing)."""
    code = "resolution_too_coarse"


class SupportViolation(PolyRestrictError):
    code = "support_violation"


class GridMismatch(PolyRestrictError):
    code = "grid_mismatch"


class ScaleOrderViolation(PolyRestrictError):
    code = "scale_order_violation"


class CombinatorialBlowup(PolyRestrictError):
    code = "combinatorial_blowup"


class ExponentRelationViolated(PolyRestrictError):
    code = "exponent_relation_violated"


class BisectFailed(PolyRestrictError):
    code = "bisect_failed"

    def __init__(self, message, discrepancy=None, round_index=None):
        super().__init__(message)
        self.discrepancy = discrepancy
        self.round_index = round_index


class DegenerateAfterPerturbation(PolyRestrictError):
    code = "degenerate_after_perturbation"


class NotOnVariety(PolyRestrictError):
    code = "not_on_variety"


class DegeneratePoint(PolyRestrictError):
    code = "degenerate_point"


class SamplerFailure(PolyRestrictError):
    code = "sampler_failure"


class SearchBudgetExceeded(PolyRestrictError):
    code = "search_budget_exceeded"


class EmptyPacketSet(PolyRestrictError):
    code = "empty_packet_set"


class ScaleInfeasible(PolyRestrictError):
    code = "scale_infeasible"


class NotOnQuadric(PolyRestrictError):
    code = "not_on_quadric"


class ConfigError(PolyRestrictError):
    code = "invalid_config"
