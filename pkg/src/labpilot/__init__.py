"""labpilot: an interactive, budget-bounded research pipeline.

Transforms a plain-text research intent into an idea, an executed experiment
codebase, a compiled paper, and a peer review, with human steering at every
stage and hard budget/safety gates.
"""

from .engine import Engine, PipelineResult, PipelineSession, ResearchPilot, RunConfig
from .types import (
    ExperimentSpec,
    Idea,
    PaperProject,
    RelatedWorkRow,
    ResearchIntent,
    Review,
    RunResults,
    StageConfig,
    validate_idea,
    validate_review,
)

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "ExperimentSpec",
    "Idea",
    "PaperProject",
    "PipelineResult",
    "PipelineSession",
    "RelatedWorkRow",
    "ResearchIntent",
    "ResearchPilot",
    "Review",
    "RunConfig",
    "RunResults",
    "StageConfig",
    "validate_idea",
    "validate_review",
    "__version__",
]
