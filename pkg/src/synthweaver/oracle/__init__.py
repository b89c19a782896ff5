"""Prompt templates, reply schemas, and the oracle client."""

from .client import (
    CostLedger,
    HttpTransport,
    MockScript,
    MockTransport,
    OracleClient,
    OracleReply,
    Pricing,
    RawCompletion,
    RetryPolicy,
    Usage,
    extract_json,
)
from .replies import (
    CategorizationReply,
    DIVERSITY_SUBSCORE_KEYS,
    DiversityReply,
    NextActionReply,
    ProposedInteraction,
    QualityReply,
    RefineDecision,
    RefineTaskReply,
    RefineTrajectoryReply,
    TaskProposal,
    parse_reply,
)
from .templates import (
    PromptTemplate,
    RenderedPrompt,
    TemplateName,
    UNINTERACTIVE_CATEGORY,
    load_template,
    render,
)

__all__ = [
    "CategorizationReply",
    "CostLedger",
    "DIVERSITY_SUBSCORE_KEYS",
    "DiversityReply",
    "HttpTransport",
    "MockScript",
    "MockTransport",
    "NextActionReply",
    "OracleClient",
    "OracleReply",
    "Pricing",
    "PromptTemplate",
    "ProposedInteraction",
    "QualityReply",
    "RawCompletion",
    "RefineDecision",
    "RefineTaskReply",
    "RefineTrajectoryReply",
    "RenderedPrompt",
    "RetryPolicy",
    "TaskProposal",
    "TemplateName",
    "UNINTERACTIVE_CATEGORY",
    "Usage",
    "extract_json",
    "load_template",
    "parse_reply",
    "render",
]
