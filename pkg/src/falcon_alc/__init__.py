"""Fuzzy neural model generation and approximate entailment for ALC.

An ontology is turned into ``k`` fuzzy models, each an embedding table plus
two membership MLPs trained so that the TBox and ABox hold. Queries are then
scored in every model and classified under the open-world assumption as
entailed, disproved or unprovable.
"""

from .datasets import builtin_family, family_config, family_crisp_model, synthetic_kg
from .entailment import (
    DISPROVED,
    ENTAILED,
    UNPROVABLE,
    CrispInterpretation,
    EntailmentVerdict,
    Thresholds,
    consistency_degree,
    crisp_check,
    instantiation_degree,
    query_degree,
    satisfiability_degree,
    subsumption_degree,
    threshold_model,
)
from .fuzzy import TNorm
from .interpreter import LookupModel, ModelHandle, membership, memberships, relation_membership
from .metrics import (
    auc, aupr, fmax, inject_inconsistency, mae_entailed, random_mrr_for, rank_metrics,
)
from .syntax import (
    And,
    Bottom,
    ConceptAssertion,
    Exists,
    Forall,
    Name,
    Not,
    Ontology,
    Or,
    RoleAssertion,
    Signature,
    Subsumption,
    Top,
    parse_axiom,
    parse_concept,
    parse_ontology,
)
from .training import ModelEnsemble, TrainConfig, total_loss, train_ensemble, train_model

__version__ = "0.1.0"

__all__ = [
    "And", "Bottom", "ConceptAssertion", "CrispInterpretation", "DISPROVED", "ENTAILED",
    "EntailmentVerdict", "Exists", "Forall", "LookupModel", "ModelEnsemble", "ModelHandle",
    "Name", "Not", "Ontology", "Or", "RoleAssertion", "Signature", "Subsumption", "TNorm",
    "Thresholds", "Top", "TrainConfig", "UNPROVABLE", "auc", "aupr", "builtin_family",
    "consistency_degree", "crisp_check", "family_config", "family_crisp_model", "fmax",
    "inject_inconsistency", "instantiation_degree", "mae_entailed", "membership",
    "memberships", "parse_axiom", "parse_concept", "parse_ontology", "query_degree",
    "rank_metrics", "random_mrr_for", "relation_membership", "satisfiability_degree", "subsumption_degree",
    "synthetic_kg", "threshold_model", "total_loss", "train_ensemble", "train_model",
]
