# ========== core/__init__.py ==========
"""
Ядро движка доверия: решётки, свидетельства, политики, конвейер и язык моделей.
"""

from .lattice import DecisionLattice, TrustLevel, downset_completion, reference_lattice
from .evidence import Context, Element, World, attest, ground
from .verdict import VerifyPolicy, check_verify_policy, verify
from .decision import DecidePolicy, check_decide_policy, decide
from .capability import Environment, PipelinePoint, trust_potential, trustable_class
from .pipeline import forensics, gap_analysis, is_trusted, judgement, run_pipeline, trustworthy
from .lifecycle import apply_sigma, classify_check, evil_maid_fixture, run_scenario
from .composition import aggregate_trust, validate_tree
from .policy_dsl import TrustModel, parse, parse_documents, render
from .data_io import load_model_files
from .mechanism_loader import MechanismRegistry, discover_mechanisms
from .state_manager import LifecycleStateManager

__all__ = [
    'DecisionLattice',
    'TrustLevel',
    'downset_completion',
    'reference_lattice',
    'Context',
    'Element',
    'World',
    'attest',
    'ground',
    'VerifyPolicy',
    'check_verify_policy',
    'verify',
    'DecidePolicy',
    'check_decide_policy',
    'decide',
    'Environment',
    'PipelinePoint',
    'trust_potential',
    'trustable_class',
    'forensics',
    'gap_analysis',
    'is_trusted',
    'judgement',
    'run_pipeline',
    'trustworthy',
    'apply_sigma',
    'classify_check',
    'evil_maid_fixture',
    'run_scenario',
    'aggregate_trust',
    'validate_tree',
    'TrustModel',
    'parse',
    'parse_documents',
    'render',
    'load_model_files',
    'MechanismRegistry',
    'discover_mechanisms',
    'LifecycleStateManager',
]
