"""Deterministic simulation stack for trust-weighted collaborative sandboxes.

The pieces, bottom up: a canonical byte codec and seeded keystore; a
weighted trust hypergraph with oracle-fed behavior observations; a
trust-to-security-plan mapping; a hash-chained ledger with contract
dispatch; a sandbox lifecycle contract; an identifier registry with
threshold secret sharing; a deterministic message network with fault
injection; two consensus engines (byzantine-tolerant and majority); a
collaborative DAG executor; and a scenario runner plus CLI gluing it all
together.
"""

from .plan import (PlanInfeasibleError, PlanMapping, Protocol, SecurityPlan,
                   TrustVector, fault_bound, make_plan, map_trust_to_plan,
                   plan_score, trust_vector)

__version__ = "0.1.0"

__all__ = [
    "PlanInfeasibleError", "PlanMapping", "Protocol", "SecurityPlan",
    "TrustVector", "fault_bound", "make_plan", "map_trust_to_plan",
    "plan_score", "trust_vector", "__version__",
]
