"""Interpretation of target definitions over a data source.

Two independent implementations are provided: a structural-recursion
interpreter used by the engine, and an exhaustive assignment enumerator
(`brute_force_resolve`) used as a testing oracle on small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from confcheck.core_model import (
    RelationKind,
    SoftwareComponent,
    TargetDefinition,
    resolve_root,
    validate_target_definition,
)
from confcheck.datasource import DataSource, eval_condition, eval_software_component
from confcheck.errors import InvalidTargetError, ScaleError

#: Size guards for the exhaustive resolver.
MAX_ORACLE_LEAVES = 6
MAX_ORACLE_IDENTIFIERS = 32


@dataclass
class Resolution:
    """Groups of identifiers satisfying a target definition, plus the
    component assignment for every identifier occurring in a group."""

    groups: frozenset[frozenset[str]]
    assignment: dict[str, str]
    conflicts: tuple[str, ...] = ()

    def sorted_groups(self) -> list[tuple[str, ...]]:
        return sorted(tuple(sorted(group)) for group in self.groups)


def _require_valid(td: TargetDefinition) -> None:
    report = validate_target_definition(td)
    if not report.ok:
        raise InvalidTargetError(
            f"target definition {td.id!r} is invalid: " + "; ".join(report.messages())
        )


def interpret_target_definition(ds: DataSource, td: TargetDefinition) -> Resolution:
    """Resolve which installed-component groups satisfy a target definition.

    A component leaf contributes one singleton group per matching
    identifier.  AND combines every pair of operand groups by union, OR
    takes both operand group families, and a named relation keeps a
    combined group only when some member pair is connected in the data
    source.  The assignment maps each identifier to the component that
    matched it, with the right operand taking precedence on overlap;
    identifiers claimed by both operands of a relation with different
    components are recorded as conflicts.
    """
    _require_valid(td)
    root = resolve_root(td)
    memo: dict[str, tuple[frozenset[frozenset[str]], dict[str, str], set[str]]] = {}

    def eval_node(ref: str) -> tuple[frozenset[frozenset[str]], dict[str, str], set[str]]:
        if ref in memo:
            return memo[ref]
        if ref in td.components:
            sc = td.components[ref]
            matched = eval_software_component(ds, sc)
            result = (
                frozenset(frozenset({i}) for i in matched),
                {i: sc.id for i in matched},
                set(),
            )
        else:
            rel = td.relations[ref]
            left_groups, left_sigma, left_conflicts = eval_node(rel.left)
            right_groups, right_sigma, right_conflicts = eval_node(rel.right)
            conflicts = left_conflicts | right_conflicts
            conflicts |= {
                i
                for i in left_sigma.keys() & right_sigma.keys()
                if left_sigma[i] != right_sigma[i]
            }
            sigma = {**left_sigma, **right_sigma}
            if rel.kind is RelationKind.OR:
                groups = left_groups | right_groups
            elif rel.kind is RelationKind.AND:
                groups = frozenset(v | w for v in left_groups for w in right_groups)
            else:
                pairs = ds.relation_pairs(rel.kind)
                groups = frozenset(
                    v | w
                    for v in left_groups
                    for w in right_groups
                    if any((a, b) in pairs for a in v for b in w)
                )
            result = (groups, sigma, conflicts)
        memo[ref] = result
        return result

    groups, sigma, conflicts = eval_node(root)
    members = set().union(*groups) if groups else set()
    return Resolution(
        groups=groups,
        assignment={i: sigma[i] for i in members},
        conflicts=tuple(sorted(conflicts)),
    )


# --------------------------------------------------------------------------
# Exhaustive oracle


@dataclass
class _Leaf:
    sc: SoftwareComponent


@dataclass
class _Node:
    kind: RelationKind
    left: "_Node | _Leaf"
    right: "_Node | _Leaf"


def _count_leaves(td: TargetDefinition, ref: str) -> int:
    if ref in td.components:
        return 1
    rel = td.relations[ref]
    return _count_leaves(td, rel.left) + _count_leaves(td, rel.right)


def _ordered_leaves(td: TargetDefinition, ref: str) -> list[SoftwareComponent]:
    """Every component leaf occurrence, in left-to-right expression order."""
    if ref in td.components:
        return [td.components[ref]]
    rel = td.relations[ref]
    return _ordered_leaves(td, rel.left) + _ordered_leaves(td, rel.right)


def _expand_disjuncts(td: TargetDefinition, ref: str) -> list["_Node | _Leaf"]:
    """Alternative OR-free trees: each OR node contributes its branches."""
    if ref in td.components:
        return [_Leaf(td.components[ref])]
    rel = td.relations[ref]
    left_alts = _expand_disjuncts(td, rel.left)
    right_alts = _expand_disjuncts(td, rel.right)
    if rel.kind is RelationKind.OR:
        return left_alts + right_alts
    return [_Node(rel.kind, left, right) for left in left_alts for right in right_alts]


def _tree_leaves(tree: "_Node | _Leaf") -> list[_Leaf]:
    if isinstance(tree, _Leaf):
        return [tree]
    return _tree_leaves(tree.left) + _tree_leaves(tree.right)


def _tree_constraints(
    tree: "_Node | _Leaf", positions: dict[int, int]
) -> list[tuple[RelationKind, tuple[int, ...], tuple[int, ...]]]:
    """Named-relation constraints as (kind, left leaf slots, right leaf slots)."""
    if isinstance(tree, _Leaf):
        return []
    constraints = _tree_constraints(tree.left, positions)
    constraints += _tree_constraints(tree.right, positions)
    if tree.kind is not RelationKind.AND:
        left_slots = tuple(positions[id(leaf)] for leaf in _tree_leaves(tree.left))
        right_slots = tuple(positions[id(leaf)] for leaf in _tree_leaves(tree.right))
        constraints.append((tree.kind, left_slots, right_slots))
    return constraints


def brute_force_resolve(ds: DataSource, td: TargetDefinition) -> Resolution:
    """Resolve a target definition by exhausting per-leaf identifier assignments.

    Independent of the recursive interpreter: every OR-free variant of the
    expression is enumerated, each leaf is assigned one identifier that
    satisfies its conditions, and an assignment survives when every named
    relation in the variant connects some pair of assigned identifiers.
    Guarded by MAX_ORACLE_LEAVES and MAX_ORACLE_IDENTIFIERS.
    """
    _require_valid(td)
    root = resolve_root(td)
    if _count_leaves(td, root) > MAX_ORACLE_LEAVES:
        raise ScaleError(f"more than {MAX_ORACLE_LEAVES} component leaves")
    if len(ds.identifiers) > MAX_ORACLE_IDENTIFIERS:
        raise ScaleError(f"more than {MAX_ORACLE_IDENTIFIERS} identifiers")

    identifiers = sorted(ds.identifiers)
    sat_cache: dict[str, list[str]] = {}

    def satisfying(sc: SoftwareComponent) -> list[str]:
        if sc.id not in sat_cache:
            sat_cache[sc.id] = [
                i for i in identifiers if all(eval_condition(ds, i, c) for c in sc.conditions)
            ]
        return sat_cache[sc.id]

    groups: set[frozenset[str]] = set()
    for tree in _expand_disjuncts(td, root):
        leaves = _tree_leaves(tree)
        candidate_lists = [satisfying(leaf.sc) for leaf in leaves]
        if any(not candidates for candidates in candidate_lists):
            continue
        positions = {id(leaf): index for index, leaf in enumerate(leaves)}
        constraints = _tree_constraints(tree, positions)
        for combo in itertools.product(*candidate_lists):
            satisfied = all(
                any(
                    (combo[a], combo[b]) in ds.relation_pairs(kind)
                    for a in left_slots
                    for b in right_slots
                )
                for kind, left_slots, right_slots in constraints
            )
            if satisfied:
                groups.add(frozenset(combo))

    # assignment: the last expression-order leaf whose conditions an
    # identifier satisfies claims it, mirroring right-operand precedence
    sigma: dict[str, str] = {}
    for sc in _ordered_leaves(td, root):
        for identifier in satisfying(sc):
            sigma[identifier] = sc.id
    members = set().union(*groups) if groups else set()

    conflicts: set[str] = set()
    for rel in td.relations.values():
        left_last = _last_claim(_ordered_leaves(td, rel.left), satisfying)
        right_last = _last_claim(_ordered_leaves(td, rel.right), satisfying)
        conflicts |= {
            i for i in left_last.keys() & right_last.keys() if left_last[i] != right_last[i]
        }

    return Resolution(
        groups=frozenset(groups),
        assignment={i: sigma[i] for i in members},
        conflicts=tuple(sorted(conflicts)),
    )


def _last_claim(leaves, satisfying) -> dict[str, str]:
    claim: dict[str, str] = {}
    for sc in leaves:
        for identifier in satisfying(sc):
            claim[identifier] = sc.id
    return claim
