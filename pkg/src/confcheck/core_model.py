"""Domain types of the check language plus structural validation of bundles."""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Union

if TYPE_CHECKING:  # pragma: no cover
    from confcheck.content_io import CheckBundle
    from confcheck.oval_proc import CollectedItem


class ConditionOp(str, Enum):
    EQ = "EQ"
    LT = "LT"
    GT = "GT"
    GE = "GE"
    LE = "LE"


class RelationKind(str, Enum):
    DEPL_IN = "depl_in"
    COMM_WITH = "comm_with"
    COMP_OF = "comp_of"
    INSTR_SET = "instr_set"
    AND = "and"
    OR = "or"

    @property
    def is_boolean(self) -> bool:
        return self in (RelationKind.AND, RelationKind.OR)


#: Relation kinds backed by identifier-pair tables in a data source.
NAMED_RELATION_KINDS = frozenset(
    {RelationKind.DEPL_IN, RelationKind.COMM_WITH, RelationKind.COMP_OF, RelationKind.INSTR_SET}
)


class Existence(str, Enum):
    AT_LEAST_ONE = "at_least_one"
    NONE_EXIST = "none_exist"
    ALL_EXIST = "all_exist"


class ItemCheck(str, Enum):
    ALL = "all"
    AT_LEAST_ONE = "at_least_one"


class StateOp(str, Enum):
    EQUALS = "EQUALS"
    NOT_EQUAL = "NOT_EQUAL"
    PATTERN_MATCH = "PATTERN_MATCH"


class BoolOp(str, Enum):
    AND = "AND"
    OR = "OR"


class DefinitionClass(str, Enum):
    VULNERABILITY = "vulnerability"
    COMPLIANCE = "compliance"


class ResultStatus(str, Enum):
    TRUE = "true"
    FALSE = "false"
    ERROR = "error"


# --------------------------------------------------------------------------
# Value kinds and comparison semantics


class ValueKind(str, Enum):
    STRING = "string"
    VERSION = "version"
    SPEC_TOKEN = "spec_token"


_VERSION_RE = re.compile(r"\d+(?:\.\d+)*")
_SPEC_TOKEN_RE = re.compile(r"(.+)_(\d+(?:\.\d+)*)")

_OP_FUNCS = {
    ConditionOp.EQ: operator.eq,
    ConditionOp.LT: operator.lt,
    ConditionOp.GT: operator.gt,
    ConditionOp.GE: operator.ge,
    ConditionOp.LE: operator.le,
}


def parse_version(text: str) -> tuple[int, ...] | None:
    """Parse a dotted numeric version, e.g. "7.0.18"; None if not one."""
    if not _VERSION_RE.fullmatch(text):
        return None
    return tuple(int(part) for part in text.split("."))


def split_spec_token(text: str) -> tuple[str, tuple[int, ...]] | None:
    """Split a specification token of shape Name_X.Y into (name, version)."""
    m = _SPEC_TOKEN_RE.fullmatch(text)
    if m is None:
        return None
    version = parse_version(m.group(2))
    if version is None:  # pragma: no cover - regex guarantees a version tail
        return None
    return m.group(1), version


def _pad(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    n = max(len(a), len(b))
    return a + (0,) * (n - len(a)), b + (0,) * (n - len(b))


def compare_values(kind: ValueKind, left: str, op: ConditionOp, right: str) -> bool:
    """Compare two raw values under a value kind.

    Strings compare lexicographically.  Versions compare numerically,
    segment-wise, with missing segments read as zero.  Specification tokens
    compare by version only when their name prefixes are identical; any
    other combination, and any value that fails to parse under the kind,
    makes every operator false.
    """
    cmp = _OP_FUNCS[op]
    if kind is ValueKind.STRING:
        return cmp(left, right)
    if kind is ValueKind.VERSION:
        lv, rv = parse_version(left), parse_version(right)
        if lv is None or rv is None:
            return False
        return cmp(*_pad(lv, rv))
    ls, rs = split_spec_token(left), split_spec_token(right)
    if ls is None or rs is None or ls[0] != rs[0]:
        return False
    return cmp(*_pad(ls[1], rs[1]))


# --------------------------------------------------------------------------
# Check language types


@dataclass(frozen=True, order=True)
class Condition:
    property: str
    op: ConditionOp
    value: str


@dataclass(frozen=True)
class SoftwareComponent:
    """A predicate over component properties; no conditions matches everything."""

    id: str
    conditions: frozenset[Condition] = frozenset()


@dataclass(frozen=True)
class RelationNode:
    id: str
    kind: RelationKind
    left: str
    right: str


@dataclass
class TargetDefinition:
    id: str
    components: dict[str, SoftwareComponent] = field(default_factory=dict)
    relations: dict[str, RelationNode] = field(default_factory=dict)
    root: str | None = None


@dataclass(frozen=True)
class XmlConfigObject:
    id: str
    config_type: str
    schema: str
    query: str


@dataclass(frozen=True)
class ExpectedValue:
    op: StateOp
    value: str


@dataclass(frozen=True)
class XmlConfigState:
    id: str
    expected: tuple[ExpectedValue, ...] = ()


@dataclass(frozen=True)
class OvalTest:
    id: str
    object_ref: str
    state_refs: tuple[str, ...] = ()
    existence: Existence = Existence.AT_LEAST_ONE
    item_check: ItemCheck = ItemCheck.ALL

    def __post_init__(self) -> None:
        # state references are a set; store them canonically
        object.__setattr__(self, "state_refs", tuple(sorted(set(self.state_refs))))


CriteriaChild = Union["CriteriaNode", str]


@dataclass(frozen=True)
class CriteriaNode:
    operator: BoolOp
    children: tuple[CriteriaChild, ...]
    negate: bool = False


@dataclass(frozen=True)
class OvalDefinition:
    id: str
    criteria: CriteriaNode
    definition_class: DefinitionClass = DefinitionClass.COMPLIANCE


@dataclass
class CheckDefinition:
    id: str
    definition_ref: str
    target_ref: str
    tau: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Collector:
    id: str
    conditions: frozenset[Condition]
    properties: tuple[str, ...]
    object_query: str
    priority: int = 0


@dataclass(frozen=True)
class SystemComponent:
    """Attributes enabling configuration collection from one installation."""

    attributes: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self) -> None:
        names = [name for name, _ in self.attributes]
        if len(names) != len(set(names)):
            raise ValueError("at most one attribute per property name")

    @classmethod
    def from_mapping(cls, attrs: Mapping[str, str]) -> "SystemComponent":
        return cls(frozenset(attrs.items()))

    def get(self, name: str) -> str | None:
        for key, value in self.attributes:
            if key == name:
                return value
        return None

    def as_dict(self) -> dict[str, str]:
        return dict(sorted(self.attributes))


@dataclass(frozen=True)
class TestMapping:
    """Binds a test to the system component it runs against; None = unplanned."""

    test_id: str
    component: SystemComponent | None


@dataclass(frozen=True)
class SystemTest:
    id: str
    check_ref: str
    group: frozenset[str]
    components: tuple[SystemComponent, ...]
    definition_ref: str
    mappings: tuple[TestMapping, ...]
    diagnostics: tuple[str, ...] = ()


@dataclass
class CheckResult:
    system_test: SystemTest
    omega: dict[TestMapping, ResultStatus]
    definition_status: ResultStatus
    items: dict[TestMapping, "CollectedItem"] = field(default_factory=dict)


# --------------------------------------------------------------------------
# Structural validation


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, subject: str, message: str) -> None:
        self.violations.append(Violation(code, subject, message))

    def messages(self) -> list[str]:
        return [v.message for v in self.violations]


def definition_tests(definition: OvalDefinition) -> set[str]:
    """Test ids reachable from the definition's criteria tree."""
    found: set[str] = set()

    def walk(node: CriteriaNode) -> None:
        for child in node.children:
            if isinstance(child, CriteriaNode):
                walk(child)
            else:
                found.add(child)

    walk(definition.criteria)
    return found


def _relation_cycles(td: TargetDefinition) -> list[str]:
    """Relation ids at which a directed reference cycle is detected."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {rid: WHITE for rid in td.relations}
    cycle_at: list[str] = []

    for start in sorted(td.relations):
        if color[start] != WHITE:
            continue
        # iterative DFS; a grey successor marks a back edge
        stack: list[tuple[str, Iterable[str]]] = []
        color[start] = GREY
        stack.append((start, iter(_relation_successors(td, start))))
        while stack:
            node, succ = stack[-1]
            advanced = False
            for nxt in succ:
                if color[nxt] == GREY:
                    if nxt not in cycle_at:
                        cycle_at.append(nxt)
                elif color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(_relation_successors(td, nxt))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return cycle_at


def _relation_successors(td: TargetDefinition, rid: str) -> list[str]:
    rel = td.relations[rid]
    return [ref for ref in (rel.left, rel.right) if ref in td.relations]


def validate_target_definition(td: TargetDefinition) -> ValidationReport:
    """Check the structural validity rules of a target definition.

    Violations cover dangling operand references, reference cycles,
    root uniqueness and reachability, the single-component rule for
    relation-free definitions, and the component-only restriction on
    composition relations.  An empty report means the definition is valid.
    """
    report = ValidationReport()

    shared = set(td.components) & set(td.relations)
    for dup in sorted(shared):
        report.add("ambiguous-id", dup, f"id {dup!r} used for both a component and a relation")

    for rid in sorted(td.relations):
        rel = td.relations[rid]
        for side, ref in (("left", rel.left), ("right", rel.right)):
            if ref not in td.components and ref not in td.relations:
                report.add(
                    "dangling-ref",
                    rid,
                    f"relation {rid} {side} operand references unknown id {ref!r}",
                )
        if rel.kind is RelationKind.COMP_OF:
            for side, ref in (("left", rel.left), ("right", rel.right)):
                if ref in td.relations:
                    report.add(
                        "comp-of-operand",
                        rid,
                        f"comp_of relation {rid} {side} operand must be a software"
                        f" component, not relation {ref!r}",
                    )

    for rid in _relation_cycles(td):
        report.add("cycle", rid, f"cycle at {rid}")

    if td.relations:
        referenced = {
            ref
            for rel in td.relations.values()
            for ref in (rel.left, rel.right)
            if ref in td.relations
        }
        roots = [rid for rid in sorted(td.relations) if rid not in referenced]
        if len(roots) != 1:
            report.add(
                "unique-root",
                td.id,
                f"expected exactly one root relation, found {roots or 'none'}",
            )
        if td.root is not None:
            if td.root not in td.relations:
                report.add("root-ref", td.id, f"declared root {td.root!r} is not a relation")
            elif roots != [td.root]:
                report.add(
                    "root-ref", td.id, f"declared root {td.root!r} is referenced by a relation"
                )
        if len(roots) == 1:
            reachable: set[str] = set()
            frontier = [roots[0]]
            while frontier:
                node = frontier.pop()
                if node in reachable:
                    continue
                reachable.add(node)
                frontier.extend(_relation_successors(td, node))
            for rid in sorted(set(td.relations) - reachable):
                report.add(
                    "unreachable", rid, f"relation {rid} is not reachable from the root"
                )
    else:
        if len(td.components) != 1:
            report.add(
                "scs-cardinality",
                td.id,
                f"|SCS| must be 1 when no relations are defined, found {len(td.components)}",
            )
        if td.root is not None:
            report.add("root-ref", td.id, "declared root but no relations are defined")

    return report


def resolve_root(td: TargetDefinition) -> str:
    """Id of the evaluation entry point: the root relation or the sole component."""
    if td.relations:
        referenced = {
            ref
            for rel in td.relations.values()
            for ref in (rel.left, rel.right)
            if ref in td.relations
        }
        roots = [rid for rid in sorted(td.relations) if rid not in referenced]
        if len(roots) != 1:
            raise ValueError(f"target definition {td.id!r} has no unique root")
        return roots[0]
    if len(td.components) != 1:
        raise ValueError(f"target definition {td.id!r} must have exactly one component")
    return next(iter(td.components))


def validate_check_definition(cd: CheckDefinition, bundle: "CheckBundle") -> ValidationReport:
    """Check reference resolution and totality of the test-to-component map."""
    report = ValidationReport()

    definition = bundle.definitions.get(cd.definition_ref)
    if definition is None:
        report.add(
            "dangling-definition",
            cd.id,
            f"check {cd.id}: unresolved definition reference {cd.definition_ref!r}",
        )
    target = bundle.targets.get(cd.target_ref)
    if target is None:
        report.add(
            "dangling-target",
            cd.id,
            f"check {cd.id}: unresolved target reference {cd.target_ref!r}",
        )

    tests: set[str] = set()
    if definition is not None:
        tests = definition_tests(definition)
        for test_id in sorted(tests):
            test = bundle.tests.get(test_id)
            if test is None:
                report.add(
                    "dangling-test",
                    cd.id,
                    f"check {cd.id}: unresolved test reference {test_id!r}",
                )
                continue
            if test.object_ref not in bundle.objects:
                report.add(
                    "dangling-object",
                    test_id,
                    f"test {test_id}: unresolved object reference {test.object_ref!r}",
                )
            for state_ref in test.state_refs:
                if state_ref not in bundle.states:
                    report.add(
                        "dangling-state",
                        test_id,
                        f"test {test_id}: unresolved state reference {state_ref!r}",
                    )
            if test_id not in cd.tau:
                report.add(
                    "tau-not-total",
                    cd.id,
                    f"check {cd.id}: tau not total, test {test_id!r} is unmapped",
                )

    for test_id in sorted(cd.tau):
        sc_ref = cd.tau[test_id]
        if definition is not None and test_id not in tests:
            report.add(
                "tau-unknown-test",
                cd.id,
                f"check {cd.id}: tau maps test {test_id!r} not present in the definition",
            )
        if target is not None and sc_ref not in target.components:
            report.add(
                "tau-dangling-component",
                cd.id,
                f"check {cd.id}: tau maps {test_id!r} to dangling component {sc_ref!r}",
            )

    return report


def validate_bundle(bundle: "CheckBundle") -> ValidationReport:
    """Validate every target and check definition plus global reference hygiene."""
    report = ValidationReport()
    for test_id in sorted(bundle.tests):
        test = bundle.tests[test_id]
        if test.object_ref not in bundle.objects:
            report.add(
                "dangling-object",
                test_id,
                f"test {test_id}: unresolved object reference {test.object_ref!r}",
            )
        for state_ref in test.state_refs:
            if state_ref not in bundle.states:
                report.add(
                    "dangling-state",
                    test_id,
                    f"test {test_id}: unresolved state reference {state_ref!r}",
                )
    for defn_id in sorted(bundle.definitions):
        for test_id in sorted(definition_tests(bundle.definitions[defn_id])):
            if test_id not in bundle.tests:
                report.add(
                    "dangling-test",
                    defn_id,
                    f"definition {defn_id}: unresolved test reference {test_id!r}",
                )
    for td_id in sorted(bundle.targets):
        report.violations.extend(validate_target_definition(bundle.targets[td_id]).violations)
    for cd_id in sorted(bundle.checks):
        report.violations.extend(
            validate_check_definition(bundle.checks[cd_id], bundle).violations
        )
    return report
