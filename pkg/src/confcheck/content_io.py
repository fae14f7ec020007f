"""Parsing and serialization of check bundles, collector sets, plans, and reports."""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Sequence

from confcheck import ENGINE
from confcheck.core_model import (
    BoolOp,
    CheckDefinition,
    CheckResult,
    Collector,
    Condition,
    ConditionOp,
    CriteriaNode,
    DefinitionClass,
    Existence,
    ExpectedValue,
    ItemCheck,
    OvalDefinition,
    OvalTest,
    RelationKind,
    RelationNode,
    SoftwareComponent,
    StateOp,
    SystemComponent,
    SystemTest,
    TargetDefinition,
    TestMapping,
    XmlConfigObject,
    XmlConfigState,
)
from confcheck.errors import InputSyntaxError, QuerySyntaxError, RefError, SchemaError
from confcheck.xquery import parse_query

if TYPE_CHECKING:  # pragma: no cover
    from confcheck.planner import Plan


@dataclass
class CheckBundle:
    """Id-keyed collections of every artifact a check file can carry."""

    objects: dict[str, XmlConfigObject] = field(default_factory=dict)
    states: dict[str, XmlConfigState] = field(default_factory=dict)
    tests: dict[str, OvalTest] = field(default_factory=dict)
    definitions: dict[str, OvalDefinition] = field(default_factory=dict)
    targets: dict[str, TargetDefinition] = field(default_factory=dict)
    checks: dict[str, CheckDefinition] = field(default_factory=dict)


# --------------------------------------------------------------------------
# Bundle parsing


def _local(tag: object) -> str:
    if not isinstance(tag, str):
        return ""
    if tag.startswith("{"):
        return tag.partition("}")[2]
    return tag


def _req_attr(elem: ET.Element, name: str) -> str:
    value = elem.get(name)
    if value is None:
        raise SchemaError(f"<{_local(elem.tag)}> is missing required attribute {name!r}")
    return value


def _enum_attr(elem, name, enum_cls, default):
    raw = elem.get(name)
    if raw is None:
        return default
    try:
        return enum_cls(raw)
    except ValueError:
        raise SchemaError(
            f"<{_local(elem.tag)}> attribute {name!r}: unknown value {raw!r}"
        ) from None


def _child_text(elem: ET.Element, name: str) -> str:
    for child in elem:
        if _local(child.tag) == name:
            return (child.text or "").strip()
    return ""


def parse_bundle(data: bytes | str) -> CheckBundle:
    """Parse a check bundle document.

    Raises InputSyntaxError on malformed XML, SchemaError on unknown
    elements, missing attributes, or unparsable embedded queries and
    patterns, and RefError on duplicate ids.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, column = exc.position if exc.position else (None, None)
        raise InputSyntaxError(f"malformed XML: {exc.msg}", line, column) from exc
    except (ValueError, TypeError) as exc:
        raise InputSyntaxError(f"malformed XML: {exc}") from exc

    if _local(root.tag) != "check_bundle":
        raise SchemaError(f"expected <check_bundle> root, found <{_local(root.tag)}>")

    bundle = CheckBundle()
    section_parsers = {
        "objects": ("xmlconfiguration_object", _parse_object, bundle.objects),
        "states": ("xmlconfiguration_state", _parse_state, bundle.states),
        "tests": ("xmlconfiguration_test", _parse_test, bundle.tests),
        "definitions": ("definition", _parse_definition, bundle.definitions),
        "targets": ("target_definition", _parse_target, bundle.targets),
        "checks": ("check_definition", _parse_check, bundle.checks),
    }
    for section in root:
        name = _local(section.tag)
        if name not in section_parsers:
            raise SchemaError(f"unknown element <{name}> in <check_bundle>")
        entry_name, parser, collection = section_parsers[name]
        for entry in section:
            if _local(entry.tag) != entry_name:
                raise SchemaError(f"unknown element <{_local(entry.tag)}> in <{name}>")
            parsed = parser(entry)
            if parsed.id in collection:
                raise RefError(f"duplicate {entry_name} id {parsed.id!r}")
            collection[parsed.id] = parsed
    return bundle


def _parse_object(elem: ET.Element) -> XmlConfigObject:
    obj_id = _req_attr(elem, "id")
    for child in elem:
        if _local(child.tag) not in ("type", "schema", "query"):
            raise SchemaError(
                f"unknown element <{_local(child.tag)}> in <xmlconfiguration_object>"
            )
    query = _child_text(elem, "query")
    try:
        parse_query(query)
    except QuerySyntaxError as exc:
        raise SchemaError(f"object {obj_id!r}: bad query: {exc}") from exc
    return XmlConfigObject(
        id=obj_id,
        config_type=_child_text(elem, "type"),
        schema=_child_text(elem, "schema"),
        query=query,
    )


def _parse_state(elem: ET.Element) -> XmlConfigState:
    state_id = _req_attr(elem, "id")
    expected = []
    for child in elem:
        if _local(child.tag) != "expected":
            raise SchemaError(
                f"unknown element <{_local(child.tag)}> in <xmlconfiguration_state>"
            )
        op = _enum_attr(child, "operation", StateOp, None)
        if op is None:
            raise SchemaError("<expected> is missing required attribute 'operation'")
        value = (child.text or "").strip()
        if op is StateOp.PATTERN_MATCH:
            try:
                re.compile(value)
            except re.error as exc:
                raise SchemaError(f"state {state_id!r}: bad pattern {value!r}: {exc}") from exc
        expected.append(ExpectedValue(op, value))
    return XmlConfigState(id=state_id, expected=tuple(expected))


def _parse_test(elem: ET.Element) -> OvalTest:
    test_id = _req_attr(elem, "id")
    object_refs = []
    state_refs = []
    for child in elem:
        name = _local(child.tag)
        if name == "object":
            object_refs.append(_req_attr(child, "object_ref"))
        elif name == "state":
            state_refs.append(_req_attr(child, "state_ref"))
        else:
            raise SchemaError(f"unknown element <{name}> in <xmlconfiguration_test>")
    if len(object_refs) != 1:
        raise SchemaError(f"test {test_id!r} must reference exactly one object")
    return OvalTest(
        id=test_id,
        object_ref=object_refs[0],
        state_refs=tuple(state_refs),
        existence=_enum_attr(elem, "check_existence", Existence, Existence.AT_LEAST_ONE),
        item_check=_enum_attr(elem, "check", ItemCheck, ItemCheck.ALL),
    )


def _parse_criteria(elem: ET.Element) -> CriteriaNode:
    operator = _enum_attr(elem, "operator", BoolOp, BoolOp.AND)
    negate_raw = elem.get("negate", "false")
    if negate_raw not in ("true", "false"):
        raise SchemaError(f"<criteria> attribute 'negate': unknown value {negate_raw!r}")
    children: list[CriteriaNode | str] = []
    for child in elem:
        name = _local(child.tag)
        if name == "criterion":
            children.append(_req_attr(child, "test_ref"))
        elif name == "criteria":
            children.append(_parse_criteria(child))
        else:
            raise SchemaError(f"unknown element <{name}> in <criteria>")
    if not children:
        raise SchemaError("<criteria> must have at least one child")
    return CriteriaNode(operator=operator, children=tuple(children), negate=negate_raw == "true")


def _parse_definition(elem: ET.Element) -> OvalDefinition:
    defn_id = _req_attr(elem, "id")
    criteria = None
    for child in elem:
        if _local(child.tag) != "criteria":
            raise SchemaError(f"unknown element <{_local(child.tag)}> in <definition>")
        if criteria is not None:
            raise SchemaError(f"definition {defn_id!r} must have exactly one <criteria>")
        criteria = _parse_criteria(child)
    if criteria is None:
        raise SchemaError(f"definition {defn_id!r} must have exactly one <criteria>")
    return OvalDefinition(
        id=defn_id,
        criteria=criteria,
        definition_class=_enum_attr(elem, "class", DefinitionClass, DefinitionClass.COMPLIANCE),
    )


def _parse_condition(elem: ET.Element) -> Condition:
    op = _enum_attr(elem, "operator", ConditionOp, None)
    if op is None:
        raise SchemaError("<condition> is missing required attribute 'operator'")
    return Condition(
        property=_req_attr(elem, "property"), op=op, value=_req_attr(elem, "value")
    )


def _parse_target(elem: ET.Element) -> TargetDefinition:
    td_id = _req_attr(elem, "id")
    components: dict[str, SoftwareComponent] = {}
    relations: dict[str, RelationNode] = {}
    pending: list[tuple[str | None, ET.Element]] = []
    for child in elem:
        name = _local(child.tag)
        if name == "software_component":
            sc_id = _req_attr(child, "id")
            conditions = []
            for cond in child:
                if _local(cond.tag) != "condition":
                    raise SchemaError(
                        f"unknown element <{_local(cond.tag)}> in <software_component>"
                    )
                conditions.append(_parse_condition(cond))
            if sc_id in components or sc_id in relations:
                raise RefError(f"duplicate id {sc_id!r} in target {td_id!r}")
            components[sc_id] = SoftwareComponent(id=sc_id, conditions=frozenset(conditions))
        elif name == "relation":
            pending.append((child.get("id"), child))
        else:
            raise SchemaError(f"unknown element <{name}> in <target_definition>")
    # relation ids are optional in files; generate free ones by document order
    used = set(components) | {rid for rid, _ in pending if rid is not None}
    counter = 1
    for rid, child in pending:
        if rid is None:
            while f"r{counter}" in used:
                counter += 1
            rid = f"r{counter}"
            used.add(rid)
        if rid in components or rid in relations:
            raise RefError(f"duplicate id {rid!r} in target {td_id!r}")
        kind = _enum_attr(child, "kind", RelationKind, None)
        if kind is None:
            raise SchemaError("<relation> is missing required attribute 'kind'")
        relations[rid] = RelationNode(
            id=rid, kind=kind, left=_req_attr(child, "left"), right=_req_attr(child, "right")
        )
    return TargetDefinition(
        id=td_id, components=components, relations=relations, root=elem.get("root")
    )


def _parse_check(elem: ET.Element) -> CheckDefinition:
    cd_id = _req_attr(elem, "id")
    tau: dict[str, str] = {}
    for child in elem:
        if _local(child.tag) != "test_map":
            raise SchemaError(f"unknown element <{_local(child.tag)}> in <check_definition>")
        test_ref = _req_attr(child, "test_ref")
        if test_ref in tau:
            raise RefError(f"check {cd_id!r}: duplicate test_map for {test_ref!r}")
        tau[test_ref] = _req_attr(child, "sc_ref")
    return CheckDefinition(
        id=cd_id,
        definition_ref=_req_attr(elem, "definition_ref"),
        target_ref=_req_attr(elem, "target_ref"),
        tau=tau,
    )


# --------------------------------------------------------------------------
# Bundle serialization


def serialize_bundle(bundle: CheckBundle) -> bytes:
    """Canonical serialization: fixed section order, entries sorted by id."""
    root = ET.Element("check_bundle")
    if bundle.objects:
        section = ET.SubElement(root, "objects")
        for obj in _sorted_by_id(bundle.objects):
            section.append(_object_element(obj))
    if bundle.states:
        section = ET.SubElement(root, "states")
        for state in _sorted_by_id(bundle.states):
            elem = ET.SubElement(section, "xmlconfiguration_state", id=state.id)
            for entry in state.expected:
                child = ET.SubElement(elem, "expected", operation=entry.op.value)
                child.text = entry.value
    if bundle.tests:
        section = ET.SubElement(root, "tests")
        for test in _sorted_by_id(bundle.tests):
            elem = ET.SubElement(
                section,
                "xmlconfiguration_test",
                id=test.id,
                check_existence=test.existence.value,
                check=test.item_check.value,
            )
            ET.SubElement(elem, "object", object_ref=test.object_ref)
            for state_ref in test.state_refs:
                ET.SubElement(elem, "state", state_ref=state_ref)
    if bundle.definitions:
        section = ET.SubElement(root, "definitions")
        for defn in _sorted_by_id(bundle.definitions):
            elem = ET.SubElement(
                section, "definition", id=defn.id, **{"class": defn.definition_class.value}
            )
            elem.append(_criteria_element(defn.criteria))
    if bundle.targets:
        section = ET.SubElement(root, "targets")
        for target in _sorted_by_id(bundle.targets):
            attrs = {"id": target.id}
            if target.root is not None:
                attrs["root"] = target.root
            elem = ET.SubElement(section, "target_definition", attrs)
            for sc_id in sorted(target.components):
                sc_elem = ET.SubElement(elem, "software_component", id=sc_id)
                for cond in sorted(target.components[sc_id].conditions):
                    ET.SubElement(
                        sc_elem,
                        "condition",
                        property=cond.property,
                        operator=cond.op.value,
                        value=cond.value,
                    )
            for rel_id in sorted(target.relations):
                rel = target.relations[rel_id]
                ET.SubElement(
                    elem,
                    "relation",
                    id=rel.id,
                    kind=rel.kind.value,
                    left=rel.left,
                    right=rel.right,
                )
    if bundle.checks:
        section = ET.SubElement(root, "checks")
        for check in _sorted_by_id(bundle.checks):
            elem = ET.SubElement(
                section,
                "check_definition",
                id=check.id,
                definition_ref=check.definition_ref,
                target_ref=check.target_ref,
            )
            for test_ref in sorted(check.tau):
                ET.SubElement(elem, "test_map", test_ref=test_ref, sc_ref=check.tau[test_ref])
    tree = ET.ElementTree(root)
    ET.indent(tree, "  ")
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def _sorted_by_id(collection: dict) -> list:
    return [collection[key] for key in sorted(collection)]


def _object_element(obj: XmlConfigObject) -> ET.Element:
    elem = ET.Element("xmlconfiguration_object", id=obj.id)
    ET.SubElement(elem, "type").text = obj.config_type
    ET.SubElement(elem, "schema").text = obj.schema
    ET.SubElement(elem, "query").text = obj.query
    return elem


def _criteria_element(node: CriteriaNode) -> ET.Element:
    attrs = {"operator": node.operator.value}
    if node.negate:
        attrs["negate"] = "true"
    elem = ET.Element("criteria", attrs)
    for child in node.children:
        if isinstance(child, CriteriaNode):
            elem.append(_criteria_element(child))
        else:
            ET.SubElement(elem, "criterion", test_ref=child)
    return elem


def serialize_object(obj: XmlConfigObject) -> str:
    """Canonical single-element document for an object, used by collector matching."""
    return ET.tostring(_object_element(obj), encoding="unicode")


# --------------------------------------------------------------------------
# Collector sets


def parse_collectors(data: bytes | str) -> list[Collector]:
    """Parse a collector set; the result is ordered by (priority, declaration order)."""
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InputSyntaxError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(raw, list):
        raise SchemaError("collector set must be a JSON array")
    collectors = []
    seen_ids = set()
    for index, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise SchemaError(f"collector #{index}: must be an object")
        unknown = set(entry) - {"id", "conditions", "properties", "object_query", "priority"}
        if unknown:
            raise SchemaError(f"collector #{index}: unknown keys {sorted(unknown)}")
        try:
            collector_id = entry["id"]
            properties = entry["properties"]
            object_query = entry["object_query"]
        except KeyError as exc:
            raise SchemaError(f"collector #{index}: missing key {exc.args[0]!r}") from None
        if not isinstance(collector_id, str):
            raise SchemaError(f"collector #{index}: id must be a string")
        if collector_id in seen_ids:
            raise SchemaError(f"duplicate collector id {collector_id!r}")
        seen_ids.add(collector_id)
        if (
            not isinstance(properties, list)
            or not properties
            or not all(isinstance(p, str) for p in properties)
        ):
            raise SchemaError(f"collector {collector_id!r}: properties must be a non-empty list")
        try:
            parse_query(object_query if isinstance(object_query, str) else "")
        except QuerySyntaxError as exc:
            raise SchemaError(f"collector {collector_id!r}: bad object query: {exc}") from exc
        priority = entry.get("priority", 0)
        if not isinstance(priority, int) or isinstance(priority, bool):
            raise SchemaError(f"collector {collector_id!r}: priority must be an integer")
        conditions = []
        for cond in entry.get("conditions", []):
            if not isinstance(cond, dict) or set(cond) != {"property", "operator", "value"}:
                raise SchemaError(
                    f"collector {collector_id!r}: conditions need property/operator/value"
                )
            try:
                op = ConditionOp(cond["operator"])
            except ValueError:
                raise SchemaError(
                    f"collector {collector_id!r}: unknown operator {cond['operator']!r}"
                ) from None
            if not isinstance(cond["property"], str) or not isinstance(cond["value"], str):
                raise SchemaError(f"collector {collector_id!r}: bad condition value types")
            conditions.append(Condition(cond["property"], op, cond["value"]))
        seen = set()
        deduped = []
        for prop in properties:
            if prop not in seen:
                seen.add(prop)
                deduped.append(prop)
        collectors.append(
            Collector(
                id=collector_id,
                conditions=frozenset(conditions),
                properties=tuple(deduped),
                object_query=object_query,
                priority=priority,
            )
        )
    collectors.sort(key=lambda c: c.priority)  # stable: declaration order breaks ties
    return collectors


# --------------------------------------------------------------------------
# Plans


def serialize_plans(plans: Sequence["Plan"]) -> bytes:
    payload = [_plan_dict(plan) for plan in plans]
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode()


def _plan_dict(plan: "Plan") -> dict:
    return {
        "check_id": plan.check_id,
        "system_tests": [_system_test_dict(st) for st in plan.system_tests],
        "skipped": [
            {"group": list(group), "reason": reason} for group, reason in plan.skipped
        ],
    }


def _system_test_dict(st: SystemTest) -> dict:
    component_index = {component: i for i, component in enumerate(st.components)}
    return {
        "id": st.id,
        "group": sorted(st.group),
        "components": [{"attrs": c.as_dict()} for c in st.components],
        "mappings": [
            {
                "test": m.test_id,
                "component": None if m.component is None else component_index[m.component],
            }
            for m in st.mappings
        ],
        "diagnostics": list(st.diagnostics),
    }


def parse_plans(data: bytes | str, bundle: CheckBundle) -> list["Plan"]:
    """Load a plan file (hand-written or emitted by the planner)."""
    from confcheck.planner import Plan

    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InputSyntaxError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list):
        raise SchemaError("plan file must be a JSON object or array")
    plans = []
    for entry in raw:
        if not isinstance(entry, dict) or "check_id" not in entry:
            raise SchemaError("each plan needs a check_id")
        check_id = entry["check_id"]
        check = bundle.checks.get(check_id)
        if check is None:
            raise RefError(f"plan references unknown check {check_id!r}")
        system_tests = []
        for index, st_raw in enumerate(entry.get("system_tests", [])):
            system_tests.append(_parse_system_test(st_raw, index, check, bundle))
        skipped = tuple(
            (tuple(s.get("group", [])), s.get("reason", ""))
            for s in entry.get("skipped", [])
        )
        plans.append(Plan(check_id=check_id, system_tests=tuple(system_tests), skipped=skipped))
    return plans


def _parse_system_test(
    raw: object, index: int, check: CheckDefinition, bundle: CheckBundle
) -> SystemTest:
    if not isinstance(raw, dict):
        raise SchemaError("each system test must be an object")
    group = raw.get("group", [])
    if not isinstance(group, list) or not all(isinstance(i, str) for i in group):
        raise SchemaError("system test group must be a list of identifiers")
    components = []
    for comp_raw in raw.get("components", []):
        if not isinstance(comp_raw, dict) or not isinstance(comp_raw.get("attrs"), dict):
            raise SchemaError("each component needs an 'attrs' object")
        attrs = comp_raw["attrs"]
        if not all(isinstance(k, str) and isinstance(v, str) for k, v in attrs.items()):
            raise SchemaError("component attrs must map strings to strings")
        components.append(SystemComponent.from_mapping(attrs))
    mappings = []
    for m_raw in raw.get("mappings", []):
        if not isinstance(m_raw, dict) or "test" not in m_raw:
            raise SchemaError("each mapping needs a 'test'")
        test_id = m_raw["test"]
        if test_id not in bundle.tests:
            raise RefError(f"plan mapping references unknown test {test_id!r}")
        comp_index = m_raw.get("component")
        if comp_index is None:
            component = None
        elif isinstance(comp_index, int) and 0 <= comp_index < len(components):
            component = components[comp_index]
        else:
            raise SchemaError(f"mapping component index {comp_index!r} out of range")
        mapping = TestMapping(test_id, component)
        if mapping not in mappings:
            mappings.append(mapping)
    diagnostics = raw.get("diagnostics", [])
    if not isinstance(diagnostics, list) or not all(isinstance(d, str) for d in diagnostics):
        raise SchemaError("diagnostics must be a list of strings")
    return SystemTest(
        id=raw.get("id") or f"{check.id}:st:{index}",
        check_ref=check.id,
        group=frozenset(group),
        components=tuple(components),
        definition_ref=check.definition_ref,
        mappings=tuple(mappings),
        diagnostics=tuple(diagnostics),
    )


# --------------------------------------------------------------------------
# Reports


def serialize_report(
    results: Sequence[CheckResult],
    fmt: str = "json",
    *,
    engine: str | None = None,
    started_at: str | None = None,
) -> bytes:
    """Serialize scan results deterministically.

    Results are ordered by check id, then by canonical group order; every
    collected value is embedded verbatim so a report can be re-evaluated.
    """
    if fmt != "json":
        raise ValueError(f"unsupported report format {fmt!r}")
    from confcheck.report import summarize

    if started_at is None:
        started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    ordered = sorted(
        results,
        key=lambda r: (r.system_test.check_ref, tuple(sorted(r.system_test.group)),
                       r.system_test.id),
    )
    payload = {
        "engine": engine or ENGINE,
        "started_at": started_at,
        "results": [_result_dict(result) for result in ordered],
        "summary": summarize(results),
    }
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode()


def _result_dict(result: CheckResult) -> dict:
    st = result.system_test
    mappings = []
    for mapping in sorted(
        st.mappings, key=lambda m: (m.test_id, tuple(sorted(m.component.attributes))
                                    if m.component else ())
    ):
        item = result.items.get(mapping)
        mappings.append(
            {
                "test_id": mapping.test_id,
                "component_attrs": mapping.component.as_dict() if mapping.component else None,
                "status": result.omega[mapping].value,
                "items": list(item.values) if item else [],
                "source": item.source if item else None,
                "diagnostic": item.error if item else None,
            }
        )
    return {
        "check_id": st.check_ref,
        "group": sorted(st.group),
        "system_test_id": st.id,
        "mappings": mappings,
        "diagnostics": list(st.diagnostics),
        "definition_status": result.definition_status.value,
    }
