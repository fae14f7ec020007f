"""Turns check definitions plus a resolved target into executable system tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from confcheck import content_io, datasource, td_eval, xquery
from confcheck.core_model import (
    CheckDefinition,
    Collector,
    SystemComponent,
    SystemTest,
    TestMapping,
    validate_check_definition,
)
from confcheck.datasource import DataSource, property_values
from confcheck.errors import (
    InvalidCheckError,
    InvalidTargetError,
    MissingAttributeError,
    MultiValuedError,
)


@dataclass
class Plan:
    check_id: str
    system_tests: tuple[SystemTest, ...]
    skipped: tuple[tuple[tuple[str, ...], str], ...] = ()


def resolve_attributes(
    ds: DataSource, properties: Sequence[str], identifier: str
) -> SystemComponent:
    """Project the listed properties of an identifier into a system component.

    Every property must be defined and single-valued; otherwise
    MissingAttributeError or MultiValuedError is raised.
    """
    attributes = []
    for prop in properties:
        values = property_values(ds, identifier, prop)
        if not values:
            raise MissingAttributeError(prop, identifier)
        if len(values) > 1:
            raise MultiValuedError(prop, identifier)
        attributes.append((prop, next(iter(values))))
    return SystemComponent(frozenset(attributes))


def collector_matches(
    ds: DataSource,
    bundle: "content_io.CheckBundle",
    cd: CheckDefinition,
    sigma: Mapping[str, str],
    collector: Collector,
    identifier: str,
) -> bool:
    """Whether a collector can serve configuration collection for an identifier.

    Three conditions: the identifier satisfies the collector's component
    conditions, every collector property is defined single-valued for it,
    and the collector's object query selects something in the canonical
    serialization of every object used by the tests mapped to the
    identifier's component.
    """
    component_id = sigma[identifier]
    if not datasource.satisfies(ds, identifier, collector.conditions):
        return False
    for prop in collector.properties:
        if len(property_values(ds, identifier, prop)) != 1:
            return False
    query = xquery.parse_query(collector.object_query)
    for test_id in sorted(t for t, sc in cd.tau.items() if sc == component_id):
        test = bundle.tests[test_id]
        obj = bundle.objects[test.object_ref]
        doc = xquery.parse_document(content_io.serialize_object(obj))
        if not xquery.eval_query(doc, query):
            return False
    return True


def generate_system_tests(
    ds: DataSource,
    bundle: "content_io.CheckBundle",
    cd: CheckDefinition,
    collectors: Sequence[Collector],
) -> Plan:
    """Produce one system test per identifier group satisfying the check's target.

    For each group member whose assigned component carries tests, the first
    matching collector (by priority, then declaration order) supplies the
    attribute set; members without a matching collector leave their tests
    mapped to no component, flagged UNPLANNED in the diagnostics.  Members
    whose component carries no tests contribute nothing.
    """
    report = validate_check_definition(cd, bundle)
    if not report.ok:
        raise InvalidCheckError(
            f"check definition {cd.id!r} is invalid: " + "; ".join(report.messages())
        )
    try:
        resolution = td_eval.interpret_target_definition(ds, bundle.targets[cd.target_ref])
    except InvalidTargetError as exc:
        raise InvalidCheckError(f"check definition {cd.id!r}: {exc}") from exc

    tau_inverse: dict[str, list[str]] = {}
    for test_id, component_id in cd.tau.items():
        tau_inverse.setdefault(component_id, []).append(test_id)
    for tests in tau_inverse.values():
        tests.sort()

    system_tests = []
    for index, group in enumerate(resolution.sorted_groups()):
        components: list[SystemComponent] = []
        mappings: list[TestMapping] = []
        diagnostics: list[str] = []
        for identifier in group:
            tests = tau_inverse.get(resolution.assignment[identifier], [])
            if not tests:
                continue
            chosen = None
            for collector in collectors:
                if collector_matches(ds, bundle, cd, resolution.assignment, collector,
                                     identifier):
                    chosen = collector
                    break
            if chosen is None:
                for test_id in tests:
                    mapping = TestMapping(test_id, None)
                    if mapping not in mappings:
                        mappings.append(mapping)
                    diagnostics.append(
                        f"UNPLANNED: test {test_id} on identifier {identifier}:"
                        f" no matching collector"
                    )
                continue
            component = resolve_attributes(ds, chosen.properties, identifier)
            if component not in components:
                components.append(component)
            for test_id in tests:
                mapping = TestMapping(test_id, component)
                if mapping not in mappings:
                    mappings.append(mapping)
        system_tests.append(
            SystemTest(
                id=f"{cd.id}:st:{index}",
                check_ref=cd.id,
                group=frozenset(group),
                components=tuple(components),
                definition_ref=cd.definition_ref,
                mappings=tuple(mappings),
                diagnostics=tuple(diagnostics),
            )
        )
    return Plan(check_id=cd.id, system_tests=tuple(system_tests), skipped=())
