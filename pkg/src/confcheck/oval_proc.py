"""Executes system tests: collects configuration documents and evaluates results."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import requests

from confcheck import content_io, planner, xquery
from confcheck.core_model import (
    CheckResult,
    Collector,
    CriteriaNode,
    OvalDefinition,
    OvalTest,
    ResultStatus,
    SystemTest,
    TestMapping,
    XmlConfigState,
    definition_tests,
)
from confcheck.datasource import DataSource
from confcheck.errors import InputSyntaxError, SchemaError

HTTP_TIMEOUT_SECONDS = 5.0


class AdapterKind(str, Enum):
    FILE = "file"
    HTTP = "http"


_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class CollectionAdapter:
    """Binding from system-component attributes to a document retrieval mechanism."""

    id: str
    kind: AdapterKind
    accepts: frozenset[str]
    path_attr: str | None = None
    remap_root: str | None = None
    url_template: str | None = None

    def required_attributes(self) -> frozenset[str]:
        if self.kind is AdapterKind.FILE:
            return frozenset({self.path_attr} if self.path_attr else ())
        return frozenset(_PLACEHOLDER_RE.findall(self.url_template or ""))


def parse_adapters(data: bytes | str) -> list[CollectionAdapter]:
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InputSyntaxError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(raw, list):
        raise SchemaError("adapter config must be a JSON array")
    adapters = []
    for index, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise SchemaError(f"adapter #{index}: must be an object")
        try:
            adapter_id = entry["id"]
            kind = AdapterKind(entry["kind"])
        except KeyError as exc:
            raise SchemaError(f"adapter #{index}: missing key {exc.args[0]!r}") from None
        except ValueError:
            raise SchemaError(f"adapter #{index}: unknown kind {entry['kind']!r}") from None
        accepts = entry.get("accepts", [])
        if not isinstance(accepts, list) or not all(isinstance(a, str) for a in accepts):
            raise SchemaError(f"adapter {adapter_id!r}: accepts must be a list of strings")
        if kind is AdapterKind.FILE:
            if not isinstance(entry.get("path_attr"), str) or not isinstance(
                entry.get("remap_root"), str
            ):
                raise SchemaError(f"adapter {adapter_id!r}: file adapters need path_attr"
                                  f" and remap_root")
            adapters.append(
                CollectionAdapter(
                    id=adapter_id,
                    kind=kind,
                    accepts=frozenset(accepts),
                    path_attr=entry["path_attr"],
                    remap_root=entry["remap_root"],
                )
            )
        else:
            if not isinstance(entry.get("url_template"), str):
                raise SchemaError(f"adapter {adapter_id!r}: http adapters need url_template")
            adapters.append(
                CollectionAdapter(
                    id=adapter_id,
                    kind=kind,
                    accepts=frozenset(accepts),
                    url_template=entry["url_template"],
                )
            )
    return adapters


@dataclass(frozen=True)
class CollectedItem:
    """Raw query results collected for one test mapping."""

    mapping: TestMapping
    values: tuple[str, ...] = ()
    source: str | None = None
    error: str | None = None

    @property
    def collected(self) -> bool:
        return self.error is None


def _remap_unc(root: str, unc_path: str) -> str | None:
    """Map \\\\host\\share\\path to <root>/host/share/path; None when unsafe."""
    parts = [part for part in unc_path.replace("\\", "/").split("/") if part]
    if not parts or any(part == ".." for part in parts):
        return None
    return os.path.join(root, *parts)


def collect(
    st: SystemTest,
    bundle: "content_io.CheckBundle",
    adapters: Sequence[CollectionAdapter],
) -> list[CollectedItem]:
    """Collect one item per mapping; failures yield per-item errors, never raise."""
    items = []
    for mapping in st.mappings:
        if mapping.component is None:
            items.append(CollectedItem(mapping, error="unplanned"))
            continue
        test = bundle.tests.get(mapping.test_id)
        obj = bundle.objects.get(test.object_ref) if test else None
        if obj is None:
            items.append(CollectedItem(mapping, error="unresolved test or object reference"))
            continue
        attrs = mapping.component.as_dict()
        adapter = next(
            (
                a
                for a in adapters
                if obj.config_type in a.accepts and a.required_attributes() <= set(attrs)
            ),
            None,
        )
        if adapter is None:
            items.append(
                CollectedItem(
                    mapping, error=f"no adapter accepts {obj.config_type!r}"
                                   f" with attributes {sorted(attrs)}"
                )
            )
            continue
        document, source, error = _fetch(adapter, attrs)
        if error is not None:
            items.append(CollectedItem(mapping, source=source, error=error))
            continue
        try:
            doc = xquery.parse_document(document)
        except InputSyntaxError as exc:
            items.append(CollectedItem(mapping, source=source, error=f"xml parse error: {exc}"))
            continue
        values = xquery.eval_query(doc, xquery.parse_query(obj.query))
        items.append(CollectedItem(mapping, values=tuple(values), source=source))
    return items


def _fetch(
    adapter: CollectionAdapter, attrs: Mapping[str, str]
) -> tuple[bytes | None, str | None, str | None]:
    if adapter.kind is AdapterKind.FILE:
        local = _remap_unc(adapter.remap_root or "", attrs[adapter.path_attr or ""])
        if local is None:
            return None, None, f"unsafe path {attrs.get(adapter.path_attr or '')!r}"
        source = f"{adapter.id}:{local}"
        try:
            with open(local, "rb") as handle:
                return handle.read(), source, None
        except FileNotFoundError:
            return None, source, f"not found: {local}"
        except OSError as exc:
            return None, source, f"read error: {exc}"
    url = (adapter.url_template or "").format(**attrs)
    source = f"{adapter.id}:{url}"
    try:
        response = requests.get(url, timeout=HTTP_TIMEOUT_SECONDS, allow_redirects=False)
    except requests.RequestException as exc:
        return None, source, f"http error: {exc}"
    if response.status_code != 200:
        return None, source, f"http status {response.status_code}"
    return response.content, source, None


# --------------------------------------------------------------------------
# Evaluation


def _satisfies_state(value: str, state: XmlConfigState) -> bool:
    for expected in state.expected:
        if expected.op.value == "EQUALS":
            if value != expected.value:
                return False
        elif expected.op.value == "NOT_EQUAL":
            if value == expected.value:
                return False
        else:
            if re.fullmatch(expected.value, value) is None:
                return False
    return True


def evaluate_test(
    t: OvalTest, item: CollectedItem, bundle: "content_io.CheckBundle"
) -> ResultStatus:
    """Tri-state outcome for one collected item.

    Collection failures are ERROR.  Otherwise the existence expectation is
    checked first, then every value (or at least one, per the test's item
    check) must satisfy all referenced states.
    """
    if not item.collected:
        return ResultStatus.ERROR
    values = item.values
    if t.existence.value == "none_exist":
        return ResultStatus.TRUE if not values else ResultStatus.FALSE
    if not values:
        return ResultStatus.FALSE
    states = [bundle.states[ref] for ref in t.state_refs if ref in bundle.states]
    if len(states) != len(t.state_refs):
        return ResultStatus.ERROR
    if not states:
        return ResultStatus.TRUE
    matches = [all(_satisfies_state(v, s) for s in states) for v in values]
    ok = all(matches) if t.item_check.value == "all" else any(matches)
    return ResultStatus.TRUE if ok else ResultStatus.FALSE


def _and_fold(statuses: Sequence[ResultStatus]) -> ResultStatus:
    if ResultStatus.FALSE in statuses:
        return ResultStatus.FALSE
    if ResultStatus.ERROR in statuses:
        return ResultStatus.ERROR
    return ResultStatus.TRUE


def _or_fold(statuses: Sequence[ResultStatus]) -> ResultStatus:
    if ResultStatus.TRUE in statuses:
        return ResultStatus.TRUE
    if ResultStatus.ERROR in statuses:
        return ResultStatus.ERROR
    return ResultStatus.FALSE


def evaluate_definition(
    definition: OvalDefinition, statuses: Mapping[str, ResultStatus]
) -> ResultStatus:
    """Fold test statuses through the criteria tree.

    AND is false when any child is false, OR is true when any child is
    true; otherwise any errored child makes the node ERROR.  Negation
    swaps TRUE and FALSE and preserves ERROR.  Tests without a recorded
    status count as ERROR.
    """

    def fold(node: CriteriaNode) -> ResultStatus:
        child_statuses = [
            fold(child) if isinstance(child, CriteriaNode)
            else statuses.get(child, ResultStatus.ERROR)
            for child in node.children
        ]
        folded = (_and_fold if node.operator.value == "AND" else _or_fold)(child_statuses)
        if node.negate:
            if folded is ResultStatus.TRUE:
                return ResultStatus.FALSE
            if folded is ResultStatus.FALSE:
                return ResultStatus.TRUE
        return folded

    return fold(definition.criteria)


def evaluate_system_test(
    st: SystemTest,
    bundle: "content_io.CheckBundle",
    items: Sequence[CollectedItem],
) -> CheckResult:
    """Combine per-mapping outcomes into a check result for one system test.

    A test mapped to several components contributes the AND-fold of its
    mapping outcomes; tests of the definition with no mapping at all count
    as ERROR.
    """
    by_mapping = {item.mapping: item for item in items}
    omega: dict[TestMapping, ResultStatus] = {}
    for mapping in st.mappings:
        item = by_mapping.get(mapping, CollectedItem(mapping, error="not collected"))
        test = bundle.tests.get(mapping.test_id)
        omega[mapping] = (
            evaluate_test(test, item, bundle) if test else ResultStatus.ERROR
        )
    definition = bundle.definitions[st.definition_ref]
    statuses = {}
    for test_id in definition_tests(definition):
        mapped = [omega[m] for m in st.mappings if m.test_id == test_id]
        statuses[test_id] = _and_fold(mapped) if mapped else ResultStatus.ERROR
    return CheckResult(
        system_test=st,
        omega=omega,
        definition_status=evaluate_definition(definition, statuses),
        items=by_mapping,
    )


def run_system_test(
    st: SystemTest,
    bundle: "content_io.CheckBundle",
    adapters: Sequence[CollectionAdapter],
) -> CheckResult:
    return evaluate_system_test(st, bundle, collect(st, bundle, adapters))


def run_checks(
    ds: DataSource,
    bundle: "content_io.CheckBundle",
    collectors: Sequence[Collector],
    adapters: Sequence[CollectionAdapter],
) -> list[CheckResult]:
    """Full pipeline per check definition: resolve, plan, collect, evaluate."""
    results = []
    for check_id in sorted(bundle.checks):
        plan = planner.generate_system_tests(ds, bundle, bundle.checks[check_id], collectors)
        for st in plan.system_tests:
            results.append(run_system_test(st, bundle, adapters))
    return results


def run_plans(
    plans: Sequence["planner.Plan"],
    bundle: "content_io.CheckBundle",
    adapters: Sequence[CollectionAdapter],
) -> list[CheckResult]:
    """Execute externally provided system-test plans, bypassing resolution."""
    results = []
    for plan in plans:
        for st in plan.system_tests:
            results.append(run_system_test(st, bundle, adapters))
    return results
