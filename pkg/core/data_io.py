"""
Модуль загрузки моделей и сериализации отчётов.

Структурированный вывод - JSON с отсортированными ключами: одинаковые входы
дают побайтно одинаковые отчёты. Текстовый вывод - для человека.
"""

import json
import os
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .capability import TrustableClass
from .composition import Aggregate, TreeDiagnostic, render_tree
from .evidence import (
    Claim, ClaimId, MeasurementValues, NULL_MEASUREMENT, NULL_SIGNATURE, Signature,
)
from .lattice import DecisionLattice, LatticeDiagnostic, TrustLevel
from .lifecycle import ClassificationReport, Trace
from .logger_module import init_logging
from .pipeline import ForensicReport, GapReport
from .policy_dsl import ParseDiagnostic, SourceDocument, TrustModel, parse_documents
from .verdict import PolicyDiagnostic, VerdictOutcome

logger = init_logging("data_io")


# === ЗАГРУЗКА ===

def read_documents(paths: Sequence[str]) -> List[SourceDocument]:
    """
    Читает документы .trust.

    Raises:
        ValueError: Если путь не существует
    """
    documents = []
    for path in paths:
        if not os.path.exists(path):
            raise ValueError(f"Путь не существует: {path}")
        with open(path, "r", encoding="utf-8") as f:
            documents.append(SourceDocument(f.read(), path))
    return documents


def load_model_files(paths: Sequence[str]) -> Tuple[Optional[TrustModel], List[ParseDiagnostic]]:
    """
    Загружает и объединяет модели из нескольких файлов.

    Example:
        >>> model, diagnostics = load_model_files(["fixtures/reference.trust"])
        >>> env = model.environment()
    """
    model, diagnostics = parse_documents(read_documents(paths))
    logger.info("Загружено %d файл(ов), диагностик: %d", len(paths), len(diagnostics))
    return model, diagnostics


def dumps(payload: Any) -> str:
    """Каноническая структурированная запись"""
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2)


def export_report_to_file(payload: Any, filepath: str) -> bool:
    """
    Сохраняет структурированный отчёт в файл.

    Returns:
        True если сохранение успешно
    """
    try:
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(dumps(payload) + "\n")
        return True
    except OSError as e:
        logger.error("Не удалось сохранить отчёт %s: %s", filepath, e)
        return False


# === УТВЕРЖДЕНИЯ ===

def claim_to_dict(claim: Claim) -> Dict[str, Any]:
    measurement = (claim.measurement.as_dict() if isinstance(claim.measurement, MeasurementValues)
                   else None)
    signature = None
    if isinstance(claim.signature, Signature):
        signature = {"key_ref": claim.signature.key_ref,
                     "payload_digest": claim.signature.payload_digest,
                     "nonce": claim.signature.nonce}
    return {
        "element": claim.grounded_to,
        "mechanism": claim.mechanism,
        "measurement": measurement,
        "signature": signature,
        "claim_id": {"nonce": claim.claim_id.nonce, "timestamp": claim.claim_id.timestamp},
    }


def claim_from_dict(data: Mapping[str, Any]) -> Claim:
    """
    Восстанавливает утверждение из структурированной записи.

    Raises:
        KeyError, TypeError, ValueError: Запись повреждена
    """
    measurement = data["measurement"]
    signature = data["signature"]
    claim_id = data["claim_id"]
    return Claim(
        measurement=MeasurementValues.of(measurement) if measurement else NULL_MEASUREMENT,
        signature=(Signature(signature["key_ref"], signature["payload_digest"], signature["nonce"])
                   if signature else NULL_SIGNATURE),
        claim_id=ClaimId(str(claim_id["nonce"]), int(claim_id["timestamp"])),
        grounded_to=str(data["element"]),
        mechanism=str(data["mechanism"]),
    )


def _atoms(pairs: Iterable[Tuple[Any, bool]]) -> Dict[str, bool]:
    return {str(atom): value for atom, value in pairs}


def outcome_to_dict(outcome: VerdictOutcome) -> Dict[str, Any]:
    return {
        "policy": outcome.policy,
        "result_class": outcome.result_class.label,
        "is_error": outcome.result_class.is_error,
        "case": outcome.case_index,
        "atoms": _atoms(outcome.atom_values),
        "failed_atoms": sorted(str(a) for a in outcome.failed_atoms()),
        "claim": claim_to_dict(outcome.claim),
    }


# === ОТЧЁТЫ ===

def diagnostic_to_dict(diagnostic: Any) -> Dict[str, Any]:
    """Любая диагностика: решётки, политики, разбора, дерева"""
    if isinstance(diagnostic, ParseDiagnostic):
        return {"source": "parse", "origin": diagnostic.origin, "line": diagnostic.line,
                "column": diagnostic.column, "severity": diagnostic.severity,
                "message": diagnostic.message}
    if isinstance(diagnostic, LatticeDiagnostic):
        return {"source": "lattice", "kind": diagnostic.kind, "severity": diagnostic.severity,
                "witnesses": list(diagnostic.witnesses), "message": diagnostic.message}
    if isinstance(diagnostic, PolicyDiagnostic):
        return {"source": "policy", "kind": diagnostic.kind, "policy": diagnostic.policy,
                "severity": diagnostic.severity, "message": diagnostic.message,
                "witness": [list(w) if isinstance(w, tuple) else w for w in diagnostic.witness]}
    if isinstance(diagnostic, TreeDiagnostic):
        return {"source": "tree", "kind": diagnostic.kind, "severity": diagnostic.severity,
                "nodes": list(diagnostic.nodes), "message": diagnostic.message}
    raise TypeError(f"неизвестная диагностика {diagnostic!r}")


def forensic_to_dict(report: ForensicReport) -> Dict[str, Any]:
    return {
        "element": report.element,
        "point": str(report.point),
        "level": report.decision.name,
        "result_class": report.outcome.result_class.label,
        "matched_case": report.matched_case,
        "matched_case_text": report.matched_case_text,
        "matched_rule": report.matched_rule,
        "failed_atoms": sorted(str(a) for a in report.failed_atoms),
        "atoms": _atoms(report.outcome.atom_values),
        "narrative": list(report.narrative),
        "context_preserved": report.context_preserved,
        "claim": claim_to_dict(report.claim),
    }


def format_forensic(report: ForensicReport) -> List[str]:
    lines = [
        f"element: {report.element}",
        f"point: {report.point}",
        f"level: {report.decision.name}",
        f"class: {report.outcome.result_class.label} (case: {report.matched_case_text})",
        f"rule: {report.matched_rule if report.matched_rule is not None else 'default'}",
        f"failed atoms: {', '.join(sorted(str(a) for a in report.failed_atoms)) or '-'}",
    ]
    lines += [f"  {line}" for line in report.narrative]
    return lines


def potential_to_dict(lattice: DecisionLattice, element: str, potential: Iterable[TrustLevel],
                      maxima: Sequence[TrustLevel], klass: TrustableClass,
                      bound: TrustLevel) -> Dict[str, Any]:
    return {
        "element": element,
        "potential": [level.name for level in lattice.sort_levels(potential)],
        "maxima": [level.name for level in maxima],
        "bound": bound.name,
        "class": klass.kind,
        "class_maxima": [level.name for level in klass.maxima],
    }


def gap_to_dict(report: GapReport) -> Dict[str, Any]:
    return {
        "current": report.current.name,
        "target": report.target.name,
        "reached": report.reached,
        "implication": report.implication.name if report.implication else None,
        "implication_error": report.implication_error,
        "paths": [{"class": p.result_class, "rule": p.rule, "level": p.level.name,
                   "requirements": list(p.requirements), "missing": list(p.missing),
                   "from_class": p.from_class} for p in report.paths],
    }


def format_gap(report: GapReport) -> List[str]:
    if report.implication is not None:
        lines = [f"{report.current.name} -> {report.target.name} = {report.implication.name}"]
    else:
        lines = [f"{report.current.name} -> {report.target.name}: {report.implication_error}"]
    if report.reached:
        lines.append("target already reached")
    for path in report.paths:
        rule = path.rule if path.rule is not None else "default"
        lines.append(f"  {path.result_class} (rule {rule}) -> {path.level.name}: "
                     f"missing {', '.join(path.missing) or '-'}")
    return lines


def trace_to_dict(trace: Trace) -> Dict[str, Any]:
    return {
        "scenario": trace.scenario,
        "element": trace.element,
        "passed": trace.passed,
        "final_level": trace.final_level,
        "aborted": trace.aborted,
        "counters": dict(trace.counters),
        "transitions": list(trace.transitions),
        "steps": [{"index": s.index, "step": s.step, "state": s.state, "level": s.level,
                   "assertion": s.assertion, "detail": s.detail} for s in trace.steps],
    }


def format_trace(trace: Trace) -> List[str]:
    lines = [f"scenario {trace.scenario} on {trace.element}"]
    for s in trace.steps:
        parts = [f"  [{s.index}] {s.step}", f"state={s.state}"]
        if s.level:
            parts.append(f"level={s.level}")
        if s.assertion:
            parts.append(s.assertion.upper())
        if s.detail:
            parts.append(f"({s.detail})")
        lines.append(" ".join(parts))
    if trace.aborted:
        lines.append(f"aborted: {trace.aborted}")
    lines.append(f"final: {trace.final_level or '-'}; "
                 f"{'PASS' if trace.passed else 'FAIL'}; "
                 + ", ".join(f"{k}={v}" for k, v in trace.counters))
    return lines


def classification_to_dict(report: ClassificationReport) -> Dict[str, Any]:
    return {
        "operation": report.operation,
        "class": report.sigma_class.value,
        "checked": list(report.checked),
        "ok": report.ok,
        "violations": [{"element": v.element, "reason": v.reason,
                        "before": v.before.name if v.before else None,
                        "after": v.after.name if v.after else None} for v in report.violations],
    }


def aggregate_to_dict(aggregate: Aggregate) -> Dict[str, Any]:
    return {
        "root": aggregate.root,
        "mode": aggregate.mode,
        "level": aggregate.level.name,
        "nodes": [{"element": n.element, "depth": n.depth,
                   "point": str(n.point) if n.point else None, "level": n.level.name,
                   "contribution": n.contribution.name, "mediated_by": list(n.mediated_by)}
                  for n in aggregate.breakdown],
    }


def format_aggregate(aggregate: Aggregate) -> List[str]:
    return [f"{aggregate.root} ({aggregate.mode}): {aggregate.level.name}"] + \
        ["  " + line for line in render_tree(aggregate)]

