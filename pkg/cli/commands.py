"""
Командная строка движка доверия.

Коды возврата: 0 - успех, 1 - отказ в доверии (⊥, проваленная проверка,
ошибка диагностики), 2 - ошибка использования или разбора.
"""

import argparse
import asyncio
import sys
from dataclasses import replace
from typing import Any, Callable, List, Optional, Sequence, TextIO

from core.capability import (
    PipelinePoint, admitted_triples, potential_maxima, preferred_point, trust_potential,
    trustable_class,
)
from core.composition import MODES, CompositionView, aggregate_trust, validate_tree
from core.config_manager import ConfigManager, parse_endpoint
from core.data_io import (
    aggregate_to_dict, classification_to_dict, diagnostic_to_dict, dumps, forensic_to_dict,
    export_report_to_file, format_aggregate, format_forensic, format_gap, format_trace, gap_to_dict,
    load_model_files, potential_to_dict, trace_to_dict,
)
from core.errors import TrustError
from core.lattice import downset_completion
from core.lifecycle import BUILTIN_SIGMAS, classify_check, run_scenario
from core.logger_module import AuditLogger, init_logging, set_verbosity
from core.pipeline import gap_analysis, run_pipeline
from core.policy_dsl import TrustModel, render

logger = init_logging("cli")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Ошибка входных данных: код возврата 2"""


class _Session:
    """Общие для подкоманд настройки, модель и потоки вывода"""

    def __init__(self, args: argparse.Namespace, stdout: TextIO, stderr: TextIO):
        self.args = args
        self.stdout = stdout
        self.stderr = stderr
        self.config = ConfigManager(args.config)
        self.format = args.format or self.config.get_output_format()
        self.allow_nonheyting = args.allow_nonheyting or self.config.allow_nonheyting()
        audit = self.config.get_audit_settings()
        audit_dir = args.audit_dir or (audit.get("dir", "logs") if audit.get("enabled") else None)
        self.audit = AuditLogger(audit_dir, enabled=True) if audit_dir else None

    def model_files(self, extra: Sequence[str] = ()) -> List[str]:
        files = list(self.args.model or self.config.get_model_files())
        return files + [f for f in extra if f not in files]

    def load(self, extra: Sequence[str] = ()) -> TrustModel:
        files = self.model_files(extra)
        if not files:
            raise UsageError("не заданы файлы модели (-m FILE или model_files в конфигурации)")
        try:
            model, diagnostics = load_model_files(files)
        except (ValueError, OSError) as e:
            raise UsageError(str(e)) from None
        for diagnostic in diagnostics:
            print(diagnostic, file=self.stderr)
        if model is None:
            raise UsageError("модель содержит ошибки")
        if model.lattice is None:
            raise UsageError("в модели нет решётки решений")
        return model

    def point(self, env, element: str) -> PipelinePoint:
        if self.args.point:
            try:
                return PipelinePoint.parse(self.args.point)
            except ValueError as e:
                raise UsageError(str(e)) from None
        point = preferred_point(env, element)
        if point is None:
            raise UsageError(f"для '{element}' нет допустимой точки конвейера")
        return point

    def emit(self, payload: Any, lines: Callable[[], List[str]]) -> None:
        if self.args.output and not export_report_to_file(payload, self.args.output):
            raise UsageError(f"не удалось записать отчёт в {self.args.output}")
        if self.format == "structured":
            print(dumps(payload), file=self.stdout)
        else:
            for line in lines():
                print(line, file=self.stdout)


# === ПОДКОМАНДЫ ===

def cmd_validate(s: _Session) -> int:
    model = s.load(s.args.files)
    diagnostics: List[Any] = []
    for name in sorted(model.lattices):
        for diagnostic in model.lattices[name].validate():
            if diagnostic.is_heyting_defect and s.allow_nonheyting:
                diagnostic = replace(diagnostic, severity="warning")
            diagnostics.append(diagnostic)
    env = model.environment()
    diagnostics += env.check_policies(bool(model.context.expectations))
    for name in sorted(model.compositions):
        diagnostics += validate_tree(env.world, model.compositions[name].root)

    errors = sum(1 for d in diagnostics if d.severity == "error")
    warnings = len(diagnostics) - errors
    if s.audit:
        s.audit.log_validation(s.model_files(s.args.files), errors, warnings)
    s.emit({"diagnostics": [diagnostic_to_dict(d) for d in diagnostics],
            "errors": errors, "warnings": warnings},
           lambda: [str(d) for d in diagnostics] + [f"{errors} error(s), {warnings} warning(s)"])
    return EXIT_DOMAIN if errors else EXIT_OK


def _eval_every(s: _Session, env, ctx) -> int:
    """Массовая оценка: каждый элемент в своей предпочтительной точке"""
    rows = []
    for element in sorted(env.world.elements):
        point = preferred_point(env, element)
        if point is None:
            rows.append({"element": element, "point": None, "level": None,
                         "result_class": None, "status": "restriction"})
            continue
        level, report = run_pipeline(env, element, point, ctx)
        if s.audit:
            s.audit.log_evaluation(element, str(point), level.name, report.outcome.result_class.label)
        rows.append({"element": element, "point": str(point), "level": level.name,
                     "result_class": report.outcome.result_class.label, "status": "evaluated"})

    s.emit({"elements": rows}, lambda: [
        f"{r['element']}: {r['level']} ({r['point']})" if r["level"] else f"{r['element']}: -"
        for r in rows])
    bottom = env.lattice.bottom.name
    evaluated = [r for r in rows if r["level"] is not None]
    return EXIT_DOMAIN if all(r["level"] == bottom for r in evaluated) else EXIT_OK


def cmd_eval(s: _Session) -> int:
    model = s.load()
    env = model.environment()
    ctx = model.new_context()
    element = s.args.element
    if element is None:
        if not s.args.all:
            raise UsageError("укажите элемент или --all для оценки всех элементов")
        return _eval_every(s, env, ctx)
    env.world.element(element)
    points = sorted(admitted_triples(env, element)) if s.args.all else [s.point(env, element)]
    if not points:
        raise UsageError(f"для '{element}' нет допустимых точек конвейера")

    results = []
    for point in points:
        level, report = run_pipeline(env, element, point, ctx)
        results.append((level, report))
        if s.audit:
            s.audit.log_evaluation(element, str(point), level.name, report.outcome.result_class.label)

    def lines() -> List[str]:
        if not s.args.all:
            return [results[0][0].name] + format_forensic(results[0][1])
        return [f"{report.point}: {level.name} ({report.outcome.result_class.label})"
                for level, report in results]

    s.emit({"element": element, "results": [forensic_to_dict(r) for _, r in results]}, lines)
    bottom = env.lattice.bottom
    return EXIT_DOMAIN if all(level == bottom for level, _ in results) else EXIT_OK


def cmd_forensics(s: _Session) -> int:
    model = s.load()
    env = model.environment()
    element = s.args.element
    env.world.element(element)
    level, report = run_pipeline(env, element, s.point(env, element), model.new_context())
    if s.audit:
        s.audit.log_forensics(element, sorted(str(a) for a in report.failed_atoms),
                              list(report.narrative))
    s.emit(forensic_to_dict(report), lambda: format_forensic(report))
    return EXIT_DOMAIN if level == env.lattice.bottom else EXIT_OK


def cmd_potential(s: _Session) -> int:
    model = s.load()
    env = model.environment()
    lattice = env.lattice
    element = s.args.element
    env.world.element(element)
    bound = lattice.level(s.args.bound) if s.args.bound else lattice.top
    potential = trust_potential(env, element)
    maxima = potential_maxima(env, element)
    klass = trustable_class(env, element, bound)
    payload = potential_to_dict(lattice, element, potential, maxima, klass, bound)
    s.emit(payload, lambda: [
        f"P({element}) = {{{', '.join(payload['potential'])}}}",
        f"max: {', '.join(payload['maxima'])}",
        f"class: {klass} (bound {bound.name})",
    ])
    return EXIT_DOMAIN if klass.kind == "Untrustable" else EXIT_OK


def cmd_gap(s: _Session) -> int:
    model = s.load()
    env = model.environment()
    point = PipelinePoint.parse(s.args.point) if s.args.point else None
    report = gap_analysis(env, s.args.current, s.args.target, point)
    s.emit(gap_to_dict(report), lambda: format_gap(report))
    return EXIT_OK


def cmd_scenario(s: _Session) -> int:
    model = s.load([s.args.file])
    if s.args.name:
        names = [s.args.name]
        if s.args.name not in model.scenarios:
            raise UsageError(f"сценарий '{s.args.name}' не объявлен")
    else:
        names = sorted(n for n, origin in model.scenario_origins.items() if origin == s.args.file)
    if not names:
        raise UsageError(f"в {s.args.file} нет сценариев")
    env = model.environment()
    traces = []
    for name in names:
        trace = run_scenario(env, model.scenarios[name], model.new_context(), model.sigmas)
        traces.append(trace)
        if s.audit:
            s.audit.log_scenario(name, trace.passed, trace.final_level)
    s.emit({"traces": [trace_to_dict(t) for t in traces]},
           lambda: [line for t in traces for line in format_trace(t)])
    return EXIT_OK if all(t.passed for t in traces) else EXIT_DOMAIN


def cmd_classify(s: _Session) -> int:
    model = s.load()
    env = model.environment()
    op = model.sigmas.get(s.args.sigma) or BUILTIN_SIGMAS.get(s.args.sigma)
    if op is None:
        raise UsageError(f"операция '{s.args.sigma}' не объявлена")
    elements = s.args.elements or sorted(e for e in env.world.elements
                                         if preferred_point(env, e) is not None)
    point = PipelinePoint.parse(s.args.point) if s.args.point else None
    report = classify_check(env, op, elements, point, model.new_context())
    s.emit(classification_to_dict(report), lambda: [
        f"{report.operation} ({report.sigma_class.value}): {'OK' if report.ok else 'VIOLATED'}",
    ] + [f"  {v.element}: {v.reason} "
         f"({v.before.name if v.before else '-'} -> {v.after.name if v.after else '-'})"
         for v in report.violations])
    return EXIT_OK if report.ok else EXIT_DOMAIN


def cmd_aggregate(s: _Session) -> int:
    model = s.load()
    env = model.environment()
    target = s.args.root
    view = model.compositions.get(target) or CompositionView(target)
    point = PipelinePoint.parse(s.args.point) if s.args.point else None
    aggregate = aggregate_trust(env, view, point, model.new_context(), s.args.mode)
    s.emit(aggregate_to_dict(aggregate), lambda: format_aggregate(aggregate))
    return EXIT_DOMAIN if aggregate.level == env.lattice.bottom else EXIT_OK


def cmd_complete_lattice(s: _Session) -> int:
    model = s.load()
    if s.args.lattice:
        if s.args.lattice not in model.lattices:
            raise UsageError(f"решётка '{s.args.lattice}' не объявлена")
        lattice = model.lattices[s.args.lattice]
    else:
        lattice = model.lattice
    completed = downset_completion(lattice)
    s.emit(completed.canonical(),
           lambda: render(TrustModel(lattices={completed.name: completed})).rstrip("\n").split("\n"))
    return EXIT_OK


def cmd_render(s: _Session) -> int:
    model = s.load()
    text = render(model)
    s.emit({"document": text}, lambda: text.rstrip("\n").split("\n"))
    return EXIT_OK


def _endpoint(raw: Optional[str], fallback) -> tuple:
    if raw is None:
        return fallback
    try:
        return parse_endpoint(raw)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_serve_agent(s: _Session) -> int:
    from harness import agent_serve

    model = s.load()
    world = model.world()
    if s.args.elements:
        world = world.slice(s.args.elements)
    endpoint = _endpoint(s.args.endpoint, s.config.get_endpoint("agent"))

    async def main():
        agent_serve(world, endpoint, s.audit)
        logger.warning("Агент слушает %s:%d", *endpoint)
        await asyncio.Event().wait()

    asyncio.run(main())
    return EXIT_OK


def cmd_serve_verifier(s: _Session) -> int:
    from harness import verifier_serve

    model = s.load()
    env = model.environment()
    endpoint = _endpoint(s.args.endpoint, s.config.get_endpoint("verifier"))
    agent = _endpoint(s.args.agent, None)

    async def main():
        verifier_serve(env, model.new_context(), endpoint, agent, model.scenarios, model.sigmas,
                       s.audit)
        logger.warning("Верификатор слушает %s:%d", *endpoint)
        await asyncio.Event().wait()

    asyncio.run(main())
    return EXIT_OK


def _parse_flag(value: str) -> bool:
    if value not in ("true", "false"):
        raise UsageError(f"ожидается true или false, получено '{value}'")
    return value == "true"


CONFIG_SETTERS = {
    "endpoints.agent": lambda config, value: config.set_endpoint("agent", value),
    "endpoints.verifier": lambda config, value: config.set_endpoint("verifier", value),
    "output.format": lambda config, value: config.set_output_format(value),
    "lattice.allow_nonheyting": lambda config, value: config.set_allow_nonheyting(_parse_flag(value)),
}


def cmd_config(s: _Session) -> int:
    """show - текущие значения; init - файл со значениями по умолчанию; set KEY VALUE"""
    config = s.config
    if s.args.action == "init":
        if config.config_path.exists():
            raise UsageError(f"файл конфигурации {config.config_path} уже существует")
        config = ConfigManager(str(config.config_path), persist_defaults=True)
        if not config.config_path.exists():
            raise UsageError(f"не удалось записать {config.config_path}")
    elif s.args.action == "set":
        if s.args.key is None or s.args.value is None:
            raise UsageError("config set KEY VALUE")
        setter = CONFIG_SETTERS.get(s.args.key)
        if setter is None:
            raise UsageError(f"неизвестный ключ '{s.args.key}', доступные: {sorted(CONFIG_SETTERS)}")
        setter(config, s.args.value)
        if not config.save():
            raise UsageError(f"не удалось записать {config.config_path}")
        logger.info("Конфигурация %s: %s = %s", config.config_path, s.args.key, s.args.value)

    def lines() -> List[str]:
        out = [f"# {config.config_path}"]
        for section, value in sorted(config.config.items()):
            if isinstance(value, dict):
                out += [f"{section}.{key} = {item}" for key, item in sorted(value.items())]
            else:
                out.append(f"{section} = {value}")
        return out

    s.emit({"path": str(config.config_path), "config": config.config}, lines)
    return EXIT_OK


# === РАЗБОР АРГУМЕНТОВ ===

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trust", description="Движок решений о доверии")
    parser.add_argument("-m", "--model", action="append", metavar="FILE",
                        help="документ .trust (можно несколько)")
    parser.add_argument("--format", choices=("text", "structured"))
    parser.add_argument("--allow-nonheyting", action="store_true",
                        help="дефекты гейтинговости решётки как предупреждения")
    parser.add_argument("--point", metavar="A:V:D", help="точка конвейера")
    parser.add_argument("--endpoint", metavar="HOST:PORT", help="адрес сервиса")
    parser.add_argument("--audit-dir", metavar="DIR", help="журнал аудита")
    parser.add_argument("-o", "--output", metavar="FILE", help="копия структурированного отчёта в файл")
    parser.add_argument("--config", metavar="FILE", help="файл конфигурации")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="проверка решёток, политик и деревьев")
    p.add_argument("files", nargs="*")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="прогон конвейера для элемента")
    p.add_argument("element", nargs="?", help="без элемента вместе с --all: все элементы")
    p.add_argument("--all", action="store_true", help="все допустимые точки элемента или все элементы")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("forensics", help="отчёт о провалах")
    p.add_argument("element")
    p.set_defaults(func=cmd_forensics)

    p = sub.add_parser("potential", help="потенциал доверия P(e)")
    p.add_argument("element")
    p.add_argument("--bound", metavar="LEVEL")
    p.set_defaults(func=cmd_potential)

    p = sub.add_parser("gap", help="анализ разрыва между уровнями")
    p.add_argument("current")
    p.add_argument("target")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("scenario", help="прогон сценариев жизненного цикла")
    p.add_argument("file")
    p.add_argument("--name")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("classify", help="проверка класса операции σ")
    p.add_argument("sigma")
    p.add_argument("--elements", nargs="+")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("aggregate", help="агрегирование доверия по дереву")
    p.add_argument("root", help="композиция или корневой элемент")
    p.add_argument("--mode", choices=MODES, default="meet")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("complete-lattice", help="пополнение решётки нижними множествами")
    p.add_argument("--lattice")
    p.set_defaults(func=cmd_complete_lattice)

    p = sub.add_parser("render", help="каноническая запись модели")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve-agent", help="запуск агента")
    p.add_argument("--elements", nargs="+")
    p.set_defaults(func=cmd_serve_agent)

    p = sub.add_parser("serve-verifier", help="запуск верификатора")
    p.add_argument("--agent", metavar="HOST:PORT")
    p.set_defaults(func=cmd_serve_verifier)

    p = sub.add_parser("config", help="просмотр и изменение файла конфигурации")
    p.add_argument("action", choices=("show", "init", "set"))
    p.add_argument("key", nargs="?", help=", ".join(sorted(CONFIG_SETTERS)))
    p.add_argument("value", nargs="?")
    p.set_defaults(func=cmd_config)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None,
            stderr: Optional[TextIO] = None) -> int:
    """
    Выполняет одну подкоманду.

    Example:
        >>> run_cli(["-m", "fixtures/reference.trust", "eval", "pc1"])
        0
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    set_verbosity(args.verbose)
    try:
        session = _Session(args, stdout, stderr)
        return args.func(session)
    except UsageError as e:
        print(f"error: {e}", file=stderr)
        return EXIT_USAGE
    except KeyError as e:
        print(f"error: {e}", file=stderr)
        return EXIT_USAGE
    except TrustError as e:
        print(f"error: {e}", file=stderr)
        return EXIT_DOMAIN
    except ValueError as e:
        print(f"error: {e}", file=stderr)
        return EXIT_USAGE
