"""
Композиция κ: деревья (DAG) элементов, агрегирование доверия через meet
и опосредованное доверие с порогом на поддеревьях.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .capability import Environment, PipelinePoint, admitted_triples, preferred_point
from .errors import CycleDetected, UnknownElement
from .evidence import Context, World
from .lattice import TrustLevel
from .logger_module import init_logging
from .pipeline import run_pipeline

logger = init_logging("composition")

MODES = ("meet", "mediated")


@dataclass(frozen=True)
class MediationRule:
    """Порог, применяемый к вкладу поддерева опосредующего узла"""
    floor: TrustLevel
    rationale: str = ""


@dataclass(frozen=True)
class CompositionView:
    root: str
    mediation: Mapping[str, MediationRule] = field(default_factory=dict)


@dataclass(frozen=True)
class TreeDiagnostic:
    kind: str
    nodes: Tuple[str, ...]
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.severity}: {self.kind} {self.message}"


@dataclass(frozen=True)
class NodeContribution:
    element: str
    depth: int
    point: Optional[PipelinePoint]
    level: TrustLevel
    contribution: TrustLevel
    mediated_by: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Aggregate:
    root: str
    mode: str
    level: TrustLevel
    breakdown: Tuple[NodeContribution, ...]
    edges: Tuple[Tuple[str, str], ...]


def _graph(world: World) -> Tuple[List[str], Dict[str, int], csr_matrix, List[Tuple[str, str]]]:
    """Матрица смежности κ по известным элементам; неизвестные дети возвращаются отдельно"""
    ids = sorted(world.elements)
    index = {e: i for i, e in enumerate(ids)}
    rows, cols, dangling = [], [], []
    for parent in ids:
        for child in world.elements[parent].children:
            if child in index:
                rows.append(index[parent])
                cols.append(index[child])
            else:
                dangling.append((parent, child))
    data = np.ones(len(rows), dtype=np.int8)
    graph = csr_matrix((data, (np.array(rows, dtype=int), np.array(cols, dtype=int))),
                       shape=(len(ids), len(ids)))
    return ids, index, graph, dangling


def _reachable(graph: csr_matrix, start: int) -> np.ndarray:
    """Расстояния (в рёбрах) от start; inf - недостижимо"""
    return shortest_path(graph, directed=True, unweighted=True, indices=start)


def validate_tree(world: World, root: str) -> List[TreeDiagnostic]:
    """
    Диагностика отношения κ от корня: неизвестные элементы и циклы.

    Пустой список, если от корня достижим дерево или DAG.
    """
    if root not in world.elements:
        return [TreeDiagnostic("UnknownElement", (root,), f"корень '{root}' не найден")]
    ids, index, graph, dangling = _graph(world)
    reach = np.isfinite(_reachable(graph, index[root]))
    diagnostics: List[TreeDiagnostic] = []
    for parent, child in dangling:
        if reach[index[parent]]:
            diagnostics.append(TreeDiagnostic(
                "UnknownElement", (parent, child), f"'{parent}' ссылается на неизвестный '{child}'"))

    n_components, labels = connected_components(graph, directed=True, connection="strong")
    for component in range(n_components):
        members = [ids[i] for i in np.flatnonzero(labels == component)]
        if len(members) > 1 and any(reach[index[m]] for m in members):
            diagnostics.append(TreeDiagnostic(
                "CycleDetected", tuple(members), "цикл: " + " -> ".join(members + members[:1])))
    return diagnostics


def aggregate_trust(env: Environment, view: CompositionView, point: Optional[PipelinePoint],
                    ctx: Context, mode: str = "meet",
                    points: Optional[Mapping[str, PipelinePoint]] = None) -> Aggregate:
    """
    Агрегирует доверие по транзитивному замыканию κ от корня.

    meet: meet решений всех узлов; mediated: вклад каждого потомка опосредующего
    узла равен join(уровень, порог) и берётся до meet. Сам опосредующий узел
    своим порогом не поднимается.
    Каждый узел оценивается один раз, даже если он общий для нескольких родителей.
    Точка узла: points[узел], иначе point, если допустима, иначе предпочтительная;
    без допустимых точек узел получает ⊥.

    Raises:
        CycleDetected, UnknownElement
    """
    if mode not in MODES:
        raise ValueError(f"неизвестный режим '{mode}', доступные: {MODES}")
    world = env.world
    lattice = env.lattice
    for diagnostic in validate_tree(world, view.root):
        if diagnostic.kind == "CycleDetected":
            raise CycleDetected(diagnostic.nodes)
        raise UnknownElement(diagnostic.nodes[-1])

    ids, index, graph, _ = _graph(world)
    depth = _reachable(graph, index[view.root])
    nodes = sorted((ids[i] for i in np.flatnonzero(np.isfinite(depth))),
                   key=lambda e: (depth[index[e]], e))

    floors: Dict[str, List[Tuple[str, TrustLevel]]] = {}
    if mode == "mediated":
        for mediator, rule in sorted(view.mediation.items()):
            if mediator not in index:
                raise UnknownElement(mediator)
            under = np.isfinite(_reachable(graph, index[mediator]))
            under[index[mediator]] = False
            for i in np.flatnonzero(under):
                floors.setdefault(ids[i], []).append((mediator, rule.floor))

    breakdown: List[NodeContribution] = []
    for eid in nodes:
        node_point = (points or {}).get(eid)
        if node_point is None:
            node_point = point if point is not None and point in admitted_triples(env, eid) \
                else preferred_point(env, eid)
        if node_point is None:
            level = lattice.bottom
        else:
            level, _ = run_pipeline(env, eid, node_point, ctx)
        contribution = level
        mediators = floors.get(eid, [])
        for _, floor in mediators:
            contribution = lattice.join(contribution, floor)
        breakdown.append(NodeContribution(eid, int(depth[index[eid]]), node_point, level,
                                          contribution, tuple(m for m, _ in mediators)))

    result = lattice.meet_all(n.contribution for n in breakdown)
    edges = tuple((p, c) for p in nodes for c in world.elements[p].children)
    logger.info("Агрегат %s (%s): %s по %d узлам", view.root, mode, result.name, len(breakdown))
    return Aggregate(view.root, mode, result, tuple(breakdown), edges)


def render_tree(aggregate: Aggregate) -> List[str]:
    """Разбивка агрегата в виде дерева с отступами"""
    by_id = {n.element: n for n in aggregate.breakdown}
    children: Dict[str, List[str]] = {}
    for parent, child in aggregate.edges:
        children.setdefault(parent, []).append(child)

    lines: List[str] = []
    printed = set()

    def walk(eid: str, indent: int) -> None:
        node = by_id[eid]
        suffix = ""
        if node.contribution != node.level:
            suffix = f" (mediated by {', '.join(node.mediated_by)} -> {node.contribution.name})"
        if eid in printed:
            lines.append("  " * indent + f"{eid}: {node.level.name} (shared)")
            return
        printed.add(eid)
        lines.append("  " * indent + f"{eid}: {node.level.name}{suffix}")
        for child in children.get(eid, []):
            walk(child, indent + 1)

    walk(aggregate.root, 0)
    return lines
