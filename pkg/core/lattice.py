"""
Конечные ограниченные решётки уровней доверия.

Порядок хранится как булева матрица numpy (замыкание вычисляется при загрузке),
таблицы meet/join строятся один раз. Решётка неизменяема после создания.
Проверка гейтинговости не исправляет решётку молча: дефекты возвращаются
диагностикой validate(), а downset_completion() строит исправленную решётку.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NoImplication, NotALattice, UnknownLevel
from .logger_module import init_logging

logger = init_logging("lattice")

# Предел для перебора подмножеств в downset_completion
MAX_COMPLETION_SIZE = 16


@dataclass(frozen=True)
class TrustLevel:
    """Уровень доверия; идентичность по имени внутри одной решётки."""
    name: str
    lattice: str

    def __str__(self) -> str:
        return self.name


LevelLike = Union[TrustLevel, str]


@dataclass(frozen=True)
class LatticeDiagnostic:
    """
    Дефект решётки с конкретными свидетелями.

    kind: NotAPoset | NotBounded | NotALattice | NotDistributive | NoImplication
    """
    kind: str
    witnesses: Tuple[str, ...]
    message: str
    severity: str = "error"

    @property
    def is_heyting_defect(self) -> bool:
        """Дефект, который делает решётку негейтинговой, но оставляет её решёткой."""
        return self.kind in ("NotDistributive", "NoImplication")


class DecisionLattice:
    """
    Конечное ограниченное частично упорядоченное множество уровней доверия.

    Args:
        name: Имя решётки (пространство имён уровней)
        levels: Имена уровней; порядок объявления сохраняется для отчётов
        order: Пары (нижний, верхний) - покрывающие или любые; замыкание строится здесь
        bottom: Наименьший уровень (если None, выводится из порядка)
        top: Наибольший уровень (если None, выводится из порядка)

    Example:
        >>> lat = DecisionLattice("two", ["BOTTOM", "TOP"], [("BOTTOM", "TOP")])
        >>> lat.meet("BOTTOM", "TOP").name
        'BOTTOM'
    """

    def __init__(self,
                 name: str,
                 levels: Iterable[str],
                 order: Iterable[Tuple[str, str]],
                 bottom: Optional[str] = None,
                 top: Optional[str] = None):
        if not name:
            raise ValueError("имя решётки не может быть пустым")
        self.name = name

        names: List[str] = []
        for level in levels:
            if not level:
                raise ValueError("имя уровня не может быть пустым")
            if level not in names:
                names.append(level)
        self._names: Tuple[str, ...] = tuple(names)
        self._index: Dict[str, int] = {n: i for i, n in enumerate(self._names)}

        size = len(self._names)
        rel = np.eye(size, dtype=bool)
        for lower, upper in order:
            rel[self._idx(lower), self._idx(upper)] = True
        # Замыкание Уоршелла
        for k in range(size):
            rel |= np.outer(rel[:, k], rel[k, :])
        rel.setflags(write=False)
        self._leq = rel

        self._bottom = self._resolve_bound(bottom, lowest=True)
        self._top = self._resolve_bound(top, lowest=False)
        self._meet, self._join = self._build_tables()

    # === ВНУТРЕННЕЕ ===

    def _idx(self, level: LevelLike) -> int:
        if isinstance(level, TrustLevel):
            if level.lattice != self.name:
                raise UnknownLevel(level.name, self.name)
            level = level.name
        try:
            return self._index[level]
        except KeyError:
            raise UnknownLevel(str(level), self.name) from None

    def _resolve_bound(self, declared: Optional[str], lowest: bool) -> Optional[int]:
        if declared is not None:
            return self._idx(declared)
        rows = self._leq if lowest else self._leq.T
        candidates = np.flatnonzero(rows.all(axis=1))
        return int(candidates[0]) if len(candidates) == 1 else None

    def _build_tables(self) -> Tuple[np.ndarray, np.ndarray]:
        size = len(self._names)
        meet = np.full((size, size), -1, dtype=int)
        join = np.full((size, size), -1, dtype=int)
        rel = self._leq
        for i in range(size):
            for j in range(i, size):
                lower = np.flatnonzero(rel[:, i] & rel[:, j])
                glb = [g for g in lower if rel[lower, g].all()]
                if len(glb) == 1:
                    meet[i, j] = meet[j, i] = glb[0]
                upper = np.flatnonzero(rel[i, :] & rel[j, :])
                lub = [g for g in upper if rel[g, upper].all()]
                if len(lub) == 1:
                    join[i, j] = join[j, i] = lub[0]
        meet.setflags(write=False)
        join.setflags(write=False)
        return meet, join

    def _level(self, i: int) -> TrustLevel:
        return TrustLevel(self._names[i], self.name)

    def _cyclic_pairs(self) -> List[Tuple[int, int]]:
        both = self._leq & self._leq.T
        return [(i, j) for i, j in zip(*np.nonzero(np.triu(both, k=1)))]

    # === ДОСТУП ===

    @property
    def levels(self) -> Tuple[TrustLevel, ...]:
        """Уровни в порядке объявления"""
        return tuple(self._level(i) for i in range(len(self._names)))

    @property
    def level_names(self) -> Tuple[str, ...]:
        return self._names

    def __contains__(self, level: object) -> bool:
        if isinstance(level, TrustLevel):
            return level.lattice == self.name and level.name in self._index
        return isinstance(level, str) and level in self._index

    def __len__(self) -> int:
        return len(self._names)

    def level(self, name: LevelLike) -> TrustLevel:
        """Возвращает уровень по имени (UnknownLevel, если его нет)"""
        return self._level(self._idx(name))

    @property
    def bottom(self) -> TrustLevel:
        if self._bottom is None:
            raise NotALattice("⊥", "⊥", "наименьшего элемента")
        return self._level(self._bottom)

    @property
    def top(self) -> TrustLevel:
        if self._top is None:
            raise NotALattice("⊤", "⊤", "наибольшего элемента")
        return self._level(self._top)

    @property
    def is_poset(self) -> bool:
        return not self._cyclic_pairs()

    @property
    def is_lattice(self) -> bool:
        return (self.is_poset and self._bottom is not None and self._top is not None
                and bool((self._meet >= 0).all()) and bool((self._join >= 0).all()))

    # === ПОРЯДОК И ОПЕРАЦИИ ===

    def leq(self, a: LevelLike, b: LevelLike) -> bool:
        """a ≤ b в рефлексивно-транзитивном замыкании порядка"""
        return bool(self._leq[self._idx(a), self._idx(b)])

    def compare(self, a: LevelLike, b: LevelLike) -> str:
        """Трёхзначное сравнение: 'lt', 'eq', 'gt' или 'incomparable'"""
        i, j = self._idx(a), self._idx(b)
        if i == j:
            return "eq"
        if self._leq[i, j]:
            return "lt"
        if self._leq[j, i]:
            return "gt"
        return "incomparable"

    def meet(self, a: LevelLike, b: LevelLike) -> TrustLevel:
        """Точная нижняя грань a ∧ b"""
        i, j = self._idx(a), self._idx(b)
        g = self._meet[i, j]
        if g < 0:
            raise NotALattice(self._names[i], self._names[j], "meet")
        return self._level(int(g))

    def join(self, a: LevelLike, b: LevelLike) -> TrustLevel:
        """Точная верхняя грань a ∨ b"""
        i, j = self._idx(a), self._idx(b)
        g = self._join[i, j]
        if g < 0:
            raise NotALattice(self._names[i], self._names[j], "join")
        return self._level(int(g))

    def meet_all(self, levels: Iterable[LevelLike]) -> TrustLevel:
        """Свёртка meet; пустая последовательность даёт ⊤"""
        result = self.top
        for level in levels:
            result = self.meet(result, level)
        return result

    def join_all(self, levels: Iterable[LevelLike]) -> TrustLevel:
        """Свёртка join; пустая последовательность даёт ⊥"""
        result = self.bottom
        for level in levels:
            result = self.join(result, level)
        return result

    def _implication_candidates(self, i: int, j: int) -> List[int]:
        meets = self._meet[:, i]
        if (meets < 0).any():
            missing = int(np.flatnonzero(meets < 0)[0])
            raise NotALattice(self._names[missing], self._names[i], "meet")
        return [x for x in range(len(self._names)) if self._leq[meets[x], j]]

    def maximal(self, levels: Iterable[LevelLike]) -> Tuple[TrustLevel, ...]:
        """Максимальная антицепь множества уровней (в порядке объявления)"""
        idx = sorted({self._idx(level) for level in levels})
        keep = [x for x in idx if not any(y != x and self._leq[x, y] for y in idx)]
        return tuple(self._level(x) for x in keep)

    def implies(self, a: LevelLike, b: LevelLike) -> TrustLevel:
        """
        Относительное псевдодополнение a → b = max{x : x ∧ a ≤ b}.

        Raises:
            NoImplication: если у множества кандидатов несколько максимальных элементов
        """
        i, j = self._idx(a), self._idx(b)
        candidates = self._implication_candidates(i, j)
        maximal = self.maximal(self._level(x) for x in candidates)
        if len(maximal) != 1:
            raise NoImplication(self._names[i], self._names[j], [m.name for m in maximal])
        return maximal[0]

    def negate(self, a: LevelLike) -> TrustLevel:
        """Псевдодополнение ¬a = a → ⊥"""
        return self.implies(a, self.bottom)

    def sort_levels(self, levels: Iterable[LevelLike]) -> Tuple[TrustLevel, ...]:
        """Упорядочивает уровни по высоте (линейное расширение), затем по имени"""
        idx = {self._idx(level) for level in levels}
        heights = self._leq.sum(axis=0)
        return tuple(self._level(i) for i in sorted(idx, key=lambda i: (int(heights[i]), self._names[i])))

    # === ПРОВЕРКА ===

    def validate(self) -> List[LatticeDiagnostic]:
        """
        Проверяет, является ли решётка алгеброй Гейтинга.

        Returns:
            Пустой список, если решётка ограничена, все meet/join существуют,
            дистрибутивность выполняется на всех тройках и все импликации определены;
            иначе диагностика со свидетелями.
        """
        diagnostics: List[LatticeDiagnostic] = []
        names = self._names

        cyclic = self._cyclic_pairs()
        for i, j in cyclic:
            diagnostics.append(LatticeDiagnostic(
                "NotAPoset", (names[i], names[j]),
                f"{names[i]} ≤ {names[j]} и {names[j]} ≤ {names[i]} нарушают антисимметричность"))
        if cyclic:
            return diagnostics

        for bound, attr, label in ((self._bottom, "bottom", "≤"), (self._top, "top", "≥")):
            if bound is None:
                diagnostics.append(LatticeDiagnostic(
                    "NotBounded", (), f"нет единственного {attr}"))
            else:
                row = self._leq[bound, :] if attr == "bottom" else self._leq[:, bound]
                outside = [names[x] for x in np.flatnonzero(~row)]
                if outside:
                    diagnostics.append(LatticeDiagnostic(
                        "NotBounded", (names[bound], *outside),
                        f"{attr} {names[bound]} не {label} {', '.join(outside)}"))

        size = len(names)
        for i, j in combinations(range(size), 2):
            for table, op in ((self._meet, "meet"), (self._join, "join")):
                if table[i, j] < 0:
                    diagnostics.append(LatticeDiagnostic(
                        "NotALattice", (names[i], names[j]),
                        f"для ({names[i]}, {names[j]}) не существует {op}"))
        if diagnostics:
            return diagnostics

        meet, join = self._meet, self._join
        for a in range(size):
            for b, c in combinations(range(size), 2):
                lhs = meet[a, join[b, c]]
                rhs = join[meet[a, b], meet[a, c]]
                if lhs != rhs:
                    diagnostics.append(LatticeDiagnostic(
                        "NotDistributive", (names[a], names[b], names[c]),
                        f"{names[a]} ∧ ({names[b]} ∨ {names[c]}) = {names[lhs]}, "
                        f"но ({names[a]} ∧ {names[b]}) ∨ ({names[a]} ∧ {names[c]}) = {names[rhs]}"))

        for a in range(size):
            for b in range(size):
                try:
                    self.implies(self._level(a), self._level(b))
                except NoImplication as e:
                    diagnostics.append(LatticeDiagnostic(
                        "NoImplication", (names[a], names[b]),
                        f"{names[a]} → {names[b]} не определена: максимальные {{{', '.join(e.maximal)}}}"))
        return diagnostics

    # === СРАВНЕНИЕ И СЕРИАЛИЗАЦИЯ ===

    def order_pairs(self) -> frozenset:
        """Все пары (a, b) с a ≤ b, a ≠ b"""
        rows, cols = np.nonzero(self._leq)
        return frozenset((self._names[i], self._names[j]) for i, j in zip(rows, cols) if i != j)

    def covering_pairs(self) -> Tuple[Tuple[str, str], ...]:
        """Отношение покрытия (диаграмма Хассе), отсортированное"""
        strict = self._leq & ~np.eye(len(self._names), dtype=bool)
        covers = []
        for i, j in zip(*np.nonzero(strict)):
            between = strict[i, :] & strict[:, j]
            if not between.any():
                covers.append((self._names[i], self._names[j]))
        return tuple(sorted(covers))

    def canonical(self) -> Dict[str, object]:
        """Каноническая форма для отчётов: отсортированные имена и покрытия"""
        return {
            "name": self.name,
            "levels": sorted(self._names),
            "covers": [list(p) for p in self.covering_pairs()],
            "bottom": self._names[self._bottom] if self._bottom is not None else None,
            "top": self._names[self._top] if self._top is not None else None,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DecisionLattice):
            return NotImplemented
        return (self.name == other.name
                and set(self._names) == set(other._names)
                and self.order_pairs() == other.order_pairs()
                and self._bound_name(self._bottom) == other._bound_name(other._bottom)
                and self._bound_name(self._top) == other._bound_name(other._top))

    def __hash__(self) -> int:
        return hash((self.name, frozenset(self._names)))

    def _bound_name(self, idx: Optional[int]) -> Optional[str]:
        return self._names[idx] if idx is not None else None

    def __repr__(self) -> str:
        return f"DecisionLattice({self.name!r}, levels={list(self._names)!r})"


def downset_completion(lattice: DecisionLattice, name: Optional[str] = None) -> DecisionLattice:
    """
    Строит решётку непустых нижних множеств, упорядоченных по включению.

    Такая решётка всегда дистрибутивна и потому является алгеброй Гейтинга.
    Исходные уровни вкладываются как главные идеалы и сохраняют свои имена;
    новые нижние множества называются по своим максимальным элементам через '+'.

    Args:
        lattice: Ограниченное частично упорядоченное множество
        name: Имя новой решётки (по умолчанию '<name>_downsets')

    Returns:
        Новая DecisionLattice

    Example:
        >>> completed = downset_completion(reference_lattice())
        >>> len(completed)
        8
    """
    if not lattice.is_poset:
        raise ValueError(f"решётка '{lattice.name}' не является частично упорядоченным множеством")
    names = lattice.level_names
    size = len(names)
    if size > MAX_COMPLETION_SIZE:
        raise ValueError(f"перебор нижних множеств ограничен {MAX_COMPLETION_SIZE} уровнями")

    leq = np.array([[lattice.leq(a, b) for b in names] for a in names], dtype=bool)
    down = [sum(1 << j for j in range(size) if leq[j, i]) for i in range(size)]

    downsets: List[int] = []
    for mask in range(1, 1 << size):
        if all(down[i] & ~mask == 0 for i in range(size) if mask >> i & 1):
            downsets.append(mask)

    principal = {down[i]: names[i] for i in range(size)}

    def label(mask: int) -> str:
        if mask in principal:
            return principal[mask]
        members = [i for i in range(size) if mask >> i & 1]
        maximal = [i for i in members if not any(j != i and leq[i, j] for j in members)]
        return "+".join(sorted(names[i] for i in maximal))

    labels = {mask: label(mask) for mask in downsets}
    order = [(labels[s], labels[t]) for s in downsets for t in downsets
             if s != t and s & ~t == 0]
    completed = DecisionLattice(
        name or f"{lattice.name}_downsets",
        [labels[m] for m in downsets],
        order,
        bottom=labels[min(downsets, key=lambda m: bin(m).count("1"))],
        top=labels[(1 << size) - 1],
    )
    logger.info("Пополнение %s: %d -> %d уровней", lattice.name, size, len(completed))
    return completed


def reference_lattice(name: str = "trust_levels") -> DecisionLattice:
    """Шестиуровневая решётка решений эталонного примера"""
    return DecisionLattice(
        name,
        ["BOTTOM", "D_S", "D_AUTH", "D_M", "D_NEW", "TOP"],
        [("BOTTOM", "D_S"), ("D_S", "D_AUTH"), ("D_AUTH", "D_NEW"),
         ("BOTTOM", "D_M"), ("D_M", "D_NEW"), ("D_NEW", "TOP")],
        bottom="BOTTOM",
        top="TOP",
    )
