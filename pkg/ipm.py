"""ipm.py

Барьерный метод внутренней точки для семейства задач

    min  Σ_b Tr(C_b X_b) + c·x + Σ catalogue terms
    s.t. Σ_b Tr(A_ib X_b) + a_i·x + Σ catalogue terms <= rhs_i
         X_b ⪰ 0 (эрмитовы блоки),  l <= x <= u

Эрмитов блок N×N ведётся в N² вещественных координатах (hermitian.to_coords),
барьер блока −log det X. Каталог выпуклых скалярных слагаемых:

    ExpPerspectiveTerm  k1·u·(2^{v/(u·k2)} − 1)
    CubicTerm           k3·(k4 − v)³,   v <= k4
    QuadraticTerm       k5·(k6·v1 + k7·v2 + k8)²

Фаза I ищет строго допустимую точку через вспомогательную задачу со сдвигом s.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq

from hermitian import from_coords, hermitian_basis, to_coords, trace_coefficients

logger = logging.getLogger(__name__)

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]
TermValue = Tuple[float, Vector, Matrix]

U_MIN = 1e-9
EXP_LIMIT = 700.0
ARMIJO_ALPHA = 0.3
ARMIJO_BETA = 0.5
MIN_STEP = 1e-14
GAP_FLOOR = 1e-16  # абсолютный предел m/t при f0 -> 0
PHASE_ONE_TRACE_CAP = 1e6


class ProgramError(ValueError):
    """Некорректно заданная задача (имена, размеры, границы)."""


class InfeasibleProgramError(RuntimeError):
    """Фаза I не нашла строго допустимую точку."""

    def __init__(self, message: str, measure: float = math.nan) -> None:
        super().__init__(message)
        self.measure = measure


class NumericalError(RuntimeError):
    """Срыв метода Ньютона / линейного поиска или исчерпан лимит итераций."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, float]] = None) -> None:
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


# ===================== КАТАЛОГ СЛАГАЕМЫХ =====================


@dataclass(frozen=True)
class ExpPerspectiveTerm:
    """k1·u·(2^{v/(u·k2)} − 1) по паре (u, v); u обрезается снизу до U_MIN."""

    u: str
    v: str
    k1: float
    k2: float

    @property
    def variables(self) -> Tuple[str, ...]:
        return (self.u, self.v)

    def scaled(self, factor: float) -> "ExpPerspectiveTerm":
        return ExpPerspectiveTerm(self.u, self.v, self.k1 * factor, self.k2)

    def evaluate(self, vals: Vector) -> TermValue:
        u = max(float(vals[0]), U_MIN)
        v = float(vals[1])
        rate = math.log(2.0) / self.k2
        z = rate * v / u
        if z > EXP_LIMIT:
            return math.inf, np.zeros(2), np.zeros((2, 2))
        ez = math.exp(z)
        em1 = math.expm1(z)
        val = self.k1 * u * em1
        grad = np.array([self.k1 * (em1 - z * ez), self.k1 * rate * ez])
        c = self.k1 * ez / u
        hess = c * np.array([[z * z, -z * rate], [-z * rate, rate * rate]])
        return val, grad, hess


@dataclass(frozen=True)
class CubicTerm:
    """k3·(k4 − v)³ при v <= k4."""

    v: str
    k3: float
    k4: float

    @property
    def variables(self) -> Tuple[str, ...]:
        return (self.v,)

    def scaled(self, factor: float) -> "CubicTerm":
        return CubicTerm(self.v, self.k3 * factor, self.k4)

    def evaluate(self, vals: Vector) -> TermValue:
        r = self.k4 - float(vals[0])
        if r < 0.0:
            return math.inf, np.zeros(1), np.zeros((1, 1))
        return (
            self.k3 * r**3,
            np.array([-3.0 * self.k3 * r * r]),
            np.array([[6.0 * self.k3 * r]]),
        )


@dataclass(frozen=True)
class QuadraticTerm:
    """k5·(k6·v1 + k7·v2 + k8)², k5 >= 0."""

    v1: str
    v2: str
    k5: float
    k6: float
    k7: float
    k8: float

    @property
    def variables(self) -> Tuple[str, ...]:
        return (self.v1, self.v2)

    def scaled(self, factor: float) -> "QuadraticTerm":
        return QuadraticTerm(self.v1, self.v2, self.k5 * factor, self.k6, self.k7, self.k8)

    def evaluate(self, vals: Vector) -> TermValue:
        s = self.k6 * float(vals[0]) + self.k7 * float(vals[1]) + self.k8
        d = np.array([self.k6, self.k7])
        return self.k5 * s * s, 2.0 * self.k5 * s * d, 2.0 * self.k5 * np.outer(d, d)


Term = ExpPerspectiveTerm | CubicTerm | QuadraticTerm


# ===================== ЗАДАЧА =====================


@dataclass(frozen=True)
class PsdBlock:
    name: str
    dim: int
    scale: float = 1.0  # масштаб стартовой точки scale·I


@dataclass(frozen=True)
class ScalarVar:
    name: str
    lower: float
    upper: float

    @property
    def pinned(self) -> bool:
        return self.lower == self.upper


@dataclass(frozen=True, eq=False)
class Constraint:
    """Σ_b Tr(A_b X_b) + Σ_s c_s x_s + Σ terms − rhs <= 0."""

    label: str
    traces: Mapping[str, NDArray[np.complex128]] = field(default_factory=dict)
    linear: Mapping[str, float] = field(default_factory=dict)
    terms: Tuple[Term, ...] = ()
    rhs: float = 0.0


@dataclass(frozen=True, eq=False)
class ProgramPoint:
    blocks: Mapping[str, NDArray[np.complex128]]
    scalars: Mapping[str, float]


@dataclass(eq=False)
class MixedConvexProgram:
    psd_blocks: List[PsdBlock]
    scalars: List[ScalarVar]
    objective_traces: Dict[str, NDArray[np.complex128]] = field(default_factory=dict)
    objective_linear: Dict[str, float] = field(default_factory=dict)
    objective_terms: List[Term] = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    initial_point: Optional[ProgramPoint] = None

    def __post_init__(self) -> None:
        names = [b.name for b in self.psd_blocks] + [s.name for s in self.scalars]
        if len(set(names)) != len(names):
            raise ProgramError("variable names must be unique")
        blocks = {b.name for b in self.psd_blocks}
        scalars = {s.name for s in self.scalars}
        for s in self.scalars:
            if not (math.isfinite(s.lower) and math.isfinite(s.upper)) or s.lower > s.upper:
                raise ProgramError(f"scalar {s.name}: bounds must be finite, lower <= upper")
        labels = [c.label for c in self.constraints]
        if len(set(labels)) != len(labels):
            raise ProgramError("constraint labels must be unique")
        rows: List[Tuple[Mapping[str, NDArray[np.complex128]], Mapping[str, float], Sequence[Term]]] = [
            (self.objective_traces, self.objective_linear, self.objective_terms)
        ]
        rows += [(c.traces, c.linear, c.terms) for c in self.constraints]
        for traces, linear, terms in rows:
            if not set(traces) <= blocks:
                raise ProgramError(f"unknown blocks {sorted(set(traces) - blocks)}")
            missing = set(linear) | {v for t in terms for v in t.variables}
            if not missing <= scalars:
                raise ProgramError(f"unknown scalars {sorted(missing - scalars)}")

    def free_scalars(self) -> List[ScalarVar]:
        return [s for s in self.scalars if not s.pinned]

    def inequality_count(self) -> int:
        """Скалярные строки-неравенства: ограничения плюс две границы на свободный скаляр."""
        return len(self.constraints) + 2 * len(self.free_scalars())

    def variable_count(self) -> int:
        return sum(b.dim * b.dim for b in self.psd_blocks) + len(self.free_scalars())

    def barrier_parameter(self) -> int:
        """m для оценки зазора m/t: строки плюс размерности PSD-блоков."""
        return self.inequality_count() + sum(b.dim for b in self.psd_blocks)

    def constraint(self, label: str) -> Constraint:
        for c in self.constraints:
            if c.label == label:
                return c
        raise KeyError(label)


@dataclass(frozen=True)
class IpmSettings:
    mu_factor: float = 10.0
    t0: Optional[float] = None
    newton_tol: float = 1e-9
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    gap_rel: float = 1e-8
    max_newton: int = 200
    max_outer: int = 60

    def __post_init__(self) -> None:
        if not self.mu_factor > 1.0:
            raise ProgramError("mu_factor must exceed 1")
        if min(self.newton_tol, self.feas_tol, self.gap_tol, self.gap_rel) <= 0.0:
            raise ProgramError("tolerances must be positive")
        if self.t0 is not None and self.t0 <= 0.0:
            raise ProgramError("t0 must be positive")
        if self.max_newton < 1 or self.max_outer < 1:
            raise ProgramError("iteration limits must be positive")


@dataclass
class KktReport:
    gap: float
    outer_iterations: int
    newton_steps: int
    max_violation: float
    multipliers: Dict[str, float]
    barrier_history: List[Tuple[float, float]] = field(default_factory=list)


class IpSolution(NamedTuple):
    point: ProgramPoint
    objective: float
    kkt: KktReport


class PhaseOneResult(NamedTuple):
    feasible: bool
    point: Optional[ProgramPoint]
    measure: float  # вспомогательная мера s; < 0 означает строгую допустимость


# ===================== КОМПИЛЯЦИЯ =====================


class _Compiled:
    """Задача, развёрнутая в плотные массивы над полным вектором переменных."""

    def __init__(self, prog: MixedConvexProgram) -> None:
        self.prog = prog
        self.index: Dict[str, int] = {}
        self.block_slices: List[Tuple[str, slice, int]] = []
        offset = 0
        for b in prog.psd_blocks:
            n2 = b.dim * b.dim
            self.block_slices.append((b.name, slice(offset, offset + n2), b.dim))
            offset += n2
        for s in prog.scalars:
            self.index[s.name] = offset
            offset += 1
        self.n = offset
        self.blocks = {name: (sl, dim) for name, sl, dim in self.block_slices}

        self.base = np.zeros(self.n)
        free = np.ones(self.n, dtype=bool)
        bound_idx: List[int] = []
        lower: List[float] = []
        upper: List[float] = []
        for s in prog.scalars:
            k = self.index[s.name]
            if s.pinned:
                free[k] = False
                self.base[k] = s.lower
            else:
                bound_idx.append(k)
                lower.append(s.lower)
                upper.append(s.upper)
        self.free = np.flatnonzero(free)
        self.bound_idx = np.array(bound_idx, dtype=int)
        self.lower = np.array(lower)
        self.upper = np.array(upper)

        self.c = self._row(prog.objective_traces, prog.objective_linear)
        self.obj_terms = self._terms(prog.objective_terms)
        m = len(prog.constraints)
        self.A = np.zeros((m, self.n))
        self.rhs = np.zeros(m)
        self.con_terms: List[List[Tuple[Term, NDArray[np.int_]]]] = []
        for i, con in enumerate(prog.constraints):
            self.A[i] = self._row(con.traces, con.linear)
            self.rhs[i] = con.rhs
            self.con_terms.append(self._terms(con.terms))
        self.labels = [c.label for c in prog.constraints]

    def _row(
        self, traces: Mapping[str, NDArray[np.complex128]], linear: Mapping[str, float]
    ) -> Vector:
        row = np.zeros(self.n)
        for name, mat in traces.items():
            sl, _ = self.blocks[name]
            row[sl] += trace_coefficients(mat)
        for name, coef in linear.items():
            row[self.index[name]] += float(coef)
        return row

    def _terms(self, terms: Sequence[Term]) -> List[Tuple[Term, NDArray[np.int_]]]:
        return [(t, np.array([self.index[v] for v in t.variables])) for t in terms]

    # ---- точки ----

    def full(self, z: Vector) -> Vector:
        x = self.base.copy()
        x[self.free] = z
        return x

    def encode(self, point: ProgramPoint) -> Vector:
        x = self.base.copy()
        for name, sl, dim in self.block_slices:
            mat = np.asarray(point.blocks[name], dtype=np.complex128)
            if mat.shape != (dim, dim):
                raise ProgramError(f"block {name}: expected {dim}x{dim}")
            x[sl] = to_coords(mat)
        for s in self.prog.scalars:
            if not s.pinned:
                x[self.index[s.name]] = float(point.scalars[s.name])
        return x[self.free]

    def decode(self, z: Vector) -> ProgramPoint:
        x = self.full(z)
        blocks = {name: from_coords(x[sl], dim) for name, sl, dim in self.block_slices}
        scalars = {s.name: float(x[self.index[s.name]]) for s in self.prog.scalars}
        return ProgramPoint(blocks, scalars)

    def start(self) -> Vector:
        """Блоки scale·I, свободные скаляры в серединах интервалов."""
        x = self.base.copy()
        for b, (_, sl, dim) in zip(self.prog.psd_blocks, self.block_slices):
            x[sl] = to_coords(b.scale * np.eye(dim, dtype=np.complex128))
        if len(self.bound_idx):
            x[self.bound_idx] = 0.5 * (self.lower + self.upper)
        return x[self.free]

    # ---- значения ----

    def objective(self, z: Vector) -> float:
        x = self.full(z)
        val = float(self.c @ x)
        for term, idx in self.obj_terms:
            val += term.evaluate(x[idx])[0]
        return val

    def constraint_values(self, z: Vector) -> Vector:
        x = self.full(z)
        f = self.A @ x - self.rhs
        for i, terms in enumerate(self.con_terms):
            for term, idx in terms:
                f[i] += term.evaluate(x[idx])[0]
        return f

    def strictly_feasible(self, z: Vector) -> bool:
        return math.isfinite(self.barrier(z, 1.0, derivs=False)[0])

    def barrier(
        self, z: Vector, t: float, derivs: bool = True
    ) -> Tuple[float, Vector, Matrix]:
        """φ_t = t·f0 − Σ log(−f_i) − Σ log границ − Σ log det X_b; inf вне области."""
        inf = (math.inf, np.zeros(0), np.zeros((0, 0)))
        x = self.full(z)
        n = self.n
        grad = np.zeros(n) if derivs else np.zeros(0)
        hess = np.zeros((n, n)) if derivs else np.zeros((0, 0))

        f0 = float(self.c @ x)
        if derivs:
            grad += t * self.c
        for term, idx in self.obj_terms:
            v, g, h = term.evaluate(x[idx])
            if not math.isfinite(v):
                return inf
            f0 += v
            if derivs:
                grad[idx] += t * g
                hess[np.ix_(idx, idx)] += t * h
        val = t * f0

        m = self.A.shape[0]
        if m:
            f = self.A @ x - self.rhs
            G = self.A.copy() if derivs else self.A
            curv: List[Tuple[int, NDArray[np.int_], Matrix]] = []
            for i, terms in enumerate(self.con_terms):
                for term, idx in terms:
                    v, g, h = term.evaluate(x[idx])
                    if not math.isfinite(v):
                        return inf
                    f[i] += v
                    if derivs:
                        G[i, idx] += g
                        curv.append((i, idx, h))
            if np.any(f >= 0.0):
                return inf
            slack = -f
            val -= float(np.sum(np.log(slack)))
            if derivs:
                inv = 1.0 / slack
                grad += G.T @ inv
                hess += (G * (inv * inv)[:, None]).T @ G
                for i, idx, h in curv:
                    hess[np.ix_(idx, idx)] += inv[i] * h

        if len(self.bound_idx):
            xs = x[self.bound_idx]
            lo = xs - self.lower
            hi = self.upper - xs
            if np.any(lo <= 0.0) or np.any(hi <= 0.0):
                return inf
            val -= float(np.sum(np.log(lo)) + np.sum(np.log(hi)))
            if derivs:
                grad[self.bound_idx] += -1.0 / lo + 1.0 / hi
                hess[self.bound_idx, self.bound_idx] += 1.0 / lo**2 + 1.0 / hi**2

        for _, sl, dim in self.block_slices:
            mat = from_coords(x[sl], dim)
            try:
                factor = cho_factor(mat, lower=True, check_finite=False)
            except LinAlgError:
                return inf
            diag = np.real(np.diag(factor[0]))
            if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
                return inf
            val -= 2.0 * float(np.sum(np.log(diag)))
            if derivs:
                y = cho_solve(factor, np.eye(dim, dtype=np.complex128), check_finite=False)
                y = 0.5 * (y + y.conj().T)
                grad[sl] -= trace_coefficients(y)
                yb = np.einsum("ij,kjl->kil", y, hermitian_basis(dim))
                hess[sl, sl] += np.real(np.einsum("kij,lji->kl", yb, yb))

        if not math.isfinite(val):
            return inf
        if not derivs:
            return val, grad, hess
        fr = self.free
        return val, grad[fr], hess[np.ix_(fr, fr)]


# ===================== НЬЮТОН И ВНЕШНИЙ ЦИКЛ =====================


def _newton_direction(hess: Matrix, grad: Vector) -> Vector:
    """Решение H·d = −g с диагональным выравниванием и запасным lstsq."""
    d = np.sqrt(np.maximum(np.abs(np.diag(hess)), 1e-300))
    scaled = hess / np.outer(d, d)
    rhs = grad / d
    try:
        step = -cho_solve(cho_factor(scaled, lower=True, check_finite=False), rhs)
    except (LinAlgError, ValueError):
        step = -lstsq(scaled, rhs)[0]
    return step / d


def _center(
    comp: _Compiled,
    z: Vector,
    t: float,
    settings: IpmSettings,
    history: List[Tuple[float, float]],
    stop: Optional[Callable[[Vector], bool]] = None,
) -> Tuple[Vector, int, bool]:
    """Демпфированный Ньютон с Армихо. Возвращает (z, шаги, stop сработал)."""
    steps = 0
    for _ in range(settings.max_newton):
        val, grad, hess = comp.barrier(z, t)
        if not math.isfinite(val):
            raise NumericalError("iterate left the barrier domain", {"t": t})
        dz = _newton_direction(hess, grad)
        slope = float(grad @ dz)
        lam2 = -slope
        if lam2 <= 0.0 or lam2 / 2.0 <= settings.newton_tol:
            return z, steps, False
        s = 1.0
        slack = 8.0 * np.finfo(float).eps * abs(val)
        trial = math.inf
        while s >= MIN_STEP:
            trial = comp.barrier(z + s * dz, t, derivs=False)[0]
            if trial <= val + ARMIJO_ALPHA * s * slope + slack:
                break
            s *= ARMIJO_BETA
        else:
            if lam2 < max(1e-6, 64.0 * np.finfo(float).eps * abs(val)):
                return z, steps, False
            raise NumericalError(
                "line search failed", {"t": t, "decrement": lam2, "barrier": val}
            )
        z = z + s * dz
        steps += 1
        history.append((t, trial))
        if stop is not None and stop(z):
            return z, steps, True
    val, grad, hess = comp.barrier(z, t)
    lam2 = -float(grad @ _newton_direction(hess, grad))
    if lam2 < 1e-4:
        logger.warning("IPM: лимит шагов Ньютона, декремент %.2e, продолжаем", lam2)
        return z, steps, False
    raise NumericalError(
        "Newton did not converge", {"t": t, "decrement": lam2, "steps": float(steps)}
    )


def _gap_closed(gap: float, objective: float, settings: IpmSettings) -> bool:
    """m/t <= gap_tol и одновременно m/t <= gap_rel·|f0| (или ниже GAP_FLOOR)."""
    if gap > settings.gap_tol:
        return False
    return gap <= settings.gap_rel * abs(objective) or gap <= GAP_FLOOR


def _barrier_solve(
    comp: _Compiled,
    z0: Vector,
    settings: IpmSettings,
    stop: Optional[Callable[[Vector], bool]] = None,
) -> Tuple[Vector, float, KktReport, bool]:
    m = comp.prog.barrier_parameter()
    f0 = comp.objective(z0)
    t = settings.t0 or m / max(abs(f0), 1e-12)
    z = z0
    history: List[Tuple[float, float]] = []
    newton = 0
    stopped = False
    outer = 0
    for outer in range(1, settings.max_outer + 1):
        z, steps, stopped = _center(comp, z, t, settings, history, stop)
        newton += steps
        logger.debug("IPM: t=%.3e шагов=%d f0=%.9e", t, steps, comp.objective(z))
        if stopped or _gap_closed(m / t, comp.objective(z), settings):
            break
        t *= settings.mu_factor
    else:
        raise NumericalError(
            "outer iteration cap reached", {"t": t, "gap": m / t, "newton": float(newton)}
        )
    f = comp.constraint_values(z)
    slack = np.maximum(-f, 1e-300)
    report = KktReport(
        gap=m / t,
        outer_iterations=outer,
        newton_steps=newton,
        max_violation=float(max(0.0, float(np.max(f)) if len(f) else 0.0)),
        multipliers={lab: float(1.0 / (t * s)) for lab, s in zip(comp.labels, slack)},
        barrier_history=history,
    )
    return z, comp.objective(z), report, stopped


# ===================== ФАЗА I =====================


def _phase_one_program(
    prog: MixedConvexProgram, comp: _Compiled, z0: Vector
) -> Tuple[MixedConvexProgram, float, Dict[str, float]]:
    """Вспомогательная задача: min s, f_i/r_i − s <= 0, Y_b = X_b + s·σ_b·I ⪰ 0."""
    f = comp.constraint_values(z0)
    point0 = comp.decode(z0)
    shift = "__phase_one_shift"
    sigma = {b.name: b.scale for b in prog.psd_blocks}
    scales = [
        max(abs(float(fi)), abs(c.rhs)) or 1.0 for fi, c in zip(f, prog.constraints)
    ]
    worst = max([float(fi) / r for fi, r in zip(f, scales)] + [0.0])
    for b in prog.psd_blocks:
        lam_min = float(np.linalg.eigvalsh(point0.blocks[b.name])[0])
        worst = max(worst, -lam_min / sigma[b.name])
    s0 = worst + 1.0

    constraints: List[Constraint] = []
    for con, r in zip(prog.constraints, scales):
        linear = {k: v / r for k, v in con.linear.items()}
        shift_coef = -1.0
        for name, mat in con.traces.items():
            shift_coef -= sigma[name] * float(np.real(np.trace(mat))) / r
        linear[shift] = linear.get(shift, 0.0) + shift_coef
        constraints.append(
            Constraint(
                label=con.label,
                traces={k: v / r for k, v in con.traces.items()},
                linear=linear,
                terms=tuple(t.scaled(1.0 / r) for t in con.terms),
                rhs=con.rhs / r,
            )
        )
    for b in prog.psd_blocks:
        constraints.append(
            Constraint(
                label=f"__trace_cap_{b.name}",
                traces={b.name: np.eye(b.dim, dtype=np.complex128)},
                linear={shift: -sigma[b.name] * b.dim},
                rhs=PHASE_ONE_TRACE_CAP * b.dim * sigma[b.name],
            )
        )
    aux = MixedConvexProgram(
        psd_blocks=list(prog.psd_blocks),
        scalars=list(prog.scalars) + [ScalarVar(shift, -1.0, s0 + 1.0)],
        objective_linear={shift: 1.0},
        constraints=constraints,
    )
    return aux, s0, sigma


def phase_one(
    prog: MixedConvexProgram, settings: Optional[IpmSettings] = None
) -> PhaseOneResult:
    """Строго допустимая точка или отчёт, что мера s не опустилась ниже 0."""
    settings = settings or IpmSettings()
    comp = _Compiled(prog)
    candidates: List[Vector] = []
    if prog.initial_point is not None:
        try:
            candidates.append(comp.encode(prog.initial_point))
        except (KeyError, ProgramError) as e:
            logger.debug("phase one: подсказка отклонена: %s", e)
    candidates.append(comp.start())
    for z in candidates:
        if comp.strictly_feasible(z):
            f = comp.constraint_values(z)
            return PhaseOneResult(True, comp.decode(z), float(np.max(f)) if len(f) else -1.0)

    z0 = candidates[-1]
    aux, s0, sigma = _phase_one_program(prog, comp, z0)
    aux_comp = _Compiled(aux)
    shift_idx = aux_comp.index["__phase_one_shift"]
    point0 = comp.decode(z0)
    y0 = ProgramPoint(
        blocks={
            name: mat + s0 * sigma[name] * np.eye(mat.shape[0])
            for name, mat in point0.blocks.items()
        },
        scalars={**point0.scalars, "__phase_one_shift": s0},
    )

    def recover(z_aux: Vector) -> Tuple[float, Vector]:
        pt = aux_comp.decode(z_aux)
        s = pt.scalars["__phase_one_shift"]
        blocks = {
            name: mat - s * sigma[name] * np.eye(mat.shape[0])
            for name, mat in pt.blocks.items()
        }
        scalars = {k: v for k, v in pt.scalars.items() if k != "__phase_one_shift"}
        return s, comp.encode(ProgramPoint(blocks, scalars))

    def done(z_aux: Vector) -> bool:
        s = float(aux_comp.full(z_aux)[shift_idx])
        return s < 0.0 and comp.strictly_feasible(recover(z_aux)[1])

    try:
        z_aux, _, _, _ = _barrier_solve(aux_comp, aux_comp.encode(y0), settings, done)
    except NumericalError as e:
        logger.warning("phase one: %s", e)
        return PhaseOneResult(False, None, math.nan)
    s, z = recover(z_aux)
    if s < 0.0 and comp.strictly_feasible(z):
        return PhaseOneResult(True, comp.decode(z), s)
    logger.info("phase one: задача недопустима, мера s*=%.3e", s)
    return PhaseOneResult(False, None, s)


def ip_solve(
    prog: MixedConvexProgram, settings: Optional[IpmSettings] = None
) -> IpSolution:
    """Барьерный метод: фаза I, затем центрирование с t <- mu_factor·t,
    пока m/t не станет <= gap_tol и <= gap_rel·|f0|."""
    settings = settings or IpmSettings()
    start = phase_one(prog, settings)
    if not start.feasible or start.point is None:
        raise InfeasibleProgramError(
            f"no strictly feasible point (measure {start.measure:.3e})", start.measure
        )
    comp = _Compiled(prog)
    z, objective, report, _ = _barrier_solve(comp, comp.encode(start.point), settings)
    logger.debug(
        "IPM: f0=%.9e gap=%.1e newton=%d outer=%d",
        objective,
        report.gap,
        report.newton_steps,
        report.outer_iterations,
    )
    return IpSolution(comp.decode(z), objective, report)


def evaluate_constraints(prog: MixedConvexProgram, point: ProgramPoint) -> Dict[str, float]:
    """f_i(x) = левая часть − rhs для каждого ограничения."""
    comp = _Compiled(prog)
    f = comp.constraint_values(comp.encode(point))
    return {lab: float(v) for lab, v in zip(comp.labels, f)}


def evaluate_objective(prog: MixedConvexProgram, point: ProgramPoint) -> float:
    comp = _Compiled(prog)
    return comp.objective(comp.encode(point))


__all__ = [
    "ProgramError",
    "InfeasibleProgramError",
    "NumericalError",
    "ExpPerspectiveTerm",
    "CubicTerm",
    "QuadraticTerm",
    "Term",
    "PsdBlock",
    "ScalarVar",
    "Constraint",
    "ProgramPoint",
    "MixedConvexProgram",
    "IpmSettings",
    "KktReport",
    "IpSolution",
    "PhaseOneResult",
    "phase_one",
    "ip_solve",
    "evaluate_constraints",
    "evaluate_objective",
]
