"""Vertex-metric functionals, shortest-path structures and extremal-metric solvers.

The extremal metric of a box is the unique minimizer of ``sum m(v)**n``
subject to every top-to-bottom path having length at least 1.  Two solvers
are provided:

* :func:`extremal_metric` -- constraint generation over paths, with the
  inner problem solved by dual coordinate ascent on path multipliers
  (stationarity ``n m(v)**(n-1) = sum of multipliers of paths through v``);
* :func:`brute_force_extremal` -- enumerates every path up front and runs
  accelerated projected gradient on the dual.  Used as an oracle.

For ``n = 1`` the program is a linear program whose optimum is not unique;
both solvers return the optimum of least Euclidean norm (a budget row
``sum m <= kappa`` is added, ``kappa`` being the minimum vertex cut).
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg

from .boxcore import BoxError, DiscreteBox, Metric, PerturbedMetric, validate_box

log = logging.getLogger(__name__)


class UnreachableError(BoxError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals or {}


class PathCapExceeded(RuntimeError):
    pass


# -- functionals -------------------------------------------------------------


def path_length(m: Metric, path: Sequence[str]):
    if not path:
        raise BoxError("path must be nonempty")
    return sum((m[v] for v in path), Fraction(0) if m.exact else 0.0)


def metric_volume(m: Metric, n: int) -> float:
    if n < 1:
        raise BoxError("dimension must be positive")
    return float(sum(float(x) ** n for x in m.weights.values())) ** (1.0 / n)


def metric_volume_pow(m: Metric, n: int):
    """``||m||_n ** n``, exact for exact metrics."""
    zero = Fraction(0) if m.exact else 0.0
    return sum((x**n for x in m.weights.values()), zero)


def normalized_length(box: DiscreteBox, m: Metric) -> float:
    vol = metric_volume(m, box.n)
    if vol == 0:
        raise BoxError("normalized length needs a metric of positive volume")
    return float(shortest_paths(box, m, box.bottom, box.top).length) / vol


# -- shortest paths ----------------------------------------------------------


def _dijkstra(adj, w, sources, zero):
    dist = [None] * len(adj)
    heap = []
    for s in sources:
        if dist[s] is None or w[s] < dist[s]:
            dist[s] = w[s]
            heapq.heappush(heap, (w[s], s))
    done = [False] * len(adj)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for x in adj[u]:
            nd = d + w[x]
            if dist[x] is None or nd < dist[x]:
                dist[x] = nd
                heapq.heappush(heap, (nd, x))
    return dist


@dataclass
class ShortestPathStructure:
    """Distance labels and the subgraph of all metric-shortest ``S -> T`` paths.

    ``dist[v]`` is the length of the shortest path from ``S`` to ``v``
    counting both endpoints; ``back[v]`` the same towards ``T``.  ``succ``
    holds the tight edges: ``u -> v`` lies on some shortest path iff
    ``dist[u] + back[v] == length``.  With strictly positive weights this is
    a DAG; zero-weight vertices may create zero-length cycles, which every
    consumer here tolerates (simple paths are enumerated with a visited set).
    """

    box: DiscreteBox
    weights: list
    sources: list
    targets: list
    dist: list
    back: list
    length: object
    tol: float
    succ: list = field(default_factory=list)
    on_path: list = field(default_factory=list)

    @property
    def reachable(self) -> bool:
        return self.length != math.inf

    def _eq(self, a, b) -> bool:
        return abs(a - b) <= self.tol

    @property
    def starts(self) -> list:
        return [s for s in self.sources if self.on_path[s]]

    @property
    def ends(self) -> list:
        tset = set(self.targets)
        return [v for v in range(len(self.weights)) if v in tset and self.on_path[v] and self._eq(self.dist[v], self.length)]

    def dag_edges(self) -> set:
        names = self.box.vertices
        return {(names[u], names[v]) for u in range(len(self.succ)) for v in self.succ[u]}

    def vertices_on_paths(self) -> set:
        return {self.box.vertices[v] for v, on in enumerate(self.on_path) if on}

    def paths(self, cap: int | None = None) -> Iterator[tuple]:
        """Every shortest ``S -> T`` simple path, as vertex-name tuples.

        Raises :class:`PathCapExceeded` once more than ``cap`` paths were produced.
        """
        names = self.box.vertices
        ends = set(self.ends)
        count = 0
        for s in self.starts:
            stack = [(s, iter(self.succ[s]))]
            onstack = {s}
            if s in ends:
                count += 1
                if cap is not None and count > cap:
                    raise PathCapExceeded(f"more than {cap} shortest paths")
                yield (names[s],)
            while stack:
                u, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    stack.pop()
                    onstack.discard(u)
                    continue
                if nxt in onstack:
                    continue
                stack.append((nxt, iter(self.succ[nxt])))
                onstack.add(nxt)
                if nxt in ends:
                    count += 1
                    if cap is not None and count > cap:
                        raise PathCapExceeded(f"more than {cap} shortest paths")
                    yield tuple(names[x] for x, _ in stack)

    def avoiding_path(self, removed) -> tuple | None:
        """A shortest path disjoint from ``removed`` (names), or None if every one meets it."""
        idx = self.box.index
        gone = {idx[v] for v in removed if v in idx}
        parent = {}
        queue = deque()
        for s in self.starts:
            if s not in gone:
                parent[s] = None
                queue.append(s)
        ends = set(self.ends)
        while queue:
            u = queue.popleft()
            if u in ends:
                out = []
                while u is not None:
                    out.append(self.box.vertices[u])
                    u = parent[u]
                return tuple(reversed(out))
            for x in self.succ[u]:
                if x not in gone and x not in parent:
                    parent[x] = u
                    queue.append(x)
        return None

    def min_hits(self, alpha) -> int:
        """Minimum of ``|gamma & alpha|`` over shortest paths gamma (0-1 BFS)."""
        idx = self.box.index
        cost = [0] * len(self.weights)
        for v in set(alpha):
            cost[idx[v]] = 1
        best = [math.inf] * len(self.weights)
        dq = deque()
        for s in self.starts:
            if cost[s] < best[s]:
                best[s] = cost[s]
                if cost[s]:
                    dq.append(s)
                else:
                    dq.appendleft(s)
        while dq:
            u = dq.popleft()
            for x in self.succ[u]:
                nd = best[u] + cost[x]
                if nd < best[x]:
                    best[x] = nd
                    if cost[x]:
                        dq.append(x)
                    else:
                        dq.appendleft(x)
        return min(best[t] for t in self.ends)

    def to_dict(self) -> dict:
        conv = (lambda x: str(x)) if isinstance(self.length, Fraction) else float
        names = self.box.vertices
        return {
            "length": conv(self.length) if self.reachable else None,
            "dist": {names[v]: (conv(d) if d is not None else None) for v, d in enumerate(self.dist)},
            "dag": sorted(list(e) for e in self.dag_edges()),
        }


def _default_tol(weights) -> float:
    if all(isinstance(x, Rational) for x in weights):
        return 0
    top = max((float(x) for x in weights), default=0.0)
    return 1e-9 * max(1.0, top * len(weights))


def shortest_paths(box: DiscreteBox, m: Metric, S, T, tol: float | None = None) -> ShortestPathStructure:
    """Vertex-weighted multi-source shortest paths from ``S`` to ``T``.

    Lengths include both endpoints.  Unreachable ``T`` gives ``length = inf``
    with an empty subgraph.  For float metrics ``tol`` is the equality slack
    used to decide tightness; exact metrics use exact comparisons.
    """
    idx = box.index
    try:
        src = sorted(idx[v] for v in S)
        tgt = sorted(idx[v] for v in T)
    except KeyError as exc:
        raise BoxError(f"unknown vertex {exc.args[0]!r}") from None
    if not src or not tgt:
        raise BoxError("source and target sets must be nonempty")
    w = m.values(box)
    zero = Fraction(0) if m.exact else 0.0
    if tol is None:
        tol = _default_tol(w)
    adj = box.adjacency
    dist = _dijkstra(adj, w, src, zero)
    back = _dijkstra(adj, w, tgt, zero)
    reach = [dist[t] for t in tgt if dist[t] is not None]
    nv = len(w)
    if not reach:
        return ShortestPathStructure(box, w, src, tgt, dist, back, math.inf, tol, [[] for _ in range(nv)], [False] * nv)
    length = min(reach)
    on = [
        dist[v] is not None and back[v] is not None and abs(dist[v] + back[v] - w[v] - length) <= tol
        for v in range(nv)
    ]
    succ = [[] for _ in range(nv)]
    for u in range(nv):
        if not on[u]:
            continue
        for x in adj[u]:
            if on[x] and abs(dist[u] + back[x] - length) <= tol:
                succ[u].append(x)
    return ShortestPathStructure(box, w, src, tgt, dist, back, length, tol, succ, on)


def _one_shortest_path(adj, w, src, tgt):
    """Index path and length of a shortest src -> tgt path; ties broken by vertex index."""
    dist = [math.inf] * len(adj)
    parent = [-1] * len(adj)
    heap = []
    for s in src:
        dist[s] = w[s]
        heap.append((w[s], s))
    heapq.heapify(heap)
    tset = set(tgt)
    done = [False] * len(adj)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u in tset:
            path = [u]
            while parent[path[-1]] >= 0:
                path.append(parent[path[-1]])
            return path[::-1], d, dist, parent
        for x in adj[u]:
            nd = d + w[x]
            if nd < dist[x]:
                dist[x] = nd
                parent[x] = u
                heapq.heappush(heap, (nd, x))
    return None, math.inf, dist, parent


def simple_paths(box: DiscreteBox, S, T, minimal: bool = True, cap: int | None = None) -> Iterator[tuple]:
    """Enumerate simple ``S -> T`` paths as index tuples.

    With ``minimal`` only paths meeting ``S`` and ``T`` solely at their ends
    are produced; any other path contains one of these, so the path-length
    constraints they generate are equivalent.
    """
    idx = box.index
    src = sorted(idx[v] for v in S)
    tgt = set(idx[v] for v in T)
    sset = set(src)
    adj = box.adjacency
    count = 0
    for s in src:
        if s in tgt:
            continue
        path = [s]
        onpath = {s}
        stack = [iter(adj[s])]
        while stack:
            x = next(stack[-1], None)
            if x is None:
                stack.pop()
                onpath.discard(path.pop())
                continue
            if x in onpath or (minimal and x in sset):
                continue
            if x in tgt:
                count += 1
                if cap is not None and count > cap:
                    raise PathCapExceeded(f"more than {cap} paths")
                yield tuple(path) + (x,)
                if minimal:
                    continue
            path.append(x)
            onpath.add(x)
            stack.append(iter(adj[x]))


def min_vertex_cut(box: DiscreteBox, S, T) -> int:
    """Size of a smallest vertex set (terminals allowed) meeting every S -> T path.

    Equal by Menger's theorem to the maximum number of vertex-disjoint paths,
    computed by augmenting paths on the split graph.
    """
    idx = box.index
    nv = len(box.vertices)
    src, sink = 2 * nv, 2 * nv + 1
    cap = {}
    graph = [[] for _ in range(2 * nv + 2)]

    def add(a, b, c):
        if (a, b) not in cap:
            graph[a].append(b)
            graph[b].append(a)
            cap.setdefault((b, a), 0)
        cap[(a, b)] = cap.get((a, b), 0) + c

    big = nv + 1
    for v in range(nv):
        add(2 * v, 2 * v + 1, 1)
    for u, w in box.edges:
        a, b = idx[u], idx[w]
        add(2 * a + 1, 2 * b, big)
        add(2 * b + 1, 2 * a, big)
    for v in S:
        add(src, 2 * idx[v], big)
    for v in T:
        add(2 * idx[v] + 1, sink, big)
    flow = 0
    while True:
        parent = {src: None}
        queue = deque([src])
        while queue and sink not in parent:
            a = queue.popleft()
            for b in graph[a]:
                if b not in parent and cap[(a, b)] > 0:
                    parent[b] = a
                    queue.append(b)
        if sink not in parent:
            return flow
        b = sink
        while parent[b] is not None:
            a = parent[b]
            cap[(a, b)] -= 1
            cap[(b, a)] += 1
            b = a
        flow += 1


# -- perturbation ------------------------------------------------------------


def perturbed_metric(m: Metric, path: Sequence[str], t) -> Metric:
    """``m`` with ``t`` added once to every vertex of ``path``."""
    return PerturbedMetric(m, tuple(path), t).evaluate()


def perturbation_derivative(box: DiscreteBox, m: Metric, alpha: Sequence[str], tol: float | None = None) -> int:
    """Right derivative at ``t = 0`` of the top-bottom length of ``m + t*1_alpha``.

    Equals the least number of ``alpha`` vertices on a shortest top-bottom path.
    """
    unknown = sorted(set(alpha) - set(box.vertices))
    if unknown:
        raise BoxError(f"alpha has unknown vertices {unknown}")
    sp = shortest_paths(box, m, box.bottom, box.top, tol)
    if not sp.reachable:
        raise UnreachableError("top and bottom faces are not connected")
    return sp.min_hits(alpha)


# -- solver result -----------------------------------------------------------


@dataclass
class SolverOptions:
    eps: float = 1e-8
    tol: float = 1e-6
    max_iter: int = 5000
    max_sweeps: int = 200000
    max_paths: int = 100000
    seed: int = 0
    init: Metric | None = None


@dataclass
class SolverResult:
    metric: Metric
    extremal_length: float
    achieved_length: float
    upper_bound: float
    residuals: dict
    iterations: dict
    active_paths: list
    multipliers: list
    mode: str

    @property
    def el(self) -> float:
        return self.extremal_length

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "extremalLength": self.extremal_length,
            "achievedLength": self.achieved_length,
            "upperBound": self.upper_bound,
            "metric": self.metric.to_dict(),
            "residuals": self.residuals,
            "iterations": self.iterations,
            "activePaths": [{"path": list(p), "multiplier": lam} for p, lam in zip(self.active_paths, self.multipliers)],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _check_solvable(box: DiscreteBox) -> None:
    report = validate_box(box)
    if not report.ok:
        raise BoxError("invalid box: " + "; ".join(report.violations))


# -- dual coordinate ascent --------------------------------------------------


class _Link:
    """Map from aggregated path multiplier ``a`` to the vertex weight.

    For ``n >= 2``: ``m = (a/n)**(1/(n-1))``.  For ``n = 1`` (least-norm LP
    optimum): ``m = max(0, (a - mu)/2)`` with ``mu`` the budget multiplier.
    """

    def __init__(self, n: int):
        self.n = n
        self.p = 1.0 / (n - 1) if n > 1 else 1.0

    def weights(self, agg: np.ndarray, mu: float = 0.0) -> np.ndarray:
        if self.n == 1:
            return np.maximum(agg - mu, 0.0) / 2.0
        return (np.maximum(agg, 0.0) / self.n) ** self.p

    def one(self, a: float, mu: float = 0.0) -> float:
        if self.n == 1:
            return max(a - mu, 0.0) / 2.0
        if a <= 0.0:
            return 0.0
        return (a / self.n) ** self.p

    def dual_value(self, lam_sum: float, agg: np.ndarray, mu: float = 0.0, kappa: float = 0.0) -> float:
        """Lagrangian dual g; a lower bound on ``sum m**n`` (``sum m**2`` when n = 1)."""
        if self.n == 1:
            return lam_sum - mu * kappa - float(np.sum(np.maximum(agg - mu, 0.0) ** 2)) / 4.0
        q = self.n / (self.n - 1)
        return lam_sum - (self.n - 1) * float(np.sum((np.maximum(agg, 0.0) / self.n) ** q))

    def solve_coord(self, cs: list, mu: float = 0.0) -> float:
        """Smallest ``x >= 0`` with ``sum link(c + x) >= 1``."""
        f = self.one
        if sum(f(c, mu) for c in cs) >= 1.0:
            return 0.0
        k = len(cs)
        if self.n == 2:
            return max(0.0, (2.0 - sum(cs)) / k)
        if self.n == 1:
            # piecewise linear; with the j largest c active: x = (2 + j*mu - S_j)/j
            desc = sorted(cs, reverse=True)
            acc = 0.0
            for j, c in enumerate(desc, start=1):
                acc += c
                x = (2.0 + j * mu - acc) / j
                nxt = desc[j] if j < len(desc) else -math.inf
                if c + x - mu >= 0.0 and nxt + x - mu <= 0.0:
                    return max(x, 0.0)
            return max((2.0 + len(desc) * mu - acc) / len(desc), 0.0)
        # n >= 3: h(x) = sum link(c + x) - 1 is increasing and concave; bracketed Newton
        lo, hi = 0.0, 1e-12
        while sum(f(c + hi) for c in cs) < 1.0:
            lo, hi = hi, 4.0 * hi
        x = hi
        for _ in range(200):
            vals = [c + x for c in cs]
            h = sum(f(a) for a in vals) - 1.0
            if h > 0:
                hi = x
            else:
                lo = x
            if abs(h) <= 4e-16 or hi - lo <= 1e-16 * hi:
                break
            dh = sum(self.p * f(a) / a for a in vals if a > 0.0)
            nx = x - h / dh if dh > 0 else math.nan
            if not lo < nx < hi:
                nx = 0.5 * (lo + hi)
            x = nx
        return x

    def solve_budget(self, agg: np.ndarray, kappa: float) -> float:
        """``n = 1`` only: smallest ``mu >= 0`` with ``sum max(0,(a-mu)/2) <= kappa``."""
        if float(np.sum(np.maximum(agg, 0.0))) / 2.0 <= kappa:
            return 0.0
        a = np.sort(agg)[::-1]
        csum = np.cumsum(a)
        for j in range(1, len(a) + 1):
            mu = (csum[j - 1] - 2.0 * kappa) / j
            nxt = a[j] if j < len(a) else -np.inf
            if mu >= nxt and mu <= a[j - 1]:
                return max(float(mu), 0.0)
        return 0.0


class _DualState:
    """Multipliers over a growing list of paths, with aggregated vertex sums."""

    def __init__(self, nv: int, link: _Link, kappa: float = 0.0):
        self.link = link
        self.paths = []
        self.lam = []
        self.keys = set()
        self.agg = np.zeros(nv)
        self.mu = 0.0
        self.kappa = kappa

    def add(self, path) -> bool:
        key = frozenset(path)
        if key in self.keys:
            return False
        self.keys.add(key)
        self.paths.append(np.array(sorted(key), dtype=np.intp))
        self.lam.append(0.0)
        return True

    def metric(self) -> np.ndarray:
        return self.link.weights(self.agg, self.mu)

    def sweep(self, order) -> float:
        """One pass of exact coordinate maximization; returns the largest multiplier change."""
        link = self.link
        agg = self.agg
        lam = self.lam
        mu = self.mu
        biggest = 0.0
        for j in order:
            p = self.paths[j]
            old = lam[j]
            cs = (agg[p] - old).tolist()
            new = link.solve_coord(cs, mu)
            if new != old:
                agg[p] += new - old
                lam[j] = new
                biggest = max(biggest, abs(new - old))
        if link.n == 1:
            nmu = link.solve_budget(agg, self.kappa)
            biggest = max(biggest, abs(nmu - self.mu))
            self.mu = nmu
        return biggest

    def residuals(self) -> dict:
        m = self.metric()
        worst_tight = 0.0
        worst_viol = 0.0
        cs = 0.0
        for p, lam in zip(self.paths, self.lam):
            length = float(m[p].sum())
            worst_viol = max(worst_viol, 1.0 - length)
            if lam > 0:
                worst_tight = max(worst_tight, abs(length - 1.0))
            cs = max(cs, abs(lam * (length - 1.0)))
        out = {"activeViolation": worst_viol, "activeSlack": worst_tight, "complementarySlackness": cs}
        if self.link.n == 1:
            out["budgetSlack"] = abs(float(m.sum()) - self.kappa) if self.mu > 0 else max(0.0, float(m.sum()) - self.kappa)
        return out

    def dual_value(self) -> float:
        return self.link.dual_value(float(sum(self.lam)), self.agg, self.mu, self.kappa)


def _newton_equality(n: int, A: np.ndarray, m0: np.ndarray, iters: int = 60) -> np.ndarray | None:
    """Minimize ``sum m**n`` subject to ``A m = 1`` by Newton's method from ``m0 > 0``.

    Rank-deficient constraint systems are handled with least squares.
    """
    m = np.maximum(m0, 1e-12)
    for _ in range(iters):
        g = n * m ** (n - 1)
        hinv = 1.0 / (n * (n - 1) * m ** (n - 2))
        r = 1.0 - A @ m
        K = (A * hinv) @ A.T
        nu = scipy.linalg.lstsq(K, r + A @ (hinv * g), lapack_driver="gelsy", check_finite=False)[0]
        d = hinv * (A.T @ nu - g)
        step = 1.0
        while np.any(m + step * d <= 0.0):
            step *= 0.5
            if step < 1e-12:
                return None
        m = m + step * d
        if step == 1.0 and np.max(np.abs(d)) <= 1e-13 * float(np.max(m)):
            break
    return m


def _interior_point(n: int, A: np.ndarray, tol: float = 1e-13, iters: int = 80):
    """Primal-dual interior point (Mehrotra) for ``min sum m**n`` s.t. ``A m >= 1, m >= 0``.

    Returns ``(m, lam)`` or ``None``; used to warm-start the active-set polish.
    """
    k, nv = A.shape
    x = np.full(nv, 1.0 / max(1.0, float(A.sum(axis=1).min())))
    x = x * 1.5
    s_a = A @ x - 1.0
    s_a = np.maximum(s_a, 0.1)
    s_x = x.copy()
    y_a = np.ones(k)
    y_x = np.ones(nv) * 0.1
    m_tot = k + nv
    for _ in range(iters):
        g = n * x ** (n - 1)
        h = n * (n - 1) * x ** (n - 2) if n >= 2 else np.zeros(nv)
        rd = g - A.T @ y_a - y_x
        rpa = A @ x - s_a - 1.0
        rpx = x - s_x
        mu = (s_a @ y_a + s_x @ y_x) / m_tot
        if mu <= tol and max(np.abs(rd).max(), np.abs(rpa).max(initial=0.0)) <= tol * 10:
            return x, y_a
        wa = y_a / s_a
        wx = y_x / s_x
        K = (A.T * wa) @ A
        K[np.diag_indices(nv)] += h + wx
        try:
            cho = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            K[np.diag_indices(nv)] += 1e-14 * float(np.abs(K).max())
            try:
                cho = np.linalg.cholesky(K)
            except np.linalg.LinAlgError:
                return None

        def direction(rca, rcx):
            rhs = -rd - A.T @ ((rca + y_a * rpa) / s_a) - (rcx + y_x * rpx) / s_x
            dx = np.linalg.solve(cho.T, np.linalg.solve(cho, rhs))
            dsa = A @ dx + rpa
            dsx = dx + rpx
            dya = -(rca + y_a * dsa) / s_a
            dyx = -(rcx + y_x * dsx) / s_x
            return dx, dsa, dsx, dya, dyx

        def step_to_boundary(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if neg.any() else 1.0

        aff = direction(s_a * y_a, s_x * y_x)
        ap = min(step_to_boundary(s_a, aff[1]), step_to_boundary(s_x, aff[2]))
        ad = min(step_to_boundary(y_a, aff[3]), step_to_boundary(y_x, aff[4]))
        mu_aff = ((s_a + ap * aff[1]) @ (y_a + ad * aff[3]) + (s_x + ap * aff[2]) @ (y_x + ad * aff[4])) / m_tot
        sigma = (mu_aff / mu) ** 3
        dx, dsa, dsx, dya, dyx = direction(
            s_a * y_a + aff[1] * aff[3] - sigma * mu, s_x * y_x + aff[2] * aff[4] - sigma * mu
        )
        ap = 0.99 * min(step_to_boundary(s_a, dsa), step_to_boundary(s_x, dsx))
        ad = 0.99 * min(step_to_boundary(y_a, dya), step_to_boundary(y_x, dyx))
        # the objective is not quadratic for n >= 3: one primal step for x and its slacks
        x = x + ap * dx
        s_a = s_a + ap * dsa
        s_x = s_x + ap * dsx
        y_a = y_a + ad * dya
        y_x = y_x + ad * dyx
    return x, y_a


class _Polisher:
    """Active-set finish for ``n >= 2``.

    Solves the program with the positive-multiplier paths held at length 1
    exactly, then recovers nonnegative multipliers from stationarity by
    NNLS.  Accepted only when that certificate holds and no active path is
    violated; the multipliers then replace the coordinate-ascent ones.
    """

    def __init__(self, state: _DualState):
        self.state = state

    def __call__(self, tol: float) -> bool:
        from scipy.optimize import nnls

        st = self.state
        n = st.link.n
        nv = len(st.agg)
        A = np.zeros((len(st.paths), nv))
        for j, p in enumerate(st.paths):
            A[j, p] = 1.0
        lam = np.array(st.lam)
        m_cur = st.metric()
        J = np.union1d(np.flatnonzero(lam > 0), np.flatnonzero(A @ m_cur < 1.0 - tol))
        for _ in range(8):
            if len(J) == 0:
                return False
            U = np.flatnonzero(A[J].sum(axis=0) > 0)
            AJ = A[np.ix_(J, U)]
            mu = _newton_equality(n, AJ, m_cur[U])
            if mu is None:
                return False
            m = np.zeros(nv)
            m[U] = mu
            b = n * mu ** (n - 1)
            lam_j, res = nnls(AJ.T, b, maxiter=50 * len(J) + 100)
            lengths = A @ m
            viol = np.flatnonzero(lengths < 1.0 - tol)
            if res <= 1e-11 * max(1.0, float(np.linalg.norm(b))) and len(viol) == 0:
                new = np.zeros(len(st.paths))
                new[J] = lam_j
                st.lam = new.tolist()
                st.agg = A.T @ new
                return True
            J = np.union1d(J[lam_j > 0], viol)
            m_cur = np.maximum(m, m_cur)
        return False


def _interior_warm_start(state: _DualState, tol: float) -> bool:
    """Replace the multipliers by an interior-point solution of the restricted program."""
    A = np.zeros((len(state.paths), len(state.agg)))
    for j, p in enumerate(state.paths):
        A[j, p] = 1.0
    used = np.flatnonzero(A.sum(axis=0) > 0)
    out = _interior_point(state.link.n, A[:, used])
    if out is None:
        return False
    x = np.zeros(len(state.agg))
    x[used] = out[0]
    lam = out[1]
    # keep multipliers of the paths the interior point holds tight
    lam = np.where((A @ x - 1.0 <= 1e-9) & (lam > 1e-6 * float(lam.max()) * float(lam.max())), lam, 0.0)
    state.lam = lam.tolist()
    state.agg = A.T @ lam
    return True


def _inner_solve(state: _DualState, rng: random.Random, tol: float, sweeps_left: int) -> int:
    """Coordinate-ascent sweeps until the active paths are within ``tol`` of optimal.

    For ``n >= 2`` sweeps stop early at a coarse accuracy and the active-set
    polish is tried; sweeping resumes (with periodic polish retries) if it
    is rejected.
    """
    order = list(range(len(state.paths)))
    polish = _Polisher(state) if state.link.n >= 2 else None
    coarse = max(tol, 1e-5)
    next_polish = None
    used = 0
    if polish is not None and len(state.paths) > 1 and _interior_warm_start(state, tol):
        polish(tol)
        r = state.residuals()
        if max(r["activeViolation"], r["activeSlack"]) <= tol:
            return 0
    while used < sweeps_left:
        rng.shuffle(order)
        state.sweep(order)
        used += 1
        r = state.residuals()
        worst = max(r["activeViolation"], r["activeSlack"], r.get("budgetSlack", 0.0))
        if worst <= tol:
            break
        if polish is not None and (worst <= coarse if next_polish is None else used >= next_polish):
            if polish(tol):
                r = state.residuals()
                if max(r["activeViolation"], r["activeSlack"]) <= tol:
                    break
            next_polish = used + 50
    return used


def _finish(box, state: _DualState, m_raw: np.ndarray, length: float, mode: str, iters: dict, extra: dict) -> SolverResult:
    n = box.n
    if n == 1:
        vol = float(m_raw.sum())
    else:
        vol = float(np.sum(m_raw**n)) ** (1.0 / n)
    if vol <= 0:
        raise ConvergenceError("solver produced a zero metric")
    unit = m_raw / vol
    el = length / vol
    dual = state.dual_value() if state is not None else extra.pop("dual", float("nan"))
    if n == 1:
        upper = 1.0 / float(state.kappa if state is not None else extra.get("kappa"))
    else:
        upper = dual ** (-1.0 / n) if dual > 0 else math.inf
    residuals = state.residuals() if state is not None else {}
    residuals.update(extra)
    residuals["shortestPath"] = length
    residuals["volume"] = vol
    residuals["dualValue"] = dual
    residuals["elGap"] = upper - el
    residuals["stationarity"] = _stationarity(state, m_raw) if state is not None else extra.get("stationarity", 0.0)
    paths = [] if state is None else [tuple(box.vertices[i] for i in p) for p in state.paths]
    lams = [] if state is None else [float(x) for x in state.lam]
    return SolverResult(
        metric=Metric.from_array(box, unit),
        extremal_length=el,
        achieved_length=el,
        upper_bound=upper,
        residuals=residuals,
        iterations=iters,
        active_paths=paths,
        multipliers=lams,
        mode=mode,
    )


def _stationarity(state: _DualState, m_raw: np.ndarray) -> float:
    n = state.link.n
    if n == 1:
        grad = 2.0 * m_raw + state.mu
        mask = m_raw > 0
        return float(np.max(np.abs(grad[mask] - state.agg[mask]), initial=0.0))
    return float(np.max(np.abs(n * m_raw ** (n - 1) - state.agg), initial=0.0))


def extremal_metric(box: DiscreteBox, opts: SolverOptions | None = None, **kw) -> SolverResult:
    """Extremal metric (unit volume) and extremal length by constraint generation.

    Each outer round solves the program restricted to the active paths by
    dual coordinate ascent, then adds the shortest top-bottom path of the
    current metric (and the shortest path into every other violated top
    vertex found by the same Dijkstra run).  Stops once the global shortest
    path has length at least ``1 - eps``.
    """
    opts = opts or SolverOptions(**kw)
    _check_solvable(box)
    rng = random.Random(opts.seed)
    adj = box.adjacency
    src = box.face_indices(1, "neg")
    tgt = box.face_indices(1, "pos")
    nv = len(box.vertices)
    kappa = float(min_vertex_cut(box, box.bottom, box.top)) if box.n == 1 else 0.0
    state = _DualState(nv, _Link(box.n), kappa)

    init = opts.init.array(box) if opts.init is not None else np.array([rng.uniform(0.5, 1.5) for _ in range(nv)])
    first, length, _, _ = _one_shortest_path(adj, init.tolist(), src, tgt)
    if first is None:
        raise UnreachableError("top and bottom faces are not connected")
    state.add(first)

    inner_tol = opts.eps / 10.0
    sweeps = 0
    outer = 0
    while True:
        outer += 1
        if outer > opts.max_iter or sweeps >= opts.max_sweeps:
            raise ConvergenceError(
                f"no convergence after {outer - 1} rounds / {sweeps} sweeps",
                {**state.residuals(), "shortestPath": length},
            )
        sweeps += _inner_solve(state, rng, inner_tol, opts.max_sweeps - sweeps)
        m = state.metric()
        w = m.tolist()
        path, length, dist, parent = _one_shortest_path(adj, w, src, tgt)
        if length >= 1.0 - opts.eps:
            r = state.residuals()
            if r["complementarySlackness"] <= opts.eps or sweeps >= opts.max_sweeps:
                break
            continue
        added = state.add(path)
        added |= _through_cuts(state, adj, w, src, tgt, 1.0 - opts.eps)
        if not added:
            # every violated path is already active; tighten the inner solve
            inner_tol /= 10.0
            if inner_tol < 1e-16:
                raise ConvergenceError("cannot separate violated path", state.residuals())
    log.debug("extremal_metric: %d rounds, %d sweeps, %d paths", outer, sweeps, len(state.paths))
    res = _finish(box, state, m, length, "cutting-plane", {"outer": outer, "sweeps": sweeps}, {})
    return res


def _through_cuts(state: _DualState, adj, w, src, tgt, bound: float) -> bool:
    """Add, for every vertex whose shortest path through it is violated, one such path."""
    fwd, fpar = _dijkstra_parents(adj, w, src)
    bwd, bpar = _dijkstra_parents(adj, w, tgt)
    added = False
    seen = set()
    order = sorted(range(len(adj)), key=lambda v: fwd[v] + bwd[v] - w[v])
    for v in order:
        through = fwd[v] + bwd[v] - w[v]
        if through >= bound:
            break
        if v in seen:
            continue
        left = [v]
        while fpar[left[-1]] >= 0:
            left.append(fpar[left[-1]])
        right = []
        u = v
        while bpar[u] >= 0:
            u = bpar[u]
            right.append(u)
        p = left[::-1] + right
        if len(set(p)) < len(p):
            continue
        seen.update(p)
        added |= state.add(p)
    return added


def _dijkstra_parents(adj, w, src):
    dist = [math.inf] * len(adj)
    parent = [-1] * len(adj)
    heap = []
    for s in src:
        dist[s] = w[s]
        heap.append((w[s], s))
    heapq.heapify(heap)
    done = [False] * len(adj)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for x in adj[u]:
            nd = d + w[x]
            if nd < dist[x]:
                dist[x] = nd
                parent[x] = u
                heapq.heappush(heap, (nd, x))
    return dist, parent


# -- brute-force oracle -------------------------------------------------------


def _brute_cut(nv: int, rows: np.ndarray) -> int:
    """Smallest vertex subset meeting every row, by exhaustive search."""
    masks = [int(sum(1 << int(v) for v in np.flatnonzero(r))) for r in rows]
    for size in range(1, nv + 1):
        for combo in itertools.combinations(range(nv), size):
            cm = sum(1 << v for v in combo)
            if all(m & cm for m in masks):
                return size
    return nv


def brute_force_extremal(box: DiscreteBox, opts: SolverOptions | None = None, **kw) -> SolverResult:
    """Oracle: enumerate all minimal top-bottom paths, then projected gradient on the dual.

    Independent of :func:`extremal_metric`: no path generation, no coordinate
    steps; the dual ``max_{lam >= 0} g(lam)`` is ascended with accelerated
    projected gradient and backtracking, and stops on a certified duality gap.
    """
    opts = opts or SolverOptions(**kw)
    _check_solvable(box)
    n = box.n
    nv = len(box.vertices)
    paths = list(simple_paths(box, box.bottom, box.top, minimal=True, cap=opts.max_paths))
    if not paths:
        raise UnreachableError("top and bottom faces are not connected")
    A = np.zeros((len(paths), nv))
    for r, p in enumerate(paths):
        A[r, list(p)] = 1.0
    kappa = float(_brute_cut(nv, A)) if n == 1 else 0.0
    link = _Link(n)
    k = len(paths) + (1 if n == 1 else 0)

    def primal(y):
        lam, mu = (y[:-1], y[-1]) if n == 1 else (y, 0.0)
        return link.weights(A.T @ lam, mu)

    def value(y):
        lam, mu = (y[:-1], y[-1]) if n == 1 else (y, 0.0)
        return link.dual_value(float(lam.sum()), A.T @ lam, mu, kappa)

    def grad(y):
        m = primal(y)
        g = 1.0 - A @ m
        if n == 1:
            g = np.append(g, float(m.sum()) - kappa)
        return g

    def certified_gap(y, fy):
        m = primal(y)
        lmin = float(np.min(A @ m))
        if n > 1:
            if lmin <= 0:
                return math.inf
            pval = float(np.sum((m / lmin) ** n))
            return (pval - fy) / pval
        # least-norm program: projected-gradient residual
        return float(np.max(np.abs(np.maximum(y + grad(y), 0.0) - y)))

    rng = np.random.default_rng(opts.seed)
    y = rng.uniform(0.0, 1.0 / k, size=k)
    z = y.copy()
    t_acc = 1.0
    step = 1.0
    fy = value(y)
    gap = math.inf
    # EL error is first order in the relative gap, the metric error roughly its square root
    gap_tol = 1e-12
    it = 0
    while it < 5000:
        it += 1
        fz = value(z)
        gz = grad(z)
        while True:
            cand = np.maximum(z + step * gz, 0.0)
            d = cand - z
            fc = value(cand)
            if fc >= fz + gz @ d - (d @ d) / (2.0 * step) - 1e-15 * abs(fz) or step < 1e-14:
                break
            step *= 0.5
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        if fc >= fy:
            z = cand + ((t_acc - 1.0) / t_next) * (cand - y)
            y, fy, t_acc = cand, fc, t_next
        else:
            # monotone variant: keep y, restart momentum
            z = y.copy()
            t_acc = 1.0
        step *= 1.5
        if it % 10 == 0:
            gap = certified_gap(y, fy)
            if gap <= gap_tol:
                break
    m = primal(y)
    lmin = float(np.min(A @ m))
    if lmin <= 0:
        raise ConvergenceError("projected gradient did not reach a positive metric")
    m = m / lmin
    if n > 1 and gap > gap_tol:
        m, fy, gap = _primal_refine(A, n, m, fy)
    extra = {"dual": fy, "pathsEnumerated": len(paths), "relativeGap": gap}
    if n == 1:
        extra["kappa"] = kappa
    res = _finish(box, None, m, 1.0, "brute-force", {"gradientSteps": it}, extra)
    res.active_paths = [tuple(box.vertices[i] for i in p) for p, lam in zip(paths, y) if lam > 0]
    res.multipliers = [float(lam) for lam in y[: len(paths)] if lam > 0]
    return res


def _primal_refine(A: np.ndarray, n: int, m0: np.ndarray, dual: float):
    """SLSQP on the primal from the gradient iterate, with an NNLS dual certificate.

    Projected gradient slows down badly when optimal weights vanish (the
    link function is singular at 0); the primal has no such singularity.
    """
    from scipy.optimize import minimize, nnls

    res = minimize(
        lambda x: float(np.sum(x**n)),
        m0,
        jac=lambda x: n * x ** (n - 1),
        method="SLSQP",
        bounds=[(0.0, None)] * len(m0),
        constraints=[{"type": "ineq", "fun": lambda x: A @ x - 1.0, "jac": lambda x: A}],
        options={"ftol": 1e-16, "maxiter": 2000},
    )
    m = np.maximum(res.x, 0.0)
    lmin = float(np.min(A @ m))
    if lmin > 0:
        m = m / lmin
    if not lmin > 0 or np.sum(m**n) > np.sum(m0**n):
        m = m0
    tight = np.flatnonzero(A @ m - 1.0 <= 1e-8)
    lam, _ = nnls(A[tight].T, n * m ** (n - 1))
    cert = _Link(n).dual_value(float(lam.sum()), A[tight].T @ lam)
    dual = max(dual, cert)
    pval = float(np.sum(m**n))
    return m, dual, (pval - dual) / pval


def solve(box: DiscreteBox, mode: str = "cutting-plane", **kw) -> SolverResult:
    if mode == "cutting-plane":
        return extremal_metric(box, **kw)
    if mode == "brute-force":
        return brute_force_extremal(box, **kw)
    raise BoxError(f"unknown solver mode {mode!r}")
