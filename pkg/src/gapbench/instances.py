"""Instance generators: worst-case constructions for greedy adaptivity and
random small models for property tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ._exact import is_tie
from .diffusion import IC, LT, EdgeStatus, Kind, ModelSpec, make_model
from .errors import BadParams, InequalityCheckFailed, TooLargeToEnumerate
from .graph import build_graph
from .rng import as_generator

MIXTURE_CAP = 4096
TREE_VERTEX_CAP = 2 ** 20


def tree_budget(d: int) -> int:
    """ceil(2 ((d+1)/2)^d), computed exactly."""
    num = 2 * (d + 1) ** d
    den = 2 ** d
    return -(-num // den)


def _check_tight_params(k: int, W: int):
    if not isinstance(k, int) or k < 1:
        raise BadParams(f"k must be a positive integer, got {k!r}")
    if not isinstance(W, int) or W < 1:
        raise BadParams(f"W must be a positive integer, got {W!r}")
    r = math.isqrt(W)
    if r * r != W:
        raise BadParams(f"W={W} is not a perfect square")
    if W % k ** (2 * k):
        raise BadParams(f"W={W} is not divisible by k^(2k)={k ** (2 * k)}")
    return r


# --------------------------------------------------------------------------
# tight ICM instance


@dataclass(frozen=True)
class TightIds:
    """Vertex ids of a tight instance: s, t, u_1..u_k, v_1..v_(k or 2k), then grid."""
    s: int
    t: int
    u: tuple[int, ...]
    v: tuple[int, ...]
    grid: tuple[tuple[int, ...], ...] = ()


def icm_tight_ids(k: int) -> TightIds:
    u = tuple(range(2, 2 + k))
    v = tuple(range(2 + k, 2 + 2 * k))
    base = 2 + 2 * k
    grid = tuple(tuple(base + i * k + j for j in range(k)) for i in range(k + 1))
    return TightIds(0, 1, u, v, grid)


def icm_tight_weights(k: int, W: int) -> dict[str, object]:
    r = math.isqrt(W)
    rows = [Fraction(W, k)]
    for i in range(2, k + 1):
        rows.append(Fraction(1, k) * (1 - Fraction(1, k)) ** (i - 1) * W + r)
    rows.append((1 - Fraction(1, k)) ** k * W + Fraction(r - k, k) - (k - 1) * r)
    return {"s": 2 * W, "t": Fraction(r, k), "rows": rows}


def gen_icm_tight(k: int, W: int, check: bool = True) -> ModelSpec:
    """ICM instance on which adaptive greedy with budget k+1 does badly.

    A heavy vertex s reaches t only through a low-probability edge; v_1 also
    reaches t.  Non-adaptive greedy takes s then the u_i, which cover every
    grid column.  Seeing t uninfected lures adaptive greedy to v_1, and from
    then on it keeps taking v rows, leaving the last grid row uninfected.
    """
    r = _check_tight_params(k, W)
    ids = icm_tight_ids(k)
    wts = icm_tight_weights(k, W)
    vw = {ids.s: wts["s"], ids.t: wts["t"]}
    names = {ids.s: "s", ids.t: "t"}
    for i in range(k):
        vw[ids.u[i]] = vw[ids.v[i]] = 1
        names[ids.u[i]] = f"u_{i + 1}"
        names[ids.v[i]] = f"v_{i + 1}"
    for i, row in enumerate(ids.grid):
        for j, x in enumerate(row):
            vw[x] = wts["rows"][i]
            names[x] = f"w_{i + 1}_{j + 1}"
    for v, w in vw.items():
        if w != int(w) or w < 1:
            raise BadParams(f"W={W} gives vertex {names[v]} weight {w}, not a positive integer")
        vw[v] = int(w)
    one = Fraction(1)
    edges = [(ids.v[0], ids.t, one), (ids.s, ids.t, Fraction(2 * k, r))]
    for i in range(k):
        for row in ids.grid:
            edges.append((ids.u[i], row[i], one))
        for j in range(k):
            edges.append((ids.v[i], ids.grid[i][j], one))
    g = build_graph(2 + 2 * k + k * (k + 1), vw, edges, names)
    m = make_model(g, Kind.ICM, k=k + 1)
    if check:
        check_tight_trajectories(m, ids, k)
    return m


def icm_tight_closed_form(k: int, W: int) -> dict[str, Fraction]:
    """Objective values of the intended trajectories, from the construction."""
    r = math.isqrt(W)
    wts = icm_tight_weights(k, W)
    row_sum = [k * x for x in wts["rows"]]
    q = Fraction(2 * k, r)
    t = wts["t"]
    nonadaptive = 2 * W + q * t + k + sum(row_sum)
    infected_t = 2 * W + t + k + sum(row_sum)
    missed_t = 2 * W + t + k + sum(row_sum[:k])
    adaptive = q * infected_t + (1 - q) * missed_t
    return {"nonadaptive": nonadaptive, "adaptive": adaptive, "adaptive_t_infected": infected_t,
            "adaptive_t_missed": missed_t, "ratio": adaptive / nonadaptive}


# --------------------------------------------------------------------------
# tight LTM instance


def ltm_tight_ids(k: int) -> TightIds:
    return TightIds(0, 1, tuple(range(2, 2 + k)), tuple(range(2 + k, 2 + 3 * k)))


def ltm_tight_weights(k: int, W: int) -> dict[str, object]:
    r = math.isqrt(W)
    v = [Fraction(W + 1)]
    for i in range(2, k + 1):
        v.append(W * (1 - Fraction(1, k)) ** (i - 1) + r)
    tail = W * (1 - Fraction(1, k)) ** k
    v.extend([tail] * (k - 1))
    v.append(tail + r - k - (k - 1) * r - 1)
    return {"s": 2 * W, "t": Fraction(r, k), "v": v}


def gen_ltm_tight(k: int, W: int, check: bool = True) -> ModelSpec:
    """LTM counterpart: the u_i jointly infect all 2k heavy v_j; adaptive
    greedy that sees t uninfected goes for v_1..v_k one by one instead."""
    r = _check_tight_params(k, W)
    ids = ltm_tight_ids(k)
    wts = ltm_tight_weights(k, W)
    vw = {ids.s: wts["s"], ids.t: wts["t"]}
    names = {ids.s: "s", ids.t: "t"}
    for i in range(k):
        vw[ids.u[i]] = 1
        names[ids.u[i]] = f"u_{i + 1}"
    for j in range(2 * k):
        vw[ids.v[j]] = wts["v"][j]
        names[ids.v[j]] = f"v_{j + 1}"
    for v, w in vw.items():
        if w != int(w) or w < 1:
            raise BadParams(f"W={W} gives vertex {names[v]} weight {w}, not a positive integer")
        vw[v] = int(w)
    q = Fraction(2 * k, r)
    if q >= 1:
        raise BadParams(f"W={W} is too small: edge (s, t) would need weight {q} >= 1")
    edges = [(ids.v[0], ids.t, 1 - q), (ids.s, ids.t, q)]
    for i in range(k):
        for j in range(2 * k):
            edges.append((ids.u[i], ids.v[j], Fraction(1, k)))
    g = build_graph(2 + 3 * k, vw, edges, names)
    m = make_model(g, Kind.LTM, k=k + 1)
    if check:
        check_tight_trajectories(m, ids, k)
    return m


def ltm_tight_closed_form(k: int, W: int) -> dict[str, Fraction]:
    r = math.isqrt(W)
    wts = ltm_tight_weights(k, W)
    q = Fraction(2 * k, r)
    t = wts["t"]
    v = wts["v"]
    # v_1 is infected surely, so t is too: its in-weights sum to 1
    nonadaptive = 2 * W + t + k + sum(v)
    infected_t = nonadaptive
    missed_t = 2 * W + t + sum(v[:k])
    adaptive = q * infected_t + (1 - q) * missed_t
    return {"nonadaptive": nonadaptive, "adaptive": adaptive, "adaptive_t_infected": infected_t,
            "adaptive_t_missed": missed_t, "ratio": adaptive / nonadaptive}


# --------------------------------------------------------------------------
# trajectory checks


def _strict_pick(scores: dict[int, object], allowed: Sequence[int], what: str):
    """The maximizers of ``scores`` must all lie in ``allowed``."""
    top = max(scores.values())
    winners = [c for c, val in scores.items() if is_tie(val, top, True)]
    bad = [c for c in winners if c not in allowed]
    if bad:
        raise InequalityCheckFailed(
            f"{what}: vertex {bad[0]} ties or beats the intended choices {sorted(allowed)}")
    return min(winners)


def check_tight_trajectories(m: ModelSpec, ids: TightIds, k: int):
    """Machine-check the intended seed choices with exact arithmetic.

    Non-adaptive greedy must take s, then only u's.  Adaptive greedy must
    take s; if (s, t) turned out live it then takes only u's, otherwise v_1,
    v_2, ..., v_k in order.  Every comparison must be strict against all
    vertices outside the intended group.  The adaptive check walks the whole
    decision tree under both feedback models.
    """
    from .policies import Policy, adaptive_values_exact
    from .feedback import condition_model
    from .sigma import engine_for

    cands = list(m.candidates)
    u, v = list(ids.u), list(ids.v)

    def check_step(engine, chosen, allowed, what):
        base = engine.sigma(frozenset(chosen))
        scores = {c: engine.sigma(frozenset(chosen) | {c}) - base for c in cands if c not in chosen}
        return _strict_pick(scores, [a for a in allowed if a not in chosen], what)

    eng = engine_for(m)
    chosen: list[int] = []
    for step, allowed in enumerate([[ids.s]] + [u] * k):
        chosen.append(check_step(eng, chosen, allowed, f"non-adaptive greedy step {step + 1}"))
    e_st = m.graph.edge_id(ids.s, ids.t)

    class Checker(Policy):
        name = "trajectory-check"

        def select(self, model, seeds, partial, feedback_kind):
            cond = condition_model(model, partial, seeds)
            red = engine_for(cond.reduced)
            known = cond.known_infected
            depth = len(seeds)
            if depth == 0:
                allowed, branch = [ids.s], ""
            elif partial.status[e_st] == EdgeStatus.LIVE:
                allowed, branch = u, " with t infected by s"
            else:
                allowed, branch = [v[depth - 1]], " with t not infected by s"
            base = red.sigma(known)
            scores = {c: (base if c in known else red.sigma(known | {c})) - base
                      for c in cands if c not in seeds}
            return _strict_pick(scores, [a for a in allowed if a not in seeds],
                                f"adaptive greedy ({feedback_kind}) step {depth + 1}{branch}")

    for fb in ("full", "myopic"):
        adaptive_values_exact(m, Checker(), k + 1, fb)


# --------------------------------------------------------------------------
# tree with prescribed candidates


@dataclass(frozen=True)
class TreeLayout:
    root: int
    levels: tuple[tuple[int, ...], ...]   # levels[0] = (root,), levels[-1] = leaves
    pendants: tuple[int, ...] = ()

    @property
    def leaves(self) -> tuple[int, ...]:
        return self.levels[-1]


def tree_layout(d: int, levels: int, offset: int = 0) -> TreeLayout:
    out = [(offset,)]
    nxt = offset + 1
    for _ in range(1, levels):
        width = len(out[-1]) * d
        out.append(tuple(range(nxt, nxt + width)))
        nxt += width
    return TreeLayout(offset, tuple(out))


def _tree_edges(layout: TreeLayout, d: int):
    w = Fraction(1, d)
    edges = []
    for depth in range(1, len(layout.levels)):
        parents = layout.levels[depth - 1]
        for i, child in enumerate(layout.levels[depth]):
            edges.append((child, parents[i // d], w))
    return edges


def gen_tree_prescribed(d: int, W: int, levels: int | None = None, explicit_pendants: bool = False,
                        k: int | None = None) -> ModelSpec:
    """Full d-ary in-arborescence whose root feeds W unit vertices.

    ``levels`` counts tree levels including root and leaves (default d+1; a
    star is 2).  The W pendants are folded into the root's weight unless
    ``explicit_pendants``.  Candidates are the leaves, kind LTM.
    """
    if not isinstance(d, int) or d < 1:
        raise BadParams(f"d must be a positive integer, got {d!r}")
    if not isinstance(W, int) or W < 1:
        raise BadParams(f"W must be a positive integer, got {W!r}")
    levels = d + 1 if levels is None else levels
    if not isinstance(levels, int) or levels < 1:
        raise BadParams(f"levels must be a positive integer, got {levels!r}")
    size = sum(d ** i for i in range(levels))
    if size + (W if explicit_pendants else 0) > TREE_VERTEX_CAP:
        raise BadParams(f"d={d} with {levels} levels needs {size} tree vertices, over {TREE_VERTEX_CAP}")
    lay = tree_layout(d, levels)
    n_tree = sum(len(x) for x in lay.levels)
    edges = _tree_edges(lay, d)
    names = {lay.root: "root"}
    for depth, row in enumerate(lay.levels[1:], start=1):
        for i, x in enumerate(row):
            names[x] = f"n{depth}_{i + 1}"
    if explicit_pendants:
        n = n_tree + W
        vw = [1] * n
        for i in range(W):
            edges.append((lay.root, n_tree + i, Fraction(1)))
            names[n_tree + i] = f"p_{i + 1}"
    else:
        n = n_tree
        vw = [1] * n
        vw[lay.root] = W + 1
    g = build_graph(n, vw, edges, names)
    # the budget may exceed the leaf count (d=2 gives 5 for 4 leaves); callers
    # evaluating σ^f clip it to the candidates themselves
    budget = tree_budget(d) if k is None else k
    return make_model(g, Kind.LTM, candidates=lay.leaves, k=budget)


def tree_expected_seeds_formula(d: int, levels: int | None = None) -> Fraction:
    """Seeds needed to reach the root when subtrees are cleared one at a time.

    A star needs Uniform{1..d} picks; each extra level multiplies by the
    expected number of child subtrees tried.
    """
    levels = d + 1 if levels is None else levels
    e = Fraction(1)
    for _ in range(levels - 1):
        e *= Fraction(d + 1, 2)
    return e


# --------------------------------------------------------------------------
# mixture of ICM and LTM


def _mixture_trees(d: int, M: int, W: int):
    L = d ** d
    layouts, edges, names, vw = [], [], {}, []
    offset = 0
    for i in range(M):
        lay = tree_layout(d, d + 1, offset)
        layouts.append(lay)
        edges.extend(_tree_edges(lay, d))
        size = sum(len(x) for x in lay.levels)
        vw.extend([1] * size)
        vw[lay.root] = W + 1
        names[lay.root] = f"T{i + 1}.root"
        for depth, row in enumerate(lay.levels[1:-1], start=1):
            for j, x in enumerate(row):
                names[x] = f"T{i + 1}.n{depth}_{j + 1}"
        for j, leaf in enumerate(lay.leaves):
            names[leaf] = f"T{i + 1}.leaf{j + 1}"
        offset += size
    return layouts, edges, names, vw, L


def gen_mixture(d: int, M: int, W: int, explicit_A: bool = True, cap: int = MIXTURE_CAP):
    """M copies of the prescribed-candidate tree plus, for every vector
    z in {1..L}^M, a vertex a_z with weight-1 edges to leaf z_i of tree i.

    Leaves are IC, everything else LT.  Explicit mode returns the full
    ModelSpec (|A| = L^M is capped); implicit mode returns a
    :class:`MixtureInstance` that builds only the A-vertices it needs.
    """
    for name, val in (("d", d), ("M", M), ("W", W)):
        if not isinstance(val, int) or val < 1:
            raise BadParams(f"{name} must be a positive integer, got {val!r}")
    if M * sum(d ** i for i in range(d + 1)) > TREE_VERTEX_CAP:
        raise BadParams(f"{M} trees of arity {d} exceed {TREE_VERTEX_CAP} vertices")
    layouts, edges, names, vw, L = _mixture_trees(d, M, W)
    inst = MixtureInstance(d, M, W, tuple(layouts), tuple(edges), names, tuple(vw))
    if not explicit_A:
        return inst
    if L ** M > cap:
        raise TooLargeToEnumerate(f"{L}^{M} A-vertices exceed the cap of {cap}")
    zs = [tuple(int(x) for x in _digits(idx, L, M)) for idx in range(L ** M)]
    return inst.materialize(zs, candidates="all")


def _digits(idx: int, base: int, width: int):
    out = []
    for _ in range(width):
        out.append(idx % base)
        idx //= base
    return reversed(out)


@dataclass
class MixtureInstance:
    """Implicit mixture instance: the trees plus on-demand A-vertices.

    An A-vertex is named by its leaf-index vector ``z`` (0-based).  Its
    marginal value given feedback splits into per-tree leaf marginals, so the
    best A-vertex takes the best leaf of every tree independently; that is
    what :meth:`best_vector` computes.
    """

    d: int
    M: int
    W: int
    layouts: tuple[TreeLayout, ...]
    tree_edges: tuple
    names: dict
    tree_weights: tuple[int, ...]
    k: int = field(init=False)

    def __post_init__(self):
        self.k = tree_budget(self.d)

    @property
    def L(self) -> int:
        return self.d ** self.d

    @property
    def n_tree_vertices(self) -> int:
        return len(self.tree_weights)

    def labels_for(self, n: int) -> list[str]:
        leaves = {x for lay in self.layouts for x in lay.leaves}
        return [IC if v in leaves else LT for v in range(n)]

    def trees_model(self) -> ModelSpec:
        n = self.n_tree_vertices
        g = build_graph(n, self.tree_weights, self.tree_edges, self.names)
        return make_model(g, Kind.MIXTURE, labels=self.labels_for(n), k=self.k)

    def materialize(self, zs: Sequence[Sequence[int]], candidates="all") -> ModelSpec:
        """ModelSpec with A-vertices for the given vectors appended after the trees."""
        base = self.n_tree_vertices
        edges = list(self.tree_edges)
        names = dict(self.names)
        for a, z in enumerate(zs):
            if len(z) != self.M or any(not 0 <= x < self.L for x in z):
                raise BadParams(f"A-vector {z!r} is not in {{0..{self.L - 1}}}^{self.M}")
            for i, x in enumerate(z):
                edges.append((base + a, self.layouts[i].leaves[x], Fraction(1)))
            names[base + a] = "a_" + ".".join(str(x + 1) for x in z)
        n = base + len(zs)
        g = build_graph(n, list(self.tree_weights) + [1] * len(zs), edges, names)
        cands = None if candidates == "all" else candidates
        return make_model(g, Kind.MIXTURE, labels=self.labels_for(n), candidates=cands, k=self.k)

    def best_vector(self, cond_engine, known: frozenset) -> tuple[tuple[int, ...], object]:
        """Per tree, the leaf with the largest conditional marginal (lowest index on ties)."""
        base = cond_engine.sigma(known)
        z = []
        total = Fraction(1) if cond_engine.exact else 1.0
        for lay in self.layouts:
            best_i, best_gain = 0, None
            for i, leaf in enumerate(lay.leaves):
                gain = base if leaf in known else cond_engine.sigma(known | {leaf})
                gain -= base
                if best_gain is None or gain > best_gain:
                    best_i, best_gain = i, gain
            z.append(best_i)
            total += best_gain
        return tuple(z), total


# --------------------------------------------------------------------------
# random instances


def gen_random(n: int, density: float, kind, rng, rational: bool = True, max_edges: int | None = None,
               weight_grid: int = 8, weight_max: int = 3) -> ModelSpec:
    """Random simple digraph; each ordered pair is an edge with prob ``density``.

    Weights are multiples of ``1/weight_grid`` when ``rational`` (exact
    arithmetic downstream), else uniform floats.  LT vertices whose in-weights
    exceed 1 are rescaled.  MIXTURE and GTM models get random IC/LT labels.
    """
    kind = Kind.parse(kind)
    if not isinstance(n, int) or n < 1:
        raise BadParams(f"n must be a positive integer, got {n!r}")
    if not 0 <= density <= 1:
        raise BadParams(f"density must lie in [0, 1], got {density!r}")
    gen = as_generator(rng)
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    mask = gen.random(len(pairs)) < density
    chosen = [p for p, keep in zip(pairs, mask) if keep]
    if max_edges is not None and len(chosen) > max_edges:
        idx = sorted(gen.choice(len(chosen), size=max_edges, replace=False).tolist())
        chosen = [chosen[i] for i in idx]
    if rational:
        weights = [Fraction(int(gen.integers(1, weight_grid + 1)), weight_grid) for _ in chosen]
    else:
        weights = [float(1.0 - gen.random()) for _ in chosen]
    if kind is Kind.ICM:
        labels = [IC] * n
    elif kind is Kind.LTM:
        labels = [LT] * n
    else:
        labels = [IC if x < 0.5 else LT for x in gen.random(n)]
    # rescale LT in-weights to sum at most 1
    incoming: dict[int, list[int]] = {}
    for i, (_, v) in enumerate(chosen):
        incoming.setdefault(v, []).append(i)
    for v, idx in incoming.items():
        if labels[v] != LT:
            continue
        total = sum(weights[i] for i in idx)
        if total > 1:
            for i in idx:
                weights[i] = weights[i] / total
    vw = [int(x) for x in gen.integers(1, weight_max + 1, size=n)]
    g = build_graph(n, vw, [(u, v, w) for (u, v), w in zip(chosen, weights)])
    if kind is Kind.GTM:
        return ModelSpec(g, Kind.GTM, tuple(labels))
    return make_model(g, kind, labels=labels if kind is Kind.MIXTURE else None)


def check_mixture_prefers_A(m: ModelSpec, inst: MixtureInstance, feedback_kind: str = "full",
                            k: int | None = None, node_cap: int = 2 ** 20) -> int:
    """Walk adaptive greedy's exact decision tree on an explicit mixture model
    and require every pick to be an A-vertex.  Returns the nodes visited."""
    from .policies import AdaptiveGreedy, Policy, adaptive_values_exact

    first_a = inst.n_tree_vertices
    inner = AdaptiveGreedy("exact")

    class Checker(Policy):
        name = "mixture-check"

        def select(self, model, seeds, partial, fb):
            x = inner.select(model, seeds, partial, fb)
            if x < first_a:
                raise InequalityCheckFailed(
                    f"adaptive greedy ({fb}) step {len(seeds) + 1} picked tree vertex "
                    f"{model.graph.label(x)} over every A-vertex; M={inst.M} is too small")
            return x

    k = min(inst.k, len(m.candidates)) if k is None else k
    return adaptive_values_exact(m, Checker(), k, feedback_kind, node_cap=node_cap).nodes
