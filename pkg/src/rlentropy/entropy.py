"""Hidden-chain entropy: two-sided bounds, the exact regeneration formula
for single-boundary types, the positive-entry modified chain with its
marginal-equality check, and assembly of the final report.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import AssumptionError
from .cones import limit_words

LOG = math.log

SANDWICH_BUDGET = 5_000_000
INEQ_SLACK = 1e-9


# -- the enriched state space -------------------------------------------------

@dataclass(frozen=True)
class WState:
    source_type: int      # type of the cone whose covering was entered
    slot_type: int
    slot_index: int
    word: str


def hidden_symbol(atlas, prev_state, next_state):
    """Project one transition of the enriched chain to its hidden symbol
    (current cone type, entered slot); entries into slots of foreign
    coverings fold onto the local first slot of the same type."""
    i = atlas.type_of[prev_state.word[-2:]]
    if next_state.source_type == i:
        return (i, next_state.slot_type, next_state.slot_index)
    return (i, next_state.slot_type, 1)


def project_pi(atlas, prev, nxt):
    """Alias of hidden_symbol with the argument order (atlas, prev, next)."""
    return hidden_symbol(atlas, prev, nxt)


class HiddenChain:
    """Enriched last-entry chain of one essential class: states carry the
    slot through which each increment's cone was entered, transitions are
    grouped by emitted hidden symbol."""

    def __init__(self, chain, cls):
        self.chain = chain
        self.cls = cls
        self.atlas = atlas = chain.atlas
        class_words = {chain.states[i] for i in cls.state_ids}
        self.nu0 = {chain.states[i]: cls.nu0[a]
                    for a, i in enumerate(cls.state_ids)}

        self.states = []
        self.index = {}
        for m in sorted(cls.types):
            for slot in atlas.coverings[m].slots:
                for w in atlas.boundary_words(slot):
                    if w in class_words:
                        st = WState(m, slot.type_id, slot.local_index, w)
                        self.index[st] = len(self.states)
                        self.states.append(st)

        self.trans = []       # per state: {symbol: [(target idx, prob), ...]}
        for st in self.states:
            i = atlas.type_of[st.word[-2:]]
            row = chain.suffix_rows[st.word[-2:]]
            by_symbol = {}
            for y, p in zip(row.targets, row.probs):
                slot = chain.slot_of[(i, y)]
                tgt = WState(i, slot.type_id, slot.local_index, y)
                sym = (i, slot.type_id, slot.local_index)
                by_symbol.setdefault(sym, []).append((self.index[tgt], float(p)))
            self.trans.append(by_symbol)

        nu = np.zeros(len(self.states))
        for w, mass in self.nu0.items():
            i = atlas.type_of[w[-2:]]
            row = chain.suffix_rows[w[-2:]]
            for y, p in zip(row.targets, row.probs):
                slot = chain.slot_of[(i, y)]
                nu[self.index[WState(i, slot.type_id, slot.local_index, y)]] \
                    += mass * float(p)
        self.nu = nu
        self.symbols = sorted({s for t in self.trans for s in t})

    def initial_mu1(self):
        """Law of the first enriched state restricted to this class."""
        mu = np.zeros(len(self.states))
        for (m, slot, word), mass in self.chain.mu1_w.items():
            st = WState(m, slot[0], slot[1], word)
            if st in self.index:
                mu[self.index[st]] += mass
        s = mu.sum()
        if s <= 0:
            raise AssumptionError("first-state law has no mass in this class")
        return mu / s


# -- sandwich bounds -----------------------------------------------------------

@dataclass
class EntropyBounds:
    uppers: list
    lowers: list
    n_final: int
    gap: float
    value: float                  # midpoint of the final bounds
    converged: bool
    monte_carlo: bool = False
    std_error: float | None = None

    @property
    def lower(self):
        return self.lowers[-1]

    @property
    def upper(self):
        return self.uppers[-1]


def _step_vectors(hidden, vectors, budget_state):
    """Expand each forward vector over one hidden symbol, pruning zeros."""
    out = []
    for vec in vectors:
        succ = {}
        for idx, mass in vec.items():
            for sym, targets in hidden.trans[idx].items():
                d = succ.setdefault(sym, {})
                for j, p in targets:
                    d[j] = d.get(j, 0.0) + mass * p
            budget_state[0] += len(hidden.trans[idx])
        out.extend(succ.values())
    return out


def _entropy_of(vectors):
    h = 0.0
    for vec in vectors:
        p = sum(vec.values())
        if p > 0:
            h -= p * LOG(p)
    return h


def sandwich_bounds(hidden, n_max=16, gap_tol=1e-6, budget=SANDWICH_BUDGET,
                    mc_samples=20000, seed=7):
    """Two-sided conditional-entropy bounds on the hidden-chain entropy rate.

    The upper bound conditions on the visible history, the lower bound
    additionally on the initial enriched pair; both are exact forward sums
    over positive-probability symbol sequences, stopping once the gap closes
    below ``gap_tol`` or at ``n_max``.  Past the expansion budget a
    stationary Monte Carlo estimator substitutes, with standard errors.
    """
    budget_state = [0]
    uppers, lowers = [], []

    up_levels = _step_vectors(
        hidden, [{i: m for i, m in enumerate(hidden.nu) if m > 0}], budget_state)
    joint_prev = _entropy_of(up_levels)

    # Conditioning on the initial enriched pair is, by the Markov property,
    # conditioning on the second state; one start vector per state suffices.
    low_frontier = [{v: mass} for v, mass in enumerate(hidden.nu) if mass > 0]

    n = 1
    while n < n_max:
        n += 1
        if budget_state[0] > budget:
            return _sandwich_mc(hidden, n, gap_tol, mc_samples, seed)
        nxt = _step_vectors(hidden, up_levels, budget_state)
        joint_n = _entropy_of(nxt)
        uppers.append(joint_n - joint_prev)
        joint_prev = joint_n
        up_levels = nxt

        total_low = 0.0
        new_low = []
        for vec in low_frontier:
            p_node = sum(vec.values())
            if p_node <= 0:
                continue
            succ = {}
            for idx, mass in vec.items():
                for sym, targets in hidden.trans[idx].items():
                    d = succ.setdefault(sym, {})
                    for j, p in targets:
                        d[j] = d.get(j, 0.0) + mass * p
                budget_state[0] += len(hidden.trans[idx])
            for d in succ.values():
                p_next = sum(d.values())
                if p_next > 0:
                    total_low -= p_next * LOG(p_next / p_node)
                    new_low.append(d)
        lowers.append(total_low)
        low_frontier = new_low

        if uppers[-1] - lowers[-1] < gap_tol:
            break

    gap = uppers[-1] - lowers[-1]
    return EntropyBounds(uppers, lowers, n, gap,
                         0.5 * (uppers[-1] + lowers[-1]), gap < gap_tol)


def _sandwich_mc(hidden, n, gap_tol, samples, seed):
    """Monte Carlo estimates of the two conditional entropies at depth n.

    Trajectories of the enriched chain are sampled from stationarity with a
    counter-based generator; the per-sample conditional probabilities are
    evaluated exactly by filtering."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    nu = hidden.nu / hidden.nu.sum()
    rows = []
    for idx in range(len(hidden.states)):
        flat = [(sym, j, p) for sym, ts in hidden.trans[idx].items()
                for j, p in ts]
        probs = np.array([p for _, _, p in flat])
        rows.append((flat, probs / probs.sum()))

    up_vals, low_vals = [], []
    for _ in range(samples):
        state = int(rng.choice(len(nu), p=nu))
        syms, states = [], [state]
        for _k in range(n):
            flat, pr = rows[states[-1]]
            pick = flat[int(rng.choice(len(flat), p=pr))]
            syms.append(pick[0])
            states.append(pick[1])

        def cond_surprise(vec0, symbols):
            vec, p_hist = vec0, 1.0
            out = None
            for k, sym in enumerate(symbols):
                d = {}
                for idx, mass in vec.items():
                    for j, p in hidden.trans[idx].get(sym, ()):
                        d[j] = d.get(j, 0.0) + mass * p
                p_next = sum(d.values())
                if k == len(symbols) - 1:
                    out = -LOG(p_next / p_hist)
                p_hist, vec = p_next, d
            return out

        up_vals.append(cond_surprise(
            {i: m for i, m in enumerate(nu) if m > 0}, syms))
        low_vals.append(cond_surprise({states[1]: 1.0}, syms[1:]))

    up, low = float(np.mean(up_vals)), float(np.mean(low_vals))
    se = float(np.sqrt(np.var(up_vals) / samples + np.var(low_vals) / samples))
    return EntropyBounds([up], [low], n, up - low, 0.5 * (up + low),
                         converged=(up - low < gap_tol), monte_carlo=True,
                         std_error=se)


# -- exact formula at a single-boundary type ------------------------------------

@dataclass
class ExactEntropy:
    value: float
    truncation_bound: float
    suffix: str
    method: str


def unambiguous_exact(chain, cls, suffix=None, tail_tol=1e-10, max_depth=60,
                      budget=SANDWICH_BUDGET, force_dfs=False):
    """Entropy rate through regeneration at a single-boundary cone type.

    When every type of the class has a one-word boundary, block weights and
    their coarsened versions coincide and the regeneration sum telescopes to
    the Markov entropy rate of the increment chain (closed form, zero
    truncation error).  Otherwise first-return blocks to the chosen suffix
    are enumerated depth-first, the coarsened weight carried as a forward
    vector over boundary mates, with tail-mass accounting.
    """
    atlas = chain.atlas
    types = [atlas.types[t] for t in sorted(cls.types)]
    exact_sfx = [t.boundary_suffixes[0] for t in types
                 if len(t.boundary_suffixes) == 1]
    if not exact_sfx:
        raise AssumptionError("no single-boundary cone type in this class")
    if suffix is not None and suffix not in exact_sfx:
        raise AssumptionError(f"suffix {suffix!r} is not unambiguous")
    nu0 = {chain.states[i]: cls.nu0[a] for a, i in enumerate(cls.state_ids)}

    if not force_dfs and all(len(t.boundary_suffixes) == 1 for t in types):
        hy = 0.0
        for w, mass in nu0.items():
            for p in chain.suffix_rows[w[-2:]].probs:
                if p > 0:
                    hy -= mass * float(p) * LOG(float(p))
        return ExactEntropy(hy, 0.0, exact_sfx[0], "telescoped")

    ab = suffix or exact_sfx[0]
    nu_ab = sum(m for w, m in nu0.items() if w[-2:] == ab)
    class_words = set(nu0)
    row_maps = {sfx: dict(zip(r.targets, map(float, r.probs)))
                for sfx, r in chain.suffix_rows.items()}
    mates_memo = {}

    def mates(word):
        if word not in mates_memo:
            t = atlas.type_of[word[-2:]]
            mates_memo[word] = [word[:-2] + cd
                                for cd in atlas.types[t].boundary_suffixes
                                if word[:-2] + cd in class_words]
        return mates_memo[word]

    acc = [0.0]
    spent = [0]
    tail_mass = [0.0]
    tail_depth = [1]
    min_q = min(p for r in chain.suffix_rows.values() for p in r.probs if p > 0)

    def step(suffix, w, beta, depth):
        if spent[0] > budget or depth > max_depth or w < tail_tol * 1e-3:
            tail_mass[0] += w
            tail_depth[0] = max(tail_depth[0], depth)
            return
        row = chain.suffix_rows[suffix]
        for y, p in zip(row.targets, row.probs):
            p = float(p)
            if p <= 0:
                continue
            wy = w * p
            beta_y = {}
            for ym in mates(y):
                tot = sum(bm * row_maps[mate[-2:]].get(ym, 0.0)
                          for mate, bm in beta.items())
                if tot > 0:
                    beta_y[ym] = tot
            spent[0] += len(beta) * len(mates(y))
            if y[-2:] == ab:
                wt = beta_y.get(y, 0.0)
                if wt > 0:
                    acc[0] += -wy * LOG(wt)
            else:
                step(y[-2:], wy, beta_y, depth + 1)

    row0 = chain.suffix_rows[ab]
    for y, p in zip(row0.targets, row0.probs):
        p = float(p)
        if p <= 0:
            continue
        beta = {ym: row_maps[ab].get(ym, 0.0) for ym in mates(y)}
        beta = {k: v for k, v in beta.items() if v > 0}
        if y[-2:] == ab:
            wt = beta.get(y, 0.0)
            if wt > 0:
                acc[0] += -p * LOG(wt)
        else:
            step(y[-2:], p, beta, 2)

    # unfinished blocks: bound each unrealized -w log w-tilde by the worst
    # per-step surprise times a geometric tail on the block length
    bound = tail_mass[0] * (tail_depth[0] + 10) * (-LOG(min_q)) * 2.0
    return ExactEntropy(nu_ab * acc[0], nu_ab * bound, ab, "regeneration-dfs")


def regeneration_mc(chain, cls, suffix=None, samples=50_000, seed=29):
    """Monte Carlo evaluation of the single-boundary regeneration sum.

    Samples first-return blocks of the increment chain and averages the
    negative log of the coarsened block weight; unbiased for the same
    quantity the depth-first enumeration truncates, and the practical tool
    when the block tree is too wide to enumerate.
    """
    atlas = chain.atlas
    types = [atlas.types[t] for t in sorted(cls.types)]
    exact_sfx = [t.boundary_suffixes[0] for t in types
                 if len(t.boundary_suffixes) == 1]
    if not exact_sfx:
        raise AssumptionError("no single-boundary cone type in this class")
    ab = suffix or exact_sfx[0]
    if ab not in exact_sfx:
        raise AssumptionError(f"suffix {ab!r} is not unambiguous")
    nu0 = {chain.states[i]: cls.nu0[a] for a, i in enumerate(cls.state_ids)}
    nu_ab = sum(v for w, v in nu0.items() if w[-2:] == ab)
    class_words = set(nu0)
    row_maps = {s: dict(zip(r.targets, map(float, r.probs)))
                for s, r in chain.suffix_rows.items()}
    rows = {s: (r.targets, np.asarray(r.probs, dtype=float) / r.probs.sum())
            for s, r in chain.suffix_rows.items()}
    mates_memo = {}

    def mates(word):
        if word not in mates_memo:
            t = atlas.type_of[word[-2:]]
            mates_memo[word] = [word[:-2] + cd
                                for cd in atlas.types[t].boundary_suffixes
                                if word[:-2] + cd in class_words]
        return mates_memo[word]

    rng = np.random.Generator(np.random.Philox(key=seed))
    vals = np.empty(samples)
    for k in range(samples):
        sfx = ab
        beta = None
        while True:
            targets, probs = rows[sfx]
            y = targets[int(rng.choice(len(targets), p=probs))]
            if beta is None:
                beta = {ym: row_maps[ab].get(ym, 0.0) for ym in mates(y)}
            else:
                beta = {ym: sum(bm * row_maps[mate[-2:]].get(ym, 0.0)
                                for mate, bm in beta.items())
                        for ym in mates(y)}
            if y[-2:] == ab:
                vals[k] = -LOG(beta[y])
                break
            sfx = y[-2:]
    value = nu_ab * float(vals.mean())
    se = nu_ab * float(vals.std(ddof=1) / math.sqrt(samples))
    return ExactEntropy(value, 3 * se, ab, "regeneration-mc")


# -- modified positive-entry chain ----------------------------------------------

@dataclass
class ModifiedChain:
    hidden: HiddenChain
    rows: list          # per state: list of (target idx, prob)
    fold_counts: dict   # (type i, type j, suffix ab) -> split count


def build_qhat(chain, cls):
    """Transition table over the enriched states whose rows spread entries
    into first slots across all coverings, splitting the mass evenly; the
    projected hidden process keeps the law of the original one."""
    hidden = HiddenChain(chain, cls)
    atlas = chain.atlas
    class_types = sorted(cls.types)

    n_slots = {(m, j): atlas.coverings[m].n_of_type(j)
               for m in class_types for j in class_types}
    fold_counts = {}

    def count(i, j, ab):
        key = (i, j, ab)
        if key not in fold_counts:
            fold_counts[key] = sum(
                n_slots[(s, j)] for s in class_types if s != i)
        return fold_counts[key]

    first_slot_word = {}
    for m in class_types:
        for slot in atlas.coverings[m].slots:
            if slot.local_index == 1:
                for w in atlas.boundary_words(slot):
                    first_slot_word[(m, slot.type_id, w[-2:])] = w

    rows = []
    for st in hidden.states:
        i = atlas.type_of[st.word[-2:]]
        row = chain.suffix_rows[st.word[-2:]]
        qrow = dict(zip(row.targets, map(float, row.probs)))
        out = {}
        for tgt_state, k in hidden.index.items():
            m, j = tgt_state.source_type, tgt_state.slot_type
            y = tgt_state.word
            ab = y[-2:]
            if m == i and tgt_state.slot_index >= 2:
                p = qrow.get(y, 0.0)
            elif m == i and tgt_state.slot_index == 1:
                p = qrow.get(y, 0.0) / (count(i, j, ab) + 1)
            elif n_slots[(i, j)] == 0:
                # the covering of type i has no type-j slot (single-child
                # coverings): no mass to split into this fold target
                p = 0.0
            else:
                ybar = first_slot_word.get((i, j, ab))
                if ybar is None:
                    raise AssumptionError(
                        f"no first slot of type {j} with boundary {ab} in the "
                        f"covering of type {i}")
                p = qrow.get(ybar, 0.0) / (count(i, j, ab) + 1)
            if p > 0:
                out[k] = p
        total = sum(out.values())
        if abs(total - 1.0) > 1e-12:
            raise AssumptionError(
                f"modified row for {st} sums to {total!r}, not 1 +- 1e-12")
        rows.append(sorted(out.items()))
    return ModifiedChain(hidden, rows, fold_counts)


def check_marginal_equality(chain, cls, modified, max_len=3):
    """Compare the finite-dimensional hidden-symbol laws of the original and
    modified chains, both started from the first-state law; returns the
    maximum absolute difference over all sequences up to ``max_len``."""
    hidden = modified.hidden
    atlas = chain.atlas
    mu1 = hidden.initial_mu1()

    def y_marginals(step_fn):
        vec0 = {i: m for i, m in enumerate(mu1) if m > 0}
        out = {}
        frontier = [((), vec0)]
        for _ in range(max_len):
            nxt = []
            for seq, vec in frontier:
                for sym, d in step_fn(vec).items():
                    p = sum(d.values())
                    if p > 0:
                        out[seq + (sym,)] = p
                        nxt.append((seq + (sym,), d))
            frontier = nxt
        return out

    def orig_step(vec):
        succ = {}
        for idx, mass in vec.items():
            for sym, targets in hidden.trans[idx].items():
                d = succ.setdefault(sym, {})
                for j, p in targets:
                    d[j] = d.get(j, 0.0) + mass * p
        return succ

    def mod_step(vec):
        succ = {}
        for idx, mass in vec.items():
            src = hidden.states[idx]
            i = atlas.type_of[src.word[-2:]]
            for j, p in modified.rows[idx]:
                tgt = hidden.states[j]
                if tgt.source_type == i:
                    sym = (i, tgt.slot_type, tgt.slot_index)
                else:
                    sym = (i, tgt.slot_type, 1)
                d = succ.setdefault(sym, {})
                d[j] = d.get(j, 0.0) + mass * p
        return succ

    a = y_marginals(orig_step)
    b = y_marginals(mod_step)
    return max(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


# -- report ---------------------------------------------------------------------

@dataclass
class ClassReport:
    weight: float
    expanding: bool
    lambda_: float
    ell: float | None
    hy: float | None
    hy_gap: float | None
    hy_n: int | None
    hy_exact: float | None
    h: float


@dataclass
class EntropyReport:
    transient: bool
    expanding: bool
    method: str
    ell: float | None
    lambda_: float | None
    hy: float | None
    hy_gap: float | None
    hy_n: int | None
    h: float
    inequality_ok: bool
    sign_ok: bool
    limit_words: list | None = None
    classes: list = field(default_factory=list)
    marginal_check: float | None = None
    notes: list = field(default_factory=list)


def assemble_report(model, gf, atlas=None, chain=None, n_max=16, gap_tol=1e-6,
                    budget=SANDWICH_BUDGET, check_marginals=False):
    """Route the computed structure to the final entropy value.

    Recurrent models short-circuit to zero; transient non-expanding models
    are zero with their deterministic limit words attached; otherwise the
    entropy combines drift, mean level gain and hidden-chain entropy rate,
    per essential class when the increment chain is reducible.
    """
    xi_vals = list(gf.xi.values())
    if not gf.transient:
        if max(xi_vals) > 1e-6:
            raise AssumptionError(
                "some but not all escape probabilities vanish: the walk has "
                "trapping cones and the escape condition fails")
        return EntropyReport(False, False, "recurrent-zero", 0.0, None, None,
                             None, None, 0.0, True, True)

    if atlas is None or chain is None:
        raise ValueError("transient models need the atlas and the chain")

    if not atlas.expanding:
        lw = limit_words(model, atlas)
        rep = EntropyReport(True, False, "non-expanding-zero", chain.ell,
                            chain.lambda_, 0.0, 0.0, None, 0.0, True, True,
                            limit_words=lw)
        _finalize_checks(rep, model)
        return rep

    classes = []
    h_total = 0.0
    marginal = None
    exact = None
    for cls in chain.classes:
        expanding = any(atlas.expanding_types[t] for t in cls.types)
        if not expanding:
            classes.append(ClassReport(cls.weight, False, cls.lambda_,
                                       cls.ell, 0.0, 0.0, None, None, 0.0))
            continue
        hidden = HiddenChain(chain, cls)
        bounds = sandwich_bounds(hidden, n_max=n_max, gap_tol=gap_tol,
                                 budget=budget)
        try:
            exact = unambiguous_exact(chain, cls)
            hy_exact = exact.value
        except AssumptionError:
            exact = None
            hy_exact = None
        if cls.ell is None:
            raise AssumptionError(
                "drift unavailable (critical derivative system); cannot "
                "assemble the entropy")
        h_cls = cls.ell * bounds.value / cls.lambda_
        classes.append(ClassReport(cls.weight, True, cls.lambda_, cls.ell,
                                   bounds.value, bounds.gap, bounds.n_final,
                                   hy_exact, h_cls))
        h_total += cls.weight * h_cls
        if check_marginals and marginal is None:
            modified = build_qhat(chain, cls)
            marginal = check_marginal_equality(chain, cls, modified)

    if len(classes) == 1:
        c = classes[0]
        method = "unambiguous" if (exact is not None and
                                   exact.method == "telescoped") else "sandwich"
        rep = EntropyReport(True, True, method, chain.ell, chain.lambda_,
                            c.hy, c.hy_gap, c.hy_n, h_total, True, True,
                            classes=classes, marginal_check=marginal)
    else:
        rep = EntropyReport(True, True, "class-weighted", chain.ell,
                            chain.lambda_, None, None, None, h_total, True,
                            True, classes=classes, marginal_check=marginal)
    _finalize_checks(rep, model)
    return rep


def _finalize_checks(rep, model):
    bound = (rep.ell or 0.0) * LOG(len(model.alphabet)) + INEQ_SLACK
    rep.inequality_ok = rep.h <= bound
    if rep.transient:
        rep.sign_ok = (rep.h > 0) == rep.expanding
    else:
        rep.sign_ok = rep.h == 0.0
    if not rep.inequality_ok:
        rep.notes.append("entropy-drift-growth inequality violated")
    if not rep.sign_ok:
        rep.notes.append("positivity/expansion mismatch")


# -- continuity sweep ------------------------------------------------------------

def interpolate_models(model_a, model_b, t):
    """Convex combination of two same-support rule tables."""
    rules_a = {(r.lhs, r.rhs): r.prob for r in model_a.all_rules()}
    rules_b = {(r.lhs, r.rhs): r.prob for r in model_b.all_rules()}
    if set(rules_a) != set(rules_b) or model_a.alphabet != model_b.alphabet:
        raise ValueError("models do not share supports")
    mixed = [(lhs, rhs, (1 - t) * rules_a[k] + t * rules_b[k])
             for k in rules_a for lhs, rhs in [k]]
    return model_a.with_rules(mixed)


def continuity_sweep(model_a, model_b, grid=11, n_max=16, gap_tol=1e-6):
    """Entropy along the segment between two same-support models, with
    finite-difference smoothness diagnostics (no analyticity claim)."""
    from . import pipeline
    rows = []
    for k in range(grid):
        t = k / (grid - 1) if grid > 1 else 0.0
        m = interpolate_models(model_a, model_b, t)
        try:
            res = pipeline.analyze(m, n_max=n_max, gap_tol=gap_tol)
            rep = res.report
            rows.append({"t": t, "ell": rep.ell, "hy": rep.hy, "h": rep.h,
                         "skipped": False})
        except AssumptionError as exc:
            rows.append({"t": t, "ell": None, "hy": None, "h": None,
                         "skipped": True, "reason": str(exc)})
    hs = [r["h"] for r in rows if not r["skipped"]]
    d1 = [b - a for a, b in zip(hs, hs[1:])]
    d2 = [b - a for a, b in zip(d1, d1[1:])]
    return {"rows": rows, "first_differences": d1, "second_differences": d2}
