"""Finite-set-valued presheaves, the sheaf condition, and amalgamation.

Stages are enumerated lazily and cached write-once; restriction maps are
computed by rule (memory builders) or stored extensionally.  Elements
are canonical hashable values: heaps, morphism witnesses, the terminal
point, plain ints/strings, and the class elements built by the matching
and coend quotients.

Finitary heaps are not a separate builder: on a finite location set
every partial heap is finitely supported, so the partial-memory sheaf
already is the finitary one.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .errors import (
    BudgetExceededError,
    IncompatibleFamilyError,
    NoAmalgamationError,
    NonUniqueAmalgamationError,
    NotASheafError,
    ResourceKindError,
    SquareError,
    StageNotEnumerableError,
)
from .fincat import FinCat, element_key, slice_category
from .report import Report
from .site import Coverage, Sieve

DEFAULT_FAMILY_BUDGET = 200_000


# -- elements -------------------------------------------------------------


@dataclass(frozen=True)
class Star:
    """The unique point of the terminal presheaf."""

    def sort_key(self):
        return ()


STAR = Star()


@dataclass(frozen=True)
class Heap:
    """A (partial) assignment of values to the locations of its stage.

    `values[i]` is the value stored at `locations[i]`; None marks an
    unallocated location.  Total heaps have no None entries.
    """

    locations: tuple
    values: tuple

    def __post_init__(self):
        if len(self.locations) != len(self.values):
            raise ValueError("locations and values must be parallel")
        if tuple(sorted(self.locations)) != self.locations:
            raise ValueError("locations must be sorted")

    @staticmethod
    def of(stage, mapping):
        stage = tuple(sorted(stage))
        return Heap(stage, tuple(mapping.get(loc) for loc in stage))

    def get(self, loc):
        return self.values[self.locations.index(loc)]

    def restrict(self, locs):
        locs = tuple(sorted(locs))
        return Heap(locs, tuple(self.get(x) for x in locs))

    @property
    def support(self):
        return tuple(x for x, v in zip(self.locations, self.values) if v is not None)

    def as_dict(self):
        return dict(zip(self.locations, self.values))

    def sort_key(self):
        return (
            self.locations,
            tuple((v is None, 0 if v is None else v) for v in self.values),
        )

    def __str__(self):
        cells = ", ".join(
            f"{x}:{'_' if v is None else v}" for x, v in zip(self.locations, self.values)
        )
        return "<" + cells + ">"


def sorted_elements(xs):
    return tuple(sorted(xs, key=element_key))


# -- presheaf -------------------------------------------------------------


class Presheaf:
    """A contravariant finite-set-valued functor on a FinCat.

    stage_fn(A) yields the elements at A (cached); restrict_fn(f, x)
    applies the restriction map F(f): F(dst f) -> F(src f) to x.
    An optional glue_fn(target, legs) computes amalgamations directly
    for builders whose stages are too big (or infinite) to scan.
    """

    def __init__(self, base: FinCat, stage_fn, restrict_fn, *, name="presheaf",
                 glue_fn=None, enumerable=True):
        self.base = base
        self.name = name
        self._stage_fn = stage_fn
        self._restrict_fn = restrict_fn
        self.glue_fn = glue_fn
        self.enumerable = enumerable
        self._cache = {}

    def at(self, a):
        self.base.require_object(a)
        if not self.enumerable:
            raise StageNotEnumerableError(f"{self.name} has non-enumerable stages")
        if a not in self._cache:
            self._cache[a] = sorted_elements(self._stage_fn(a))
        return self._cache[a]

    def restrict(self, f, x):
        return self._restrict_fn(f, x)

    def __repr__(self):
        return f"Presheaf({self.name!r} on {self.base.kind!r})"


def validate_presheaf(ps: Presheaf) -> Report:
    """Identity and composition functoriality, plus well-typed images."""
    rep = Report(f"presheaf functoriality ({ps.name})")
    cat = ps.base
    for a in cat.objects:
        ida = cat.id(a)
        for x in ps.at(a):
            if ps.restrict(ida, x) != x:
                rep.flag("identity", f"restrict(id_{a!r}) moves {x!r}")
    for f in cat.all_morphisms():
        a, b = cat.src(f), cat.dst(f)
        lower = set(ps.at(a))
        for x in ps.at(b):
            if ps.restrict(f, x) not in lower:
                rep.flag("typing", f"restriction of {x!r} along {f!r} leaves the stage")
    for f in cat.all_morphisms():
        for g in cat.all_morphisms():
            if cat.dst(g) != cat.src(f):
                continue
            fg = cat.compose(f, g)
            for x in ps.at(cat.dst(f)):
                if ps.restrict(fg, x) != ps.restrict(g, ps.restrict(f, x)):
                    rep.flag(
                        "composition",
                        f"restrict({fg!r}) != restrict({g!r}).restrict({f!r}) on {x!r}",
                    )
    return rep


# -- resource sheaf builders ----------------------------------------------


def _require_powerset(site_cat: FinCat, kind):
    if site_cat.kind != "powerset":
        raise ResourceKindError(f"{kind} requires a powerset base, got {site_cat.kind!r}")


def _heap_glue(target, legs):
    """Pointwise union of compatible heap legs; None when non-covering."""
    cells = {}
    for heap in legs.values():
        for loc, v in zip(heap.locations, heap.values):
            cells[loc] = v
    if set(cells) != set(target):
        return None
    return Heap.of(target, cells)


def build_resource_sheaf(cat: FinCat, kind: str, *, values=None, bound=None,
                         at_object=None, elements=None):
    """The named resource presheaf over a base category.

    kinds: strict-memory | partial-memory | support-bounded | constant |
    yoneda | terminal.  Memory kinds need the powerset base and a value
    set; support-bounded additionally takes the bound (a deliberately
    non-sheaf example); yoneda takes the representing object.
    """
    if kind == "strict-memory":
        _require_powerset(cat, kind)
        vals = tuple(sorted(set(values)))
        if not vals:
            raise ResourceKindError("strict-memory needs a nonempty value set")

        def stages(a):
            return [Heap(a, combo) for combo in product(vals, repeat=len(a))]

        def restr(f, heap):
            return heap.restrict(f[1])

        return Presheaf(cat, stages, restr, name=f"M[{','.join(map(str, vals))}]",
                        glue_fn=_heap_glue)
    if kind == "partial-memory":
        _require_powerset(cat, kind)
        vals = tuple(sorted(set(values)))
        if not vals:
            raise ResourceKindError("partial-memory needs a nonempty value set")
        vals_bot = vals + (None,)

        def stages(a):
            return [Heap(a, combo) for combo in product(vals_bot, repeat=len(a))]

        def restr(f, heap):
            return heap.restrict(f[1])

        return Presheaf(cat, stages, restr, name=f"Mp[{','.join(map(str, vals))}]",
                        glue_fn=_heap_glue)
    if kind == "support-bounded":
        _require_powerset(cat, kind)
        vals = tuple(sorted(set(values)))
        k = int(bound)

        def stages(a):
            return [
                Heap(a, combo)
                for combo in product(vals + (None,), repeat=len(a))
                if sum(v is not None for v in combo) <= k
            ]

        def restr(f, heap):
            return heap.restrict(f[1])

        return Presheaf(cat, stages, restr, name=f"Mp|supp<={k}")
    if kind == "constant":
        xs = sorted_elements(elements)

        def stages(a):
            return xs

        def restr(f, x):
            return x

        return Presheaf(cat, stages, restr, name=f"const({len(xs)})")
    if kind == "yoneda":
        cat.require_object(at_object)
        rep_obj = at_object

        def stages(b):
            return cat.hom(b, rep_obj)

        def restr(f, g):
            return cat.compose(g, f)

        return Presheaf(cat, stages, restr, name=f"yo({rep_obj!r})")
    if kind == "terminal":
        def stages(a):
            return (STAR,)

        def restr(f, x):
            return STAR

        return Presheaf(cat, stages, restr, name="terminal")
    raise ResourceKindError(f"unknown resource kind {kind!r}")


# -- compatible families and the sheaf condition ---------------------------


@dataclass(frozen=True)
class CompatibleFamily:
    """An assignment of elements to every morphism of a cover."""

    cover: Sieve
    assignment: tuple  # sorted tuple of (morphism, element) pairs

    @staticmethod
    def of(cover, mapping):
        missing = cover.members - set(mapping)
        if missing:
            raise IncompatibleFamilyError(
                f"assignment missing for {sorted(missing)!r}"
            )
        return CompatibleFamily(
            cover, tuple(sorted((m, mapping[m]) for m in cover.members))
        )

    def value(self, f):
        for m, x in self.assignment:
            if m == f:
                return x
        raise KeyError(f)

    def items(self):
        return self.assignment


def compatibility_witness(ps: Presheaf, fam: CompatibleFamily):
    """First commuting square on which the family disagrees, or None."""
    cat = ps.base
    legs = fam.items()
    for f, xf in legs:
        for g, xg in legs:
            for k in cat.all_morphisms():
                if cat.dst(k) != cat.src(f):
                    continue
                for h in cat.hom(cat.src(k), cat.src(g)):
                    if cat.compose(f, k) == cat.compose(g, h):
                        if ps.restrict(k, xf) != ps.restrict(h, xg):
                            return (f, g, k, h)
    return None


def _generators(cat: FinCat, cover: Sieve):
    """Minimal subfamily through which every member factors."""
    members = cover.sorted_members()
    gens = []
    for f in members:
        redundant = False
        for g in members:
            if g == f:
                continue
            for k in cat.hom(cat.src(f), cat.src(g)):
                if not cat.is_identity(k) and cat.compose(g, k) == f:
                    redundant = True
                    break
            if redundant:
                break
        if not redundant:
            gens.append(f)
    # safety: fall back to the whole sieve if factoring misses members
    covered = set(gens)
    for f in members:
        if f in covered:
            continue
        if not any(
            cat.compose(g, k) == f
            for g in gens
            for k in cat.hom(cat.src(f), cat.src(g))
        ):
            return members
    return tuple(gens)


def _pairwise_square_maps(cat: FinCat, f, g):
    """All (k, h) with f.k = g.h, the compatibility squares for a leg pair."""
    out = []
    for k in cat.all_morphisms():
        if cat.dst(k) != cat.src(f):
            continue
        for h in cat.hom(cat.src(k), cat.src(g)):
            if cat.compose(f, k) == cat.compose(g, h):
                out.append((k, h))
    return out


def enumerate_compatible_families(ps: Presheaf, cover: Sieve, budget=DEFAULT_FAMILY_BUDGET):
    """All compatible families over a cover, via its generating subfamily.

    A family over the full sieve is determined by its values on any
    generating subfamily (precomposition closure); this implementation
    lemma has a dedicated test.  Candidates are built one generator at a
    time with the pairwise squares checked incrementally, so the work is
    proportional to the partial families that survive, not to the full
    cartesian product; `budget` bounds the surviving partials.
    """
    cat = ps.base
    gens = _generators(cat, cover)
    squares = {
        (f, g): _pairwise_square_maps(cat, f, g)
        for f in gens
        for g in gens
    }
    partials = [()]
    for i, g in enumerate(gens):
        options = ps.at(cat.src(g))
        grown = []
        for partial in partials:
            for x in options:
                ok = True
                for k, h in squares[(g, g)]:
                    if ps.restrict(k, x) != ps.restrict(h, x):
                        ok = False
                        break
                if ok:
                    for j in range(i):
                        for k, h in squares[(g, gens[j])]:
                            if ps.restrict(k, x) != ps.restrict(h, partial[j]):
                                ok = False
                                break
                        if not ok:
                            break
                if ok:
                    grown.append(partial + (x,))
        partials = grown
        if len(partials) > budget:
            raise BudgetExceededError(
                f"{len(partials)} partial families exceed the budget {budget}",
                cover=cover,
                size=len(cover.members),
            )
    factorisations = {}
    for f in cover.members:
        for g in gens:
            ks = [k for k in cat.hom(cat.src(f), cat.src(g)) if cat.compose(g, k) == f]
            if ks:
                factorisations[f] = (g, ks[0])
                break
    out = []
    for combo in partials:
        vals = dict(zip(gens, combo))
        full = {}
        for f in cover.members:
            g, k = factorisations[f]
            full[f] = ps.restrict(k, vals[g])
        out.append(CompatibleFamily.of(cover, full))
    return out


def amalgamation_candidates(ps: Presheaf, fam: CompatibleFamily):
    cat = ps.base
    gens = _generators(cat, fam.cover)
    target = fam.cover.target
    return [
        a
        for a in ps.at(target)
        if all(ps.restrict(g, a) == fam.value(g) for g in gens)
    ]


def amalgamate(ps: Presheaf, fam: CompatibleFamily):
    """The unique element restricting to the family on its cover.

    Built-in sheaves glue directly (heaps pointwise, probability by the
    forced measure); enumerable stages are additionally scanned so that
    non-uniqueness is detected.
    """
    witness = compatibility_witness(ps, fam)
    if witness is not None:
        f, g, k, h = witness
        raise IncompatibleFamilyError(
            f"family disagrees on the square {f!r}.{k!r} = {g!r}.{h!r}",
            witness=witness,
        )
    target = fam.cover.target
    if ps.glue_fn is not None:
        candidate = ps.glue_fn(target, dict(fam.items()))
        if candidate is not None:
            bad = [f for f, x in fam.items() if ps.restrict(f, candidate) != x]
            if bad:
                candidate = None
        if candidate is not None and not ps.enumerable:
            return candidate
        if candidate is None and not ps.enumerable:
            raise NoAmalgamationError("no amalgamation for the given family")
    matches = amalgamation_candidates(ps, fam)
    if not matches:
        raise NoAmalgamationError("no amalgamation for the given family")
    if len(matches) > 1:
        raise NonUniqueAmalgamationError(
            f"{len(matches)} amalgamations found", witnesses=tuple(matches[:2])
        )
    return matches[0]


def check_sheaf(ps: Presheaf, cov: Coverage, mode="exhaustive", families=(),
                budget=DEFAULT_FAMILY_BUDGET) -> Report:
    """Existence and uniqueness of amalgamations, per cover and family."""
    rep = Report(f"sheaf condition ({ps.name})")
    if mode == "exhaustive":
        if not ps.enumerable:
            raise StageNotEnumerableError(
                f"{ps.name} cannot be checked exhaustively; supply families"
            )
        # enumerated families are compatible by construction (pairwise
        # squares on generators plus the extension lemma)
        todo = [
            (a, s, fam, False)
            for a in ps.base.objects
            for s in cov.covers(a)
            for fam in enumerate_compatible_families(ps, s, budget)
        ]
    elif mode == "families":
        todo = [(fam.cover.target, fam.cover, fam, True) for fam in families]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n_checked = 0
    for a, s, fam, verify in todo:
        if verify:
            witness = compatibility_witness(ps, fam)
            if witness is not None:
                rep.flag(
                    "compatibility",
                    f"supplied family over {a!r} is incompatible: {witness!r}",
                )
                continue
        matches = amalgamation_candidates(ps, fam)
        n_checked += 1
        if not matches:
            sample = tuple(f"{x}" for _, x in fam.items()[:3])
            rep.flag(
                "existence",
                f"no amalgamation at {a!r} over cover of size {len(s.members)}; "
                f"family starts {sample!r}",
            )
        elif len(matches) > 1:
            rep.flag(
                "uniqueness",
                f"{len(matches)} amalgamations at {a!r}: {matches[0]!r}, {matches[1]!r}",
            )
    rep.note(f"checked {n_checked} families")
    return rep


# -- slice restriction ------------------------------------------------------


def slice_restrict(ps: Presheaf, a, prebuilt=None) -> Presheaf:
    """F restricted to the slice over a: the composite F . dom_a."""
    ps.base.require_object(a)
    sl, dom = prebuilt if prebuilt is not None else slice_category(ps.base, a)

    def stages(p):
        return ps.at(dom.on_obj(p))

    def restr(m, x):
        return ps.restrict(dom.on_mor(m), x)

    return Presheaf(sl, stages, restr, name=f"{ps.name}|{a!r}",
                    glue_fn=None, enumerable=ps.enumerable)


# -- matching objects --------------------------------------------------------


def matching_object(ps: Presheaf, a, f, g, pullback):
    """Pairs of sections agreeing on the given pullback of f and g.

    `pullback` is (P, p_f, p_g) with f.p_f = g.p_g; on a powerset base
    that square is the intersection with its inclusions.
    """
    cat = ps.base
    if cat.dst(f) != a or cat.dst(g) != a:
        raise SquareError(f"{f!r} and {g!r} must target {a!r}")
    p_obj, p_f, p_g = pullback
    if cat.src(p_f) != p_obj or cat.src(p_g) != p_obj:
        raise SquareError("pullback projections must share the apex")
    if cat.compose(f, p_f) != cat.compose(g, p_g):
        raise SquareError("pullback square does not commute")
    out = [
        (sf, sg)
        for sf in ps.at(cat.src(f))
        for sg in ps.at(cat.src(g))
        if ps.restrict(p_f, sf) == ps.restrict(p_g, sg)
    ]
    return tuple(sorted(out, key=lambda p: (element_key(p[0]), element_key(p[1]))))


@dataclass(frozen=True)
class MatchClass:
    """Refinement-equivalence class of matching families.

    The canonical representative lives on the minimum covering sieve of
    the stage (covers are intersection-closed on a finite site, so the
    minimum exists; no tie-break is ever needed).
    """

    stage: object
    cover_members: tuple
    items: tuple  # elements parallel to cover_members

    def family(self):
        return dict(zip(self.cover_members, self.items))

    def sort_key(self):
        return (self.stage, self.cover_members, tuple(element_key(x) for x in self.items))


class UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        r = x
        while self.parent[r] != r:
            r = self.parent[r]
        while self.parent[x] != r:
            self.parent[x], x = r, self.parent[x]
        return r

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.parent[ry] = rx


def _canonical_class(cov: Coverage, stage, family) -> MatchClass:
    mc = cov.min_cover(stage)
    legs = tuple(sorted(mc.members))
    return MatchClass(stage, legs, tuple(family[f] for f in legs))


def matching_presheaf(ps: Presheaf, cov: Coverage, budget=DEFAULT_FAMILY_BUDGET) -> Presheaf:
    """Refinement-equivalence classes of pairwise-compatible families.

    Nodes are (cover, family) pairs; union-find relates each node with
    its restriction to every covering subsieve, which realises the
    agree-on-a-common-refinement equivalence.  Restriction pulls the
    cover back and restricts the family componentwise.
    """
    cat = ps.base

    def stages(a):
        nodes = {}
        for s in cov.covers(a):
            for fam in enumerate_compatible_families(ps, s, budget):
                nodes[(s, fam.assignment)] = fam
        uf = UnionFind(nodes.keys())
        covers = cov.covers(a)
        for (s, key), fam in nodes.items():
            for t in covers:
                if t.members < s.members:
                    sub = tuple(sorted((m, x) for m, x in fam.assignment if m in t.members))
                    if (t, sub) in nodes:
                        uf.union((s, key), (t, sub))
        classes = {}
        for node, fam in nodes.items():
            root = uf.find(node)
            if root not in classes:
                classes[root] = []
            classes[root].append(fam)
        out = []
        for fams in classes.values():
            min_nodes = [f for f in fams if f.cover == cov.min_cover(a)]
            rep_fam = min_nodes[0]
            out.append(_canonical_class(cov, a, dict(rep_fam.items())))
        return out

    def restr(h, cls: MatchClass):
        # min_cover(src h) sits inside the pullback of min_cover(dst h)
        # by stability, so h.g always hits the stored family.
        fam = cls.family()
        b = cat.src(h)
        new_family = {g: fam[cat.compose(h, g)] for g in cov.min_cover(b).members}
        return _canonical_class(cov, b, new_family)

    return Presheaf(cat, stages, restr, name=f"Match({ps.name})")


# -- the amalgamation operator ----------------------------------------------


@dataclass
class AmalgamationIso:
    """Both directions of Match(F) ~ F with the verification report."""

    match: Presheaf
    to_sheaf: dict  # stage -> {MatchClass: element}
    from_sheaf: dict  # stage -> {element: MatchClass}
    report: Report

    def apply(self, a, cls):
        return self.to_sheaf[a][cls]

    def invert(self, a, x):
        return self.from_sheaf[a][x]


def amalgamation_operator(ps: Presheaf, cov: Coverage, budget=DEFAULT_FAMILY_BUDGET) -> AmalgamationIso:
    """Send each matching class to its amalgamation; verify that this is
    a stage-wise bijection and natural in both directions."""
    sheaf_rep = check_sheaf(ps, cov, budget=budget)
    if not sheaf_rep.ok:
        raise NotASheafError(
            f"{ps.name} is not a sheaf for the coverage", report=sheaf_rep
        )
    match = matching_presheaf(ps, cov, budget)
    rep = Report(f"amalgamation operator ({ps.name})")
    cat = ps.base
    to_sheaf = {}
    from_sheaf = {}
    for a in cat.objects:
        fwd = {}
        for cls in match.at(a):
            fam = CompatibleFamily.of(
                Sieve(a, frozenset(cls.cover_members)), cls.family()
            )
            fwd[cls] = amalgamate(ps, fam)
        to_sheaf[a] = fwd
        values = list(fwd.values())
        if len(set(values)) != len(values):
            rep.flag("bijectivity", f"amalgamation not injective at {a!r}")
        if set(values) != set(ps.at(a)):
            rep.flag("bijectivity", f"amalgamation not surjective at {a!r}")
        from_sheaf[a] = {x: cls for cls, x in fwd.items()}
    for h in cat.all_morphisms():
        a, b = cat.src(h), cat.dst(h)
        for cls in match.at(b):
            lhs = ps.restrict(h, to_sheaf[b][cls])
            rhs = to_sheaf[a][match.restrict(h, cls)]
            if lhs != rhs:
                rep.flag(
                    "naturality",
                    f"restrict o amalg != amalg o restrict along {h!r} on {cls!r}",
                )
        for x in ps.at(b):
            lhs = from_sheaf[a].get(ps.restrict(h, x))
            rhs = match.restrict(h, from_sheaf[b][x])
            if lhs != rhs:
                rep.flag("naturality", f"inverse not natural along {h!r} on {x!r}")
    return AmalgamationIso(match, to_sheaf, from_sheaf, rep)
