"""Day convolution in two forms, resource monoids, and stability checks.

The decomposition presheaf indexes exact decompositions (on a poset base
the two halves union to the stage exactly) and is what the separating
conjunction pipeline consumes.  The coend form keeps every witnessed
triple and quotients by dinaturality; the two must not be conflated: the
coend collapses summands that the unfolded semantics distinguishes, and
the total memory multiplication is not dinatural (see the tests for the
concrete witness), so it only lives on the decomposition form.
"""

from __future__ import annotations

from dataclasses import dataclass
from .errors import (
    BudgetExceededError,
    MonoidalStructureError,
    NoGammaWitnessError,
)
from .fincat import FinCat, MonoidalStructure, element_key
from .presheaf import Heap, Presheaf, UnionFind, check_sheaf, sorted_elements
from .report import Report
from .site import Site

DEFAULT_COEND_BUDGET = 100_000


@dataclass(frozen=True)
class Decomp:
    """A decomposition-indexed pair of sections.

    stage A, halves (B, C) and sections s in F(B), t in G(C).  On poset
    bases the decomposition is canonical (tensor(B, C) = A) and no
    witness is stored; otherwise `witness` is a morphism A -> B tensor C.
    """

    stage: object
    left_stage: object
    right_stage: object
    left: object
    right: object
    witness: object = None

    def sort_key(self):
        return (
            self.stage,
            self.left_stage,
            self.right_stage,
            element_key(self.left),
            element_key(self.right),
            repr(self.witness),
        )


@dataclass(frozen=True)
class CoendClass:
    """Dinaturality class of witnessed triples, named by a canonical
    representative (the least member under the deterministic order)."""

    rep: Decomp

    def sort_key(self):
        return self.rep.sort_key()


def day_decomp(f_sheaf: Presheaf, g_sheaf: Presheaf, mon: MonoidalStructure) -> Presheaf:
    """The decomposition presheaf of two presheaves on a monoidal base.

    Powerset base: stages index exact decompositions (B union C = A) and
    restriction re-canonicalises componentwise through (B & V, C & V).
    Other bases: triples keep an explicit witness morphism and restrict
    by precomposition.
    """
    if mon is None:
        raise MonoidalStructureError("day_decomp needs a monoidal base")
    cat = f_sheaf.base
    if cat.kind == "powerset":
        def stages(a):
            out = []
            for b in cat.objects:
                for c in cat.objects:
                    if mon.tensor_defined(b, c) and mon.tensor(b, c) == a:
                        for s in f_sheaf.at(b):
                            for t in g_sheaf.at(c):
                                out.append(Decomp(a, b, c, s, t))
            return out

        def restr(h, d: Decomp):
            v = cat.src(h)
            b2 = next(o for o in cat.objects
                      if set(o) == set(d.left_stage) & set(v))
            c2 = next(o for o in cat.objects
                      if set(o) == set(d.right_stage) & set(v))
            fb = cat.hom(b2, d.left_stage)[0]
            gc = cat.hom(c2, d.right_stage)[0]
            return Decomp(v, b2, c2, f_sheaf.restrict(fb, d.left),
                          g_sheaf.restrict(gc, d.right))

        name = f"({f_sheaf.name} (*) {g_sheaf.name})"
        return Presheaf(cat, stages, restr, name=name)

    def stages(a):
        out = []
        for b in cat.objects:
            for c in cat.objects:
                if not mon.tensor_defined(b, c):
                    continue
                bc = mon.tensor(b, c)
                for w in cat.hom(a, bc):
                    for s in f_sheaf.at(b):
                        for t in g_sheaf.at(c):
                            out.append(Decomp(a, b, c, s, t, witness=w))
        return out

    def restr(h, d: Decomp):
        return Decomp(cat.src(h), d.left_stage, d.right_stage, d.left, d.right,
                      witness=cat.compose(d.witness, h))

    return Presheaf(cat, stages, restr, name=f"({f_sheaf.name} (*)w {g_sheaf.name})")


def _coend_triples(cat, mon, f_sheaf, g_sheaf, a):
    out = []
    for b in cat.objects:
        for c in cat.objects:
            if not mon.tensor_defined(b, c):
                continue
            for w in cat.hom(a, mon.tensor(b, c)):
                for s in f_sheaf.at(b):
                    for t in g_sheaf.at(c):
                        out.append(Decomp(a, b, c, s, t, witness=w))
    return out


def day_coend(f_sheaf: Presheaf, g_sheaf: Presheaf, mon: MonoidalStructure,
              budget=DEFAULT_COEND_BUDGET) -> Presheaf:
    """Day convolution proper: witnessed triples modulo dinaturality.

    The dinaturality relation (w, F(u)s, G(v)t) ~ ((u tensor v).w, s, t)
    is closed off by union-find per stage; restriction acts on canonical
    representatives and is checked to be well-defined on classes.
    """
    if mon is None:
        raise MonoidalStructureError("day_coend needs a monoidal base")
    cat = f_sheaf.base
    class_maps = {}

    def classes_at(a):
        if a in class_maps:
            return class_maps[a]
        triples = _coend_triples(cat, mon, f_sheaf, g_sheaf, a)
        if len(triples) > budget:
            raise BudgetExceededError(
                f"{len(triples)} coend triples at {a!r} exceed budget {budget}",
                size=len(triples),
            )
        uf = UnionFind(triples)
        for b in cat.objects:
            for b2 in cat.objects:
                for u in cat.hom(b, b2):
                    for c in cat.objects:
                        for c2 in cat.objects:
                            if not (mon.tensor_defined(b, c) and mon.tensor_defined(b2, c2)):
                                continue
                            for v in cat.hom(c, c2):
                                uv = mon.tensor_m(u, v)
                                for w in cat.hom(a, mon.tensor(b, c)):
                                    w2 = cat.compose(uv, w)
                                    for s2 in f_sheaf.at(b2):
                                        s = f_sheaf.restrict(u, s2)
                                        for t2 in g_sheaf.at(c2):
                                            t = g_sheaf.restrict(v, t2)
                                            uf.union(
                                                Decomp(a, b, c, s, t, witness=w),
                                                Decomp(a, b2, c2, s2, t2, witness=w2),
                                            )
        groups = {}
        for d in triples:
            groups.setdefault(uf.find(d), []).append(d)
        mapping = {}
        for members in groups.values():
            rep = min(members, key=element_key)
            for d in members:
                mapping[d] = CoendClass(rep)
        class_maps[a] = mapping
        return mapping

    def stages(a):
        return sorted_elements(set(classes_at(a).values()))

    def restr(h, cls: CoendClass):
        d = cls.rep
        moved = Decomp(cat.src(h), d.left_stage, d.right_stage, d.left, d.right,
                       witness=cat.compose(d.witness, h))
        return classes_at(cat.src(h))[moved]

    def class_of(d: Decomp) -> CoendClass:
        """Quotient map from (possibly canonical-poset) triples to classes."""
        witnessed = d if d.witness is not None else poset_witnessed(cat, mon, d)
        return classes_at(witnessed.stage)[witnessed]

    name = f"({f_sheaf.name} (x) {g_sheaf.name})"
    ps = Presheaf(cat, stages, restr, name=name)
    ps.class_of = class_of
    return ps


def poset_witnessed(cat: FinCat, mon: MonoidalStructure, d: Decomp) -> Decomp:
    """Attach the canonical witness to a poset decomposition element."""
    bc = mon.tensor(d.left_stage, d.right_stage)
    w = cat.hom(d.stage, bc)[0]
    return Decomp(d.stage, d.left_stage, d.right_stage, d.left, d.right, witness=w)


# -- resource monoids ------------------------------------------------------


@dataclass(frozen=True)
class ResourceMonoid:
    """A (possibly partial) multiplication on a resource sheaf.

    mult maps a Decomp element to an element of F(stage) or None when
    undefined; unit is the designated point of F at the unit object.
    """

    carrier: Presheaf
    variant: str
    mult: object  # callable Decomp -> element | None
    unit_stage: object
    unit: object

    def apply(self, d: Decomp):
        return self.mult(d)


def build_memory_monoid(mp: Presheaf, variant: str) -> ResourceMonoid:
    """The partial-memory monoid in its three flavours.

    total          conflicts collapse to the unallocated value
    weak-partial   defined iff the halves agree on the overlap
    strong-partial defined iff the halves touch disjoint regions
    The unit is the empty heap at the empty region in all variants.
    """
    if mp.base.kind != "powerset":
        raise MonoidalStructureError("memory monoids need the powerset base")

    def total(d: Decomp):
        u1, u2 = set(d.left_stage), set(d.right_stage)
        s1, s2 = d.left, d.right
        cells = {}
        for x in sorted(u1 | u2):
            if x in u1 and x not in u2:
                cells[x] = s1.get(x)
            elif x in u2 and x not in u1:
                cells[x] = s2.get(x)
            elif s1.get(x) == s2.get(x):
                cells[x] = s1.get(x)
            else:
                cells[x] = None
        return Heap.of(tuple(sorted(u1 | u2)), cells)

    def weak(d: Decomp):
        u1, u2 = set(d.left_stage), set(d.right_stage)
        overlap = u1 & u2
        if any(d.left.get(x) != d.right.get(x) for x in overlap):
            return None
        return total(d)

    def strong(d: Decomp):
        if set(d.left_stage) & set(d.right_stage):
            return None
        return total(d)

    mults = {"total": total, "weak-partial": weak, "strong-partial": strong}
    if variant not in mults:
        raise MonoidalStructureError(f"unknown monoid variant {variant!r}")
    return ResourceMonoid(mp, variant, mults[variant], (), Heap((), ()))


def check_monoid_laws(monoid: ResourceMonoid, mon: MonoidalStructure) -> Report:
    """Exhaustive unit, associativity and commutativity checks.

    Partial variants are compared by Kleene equality: both sides defined
    and equal, or both undefined.
    """
    rep = Report(f"monoid laws ({monoid.variant})")
    mp = monoid.carrier
    cat = mp.base
    unit = monoid.unit

    def mult2(b, c, s, t):
        a = mon.tensor(b, c)
        return monoid.apply(Decomp(a, b, c, s, t))

    n_unit = 0
    for a in cat.objects:
        for s in mp.at(a):
            left = mult2(monoid.unit_stage, a, unit, s)
            right = mult2(a, monoid.unit_stage, s, unit)
            n_unit += 1
            if left != s:
                rep.flag("unit", f"unit . {s} = {left} != {s}")
            if right != s:
                rep.flag("unit", f"{s} . unit = {right} != {s}")
    n_assoc = 0
    for b in cat.objects:
        for c in cat.objects:
            for d in cat.objects:
                for s in mp.at(b):
                    for t in mp.at(c):
                        for u in mp.at(d):
                            st = mult2(b, c, s, t)
                            lhs = (
                                None
                                if st is None
                                else mult2(mon.tensor(b, c), d, st, u)
                            )
                            tu = mult2(c, d, t, u)
                            rhs = (
                                None
                                if tu is None
                                else mult2(b, mon.tensor(c, d), s, tu)
                            )
                            n_assoc += 1
                            if lhs != rhs:
                                rep.flag(
                                    "associativity",
                                    f"({s}.{t}).{u} = {lhs} != {rhs} = {s}.({t}.{u})",
                                )
    for b in cat.objects:
        for c in cat.objects:
            for s in mp.at(b):
                for t in mp.at(c):
                    if mult2(b, c, s, t) != mult2(c, b, t, s):
                        rep.flag("commutativity", f"{s}.{t} != {t}.{s}")
    rep.note(f"checked {n_unit} unit and {n_assoc} associativity instances")
    return rep


# -- Day stability ----------------------------------------------------------


def powerset_gamma(cat: FinCat):
    """Lax-monoidal witness for powerset slices: unions of slice legs."""

    def on_obj(p, q):
        v = tuple(sorted(set(cat.src(p)) | set(cat.src(q))))
        a = tuple(sorted(set(cat.dst(p)) | set(cat.dst(q))))
        return ("incl", v, a)

    def on_mor(m1, m2):
        # slice morphisms ("tri", g, q, p) map to the union inclusion
        g = ("incl",
             tuple(sorted(set(m1[1][1]) | set(m2[1][1]))),
             tuple(sorted(set(m1[1][2]) | set(m2[1][2]))))
        q = on_obj(m1[2], m2[2])
        p = on_obj(m1[3], m2[3])
        return ("tri", g, q, p)

    return on_obj, on_mor


def finsurj_gamma(cat: FinCat, mon: MonoidalStructure):
    """Partial witness for the surjection base: products of slice legs."""

    def on_obj(p, q):
        if not mon.tensor_defined(cat.src(p), cat.src(q)):
            return None
        return mon.tensor_m(p, q)

    def on_mor(m1, m2):
        g = (
            mon.tensor_m(m1[1], m2[1])
            if mon.tensor_defined(cat.src(m1[1]), cat.src(m2[1]))
            and mon.tensor_defined(cat.dst(m1[1]), cat.dst(m2[1]))
            else None
        )
        if g is None:
            return None
        q = on_obj(m1[2], m2[2])
        p = on_obj(m1[3], m2[3])
        if q is None or p is None:
            return None
        return ("tri", g, q, p)

    return on_obj, on_mor


def _convolved_mono(cat, mon, inc_components, f_small, g_sheaf):
    """Stage-wise maps day(F', G) -> day(F, G) induced by F' >-> F."""
    day_small = day_decomp(f_small, g_sheaf, mon)
    maps = {}
    for a in cat.objects:
        table = {}
        for d in day_small.at(a):
            img = inc_components[d.left_stage][d.left]
            table[d] = Decomp(d.stage, d.left_stage, d.right_stage, img, d.right,
                              witness=d.witness)
        maps[a] = table
    return maps


def check_day_stability(site: Site, samples, inclusions=(), budget=DEFAULT_COEND_BUDGET) -> Report:
    """Runtime checks for the three Day-stability conditions.

    (1) decomposition and coend convolutions of the samples satisfy the
        sheaf condition for the site's coverage;
    (2) convolving a sampled subsheaf inclusion stays injective
        stage-wise;
    (3) the registered lax-monoidal witness for slices is functorial.

    `inclusions` holds (name, components, small) triples where
    components[stage] maps small-stage elements into big-stage elements.
    """
    rep = Report("Day stability")
    cat, mon = site.cat, site.monoidal
    if mon is None:
        raise MonoidalStructureError("site has no monoidal structure")
    for f_sheaf in samples:
        for g_sheaf in samples:
            dec = day_decomp(f_sheaf, g_sheaf, mon)
            sub = check_sheaf(dec, site.cov)
            if not sub.ok:
                for v in sub.violations:
                    rep.flag("decomp-sheaf", f"{dec.name}: {v.detail}")
            coe = day_coend(f_sheaf, g_sheaf, mon, budget)
            sub = check_sheaf(coe, site.cov)
            if not sub.ok:
                for v in sub.violations:
                    rep.flag("coend-sheaf", f"{coe.name}: {v.detail}")
    for name, components, small in inclusions:
        for a in cat.objects:
            col = components[a]
            if len(set(col.values())) != len(col):
                rep.flag("mono", f"{name}: supplied components not injective at {a!r}")
        for g_sheaf in samples:
            maps = _convolved_mono(cat, mon, components, small, g_sheaf)
            for a, table in maps.items():
                if len(set(table.values())) != len(table):
                    rep.flag(
                        "mono-preservation",
                        f"day({name}, {g_sheaf.name}) not injective at {a!r}",
                    )
    if cat.kind == "powerset":
        on_obj, on_mor = powerset_gamma(cat)
    elif cat.kind == "finsurj":
        on_obj, on_mor = finsurj_gamma(cat, mon)
    else:
        raise NoGammaWitnessError(f"no gamma witness registered for base {cat.kind!r}")
    pairs_checked = 0
    for a in cat.objects:
        for b in cat.objects:
            if not mon.tensor_defined(a, b):
                continue
            sl_a, _, _ = site.slice(a)
            sl_b, _, _ = site.slice(b)
            for p in sl_a.objects:
                for q in sl_b.objects:
                    gp = on_obj(p, q)
                    if gp is None:
                        continue
                    ga = on_mor(sl_a.identities[p], sl_b.identities[q])
                    sl_ab, _, _ = site.slice(mon.tensor(a, b))
                    if ga != sl_ab.identities.get(gp):
                        rep.flag("gamma", f"gamma does not preserve identities at ({p!r}, {q!r})")
                    pairs_checked += 1
            for (q1, p1), ms1 in sl_a.homs.items():
                for (q2, p2), ms2 in sl_b.homs.items():
                    for m1 in ms1:
                        for m2 in ms2:
                            g12 = on_mor(m1, m2)
                            if g12 is None:
                                continue
                            for (r1, rq1), ns1 in sl_a.homs.items():
                                if rq1 != q1:
                                    continue
                                for (r2, rq2), ns2 in sl_b.homs.items():
                                    if rq2 != q2:
                                        continue
                                    for n1 in ns1:
                                        for n2 in ns2:
                                            gn = on_mor(n1, n2)
                                            if gn is None:
                                                continue
                                            lhs = on_mor(
                                                sl_a.compose(m1, n1),
                                                sl_b.compose(m2, n2),
                                            )
                                            sl_ab, _, _ = site.slice(mon.tensor(a, b))
                                            rhs = (
                                                sl_ab.compose(g12, gn)
                                                if (g12, gn) in sl_ab.compose_table
                                                else None
                                            )
                                            if lhs != rhs:
                                                rep.flag(
                                                    "gamma",
                                                    f"gamma not functorial on ({m1!r}, {m2!r})",
                                                )
    rep.note(f"gamma checked on {pairs_checked} object pairs")
    return rep
