"""Finite categories with explicit hom-sets and composition tables.

Objects and morphisms are interned identifiers (nested tuples of strings
and ints), so every structure is hashable and iterates in a fixed order.
Morphism identifiers:

  powerset base:  ("incl", src_tuple, dst_tuple)
  finsurj base:   ("surj", n, m, values)        values[i] = f(i+1)
  slice category: ("tri", g, q, p)              g base morphism, q = p.g

The built-in bases are small enough that every law is checked by
exhaustive enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

from .errors import (
    CompositionError,
    SizeBoundError,
    TensorUndefinedError,
    UnknownObjectError,
)
from .report import Report

POWERSET_SIZE_BOUND = 4
FINSURJ_SIZE_BOUND = 4


def element_key(x):
    """Total deterministic ordering key for heterogeneous hashable values."""
    sk = getattr(x, "sort_key", None)
    if callable(sk):
        return (type(x).__name__, sk())
    return (type(x).__name__, repr(x))


class FinCat:
    """A finite category given by explicit data.

    homs maps (src, dst) pairs to tuples of morphism ids; compose is the
    full table of defined composites keyed by (g, f) with dst(f) = src(g).
    Immutable after construction.
    """

    def __init__(self, kind, objects, homs, compose, identities):
        self.kind = kind
        self.objects = tuple(objects)
        self._obj_index = {a: i for i, a in enumerate(self.objects)}
        self.homs = {pair: tuple(ms) for pair, ms in homs.items() if ms}
        self.compose_table = dict(compose)
        self.identities = dict(identities)
        self._src = {}
        self._dst = {}
        for (a, b), ms in self.homs.items():
            for m in ms:
                self._src[m] = a
                self._dst[m] = b
        self._into = {}
        for a in self.objects:
            ms = []
            for b in self.objects:
                ms.extend(self.homs.get((b, a), ()))
            self._into[a] = tuple(ms)
        self.thin = all(len(ms) <= 1 for ms in self.homs.values())

    # -- basic accessors ------------------------------------------------

    def has_object(self, a) -> bool:
        return a in self._obj_index

    def require_object(self, a):
        if a not in self._obj_index:
            raise UnknownObjectError(f"unknown object {a!r}")

    def hom(self, a, b):
        return self.homs.get((a, b), ())

    def src(self, f):
        return self._src[f]

    def dst(self, f):
        return self._dst[f]

    def id(self, a):
        self.require_object(a)
        return self.identities[a]

    def is_identity(self, f) -> bool:
        return self.identities.get(self._src[f]) == f

    def compose(self, g, f):
        """Composite g.f; raises unless dst(f) = src(g)."""
        if self._dst[f] != self._src[g]:
            raise CompositionError(f"cannot compose {g!r} after {f!r}")
        try:
            return self.compose_table[(g, f)]
        except KeyError:
            raise CompositionError(f"composite missing for ({g!r}, {f!r})") from None

    def mors_into(self, a):
        """All morphisms with dst = a, in construction order."""
        self.require_object(a)
        return self._into[a]

    def all_morphisms(self):
        for a in self.objects:
            yield from self._into[a]

    def obj_sort_key(self, a):
        return self._obj_index[a]

    def __repr__(self):
        n_mor = sum(len(ms) for ms in self.homs.values())
        return f"FinCat(kind={self.kind!r}, objects={len(self.objects)}, morphisms={n_mor})"


@dataclass(frozen=True)
class MonoidalStructure:
    """(Possibly partial) tensor on a FinCat; strict for the built-in posets."""

    tensor_obj: dict = field(hash=False)
    tensor_mor: dict = field(hash=False)
    unit: object = None
    symmetric: bool = False

    def tensor(self, a, b):
        try:
            return self.tensor_obj[(a, b)]
        except KeyError:
            raise TensorUndefinedError(f"tensor undefined on ({a!r}, {b!r})") from None

    def tensor_defined(self, a, b) -> bool:
        return (a, b) in self.tensor_obj

    def tensor_m(self, f, g):
        try:
            return self.tensor_mor[(f, g)]
        except KeyError:
            raise TensorUndefinedError(f"tensor undefined on morphism pair ({f!r}, {g!r})") from None


@dataclass(frozen=True)
class FunctorData:
    """Object/morphism maps between two FinCats."""

    source: FinCat = field(hash=False)
    target: FinCat = field(hash=False)
    obj_map: dict = field(hash=False)
    mor_map: dict = field(hash=False)

    def on_obj(self, a):
        return self.obj_map[a]

    def on_mor(self, f):
        return self.mor_map[f]


# -- builders -----------------------------------------------------------


def _subsets(items):
    out = [()]
    for x in items:
        out += [s + (x,) for s in out]
    return sorted({tuple(sorted(s)) for s in out}, key=lambda s: (len(s), s))


def incl(src, dst):
    return ("incl", tuple(src), tuple(dst))


def build_powerset_category(locations, size_bound=POWERSET_SIZE_BOUND):
    """Powerset of a finite location set as a thin monoidal category.

    Objects are sorted tuples of locations, a unique inclusion morphism
    A -> B exists iff A is a subset of B, tensor is union with unit ().
    """
    locations = tuple(sorted(set(locations)))
    if len(locations) > size_bound:
        raise SizeBoundError(
            f"{len(locations)} locations exceed the powerset bound {size_bound}"
        )
    objects = _subsets(locations)
    homs = {}
    for a in objects:
        for b in objects:
            if set(a) <= set(b):
                homs[(a, b)] = (incl(a, b),)
    compose = {}
    for a in objects:
        for b in objects:
            if not set(a) <= set(b):
                continue
            for c in objects:
                if set(b) <= set(c):
                    compose[(incl(b, c), incl(a, b))] = incl(a, c)
    identities = {a: incl(a, a) for a in objects}
    cat = FinCat("powerset", objects, homs, compose, identities)
    tensor_obj = {}
    tensor_mor = {}
    for a in objects:
        for b in objects:
            tensor_obj[(a, b)] = tuple(sorted(set(a) | set(b)))
    for (a, b), fs in homs.items():
        for (c, d), gs in homs.items():
            tensor_mor[(fs[0], gs[0])] = incl(
                tensor_obj[(a, c)], tensor_obj[(b, d)]
            )
    mon = MonoidalStructure(tensor_obj, tensor_mor, unit=(), symmetric=True)
    return cat, mon


def surjections(n, m):
    """All surjective maps {1..n} -> {1..m} as value tuples, sorted."""
    if m > n:
        return []
    out = []
    for vals in product(range(1, m + 1), repeat=n):
        if len(set(vals)) == m:
            out.append(vals)
    return sorted(out)


def surj(n, m, vals):
    return ("surj", n, m, tuple(vals))


def build_finsurj_category(max_size, size_bound=FINSURJ_SIZE_BOUND):
    """Finite sets {1..n}, n <= max_size, with surjections; tensor = product.

    The tensor is partial: pairs whose product exceeds max_size are
    rejected, which keeps the category finite.
    """
    if not (1 <= max_size <= size_bound):
        raise SizeBoundError(f"max_size must be in 1..{size_bound}, got {max_size}")
    objects = tuple(range(1, max_size + 1))
    homs = {}
    for n in objects:
        for m in objects:
            ms = tuple(surj(n, m, v) for v in surjections(n, m))
            if ms:
                homs[(n, m)] = ms
    compose = {}
    for (n, m), fs in homs.items():
        for (m2, k), gs in homs.items():
            if m2 != m:
                continue
            for f in fs:
                for g in gs:
                    vals = tuple(g[3][f[3][i] - 1] for i in range(n))
                    compose[(g, f)] = surj(n, k, vals)
    identities = {n: surj(n, n, tuple(range(1, n + 1))) for n in objects}
    cat = FinCat("finsurj", objects, homs, compose, identities)

    tensor_obj = {}
    for n in objects:
        for m in objects:
            if n * m <= max_size:
                tensor_obj[(n, m)] = n * m
    tensor_mor = {}
    for (n, n2), fs in homs.items():
        for (m, m2), gs in homs.items():
            if (n, m) not in tensor_obj or (n2, m2) not in tensor_obj:
                continue
            for f in fs:
                for g in gs:
                    # code (i, j) in {1..n} x {1..m} as (i-1)*m + j
                    vals = []
                    for i in range(1, n + 1):
                        for j in range(1, m + 1):
                            vals.append((f[3][i - 1] - 1) * m2 + g[3][j - 1])
                    tensor_mor[(f, g)] = surj(n * m, n2 * m2, tuple(vals))
    mon = MonoidalStructure(tensor_obj, tensor_mor, unit=1, symmetric=False)
    return cat, mon


def slice_object(p):
    return p


def tri(cat, g, q, p):
    return ("tri", g, q, p)


def slice_category(cat: FinCat, a):
    """Slice category cat/a together with the domain functor into cat.

    Objects are the morphisms p with dst(p) = a; a morphism q -> p is a
    base morphism g with p.g = q, interned as ("tri", g, q, p).
    """
    cat.require_object(a)
    objects = cat.mors_into(a)
    homs = {}
    for q in objects:
        for p in objects:
            ms = []
            for g in cat.hom(cat.src(q), cat.src(p)):
                if cat.compose(p, g) == q:
                    ms.append(tri(cat, g, q, p))
            if ms:
                homs[(q, p)] = tuple(ms)
    compose = {}
    for (q0, q1), fs in homs.items():
        for (r1, q2), gs in homs.items():
            if r1 != q1:
                continue
            for f in fs:
                for g in gs:
                    compose[(g, f)] = tri(cat, cat.compose(g[1], f[1]), q0, q2)
    identities = {p: tri(cat, cat.id(cat.src(p)), p, p) for p in objects}
    sl = FinCat(("slice", cat.kind, a), objects, homs, compose, identities)
    dom = FunctorData(
        source=sl,
        target=cat,
        obj_map={p: cat.src(p) for p in objects},
        mor_map={m: m[1] for ms in homs.values() for m in ms},
    )
    return sl, dom


# -- validation ---------------------------------------------------------


def validate_category(cat: FinCat) -> Report:
    """Exhaustively check typing, identity and associativity laws."""
    rep = Report(f"category laws ({cat.kind!r})")
    for a in cat.objects:
        e = cat.identities.get(a)
        if e is None:
            rep.flag("identity", f"object {a!r} has no identity")
            continue
        if cat._src.get(e) != a or cat._dst.get(e) != a:
            rep.flag("typing", f"identity of {a!r} is mistyped: {e!r}")
    mors = list(cat.all_morphisms())
    for f in mors:
        a, b = cat.src(f), cat.dst(f)
        ef = cat.compose_table.get((f, cat.identities[a]))
        fe = cat.compose_table.get((cat.identities[b], f))
        if ef != f:
            rep.flag("identity", f"f.id != f for {f!r} (got {ef!r})")
        if fe != f:
            rep.flag("identity", f"id.f != f for {f!r} (got {fe!r})")
    for (g, f), h in cat.compose_table.items():
        if cat._dst.get(f) != cat._src.get(g):
            rep.flag("typing", f"composable pair mistyped: ({g!r}, {f!r})")
            continue
        if cat._src.get(h) != cat._src[f] or cat._dst.get(h) != cat._dst[g]:
            rep.flag("typing", f"compose({g!r}, {f!r}) = {h!r} has wrong endpoints")
    # associativity over all composable triples
    for f in mors:
        for g in [m for m in mors if cat.src(m) == cat.dst(f)]:
            gf = cat.compose_table.get((g, f))
            if gf is None:
                rep.flag("typing", f"missing composite ({g!r}, {f!r})")
                continue
            for h in [m for m in mors if cat.src(m) == cat.dst(g)]:
                hg = cat.compose_table.get((h, g))
                left = cat.compose_table.get((h, gf))
                right = cat.compose_table.get((hg, f)) if hg is not None else None
                if left != right:
                    rep.flag(
                        "associativity",
                        f"(h.g).f != h.(g.f) for f={f!r}, g={g!r}, h={h!r}",
                    )
    return rep


def validate_monoidal(cat: FinCat, mon: MonoidalStructure) -> Report:
    """Check functoriality of the (partial) tensor and strict unit laws."""
    rep = Report("monoidal structure")
    for a in cat.objects:
        if mon.tensor_defined(a, mon.unit):
            if mon.tensor(a, mon.unit) != a or mon.tensor(mon.unit, a) != a:
                rep.flag("unit", f"unit law fails at {a!r}")
    if mon.symmetric:
        for (a, b), ab in mon.tensor_obj.items():
            if mon.tensor_obj.get((b, a)) != ab:
                rep.flag("symmetry", f"tensor not symmetric on ({a!r}, {b!r})")
    for a in cat.objects:
        for b in cat.objects:
            if not mon.tensor_defined(a, b):
                continue
            ia, ib = cat.id(a), cat.id(b)
            if (ia, ib) in mon.tensor_mor:
                if mon.tensor_m(ia, ib) != cat.id(mon.tensor(a, b)):
                    rep.flag("functoriality", f"id tensor id != id at ({a!r}, {b!r})")
    for (f, g), fg in mon.tensor_mor.items():
        for (f2, g2), f2g2 in mon.tensor_mor.items():
            if cat.src(f2) != cat.dst(f) or cat.src(g2) != cat.dst(g):
                continue
            comp_f = cat.compose(f2, f)
            comp_g = cat.compose(g2, g)
            lhs = mon.tensor_mor.get((comp_f, comp_g))
            if (f2g2, fg) not in cat.compose_table:
                continue
            rhs = cat.compose(f2g2, fg)
            if lhs != rhs:
                rep.flag(
                    "functoriality",
                    f"(f2.f) tensor (g2.g) != (f2 tensor g2).(f tensor g) at ({f!r},{g!r})",
                )
    return rep


def validate_functor(fd: FunctorData) -> Report:
    rep = Report("functor data")
    for m in fd.mor_map:
        src_img = fd.obj_map.get(fd.source.src(m))
        dst_img = fd.obj_map.get(fd.source.dst(m))
        fm = fd.mor_map[m]
        if fd.target.src(fm) != src_img or fd.target.dst(fm) != dst_img:
            rep.flag("typing", f"image of {m!r} mistyped")
    for a, e in fd.source.identities.items():
        if fd.mor_map.get(e) != fd.target.identities.get(fd.obj_map[a]):
            rep.flag("identity", f"identity of {a!r} not preserved")
    for (g, f), h in fd.source.compose_table.items():
        img = fd.target.compose_table.get((fd.mor_map[g], fd.mor_map[f]))
        if img != fd.mor_map.get(h):
            rep.flag("composition", f"composition not preserved at ({g!r}, {f!r})")
    return rep
