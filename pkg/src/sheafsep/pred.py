"""Stage-indexed predicates on a resource sheaf with Heyting structure.

A predicate at stage A assigns to every slice object p: B -> A a subset
of F(B).  Genuine subsheaf predicates are restriction-closed and locally
closed; both conditions are checked by validators rather than enforced
at construction, because the allocated points-to atom deliberately
breaks restriction-closure (its family is empty at stages missing the
location) and the bottom predicate is empty everywhere.

join and direct_image close their pointwise result under restriction
and iterated amalgamation to a fixpoint: the pointwise union or image
of subsheaves need not be a subsheaf, and the closure is the least one
containing it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    IncompatibleFamilyError,
    MonoidalStructureError,
    NaturalityError,
    StageMismatchError,
    UnknownObjectError,
)
from .fincat import element_key
from .presheaf import Presheaf
from .report import Report
from .site import Sieve, Site


@dataclass
class KripkePredicate:
    """A family over the slice objects of `stage`, valued in subsets of
    the resource's stages."""

    resource: Presheaf
    site: Site
    stage: object
    family: dict  # slice object (morphism into stage) -> frozenset

    def __post_init__(self):
        slice_objs = self.site.cat.mors_into(self.stage)
        missing = set(slice_objs) - set(self.family)
        if missing:
            raise UnknownObjectError(f"family missing slice objects {sorted(missing)!r}")
        self.family = {p: frozenset(self.family[p]) for p in slice_objs}

    def at(self, p) -> frozenset:
        return self.family[p]

    def at_subset(self, v) -> frozenset:
        """Poset convenience: the set at the inclusion of v into the stage."""
        homs = self.site.cat.hom(v, self.stage)
        if not homs:
            raise UnknownObjectError(f"{v!r} is not below stage {self.stage!r}")
        return self.family[homs[0]]

    def __eq__(self, other):
        return (
            isinstance(other, KripkePredicate)
            and self.resource is other.resource
            and self.stage == other.stage
            and self.family == other.family
        )

    def issubset(self, other) -> bool:
        _check_aligned(self, other)
        return all(self.family[p] <= other.family[p] for p in self.family)

    def size(self) -> int:
        return sum(len(s) for s in self.family.values())


def _check_aligned(p: KripkePredicate, q: KripkePredicate):
    if p.resource is not q.resource or p.stage != q.stage:
        raise StageMismatchError("predicates live over different resources or stages")


def _slice_morphisms_into(cat, stage, p):
    """Pairs (q, k) where k: src(q) -> src(p) realises a slice morphism q -> p."""
    out = []
    for q in cat.mors_into(stage):
        for k in cat.hom(cat.src(q), cat.src(p)):
            if cat.compose(p, k) == q:
                out.append((q, k))
    return out


def restriction_closure_witnesses(pred: KripkePredicate):
    """Slice morphisms along which the family is not closed."""
    cat = pred.site.cat
    out = []
    for p in pred.family:
        for q, k in _slice_morphisms_into(cat, pred.stage, p):
            for x in pred.family[p]:
                if pred.resource.restrict(k, x) not in pred.family[q]:
                    out.append((p, q, k, x))
    return out


def local_character_witnesses(pred: KripkePredicate):
    """(p, element) pairs forced in by a slice cover but absent."""
    cat = pred.site.cat
    _, dom, scov = pred.site.slice(pred.stage)
    out = []
    for p in pred.family:
        candidates = set(pred.resource.at(cat.src(p))) - pred.family[p]
        if not candidates:
            continue
        for s in scov.covers(p):
            for a in sorted(candidates, key=element_key):
                if all(
                    pred.resource.restrict(dom.on_mor(m), a)
                    in pred.family[cat.compose(p, dom.on_mor(m))]
                    for m in s.members
                ):
                    out.append((p, a))
                    candidates = candidates - {a}
    return out


def validate_predicate(pred: KripkePredicate) -> Report:
    rep = Report("predicate subsheaf conditions")
    for p, q, k, x in restriction_closure_witnesses(pred):
        rep.flag("restriction", f"{x} at {p!r} does not restrict into {q!r}")
    for p, a in local_character_witnesses(pred):
        rep.flag("local-character", f"{a} is locally present at {p!r} but missing")
    return rep


def _close(resource, site, stage, family):
    """Least restriction-closed, locally-closed family containing `family`."""
    cat = site.cat
    _, dom, scov = site.slice(stage)
    fam = {p: set(xs) for p, xs in family.items()}
    slice_mors = {p: _slice_morphisms_into(cat, stage, p) for p in fam}
    changed = True
    while changed:
        changed = False
        for p in fam:
            for q, k in slice_mors[p]:
                for x in list(fam[p]):
                    rx = resource.restrict(k, x)
                    if rx not in fam[q]:
                        fam[q].add(rx)
                        changed = True
        for p in fam:
            missing = [a for a in resource.at(cat.src(p)) if a not in fam[p]]
            for s in scov.covers(p):
                for a in missing:
                    if a in fam[p]:
                        continue
                    if all(
                        resource.restrict(dom.on_mor(m), a)
                        in fam[cat.compose(p, dom.on_mor(m))]
                        for m in s.members
                    ):
                        fam[p].add(a)
                        changed = True
    return {p: frozenset(xs) for p, xs in fam.items()}


# -- lattice structure ------------------------------------------------------


def top_predicate(resource, site, stage) -> KripkePredicate:
    cat = site.cat
    fam = {p: frozenset(resource.at(cat.src(p))) for p in cat.mors_into(stage)}
    return KripkePredicate(resource, site, stage, fam)


def bottom_predicate(resource, site, stage) -> KripkePredicate:
    fam = {p: frozenset() for p in site.cat.mors_into(stage)}
    return KripkePredicate(resource, site, stage, fam)


def meet(p: KripkePredicate, q: KripkePredicate) -> KripkePredicate:
    _check_aligned(p, q)
    fam = {sl: p.family[sl] & q.family[sl] for sl in p.family}
    return KripkePredicate(p.resource, p.site, p.stage, fam)


def join(p: KripkePredicate, q: KripkePredicate) -> KripkePredicate:
    """Stage-wise union closed up to the least subsheaf containing it."""
    _check_aligned(p, q)
    fam = {sl: p.family[sl] | q.family[sl] for sl in p.family}
    return KripkePredicate(
        p.resource, p.site, p.stage, _close(p.resource, p.site, p.stage, fam)
    )


def lattice_op(kind, *preds, resource=None, site=None, stage=None):
    """Dispatch point mirroring the four lattice constructors."""
    if kind in ("top", "bottom"):
        if preds:
            proto = preds[0]
            resource, site, stage = proto.resource, proto.site, proto.stage
        builder = top_predicate if kind == "top" else bottom_predicate
        return builder(resource, site, stage)
    if kind == "meet":
        return meet(*preds)
    if kind == "join":
        return join(*preds)
    raise ValueError(f"unknown lattice op {kind!r}")


def implication(p: KripkePredicate, q: KripkePredicate) -> KripkePredicate:
    """Kripke implication: membership at a slice object quantifies over
    every further restriction."""
    _check_aligned(p, q)
    cat = p.site.cat
    fam = {}
    for sl in p.family:
        members = []
        for s in p.resource.at(cat.src(sl)):
            ok = True
            for r, k in _slice_morphisms_into(cat, p.stage, sl):
                rs = p.resource.restrict(k, s)
                if rs in p.family[r] and rs not in q.family[r]:
                    ok = False
                    break
            if ok:
                members.append(s)
        fam[sl] = frozenset(members)
    return KripkePredicate(p.resource, p.site, p.stage, fam)


# -- morphisms of sheaves, reindexing and images -----------------------------


@dataclass
class SheafMorphism:
    """Stage-wise (possibly partial) maps between two presheaves over the
    same base; naturality is checked by `validate_sheaf_morphism`."""

    source: Presheaf
    target: Presheaf
    components: dict  # object -> {element: element}
    name: str = "alpha"

    def apply(self, a, x):
        return self.components[a].get(x)

    def defined_on(self, a, x) -> bool:
        return x in self.components[a]


def validate_sheaf_morphism(alpha: SheafMorphism) -> Report:
    """Naturality where defined; definedness must be restriction-stable."""
    rep = Report(f"naturality ({alpha.name})")
    cat = alpha.source.base
    for h in cat.all_morphisms():
        a, b = cat.src(h), cat.dst(h)
        for x in alpha.source.at(b):
            if not alpha.defined_on(b, x):
                continue
            down = alpha.source.restrict(h, x)
            if not alpha.defined_on(a, down):
                rep.flag("definedness", f"defined on {x!r} but not on its restriction along {h!r}")
                continue
            lhs = alpha.target.restrict(h, alpha.apply(b, x))
            rhs = alpha.apply(a, down)
            if lhs != rhs:
                rep.flag("naturality", f"square fails along {h!r} on {x!r}")
    return rep


def reindex_preimage(alpha: SheafMorphism, q: KripkePredicate,
                     check_naturality=False) -> KripkePredicate:
    """f*: stage-wise preimage; restriction-closure follows from
    naturality of alpha.  Undefined points never enter the preimage of a
    proper subset but always satisfy the adjoint's vacuous clause."""
    if check_naturality:
        rep = validate_sheaf_morphism(alpha)
        if not rep.ok:
            raise NaturalityError("reindexing needs a natural map", witness=rep.violations[0])
    cat = q.site.cat
    fam = {}
    for sl in q.family:
        b = cat.src(sl)
        members = [
            x
            for x in alpha.source.at(b)
            if (not alpha.defined_on(b, x)) or alpha.apply(b, x) in q.family[sl]
        ]
        fam[sl] = frozenset(members)
    return KripkePredicate(alpha.source, q.site, q.stage, fam)


def direct_image(alpha: SheafMorphism, p: KripkePredicate) -> KripkePredicate:
    """The existential pushforward: smallest subsheaf containing the
    stage-wise image over the defined points."""
    cat = p.site.cat
    fam = {}
    for sl in p.family:
        b = cat.src(sl)
        fam[sl] = {
            alpha.apply(b, x) for x in p.family[sl] if alpha.defined_on(b, x)
        }
    closed = _close(alpha.target, p.site, p.stage, fam)
    return KripkePredicate(alpha.target, p.site, p.stage, closed)


def raw_image(alpha: SheafMorphism, p: KripkePredicate) -> KripkePredicate:
    """Pointwise image without closure (for diagnostics and tests)."""
    cat = p.site.cat
    fam = {
        sl: frozenset(
            alpha.apply(cat.src(sl), x)
            for x in p.family[sl]
            if alpha.defined_on(cat.src(sl), x)
        )
        for sl in p.family
    }
    return KripkePredicate(alpha.target, p.site, p.stage, fam)


# -- gluing -------------------------------------------------------------------


def restrict_predicate(p: KripkePredicate, f) -> KripkePredicate:
    """The predicate at stage src(f) obtained by composing slice objects
    with f (restriction of the predicate along f)."""
    cat = p.site.cat
    if cat.dst(f) != p.stage:
        raise StageMismatchError(f"{f!r} does not target stage {p.stage!r}")
    b = cat.src(f)
    fam = {q: p.family[cat.compose(f, q)] for q in cat.mors_into(b)}
    return KripkePredicate(p.resource, p.site, b, fam)


def glue_predicates(site: Site, resource: Presheaf, cover: Sieve, parts: dict) -> KripkePredicate:
    """The unique predicate on the cover's target restricting to the parts.

    `parts` maps cover morphisms (a generating subset suffices) to
    predicates at their sources.  Pairwise compatibility is checked on
    common factorisations; the family at slice objects outside the cover
    is forced by the subsheaf condition.
    """
    cat = site.cat
    a = cover.target
    full_parts = {}
    for f in sorted(cover.members):
        if f in parts:
            full_parts[f] = parts[f]
            continue
        for g, part in parts.items():
            ks = [k for k in cat.hom(cat.src(f), cat.src(g)) if cat.compose(g, k) == f]
            if ks:
                full_parts[f] = restrict_predicate(part, ks[0])
                break
        else:
            raise IncompatibleFamilyError(
                f"no part supplied or derivable for cover member {f!r}"
            )
    for f, part_f in full_parts.items():
        if part_f.stage != cat.src(f) or part_f.resource is not resource:
            raise StageMismatchError(f"part for {f!r} has wrong stage or resource")
        for g, part_g in full_parts.items():
            for k in cat.all_morphisms():
                if cat.dst(k) != cat.src(f):
                    continue
                for h in cat.hom(cat.src(k), cat.src(g)):
                    if cat.compose(f, k) == cat.compose(g, h):
                        lhs = restrict_predicate(part_f, k)
                        rhs = restrict_predicate(part_g, h)
                        if lhs.family != rhs.family:
                            raise IncompatibleFamilyError(
                                f"parts disagree on the overlap {f!r}.{k!r} = {g!r}.{h!r}",
                                witness=(f, g, k, h),
                            )
    fam = {}
    for p in cat.mors_into(a):
        if p in full_parts:
            fam[p] = full_parts[p].family[cat.id(cat.src(p))]
        else:
            members = []
            pullback = [
                (g, cat.compose(p, g))
                for g in cat.all_morphisms()
                if cat.dst(g) == cat.src(p) and cat.compose(p, g) in cover.members
            ]
            for x in resource.at(cat.src(p)):
                if all(
                    resource.restrict(g, x) in full_parts[pg].family[cat.id(cat.src(pg))]
                    for g, pg in pullback
                ):
                    members.append(x)
            fam[p] = frozenset(members)
    return KripkePredicate(resource, site, a, fam)


# -- the combinator into predicates on convolutions ---------------------------


def combine_alpha(p: KripkePredicate, q: KripkePredicate, decomp: Presheaf) -> KripkePredicate:
    """Combine two predicates at a common stage into one on the
    decomposition presheaf: a decomposition pair belongs iff its halves
    belong to the respective predicates at their stages."""
    _check_aligned(p, q)
    site = p.site
    cat = site.cat
    if cat.kind != "powerset":
        raise MonoidalStructureError(
            "combine_alpha needs the canonical decompositions of a powerset base"
        )
    u = p.stage
    fam = {}
    for sl in cat.mors_into(u):
        members = []
        for d in decomp.at(cat.src(sl)):
            left_leg = cat.hom(d.left_stage, u)
            right_leg = cat.hom(d.right_stage, u)
            if not left_leg or not right_leg:
                continue
            if d.left in p.family[left_leg[0]] and d.right in q.family[right_leg[0]]:
                members.append(d)
        fam[sl] = frozenset(members)
    return KripkePredicate(decomp, site, u, fam)


# -- sampling (deterministic, for the law suites) -----------------------------


def random_closed_predicate(rng, resource, site, stage) -> KripkePredicate:
    """Closure of a uniformly sampled family: a valid subsheaf predicate."""
    cat = site.cat
    fam = {}
    for p in cat.mors_into(stage):
        xs = [x for x in resource.at(cat.src(p)) if rng.random() < 0.5]
        fam[p] = frozenset(xs)
    return KripkePredicate(
        resource, site, stage, _close(resource, site, stage, fam)
    )
