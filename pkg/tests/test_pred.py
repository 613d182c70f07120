import random

import pytest

from sheafsep.day import Decomp, build_memory_monoid, day_decomp
from sheafsep.errors import IncompatibleFamilyError
from sheafsep.fincat import build_powerset_category, incl
from sheafsep.pred import (
    KripkePredicate,
    SheafMorphism,
    bottom_predicate,
    combine_alpha,
    direct_image,
    glue_predicates,
    implication,
    join,
    lattice_op,
    meet,
    random_closed_predicate,
    raw_image,
    reindex_preimage,
    restrict_predicate,
    top_predicate,
    validate_predicate,
    validate_sheaf_morphism,
)
from sheafsep.presheaf import Heap, build_resource_sheaf
from sheafsep.site import Site, build_coverage


def make_site(locs, vals=(0, 1)):
    cat, mon = build_powerset_category(locs)
    cov = build_coverage(cat, "downward-closed")
    site = Site(cat, cov, mon)
    mp = build_resource_sheaf(cat, "partial-memory", values=vals)
    return site, mp


@pytest.fixture(scope="module")
def site1():
    return make_site({"x"})


@pytest.fixture(scope="module")
def site2():
    return make_site({"x", "y"})


def singleton_pred(site, mp, stage, v, heap):
    """The downward closure of a single heap at a sub-stage."""
    cat = site.cat
    fam = {p: set() for p in cat.mors_into(stage)}
    fam[cat.hom(v, stage)[0]].add(heap)
    from sheafsep.pred import _close

    return KripkePredicate(mp, site, stage, _close(mp, site, stage, fam))


def test_meet_with_top_is_identity(site1):
    site, mp = site1
    stage = ("x",)
    p = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": 0}))
    assert meet(p, top_predicate(mp, site, stage)) == p


def test_join_with_bottom_is_identity(site1):
    site, mp = site1
    stage = ("x",)
    p = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": 0}))
    assert join(bottom_predicate(mp, site, stage), p) == p


def test_join_of_two_singletons(site1):
    site, mp = site1
    stage = ("x",)
    p0 = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": 0}))
    p1 = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": 1}))
    j = join(p0, p1)
    assert j.at_subset(("x",)) == frozenset(
        {Heap.of(("x",), {"x": 0}), Heap.of(("x",), {"x": 1})}
    )
    assert j.at_subset(()) == frozenset({Heap((), ())})


def test_lattice_op_dispatch(site1):
    site, mp = site1
    stage = ("x",)
    t = lattice_op("top", resource=mp, site=site, stage=stage)
    b = lattice_op("bottom", resource=mp, site=site, stage=stage)
    assert lattice_op("meet", t, b) == b
    assert lattice_op("join", t, b) == t


def test_implication_vacuous_and_reflexive(site1):
    site, mp = site1
    stage = ("x",)
    p = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": 0}))
    bot = bottom_predicate(mp, site, stage)
    assert implication(bot, p) == top_predicate(mp, site, stage)
    assert implication(p, p) == top_predicate(mp, site, stage)


def nonstrict_pointsto(site, mp, stage, loc, val):
    cat = site.cat
    fam = {}
    for p in cat.mors_into(stage):
        v = cat.src(p)
        fam[p] = frozenset(
            s for s in mp.at(v) if loc not in v or s.get(loc) == val
        )
    return KripkePredicate(mp, site, stage, fam)


def test_implication_to_bottom_is_kripke_negation(site1):
    """not (x ~> 0) is empty at {x}: every heap restricts to the empty
    heap, which satisfies the antecedent at the empty stage."""
    site, mp = site1
    stage = ("x",)
    atom = nonstrict_pointsto(site, mp, stage, "x", 0)
    neg = implication(atom, bottom_predicate(mp, site, stage))
    assert neg.at_subset(("x",)) == frozenset()
    assert neg.at_subset(()) == frozenset()


def test_residuation_exhaustive_single_location(site1):
    """meet(P,Q) <= R iff P <= (Q -> R), over every predicate triple."""
    site, mp = site1
    stage = ("x",)
    cat = site.cat
    preds = all_predicates(site, mp, stage)
    assert len(preds) == 9
    for p in preds:
        for q in preds:
            for r in preds:
                lhs = meet(p, q).issubset(r)
                rhs = p.issubset(implication(q, r))
                assert lhs == rhs


def all_predicates(site, mp, stage):
    """Enumerate every restriction-closed, locally-closed family."""
    from itertools import product as iproduct

    cat = site.cat
    slice_objs = cat.mors_into(stage)
    pools = [
        [frozenset(c) for c in _subsets_of(mp.at(cat.src(p)))] for p in slice_objs
    ]
    out = []
    for combo in iproduct(*pools):
        fam = dict(zip(slice_objs, combo))
        cand = KripkePredicate(mp, site, stage, fam)
        if validate_predicate(cand).ok:
            out.append(cand)
    return out


def _subsets_of(xs):
    out = [()]
    for x in xs:
        out += [s + (x,) for s in out]
    return out


def test_residuation_sampled_two_locations(site2):
    site, mp = site2
    stage = ("x", "y")
    rng = random.Random(420)
    for _ in range(120):
        p = random_closed_predicate(rng, mp, site, stage)
        q = random_closed_predicate(rng, mp, site, stage)
        r = random_closed_predicate(rng, mp, site, stage)
        assert meet(p, q).issubset(r) == p.issubset(implication(q, r))


def test_distributivity_sampled(site2):
    site, mp = site2
    stage = ("x", "y")
    rng = random.Random(7)
    for _ in range(60):
        p = random_closed_predicate(rng, mp, site, stage)
        q = random_closed_predicate(rng, mp, site, stage)
        r = random_closed_predicate(rng, mp, site, stage)
        assert meet(p, join(q, r)) == join(meet(p, q), meet(p, r))


def total_mult_morphism(site, mp, variant="total"):
    mon = build_memory_monoid(mp, variant)
    decomp = day_decomp(mp, mp, site.monoidal)
    components = {}
    for a in site.cat.objects:
        components[a] = {
            d: mon.apply(d) for d in decomp.at(a) if mon.apply(d) is not None
        }
    return decomp, SheafMorphism(decomp, mp, components, name=f"mult[{variant}]")


def test_mult_is_natural(site2):
    site, mp = site2
    _, alpha = total_mult_morphism(site, mp)
    assert validate_sheaf_morphism(alpha).ok
    for variant in ("weak-partial", "strong-partial"):
        _, alpha = total_mult_morphism(site, mp, variant)
        assert validate_sheaf_morphism(alpha).ok


def test_preimage_rejects_non_natural_map(site2):
    from sheafsep.errors import NaturalityError

    site, mp = site2
    stage = ("x", "y")
    swap01 = {0: 1, 1: 0, None: None}
    components = {
        a: {
            x: (
                Heap(x.locations, tuple(swap01[v] for v in x.values))
                if a == stage  # tamper only the top component
                else x
            )
            for x in mp.at(a)
        }
        for a in site.cat.objects
    }
    crooked = SheafMorphism(mp, mp, components, name="crooked")
    assert not validate_sheaf_morphism(crooked).ok
    q = top_predicate(mp, site, stage)
    with pytest.raises(NaturalityError):
        reindex_preimage(crooked, q, check_naturality=True)


def test_preimage_identity_and_top(site1):
    site, mp = site1
    stage = ("x",)
    ident = SheafMorphism(
        mp, mp, {a: {x: x for x in mp.at(a)} for a in site.cat.objects}, name="id"
    )
    q = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": 0}))
    assert reindex_preimage(ident, q) == q
    assert reindex_preimage(ident, top_predicate(mp, site, stage)) == top_predicate(
        mp, site, stage
    )


def test_preimage_of_conflict_heap_under_total_mult(site1):
    site, mp = site1
    stage = ("x",)
    decomp, alpha = total_mult_morphism(site, mp)
    q = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": None}))
    pre = reindex_preimage(alpha, q)
    conflict = Decomp(
        ("x",), ("x",), ("x",),
        Heap.of(("x",), {"x": 0}), Heap.of(("x",), {"x": 1}),
    )
    assert conflict in pre.at_subset(("x",))


def test_direct_image_closes_raw_image(site2):
    site, mp = site2
    stage = ("x", "y")
    decomp, alpha = total_mult_morphism(site, mp)
    rng = random.Random(31)
    for _ in range(20):
        p = random_closed_predicate(rng, decomp, site, stage)
        raw = raw_image(alpha, p)
        closed = direct_image(alpha, p)
        assert raw.issubset(closed)


def test_image_identity_and_bottom(site1):
    site, mp = site1
    stage = ("x",)
    ident = SheafMorphism(
        mp, mp, {a: {x: x for x in mp.at(a)} for a in site.cat.objects}, name="id"
    )
    p = singleton_pred(site, mp, stage, ("x",), Heap.of(("x",), {"x": 1}))
    assert direct_image(ident, p) == p
    assert direct_image(ident, bottom_predicate(mp, site, stage)) == bottom_predicate(
        mp, site, stage
    )


def test_existential_image_of_decomposition_predicate(site1):
    site, mp = site1
    stage = ("x",)
    decomp, alpha = total_mult_morphism(site, mp)
    d = Decomp(("x",), ("x",), (), Heap.of(("x",), {"x": 0}), Heap((), ()))
    fam = {p: set() for p in site.cat.mors_into(stage)}
    fam[site.cat.id(stage)].add(d)
    from sheafsep.pred import _close

    p = KripkePredicate(decomp, site, stage, _close(decomp, site, stage, fam))
    img = direct_image(alpha, p)
    assert Heap.of(("x",), {"x": 0}) in img.at_subset(("x",))


def test_galois_connection_sampled(site2):
    site, mp = site2
    stage = ("x", "y")
    decomp, alpha = total_mult_morphism(site, mp)
    rng = random.Random(99)
    for _ in range(60):
        p = random_closed_predicate(rng, decomp, site, stage)
        q = random_closed_predicate(rng, mp, site, stage)
        assert direct_image(alpha, p).issubset(q) == p.issubset(
            reindex_preimage(alpha, q)
        )


def test_preimage_preserves_meets_and_top(site2):
    site, mp = site2
    stage = ("x", "y")
    decomp, alpha = total_mult_morphism(site, mp)
    rng = random.Random(5)
    for _ in range(30):
        q1 = random_closed_predicate(rng, mp, site, stage)
        q2 = random_closed_predicate(rng, mp, site, stage)
        assert reindex_preimage(alpha, meet(q1, q2)) == meet(
            reindex_preimage(alpha, q1), reindex_preimage(alpha, q2)
        )
    assert reindex_preimage(alpha, top_predicate(mp, site, stage)) == top_predicate(
        decomp, site, stage
    )


def test_image_preserves_joins_and_bottom(site2):
    site, mp = site2
    stage = ("x", "y")
    decomp, alpha = total_mult_morphism(site, mp)
    rng = random.Random(6)
    for _ in range(30):
        p1 = random_closed_predicate(rng, decomp, site, stage)
        p2 = random_closed_predicate(rng, decomp, site, stage)
        assert direct_image(alpha, join(p1, p2)) == join(
            direct_image(alpha, p1), direct_image(alpha, p2)
        )
    assert direct_image(alpha, bottom_predicate(decomp, site, stage)) == bottom_predicate(
        mp, site, stage
    )


def test_glue_two_compatible_parts(site2):
    site, mp = site2
    top = ("x", "y")
    cat = site.cat
    from sheafsep.site import generate_sieve

    cover = generate_sieve(cat, top, [incl(("x",), top), incl(("y",), top)])
    px = nonstrict_pointsto(site, mp, ("x",), "x", 0)
    py = nonstrict_pointsto(site, mp, ("y",), "y", 1)
    glued = glue_predicates(
        site, mp, cover, {incl(("x",), top): px, incl(("y",), top): py}
    )
    assert restrict_predicate(glued, incl(("x",), top)) == px
    assert restrict_predicate(glued, incl(("y",), top)) == py
    # the glued predicate at the top stage is forced by the cover
    want = frozenset(
        s for s in mp.at(top) if s.get("x") == 0 and s.get("y") == 1
    )
    assert glued.at_subset(top) == want


def test_glue_over_maximal_sieve_returns_part(site1):
    site, mp = site1
    stage = ("x",)
    from sheafsep.site import maximal_sieve

    p = nonstrict_pointsto(site, mp, stage, "x", 0)
    cover = maximal_sieve(site.cat, stage)
    glued = glue_predicates(site, mp, cover, {site.cat.id(stage): p})
    assert glued == p


def test_glue_rejects_incompatible_parts(site2):
    site, mp = site2
    top = ("x", "y")
    cat = site.cat
    from sheafsep.site import generate_sieve

    cover = generate_sieve(cat, top, [incl(("x",), top), incl(("y",), top)])
    px = nonstrict_pointsto(site, mp, ("x",), "x", 0)
    py = nonstrict_pointsto(site, mp, ("y",), "y", 1)
    # tamper the empty-stage family of one part to clash at the overlap
    bad_fam = dict(py.family)
    bad_fam[incl((), ("y",))] = frozenset()
    py_bad = KripkePredicate(mp, site, ("y",), bad_fam)
    with pytest.raises(IncompatibleFamilyError):
        glue_predicates(
            site, mp, cover, {incl(("x",), top): px, incl(("y",), top): py_bad}
        )


def test_glued_predicate_is_unique_by_exhaustion(site1):
    """Among all subsheaf predicates, exactly one restricts to the parts."""
    site, mp = site1
    stage = ("x",)
    from sheafsep.site import maximal_sieve

    part = nonstrict_pointsto(site, mp, stage, "x", 0)
    cover = maximal_sieve(site.cat, stage)
    glued = glue_predicates(site, mp, cover, {site.cat.id(stage): part})
    matches = [
        cand
        for cand in all_predicates(site, mp, stage)
        if all(
            restrict_predicate(cand, f).family == restrict_predicate(glued, f).family
            for f in cover.members
        )
    ]
    assert len(matches) == 1 and matches[0] == glued


def test_combine_alpha_top_and_bottom(site2):
    site, mp = site2
    stage = ("x", "y")
    decomp = day_decomp(mp, mp, site.monoidal)
    t = top_predicate(mp, site, stage)
    b = bottom_predicate(mp, site, stage)
    assert combine_alpha(t, t, decomp) == top_predicate(decomp, site, stage)
    assert combine_alpha(t, b, decomp) == bottom_predicate(decomp, site, stage)


def test_combine_alpha_pointsto_pair(site2):
    site, mp = site2
    stage = ("x", "y")
    decomp = day_decomp(mp, mp, site.monoidal)
    # allocated atoms: empty below their location
    def alloc(loc, val):
        cat = site.cat
        fam = {}
        for p in cat.mors_into(stage):
            v = cat.src(p)
            fam[p] = frozenset(
                s for s in mp.at(v) if loc in v and s.get(loc) == val
            )
        return KripkePredicate(mp, site, stage, fam)

    combined = combine_alpha(alloc("x", 0), alloc("y", 1), decomp)
    d = Decomp(
        stage, ("x",), ("y",),
        Heap.of(("x",), {"x": 0}), Heap.of(("y",), {"y": 1}),
    )
    assert d in combined.at_subset(stage)


def test_allocated_atom_breaks_restriction_closure_as_documented(site1):
    site, mp = site1
    stage = ("x",)
    cat = site.cat
    fam = {
        p: frozenset(
            s for s in mp.at(cat.src(p)) if "x" in cat.src(p) and s.get("x") == 0
        )
        for p in cat.mors_into(stage)
    }
    alloc = KripkePredicate(mp, site, stage, fam)
    rep = validate_predicate(alloc)
    assert "restriction" in rep.kinds()
