"""Probabilistic separation at finite scale: probability spaces with
exact rational measures, pullback along surjections, distribution atoms,
and the independence-based separating conjunction.

The star search runs over pairs of partitions of the sample set rather
than raw surjection pairs: a surjection enters the semantics only
through its fibre partition and the transported measure, so canonical
quotient maps (blocks labelled by least elements) are reconstructed for
the witness.  Component sigma-algebras are discrete, the maximal choice
compatible with checking variable measurability on the components; the
partition-valued alternative would thread each component's algebra
through the recursion instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    NotMeasurableError,
    PslBoundError,
    UnknownIdentifierError,
)
from .seplogic import And, Bottom, DistAtom, Imp, Or, Star, Top

DEFAULT_SPACE_BOUND = 6


@dataclass(frozen=True)
class ProbSpace:
    """A probability space on the canonical sample set {1..size}.

    `blocks` is a partition generating the sigma-algebra, ordered by
    least element; `measure` assigns each block an exact rational, and
    the measures must sum to exactly 1.
    """

    size: int
    blocks: tuple
    measure: tuple

    def __post_init__(self):
        seen = set()
        for block in self.blocks:
            if not block or tuple(sorted(block)) != block:
                raise ValueError(f"block {block!r} must be nonempty and sorted")
            seen.update(block)
        if seen != set(range(1, self.size + 1)):
            raise ValueError("blocks must partition the sample set")
        if sum(len(b) for b in self.blocks) != self.size:
            raise ValueError("blocks overlap")
        if tuple(sorted(self.blocks, key=lambda b: b[0])) != self.blocks:
            raise ValueError("blocks must be ordered by least element")
        for p in self.measure:
            if not isinstance(p, Fraction) or p < 0:
                raise ValueError("measures must be non-negative Fractions")
        if sum(self.measure, Fraction(0)) != 1:
            raise ValueError("block measures must sum to exactly 1")

    @staticmethod
    def of(size, block_iter, measure_iter):
        measures = []
        for m in measure_iter:
            if isinstance(m, float):
                raise ValueError("measures must be exact rationals, not floats")
            measures.append(Fraction(m))
        pairs = sorted(
            zip((tuple(sorted(b)) for b in block_iter), measures),
            key=lambda bm: bm[0][0],
        )
        return ProbSpace(size, tuple(b for b, _ in pairs), tuple(m for _, m in pairs))

    @staticmethod
    def discrete(weights):
        n = len(weights)
        return ProbSpace.of(n, [(i,) for i in range(1, n + 1)], weights)

    @staticmethod
    def uniform(n):
        return ProbSpace.discrete([Fraction(1, n)] * n)

    def block_of(self, point):
        for block, p in zip(self.blocks, self.measure):
            if point in block:
                return block, p
        raise KeyError(point)

    def measurable(self, subset) -> bool:
        subset = set(subset)
        return all(
            set(b) <= subset or not (set(b) & subset) for b in self.blocks
        )

    def mass(self, subset) -> Fraction:
        subset = set(subset)
        if not self.measurable(subset):
            raise NotMeasurableError(f"{sorted(subset)!r} is not measurable")
        return sum(
            (p for b, p in zip(self.blocks, self.measure) if set(b) <= subset),
            Fraction(0),
        )

    def sort_key(self):
        return (self.size, self.blocks, tuple((m.numerator, m.denominator) for m in self.measure))


@dataclass(frozen=True)
class RandomVariable:
    """A total map {1..size} -> Z given by its value tuple."""

    values: tuple

    @property
    def size(self):
        return len(self.values)

    def __call__(self, point):
        return self.values[point - 1]

    def fibre_partition(self):
        fibres = {}
        for point in range(1, self.size + 1):
            fibres.setdefault(self(point), []).append(point)
        return tuple(sorted((tuple(v) for v in fibres.values()), key=lambda b: b[0]))


def pullback_space(f, sp: ProbSpace) -> ProbSpace:
    """Transport a space backward along a surjection f: S' ->> S.

    f is the value tuple of the surjection; blocks become preimages and
    keep their measures.
    """
    n_prime = len(f)
    if set(f) != set(range(1, sp.size + 1)):
        raise ValueError(f"{f!r} is not a surjection onto 1..{sp.size}")
    blocks = []
    measures = []
    for block, p in zip(sp.blocks, sp.measure):
        pre = tuple(i for i in range(1, n_prime + 1) if f[i - 1] in block)
        blocks.append(pre)
        measures.append(p)
    return ProbSpace.of(n_prime, blocks, measures)


def law_of(x: RandomVariable, sp: ProbSpace) -> dict:
    """The induced distribution of X under the measure; X must be
    constant on every block."""
    if x.size != sp.size:
        raise ValueError("variable and space have different sample sets")
    law = {}
    for block, p in zip(sp.blocks, sp.measure):
        vals = {x(i) for i in block}
        if len(vals) > 1:
            raise NotMeasurableError(
                f"variable takes {sorted(vals)!r} on one block", block=block
            )
        (v,) = vals
        law[v] = law.get(v, Fraction(0)) + p
    return {v: p for v, p in sorted(law.items()) if p != 0}


def independence_oracle(sp: ProbSpace, x: RandomVariable, y: RandomVariable) -> bool:
    """Exact check that the joint law factorises into the marginals."""
    law_x = law_of(x, sp)
    law_y = law_of(y, sp)
    for a in law_x:
        for b in law_y:
            joint = sum(
                (
                    p
                    for block, p in zip(sp.blocks, sp.measure)
                    if x(block[0]) == a and y(block[0]) == b
                ),
                Fraction(0),
            )
            if joint != law_x[a] * law_y[b]:
                return False
    return True


# -- the separating conjunction search ---------------------------------------


def set_partitions(items):
    """All partitions of a finite list, in a canonical deterministic order."""
    items = list(items)
    if not items:
        yield ()
        return

    def rec(points):
        if not points:
            yield []
            return
        head, tail = points[0], points[1:]
        for part in rec(tail):
            for i in range(len(part)):
                yield part[:i] + [[head] + part[i]] + part[i + 1 :]
            yield [[head]] + part

    canon_all = {
        tuple(sorted((tuple(sorted(b)) for b in part), key=lambda b: b[0]))
        for part in rec(items)
    }
    yield from sorted(canon_all)


def _quotient_surjection(partition):
    """The canonical quotient map: block index by least element order."""
    labels = {}
    for idx, block in enumerate(partition, start=1):
        for point in block:
            labels[point] = idx
    return tuple(labels[i] for i in range(1, len(labels) + 1))


_FACTORISATION_CACHE = {}


def _factorising_pairs(sp: ProbSpace):
    """All partition pairs realising the space as a product: every block
    intersection is nonempty and measurable, and the measure of each
    intersection is the product of the marginal masses.  Cached per
    space: the star search revisits the same space many times."""
    if sp in _FACTORISATION_CACHE:
        return _FACTORISATION_CACHE[sp]
    parts = list(set_partitions(range(1, sp.size + 1)))
    out = []
    for p1 in parts:
        for p2 in parts:
            ok = True
            marg1 = {}
            marg2 = {}
            for b1 in p1:
                for b2 in p2:
                    inter = set(b1) & set(b2)
                    if not inter or not sp.measurable(inter):
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            for b1 in p1:
                marg1[b1] = sp.mass(b1)
            for b2 in p2:
                marg2[b2] = sp.mass(b2)
            for b1 in p1:
                for b2 in p2:
                    if sp.mass(set(b1) & set(b2)) != marg1[b1] * marg2[b2]:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                out.append((p1, p2))
    _FACTORISATION_CACHE[sp] = out
    return out


def _descend_variables(variables, partition):
    """Variables constant on every block descend to the quotient space;
    the rest are kept as None so atoms mentioning them are false on the
    component rather than undeclared."""
    out = {}
    for name, x in variables.items():
        if x is None:
            out[name] = None
            continue
        vals = []
        ok = True
        for block in partition:
            vs = {x(i) for i in block}
            if len(vs) > 1:
                ok = False
                break
            vals.append(vs.pop())
        out[name] = RandomVariable(tuple(vals)) if ok else None
    return out


@dataclass
class PslModel:
    """A probabilistic model: named spaces, shared variables, formulas."""

    spaces: dict
    variables: dict
    formulas: dict
    bound: int = DEFAULT_SPACE_BOUND
    name: str = "psl-model"

    def space(self, space_name):
        if space_name not in self.spaces:
            raise UnknownIdentifierError(f"unknown space {space_name!r}")
        return self.spaces[space_name]

    def variables_for(self, sp: ProbSpace):
        return {
            n: x for n, x in self.variables.items() if x.size == sp.size
        }


@dataclass
class PslResult:
    result: bool
    witness: dict | None = None

    def as_dict(self):
        out = {"result": self.result}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def psl_sat(sp: ProbSpace, phi, variables, bound=DEFAULT_SPACE_BOUND) -> PslResult:
    """Satisfaction over a probability space.

    Distribution atoms compare the exact law; star searches for a pair
    of quotients onto whose product the measure factorises, with the
    sub-formulas evaluated on the components under discrete algebras;
    the propositional connectives are classical at a fixed space.
    """
    if sp.size > bound:
        raise PslBoundError(f"sample space of size {sp.size} exceeds bound {bound}")
    if isinstance(phi, Top):
        return PslResult(True)
    if isinstance(phi, Bottom):
        return PslResult(False)
    if isinstance(phi, And):
        left = psl_sat(sp, phi.left, variables, bound)
        right = psl_sat(sp, phi.right, variables, bound)
        return PslResult(left.result and right.result)
    if isinstance(phi, Or):
        left = psl_sat(sp, phi.left, variables, bound)
        right = psl_sat(sp, phi.right, variables, bound)
        return PslResult(left.result or right.result)
    if isinstance(phi, Imp):
        left = psl_sat(sp, phi.left, variables, bound)
        right = psl_sat(sp, phi.right, variables, bound)
        return PslResult((not left.result) or right.result)
    if isinstance(phi, DistAtom):
        if phi.var not in variables:
            raise UnknownIdentifierError(f"unknown variable {phi.var!r}")
        x = variables[phi.var]
        if x is None:  # declared but does not descend to this component
            return PslResult(False)
        try:
            law = law_of(x, sp)
        except NotMeasurableError:
            return PslResult(False)
        return PslResult(law == phi.law())
    if isinstance(phi, Star):
        for p1, p2 in _factorising_pairs(sp):
            vars1 = _descend_variables(variables, p1)
            vars2 = _descend_variables(variables, p2)
            sp1 = ProbSpace.discrete([sp.mass(b) for b in p1])
            sp2 = ProbSpace.discrete([sp.mass(b) for b in p2])
            left = psl_sat(sp1, phi.left, vars1, bound)
            if not left.result:
                continue
            right = psl_sat(sp2, phi.right, vars2, bound)
            if right.result:
                return PslResult(
                    True,
                    witness={
                        "q1": list(_quotient_surjection(p1)),
                        "q2": list(_quotient_surjection(p2)),
                        "blocks1": [list(b) for b in p1],
                        "blocks2": [list(b) for b in p2],
                        "marginal1": [str(sp.mass(b)) for b in p1],
                        "marginal2": [str(sp.mass(b)) for b in p2],
                    },
                )
        return PslResult(False)
    raise TypeError(f"formula {phi!r} is not a probabilistic formula")


# -- the probability presheaf over the surjection site ------------------------


def _forced_measure_glue(cat):
    """Amalgamation rule for probability spaces: the measure on the
    cover's target is forced blockwise through any leg whose blocks are
    saturated (unions of fibres); None when no leg forces a space."""

    def glue(target, legs):
        for f, sp in legs.items():
            fvals = f[3]
            blocks = []
            measures = []
            ok = True
            for block, m in zip(sp.blocks, sp.measure):
                image = tuple(sorted({fvals[i - 1] for i in block}))
                preimage = tuple(
                    i for i in range(1, len(fvals) + 1) if fvals[i - 1] in image
                )
                if preimage != block:
                    ok = False
                    break
                blocks.append(image)
                measures.append(m)
            if ok:
                return ProbSpace.of(target, blocks, measures)
        return None

    return glue


def full_probability_presheaf(cat):
    """The unrestricted probability presheaf: stages are not enumerable
    (rational measures form a continuum), so the sheaf condition is
    checked per supplied family and amalgamation uses the forced
    measure."""
    from .presheaf import Presheaf

    def spaces(n):
        raise AssertionError("unreachable: stages are not enumerable")

    def restr(f, sp):
        return pullback_space(f[3], sp)

    return Presheaf(
        cat,
        spaces,
        restr,
        name="P",
        glue_fn=_forced_measure_glue(cat),
        enumerable=False,
    )


def probability_presheaf(cat, denominator=4):
    """Spaces on {1..n} whose block measures are multiples of 1/d.

    Pullback preserves the multiset of block measures, so this is a
    restriction-closed finite fragment of the full probability presheaf,
    enumerable stage by stage for the stage-indexed Kripke semantics.
    """
    from .presheaf import Presheaf

    def spaces(n):
        out = []
        for blocks in set_partitions(range(1, n + 1)):
            k = len(blocks)
            for combo in _compositions(denominator, k):
                measure = [Fraction(c, denominator) for c in combo]
                out.append(ProbSpace.of(n, blocks, measure))
        return out

    def restr(f, sp):
        return pullback_space(f[3], sp)

    return Presheaf(cat, spaces, restr, name=f"P[1/{denominator}]")


def _compositions(total, k):
    if k == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, k - 1):
            yield (head,) + tail


def dist_atom_kripke(pres, site, stage, x: RandomVariable, dist) -> "KripkePredicate":
    """The distribution atom as a stage-indexed predicate over the
    probability presheaf: at a slice p: T ->> S the transported variable
    X.p must be measurable with the stated law."""
    from .pred import KripkePredicate

    cat = site.cat
    law_target = {v: p for v, p in dist if p != 0}
    fam = {}
    for p in cat.mors_into(stage):
        members = []
        transported = RandomVariable(tuple(x(p[3][i - 1]) for i in range(1, p[1] + 1)))
        for sp in pres.at(cat.src(p)):
            try:
                members_law = law_of(transported, sp)
            except NotMeasurableError:
                continue
            if members_law == law_target:
                members.append(sp)
        fam[p] = frozenset(members)
    return KripkePredicate(pres, site, stage, fam)


def kripke_cross_check(max_size=3, denominator=4, samples=40, seed=3) -> int:
    """Compare the classical evaluation with the stage-indexed Kripke
    semantics (meet/implication over distribution atoms) on sampled
    spaces; returns the number of comparisons made, raising on mismatch."""
    import random

    from .fincat import build_finsurj_category
    from .pred import implication, meet
    from .site import Site, build_coverage, trivial_coverage

    cat, mon = build_finsurj_category(max_size)
    if max_size <= 2:
        cov = build_coverage(cat, "atomic")
    else:
        # the truncated surjection category fails cospan completion at
        # size 3, so only the always-valid trivial coverage is available
        cov = trivial_coverage(cat)
    site = Site(cat, cov, mon)
    pres = probability_presheaf(cat, denominator)
    rng = random.Random(seed)
    checked = 0
    for stage in cat.objects:
        spaces = pres.at(stage)
        for _ in range(samples):
            sp = spaces[rng.randrange(len(spaces))]
            x = RandomVariable(tuple(rng.randrange(2) for _ in range(stage)))
            dist_pairs = tuple(sorted(law_of_discrete(x, stage).items()))
            variables = {"X": x}
            atom = DistAtom("X", dist_pairs)
            atom_pred = dist_atom_kripke(pres, site, stage, x, dist_pairs)
            both = meet(atom_pred, atom_pred)
            imp_pred = implication(atom_pred, atom_pred)
            ident = cat.id(stage)
            classical = psl_sat(sp, atom, variables)
            assert (sp in atom_pred.family[ident]) == classical.result
            assert (sp in both.family[ident]) == psl_sat(
                sp, And(atom, atom), variables
            ).result
            assert sp in imp_pred.family[ident]  # P -> P is Kripke-valid
            checked += 3
    return checked


def law_of_discrete(x: RandomVariable, n: int) -> dict:
    """Law of a variable under the uniform discrete space on {1..n}."""
    return law_of(x, ProbSpace.uniform(n))
