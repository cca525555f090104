"""Loop-free pedigrees with competing-risk phenotypes and partial genotypes.

A pedigree file is UTF-8 delimited text (tab or comma) with a header row and
the columns::

    family_id, individual_id, father_id, mother_id, sex, genotype, age, cause, proband

plus an optional ``counselee`` column used by risk prediction. Empty parent
ids mark founders, ``genotype`` is ``0``, ``1`` or ``NA``, ``sex`` is ``M`` or
``F`` and exactly one member per family has ``proband = 1``.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, NamedTuple, TextIO

from .errors import PedigreeError

COLUMNS = (
    "family_id",
    "individual_id",
    "father_id",
    "mother_id",
    "sex",
    "genotype",
    "age",
    "cause",
    "proband",
)
MISSING_GENOTYPE = ("NA", "", ".", "nan")


@dataclass(frozen=True)
class Phenotype:
    """Observed competing-risk outcome ``(Y, D)``; ``cause == 0`` is censored."""

    time: float
    cause: int = 0


@dataclass(frozen=True)
class Individual:
    id: str
    family_id: str
    father: str | None
    mother: str | None
    sex: str
    genotype: int | None
    phenotype: Phenotype
    is_proband: bool = False
    is_counselee: bool = False

    @property
    def male(self) -> int:
        """Sex covariate ``X`` (1 = male, 0 = female)."""
        return 1 if self.sex == "M" else 0

    @property
    def is_founder(self) -> bool:
        return self.father is None and self.mother is None


class Mating(NamedTuple):
    father: str
    mother: str
    children: tuple[str, ...]


class Violation(NamedTuple):
    code: str
    individual: str | None
    message: str


@dataclass(frozen=True)
class Pedigree:
    family_id: str
    members: tuple[Individual, ...]
    rows: tuple[int, ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, member_id):
        return member_id in self.index

    def __getitem__(self, member_id) -> Individual:
        return self.members[self.index[member_id]]

    @cached_property
    def index(self) -> dict[str, int]:
        return {m.id: i for i, m in enumerate(self.members)}

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    @property
    def proband(self) -> Individual:
        probands = [m for m in self.members if m.is_proband]
        if len(probands) != 1:
            raise PedigreeError(f"expected one proband, found {len(probands)}", self.family_id)
        return probands[0]

    @property
    def founders(self) -> list[Individual]:
        return [m for m in self.members if m.is_founder]

    @cached_property
    def matings(self) -> tuple[Mating, ...]:
        """Nuclear families in order of their first child's appearance."""
        order: dict[tuple[str, str], list[str]] = {}
        for m in self.members:
            if not m.is_founder:
                order.setdefault((m.father, m.mother), []).append(m.id)
        return tuple(Mating(f, mo, tuple(ch)) for (f, mo), ch in order.items())

    def children_of(self, member_id) -> list[str]:
        return [m.id for m in self.members if member_id in (m.father, m.mother)]

    def spouses_of(self, member_id) -> list[str]:
        out = []
        for mat in self.matings:
            if mat.father == member_id and mat.mother not in out:
                out.append(mat.mother)
            elif mat.mother == member_id and mat.father not in out:
                out.append(mat.father)
        return out

    def topological_order(self) -> list[str]:
        """Member ids with every parent preceding its children."""
        order = _topological_order(self.members)
        if order is None:
            raise PedigreeError("pedigree contains a member who is their own ancestor", self.family_id)
        return order

    def with_members(self, members: Iterable[Individual]) -> "Pedigree":
        return Pedigree(self.family_id, tuple(members))

    def row_of(self, member_id) -> int | None:
        if self.rows is None or member_id not in self.index:
            return None
        return self.rows[self.index[member_id]]


def _topological_order(members) -> list[str] | None:
    ids = {m.id for m in members}
    parents = {
        m.id: [p for p in (m.father, m.mother) if p is not None and p in ids] for m in members
    }
    placed: list[str] = []
    done: set[str] = set()
    remaining = [m.id for m in members]
    while remaining:
        nxt = [i for i in remaining if all(p in done for p in parents[i])]
        if not nxt:
            return None
        for i in nxt:
            done.add(i)
            placed.append(i)
        remaining = [i for i in remaining if i not in done]
    return placed


class _DisjointSet:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def validate(p: Pedigree, n_causes: int | None = None) -> list[Violation]:
    """Return every structural invariant the pedigree violates (empty if valid)."""
    out: list[Violation] = []
    seen: set[str] = set()
    for m in p.members:
        if m.id in seen:
            out.append(Violation("duplicate-id", m.id, f"duplicate individual id {m.id!r}"))
        seen.add(m.id)
    byid = {m.id: m for m in p.members}

    for m in p.members:
        if (m.father is None) != (m.mother is None):
            out.append(Violation("half-founder", m.id, f"{m.id!r} has exactly one parent listed"))
        for role, pid, want in (("father", m.father, "M"), ("mother", m.mother, "F")):
            if pid is None:
                continue
            if pid not in byid:
                out.append(Violation("missing-parent", m.id, f"{role} {pid!r} of {m.id!r} not in family"))
            elif byid[pid].sex != want:
                out.append(Violation("parent-sex", m.id, f"{role} {pid!r} of {m.id!r} has sex {byid[pid].sex}"))
        if m.sex not in ("M", "F"):
            out.append(Violation("sex", m.id, f"sex of {m.id!r} must be M or F"))
        if m.genotype not in (None, 0, 1):
            out.append(Violation("genotype", m.id, f"genotype of {m.id!r} must be 0, 1 or missing"))
        if not m.phenotype.time >= 0:
            out.append(Violation("time", m.id, f"negative or undefined age for {m.id!r}"))
        c = m.phenotype.cause
        if c < 0 or (n_causes is not None and c > n_causes):
            out.append(Violation("cause", m.id, f"cause code {c} of {m.id!r} out of range"))

    n_probands = sum(m.is_proband for m in p.members)
    if n_probands != 1:
        out.append(Violation("proband", None, f"family has {n_probands} probands, expected 1"))

    if _topological_order(p.members) is None:
        out.append(Violation("own-ancestor", None, "a member is their own ancestor"))
        return out
    if any(v.code in ("missing-parent", "half-founder", "duplicate-id") for v in out):
        return out

    # marriage-node graph: persons and matings; loop-free connected <=> a tree
    ds = _DisjointSet()
    for m in p.members:
        ds.find(("p", m.id))
    for mat in p.matings:
        node = ("m", mat.father, mat.mother)
        for person in (mat.father, mat.mother, *mat.children):
            if not ds.union(("p", person), node):
                out.append(Violation("loop", person, f"pedigree loop through {person!r}"))
    roots = {ds.find(("p", m.id)) for m in p.members}
    if len(roots) > 1:
        out.append(Violation("disconnected", None, f"family splits into {len(roots)} components"))
    return out


def check(p: Pedigree, n_causes: int | None = None) -> Pedigree:
    """Raise :class:`PedigreeError` on the first violation, else return ``p``."""
    problems = validate(p, n_causes)
    if problems:
        v = problems[0]
        raise PedigreeError(f"{v.code}: {v.message}", p.family_id, p.row_of(v.individual))
    return p


def anterior_posterior_partition(p: Pedigree, pivot: str) -> tuple[frozenset, frozenset]:
    """Split members other than ``pivot`` into those reached through the
    pivot's parents (anterior) and through its spouses and offspring
    (posterior)."""
    if pivot not in p:
        raise PedigreeError(f"pivot {pivot!r} not in pedigree", p.family_id)
    # adjacency of the person/mating bipartite graph
    adj: dict[tuple, list[tuple]] = {("p", m.id): [] for m in p.members}
    for mat in p.matings:
        node = ("m", mat.father, mat.mother)
        adj[node] = []
        for person in (mat.father, mat.mother, *mat.children):
            adj[node].append(("p", person))
            adj[("p", person)].append(node)

    def reach(start):
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v == ("p", pivot) or v in seen:
                    continue
                seen.add(v)
                stack.append(v)
        return {n[1] for n in seen if n[0] == "p"}

    me = p[pivot]
    anterior: set[str] = set()
    if not me.is_founder:
        anterior = reach(("m", me.father, me.mother))
    posterior: set[str] = set()
    for mat in p.matings:
        if pivot in (mat.father, mat.mother):
            posterior |= reach(("m", mat.father, mat.mother))
    return frozenset(anterior), frozenset(posterior)


def _parse_int(value, name, family, row, allowed=None):
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise PedigreeError(f"malformed {name} {value!r}", family, row) from None
    if allowed is not None and out not in allowed:
        raise PedigreeError(f"{name} must be one of {sorted(allowed)}, got {out}", family, row)
    return out


def _read_rows(source) -> tuple[list[str], list[list[str]]]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise PedigreeError("empty pedigree file")
    delim = "\t" if "\t" in lines[0] else ","
    rows = list(csv.reader(lines, delimiter=delim))
    header = [h.strip() for h in rows[0]]
    return header, [[c.strip() for c in r] for r in rows[1:]]


def load_pedigrees(source: TextIO | str | os.PathLike, n_causes: int | None = None) -> list[Pedigree]:
    """Parse and validate a pedigree file; families keep their file order."""
    header, rows = _read_rows(source)
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise PedigreeError(f"missing columns: {', '.join(missing)}", row=1)
    col = {name: header.index(name) for name in header}
    fams: dict[str, list[tuple[int, Individual]]] = {}
    for r, rec in enumerate(rows, start=2):
        if len(rec) != len(header):
            raise PedigreeError(f"expected {len(header)} fields, got {len(rec)}", rec[0] if rec else None, r)
        get = lambda name: rec[col[name]]  # noqa: E731
        fam = get("family_id")
        if not fam or not get("individual_id"):
            raise PedigreeError("empty family or individual id", fam or None, r)
        sex = get("sex").upper()
        if sex not in ("M", "F"):
            raise PedigreeError(f"sex must be M or F, got {get('sex')!r}", fam, r)
        g = get("genotype")
        genotype = None if g in MISSING_GENOTYPE else _parse_int(g, "genotype", fam, r, {0, 1})
        try:
            age = float(get("age"))
        except ValueError:
            raise PedigreeError(f"malformed age {get('age')!r}", fam, r) from None
        if not age >= 0:
            raise PedigreeError(f"age must be nonnegative, got {age}", fam, r)
        cause = _parse_int(get("cause"), "cause", fam, r)
        if cause < 0 or (n_causes is not None and cause > n_causes):
            raise PedigreeError(f"cause code {cause} out of range", fam, r)
        proband = _parse_int(get("proband"), "proband", fam, r, {0, 1})
        counselee = 0
        if "counselee" in col:
            counselee = _parse_int(get("counselee") or "0", "counselee", fam, r, {0, 1})
        ind = Individual(
            id=get("individual_id"),
            family_id=fam,
            father=get("father_id") or None,
            mother=get("mother_id") or None,
            sex=sex,
            genotype=genotype,
            phenotype=Phenotype(age, cause),
            is_proband=bool(proband),
            is_counselee=bool(counselee),
        )
        fams.setdefault(fam, []).append((r, ind))
    out = []
    for fam, recs in fams.items():
        ped = Pedigree(fam, tuple(i for _, i in recs), rows=tuple(r for r, _ in recs))
        out.append(check(ped, n_causes))
    return out


def _fmt_age(x: float) -> str:
    return repr(float(x))


def write_pedigrees(pedigrees: Iterable[Pedigree], dest: TextIO | str | os.PathLike, delimiter: str = "\t",
                    counselee: bool = False) -> None:
    cols = list(COLUMNS) + (["counselee"] if counselee else [])
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_pedigrees(pedigrees, fh, delimiter, counselee)
        return
    w = csv.writer(dest, delimiter=delimiter, lineterminator="\n")
    w.writerow(cols)
    for ped in pedigrees:
        for m in ped.members:
            row = [
                ped.family_id,
                m.id,
                m.father or "",
                m.mother or "",
                m.sex,
                "NA" if m.genotype is None else str(m.genotype),
                _fmt_age(m.phenotype.time),
                str(m.phenotype.cause),
                "1" if m.is_proband else "0",
            ]
            if counselee:
                row.append("1" if m.is_counselee else "0")
            w.writerow(row)


def dumps(pedigrees: Iterable[Pedigree], **kw) -> str:
    buf = io.StringIO()
    write_pedigrees(pedigrees, buf, **kw)
    return buf.getvalue()


def administrative_censor(pedigrees: Iterable[Pedigree], max_age: float) -> list[Pedigree]:
    """Recode every outcome observed after ``max_age`` as censored at ``max_age``."""
    out = []
    for ped in pedigrees:
        members = []
        for m in ped.members:
            if m.phenotype.time > max_age:
                m = replace(m, phenotype=Phenotype(float(max_age), 0))
            members.append(m)
        out.append(Pedigree(ped.family_id, tuple(members), rows=ped.rows))
    return out
