"""Structured validation reports.

Every exhaustive law/axiom checker returns a Report instead of raising:
violations are data, so tests can count them and the CLI can print them.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self):
        return f"[{self.kind}] {self.detail}"


@dataclass
class Report:
    title: str
    violations: list[Violation] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def flag(self, kind: str, detail: str) -> None:
        self.violations.append(Violation(kind, detail))

    def note(self, text: str) -> None:
        self.notes.append(text)

    def extend(self, other: "Report") -> None:
        self.violations.extend(other.violations)
        self.notes.extend(other.notes)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]

    def summary(self) -> str:
        status = "ok" if self.ok else f"{len(self.violations)} violation(s)"
        lines = [f"{self.title}: {status}"]
        lines += [f"  {v}" for v in self.violations]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "title": self.title,
            "ok": self.ok,
            "violations": [{"kind": v.kind, "detail": v.detail} for v in self.violations],
            "notes": list(self.notes),
        }
