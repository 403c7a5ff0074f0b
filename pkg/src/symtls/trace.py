"""Events, traces, the spy's view, freshness, and the scenario.

Traces are newest-first event sequences built only by prefixing.  Events
are hash-consed like terms, so the explorer can treat a trace as a tuple
of small integers.  Trace *files* store events oldest-first; see
`format_trace` / `parse_trace_file`.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator

from . import algebra, kernel, terms
from .terms import AgentName, SERVER, SPY, Term, agent_from_name, max_atom_id

SAYS = 0
NOTES = 1

# Event arena columns; index 0 reserved like the term arena.
EV_KIND = array("q", [-1])
EV_SENDER = array("q", [0])
EV_RECV = array("q", [0])
EV_PAYLOAD = array("q", [0])
EV_MAXATOM = array("q", [0])

_event_map: dict[tuple[int, int, int, int], int] = {}
_event_wrappers: dict[int, "Event"] = {}


class Event:
    """`Says A B X` or `Notes A X`; interned, equality is identity."""

    __slots__ = ("eid",)
    __hash__ = object.__hash__

    def __new__(cls, eid: int) -> "Event":
        hit = _event_wrappers.get(eid)
        if hit is None:
            hit = object.__new__(cls)
            hit.eid = eid
            _event_wrappers[eid] = hit
        return hit

    @property
    def is_says(self) -> bool:
        return EV_KIND[self.eid] == SAYS

    @property
    def sender(self) -> AgentName:
        return AgentName(EV_SENDER[self.eid])

    @property
    def receiver(self) -> AgentName:
        if not self.is_says:
            raise ValueError("Notes events have no receiver")
        return AgentName(EV_RECV[self.eid])

    @property
    def agent(self) -> AgentName:
        """The acting agent: sender of a Says, noting agent of a Notes."""
        return AgentName(EV_SENDER[self.eid])

    @property
    def payload(self) -> Term:
        return Term(EV_PAYLOAD[self.eid])

    def __eq__(self, other: object) -> bool:
        return self is other

    def __lt__(self, other: "Event") -> bool:
        return self.eid < other.eid

    def __repr__(self) -> str:
        return format_event(self)


def _intern_event(kind: int, sender: int, recv: int, payload: int) -> int:
    key = (kind, sender, recv, payload)
    eid = _event_map.get(key)
    if eid is not None:
        return eid
    eid = len(EV_KIND)
    _event_map[key] = eid
    EV_KIND.append(kind)
    EV_SENDER.append(sender)
    EV_RECV.append(recv)
    EV_PAYLOAD.append(payload)
    EV_MAXATOM.append(max_atom_id(Term(payload)))
    return eid


def says(a: AgentName, b: AgentName, x: Term) -> Event:
    return Event(_intern_event(SAYS, a.code, b.code, x.tid))


def notes(a: AgentName, x: Term) -> Event:
    return Event(_intern_event(NOTES, a.code, -1, x.tid))


@dataclass(frozen=True)
class Trace:
    """Finite event sequence, newest first."""

    events: tuple[Event, ...] = ()

    def prefix(self, *evs: Event) -> "Trace":
        """New trace with `evs` consed on (first argument newest)."""
        return Trace(tuple(evs) + self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def event_set(self) -> frozenset[Event]:
        return frozenset(self.events)

    def max_atom(self) -> int:
        return max((EV_MAXATOM[e.eid] for e in self.events), default=0)


EMPTY_TRACE = Trace()


@dataclass(frozen=True)
class Scenario:
    """Agent population, compromised set, protocol variant, bounds."""

    honest_agents: tuple[AgentName, ...]
    bad: frozenset[AgentName]
    variant: "object" = None   # rules.VariantFlags; default set in __post_init__
    bounds: "object" = None    # explorer.Bounds; likewise

    def __post_init__(self):
        from .explorer import Bounds
        from .rules import VariantFlags
        if self.variant is None:
            object.__setattr__(self, "variant", VariantFlags())
        if self.bounds is None:
            object.__setattr__(self, "bounds", Bounds())
        if SPY not in self.bad:
            raise ValueError("the spy is always bad")
        if SERVER in self.bad:
            raise ValueError("the certification authority cannot be bad")

    @property
    def population(self) -> tuple[AgentName, ...]:
        return (SERVER, SPY) + tuple(self.honest_agents)

    @property
    def actors(self) -> tuple[AgentName, ...]:
        """Agents enumerated as protocol participants (the CA only signs)."""
        return (SPY,) + tuple(self.honest_agents)


def initial_spy_knowledge(s: Scenario) -> frozenset[Term]:
    """Public keys and certificates of everyone, private keys of the bad."""
    out = set()
    for a in s.population:
        out.add(terms.key_msg(terms.pub(a)))
        out.add(algebra.certificate(a, terms.pub(a)))
    for a in s.bad:
        out.add(terms.key_msg(terms.pri(a)))
    return frozenset(out)


def spies(s: Scenario, evs: Trace) -> frozenset[Term]:
    """Everything the spy can see: all traffic plus bad agents' notes."""
    out = set(initial_spy_knowledge(s))
    bad_codes = {a.code for a in s.bad}
    for e in evs:
        if e.is_says or EV_SENDER[e.eid] in bad_codes:
            out.add(e.payload)
    return frozenset(out)


def used(evs: Trace, s: Scenario) -> frozenset[Term]:
    """Parts of all messages said or noted, plus the initial knowledge.

    `Nonce(n) not in used(evs, s)` is the freshness test of the hello
    and key-exchange rules."""
    seeds = [m.tid for m in initial_spy_knowledge(s)]
    seeds.extend(EV_PAYLOAD[e.eid] for e in evs)
    return frozenset(Term(t) for t in kernel.parts(seeds))


@lru_cache(maxsize=4096)
def _spy_sees_cached(s: Scenario, evs: Trace) -> frozenset[Term]:
    return algebra.analz(spies(s, evs))


def spy_sees(s: Scenario, evs: Trace) -> frozenset[Term]:
    """analz(spies(evs)), memoized per trace value."""
    return _spy_sees_cached(s, evs)


# -- trace files -------------------------------------------------------

def format_event(e: Event) -> str:
    if e.is_says:
        return f"Says {e.sender} {e.receiver} {terms.print_term(e.payload)}"
    return f"Notes {e.agent} {terms.print_term(e.payload)}"


def format_trace(evs: Trace) -> str:
    """One event per line, oldest first, trailing newline."""
    lines = [format_event(e) for e in reversed(evs.events)]
    return "".join(line + "\n" for line in lines)


class TraceSyntaxError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_event(line: str, lineno: int = 0) -> Event:
    head, _, rest = line.strip().partition(" ")
    try:
        if head == "Says":
            a, _, rest = rest.partition(" ")
            b, _, payload = rest.partition(" ")
            return says(agent_from_name(a), agent_from_name(b),
                        terms.parse_term(payload))
        if head == "Notes":
            a, _, payload = rest.partition(" ")
            return notes(agent_from_name(a), terms.parse_term(payload))
    except ValueError as exc:
        raise TraceSyntaxError(lineno, str(exc)) from None
    raise TraceSyntaxError(lineno, f"expected Says or Notes, got {head!r}")


def parse_trace_file(text: str) -> Trace:
    evs = EMPTY_TRACE
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        evs = evs.prefix(parse_event(line, lineno))
    return evs
