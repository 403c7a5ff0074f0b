"""Knowledge operators over message sets: parts, analz, synthesis.

`parts` and `analz` are least-fixpoint closures computed by worklist;
termination holds because every added term is a strict subterm of an
input term.  The synthesis closure is infinite, so it is exposed only as
a membership decision procedure (`synthesizes`); finite generation of
useful spy messages lives in `symtls.intruder`.
"""

from __future__ import annotations

from typing import Iterable

from . import kernel, terms
from .terms import AgentName, Role, SERVER, Term


def parts(h: Iterable[Term]) -> frozenset[Term]:
    """Least superset of `h` closed under projection and decryption
    with *any* key.  Hash bodies stay sealed (hashing is one-way)."""
    return frozenset(Term(t) for t in kernel.parts([m.tid for m in h]))


def analz(h: Iterable[Term]) -> frozenset[Term]:
    """Least superset of `h` closed under projection and decryption
    with keys available in the closure itself."""
    return frozenset(Term(t) for t in kernel.analz([m.tid for m in h]))


def synthesizes(h: Iterable[Term] | frozenset[Term], x: Term) -> bool:
    """Decide whether `x` can be composed from `h` plus guessable items
    (agent names and numbers) using hashing, encryption, concatenation.

    `h` must already be analz-closed; callers pass ``analz(spies(evs))``.
    """
    closed = {m.tid for m in h}
    return kernel.synthesizable(closed, x.tid)


def invert(k: Term) -> Term:
    """Inverse key: pub <-> pri; session keys are symmetric."""
    if not k.is_key_term:
        raise ValueError(f"not a key term: {k!r}")
    return Term(terms.INVERT[k.tid])


def certificate(a: AgentName, k: Term) -> Term:
    """(agent, key) pair signed by the certification authority."""
    return terms.crypt(terms.pri(SERVER),
                       terms.pair(terms.agent_msg(a), terms.key_msg(k)))


def match_certificate(t: Term) -> tuple[AgentName, Term] | None:
    """Return (subject, key) when `t` has certificate shape."""
    if t.tag != terms.T_MCRYPT:
        return None
    k = t.child(0)
    if k.tag != terms.T_PRI or k.field(0) != SERVER.code:
        return None
    body = terms.unpair(t.child(1))
    if len(body) != 2 or body[0].tag != terms.T_MAGENT or body[1].tag != terms.T_MKEY:
        return None
    return terms.agent_of(body[0]), body[1].child(0)
