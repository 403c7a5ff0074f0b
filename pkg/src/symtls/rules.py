"""The fifteen inductive rules of the handshake as guarded transitions.

Each rule is a guard over the *event set* of a trace plus an effect that
prefixes one event (two for the key exchange).  `apply_rule` checks the
guard for an explicit variable binding and raises `GuardFailure` naming
the first failed conjunct; `enumerate_bindings` yields exactly the
bindings whose guards hold under a scenario's bounds.

Primed senders in premises ("apparently from A") are existential matches
over the event set: the sender field is unchecked.  Unprimed premises
require the event's own sender.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from . import algebra, terms
from .trace import (
    EMPTY_TRACE, Event, Scenario, Trace, notes, says, spy_sees, used,
)
from .terms import (
    AgentName, Role, SPY, Term,
    T_ATOM, T_MAGENT, T_MCRYPT, T_MNONCE, T_MNUM, T_PRF, T_PUB, T_SESS,
    agent_msg, agent_of, atom, crypt, hash_of, key_msg, nonce, num, pair,
    prf, pub, sess_key, unpair,
)


class RuleId(Enum):
    NIL = "Nil"
    FAKE = "Fake"
    SPY_KEYS = "SpyKeys"
    CLIENT_HELLO = "ClientHello"
    SERVER_HELLO = "ServerHello"
    CERTIFICATE = "Certificate"
    CLIENT_KEY_EXCH = "ClientKeyExch"
    CERT_VERIFY = "CertVerify"
    CLIENT_FINISHED = "ClientFinished"
    SERVER_FINISHED = "ServerFinished"
    CLIENT_ACCEPTS = "ClientAccepts"
    SERVER_ACCEPTS = "ServerAccepts"
    CLIENT_RESUME = "ClientResume"
    SERVER_RESUME = "ServerResume"
    OOPS = "Oops"

    def __str__(self) -> str:
        return self.value


RULE_BY_NAME = {r.value: r for r in RuleId}

HONEST_RULES = (
    RuleId.CLIENT_HELLO, RuleId.SERVER_HELLO, RuleId.CERTIFICATE,
    RuleId.CLIENT_KEY_EXCH, RuleId.CERT_VERIFY, RuleId.CLIENT_FINISHED,
    RuleId.SERVER_FINISHED, RuleId.CLIENT_ACCEPTS, RuleId.SERVER_ACCEPTS,
    RuleId.CLIENT_RESUME, RuleId.SERVER_RESUME,
)


@dataclass(frozen=True)
class VariantFlags:
    """Protocol mutants; all False is the faithful model."""

    omit_prefs_in_finished: bool = False
    omit_pms_in_certverify: bool = False
    include_client_identity_in_keyexch: bool = False


class GuardFailure(Exception):
    """A rule does not apply: names the first failed guard conjunct."""

    def __init__(self, rule: RuleId, conjunct: str):
        super().__init__(f"{rule}: {conjunct}")
        self.rule = rule
        self.conjunct = conjunct


Binding = dict


# -- message shapes ----------------------------------------------------

def client_hello_msg(a: AgentName, na: Term, sid: int, pa: int) -> Term:
    return pair(agent_msg(a), nonce(na), num(sid), num(pa))


def server_hello_msg(nb: Term, sid: int, pb: int) -> Term:
    return pair(nonce(nb), num(sid), num(pb))


def key_exchange_msg(a: AgentName, kb: Term, pms: Term, v: VariantFlags) -> Term:
    if v.include_client_identity_in_keyexch:
        return crypt(kb, pair(agent_msg(a), nonce(pms)))
    return crypt(kb, nonce(pms))


def pms_note_msg(b: AgentName, pms: Term) -> Term:
    return pair(agent_msg(b), nonce(pms))


def session_note_msg(sid: int, a: AgentName, b: AgentName, m: Term) -> Term:
    return pair(num(sid), agent_msg(a), agent_msg(b), nonce(m))


def cert_verify_hash(nb: Term, b: AgentName, pms: Term, v: VariantFlags) -> Term:
    if v.omit_pms_in_certverify:
        return hash_of(pair(nonce(nb), agent_msg(b)))
    return hash_of(pair(nonce(nb), agent_msg(b), nonce(pms)))


def finished_hash(sid: int, m: Term, na: Term, pa: int, a: AgentName,
                  nb: Term, pb: int, b: AgentName, v: VariantFlags) -> Term:
    """The hash both finished messages carry; confirms the handshake
    parameters.  Under `omit_prefs_in_finished` the preferences are
    dropped, which is what makes rollback detectable as a mutant."""
    if v.omit_prefs_in_finished:
        body = pair(num(sid), nonce(m), nonce(na), agent_msg(a),
                    nonce(nb), agent_msg(b))
    else:
        body = pair(num(sid), nonce(m), nonce(na), num(pa), agent_msg(a),
                    nonce(nb), num(pb), agent_msg(b))
    return hash_of(body)


# -- shape matchers (used by enumeration, the intruder and properties) --

def match_client_hello(t: Term):
    """(A, na, sid, pa) when t is a client-hello payload."""
    xs = unpair(t)
    if (len(xs) == 4 and xs[0].tag == T_MAGENT and xs[1].tag == T_MNONCE
            and xs[2].tag == T_MNUM and xs[3].tag == T_MNUM):
        return (agent_of(xs[0]), xs[1].child(0), xs[2].field(0), xs[3].field(0))
    return None


def match_server_hello(t: Term):
    """(nb, sid, pb) when t is a server-hello payload."""
    xs = unpair(t)
    if (len(xs) == 3 and xs[0].tag == T_MNONCE and xs[1].tag == T_MNUM
            and xs[2].tag == T_MNUM):
        return (xs[0].child(0), xs[1].field(0), xs[2].field(0))
    return None


def match_key_exchange(t: Term, v: VariantFlags):
    """(key owner, pms) when t is a key-exchange ciphertext."""
    if t.tag != T_MCRYPT or t.child(0).tag != T_PUB:
        return None
    owner = agent_of(t.child(0))
    body = t.child(1)
    if v.include_client_identity_in_keyexch:
        xs = unpair(body)
        if len(xs) == 2 and xs[0].tag == T_MAGENT and xs[1].tag == T_MNONCE:
            return (owner, xs[1].child(0))
        return None
    if body.tag == T_MNONCE:
        return (owner, body.child(0))
    return None


def match_session_crypt(t: Term):
    """(key term, body) when t is encrypted under a session key."""
    if t.tag == T_MCRYPT and t.child(0).tag == T_SESS:
        return (t.child(0), t.child(1))
    return None


def match_finished_hash(x: Term, v: VariantFlags):
    """(sid, m, na, pa, A, nb, pb, B) from a finished hash; pa/pb are
    None under `omit_prefs_in_finished`."""
    if x.tag != terms.T_MHASH:
        return None
    xs = unpair(x.child(0))
    if v.omit_prefs_in_finished:
        if (len(xs) == 6 and xs[0].tag == T_MNUM and xs[1].tag == T_MNONCE
                and xs[2].tag == T_MNONCE and xs[3].tag == T_MAGENT
                and xs[4].tag == T_MNONCE and xs[5].tag == T_MAGENT):
            return (xs[0].field(0), xs[1].child(0), xs[2].child(0), None,
                    agent_of(xs[3]), xs[4].child(0), None, agent_of(xs[5]))
        return None
    if (len(xs) == 8 and xs[0].tag == T_MNUM and xs[1].tag == T_MNONCE
            and xs[2].tag == T_MNONCE and xs[3].tag == T_MNUM
            and xs[4].tag == T_MAGENT and xs[5].tag == T_MNONCE
            and xs[6].tag == T_MNUM and xs[7].tag == T_MAGENT):
        return (xs[0].field(0), xs[1].child(0), xs[2].child(0), xs[3].field(0),
                agent_of(xs[4]), xs[5].child(0), xs[6].field(0), agent_of(xs[7]))
    return None


def match_pms_note(t: Term):
    xs = unpair(t)
    if len(xs) == 2 and xs[0].tag == T_MAGENT and xs[1].tag == T_MNONCE:
        return (agent_of(xs[0]), xs[1].child(0))
    return None


def match_session_note(t: Term):
    xs = unpair(t)
    if (len(xs) == 4 and xs[0].tag == T_MNUM and xs[1].tag == T_MAGENT
            and xs[2].tag == T_MAGENT and xs[3].tag == T_MNONCE):
        return (xs[0].field(0), agent_of(xs[1]), agent_of(xs[2]), xs[3].child(0))
    return None


def match_cert_verify(t: Term, v: VariantFlags):
    """(signer, nb, B, pms) from a certificate-verify signature; the
    signer is the private key's owner; pms is None under the mutant."""
    if t.tag != T_MCRYPT or t.child(0).tag != terms.T_PRI:
        return None
    signer = agent_of(t.child(0))
    if signer == terms.SERVER:
        return None
    body = t.child(1)
    if body.tag != terms.T_MHASH:
        return None
    xs = unpair(body.child(0))
    if v.omit_pms_in_certverify:
        if len(xs) == 2 and xs[0].tag == T_MNONCE and xs[1].tag == T_MAGENT:
            return (signer, xs[0].child(0), agent_of(xs[1]), None)
        return None
    if (len(xs) == 3 and xs[0].tag == T_MNONCE and xs[1].tag == T_MAGENT
            and xs[2].tag == T_MNONCE):
        return (signer, xs[0].child(0), agent_of(xs[1]), xs[2].child(0))
    return None


# -- trace indexing ----------------------------------------------------

class TraceIndex:
    """One pass over a trace, bucketing events by the premise shapes the
    rules test.  Received-message buckets ignore the sender (primed
    premises); `own_*` buckets keep it."""

    def __init__(self, s: Scenario, evs: Trace):
        v = s.variant
        self.hellos_received = set()     # (B, A, na, sid, pa)
        self.own_hellos = set()          # (A, B, na, sid, pa)
        self.server_hellos_received = set()  # (A, nb, sid, pb)
        self.own_server_hellos = set()   # (B, A, nb, sid, pb)
        self.certs_received = set()      # (A, subject, key term)
        self.key_exchanges_received = set()  # (B, pms)  [receiver = key owner]
        self.finished_received = set()   # (receiver, key term, body)
        self.own_finished = set()        # (sender, receiver, key term, body)
        self.pms_notes = set()           # (A, B, pms)
        self.session_notes = set()       # (agent, sid, A, B, m)
        self.session_crypt_sends = set()  # (sender, key term)
        self.client_hello_nonces = set()  # nonce bodies quoted in client hellos
        self.server_hello_nonces = set()  # nonce bodies quoted in server hellos
        max_atom = 0
        for e in evs:
            p = e.payload
            ma = terms.max_atom_id(p)
            if ma > max_atom:
                max_atom = ma
            if e.is_says:
                recv = e.receiver
                hello = match_client_hello(p)
                if hello is not None:
                    a, na, sid, pa = hello
                    self.hellos_received.add((recv, a, na, sid, pa))
                    if e.sender == a:
                        self.own_hellos.add((a, recv, na, sid, pa))
                    self.client_hello_nonces.add(na)
                    continue
                sh = match_server_hello(p)
                if sh is not None:
                    nb, sid, pb = sh
                    self.server_hellos_received.add((recv, nb, sid, pb))
                    self.own_server_hellos.add((e.sender, recv, nb, sid, pb))
                    self.server_hello_nonces.add(nb)
                    continue
                cert = algebra.match_certificate(p)
                if cert is not None:
                    self.certs_received.add((recv, cert[0], cert[1]))
                    continue
                kx = match_key_exchange(p, v)
                if kx is not None and kx[0] == recv:
                    self.key_exchanges_received.add((recv, kx[1]))
                    continue
                sc = match_session_crypt(p)
                if sc is not None:
                    self.session_crypt_sends.add((e.sender, sc[0]))
                    self.finished_received.add((recv, sc[0], sc[1]))
                    self.own_finished.add((e.sender, recv, sc[0], sc[1]))
            else:
                pn = match_pms_note(p)
                if pn is not None:
                    self.pms_notes.add((e.agent, pn[0], pn[1]))
                    continue
                sn = match_session_note(p)
                if sn is not None:
                    self.session_notes.add((e.agent,) + sn)
        self.atoms_drawn = max_atom
        self.fresh = atom(max_atom + 1)


# -- apply -------------------------------------------------------------

def _req(b: Binding, rule: RuleId, *names: str):
    try:
        return tuple(b[n] for n in names)
    except KeyError as exc:
        raise GuardFailure(rule, f"binding lacks variable {exc.args[0]!r}") from None


def apply_rule(s: Scenario, evs: Trace, rule: RuleId, b: Binding) -> Trace:
    """Extend `evs` by one application of `rule` under binding `b`.

    Raises GuardFailure (inapplicability, not a program fault) naming
    the first failed conjunct, in the order the premises are stated."""
    v = s.variant
    evset = evs.event_set()

    def check(ok: bool, conjunct: str) -> None:
        if not ok:
            raise GuardFailure(rule, conjunct)

    def fresh_atom(n: Term, what: str) -> None:
        check(n.tag == T_ATOM, f"{what} not an atom (master-secret range excluded)")
        check(nonce(n) not in used(evs, s), f"{what} not fresh")

    if rule is RuleId.NIL:
        return EMPTY_TRACE

    if rule is RuleId.CLIENT_HELLO:
        a, b_, na, sid, pa = _req(b, rule, "A", "B", "na", "sid", "pa")
        fresh_atom(na, "na")
        return evs.prefix(says(a, b_, client_hello_msg(a, na, sid, pa)))

    if rule is RuleId.SERVER_HELLO:
        b_, a, na, sid, pa, nb, pb = _req(b, rule, "B", "A", "na", "sid",
                                          "pa", "nb", "pb")
        fresh_atom(nb, "nb")
        check(says_to(evset, b_, client_hello_msg(a, na, sid, pa)),
              "client hello not received")
        return evs.prefix(says(b_, a, server_hello_msg(nb, sid, pb)))

    if rule is RuleId.CERTIFICATE:
        b_, a = _req(b, rule, "B", "A")
        return evs.prefix(says(b_, a, algebra.certificate(b_, pub(b_))))

    if rule is RuleId.CLIENT_KEY_EXCH:
        a, b_, kb, pms = _req(b, rule, "A", "B", "kb", "pms")
        fresh_atom(pms, "pms")
        check(says_to(evset, a, algebra.certificate(b_, kb)),
              "certificate not received")
        return evs.prefix(
            says(a, b_, key_exchange_msg(a, kb, pms, v)),
            notes(a, pms_note_msg(b_, pms)))

    if rule is RuleId.CERT_VERIFY:
        a, b_, nb, sid, pb, pms = _req(b, rule, "A", "B", "nb", "sid", "pb", "pms")
        check(says_to(evset, a, server_hello_msg(nb, sid, pb)),
              "server hello not received")
        check(notes(a, pms_note_msg(b_, pms)) in evset, "pms not noted")
        return evs.prefix(says(a, b_, crypt(terms.pri(a),
                                            cert_verify_hash(nb, b_, pms, v))))

    if rule is RuleId.CLIENT_FINISHED:
        a, b_, na, sid, pa, nb, pb, pms = _req(
            b, rule, "A", "B", "na", "sid", "pa", "nb", "pb", "pms")
        check(says(a, b_, client_hello_msg(a, na, sid, pa)) in evset,
              "own client hello missing")
        check(says_to(evset, a, server_hello_msg(nb, sid, pb)),
              "server hello not received")
        check(notes(a, pms_note_msg(b_, pms)) in evset, "pms not noted")
        m = prf(pms, na, nb)
        fh = finished_hash(sid, m, na, pa, a, nb, pb, b_, v)
        return evs.prefix(says(a, b_, crypt(terms.client_key(na, nb, m), fh)))

    if rule is RuleId.SERVER_FINISHED:
        b_, a, na, sid, pa, nb, pb, pms = _req(
            b, rule, "B", "A", "na", "sid", "pa", "nb", "pb", "pms")
        check(says_to(evset, b_, client_hello_msg(a, na, sid, pa)),
              "client hello not received")
        check(says(b_, a, server_hello_msg(nb, sid, pb)) in evset,
              "own server hello missing")
        check(says_to(evset, b_, key_exchange_msg(a, pub(b_), pms, v)),
              "key exchange not received")
        m = prf(pms, na, nb)
        fh = finished_hash(sid, m, na, pa, a, nb, pb, b_, v)
        return evs.prefix(says(b_, a, crypt(terms.server_key(na, nb, m), fh)))

    if rule is RuleId.CLIENT_ACCEPTS:
        a, b_, sid, na, nb, pms = _req(b, rule, "A", "B", "sid", "na", "nb", "pms")
        check(notes(a, pms_note_msg(b_, pms)) in evset, "pms not noted")
        m = prf(pms, na, nb)
        fh = _accepts_hash(b, rule, sid, m, na, a, nb, b_, v)
        check(says(a, b_, crypt(terms.client_key(na, nb, m), fh)) in evset,
              "own client finished missing")
        check(says_to(evset, a, crypt(terms.server_key(na, nb, m), fh)),
              "matching server finished not received")
        return evs.prefix(notes(a, session_note_msg(sid, a, b_, m)))

    if rule is RuleId.SERVER_ACCEPTS:
        b_, a, sid, na, nb, pms = _req(b, rule, "B", "A", "sid", "na", "nb", "pms")
        check(a != b_, "parties not distinct")
        check(says_to(evset, b_, key_exchange_msg(a, pub(b_), pms, v)),
              "key exchange not received")
        m = prf(pms, na, nb)
        fh = _accepts_hash(b, rule, sid, m, na, a, nb, b_, v)
        check(says(b_, a, crypt(terms.server_key(na, nb, m), fh)) in evset,
              "own server finished missing")
        check(says_to(evset, b_, crypt(terms.client_key(na, nb, m), fh)),
              "matching client finished not received")
        return evs.prefix(notes(b_, session_note_msg(sid, a, b_, m)))

    if rule is RuleId.CLIENT_RESUME:
        a, b_, na, sid, pa, nb, pb, m = _req(
            b, rule, "A", "B", "na", "sid", "pa", "nb", "pb", "m")
        check(says(a, b_, client_hello_msg(a, na, sid, pa)) in evset,
              "own client hello missing")
        check(says_to(evset, a, server_hello_msg(nb, sid, pb)),
              "server hello not received")
        check(notes(a, session_note_msg(sid, a, b_, m)) in evset,
              "session not recorded")
        fh = finished_hash(sid, m, na, pa, a, nb, pb, b_, v)
        return evs.prefix(says(a, b_, crypt(terms.client_key(na, nb, m), fh)))

    if rule is RuleId.SERVER_RESUME:
        b_, a, na, sid, pa, nb, pb, m = _req(
            b, rule, "B", "A", "na", "sid", "pa", "nb", "pb", "m")
        check(says_to(evset, b_, client_hello_msg(a, na, sid, pa)),
              "client hello not received")
        check(says(b_, a, server_hello_msg(nb, sid, pb)) in evset,
              "own server hello missing")
        check(notes(b_, session_note_msg(sid, a, b_, m)) in evset,
              "session not recorded")
        fh = finished_hash(sid, m, na, pa, a, nb, pb, b_, v)
        return evs.prefix(says(b_, a, crypt(terms.server_key(na, nb, m), fh)))

    if rule is RuleId.SPY_KEYS:
        na, nb, m, role = _req(b, rule, "na", "nb", "m", "role")
        sees = spy_sees(s, evs)
        check(nonce(na) in sees and nonce(nb) in sees and nonce(m) in sees,
              "nonces not all known to spy")
        return evs.prefix(notes(SPY, pair(nonce(prf(m, na, nb)),
                                          key_msg(sess_key(na, nb, m, role)))))

    if rule is RuleId.OOPS:
        a, na, nb, m, role = _req(b, rule, "A", "na", "nb", "m", "role")
        k = sess_key(na, nb, m, role)
        check((a, k) in {(e.sender, sc[0]) for e in evs if e.is_says
                         for sc in [match_session_crypt(e.payload)] if sc},
              "session key never used by A")
        return evs.prefix(says(a, SPY, key_msg(k)))

    if rule is RuleId.FAKE:
        b_, x = _req(b, rule, "B", "X")
        check(algebra.synthesizes(spy_sees(s, evs), x),
              "message not synthesizable by spy")
        return evs.prefix(says(SPY, b_, x))

    raise AssertionError(f"unhandled rule {rule}")


def _accepts_hash(b: Binding, rule: RuleId, sid: int, m: Term, na: Term,
                  a: AgentName, nb: Term, b_: AgentName, v: VariantFlags) -> Term:
    if v.omit_prefs_in_finished:
        return finished_hash(sid, m, na, 0, a, nb, 0, b_, v)
    pa, pb = _req(b, rule, "pa", "pb")
    return finished_hash(sid, m, na, pa, a, nb, pb, b_, v)


def says_to(evset: frozenset[Event], receiver: AgentName, payload: Term) -> bool:
    """Existential premise match: some event delivered `payload` to
    `receiver`, sender unchecked."""
    return any(e.is_says and e.receiver == receiver and e.payload is payload
               for e in evset)


# -- enumeration -------------------------------------------------------

def enumerate_bindings(s: Scenario, evs: Trace, rule: RuleId,
                       idx: TraceIndex | None = None) -> list[Binding]:
    """All bindings whose guard holds within the scenario's bounds, in a
    deterministic order, each exactly once.

    Enumeration restrictions (bounds, not guard changes): self-sessions
    are excluded from hello/certificate enumeration; fresh nonces take
    the least unused atom id and are capped by `max_fresh_nonces`;
    SpyKeys triples draw the first two nonces from hello traffic; Oops
    ranges over session keys actually used to encrypt.  Fake payloads
    come from `symtls.intruder`."""
    if idx is None:
        idx = TraceIndex(s, evs)
    bounds = s.bounds
    v = s.variant
    actors = sorted(s.actors)
    out: list[Binding] = []

    def pairs_of_actors():
        for a in actors:
            for b_ in actors:
                if a != b_:
                    yield a, b_

    can_draw = idx.atoms_drawn < bounds.max_fresh_nonces

    if rule is RuleId.NIL:
        return []

    if rule is RuleId.CLIENT_HELLO:
        if can_draw:
            for a, b_ in pairs_of_actors():
                for sid in bounds.sid_pool:
                    for pa in bounds.pref_pool:
                        out.append({"A": a, "B": b_, "na": idx.fresh,
                                    "sid": sid, "pa": pa})
        return out

    if rule is RuleId.SERVER_HELLO:
        if can_draw:
            for b_, a, na, sid, pa in sorted(idx.hellos_received):
                if a == b_:
                    continue
                for pb in bounds.pref_pool:
                    out.append({"B": b_, "A": a, "na": na, "sid": sid,
                                "pa": pa, "nb": idx.fresh, "pb": pb})
        return out

    if rule is RuleId.CERTIFICATE:
        for b_, a in pairs_of_actors():
            out.append({"B": b_, "A": a})
        return out

    if rule is RuleId.CLIENT_KEY_EXCH:
        if can_draw:
            for a, subject, kb in sorted(idx.certs_received):
                if a == subject or subject not in s.actors:
                    continue
                out.append({"A": a, "B": subject, "kb": kb, "pms": idx.fresh})
        return out

    if rule is RuleId.CERT_VERIFY:
        for a, b_, pms in sorted(idx.pms_notes):
            for a2, nb, sid, pb in sorted(idx.server_hellos_received):
                if a2 == a:
                    out.append({"A": a, "B": b_, "nb": nb, "sid": sid,
                                "pb": pb, "pms": pms})
        return out

    if rule is RuleId.CLIENT_FINISHED:
        for a, b_, na, sid, pa in sorted(idx.own_hellos):
            for a2, nb, sid2, pb in sorted(idx.server_hellos_received):
                if a2 != a or sid2 != sid:
                    continue
                for a3, b3, pms in sorted(idx.pms_notes):
                    if a3 == a and b3 == b_:
                        out.append({"A": a, "B": b_, "na": na, "sid": sid,
                                    "pa": pa, "nb": nb, "pb": pb, "pms": pms})
        return out

    if rule is RuleId.SERVER_FINISHED:
        for b_, a, na, sid, pa in sorted(idx.hellos_received):
            for b2, a2, nb, sid2, pb in sorted(idx.own_server_hellos):
                if b2 != b_ or a2 != a or sid2 != sid:
                    continue
                for b3, pms in sorted(idx.key_exchanges_received):
                    if b3 == b_:
                        out.append({"B": b_, "A": a, "na": na, "sid": sid,
                                    "pa": pa, "nb": nb, "pb": pb, "pms": pms})
        return out

    if rule is RuleId.CLIENT_ACCEPTS:
        for sender, recv, k, body in sorted(idx.own_finished):
            if k.field(3) != int(Role.CLIENT):
                continue
            fields = match_finished_hash(body, v)
            if fields is None:
                continue
            sid, m, na, pa, a, nb, pb, b_ = fields
            if a != sender or b_ != recv:
                continue
            if (k.child(0), k.child(1), k.child(2)) != (na, nb, m):
                continue
            if m.tag != T_PRF or (m.child(1), m.child(2)) != (na, nb):
                continue
            pms = m.child(0)
            if (a, b_, pms) not in idx.pms_notes:
                continue
            if (a, terms.sess_key(na, nb, m, Role.SERVER), body) not in \
                    idx.finished_received:
                continue
            binding = {"A": a, "B": b_, "sid": sid, "na": na, "nb": nb,
                       "pms": pms}
            if not v.omit_prefs_in_finished:
                binding.update(pa=pa, pb=pb)
            out.append(binding)
        return _unique(out)

    if rule is RuleId.SERVER_ACCEPTS:
        for sender, recv, k, body in sorted(idx.own_finished):
            if k.field(3) != int(Role.SERVER):
                continue
            fields = match_finished_hash(body, v)
            if fields is None:
                continue
            sid, m, na, pa, a, nb, pb, b_ = fields
            if b_ != sender or a != recv or a == b_:
                continue
            if (k.child(0), k.child(1), k.child(2)) != (na, nb, m):
                continue
            if m.tag != T_PRF or (m.child(1), m.child(2)) != (na, nb):
                continue
            pms = m.child(0)
            if (b_, pms) not in idx.key_exchanges_received:
                continue
            if (b_, terms.sess_key(na, nb, m, Role.CLIENT), body) not in \
                    idx.finished_received:
                continue
            binding = {"B": b_, "A": a, "sid": sid, "na": na, "nb": nb,
                       "pms": pms}
            if not v.omit_prefs_in_finished:
                binding.update(pa=pa, pb=pb)
            out.append(binding)
        return _unique(out)

    if rule is RuleId.CLIENT_RESUME:
        for a, b_, na, sid, pa in sorted(idx.own_hellos):
            for a2, nb, sid2, pb in sorted(idx.server_hellos_received):
                if a2 != a or sid2 != sid:
                    continue
                for agent, sid3, a3, b3, m in sorted(idx.session_notes):
                    if agent == a and sid3 == sid and a3 == a and b3 == b_:
                        out.append({"A": a, "B": b_, "na": na, "sid": sid,
                                    "pa": pa, "nb": nb, "pb": pb, "m": m})
        return out

    if rule is RuleId.SERVER_RESUME:
        for b_, a, na, sid, pa in sorted(idx.hellos_received):
            for b2, a2, nb, sid2, pb in sorted(idx.own_server_hellos):
                if b2 != b_ or a2 != a or sid2 != sid:
                    continue
                for agent, sid3, a3, b3, m in sorted(idx.session_notes):
                    if agent == b_ and sid3 == sid and a3 == a and b3 == b_:
                        out.append({"B": b_, "A": a, "na": na, "sid": sid,
                                    "pa": pa, "nb": nb, "pb": pb, "m": m})
        return out

    if rule is RuleId.SPY_KEYS:
        sees = spy_sees(s, evs)
        known = sorted(t.child(0) for t in sees if t.tag == T_MNONCE)
        ch_nonces = sorted(n for n in idx.client_hello_nonces if nonce(n) in sees)
        sh_nonces = sorted(n for n in idx.server_hello_nonces if nonce(n) in sees)
        for na in ch_nonces:
            for nb in sh_nonces:
                for m in known:
                    for role in (Role.CLIENT, Role.SERVER):
                        out.append({"na": na, "nb": nb, "m": m, "role": role})
        return out

    if rule is RuleId.OOPS:
        for sender, k in sorted(idx.session_crypt_sends):
            out.append({"A": sender, "na": k.child(0), "nb": k.child(1),
                        "m": k.child(2), "role": Role(k.field(3))})
        return out

    if rule is RuleId.FAKE:
        from .intruder import fake_deliveries
        for recv, x in fake_deliveries(s, evs, idx):
            out.append({"B": recv, "X": x})
        return out

    raise AssertionError(f"unhandled rule {rule}")


def _unique(bindings: list[Binding]) -> list[Binding]:
    seen = set()
    out = []
    for b in bindings:
        key = tuple(sorted((k, _val_key(v)) for k, v in b.items()))
        if key not in seen:
            seen.add(key)
            out.append(b)
    return out


def _val_key(v):
    if isinstance(v, Term):
        return ("t", v.tid)
    if isinstance(v, AgentName):
        return ("a", v.code)
    return ("v", v)


# -- effects without guard re-evaluation (explorer fast path) ----------

def apply_effect(s: Scenario, evs: Trace, rule: RuleId, b: Binding) -> Trace:
    """Effect of a rule whose guard is already known to hold (bindings
    from `enumerate_bindings`).  Replay always goes through
    `apply_rule`; tests cross-check the two."""
    v = s.variant
    if rule is RuleId.CLIENT_HELLO:
        return evs.prefix(says(b["A"], b["B"],
                               client_hello_msg(b["A"], b["na"], b["sid"], b["pa"])))
    if rule is RuleId.SERVER_HELLO:
        return evs.prefix(says(b["B"], b["A"],
                               server_hello_msg(b["nb"], b["sid"], b["pb"])))
    if rule is RuleId.CERTIFICATE:
        return evs.prefix(says(b["B"], b["A"],
                               algebra.certificate(b["B"], pub(b["B"]))))
    if rule is RuleId.CLIENT_KEY_EXCH:
        return evs.prefix(
            says(b["A"], b["B"], key_exchange_msg(b["A"], b["kb"], b["pms"], v)),
            notes(b["A"], pms_note_msg(b["B"], b["pms"])))
    if rule is RuleId.CERT_VERIFY:
        return evs.prefix(says(b["A"], b["B"],
                               crypt(terms.pri(b["A"]),
                                     cert_verify_hash(b["nb"], b["B"], b["pms"], v))))
    if rule is RuleId.CLIENT_FINISHED:
        m = prf(b["pms"], b["na"], b["nb"])
        fh = finished_hash(b["sid"], m, b["na"], b["pa"], b["A"],
                           b["nb"], b["pb"], b["B"], v)
        return evs.prefix(says(b["A"], b["B"],
                               crypt(terms.client_key(b["na"], b["nb"], m), fh)))
    if rule is RuleId.SERVER_FINISHED:
        m = prf(b["pms"], b["na"], b["nb"])
        fh = finished_hash(b["sid"], m, b["na"], b["pa"], b["A"],
                           b["nb"], b["pb"], b["B"], v)
        return evs.prefix(says(b["B"], b["A"],
                               crypt(terms.server_key(b["na"], b["nb"], m), fh)))
    if rule is RuleId.CLIENT_ACCEPTS:
        m = prf(b["pms"], b["na"], b["nb"])
        return evs.prefix(notes(b["A"], session_note_msg(b["sid"], b["A"], b["B"], m)))
    if rule is RuleId.SERVER_ACCEPTS:
        m = prf(b["pms"], b["na"], b["nb"])
        return evs.prefix(notes(b["B"], session_note_msg(b["sid"], b["A"], b["B"], m)))
    if rule is RuleId.CLIENT_RESUME:
        fh = finished_hash(b["sid"], b["m"], b["na"], b["pa"], b["A"],
                           b["nb"], b["pb"], b["B"], v)
        return evs.prefix(says(b["A"], b["B"],
                               crypt(terms.client_key(b["na"], b["nb"], b["m"]), fh)))
    if rule is RuleId.SERVER_RESUME:
        fh = finished_hash(b["sid"], b["m"], b["na"], b["pa"], b["A"],
                           b["nb"], b["pb"], b["B"], v)
        return evs.prefix(says(b["B"], b["A"],
                               crypt(terms.server_key(b["na"], b["nb"], b["m"]), fh)))
    if rule is RuleId.SPY_KEYS:
        return evs.prefix(notes(SPY, pair(
            nonce(prf(b["m"], b["na"], b["nb"])),
            key_msg(sess_key(b["na"], b["nb"], b["m"], b["role"])))))
    if rule is RuleId.OOPS:
        return evs.prefix(says(b["A"], SPY,
                               key_msg(sess_key(b["na"], b["nb"], b["m"], b["role"]))))
    if rule is RuleId.FAKE:
        return evs.prefix(says(SPY, b["B"], b["X"]))
    if rule is RuleId.NIL:
        return EMPTY_TRACE
    raise AssertionError(f"unhandled rule {rule}")


# -- script (binding) serialization ------------------------------------

_VAR_KIND = {
    "A": "agent", "B": "agent",
    "na": "nbody", "nb": "nbody", "pms": "nbody", "m": "nbody",
    "sid": "int", "pa": "int", "pb": "int",
    "kb": "keyterm", "role": "role", "X": "message",
}

_VAR_ORDER = ["A", "B", "na", "nb", "pms", "m", "sid", "pa", "pb",
              "kb", "role", "X"]


def format_step(rule: RuleId, b: Binding) -> str:
    parts = [rule.value]
    for name in _VAR_ORDER:
        if name not in b:
            continue
        val = b[name]
        if isinstance(val, AgentName):
            text = str(val)
        elif isinstance(val, Role):
            text = str(val)
        elif isinstance(val, Term):
            text = terms.print_term(val)
        else:
            text = str(val)
        parts.append(f"{name}={text}")
    return " ".join(parts)


class ScriptSyntaxError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_step(line: str, lineno: int = 0) -> tuple[RuleId, Binding]:
    fields = line.strip().split(None, 1)
    rule = RULE_BY_NAME.get(fields[0])
    if rule is None:
        raise ScriptSyntaxError(lineno, f"unknown rule {fields[0]!r}")
    b: Binding = {}
    rest = fields[1] if len(fields) > 1 else ""
    while rest:
        name, eq, rest = rest.partition("=")
        name = name.strip()
        if not eq or name not in _VAR_KIND:
            raise ScriptSyntaxError(lineno, f"bad variable {name!r}")
        kind = _VAR_KIND[name]
        try:
            if kind == "message":
                # messages may contain ", "; they must come last
                b[name] = terms.parse_term(rest)
                rest = ""
            else:
                value, _, rest = rest.partition(" ")
                if kind == "agent":
                    b[name] = terms.agent_from_name(value)
                elif kind == "int":
                    b[name] = int(value)
                elif kind == "role":
                    b[name] = Role.CLIENT if value == "client" else Role.SERVER
                else:
                    p = terms._Parser(value)
                    b[name] = p.nonce_body() if kind == "nbody" else p.key_term()
        except ValueError as exc:
            raise ScriptSyntaxError(lineno, f"{name}: {exc}") from None
        rest = rest.strip()
    return rule, b


def parse_script(text: str) -> list[tuple[RuleId, Binding]]:
    steps = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        steps.append(parse_step(line, lineno))
    return steps


def format_script(steps) -> str:
    return "".join(format_step(r, b) + "\n" for r, b in steps)
