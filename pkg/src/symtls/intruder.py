"""Finite, attack-preserving realization of the Fake rule.

The synthesis closure is infinite, but honest rules only ever test
membership of specific payload shapes, so a spy message that matches no
receive pattern can never change an honest agent's behavior; chaining
synthesized material through several fakes is subsumed because
synthesizability composes.  Candidates are therefore instantiations of
the honest rules' premise shapes with holes filled from what the spy
can see.  This is a bounded reduction: completeness holds only relative
to these patterns and the candidate pools, and reports say so.

`fake_candidates` is the specified candidate set; `fake_deliveries`
additionally pins each candidate to the receivers whose rules could
consume it and drops candidates that are behaviorally redundant:

  * certificate deliveries (the unguarded Certificate rule already
    delivers any certificate to anyone, and no premise checks who sent
    one);
  * replays whose (receiver, payload) already occurred, since every
    consumer of these shapes ignores the sender field;
  * certificate-verify signatures, which no rule premise consumes and
    which cannot violate a property when forged (forging needs a bad
    agent's key, and the authentication properties exempt bad agents).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import algebra, terms
from .rules import (
    RuleId, TraceIndex, client_hello_msg, key_exchange_msg,
    match_client_hello, match_finished_hash, match_key_exchange,
    match_server_hello, server_hello_msg, finished_hash,
)
from .trace import Scenario, Trace, spy_sees
from .terms import (
    Role, Term, T_MCRYPT, T_MKEY, T_MNONCE, T_PUB, T_SESS,
    crypt, key_msg, nonce, pub,
)


@dataclass(frozen=True)
class ReceivePattern:
    """Payload shape of one premise of one honest rule, with typed holes."""

    rule: RuleId
    name: str


PATTERNS = (
    ReceivePattern(RuleId.SERVER_HELLO, "client-hello"),
    ReceivePattern(RuleId.CLIENT_FINISHED, "server-hello"),
    ReceivePattern(RuleId.CLIENT_KEY_EXCH, "certificate"),
    ReceivePattern(RuleId.SERVER_FINISHED, "key-exchange"),
    ReceivePattern(RuleId.SERVER_ACCEPTS, "client-finished"),
    ReceivePattern(RuleId.CLIENT_ACCEPTS, "server-finished"),
    ReceivePattern(RuleId.SERVER_ACCEPTS, "cert-verify"),
)


def _known_material(s: Scenario, evs: Trace, sees: frozenset[Term]):
    """Hole pools: nonce bodies and session keys the spy can use, plus
    whole ciphertexts seen in traffic for replay."""
    nonces = sorted(t.child(0) for t in sees if t.tag == T_MNONCE)
    sess_keys = sorted(t.child(0) for t in sees
                       if t.tag == T_MKEY and t.child(0).tag == T_SESS)
    replays = sorted(t for t in sees if t.tag == T_MCRYPT)
    return nonces, sess_keys, replays


def fake_deliveries(s: Scenario, evs: Trace,
                    idx: TraceIndex | None = None) -> list[tuple]:
    """Deterministic (receiver, payload) list for Fake enumeration.

    Every payload is synthesizable from the spy's view; receivers are
    pinned to agents whose rules could consume the shape."""
    if idx is None:
        idx = TraceIndex(s, evs)
    sees = spy_sees(s, evs)
    nonces, sess_keys, replays = _known_material(s, evs, sees)
    actors = sorted(s.actors)
    v = s.variant
    bounds = s.bounds
    out: list[tuple] = []

    # Client hellos: any claimed sender, any spy-known nonce.  A hello
    # claiming X delivered to X would only enable a self-session.
    for claimed in actors:
        for x in nonces:
            for sid in bounds.sid_pool:
                for pa in bounds.pref_pool:
                    payload = client_hello_msg(claimed, x, sid, pa)
                    for recv in actors:
                        if recv != claimed:
                            out.append((recv, payload))

    # Server hellos.
    for x in nonces:
        for sid in bounds.sid_pool:
            for pb in bounds.pref_pool:
                payload = server_hello_msg(x, sid, pb)
                for recv in actors:
                    out.append((recv, payload))

    # Key-exchange ciphertexts: constructed from a spy-known nonce, or
    # replayed whole.  Only the key owner's rules consume them.
    for owner in actors:
        for x in nonces:
            if v.include_client_identity_in_keyexch:
                for claimed in actors:
                    out.append((owner, key_exchange_msg(claimed, pub(owner), x, v)))
            else:
                out.append((owner, key_exchange_msg(owner, pub(owner), x, v)))
    for t in replays:
        kx = match_key_exchange(t, v)
        if kx is not None and kx[0] in s.actors:
            out.append((kx[0], t))

    # Finished ciphertexts under spy-known session keys.  The key triple
    # pins the hash's nonces and master-secret; mismatched hashes are
    # never consumed by the accepts guards.
    for k in sess_keys:
        na, nb, m = k.child(0), k.child(1), k.child(2)
        role = Role(k.field(3))
        for a in actors:
            for b in actors:
                if a == b:
                    continue
                for sid in bounds.sid_pool:
                    for pa, pb in _pref_pairs(bounds, v):
                        fh = finished_hash(sid, m, na, pa, a, nb, pb, b, v)
                        recv = b if role is Role.CLIENT else a
                        out.append((recv, crypt(k, fh)))

    seen = set()
    final = []
    for recv, payload in out:
        key = (recv.code, payload.tid)
        if key in seen:
            continue
        seen.add(key)
        if algebra.synthesizes(sees, payload):
            final.append((recv, payload))
    final.sort(key=lambda rp: (rp[0].code, rp[1].tid))
    return final


def _pref_pairs(bounds, v):
    if v.omit_prefs_in_finished:
        return [(0, 0)]
    return [(pa, pb) for pa in bounds.pref_pool for pb in bounds.pref_pool]


def fake_candidates(s: Scenario, evs: Trace) -> list[Term]:
    """All rule-shaped messages the Fake rule would accept, deduplicated
    and deterministically ordered.

    Includes certificate replays and whole-ciphertext replays for
    premise-discharge completeness even though `fake_deliveries` filters
    the behaviorally redundant ones."""
    sees = spy_sees(s, evs)
    out = {payload for _, payload in fake_deliveries(s, evs)}
    for a in s.population:
        out.add(algebra.certificate(a, pub(a)))
    for t in sees:
        if t.tag == T_MCRYPT:
            if (match_key_exchange(t, s.variant) is not None
                    or t.child(0).tag == T_SESS
                    or algebra.match_certificate(t) is not None
                    or t.child(0).tag == terms.T_PRI):
                out.add(t)
    return sorted((t for t in out if algebra.synthesizes(sees, t)),
                  key=lambda t: t.tid)
