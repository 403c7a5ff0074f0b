"""Pure-Python closure kernel.

Reference implementation of the knowledge-closure operators over arena
node ids.  `symtls.kernel` prefers the compiled extension and falls back
to this module; both expose the same three functions and must agree
bit-for-bit (tests enforce it when the extension is available).
"""

from __future__ import annotations

from . import terms
from .terms import (
    T_MCRYPT, T_MKEY, T_MPAIR,
)

BACKEND = "python"


def parts(seed_ids) -> frozenset[int]:
    """Components recoverable assuming every cipher can be opened."""
    tags, f0, f1 = terms.TAGS, terms.F0, terms.F1
    seen = set(seed_ids)
    stack = list(seen)
    while stack:
        t = stack.pop()
        tag = tags[t]
        if tag == T_MPAIR:
            for c in (f0[t], f1[t]):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        elif tag == T_MCRYPT:
            c = f1[t]
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return frozenset(seen)


def analz(seed_ids) -> frozenset[int]:
    """Components recoverable using keys available in the closure itself."""
    tags, f0, f1 = terms.TAGS, terms.F0, terms.F1
    invert, key_msg = terms.INVERT, terms.KEY_MSG
    seen = set(seed_ids)
    stack = list(seen)
    # Ciphertext bodies wait on the Key(inverse) message becoming visible.
    pending: dict[int, list[int]] = {}
    avail: set[int] = set()
    while stack:
        t = stack.pop()
        tag = tags[t]
        if tag == T_MPAIR:
            for c in (f0[t], f1[t]):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        elif tag == T_MCRYPT:
            need = invert[f0[t]]
            if need in avail:
                c = f1[t]
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
            else:
                pending.setdefault(need, []).append(f1[t])
        elif tag == T_MKEY:
            kt = f0[t]
            if kt not in avail:
                avail.add(kt)
                for c in pending.pop(kt, ()):
                    if c not in seen:
                        seen.add(c)
                        stack.append(c)
    return frozenset(seen)


def synthesizable(closed, x: int) -> bool:
    """Membership in the synthesis closure of an analz-closed set."""
    tags, f0, f1 = terms.TAGS, terms.F0, terms.F1
    key_msg = terms.KEY_MSG

    def walk(t: int) -> bool:
        if t in closed:
            return True
        tag = tags[t]
        if tag == terms.T_MAGENT or tag == terms.T_MNUM:
            return True
        if tag == terms.T_MHASH:
            return walk(f0[t])
        if tag == T_MCRYPT:
            return key_msg[f0[t]] in closed and walk(f1[t])
        if tag == T_MPAIR:
            return walk(f0[t]) and walk(f1[t])
        return False

    return walk(x)
