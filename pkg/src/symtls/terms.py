"""Symbolic message terms: agents, nonces, keys, and the message grammar.

Every term is hash-consed into a process-global arena, so structurally
equal terms are the *same* Python object and term identity is an integer
(`Term.tid`).  The closure kernels (see `symtls.kernel`) operate directly
on the arena's integer columns; everything user-facing goes through the
`Term` wrappers defined here.

Arena column layout per node: (tag, f0, f1, f2, f3).  Index 0 is a dummy
node so that 0 can mean "absent" in auxiliary tables.
"""

from __future__ import annotations

from array import array
from enum import IntEnum

# Node tags.  Nonce bodies and key terms live in the same arena as
# messages; tags keep the sorts apart.
T_ATOM = 0      # f0 = atom id                      (nonce body)
T_PRF = 1       # f0,f1,f2 = pms, na, nb body ids   (nonce body)
T_PUB = 2       # f0 = agent code                   (key term)
T_PRI = 3       # f0 = agent code                   (key term)
T_SESS = 4      # f0,f1,f2 = na, nb, m; f3 = role   (key term)
T_MAGENT = 5    # f0 = agent code                   (message)
T_MNUM = 6      # f0 = integer value                (message)
T_MNONCE = 7    # f0 = nonce body id                (message)
T_MKEY = 8      # f0 = key term id                  (message)
T_MHASH = 9     # f0 = message id                   (message)
T_MCRYPT = 10   # f0 = key term id, f1 = message id (message)
T_MPAIR = 11    # f0, f1 = message ids              (message)

KEY_TAGS = (T_PUB, T_PRI, T_SESS)

# Arena columns, extended append-only by _intern().
TAGS = array("q", [-1])
F0 = array("q", [0])
F1 = array("q", [0])
F2 = array("q", [0])
F3 = array("q", [0])
# For key-term nodes: arena id of the inverse key (pub<->pri, sessK self).
INVERT = array("q", [0])
# For key-term nodes: arena id of the wrapping Key(...) message node.
KEY_MSG = array("q", [0])

_intern_map: dict[tuple[int, int, int, int, int], int] = {}
_wrappers: dict[int, "Term"] = {}


class Role(IntEnum):
    CLIENT = 0
    SERVER = 1

    def __str__(self) -> str:
        return "client" if self is Role.CLIENT else "server"


class AgentName:
    """An agent: the certification authority, a friend, or the spy.

    Friend codes start at 2 so that agent codes are dense small ints.
    """

    __slots__ = ("code",)
    _cache: dict[int, "AgentName"] = {}

    def __new__(cls, code: int) -> "AgentName":
        hit = cls._cache.get(code)
        if hit is None:
            hit = object.__new__(cls)
            hit.code = code
            cls._cache[code] = hit
        return hit

    @property
    def is_friend(self) -> bool:
        return self.code >= 2

    @property
    def friend_index(self) -> int:
        return self.code - 1

    def __repr__(self) -> str:
        return f"AgentName({self})"

    def __str__(self) -> str:
        if self.code == 0:
            return "Server"
        if self.code == 1:
            return "Spy"
        return f"F{self.code - 1}"

    def __lt__(self, other: "AgentName") -> bool:
        return self.code < other.code

    def __reduce__(self):
        return (AgentName, (self.code,))


SERVER = AgentName(0)
SPY = AgentName(1)


def friend(i: int) -> AgentName:
    if i < 1:
        raise ValueError("friend index must be positive")
    return AgentName(i + 1)


def agent_from_name(name: str) -> AgentName:
    if name == "Server":
        return SERVER
    if name == "Spy":
        return SPY
    if name.startswith("F") and name[1:].isdigit():
        return friend(int(name[1:]))
    raise ValueError(f"unknown agent name: {name!r}")


def _intern(tag: int, f0: int = 0, f1: int = 0, f2: int = 0, f3: int = 0) -> int:
    key = (tag, f0, f1, f2, f3)
    tid = _intern_map.get(key)
    if tid is not None:
        return tid
    tid = len(TAGS)
    _intern_map[key] = tid
    TAGS.append(tag)
    F0.append(f0)
    F1.append(f1)
    F2.append(f2)
    F3.append(f3)
    INVERT.append(0)
    KEY_MSG.append(0)
    return tid


class Term:
    """Immutable wrapper around an arena node.  Equality is identity."""

    __slots__ = ("tid",)
    __hash__ = object.__hash__

    def __new__(cls, tid: int) -> "Term":
        hit = _wrappers.get(tid)
        if hit is None:
            hit = object.__new__(cls)
            hit.tid = tid
            _wrappers[tid] = hit
        return hit

    @property
    def tag(self) -> int:
        return TAGS[self.tid]

    def field(self, k: int) -> int:
        return (F0, F1, F2, F3)[k][self.tid]

    def child(self, k: int) -> "Term":
        return Term(self.field(k))

    @property
    def is_message(self) -> bool:
        return self.tag >= T_MAGENT

    @property
    def is_nonce_body(self) -> bool:
        return self.tag in (T_ATOM, T_PRF)

    @property
    def is_key_term(self) -> bool:
        return self.tag in KEY_TAGS

    def __eq__(self, other: object) -> bool:
        return self is other

    def __lt__(self, other: "Term") -> bool:
        return self.tid < other.tid

    def __repr__(self) -> str:
        return print_term(self)

    def __reduce__(self):
        raise TypeError("terms are arena-bound and not picklable")


# -- constructors ------------------------------------------------------

def atom(i: int) -> Term:
    """Fresh-nonce body with identity `i` (printed n<i>)."""
    return Term(_intern(T_ATOM, i))


def prf(pms: Term, na: Term, nb: Term) -> Term:
    """Pseudo-random-function application; injective by interning."""
    return Term(_intern(T_PRF, pms.tid, na.tid, nb.tid))


def _key(tag: int, f0: int, f1: int = 0, f2: int = 0, f3: int = 0) -> Term:
    tid = _intern(tag, f0, f1, f2, f3)
    if INVERT[tid] == 0:
        if tag == T_PUB:
            inv = _intern(T_PRI, f0)
        elif tag == T_PRI:
            inv = _intern(T_PUB, f0)
        else:
            inv = tid
        INVERT[tid] = inv
        INVERT[inv] = tid
        # Make sure the Key(...) wrappers exist so kernels can test
        # "Key k available" by id lookup.
        for kt in (tid, inv):
            if KEY_MSG[kt] == 0:
                KEY_MSG[kt] = _intern(T_MKEY, kt)
    return Term(tid)


def pub(a: AgentName) -> Term:
    return _key(T_PUB, a.code)


def pri(a: AgentName) -> Term:
    return _key(T_PRI, a.code)


def sess_key(na: Term, nb: Term, m: Term, role: Role) -> Term:
    return _key(T_SESS, na.tid, nb.tid, m.tid, int(role))


def client_key(na: Term, nb: Term, m: Term) -> Term:
    return sess_key(na, nb, m, Role.CLIENT)


def server_key(na: Term, nb: Term, m: Term) -> Term:
    return sess_key(na, nb, m, Role.SERVER)


def agent_msg(a: AgentName) -> Term:
    return Term(_intern(T_MAGENT, a.code))


def num(n: int) -> Term:
    return Term(_intern(T_MNUM, n))


def nonce(body: Term) -> Term:
    return Term(_intern(T_MNONCE, body.tid))


def key_msg(k: Term) -> Term:
    return Term(_intern(T_MKEY, k.tid))


def hash_of(x: Term) -> Term:
    return Term(_intern(T_MHASH, x.tid))


def crypt(k: Term, x: Term) -> Term:
    return Term(_intern(T_MCRYPT, k.tid, x.tid))


def pair(*xs: Term) -> Term:
    """N-ary concatenation as right-nested binary pairs."""
    if not xs:
        raise ValueError("pair() needs at least one component")
    out = xs[-1]
    for x in reversed(xs[:-1]):
        out = Term(_intern(T_MPAIR, x.tid, out.tid))
    return out


def agent_of(t: Term) -> AgentName:
    if t.tag not in (T_MAGENT, T_PUB, T_PRI):
        raise ValueError("term carries no agent")
    return AgentName(t.field(0))


def unpair(t: Term) -> list[Term]:
    """Flatten the right spine of nested pairs."""
    out = []
    while t.tag == T_MPAIR:
        out.append(t.child(0))
        t = t.child(1)
    out.append(t)
    return out


# -- textual grammar ---------------------------------------------------

def print_term(t: Term) -> str:
    tag = t.tag
    if tag == T_ATOM:
        return f"n{t.field(0)}"
    if tag == T_PRF:
        return ("PRF(" + print_term(t.child(0)) + "," + print_term(t.child(1))
                + "," + print_term(t.child(2)) + ")")
    if tag == T_PUB:
        return f"pub({AgentName(t.field(0))})"
    if tag == T_PRI:
        return f"pri({AgentName(t.field(0))})"
    if tag == T_SESS:
        role = "client" if t.field(3) == 0 else "server"
        return ("sessK(" + print_term(t.child(0)) + "," + print_term(t.child(1))
                + "," + print_term(t.child(2)) + "," + role + ")")
    if tag == T_MAGENT:
        return f"Agent({AgentName(t.field(0))})"
    if tag == T_MNUM:
        return f"Num({t.field(0)})"
    if tag == T_MNONCE:
        return f"Nonce({print_term(t.child(0))})"
    if tag == T_MKEY:
        return f"Key({print_term(t.child(0))})"
    if tag == T_MHASH:
        return f"Hash({print_term(t.child(0))})"
    if tag == T_MCRYPT:
        return f"Crypt({print_term(t.child(0))}, {print_term(t.child(1))})"
    if tag == T_MPAIR:
        return "Pair(" + ", ".join(print_term(x) for x in unpair(t)) + ")"
    raise AssertionError(f"bad tag {tag}")


class TermSyntaxError(ValueError):
    def __init__(self, text: str, pos: int, message: str):
        super().__init__(f"at column {pos + 1}: {message}")
        self.text = text
        self.pos = pos


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> TermSyntaxError:
        return TermSyntaxError(self.text, self.pos, message)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def expect(self, ch: str) -> None:
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def ident(self) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum()
                                             or self.text[self.pos] == "_"):
            self.pos += 1
        if start == self.pos:
            raise self.error("expected identifier")
        return self.text[start:self.pos]

    def args(self, parse_one) -> list:
        self.expect("(")
        out = [parse_one()]
        self.skip_ws()
        while self.pos < len(self.text) and self.text[self.pos] == ",":
            self.pos += 1
            out.append(parse_one())
            self.skip_ws()
        self.expect(")")
        return out

    def nonce_body(self) -> Term:
        name = self.ident()
        if name.startswith("n") and name[1:].isdigit():
            return atom(int(name[1:]))
        if name == "PRF":
            xs = self.args(self.nonce_body)
            if len(xs) != 3:
                raise self.error("PRF takes 3 arguments")
            return prf(*xs)
        raise self.error(f"bad nonce body {name!r}")

    def key_term(self) -> Term:
        name = self.ident()
        if name in ("pub", "pri"):
            xs = self.args(self.agent)
            if len(xs) != 1:
                raise self.error(f"{name} takes 1 argument")
            return pub(xs[0]) if name == "pub" else pri(xs[0])
        if name == "sessK":
            self.expect("(")
            na = self.nonce_body()
            self.expect(",")
            nb = self.nonce_body()
            self.expect(",")
            m = self.nonce_body()
            self.expect(",")
            role = self.ident()
            self.expect(")")
            if role not in ("client", "server"):
                raise self.error(f"bad role {role!r}")
            return sess_key(na, nb, m,
                            Role.CLIENT if role == "client" else Role.SERVER)
        raise self.error(f"bad key term {name!r}")

    def agent(self) -> AgentName:
        name = self.ident()
        try:
            return agent_from_name(name)
        except ValueError as exc:
            raise self.error(str(exc)) from None

    def message(self) -> Term:
        name = self.ident()
        if name == "Agent":
            return agent_msg(self.args(self.agent)[0])
        if name == "Num":
            self.expect("(")
            self.skip_ws()
            start = self.pos
            if self.pos < len(self.text) and self.text[self.pos] == "-":
                self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if start == self.pos:
                raise self.error("expected integer")
            value = int(self.text[start:self.pos])
            self.expect(")")
            return num(value)
        if name == "Nonce":
            xs = self.args(self.nonce_body)
            if len(xs) != 1:
                raise self.error("Nonce takes 1 argument")
            return nonce(xs[0])
        if name == "Key":
            xs = self.args(self.key_term)
            if len(xs) != 1:
                raise self.error("Key takes 1 argument")
            return key_msg(xs[0])
        if name == "Hash":
            xs = self.args(self.message)
            if len(xs) != 1:
                raise self.error("Hash takes 1 argument")
            return hash_of(xs[0])
        if name == "Crypt":
            self.expect("(")
            k = self.key_term()
            self.expect(",")
            x = self.message()
            self.expect(")")
            return crypt(k, x)
        if name == "Pair":
            xs = self.args(self.message)
            if len(xs) < 2:
                raise self.error("Pair takes at least 2 components")
            return pair(*xs)
        raise self.error(f"bad message constructor {name!r}")


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.message()
    p.skip_ws()
    if p.pos != len(p.text):
        raise p.error("trailing input")
    return t


def max_atom_id(t: Term) -> int:
    """Largest atom id occurring anywhere in the term (0 if none)."""
    tag = t.tag
    if tag == T_ATOM:
        return t.field(0)
    if tag in (T_PRF, T_SESS):
        return max(max_atom_id(t.child(0)), max_atom_id(t.child(1)),
                   max_atom_id(t.child(2)))
    if tag in (T_MNONCE, T_MKEY, T_MHASH):
        return max_atom_id(t.child(0))
    if tag in (T_MCRYPT, T_MPAIR):
        return max(max_atom_id(t.child(0)), max_atom_id(t.child(1)))
    return 0
