"""MRZ alphabet, TD3 layout, check digits, and text <-> class-index codecs.

The machine-readable zone of a passport is two 44-character lines drawn from
a 37-symbol alphabet (digits, A-Z, and the filler '<').  Field boundaries and
check digits follow the ICAO 9303 TD3 (passport booklet) layout.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

LINE_LENGTH = 44
NUM_POSITIONS = 2 * LINE_LENGTH

# Class index order is frozen: recognition-head class indices depend on it.
SYMBOLS = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ<"
INDEX_OF = {c: i for i, c in enumerate(SYMBOLS)}
VOCAB_SIZE = len(SYMBOLS)
FILLER = "<"

_CHECK_WEIGHTS = (7, 3, 1)


class MrzCharError(ValueError):
    """A character outside the MRZ alphabet, with its position."""

    def __init__(self, char: str, position: int):
        self.char = char
        self.position = position
        super().__init__(f"invalid MRZ character {char!r} at position {position}")


def char_value(c: str) -> int:
    """Check-digit value of a symbol: digits map to themselves, A-Z to 10-35, '<' to 0."""
    if c == FILLER:
        return 0
    if "0" <= c <= "9":
        return ord(c) - ord("0")
    if "A" <= c <= "Z":
        return ord(c) - ord("A") + 10
    raise MrzCharError(c, -1)


def compute_check_digit(text: str) -> int:
    """Mod-10 check digit of ``text`` under the cyclic 7,3,1 weighting."""
    if not text:
        raise ValueError("check digit of empty field is undefined")
    total = 0
    for i, c in enumerate(text):
        try:
            v = char_value(c)
        except MrzCharError:
            raise MrzCharError(c, i) from None
        total += v * _CHECK_WEIGHTS[i % 3]
    return total % 10


@dataclass
class Td3Fields:
    document_type: str = ""
    issuing_state: str = ""
    surname: str = ""
    given_names: str = ""
    document_number: str = ""
    nationality: str = ""
    birth_date: str = ""
    sex: str = ""
    expiry_date: str = ""
    personal_number: str = ""


@dataclass
class CheckDigitStatus:
    field: str
    expected: str  # character found in the MRZ
    computed: int
    valid: bool


@dataclass
class MrzRecord:
    line1: str
    line2: str
    fields: Td3Fields = field(default_factory=Td3Fields)
    check_digits: list[CheckDigitStatus] = field(default_factory=list)

    @property
    def lines(self) -> tuple[str, str]:
        return self.line1, self.line2

    def all_checks_valid(self) -> bool:
        return all(c.valid for c in self.check_digits)


@dataclass
class Violation:
    code: str  # length | charset | check_digit | format
    field: str
    position: int
    message: str

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "field": self.field,
            "position": self.position,
            "message": self.message,
        }


@dataclass
class ParseResult:
    record: MrzRecord | None
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations


def _pad(text: str, width: int) -> str:
    return text[:width].ljust(width, FILLER)


_SURNAMES = [
    "ANDERSSON", "BAKER", "CASTILLO", "DUBOIS", "ERIKSSON", "FERRARI",
    "GARCIA", "HOFFMANN", "IVANOV", "JANSSEN", "KOWALSKI", "LARSEN",
    "MOREAU", "NAKAMURA", "OKAFOR", "PETROV", "QUINN", "ROSSI",
    "SILVA", "TANAKA", "UDDIN", "VARGA", "WEBER", "XIA", "YILMAZ", "ZHANG",
]
_GIVEN = [
    "ANNA", "BORIS", "CLARA", "DAVID", "EMMA", "FELIX", "GRETA", "HUGO",
    "INES", "JONAS", "KAMIL", "LENA", "MARCO", "NORA", "OTTO", "PETRA",
    "QUIM", "ROSA", "SAMIR", "TOVA", "ULRIK", "VERA", "WANJA", "XENIA",
    "YUSUF", "ZOFIA",
]
_STATES = [
    "UTO", "XAA", "XBB", "XCC", "XDD", "XEE", "XFF", "XGG", "XHH",
    "XII", "XJJ", "XKK", "XLL", "XMM",
]


def generate_record(rng_seed: int, *, surnames=None, given_names=None, states=None) -> MrzRecord:
    """Deterministically generate a TD3-conformant record with valid check digits.

    Name, state, and number pools are configurable; defaults are synthetic.
    """
    rng = random.Random(rng_seed)
    surnames = surnames or _SURNAMES
    given_names = given_names or _GIVEN
    states = states or _STATES

    state = rng.choice(states)
    nationality = rng.choice(states)
    surname = rng.choice(surnames)
    givens = rng.sample(given_names, rng.randint(1, 2))
    name_field = _pad(surname + FILLER * 2 + FILLER.join(givens), 39)

    doc_number = "".join(rng.choice("0123456789ABCDEFGHJKLMNPRSTUVWXYZ") for _ in range(9))
    birth = f"{rng.randint(50, 99):02d}{rng.randint(1, 12):02d}{rng.randint(1, 28):02d}"
    sex = rng.choice("MF<")
    expiry = f"{rng.randint(20, 39):02d}{rng.randint(1, 12):02d}{rng.randint(1, 28):02d}"
    if rng.random() < 0.5:
        personal = _pad("".join(rng.choice("0123456789") for _ in range(rng.randint(4, 10))), 14)
    else:
        personal = FILLER * 14

    line1 = _pad("P" + FILLER + state + name_field, LINE_LENGTH)
    cd_doc = compute_check_digit(doc_number)
    cd_birth = compute_check_digit(birth)
    cd_expiry = compute_check_digit(expiry)
    cd_personal = compute_check_digit(personal)
    composite_src = f"{doc_number}{cd_doc}{birth}{cd_birth}{expiry}{cd_expiry}{personal}{cd_personal}"
    cd_composite = compute_check_digit(composite_src)
    line2 = (
        f"{doc_number}{cd_doc}{nationality}{birth}{cd_birth}{sex}"
        f"{expiry}{cd_expiry}{personal}{cd_personal}{cd_composite}"
    )
    assert len(line1) == LINE_LENGTH and len(line2) == LINE_LENGTH

    result = parse_td3(line1, line2)
    assert result.record is not None and result.ok, "generator produced an invalid record"
    return result.record


def _charset_violations(line: str, name: str) -> list[Violation]:
    out = []
    for i, c in enumerate(line):
        if c not in INDEX_OF:
            out.append(Violation("charset", name, i, f"character {c!r} not in MRZ alphabet"))
    return out


def _check(field_name: str, value: str, check_char: str, violations: list[Violation],
           position: int, allow_filler_when_empty: bool = False) -> CheckDigitStatus:
    computed = compute_check_digit(value)
    if allow_filler_when_empty and check_char == FILLER and set(value) <= {FILLER}:
        valid = True
    else:
        valid = check_char == str(computed)
    if not valid:
        violations.append(Violation(
            "check_digit", field_name, position,
            f"check digit {check_char!r} does not match computed {computed}",
        ))
    return CheckDigitStatus(field_name, check_char, computed, valid)


def parse_td3(line1: str, line2: str) -> ParseResult:
    """Parse and validate a TD3 MRZ; malformed input yields violations, not aborts.

    The record is populated whenever both lines have length 44 (so imperfect
    recognizer output still yields fields); charset and check-digit problems
    are reported alongside.
    """
    violations: list[Violation] = []
    if len(line1) != LINE_LENGTH:
        violations.append(Violation("length", "line1", len(line1),
                                    f"line1 has length {len(line1)}, expected {LINE_LENGTH}"))
    if len(line2) != LINE_LENGTH:
        violations.append(Violation("length", "line2", len(line2),
                                    f"line2 has length {len(line2)}, expected {LINE_LENGTH}"))
    if violations:
        return ParseResult(None, violations)

    violations += _charset_violations(line1, "line1")
    violations += _charset_violations(line2, "line2")
    if violations:
        return ParseResult(None, violations)

    name_field = line1[5:44]
    if "<<" in name_field:
        surname, rest = name_field.split("<<", 1)
    else:
        surname, rest = name_field, ""
    fields = Td3Fields(
        document_type=line1[0:2].rstrip(FILLER),
        issuing_state=line1[2:5],
        surname=surname.replace(FILLER, " ").strip(),
        given_names=" ".join(p for p in rest.split(FILLER) if p),
        document_number=line2[0:9],
        nationality=line2[10:13],
        birth_date=line2[13:19],
        sex=line2[20],
        expiry_date=line2[21:27],
        personal_number=line2[28:42],
    )

    if not line1.startswith("P"):
        violations.append(Violation("format", "document_type", 0,
                                    f"document type {line1[0]!r} is not 'P'"))
    for fname, value, pos in (("birth_date", fields.birth_date, 13),
                              ("expiry_date", fields.expiry_date, 21)):
        if not value.isdigit():
            violations.append(Violation("format", fname, pos, f"{fname} {value!r} is not numeric"))
    if fields.sex not in "MF<":
        violations.append(Violation("format", "sex", 20, f"sex {fields.sex!r} not in M/F/<"))

    checks = [
        _check("document_number", fields.document_number, line2[9], violations, 9),
        _check("birth_date", fields.birth_date, line2[19], violations, 19),
        _check("expiry_date", fields.expiry_date, line2[27], violations, 27),
        _check("personal_number", fields.personal_number, line2[42], violations, 42,
               allow_filler_when_empty=True),
        _check("composite", line2[0:10] + line2[13:20] + line2[21:43], line2[43], violations, 43),
    ]
    record = MrzRecord(line1, line2, fields, checks)
    return ParseResult(record, violations)


def text_to_indices(line1: str, line2: str) -> list[int]:
    """Encode two 44-char lines as 88 class indices, line 1 first (row-major)."""
    if len(line1) != LINE_LENGTH or len(line2) != LINE_LENGTH:
        raise ValueError("both lines must have length 44")
    out = []
    for pos, c in enumerate(line1 + line2):
        if c not in INDEX_OF:
            raise MrzCharError(c, pos)
        out.append(INDEX_OF[c])
    return out


def indices_to_text(indices) -> tuple[str, str]:
    """Inverse of :func:`text_to_indices`."""
    idx = list(indices)
    if len(idx) != NUM_POSITIONS:
        raise ValueError(f"expected {NUM_POSITIONS} indices, got {len(idx)}")
    chars = []
    for i, k in enumerate(idx):
        k = int(k)
        if not 0 <= k < VOCAB_SIZE:
            raise ValueError(f"class index {k} at position {i} is out of range [0, {VOCAB_SIZE - 1}]")
        chars.append(SYMBOLS[k])
    text = "".join(chars)
    return text[:LINE_LENGTH], text[LINE_LENGTH:]
