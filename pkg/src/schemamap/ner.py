"""Rule- and lexicon-based entity labeling of column values.

Assigns one label from the closed :class:`~schemamap.core.EntityLabel`
taxonomy to a value or to a whole column sample list. Rules run in a fixed
precedence order: exact, high-precision patterns (email, URL, card numbers,
timestamps) before dictionary-backed fuzzy categories (states, cities,
names). The same precedence breaks plurality ties when aggregating a column.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from schemamap.core import EntityLabel, SourceColumn

SEQ_START = "⟨s⟩"  # ⟨s⟩
SEQ_END = "⟨/s⟩"  # ⟨/s⟩
SEP_TOKEN = "[SEP]"

K_MAX_LIMIT = 6


@dataclass(frozen=True)
class SerializedSequence:
    """Column samples rendered as one delimited sequence string."""

    text: str
    k: int


@dataclass(frozen=True)
class LabelVerdict:
    """Aggregate label for a column plus the per-value votes behind it."""

    label: EntityLabel
    per_value_labels: tuple[EntityLabel, ...]
    confidence: float  # agreeing / non-empty values, 0 when all empty


def serialize_samples(samples: list[str] | tuple[str, ...], k_max: int = K_MAX_LIMIT) -> SerializedSequence:
    """Join the first ``min(len(samples), k_max)`` samples into one sequence.

    Output shape: ``⟨s⟩value1[SEP]value2[SEP]...valuek⟨/s⟩``.
    """
    if not samples:
        raise ValueError("samples must be non-empty")
    if not 1 <= k_max <= K_MAX_LIMIT:
        raise ValueError(f"k_max must be in [1, {K_MAX_LIMIT}], got {k_max}")
    window = list(samples[: min(len(samples), k_max)])
    return SerializedSequence(
        text=SEQ_START + SEP_TOKEN.join(window) + SEQ_END,
        k=len(window),
    )


# ---------------------------------------------------------------------------
# Lexicons
# ---------------------------------------------------------------------------

_LEXICON_FILES = {
    "given_names": "given_names.txt",
    "surnames": "surnames.txt",
    "cities": "cities.txt",
    "states": "states_provinces.txt",
    "state_abbreviations": "state_abbreviations.txt",
    "countries": "countries.txt",
    "corporate_suffixes": "corporate_suffixes.txt",
    "street_words": "street_words.txt",
    "units": "units.txt",
    "genders": "genders.txt",
    "currency_codes": "currency_codes.txt",
    "brands": "brands.txt",
}


def _read_lexicon(path: Path) -> frozenset[str]:
    entries = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        entry = line.strip().lower()
        if entry:
            entries.add(entry)
    return frozenset(entries)


@dataclass(frozen=True)
class Lexicons:
    """Dictionary sets backing the fuzzy label rules; immutable after load."""

    given_names: frozenset[str]
    surnames: frozenset[str]
    cities: frozenset[str]
    states: frozenset[str]
    state_abbreviations: frozenset[str]
    countries: frozenset[str]
    corporate_suffixes: frozenset[str]
    street_words: frozenset[str]
    units: frozenset[str]
    genders: frozenset[str]
    currency_codes: frozenset[str]
    brands: frozenset[str]

    @classmethod
    def from_dir(cls, directory: str | Path) -> "Lexicons":
        """Load all lexicon files (one lowercase entry per line) from a directory."""
        directory = Path(directory)
        kwargs = {}
        for attr, filename in _LEXICON_FILES.items():
            path = directory / filename
            if not path.is_file():
                raise FileNotFoundError(f"missing lexicon file: {path}")
            kwargs[attr] = _read_lexicon(path)
        return cls(**kwargs)


@lru_cache(maxsize=1)
def default_lexicons() -> Lexicons:
    """Lexicons shipped with the package."""
    data_dir = resources.files("schemamap.data") / "lexicons"
    with resources.as_file(data_dir) as path:
        return Lexicons.from_dir(path)


# ---------------------------------------------------------------------------
# Value rules
# ---------------------------------------------------------------------------

_EMAIL_RE = re.compile(r"^[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(\.[A-Za-z0-9-]+)+$")
_URL_RE = re.compile(r"^(https?://|ftp://|www\.)\S+$", re.IGNORECASE)
_CARD_SEP_RE = re.compile(r"[\s-]")
_TIME_WITH_SECONDS_RE = re.compile(r"\d{1,2}:\d{2}:\d{2}")
_PHONE_RE = re.compile(r"^\+?[\d\s().\-]{6,24}$")
_ZIP_RES = (
    re.compile(r"^\d{5}$"),
    re.compile(r"^\d{5}-\d{4}$"),
    re.compile(r"^[A-Za-z]\d[A-Za-z]\s?\d[A-Za-z]\d$"),  # Canadian
    re.compile(r"^[A-Za-z]{1,2}\d[A-Za-z\d]?\s?\d[A-Za-z]{2}$"),  # UK
)
_CURRENCY_SYMBOLS = "$€£¥₹"
_AMOUNT = r"\d[\d,]*(?:\.\d+)?"
_PRICE_RES = (
    re.compile(rf"^[{_CURRENCY_SYMBOLS}]\s?{_AMOUNT}$"),
    re.compile(rf"^{_AMOUNT}\s?[{_CURRENCY_SYMBOLS}]$"),
    re.compile(rf"^([A-Za-z]{{3}})\s?{_AMOUNT}$"),
    re.compile(rf"^{_AMOUNT}\s?([A-Za-z]{{3}})$"),
)
_WEIGHT_RE = re.compile(r"^\d+(?:[.,]\d+)?\s?([A-Za-z]+)$")
_ADDRESS_START_RE = re.compile(r"^\d+\s+\S+")
_MIDDLE_INITIAL_RE = re.compile(r"^[A-Za-z]\.?$")
_ISO_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

_DATE_FORMATS = (
    "%m/%d/%Y",
    "%d/%m/%Y",
    "%Y/%m/%d",
    "%m-%d-%Y",
    "%d-%b-%Y",
    "%b %d, %Y",
    "%B %d, %Y",
    "%d %b %Y",
    "%d %B %Y",
)


def _luhn_ok(digits: str) -> bool:
    total = 0
    for i, ch in enumerate(reversed(digits)):
        d = ord(ch) - 48
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


def _is_timestamp(value: str) -> bool:
    # full datetime with at least second resolution
    if "T" not in value and " " not in value:
        return False
    if not _TIME_WITH_SECONDS_RE.search(value):
        return False
    from datetime import datetime

    try:
        datetime.fromisoformat(value.replace("Z", "+00:00"))
        return True
    except ValueError:
        return False


def _is_date(value: str) -> bool:
    from datetime import date, datetime

    if _ISO_DATE_RE.match(value):
        try:
            date.fromisoformat(value)
            return True
        except ValueError:
            return False
    for fmt in _DATE_FORMATS:
        try:
            datetime.strptime(value, fmt)
            return True
        except ValueError:
            continue
    return False


class RuleLabeler:
    """Deterministic value labeler. Immutable after construction.

    Rule precedence (first match wins) is the order of ``_rules``; the same
    order breaks plurality ties in :meth:`label_column`.
    """

    def __init__(self, lexicons: Lexicons | None = None):
        self.lexicons = lexicons or default_lexicons()
        lx = self.lexicons
        self._currency_codes = lx.currency_codes
        # (label, predicate) pairs in precedence order
        self._rules: tuple[tuple[EntityLabel, object], ...] = (
            (EntityLabel.EMAIL, self._match_email),
            (EntityLabel.URL, self._match_url),
            (EntityLabel.CREDIT_CARD_NUMBER, self._match_credit_card),
            (EntityLabel.TIMESTAMPS, self._match_timestamp),
            (EntityLabel.DATES, self._match_date),
            (EntityLabel.PHONE_NUMBER, self._match_phone),
            (EntityLabel.ZIP_POSTAL_CODE, self._match_zip),
            (EntityLabel.PRICES, self._match_price),
            (EntityLabel.CURRENCIES, self._match_currency),
            (EntityLabel.WEIGHTS_UNITS, self._match_weight),
            (EntityLabel.GENDER, self._match_gender),
            (EntityLabel.PROVINCE_STATE, self._match_state),
            (EntityLabel.COUNTRY, self._match_country),
            (EntityLabel.CITY, self._match_city),
            (EntityLabel.ADDRESS_LINE, self._match_address),
            (EntityLabel.BUSINESS_NAME, self._match_business),
            (EntityLabel.FULL_NAME, self._match_full_name),
            (EntityLabel.FIRST_NAME, self._match_first_name),
            (EntityLabel.LAST_NAME, self._match_last_name),
            (EntityLabel.MIDDLE_NAME, self._match_middle_name),
            (EntityLabel.PRODUCT_NAME, self._match_product),
        )
        self._precedence: dict[EntityLabel, int] = {
            label: i for i, (label, _) in enumerate(self._rules)
        }
        self._precedence[EntityLabel.FREE_TEXT] = len(self._rules)

    # -- pattern rules ------------------------------------------------------

    @staticmethod
    def _match_email(v: str) -> bool:
        return bool(_EMAIL_RE.match(v))

    @staticmethod
    def _match_url(v: str) -> bool:
        return bool(_URL_RE.match(v))

    @staticmethod
    def _match_credit_card(v: str) -> bool:
        digits = _CARD_SEP_RE.sub("", v)
        return 13 <= len(digits) <= 19 and digits.isdigit() and _luhn_ok(digits)

    @staticmethod
    def _match_timestamp(v: str) -> bool:
        return _is_timestamp(v)

    @staticmethod
    def _match_date(v: str) -> bool:
        return _is_date(v)

    @staticmethod
    def _match_phone(v: str) -> bool:
        if not _PHONE_RE.match(v):
            return False
        if any(rx.match(v) for rx in _ZIP_RES):  # don't swallow zip+4 codes
            return False
        n_digits = sum(ch.isdigit() for ch in v)
        return 7 <= n_digits <= 15

    @staticmethod
    def _match_zip(v: str) -> bool:
        return any(rx.match(v) for rx in _ZIP_RES)

    def _match_price(self, v: str) -> bool:
        for rx in _PRICE_RES:
            m = rx.match(v)
            if not m:
                continue
            if m.groups():  # three-letter code variant must be a known code
                return m.group(1).lower() in self._currency_codes
            return True
        return False

    def _match_currency(self, v: str) -> bool:
        if v in _CURRENCY_SYMBOLS:
            return True
        return v.lower() in self._currency_codes

    def _match_weight(self, v: str) -> bool:
        m = _WEIGHT_RE.match(v)
        return bool(m) and m.group(1).lower() in self.lexicons.units

    def _match_gender(self, v: str) -> bool:
        return v.lower() in self.lexicons.genders

    def _match_state(self, v: str) -> bool:
        if len(v) == 2 and v.isalpha():
            # two-letter abbreviations only match in uppercase form
            return v.isupper() and v.lower() in self.lexicons.state_abbreviations
        return v.lower() in self.lexicons.states

    def _match_country(self, v: str) -> bool:
        return v.lower().replace(".", "") in self.lexicons.countries

    def _match_city(self, v: str) -> bool:
        return v.lower() in self.lexicons.cities

    def _match_address(self, v: str) -> bool:
        if not _ADDRESS_START_RE.match(v):
            return False
        tokens = [t.strip(".,#").lower() for t in v.split()]
        return any(t in self.lexicons.street_words for t in tokens[1:])

    def _match_business(self, v: str) -> bool:
        tokens = [t.strip(".,&").lower() for t in re.split(r"[\s,]+", v) if t]
        if len(tokens) < 2:
            return False
        return any(t in self.lexicons.corporate_suffixes for t in tokens)

    def _name_tokens(self, v: str) -> list[str] | None:
        tokens = [t.strip(".") for t in v.split()]
        if not 2 <= len(tokens) <= 4:
            return None
        for t in tokens:
            if not t or not t[0].isupper() or not t.replace("-", "").replace("'", "").isalpha():
                return None
        return tokens

    def _match_full_name(self, v: str) -> bool:
        tokens = self._name_tokens(v)
        if tokens is None:
            return False
        return (
            tokens[0].lower() in self.lexicons.given_names
            and tokens[-1].lower() in self.lexicons.surnames
        )

    def _match_first_name(self, v: str) -> bool:
        return " " not in v.strip() and v.strip().lower() in self.lexicons.given_names

    def _match_last_name(self, v: str) -> bool:
        return " " not in v.strip() and v.strip().lower() in self.lexicons.surnames

    @staticmethod
    def _match_middle_name(v: str) -> bool:
        return bool(_MIDDLE_INITIAL_RE.match(v))

    def _match_product(self, v: str) -> bool:
        tokens = v.split()
        if len(tokens) < 2:
            return False
        has_brand = any(t.strip(".,").lower() in self.lexicons.brands for t in tokens)
        has_model = any(any(ch.isdigit() for ch in t) for t in tokens)
        return has_brand and has_model

    # -- public API ---------------------------------------------------------

    def label_value(self, value: str) -> EntityLabel:
        """Label a single value; total function, FreeText when nothing matches."""
        v = value.strip()
        if not v:
            return EntityLabel.FREE_TEXT
        for label, predicate in self._rules:
            if predicate(v):  # type: ignore[operator]
                return label
        return EntityLabel.FREE_TEXT

    def label_column(self, column: SourceColumn, k_max: int = K_MAX_LIMIT) -> LabelVerdict:
        """Label a column by plurality vote over its first ``k_max`` samples.

        Empty values vote FreeText individually but are excluded from the
        aggregate; ties go to the rule checked earlier.
        """
        if not 1 <= k_max <= K_MAX_LIMIT:
            raise ValueError(f"k_max must be in [1, {K_MAX_LIMIT}], got {k_max}")
        window = list(column.samples[: min(len(column.samples), k_max)])
        per_value = tuple(self.label_value(v) for v in window)
        non_empty = [lbl for v, lbl in zip(window, per_value) if v.strip()]
        if not non_empty:
            return LabelVerdict(EntityLabel.FREE_TEXT, per_value, 0.0)
        counts = Counter(non_empty)
        best = min(counts, key=lambda lbl: (-counts[lbl], self._precedence[lbl]))
        return LabelVerdict(best, per_value, counts[best] / len(non_empty))

    def precedence(self, label: EntityLabel) -> int:
        return self._precedence[label]


@lru_cache(maxsize=1)
def default_labeler() -> RuleLabeler:
    return RuleLabeler()


def label_value(value: str) -> EntityLabel:
    return default_labeler().label_value(value)


def label_column(column: SourceColumn, k_max: int = K_MAX_LIMIT) -> LabelVerdict:
    return default_labeler().label_column(column, k_max)
