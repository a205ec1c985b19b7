"""Benchmark harness: corpora, baselines, ablations, sweeps, throughput.

Ships seeded synthetic corpus generators for four domains (person, sales,
products, tickets), two classical baselines (a weighted structural+linguistic
matcher and an embedding+Dice ensemble), and drivers that run any matcher
over labeled corpora and report per-domain accuracy, mean prompt length and
throughput.
"""

from __future__ import annotations

import json
import random
import string
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from schemamap.core import DataType, ObjectType, MappingResult, Provenance, SourceColumn, UNMAPPED, load_target_schema
from schemamap.filters import OptionDatabase, build_databases
from schemamap.ner import default_lexicons
from schemamap.pipeline import Pipeline, PipelineConfig
from schemamap.similarity import (
    WordVectorTable,
    embedding_cosine_detail,
    sorensen_dice,
    tokenize_identifier,
)

# ---------------------------------------------------------------------------
# Labeled corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledCase:
    column: SourceColumn
    object_type: str
    truth: str  # ground-truth attribute id


@dataclass
class LabeledCorpus:
    domain: str
    cases: list

    def __len__(self) -> int:
        return len(self.cases)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "cases": [
                {
                    "name": c.column.name,
                    "dtype": c.column.declared_dtype.value if c.column.declared_dtype else None,
                    "samples": list(c.column.samples),
                    "object_type": c.object_type,
                    "truth": c.truth,
                }
                for c in self.cases
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "LabeledCorpus":
        cases = [
            LabeledCase(
                column=SourceColumn(
                    name=c["name"],
                    samples=tuple(c.get("samples", ())),
                    declared_dtype=DataType(c["dtype"]) if c.get("dtype") else None,
                ),
                object_type=c["object_type"],
                truth=c["truth"],
            )
            for c in doc["cases"]
        ]
        return cls(domain=doc["domain"], cases=cases)

    @classmethod
    def load(cls, path: str | Path) -> "LabeledCorpus":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def perturb_prefix(corpus: LabeledCorpus, prefix: str) -> LabeledCorpus:
    """Copy of the corpus with every column name prefixed; truth unchanged."""
    cases = [
        LabeledCase(
            column=SourceColumn(
                name=prefix + c.column.name,
                samples=c.column.samples,
                declared_dtype=c.column.declared_dtype,
            ),
            object_type=c.object_type,
            truth=c.truth,
        )
        for c in corpus.cases
    ]
    return LabeledCorpus(domain=corpus.domain, cases=cases)


# ---------------------------------------------------------------------------
# Synthetic value generators
# ---------------------------------------------------------------------------

_WORDS = [
    "report", "issue", "error", "login", "page", "crash", "slow", "timeout",
    "update", "feature", "request", "billing", "account", "export", "search",
]
_STATUS_WORDS = ["open", "closed", "pending", "shipped", "cancelled", "resolved"]
_PRIORITY_WORDS = ["low", "medium", "high", "critical", "urgent"]
_CATEGORY_WORDS = [
    "electronics", "grocery", "apparel", "furniture", "toys", "sports",
    "beauty", "automotive",
]
_COMPANY_BASES = [
    "acme", "global", "northwind", "cascade", "summit", "pioneer",
    "evergreen", "harbor", "crescent", "atlas",
]
_COMPANY_FIELDS = [
    "retail", "logistics", "consulting", "analytics", "systems", "trading",
    "media", "foods", "energy", "labs",
]
_COMPANY_SUFFIXES = ["Inc.", "LLC", "Corp.", "Ltd.", "GmbH"]
_STREET_NAMES = ["main", "oak", "maple", "cedar", "pine", "elm", "lake", "hill", "park", "river"]
_STREET_SUFFIXES = ["St", "Ave", "Rd", "Blvd", "Ln", "Dr"]
_EMAIL_DOMAINS = ["example.com", "mail.test", "inbox.example.org"]
_PRODUCT_MODELS = ["phone", "laptop", "tablet", "watch", "camera", "speaker", "monitor", "router"]
_CURRENCY_CHOICES = ["USD", "EUR", "GBP", "JPY", "CAD", "AUD"]
_WEIGHT_UNITS = ["lbs", "kg", "oz", "ct", "g"]


class _GeneratorVocab:
    """Sorted lexicon views so seeded sampling is reproducible across runs."""

    def __init__(self):
        lx = default_lexicons()
        self.given = sorted(lx.given_names)
        self.surnames = sorted(lx.surnames - lx.given_names)
        self.cities = sorted(lx.cities - lx.states - lx.countries)
        self.states = sorted(lx.states)
        self.countries = sorted(
            c for c in lx.countries - lx.states if len(c) > 3
        )
        self.brands = sorted(lx.brands)


_vocab: _GeneratorVocab | None = None


def _get_vocab() -> _GeneratorVocab:
    global _vocab
    if _vocab is None:
        _vocab = _GeneratorVocab()
    return _vocab


def _luhn_checkdigit(digits: str) -> str:
    total = 0
    for i, ch in enumerate(reversed(digits + "0")):
        d = ord(ch) - 48
        if i % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return str((10 - total % 10) % 10)


def _gen_given(rng): return rng.choice(_get_vocab().given).title()
def _gen_surname(rng): return rng.choice(_get_vocab().surnames).title()
def _gen_middle_initial(rng): return rng.choice(string.ascii_uppercase) + "."
def _gen_full_name(rng): return f"{_gen_given(rng)} {_gen_surname(rng)}"


def _gen_business(rng):
    return (
        f"{rng.choice(_COMPANY_BASES).title()} "
        f"{rng.choice(_COMPANY_FIELDS).title()} {rng.choice(_COMPANY_SUFFIXES)}"
    )


def _gen_phone(rng):
    return f"+1-{rng.randint(200, 989)}-555-{rng.randint(1000, 9999)}"


def _gen_email(rng):
    return (
        f"{rng.choice(_get_vocab().given)}.{rng.choice(_get_vocab().surnames)}"
        f"@{rng.choice(_EMAIL_DOMAINS)}"
    )


def _gen_url(rng):
    return f"https://www.{rng.choice(_COMPANY_BASES)}{rng.choice(_COMPANY_FIELDS)}.com"


def _gen_address(rng):
    return (
        f"{rng.randint(10, 9999)} {rng.choice(_STREET_NAMES).title()} "
        f"{rng.choice(_STREET_SUFFIXES)}"
    )


def _gen_city(rng): return rng.choice(_get_vocab().cities).title()
def _gen_state(rng): return rng.choice(_get_vocab().states).title()
def _gen_country(rng): return rng.choice(_get_vocab().countries).title()
def _gen_zip(rng): return f"{rng.randint(10000, 99999)}"


def _gen_date(rng):
    from datetime import date, timedelta

    return (date(1970, 1, 1) + timedelta(days=rng.randint(0, 21900))).isoformat()


def _gen_timestamp(rng):
    from datetime import datetime, timedelta

    base = datetime(2000, 1, 1) + timedelta(
        days=rng.randint(0, 9000), seconds=rng.randint(0, 86399), microseconds=rng.randint(0, 999999)
    )
    return base.isoformat()


def _gen_price(rng): return f"${rng.randint(1, 999)}.{rng.randint(0, 99):02d}"
def _gen_currency(rng): return rng.choice(_CURRENCY_CHOICES)
def _gen_weight(rng): return f"{rng.randint(1, 50)}{rng.choice(_WEIGHT_UNITS)}"
def _gen_small_int(rng): return str(rng.randint(1, 50))
def _gen_order_id(rng): return f"ORD-{rng.randint(100000, 999999)}"
def _gen_ticket_id(rng): return f"TCK-{rng.randint(10000, 99999)}"
def _gen_sku(rng): return f"SKU-{rng.randint(1000, 99999)}"
def _gen_status(rng): return rng.choice(_STATUS_WORDS)
def _gen_priority(rng): return rng.choice(_PRIORITY_WORDS)
def _gen_category(rng): return rng.choice(_CATEGORY_WORDS)
def _gen_brand(rng): return rng.choice(_get_vocab().brands).title()


def _gen_product(rng):
    size = rng.choice(["64GB", "128GB", "256GB", "13", "15", "2000"])
    return f"{_gen_brand(rng)} {rng.choice(_PRODUCT_MODELS).title()} {size}"


def _gen_credit_card(rng):
    body = "".join(str(rng.randint(0, 9)) for _ in range(15))
    return body + _luhn_checkdigit(body)


def _gen_words(rng):
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(2, 4)))


VALUE_KINDS = {
    "given_name": _gen_given,
    "surname": _gen_surname,
    "middle_initial": _gen_middle_initial,
    "full_name": _gen_full_name,
    "business_name": _gen_business,
    "phone": _gen_phone,
    "email": _gen_email,
    "url": _gen_url,
    "address": _gen_address,
    "city": _gen_city,
    "state": _gen_state,
    "country": _gen_country,
    "zip": _gen_zip,
    "date": _gen_date,
    "timestamp": _gen_timestamp,
    "price": _gen_price,
    "currency": _gen_currency,
    "weight": _gen_weight,
    "small_int": _gen_small_int,
    "order_id": _gen_order_id,
    "ticket_id": _gen_ticket_id,
    "sku": _gen_sku,
    "status_word": _gen_status,
    "priority_word": _gen_priority,
    "category_word": _gen_category,
    "brand_word": _gen_brand,
    "product": _gen_product,
    "credit_card": _gen_credit_card,
    "words": _gen_words,
}


# ---------------------------------------------------------------------------
# Domain registry and corpus generation
# ---------------------------------------------------------------------------

DOMAINS = ("person", "sales", "products", "tickets")


@dataclass(frozen=True)
class DomainSpec:
    name: str
    object_type: ObjectType
    value_kinds: dict  # attribute id -> VALUE_KINDS key
    schema_path: str


def domain_schema_path(domain: str) -> str:
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; available: {DOMAINS}")
    with resources.as_file(
        resources.files("schemamap.data").joinpath(f"domains/{domain}.json")
    ) as path:
        return str(path)


def load_domain(domain: str) -> DomainSpec:
    path = domain_schema_path(domain)
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    object_type = load_target_schema(path)[0]
    kinds = {
        attr["id"]: attr.get("value_kind", "words")
        for ot in doc["object_types"]
        for attr in ot["attributes"]
    }
    return DomainSpec(name=domain, object_type=object_type, value_kinds=kinds, schema_path=path)


def _mutate_name(rng: random.Random, alias: str) -> str:
    style = rng.randrange(4)
    if style == 0:  # camelCase
        parts = alias.split("_")
        return parts[0] + "".join(p.title() for p in parts[1:])
    if style == 1:
        return alias.upper()
    if style == 2:
        return f"src_{alias}"
    return f"{alias}2"


def generate_corpus(
    domain: str,
    n_cases: int,
    seed: int = 0,
    mutate: bool = False,
    noise_rate: float = 0.1,
    max_values: int = 6,
) -> LabeledCorpus:
    """Build a labeled corpus for a domain with a seeded RNG.

    Each case samples an attribute, picks one of its known name variants
    (optionally mutated: camelCase, uppercase, prefixes), and draws 1-6
    values from the attribute's value template, with occasional empty-string
    noise mixed in.
    """
    spec = load_domain(domain)
    rng = random.Random(seed)
    attrs = list(spec.object_type.attributes)
    cases = []
    for _ in range(n_cases):
        attr = rng.choice(attrs)
        alias = rng.choice(list(attr.aliases) or [attr.name.lower()])
        name = _mutate_name(rng, alias) if mutate and rng.random() < 0.5 else alias
        kind = spec.value_kinds.get(attr.id, "words")
        generator = VALUE_KINDS[kind]
        k = rng.randint(1, max_values)
        values = [generator(rng) for _ in range(k)]
        if noise_rate > 0 and k > 1:
            for i in range(k):
                if rng.random() < noise_rate:
                    values[i] = ""
        if all(not v for v in values):  # keep at least one real value
            values[0] = generator(rng)
        cases.append(
            LabeledCase(
                column=SourceColumn(
                    name=name, samples=tuple(values), declared_dtype=attr.dtype
                ),
                object_type=spec.object_type.name,
                truth=attr.id,
            )
        )
    return LabeledCorpus(domain=domain, cases=cases)


def corpus_table(corpus: LabeledCorpus) -> list[SourceColumn]:
    """Flatten corpus cases into one table, de-duplicating column names."""
    seen: dict = {}
    columns = []
    for case in corpus.cases:
        name = case.column.name
        if name in seen:
            seen[name] += 1
            name = f"{name}_{seen[name]}"
        else:
            seen[name] = 1
        columns.append(
            SourceColumn(
                name=name,
                samples=case.column.samples,
                declared_dtype=case.column.declared_dtype,
            )
        )
    return columns


# ---------------------------------------------------------------------------
# Matchers
# ---------------------------------------------------------------------------


class PipelineMatcher:
    """Adapter running the configured pipeline as an evaluation matcher."""

    def __init__(self, pipeline: Pipeline, name: str = "pipeline"):
        self.pipeline = pipeline
        self.name = name
        self._budgets: list = []

    def match(self, column: SourceColumn, object_type: str) -> MappingResult:
        result, budget = self.pipeline.match_column(column, object_type)
        self._budgets.append(budget.exact_tokens)
        return result

    def pop_budgets(self) -> list:
        budgets, self._budgets = self._budgets, []
        return budgets


def _token_set_dice(x: str, y: str) -> float:
    tx, ty = set(tokenize_identifier(x)), set(tokenize_identifier(y))
    if not tx and not ty:
        return 1.0
    if not tx or not ty:
        return 0.0
    return 2 * len(tx & ty) / (len(tx) + len(ty))


#: Tree depth a flat source column is assumed to sit at (object root -> leaf).
_FLAT_SOURCE_DEPTH = 2


def baseline_cupid(
    source: SourceColumn,
    options: OptionDatabase,
    w_struct: float = 0.5,
) -> MappingResult:
    """Weighted structural + linguistic matcher.

    ``wsim = w_struct * ssim + (1 - w_struct) * lsim`` per option, where
    lsim is token-set Dice between the names and ssim averages a dtype-match
    indicator with node-path depth agreement (an interpretation; the
    original system's structural score is richer). Highest wsim wins, ties
    to the lower option index.
    """
    if not options.options:
        raise ValueError("options must be non-empty")
    source_dtype = source.declared_dtype or DataType.STRING
    best_pos, best_score = 0, -1.0
    for pos, opt in enumerate(options.options):
        lsim = _token_set_dice(source.name, opt.text)
        dtype_match = 1.0 if opt.dtype == source_dtype else 0.0
        depth = len(opt.node_path) if opt.node_path else _FLAT_SOURCE_DEPTH
        depth_agreement = 1.0 / (1.0 + abs(depth - _FLAT_SOURCE_DEPTH))
        ssim = (dtype_match + depth_agreement) / 2.0
        wsim = w_struct * ssim + (1.0 - w_struct) * lsim
        if wsim > best_score:
            best_score, best_pos = wsim, pos
    winner = options.options[best_pos]
    return MappingResult(
        source=source.name,
        object_type=options.object_type,
        predicted_attribute=winner.attribute_id,
        confidence=min(1.0, max(0.0, best_score)),
        provenance=Provenance.ORACLE,
    )


#: Added to the ensemble mean when source and option share the exact token set.
_LSD_NAME_BONUS = 0.5


def baseline_lsd(
    source: SourceColumn,
    options: OptionDatabase,
    table: WordVectorTable | None = None,
) -> MappingResult:
    """Ensemble matcher: mean of embedding cosine (unit interval) and
    character-bigram Dice, plus a dominant bonus on exact token-set equality.

    Without a vector table (or out of vocabulary) the cosine term is 0 and
    the decision reduces to the Dice argmax.
    """
    if not options.options:
        raise ValueError("options must be non-empty")
    best_pos, best_score = 0, -1.0
    for pos, opt in enumerate(options.options):
        cos_component = (
            embedding_cosine_detail(source.name, opt.text, table).score if table else 0.0
        )
        dice_component = sorensen_dice(source.name, opt.text)
        score = (cos_component + dice_component) / 2.0
        if set(tokenize_identifier(source.name)) == set(tokenize_identifier(opt.text)):
            score += _LSD_NAME_BONUS
        if score > best_score:
            best_score, best_pos = score, pos
    winner = options.options[best_pos]
    return MappingResult(
        source=source.name,
        object_type=options.object_type,
        predicted_attribute=winner.attribute_id,
        confidence=min(1.0, max(0.0, best_score)),
        provenance=Provenance.ORACLE,
    )


class CupidMatcher:
    def __init__(self, schema: list[ObjectType], w_struct: float = 0.5, name: str = "cupid"):
        self.options = {ot.name: build_databases(ot)[0] for ot in schema}
        self.w_struct = w_struct
        self.name = name

    def match(self, column: SourceColumn, object_type: str) -> MappingResult:
        return baseline_cupid(column, self.options[object_type], self.w_struct)


class LsdMatcher:
    def __init__(
        self,
        schema: list[ObjectType],
        table: WordVectorTable | None = None,
        name: str = "lsd",
    ):
        self.options = {ot.name: build_databases(ot)[0] for ot in schema}
        self.table = table
        self.name = name

    def match(self, column: SourceColumn, object_type: str) -> MappingResult:
        return baseline_lsd(column, self.options[object_type], self.table)


# ---------------------------------------------------------------------------
# Evaluation drivers
# ---------------------------------------------------------------------------


@dataclass
class EvalRow:
    matcher: str
    arm: str
    domain: str
    total: int
    correct: int
    failures: int
    accuracy: float
    mean_l_input: float | None
    columns_per_sec: float
    log: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "matcher": self.matcher,
            "arm": self.arm,
            "domain": self.domain,
            "total": self.total,
            "correct": self.correct,
            "failures": self.failures,
            "accuracy": self.accuracy,
            "mean_l_input": self.mean_l_input,
            "columns_per_sec": self.columns_per_sec,
            "log": self.log,
        }


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def add(self, row: EvalRow) -> None:
        self.rows.append(row)

    def macro_rows(self) -> list:
        """Unweighted mean accuracy across domains per (matcher, arm)."""
        grouped: dict = {}
        for row in self.rows:
            grouped.setdefault((row.matcher, row.arm), []).append(row)
        macro = []
        for (matcher, arm), rows in grouped.items():
            mean_acc = sum(r.accuracy for r in rows) / len(rows)
            liped = [r.mean_l_input for r in rows if r.mean_l_input is not None]
            macro.append(
                {
                    "matcher": matcher,
                    "arm": arm,
                    "domains": len(rows),
                    "macro_accuracy": mean_acc,
                    "mean_l_input": sum(liped) / len(liped) if liped else None,
                }
            )
        return macro

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "macro": self.macro_rows()}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
        )

    def render(self) -> str:
        header = f"{'matcher':<14} {'arm':<10} {'domain':<10} {'acc %':>7} {'mean L':>8} {'cols/s':>9}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            mean_l = f"{r.mean_l_input:8.1f}" if r.mean_l_input is not None else "       -"
            lines.append(
                f"{r.matcher:<14} {r.arm:<10} {r.domain:<10} {100 * r.accuracy:7.2f} "
                f"{mean_l} {r.columns_per_sec:9.1f}"
            )
        lines.append("-" * len(header))
        for m in self.macro_rows():
            mean_l = f"{m['mean_l_input']:8.1f}" if m["mean_l_input"] is not None else "       -"
            lines.append(
                f"{m['matcher']:<14} {m['arm']:<10} {'avg':<10} "
                f"{100 * m['macro_accuracy']:7.2f} {mean_l}"
            )
        return "\n".join(lines)


def eval_matcher(corpus: LabeledCorpus, matcher, arm: str = "default") -> EvalRow:
    """Run a matcher over every case; failures count as incorrect."""
    if not corpus.cases:
        return EvalRow(
            matcher=getattr(matcher, "name", "matcher"),
            arm=arm,
            domain=corpus.domain,
            total=0,
            correct=0,
            failures=0,
            accuracy=0.0,
            mean_l_input=None,
            columns_per_sec=0.0,
        )
    correct = 0
    failures = 0
    log = []
    start = time.perf_counter()
    for case in corpus.cases:
        entry = {"name": case.column.name, "truth": case.truth}
        try:
            result = matcher.match(case.column, case.object_type)
            entry["predicted"] = result.predicted_attribute
        except Exception as exc:  # failures are tallied, not fatal
            failures += 1
            entry["predicted"] = UNMAPPED
            entry["error"] = str(exc)
            log.append(entry)
            continue
        if result.predicted_attribute == case.truth:
            correct += 1
        log.append(entry)
    elapsed = time.perf_counter() - start

    budgets = matcher.pop_budgets() if hasattr(matcher, "pop_budgets") else []
    for entry, l_input in zip((e for e in log if "error" not in e), budgets):
        entry["l_input"] = l_input
    return EvalRow(
        matcher=getattr(matcher, "name", "matcher"),
        arm=arm,
        domain=corpus.domain,
        total=len(corpus.cases),
        correct=correct,
        failures=failures,
        accuracy=correct / len(corpus.cases),
        mean_l_input=sum(budgets) / len(budgets) if budgets else None,
        columns_per_sec=len(corpus.cases) / elapsed if elapsed > 0 else 0.0,
        log=log,
    )


ABLATION_ARMS = {
    "no-filter": (False, False),
    "ner": (True, False),
    "rag": (False, True),
    "both": (True, True),
}


def _arm_config(config: PipelineConfig, arm: str) -> PipelineConfig:
    if arm not in ABLATION_ARMS:
        raise ValueError(f"unknown arm {arm!r}; available: {sorted(ABLATION_ARMS)}")
    ner_on, rag_on = ABLATION_ARMS[arm]
    return replace(config, ner_enabled=ner_on, rag_enabled=rag_on)


def run_ablation(
    corpora: list[LabeledCorpus],
    config: PipelineConfig,
    arms: tuple = ("no-filter", "ner", "rag", "both"),
) -> EvalReport:
    """Evaluate the pipeline on identical corpora under each filter arm."""
    report = EvalReport()
    for arm in arms:
        pipeline = Pipeline(_arm_config(config, arm))
        for corpus in corpora:
            matcher = PipelineMatcher(pipeline, name="pipeline")
            report.add(eval_matcher(corpus, matcher, arm=arm))
    return report


def sweep_kshot(
    corpus: LabeledCorpus,
    config: PipelineConfig,
    shots: list,
) -> EvalReport:
    """One evaluation row per exemplar count, same corpus for every row."""
    deduped = list(dict.fromkeys(shots))
    report = EvalReport()
    for k2 in deduped:
        pipeline = Pipeline(replace(config, k2=k2))
        matcher = PipelineMatcher(pipeline, name="pipeline")
        report.add(eval_matcher(corpus, matcher, arm=f"{k2}-shot"))
    return report


def measure_throughput(
    corpus: LabeledCorpus,
    config: PipelineConfig,
    arms: tuple = ("both", "no-filter"),
) -> EvalReport:
    """Columns/sec and mean prompt length per filter arm on one corpus."""
    report = EvalReport()
    for arm in arms:
        pipeline = Pipeline(_arm_config(config, arm))
        matcher = PipelineMatcher(pipeline, name="pipeline")
        report.add(eval_matcher(corpus, matcher, arm=arm))
    return report
