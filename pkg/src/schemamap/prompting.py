"""Prompt assembly, the token-count ledger, and matcher backends.

A prompt is rendered from a template with four placeholders (instruction,
options, examples, query) in that section order. Alongside the text we keep
a budget: the exact whitespace-token count plus its decomposition into
instruction overhead, per-option and per-example means, so compression
effects can be reported as ``overhead + N * (option + M * example)``.

Two backends answer a prompt: a deterministic similarity-argmax oracle for
offline runs and tests, and a remote completion endpoint speaking a minimal
JSON protocol.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from schemamap.core import MappingResult, Provenance, UNMAPPED
from schemamap.filters import ColumnQuery, CompressedChoices
from schemamap.similarity import SimilarityMeasure


class TemplateError(ValueError):
    """Raised when a prompt template is missing a required placeholder."""


class BackendUnavailableError(RuntimeError):
    """Remote backend could not be reached after all retries."""


class RemoteBackendError(RuntimeError):
    """Remote backend answered with a non-retryable error."""


PLACEHOLDERS = ("instruction", "options", "examples", "query")

DEFAULT_INSTRUCTION = (
    "You are matching a column from an incoming table to one attribute of "
    "the destination schema. Exactly one of the numbered choices below is "
    "the correct destination. Reply with the name of that attribute and "
    "nothing else."
)

KEY_INSTRUCTION = (
    "The columns below are candidates for the unique record key of the "
    "mapped table. Pick the single column most likely to uniquely identify "
    "each record. Reply with the name of that column and nothing else."
)


def default_template() -> str:
    return (
        resources.files("schemamap.data")
        .joinpath("templates/attribute_prompt.txt")
        .read_text(encoding="utf-8")
    )


def load_template(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


@dataclass(frozen=True)
class Prompt:
    instruction: str
    option_block: str
    example_block: str
    query_block: str
    rendered: str


def count_tokens(text: str) -> int:
    """Whitespace-delimited token count; the ledger's unit of account."""
    return len(text.split())


@dataclass(frozen=True)
class PromptBudget:
    """Token ledger for one prompt.

    ``exact_tokens`` is authoritative; ``l_input`` is its reconstruction from
    the decomposition ``l_instruct + n * (mean_option + m_effective *
    mean_example)`` and agrees up to rounding of the means.
    """

    l_instruct: int
    n_options: int
    mean_option_tokens: float
    m_effective: float
    mean_example_tokens: float
    l_input: int
    exact_tokens: int

    def to_dict(self) -> dict:
        return {
            "l_instruct": self.l_instruct,
            "n_options": self.n_options,
            "mean_option_tokens": self.mean_option_tokens,
            "m_effective": self.m_effective,
            "mean_example_tokens": self.mean_example_tokens,
            "l_input": self.l_input,
            "exact_tokens": self.exact_tokens,
        }


def projected_input_tokens(
    l_instruct: float,
    n_options: float,
    mean_option_tokens: float,
    shots: float,
    mean_example_tokens: float,
) -> float:
    """Prompt length implied by the decomposition, for what-if arithmetic."""
    return l_instruct + n_options * (mean_option_tokens + shots * mean_example_tokens)


_PLACEHOLDER_RE = re.compile(r"\{(instruction|options|examples|query)\}")


def build_prompt(
    choices: CompressedChoices,
    query: ColumnQuery,
    template: str | None = None,
    instruction: str = DEFAULT_INSTRUCTION,
    query_values: int = 1,
) -> tuple[Prompt, PromptBudget]:
    """Render the matching prompt for one column and compute its budget.

    Options are numbered 1..N in database order; each kept exemplar becomes
    one labeled example line; the query block shows the column name and up to
    ``query_values`` sample values. Deterministic for identical inputs.
    """
    if len(choices.options) == 0:
        raise ValueError("cannot build a prompt with zero options")
    if template is None:
        template = default_template()
    missing = [p for p in PLACEHOLDERS if "{%s}" % p not in template]
    if missing:
        raise TemplateError(f"template missing placeholder(s): {missing}")

    option_lines = [
        f"{i + 1}. {opt.text}" for i, opt in enumerate(choices.options)
    ]
    option_block = "Choices:\n" + "\n".join(option_lines)

    example_lines = []
    for opt in choices.options:
        for kept in choices.examples_for(opt.attribute_id):
            example_lines.append(f'"{kept.text}" -> {opt.text}')
    example_block = (
        "Previously mapped column names:\n" + "\n".join(example_lines)
        if example_lines
        else ""
    )

    query_lines = [f"Column name: {query.name}"]
    for value in query.values[: max(query_values, 0)]:
        query_lines.append(f"Sample value: {value}")
    query_block = "Column to map:\n" + "\n".join(query_lines)

    mapping = {
        "instruction": instruction,
        "options": option_block,
        "examples": example_block,
        "query": query_block,
    }
    rendered = _PLACEHOLDER_RE.sub(lambda m: mapping[m.group(1)], template)

    exact = count_tokens(rendered)
    option_tokens = sum(count_tokens(line) for line in option_lines)
    example_tokens = sum(count_tokens(line) for line in example_lines)
    n = len(choices.options)
    n_examples = len(example_lines)
    mean_option = option_tokens / n
    m_effective = n_examples / n
    mean_example = example_tokens / n_examples if n_examples else 0.0
    l_instruct = exact - option_tokens - example_tokens
    l_input = round(
        projected_input_tokens(l_instruct, n, mean_option, m_effective, mean_example)
    )
    prompt = Prompt(
        instruction=instruction,
        option_block=option_block,
        example_block=example_block,
        query_block=query_block,
        rendered=rendered,
    )
    budget = PromptBudget(
        l_instruct=l_instruct,
        n_options=n,
        mean_option_tokens=mean_option,
        m_effective=m_effective,
        mean_example_tokens=mean_example,
        l_input=l_input,
        exact_tokens=exact,
    )
    return prompt, budget


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleBackend:
    """Deterministic offline matcher: similarity argmax over options and
    their kept exemplars."""

    measure: SimilarityMeasure
    kind: str = "oracle"


@dataclass(frozen=True)
class RemoteLLMBackend:
    """Config for a remote completion endpoint.

    Speaks a single JSON shape: POST {model, prompt, max_tokens,
    temperature: 0} -> {text}. Adapters for vendor-specific schemas sit
    outside this module.
    """

    endpoint: str
    model: str
    auth_token_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_tokens: int = 32
    kind: str = "llm"


MatcherBackend = OracleBackend | RemoteLLMBackend


def match_oracle(
    choices: CompressedChoices,
    query: ColumnQuery,
    measure: SimilarityMeasure,
) -> MappingResult:
    """Pick the option whose text or kept exemplars best match the query name.

    Score of an option is the max of its own similarity and its exemplars';
    ties go to the lower option index. Confidence is the winning score.
    """
    if len(choices.options) == 0:
        raise ValueError("oracle needs at least one option")
    best_pos = 0
    best_score = -1.0
    for pos, opt in enumerate(choices.options):
        score = measure.score(query.name, opt.text)
        for kept in choices.examples_for(opt.attribute_id):
            score = max(score, measure.score(query.name, kept.text))
        if score > best_score:
            best_score = score
            best_pos = pos
    winner = choices.options[best_pos]
    return MappingResult(
        source=query.name,
        object_type=choices.object_type,
        predicted_attribute=winner.attribute_id,
        confidence=min(1.0, max(0.0, best_score)),
        provenance=Provenance.ORACLE,
    )


_RETRYABLE_EXE = (requests.ConnectionError, requests.Timeout)


def match_llm(prompt: Prompt | str, backend: RemoteLLMBackend) -> str:
    """Send the rendered prompt to the completion endpoint; return raw text.

    Network failures and 5xx responses are retried with exponential backoff
    up to ``max_retries``; other non-2xx responses raise immediately with a
    body excerpt. Answer parsing is the caller's job.
    """
    rendered = prompt.rendered if isinstance(prompt, Prompt) else prompt
    payload = {
        "model": backend.model,
        "prompt": rendered,
        "max_tokens": backend.max_tokens,
        "temperature": 0,
    }
    headers = {}
    if backend.auth_token_env:
        token = os.environ.get(backend.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"

    last_error: str = "no attempt made"
    attempts = backend.max_retries + 1
    for attempt in range(attempts):
        if attempt:
            time.sleep(backend.backoff_base * (2 ** (attempt - 1)))
        try:
            response = requests.post(
                backend.endpoint, json=payload, headers=headers, timeout=backend.timeout
            )
        except _RETRYABLE_EXE as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            continue
        if response.status_code >= 500:
            last_error = f"HTTP {response.status_code}: {response.text[:200]}"
            continue
        if not 200 <= response.status_code < 300:
            raise RemoteBackendError(
                f"backend returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            text = response.json()["text"]
        except (ValueError, KeyError) as exc:
            raise RemoteBackendError(
                f"backend response missing 'text' field: {response.text[:200]}"
            ) from exc
        return str(text)
    raise BackendUnavailableError(
        f"backend unavailable after {attempts} attempt(s); last error: {last_error}"
    )


# ---------------------------------------------------------------------------
# Answer parsing
# ---------------------------------------------------------------------------

PARSE_CONFIDENCE_EXACT = 1.0
PARSE_CONFIDENCE_NUMBER = 0.9
PARSE_CONFIDENCE_SUBSTRING = 0.7

_NUMBER_ANSWER_RE = re.compile(r"(?:option\s*)?#?(\d+)\.?", re.IGNORECASE)


def parse_answer(raw: str, choices: CompressedChoices, source: str = "") -> MappingResult:
    """Resolve a raw completion against the offered choices.

    Tiers: exact option-text match (case-insensitive), then an option number
    ("2", "option 2"), then containment of exactly one option text. Anything
    else maps to "unmapped" with confidence 0; the result can never name an
    option that was not offered.
    """
    stripped = raw.strip(" \t\r\n'\"`.")
    lowered = stripped.lower()

    for opt in choices.options:
        if opt.text.lower() == lowered:
            return MappingResult(
                source=source,
                object_type=choices.object_type,
                predicted_attribute=opt.attribute_id,
                confidence=PARSE_CONFIDENCE_EXACT,
                provenance=Provenance.LLM,
            )

    number_match = _NUMBER_ANSWER_RE.fullmatch(stripped)
    if number_match:
        position = int(number_match.group(1))
        if 1 <= position <= len(choices.options):
            return MappingResult(
                source=source,
                object_type=choices.object_type,
                predicted_attribute=choices.options[position - 1].attribute_id,
                confidence=PARSE_CONFIDENCE_NUMBER,
                provenance=Provenance.LLM,
            )

    raw_lower = raw.lower()
    containing = [o for o in choices.options if o.text.lower() in raw_lower]
    if len(containing) == 1:
        return MappingResult(
            source=source,
            object_type=choices.object_type,
            predicted_attribute=containing[0].attribute_id,
            confidence=PARSE_CONFIDENCE_SUBSTRING,
            provenance=Provenance.LLM,
        )

    return MappingResult(
        source=source,
        object_type=choices.object_type,
        predicted_attribute=UNMAPPED,
        confidence=0.0,
        provenance=Provenance.LLM,
    )
