"""Score a completion client on rating examples."""

from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

from .. import metrics
from ..dataset import RatingExample
from .client import CompletionClient
from .parsing import ParsedRating, parse_rating
from .prompt import PromptTemplate, build_prompt

FALLBACKS = ("global_mean", "skip")


class LLMRunError(RuntimeError):
    """The client failed mid-run; whatever finished is in ``partial``."""

    def __init__(self, message: str, partial: list["LLMResult"]):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class LLMResult:
    example_id: int
    label: float
    prompt: str
    response: str
    value: float | None
    failure: str | None

    def to_json(self) -> dict:
        return asdict(self)


class _Transcript:
    def __init__(self, path):
        self._lock = threading.Lock()
        self._fh = open(path, "w", encoding="utf-8") if path is not None else None

    def write(self, result: LLMResult) -> None:
        if self._fh is None:
            return
        with self._lock:
            self._fh.write(json.dumps(result.to_json(), sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def evaluate_llm(client: CompletionClient, examples: Sequence[RatingExample],
                 shots: Callable[[RatingExample], Sequence[RatingExample]] | None = None,
                 template: PromptTemplate = PromptTemplate(), fallback: str = "global_mean",
                 global_mean: float = 3.0, concurrency: int = 4,
                 transcript_path: str | os.PathLike | None = None) -> metrics.MetricsReport:
    """Prompt once per example, parse, and compute the metrics.

    Requests run on at most ``concurrency`` threads. Parse failures are
    replaced by ``global_mean`` or dropped (``fallback="skip"``) and counted
    either way. If the client raises, the finished results are flushed to
    the transcript and an :class:`LLMRunError` carries them.
    """
    if not examples:
        raise ValueError("evaluate_llm needs at least one example")
    if fallback not in FALLBACKS:
        raise ValueError(f"fallback must be one of {FALLBACKS}")
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")

    transcript = _Transcript(transcript_path)

    def run_one(ex: RatingExample) -> LLMResult:
        prompt = build_prompt(ex, shots(ex) if shots else (), template)
        response = client.complete(prompt)
        parsed: ParsedRating = parse_rating(response)
        result = LLMResult(ex.example_id, ex.label, prompt, response, parsed.value, parsed.failure)
        transcript.write(result)
        return result

    results: list[LLMResult] = []
    first_error: BaseException | None = None
    try:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = [pool.submit(run_one, ex) for ex in examples]
            for fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:  # keep collecting so partial results are complete
                    first_error = first_error or exc
    finally:
        transcript.close()
    results.sort(key=lambda r: r.example_id)
    if first_error is not None:
        raise LLMRunError(f"client failed after {len(results)}/{len(examples)} examples: {first_error}",
                          results) from first_error
    return score_results(results, fallback, global_mean, client.describe())


def score_results(results: Sequence[LLMResult], fallback: str = "global_mean", global_mean: float = 3.0,
                  client_info: dict | None = None) -> metrics.MetricsReport:
    failures = sum(r.failure is not None for r in results)
    preds, labels = [], []
    for r in results:
        if r.failure is None:
            preds.append(r.value)
        elif fallback == "global_mean":
            preds.append(global_mean)
        else:
            continue
        labels.append(r.label)
    if not preds:
        raise ValueError("every response failed to parse and fallback='skip' left nothing to score")
    report = metrics.evaluate(preds, labels, n_parse_failures=failures,
                              n_fallbacks=failures if fallback == "global_mean" else 0)
    report.extra.update({"fallback": fallback, "n_requested": len(results), "client": client_info or {}})
    return report
