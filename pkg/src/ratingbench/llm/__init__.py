"""Zero- and few-shot language model rating prediction."""

from .client import (DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, FLAN_T5_FINETUNE_SETTINGS, ClientError,
                     CompletionClient, MockClient, OpenAICompatibleClient)
from .evaluate import FALLBACKS, LLMResult, LLMRunError, evaluate_llm, score_results
from .parsing import EMPTY, NO_NUMBER, OUT_OF_RANGE, ParsedRating, parse_rating
from .prompt import SHOT_STRATEGIES, PromptTemplate, ShotSelector, build_prompt, format_rating

__all__ = [
    "DEFAULT_MAX_TOKENS", "DEFAULT_TEMPERATURE", "FLAN_T5_FINETUNE_SETTINGS", "ClientError",
    "CompletionClient", "MockClient", "OpenAICompatibleClient", "FALLBACKS", "LLMResult",
    "LLMRunError", "evaluate_llm", "score_results", "EMPTY", "NO_NUMBER", "OUT_OF_RANGE",
    "ParsedRating", "parse_rating", "SHOT_STRATEGIES", "PromptTemplate", "ShotSelector",
    "build_prompt", "format_rating",
]
