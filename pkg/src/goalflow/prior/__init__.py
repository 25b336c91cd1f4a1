from .field import (
    PriorParams,
    build_prior_field,
    candidate_set,
    confidence_to_sigma,
    predicted_centroid,
    rasterize_gaussian,
)
from .llm import LLMConfig, build_prompt, parse_llm_responses, parse_response_text, query_llm
from .matrices import PriorMatrices, load_prior_matrices, prior_from_dict, save_prior_matrices

__all__ = [
    "LLMConfig",
    "PriorMatrices",
    "PriorParams",
    "build_prior_field",
    "build_prompt",
    "candidate_set",
    "confidence_to_sigma",
    "load_prior_matrices",
    "parse_llm_responses",
    "parse_response_text",
    "predicted_centroid",
    "prior_from_dict",
    "query_llm",
    "rasterize_gaussian",
    "save_prior_matrices",
]
