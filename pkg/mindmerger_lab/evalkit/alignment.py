"""Representation-space alignment between languages.

Each sentence becomes one vector by mean pooling the states at a probe location. Languages
are compared against English on a parallel pool: same-sentence cosine similarity, and Recall@1
of retrieving the English translation among all English vectors.
"""

from collections.abc import Mapping, Sequence

import numpy as np
from pydantic import BaseModel, field_validator

from mindmerger_lab.core import ProbeLocation
from mindmerger_lab.nets.bridge import BridgeParams, map_rows
from mindmerger_lab.nets.compose import merged_prompts, prompt_hidden, token_prompts
from mindmerger_lab.nets.encoder import EncoderParams, embed_tokens, encode_batch
from mindmerger_lab.nets.layers import pad_ids
from mindmerger_lab.nets.lm import LMParams, embed_ids
from mindmerger_lab.pipeline.data import iterate_batches
from mindmerger_lab.synthlang.corpora import World


_NORM_FLOOR = 1e-12

BRIDGE_LOCATIONS = frozenset({ProbeLocation.MAPPING_OUTPUT, ProbeLocation.MERGED_LLM_LAST})


class AlignmentReport(BaseModel):
    location: ProbeLocation
    pool_size: int
    reference: str
    cosine: dict[str, float]
    recall_at_1: dict[str, float]

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("cosine")
    def cosine_in_range(cls, value):
        for lang_id, cosine in value.items():
            if not -1 - 1e-6 <= cosine <= 1 + 1e-6:
                raise ValueError(f"cosine for '{lang_id}' outside [-1, 1]: {cosine}")
        return value

    @field_validator("recall_at_1")
    def recall_in_range(cls, value):
        for lang_id, recall in value.items():
            if not 0 <= recall <= 1:
                raise ValueError(f"Recall@1 for '{lang_id}' outside [0, 1]: {recall}")
        return value

    def mean_recall(self, languages: Sequence[str]) -> float:
        return float(np.mean([self.recall_at_1[lang] for lang in languages]))

    def mean_cosine(self, languages: Sequence[str]) -> float:
        return float(np.mean([self.cosine[lang] for lang in languages]))


def mean_pool(states: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """(B, L, d) states and (B, L) mask -> (B, d) averages over the valid positions."""
    states = np.asarray(states, dtype=np.float64)
    weights = np.asarray(valid, dtype=np.float64)
    totals = np.einsum("bld,bl->bd", states, weights)
    return totals / np.maximum(weights.sum(axis=1, keepdims=True), 1.0)


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / np.maximum(norms, _NORM_FLOOR)


def nearest_neighbors(queries: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """Index of the most cosine-similar pool row for every query; ties go to the lowest index."""
    return np.argmax(_unit_rows(queries) @ _unit_rows(pool).T, axis=1)


def rep_alignment(
    vectors: Mapping[str, np.ndarray],
    reference: str,
    location: ProbeLocation,
) -> AlignmentReport:
    """Compare every language's pooled vectors with the ``reference`` language on one pool."""
    if reference not in vectors:
        raise ValueError(f"Reference language '{reference}' has no vectors")
    anchor = np.asarray(vectors[reference], dtype=np.float64)
    pool_size = anchor.shape[0]
    anchor_unit = _unit_rows(anchor)
    cosine, recall = {}, {}
    for lang_id, rows in vectors.items():
        if lang_id == reference:
            continue
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape != anchor.shape:
            raise ValueError(
                f"Pool of '{lang_id}' has shape {rows.shape}, reference has {anchor.shape}"
            )
        if pool_size == 0:
            cosine[lang_id] = recall[lang_id] = 0.0
            continue
        unit = _unit_rows(rows)
        cosine[lang_id] = float(np.clip(np.sum(unit * anchor_unit, axis=1), -1.0, 1.0).mean())
        hits = nearest_neighbors(rows, anchor) == np.arange(pool_size)
        recall[lang_id] = float(hits.mean())
    return AlignmentReport(
        location=location,
        pool_size=pool_size,
        reference=reference,
        cosine=cosine,
        recall_at_1=recall,
    )


def _pooled(
    location: ProbeLocation,
    sentences: Sequence[Sequence[str]],
    world: World,
    theta: EncoderParams,
    phi: LMParams,
    sigma: BridgeParams | None,
) -> np.ndarray:
    encoder_ids = [world.encoder_vocab.encode(sentence) for sentence in sentences]
    llm_ids = [world.llm_vocab.encode(sentence) for sentence in sentences]
    if location is ProbeLocation.ENCODER_EMBEDDING:
        ids, valid = pad_ids(encoder_ids, theta.pad_id)
        return mean_pool(embed_tokens(theta, ids).data, valid)
    if location is ProbeLocation.ENCODER_LAST:
        states, valid = encode_batch(encoder_ids, theta)
        return mean_pool(states.data, valid)
    if location is ProbeLocation.MAPPING_OUTPUT:
        states, valid = encode_batch(encoder_ids, theta)
        return mean_pool(map_rows(sigma, states).data, valid)
    if location is ProbeLocation.LLM_EMBEDDING:
        ids, valid = pad_ids(llm_ids, phi.pad_id)
        return mean_pool(embed_ids(phi, ids).data, valid)
    if location is ProbeLocation.LLM_LAST:
        hidden, valid = prompt_hidden(token_prompts([[phi.bos_id, *ids] for ids in llm_ids], phi), phi)
        return mean_pool(hidden.data, valid)
    hidden, valid = prompt_hidden(merged_prompts(encoder_ids, llm_ids, theta, sigma, phi), phi)
    return mean_pool(hidden.data, valid)


def probe_states(
    location: ProbeLocation,
    pool: Mapping[str, Sequence[Sequence[str]]],
    world: World,
    theta: EncoderParams,
    phi: LMParams,
    sigma: BridgeParams | None = None,
    batch_size: int = 64,
) -> dict[str, np.ndarray]:
    """Mean-pooled sentence vectors at ``location`` for every language of ``pool``."""
    if location in BRIDGE_LOCATIONS and sigma is None:
        raise ValueError(f"Probe location '{location.value}' needs bridge parameters")
    vectors = {}
    for lang_id, sentences in pool.items():
        chunks = [
            _pooled(location, batch, world, theta, phi, sigma)
            for batch in iterate_batches(sentences, batch_size)
        ]
        vectors[lang_id] = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 1))
    return vectors


def alignment_reports(
    pool: Mapping[str, Sequence[Sequence[str]]],
    world: World,
    theta: EncoderParams,
    phi: LMParams,
    sigma: BridgeParams | None = None,
    locations: Sequence[ProbeLocation] | None = None,
    batch_size: int = 64,
) -> list[AlignmentReport]:
    """Reports at every requested location; bridge locations are skipped without a bridge."""
    if locations is None:
        locations = [
            location for location in ProbeLocation if sigma is not None or location not in BRIDGE_LOCATIONS
        ]
    reference = world.english.language_id
    return [
        rep_alignment(
            probe_states(location, pool, world, theta, phi, sigma, batch_size), reference, location
        )
        for location in locations
    ]

