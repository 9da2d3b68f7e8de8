"""Pragmatic sequence decoding over conditional sequence models.

A toolkit for informativity-aware translation decoding: base greedy/beam
decoding, explicit-distractor pragmatic speakers (global and incremental),
cycle-consistent pragmatic speakers built on a backward model, exact toy
models with brute-force oracles, a BLEU/cycle-consistency evaluation
harness, a many-to-one collision survey, and a wire protocol for plugging
in remote scoring backends.
"""

from .core import (
    EOS_SURFACE,
    NEG_INF,
    AllZeroSupport,
    CandidateRecord,
    DecodeStep,
    DecodeTrace,
    LogDistribution,
    PragmaticsConfig,
    PragmaticsError,
    RolloutPolicy,
    Sentence,
    Token,
    UnknownToken,
    Vocabulary,
    argmax,
    log_normalize,
    logsumexp,
)
from .models import (
    ConditionalSequenceModel,
    EnumerationTooLarge,
    MissingEntry,
    NormalizationError,
    ParseError,
    TabularModel,
    enumerate_continuations,
    enumerate_sentences,
    format_tabular,
    load_tabular,
    parse_tabular,
    save_tabular,
)
from .rsa import (
    CandidateSet,
    DistractorSet,
    beam_decode,
    decode_s1_cip,
    decode_s1_ip,
    greedy_decode,
    l1_sentence,
    l1_word,
    s1_cgp_rerank,
    s1_global,
    s1_word,
    s1_word_c,
    s1_word_c_exact,
)
from .evaluation import (
    BleuConfig,
    CollisionPair,
    CycleRecord,
    CycleResult,
    EmptyCorpus,
    LengthMismatch,
    SameBackTranslator,
    Translator,
    back_translator,
    bleu_corpus,
    cycle_consistency,
    s0_translator,
    s1_cip_translator,
    sentence_bleu_diagnostic,
    survey_many_to_one,
)
from .oracle import OracleReport, OracleSentence, OracleStep, run_oracle

__version__ = "0.1.0"
