"""Training-free long-context inference via entropy-scored segment selection.

A long input is decomposed into a trailing task ("question") plus content,
the content is covered by overlapping fixed-length windows, each window is
scored by the entropy of the model's next-token distribution for the window
plus the question, and the most confident windows are spliced back together
into a short key context that fits the model window. Generation then runs on
the key context instead of the original sequence.
"""

from .backends import (
    BackendInfo,
    GenerationConfig,
    ModelBackend,
    NgramBackend,
    OracleBackend,
    ngram_backend,
    oracle_backend,
)
from .diagnostics import CorrelationReport, entropy_loss_correlation
from .errors import (
    BackendError,
    BudgetExceeded,
    ConfigInvalid,
    ContextOverflow,
    EmptyContent,
    IndexOutOfRange,
    MalformedDistribution,
    NeedleTooLong,
    NonFiniteInput,
    ProtocolViolation,
    SequenceTooShort,
    TransportError,
    Xl3mError,
)
from .harness import (
    GridResult,
    NeedleTaskSpec,
    StreamTruncateMethod,
    TailTruncateMethod,
    TimingReport,
    Xl3mMethod,
    generate_haystack,
    make_method,
    measure_timing,
    run_needle_grid,
    stream_truncate,
)
from .pipeline import (
    Decomposition,
    Segment,
    SegmentationConfig,
    SubContext,
    assemble_subcontext,
    decompose,
    segment_content,
)
from .qa import QARecord, load_qa_jsonl, score_qa
from .remote import RemoteBackend, RetryPolicy, remote_backend
from .scoring import (
    Distribution,
    SchedulerConfig,
    SegmentScore,
    entropy,
    entropy_from_logits,
    score_subcontexts,
)
from .selection import (
    KeyContext,
    SelectionConfig,
    max_feasible_k,
    run_pipeline,
    select_topk,
    splice,
)
from .tokens import as_tokens, contains_subsequence, find_subsequence, text_to_tokens, tokens_to_text

__version__ = "0.1.0"
