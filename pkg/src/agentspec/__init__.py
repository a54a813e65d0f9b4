"""agentspec: declarative agent behaviors compiled into decoding monitors.

Define an agent as states plus a temporal formula, compile the formula to a
deterministic automaton, and let the runtime drive any completion backend
through it: text that strays from the behavior is truncated and steered
back with valid-state prefixing, so finished transcripts always satisfy
the declared behavior.
"""
from .automaton import Automaton, MonitorPosition, compile_behavior
from .backends import (
    Backend,
    Completion,
    CompletionRequest,
    HttpBackend,
    HttpConfig,
    MockBackend,
    load_mock_script,
)
from .errors import (
    AgentError,
    BackendError,
    BudgetExhausted,
    CapabilityError,
    CompileError,
    EnvError,
    MockScriptError,
    SExprError,
    SpecError,
    TransitionError,
)
from .formula import Atom, Next, Or, Until, enumerate_language, satisfies
from .harness import (
    BUILTIN_AGENTS,
    DatasetRecord,
    EnvRouter,
    HybridResult,
    ReflexionEvalEnv,
    ReWOOSolverEnv,
    RunReport,
    SelfConsistencyConfig,
    ToolObservationEnv,
    emit_trace,
    evaluate_dataset,
    hybrid_run,
    load_builtin,
    load_spec,
    make_default_env,
    normalize_answer,
    self_consistent_answer,
    trace_records,
    validate_prompt,
)
from .monitor import (
    Conforming,
    Correction,
    StateEvent,
    Verdict,
    Violation,
    count_tokens,
    longest_common_prefix,
    make_correction,
    segment,
    validate_events,
)
from .runtime import EnvHandler, RunConfig, Transcript, check_termination, generate_step, run_session
from .spec import AgentSpec, Diagnostic, StateDef, check_spec, parse_spec, serialize_spec
from .summarizer import (
    ActionBatch,
    PassSummarizer,
    SelectionResult,
    SummaryCandidate,
    build_summary_prompt,
    collect_action_batch,
    execute_batch,
    length_penalty,
    numbered_list,
    select_summary_or_raw,
)
from .toolbox import Corpus, PageCursor, ToolDescriptor, build_registry, calculator_eval, lookup, search

__version__ = "0.1.0"
