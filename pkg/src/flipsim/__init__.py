"""flipsim: deterministic simulator and analysis toolkit for noisy
push-gossip broadcast and majority consensus."""

__version__ = "0.1.0"

from .model import (
    ConfigurationError,
    Message,
    NoiseChannel,
    RngStream,
    complement,
    deliver_round,
    derive_rng,
    flip,
)
from .params import (
    PAPER_R_SCALE,
    ConstantsOrderingError,
    InitialSetTooSmallError,
    ProtocolConstants,
    ScheduleParams,
    SimConfig,
    derive_schedule,
    majority_entry_phase,
)
from .protocols import (
    AgentState,
    ClockConfiguration,
    EventLog,
    Outcome,
    PhaseMetrics,
    Stage1Result,
    Stage2PhaseRecord,
    World,
    logs_equal_modulo_complement,
    majority_bias,
    majority_update,
    run_baseline_forward,
    run_baseline_silent_wait,
    run_broadcast,
    run_desynchronized,
    run_majority_consensus,
    select_initial_opinion,
)
from . import oracle
