"""Protocol state machines: two-stage noisy broadcast, majority consensus,
the clock-free (desynchronized) variant, and the two failing baselines.

Engines are array-based for speed.  Per-agent state lives in a
struct-of-arrays :class:`World`; the spec-level ``AgentState`` record is an
inspection view over it.  Two vectorized equivalences keep the hot path
fast without changing any distribution:

* an agent's uniform choice among the messages of its activation phase is
  realized by reservoir sampling (one uniform per accepted message);
* the majority of a uniformly random fixed-size subset of samples is
  realized by drawing the subset's correct-sample count from the matching
  hypergeometric law.

Both draws consume randomness in a payload-independent pattern, so a run's
entire message pattern is invariant under relabeling the opinions 0 <-> 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ConfigurationError,
    complement,
    deliver_round_arrays,
    derive_rng,
)
from .params import ScheduleParams, SimConfig, _ceil_log2, derive_schedule, majority_entry_phase

_NEVER = np.int32(2 ** 31 - 1)   # send_from sentinel: dormant, never sends
_UNSET = np.int64(2 ** 62)       # clock-reset sentinel in the desync engine


class ProtocolInvariantError(RuntimeError):
    """Internal bookkeeping violated a protocol invariant."""


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class PhaseMetrics:
    """Stage-1 observables for one phase: cumulative activated (x), newly
    activated (y), initially-correct among them (z), and the phase bias
    epsilon = z/y - 1/2 (None when y = 0)."""

    phase: int
    x: int
    y: int
    z: int
    epsilon: float | None


@dataclass(frozen=True)
class Stage1Result:
    per_phase: tuple
    all_activated: bool
    rounds_used: int


@dataclass(frozen=True)
class Stage2PhaseRecord:
    phase_index: int
    successful_count: int
    correct_fraction: float          # measured after the phase
    start_correct_fraction: float    # measured before the phase


@dataclass(frozen=True)
class DepthStat:
    depth: int
    agents: int
    correct: int


@dataclass(frozen=True)
class DesyncInfo:
    d_bound: int
    offset_spread: int               # widest clock gap actually realized
    preamble_rounds: int             # 0 when clocks were supplied
    local_total: int
    stalled: bool


@dataclass(frozen=True)
class Outcome:
    final_opinions: np.ndarray
    correct_fraction: float
    rounds_used: int
    messages_sent: int
    stage1: Stage1Result | None
    stage2: tuple
    initial_majority_bias: float | None = None
    depth_table: tuple | None = None
    first_threshold_round: int | None = None
    desync: DesyncInfo | None = None


@dataclass(frozen=True)
class AgentState:
    """Inspection view of one agent. ``phase_inbox`` is transient per-phase
    state and is empty between phases (the engine folds it into a reservoir
    as messages arrive)."""

    id: int
    activated: bool
    level: int | None
    activation_round: int | None
    local_clock: int
    current_opinion: int | None
    phase_inbox: tuple = ()


@dataclass(frozen=True)
class ClockConfiguration:
    """Initial clock values for the desynchronized variant, one per agent,
    each in [0, d_bound)."""

    offsets: np.ndarray
    d_bound: int

    def __post_init__(self):
        off = np.asarray(self.offsets)
        if self.d_bound < 1:
            raise ConfigurationError("d_bound must be >= 1")
        if off.size and (off.min() < 0 or off.max() >= self.d_bound):
            raise ConfigurationError("every clock offset must lie in [0, d_bound)")


class World:
    """Struct-of-arrays per-agent state for one run."""

    __slots__ = ("n", "correct", "opinion", "level", "send_from", "activation_round", "clock")

    def __init__(self, n: int, correct_opinion: int):
        self.n = n
        self.correct = int(correct_opinion)
        self.opinion = np.full(n, -1, np.int8)
        self.level = np.full(n, -1, np.int32)
        self.send_from = np.full(n, _NEVER, np.int32)
        self.activation_round = np.full(n, -1, np.int64)
        self.clock = 0

    def agent_state(self, i: int) -> AgentState:
        activated = self.send_from[i] != _NEVER
        return AgentState(
            id=i,
            activated=bool(activated),
            level=int(self.level[i]) if self.level[i] >= 0 else None,
            activation_round=int(self.activation_round[i]) if self.activation_round[i] >= 0 else None,
            local_clock=self.clock,
            current_opinion=int(self.opinion[i]) if self.opinion[i] >= 0 else None,
        )

    def correct_fraction(self) -> float:
        return float((self.opinion == self.correct).mean())


def make_broadcast_world(config: SimConfig, source: int = 0) -> World:
    world = World(config.n, config.correct_opinion)
    world.opinion[source] = config.correct_opinion
    world.level[source] = 0
    world.send_from[source] = 0
    world.activation_round[source] = 0
    return world


def make_consensus_world(config: SimConfig, initial_opinions: np.ndarray, entry_phase: int) -> World:
    """World for a majority-consensus run: ``initial_opinions`` holds -1 for
    agents outside the initial set.  Members already hold opinions and send
    in every executed phase (entry_phase .. T+1)."""
    world = World(config.n, config.correct_opinion)
    members = np.flatnonzero(initial_opinions >= 0)
    if members.size == 0:
        raise ConfigurationError("initial set is empty")
    world.opinion[members] = initial_opinions[members]
    world.level[members] = max(entry_phase - 1, 0)
    world.send_from[members] = entry_phase
    return world


# ---------------------------------------------------------------------------
# event log (round-level sends and accepts, for symmetry diagnostics)


class EventLog:
    def __init__(self):
        self.sends = []    # (round, sender_ids, targets)
        self.accepts = []  # (round, receivers, senders_of, payloads)

    def record(self, rnd, senders, targets, receivers, senders_of, payloads):
        self.sends.append((rnd, senders.copy(), targets.copy()))
        self.accepts.append((rnd, receivers.copy(), senders_of.copy(), payloads.copy()))


def logs_equal_modulo_complement(a: EventLog, b: EventLog) -> bool:
    """True when the two logs describe the same message pattern with every
    payload complemented (the symmetry of an oblivious run)."""
    if len(a.sends) != len(b.sends) or len(a.accepts) != len(b.accepts):
        return False
    for (r0, s0, t0), (r1, s1, t1) in zip(a.sends, b.sends):
        if r0 != r1 or not np.array_equal(s0, s1) or not np.array_equal(t0, t1):
            return False
    for (r0, v0, f0, p0), (r1, v1, f1, p1) in zip(a.accepts, b.accepts):
        if r0 != r1 or not np.array_equal(v0, v1) or not np.array_equal(f0, f1):
            return False
        if not np.array_equal(p0 ^ 1, p1):
            return False
    return True


# ---------------------------------------------------------------------------
# contract-level operations


def select_initial_opinion(inbox, rng: np.random.Generator) -> int:
    """Uniform choice among the messages of an agent's activation phase.

    The result's distribution depends only on the multiset of inbox values,
    never on arrival order.
    """
    if len(inbox) == 0:
        raise ProtocolInvariantError("activation bookkeeping violated: empty inbox")
    return int(inbox[int(rng.integers(0, len(inbox)))])


def majority_update(samples, subset_size: int, rng: np.random.Generator) -> int:
    """Majority opinion of a uniformly random subset of exactly
    ``subset_size`` samples.  ``subset_size`` must be odd (no ties)."""
    if subset_size % 2 == 0 or subset_size < 1:
        raise ConfigurationError(f"subset size must be odd and positive, got {subset_size}")
    if len(samples) < subset_size:
        raise ProtocolInvariantError(
            f"{len(samples)} samples cannot fill a subset of {subset_size}; "
            "callers must gate on successfulness"
        )
    samples = np.asarray(samples)
    idx = rng.choice(len(samples), size=subset_size, replace=False)
    ones = int(samples[idx].sum())
    return 1 if 2 * ones > subset_size else 0


# ---------------------------------------------------------------------------
# synchronized engines


def _deliver(senders, payloads, n, channel, gen, log, rnd):
    if log is None:
        return deliver_round_arrays(senders, payloads, n, channel, gen)
    recv, acc, src, targets = deliver_round_arrays(senders, payloads, n, channel, gen, return_targets=True)
    log.record(rnd, senders, targets, recv, src, acc)
    return recv, acc, src


def _run_stage1(world, config, schedule, gen, first_phase=0, log=None):
    """Execute stage-1 phases ``first_phase .. T+1``; returns
    ``(Stage1Result, messages_sent)``."""
    n = world.n
    channel = config.channel
    correct = world.correct
    bounds = schedule.phase_bounds_stage1
    cnt = np.zeros(n, np.int32)
    choice = np.full(n, -1, np.int8)
    first_seen = np.full(n, -1, np.int64)
    per_phase = []
    x_cum = 0
    messages = 0
    world.clock = bounds[first_phase][0]
    for p in range(first_phase, schedule.t_phases + 2):
        start, length = bounds[p]
        senders = np.flatnonzero(world.send_from <= p)
        payloads = world.opinion[senders]
        for rr in range(start, start + length):
            recv, acc, _ = _deliver(senders, payloads, n, channel, gen, log, rr)
            messages += senders.size
            listening = world.send_from[recv] == _NEVER   # activated agents discard
            dr = recv[listening]
            dp = acc[listening]
            c = cnt[dr] + 1
            cnt[dr] = c
            fresh = c == 1
            first_seen[dr[fresh]] = rr
            u = gen.random(dr.size)
            take = u * c < 1.0         # reservoir: keep the j-th arrival w.p. 1/j
            choice[dr[take]] = dp[take]
            world.clock = rr + 1
        new = np.flatnonzero((world.send_from == _NEVER) & (cnt > 0))
        world.level[new] = p
        world.send_from[new] = p + 1
        world.opinion[new] = choice[new]
        world.activation_round[new] = first_seen[new]
        y = int(new.size)
        z = int((choice[new] == correct).sum())
        x_cum += y
        per_phase.append(PhaseMetrics(p, x_cum, y, z, z / y - 0.5 if y else None))
        cnt[new] = 0
        choice[new] = -1
    rounds = sum(bounds[p][1] for p in range(first_phase, schedule.t_phases + 2))
    all_activated = bool((world.send_from != _NEVER).all())
    return Stage1Result(tuple(per_phase), all_activated, rounds), messages


def _stage2_apply(world, successful, cnt, corr, subset, gen):
    """Subset-majority update for all successful agents of one phase.

    The number of correct samples inside a uniform subset of ``subset``
    samples is hypergeometric; drawing it directly is distributionally
    identical to materializing the subset.
    """
    if successful.size == 0:
        return
    good = corr[successful].astype(np.int64)
    bad = cnt[successful].astype(np.int64) - good
    h = gen.hypergeometric(good, bad, subset)
    correct = world.correct
    world.opinion[successful] = np.where(2 * h > subset, correct, complement(correct)).astype(np.int8)


def _run_stage2(world, config, schedule, gen, log=None):
    """Execute the k+1 stage-2 phases; returns ``(records, messages_sent)``.

    Agents that reached stage 2 without an opinion stay silent but still
    collect samples, so a successful straggler acquires an opinion.
    """
    n = world.n
    channel = config.channel
    correct = world.correct
    cnt = np.zeros(n, np.int32)
    corr = np.zeros(n, np.int32)
    records = []
    messages = 0
    for j, m in enumerate(schedule.stage2_phase_lengths, start=1):
        subset = m // 2
        senders = np.flatnonzero(world.opinion >= 0)
        payloads = world.opinion[senders]
        start_frac = world.correct_fraction()
        for _ in range(m):
            rr = world.clock
            recv, acc, _ = _deliver(senders, payloads, n, channel, gen, log, rr)
            messages += senders.size
            cnt[recv] += 1
            corr[recv] += acc == correct
            world.clock = rr + 1
        successful = np.flatnonzero(cnt >= subset)
        _stage2_apply(world, successful, cnt, corr, subset, gen)
        records.append(Stage2PhaseRecord(j, int(successful.size), world.correct_fraction(), start_frac))
        cnt[:] = 0
        corr[:] = 0
    return tuple(records), messages


def _as_generator(rng, config: SimConfig, purpose: str) -> np.random.Generator:
    if rng is None:
        return derive_rng(config.master_seed, purpose)
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()


def run_broadcast(config: SimConfig, rng=None, log=None, schedule: ScheduleParams | None = None) -> Outcome:
    """Full two-stage noisy broadcast.  The protocol is oblivious: the round
    count equals the schedule total no matter what happens."""
    gen = _as_generator(rng, config, "broadcast")
    if schedule is None:
        schedule = derive_schedule(config.n, config.channel, config.constants)
    world = make_broadcast_world(config)
    stage1, msg1 = _run_stage1(world, config, schedule, gen, log=log)
    stage2, msg2 = _run_stage2(world, config, schedule, gen, log=log)
    return Outcome(
        final_opinions=world.opinion.copy(),
        correct_fraction=world.correct_fraction(),
        rounds_used=schedule.total_rounds,
        messages_sent=msg1 + msg2,
        stage1=stage1,
        stage2=stage2,
    )


def majority_bias(initial_opinions: np.ndarray, correct: int) -> float:
    """(A_correct - A_wrong) / (2 |A|) for the opinionated set A."""
    members = initial_opinions >= 0
    a = int(members.sum())
    if a == 0:
        raise ConfigurationError("initial set is empty")
    good = int((initial_opinions[members] == correct).sum())
    return 0.5 * (good - (a - good)) / a


def run_majority_consensus(config: SimConfig, initial_opinions: np.ndarray, rng=None, log=None) -> Outcome:
    """Majority consensus for an initial opinionated set A: stage-1 phases
    i_A .. T+1 with A as the already-active senders, then stage 2."""
    gen = _as_generator(rng, config, "consensus")
    schedule = derive_schedule(config.n, config.channel, config.constants)
    initial_opinions = np.asarray(initial_opinions, dtype=np.int8)
    if initial_opinions.shape != (config.n,):
        raise ConfigurationError("initial_opinions must have one entry per agent (-1 for none)")
    a_size = int((initial_opinions >= 0).sum())
    entry = majority_entry_phase(a_size, config.n, config.channel, config.constants)
    bias = majority_bias(initial_opinions, config.correct_opinion)
    world = make_consensus_world(config, initial_opinions, entry)
    stage1, msg1 = _run_stage1(world, config, schedule, gen, first_phase=entry, log=log)
    stage2, msg2 = _run_stage2(world, config, schedule, gen, log=log)
    return Outcome(
        final_opinions=world.opinion.copy(),
        correct_fraction=world.correct_fraction(),
        rounds_used=stage1.rounds_used + schedule.stage2_rounds,
        messages_sent=msg1 + msg2,
        stage1=stage1,
        stage2=stage2,
        initial_majority_bias=bias,
    )


# ---------------------------------------------------------------------------
# desynchronized variant


def _local_windows(schedule: ScheduleParams, d: int):
    """Local-clock window layout: stage-1 phase i shifted to start at
    r_i + i*d, one further d-gap isolating stage 2, stage-2 phases
    contiguous.  Window codes: 0..T+1 stage 1, T+1+j for stage-2 phase j.
    Returns (code-per-local-round array, [(close_local, code)], local_total).
    """
    t = schedule.t_phases
    st2 = schedule.stage1_rounds + (t + 2) * d
    local_total = st2 + schedule.stage2_rounds
    wcode = np.full(local_total, -1, np.int32)
    closes = []
    for i, (start, length) in enumerate(schedule.phase_bounds_stage1):
        s = start + i * d
        wcode[s:s + length] = i
        closes.append((s + length, i))
    off = st2
    for j, m in enumerate(schedule.stage2_phase_lengths, start=1):
        wcode[off:off + m] = t + 1 + j
        closes.append((off + m, t + 1 + j))
        off += m
    return wcode, closes, local_total


def run_desynchronized(config: SimConfig, clocks: ClockConfiguration | None = None, rng=None, log=None) -> Outcome:
    """Broadcast without a shared clock.

    With supplied ``clocks``, each agent's clock starts at its offset and the
    agent executes stage-1 phase i during local rounds [r_i + iD, r_i + iD + x_i),
    staying silent (and deaf to protocol traffic) in between; stage 2 follows
    after one more D-gap and runs contiguously.  Without ``clocks``, an
    activation preamble runs first: every informed agent broadcasts a junk
    bit for 2*ceil(log2 n) rounds and resets its clock to zero exactly
    4*ceil(log2 n) rounds after its first received message, which bounds all
    clock differences by D = 2*ceil(log2 n).
    """
    gen = _as_generator(rng, config, "desync")
    n = config.n
    channel = config.channel
    correct = config.correct_opinion
    schedule = derive_schedule(n, channel, config.constants)
    t_ph = schedule.t_phases
    log2n = _ceil_log2(n)

    preamble = clocks is None
    if preamble:
        d = 2 * log2n
        shift = np.full(n, _UNSET, np.int64)       # global round at which local clock reads 0
        first_heard = np.full(n, -1, np.int64)
        send_start = np.full(n, _UNSET, np.int64)  # preamble broadcast window start
        shift[0] = 4 * log2n                       # source: informed at start, resets at 4*log2n
        first_heard[0] = 0
        send_start[0] = 0
    else:
        off = np.asarray(clocks.offsets, dtype=np.int64)
        if off.shape != (n,):
            raise ConfigurationError("clock offsets must have one entry per agent")
        ClockConfiguration(off, clocks.d_bound)    # revalidate against the n-sized array
        d = clocks.d_bound
        shift = -off                               # clock value o at t=0 => local time t + o

    wcode, closes, local_total = _local_windows(schedule, d)

    world = make_broadcast_world(config)
    cnt = np.zeros(n, np.int32)
    corr = np.zeros(n, np.int32)
    choice = np.full(n, -1, np.int8)
    first_seen = np.full(n, -1, np.int64)

    # window-close events: global round -> [(code, shift value)]
    events: dict = {}
    registered = set()

    def register(shift_value: int):
        if shift_value in registered:
            return
        registered.add(shift_value)
        for close_local, code in closes:
            et = shift_value + close_local - 1
            if et >= 0:     # a window fully before t=0 saw no traffic; skipping == empty finalize
                events.setdefault(et, []).append((code, shift_value))

    if preamble:
        register(int(shift[0]))
    else:
        for v in np.unique(shift):
            register(int(v))

    y_acc = np.zeros(t_ph + 2, np.int64)
    z_acc = np.zeros(t_ph + 2, np.int64)
    n_st2 = len(schedule.stage2_phase_lengths)
    succ_acc = np.zeros(n_st2, np.int64)
    end_frac = [None] * n_st2
    start_frac = [None] * n_st2

    messages = 0
    pre_rounds = 2 * log2n
    stalled = False
    t = 0
    while True:
        lvals = t - shift
        inside = (lvals >= 0) & (lvals < local_total)
        code = np.where(inside, wcode[np.clip(lvals, 0, local_total - 1)], -1)
        s1_send = (code >= 0) & (code <= t_ph + 1) & (world.send_from <= code)
        s2_send = (code > t_ph + 1) & (world.opinion >= 0)
        main_send = s1_send | s2_send
        if preamble:
            uninformed = first_heard < 0
            pre_mask = (send_start <= t) & (t < send_start + pre_rounds)
            senders = np.flatnonzero(main_send | pre_mask)
            # preamble broadcasts carry a junk bit; content is never read
            payloads = np.where(main_send[senders], world.opinion[senders], 0).astype(np.int8)
        else:
            senders = np.flatnonzero(main_send)
            payloads = world.opinion[senders]
        if senders.size:
            recv, acc, _ = _deliver(senders, payloads, n, channel, gen, log, t)
            messages += senders.size
            if preamble:
                freshly_informed = recv[uninformed[recv]]
                if freshly_informed.size:
                    first_heard[freshly_informed] = t
                    send_start[freshly_informed] = t + 1
                    shift[freshly_informed] = t + 4 * log2n
                    register(int(t + 4 * log2n))
            rcode = code[recv]
            s1_listen = (rcode >= 0) & (rcode <= t_ph + 1) & (world.send_from[recv] == _NEVER)
            dr = recv[s1_listen]
            dp = acc[s1_listen]
            c = cnt[dr] + 1
            cnt[dr] = c
            fresh = c == 1
            first_seen[dr[fresh]] = t
            u = gen.random(dr.size)
            take = u * c < 1.0
            choice[dr[take]] = dp[take]
            s2_listen = rcode > t_ph + 1
            sr = recv[s2_listen]
            cnt[sr] += 1
            corr[sr] += acc[s2_listen] == correct

        for code_v, shift_v in sorted(events.pop(t, ())):
            members = np.flatnonzero(shift == shift_v)
            if code_v <= t_ph + 1:
                new = members[(world.send_from[members] == _NEVER) & (cnt[members] > 0)]
                world.level[new] = code_v
                world.send_from[new] = code_v + 1
                world.opinion[new] = choice[new]
                world.activation_round[new] = first_seen[new]
                y_acc[code_v] += new.size
                z_acc[code_v] += int((choice[new] == correct).sum())
                cnt[new] = 0
                choice[new] = -1
            else:
                j = code_v - (t_ph + 2)
                subset = schedule.stage2_phase_lengths[j] // 2
                if start_frac[j] is None:
                    start_frac[j] = world.correct_fraction()
                successful = members[cnt[members] >= subset]
                _stage2_apply(world, successful, cnt, corr, subset, gen)
                succ_acc[j] += successful.size
                end_frac[j] = world.correct_fraction()   # last group's close wins
                cnt[members] = 0
                corr[members] = 0

        t += 1
        world.clock = t
        known = shift[shift != _UNSET]
        horizon = int(known.max()) + local_total
        if t >= horizon:
            # Every send window (preamble or scheduled) of every clocked agent
            # has passed, so no further message can ever be delivered.
            stalled = preamble and bool((first_heard < 0).any())
            break

    rounds_used = t
    per_phase = []
    x = 0
    for p in range(t_ph + 2):
        y = int(y_acc[p])
        z = int(z_acc[p])
        x += y
        per_phase.append(PhaseMetrics(p, x, y, z, z / y - 0.5 if y else None))
    stage1 = Stage1Result(tuple(per_phase), bool((world.send_from != _NEVER).all()), schedule.stage1_rounds)
    records = []
    for j in range(n_st2):
        records.append(
            Stage2PhaseRecord(
                j + 1,
                int(succ_acc[j]),
                end_frac[j] if end_frac[j] is not None else world.correct_fraction(),
                start_frac[j] if start_frac[j] is not None else world.correct_fraction(),
            )
        )
    known = shift[shift != _UNSET]
    info = DesyncInfo(
        d_bound=d,
        offset_spread=int(known.max() - known.min()),
        preamble_rounds=4 * log2n if preamble else 0,
        local_total=local_total,
        stalled=stalled,
    )
    return Outcome(
        final_opinions=world.opinion.copy(),
        correct_fraction=world.correct_fraction(),
        rounds_used=rounds_used,
        messages_sent=messages,
        stage1=stage1,
        stage2=tuple(records),
        desync=info,
    )


# ---------------------------------------------------------------------------
# failing baselines


def run_baseline_forward(config: SimConfig, max_rounds: int, rng=None, log=None) -> Outcome:
    """Immediate-forward strategy: every agent adopts the first accepted
    opinion and resends it every round afterwards.

    Each agent's hop depth (1 + depth of the agent whose message activated
    it) is tracked through diagnostics-only sender metadata; the protocol
    itself never reads sender identities.  Returns an Outcome whose
    ``depth_table`` tabulates correctness against depth.
    """
    gen = _as_generator(rng, config, "baseline-forward")
    n = config.n
    channel = config.channel
    world = make_broadcast_world(config)
    depth = np.full(n, -1, np.int64)
    depth[0] = 0
    messages = 0
    rounds = 0
    for t in range(max_rounds):
        senders = np.flatnonzero(world.opinion >= 0)
        payloads = world.opinion[senders]
        recv, acc, src = _deliver(senders, payloads, n, channel, gen, log, t)
        messages += senders.size
        fresh = world.opinion[recv] < 0
        fr = recv[fresh]
        world.opinion[fr] = acc[fresh]
        world.send_from[fr] = 0
        world.activation_round[fr] = t
        depth[fr] = depth[src[fresh]] + 1
        rounds = t + 1
        world.clock = rounds
        if (world.opinion >= 0).all():
            break
    table = []
    if (depth > 0).any():
        for dv in range(1, int(depth.max()) + 1):
            at = depth == dv
            agents = int(at.sum())
            if agents == 0:
                continue
            table.append(DepthStat(dv, agents, int((world.opinion[at] == world.correct).sum())))
    return Outcome(
        final_opinions=world.opinion.copy(),
        correct_fraction=world.correct_fraction(),
        rounds_used=rounds,
        messages_sent=messages,
        stage1=None,
        stage2=(),
        depth_table=tuple(table),
    )


def run_baseline_silent_wait(config: SimConfig, threshold: int, max_rounds: int, rng=None, log=None) -> Outcome:
    """Silent-wait strategy: a non-source agent says nothing until it has
    accepted ``threshold`` messages, then adopts their majority (ties broken
    by a fair coin) and resends every round.

    ``first_threshold_round`` records when the first non-source agent
    reached the threshold (None on timeout).  With only the source talking
    initially, that wait is a birthday-paradox event of order sqrt(n).
    """
    if threshold < 1:
        raise ConfigurationError(f"threshold must be >= 1, got {threshold}")
    gen = _as_generator(rng, config, "baseline-silent")
    n = config.n
    channel = config.channel
    world = make_broadcast_world(config)
    cnt = np.zeros(n, np.int64)
    corr = np.zeros(n, np.int64)
    first_reach = None
    messages = 0
    rounds = 0
    for t in range(max_rounds):
        senders = np.flatnonzero(world.opinion >= 0)
        payloads = world.opinion[senders]
        recv, acc, _ = _deliver(senders, payloads, n, channel, gen, log, t)
        messages += senders.size
        waiting = world.opinion[recv] < 0
        wr = recv[waiting]
        cnt[wr] += 1
        corr[wr] += acc[waiting] == world.correct
        reached = wr[cnt[wr] >= threshold]
        if reached.size:
            if first_reach is None:
                first_reach = t + 1
            good = 2 * corr[reached] > threshold
            tie = 2 * corr[reached] == threshold
            coin = gen.random(reached.size) < 0.5
            pick = np.where(good | (tie & coin), world.correct, complement(world.correct))
            world.opinion[reached] = pick.astype(np.int8)
            world.send_from[reached] = 0
            world.activation_round[reached] = t
        rounds = t + 1
        world.clock = rounds
        if (world.opinion >= 0).all():
            break
    return Outcome(
        final_opinions=world.opinion.copy(),
        correct_fraction=world.correct_fraction(),
        rounds_used=rounds,
        messages_sent=messages,
        stage1=None,
        stage2=(),
        first_threshold_round=first_reach,
    )
