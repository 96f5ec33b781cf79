"""Core domain primitives: opinions, the binary symmetric channel, seeded
RNG streams, and the round-synchronous push-gossip delivery engine.

Opinions are plain ints in {0, 1}.  All randomness flows through numpy
Generators derived from a single master seed (see :class:`RngStream`), so a
run is reproducible bit-for-bit across platforms and processes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """A simulation input violates a structural precondition."""


def complement(bit: int) -> int:
    """Complement of an opinion bit; an involution on {0, 1}."""
    return bit ^ 1


@dataclass(frozen=True)
class NoiseChannel:
    """Binary symmetric channel that flips each delivered bit independently.

    Parameters are redundant by design: ``flip_probability = 1/2 - epsilon_bias``.
    A channel is valid when ``0 <= flip_probability < 1/2`` (equivalently
    ``0 < epsilon_bias <= 1/2``).
    """

    flip_probability: float

    def __post_init__(self):
        if not (0.0 <= self.flip_probability < 0.5):
            raise ConfigurationError(
                f"flip_probability must lie in [0, 1/2), got {self.flip_probability}"
            )

    @property
    def epsilon_bias(self) -> float:
        return 0.5 - self.flip_probability

    @classmethod
    def from_epsilon(cls, epsilon: float) -> "NoiseChannel":
        if not (0.0 < epsilon <= 0.5):
            raise ConfigurationError(f"epsilon must lie in (0, 1/2], got {epsilon}")
        return cls(flip_probability=0.5 - epsilon)


def _mix_id(part) -> int:
    """Map a stream-id component to a stable nonnegative integer.

    Ints pass through; strings are hashed with blake2b (stable across
    platforms and processes, unlike the builtin ``hash``).
    """
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ConfigurationError("stream id components must be nonnegative")
        return int(part)
    if isinstance(part, str):
        return int.from_bytes(hashlib.blake2b(part.encode(), digest_size=8).digest(), "big")
    raise ConfigurationError(f"unsupported stream id component: {part!r}")


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream derived from a master seed.

    The mixing function is ``SeedSequence(entropy=master_seed,
    spawn_key=stream_id)`` feeding PCG64.  Identical ``(master_seed,
    stream_id)`` pairs yield identical draw sequences everywhere, and streams
    with distinct ids are statistically independent, so adding an
    instrumentation stream never perturbs protocol draws.
    """

    master_seed: int
    stream_id: tuple = ()

    def generator(self) -> np.random.Generator:
        key = tuple(_mix_id(p) for p in self.stream_id)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(seq))


def derive_rng(master_seed: int, *stream_id) -> np.random.Generator:
    """Shorthand for ``RngStream(master_seed, stream_id).generator()``."""
    return RngStream(master_seed, tuple(stream_id)).generator()


@dataclass(frozen=True)
class Message:
    """One delivered bit.  ``sender_index`` is diagnostics-only metadata and
    is never visible to protocol logic (anonymity)."""

    payload: int
    sender_index: int
    round_sent: int


def flip(bit, channel: NoiseChannel, rng: np.random.Generator):
    """Pass an opinion (or an array of opinions) through the channel.

    Returns the complement with probability ``channel.flip_probability``,
    consuming exactly one uniform draw per element.
    """
    if isinstance(bit, np.ndarray):
        u = rng.random(bit.shape)
        return (bit ^ (u < channel.flip_probability)).astype(bit.dtype)
    u = rng.random()
    return int(bit) ^ int(u < channel.flip_probability)


def deliver_round_arrays(
    sender_ids: np.ndarray,
    payloads: np.ndarray,
    n: int,
    channel: NoiseChannel,
    rng: np.random.Generator,
    return_targets: bool = False,
):
    """Vectorized core of one push-gossip delivery round.

    Each sender's message goes to one agent drawn uniformly among the other
    ``n - 1`` agents (self excluded).  Each receiver with at least one
    arrival accepts exactly one, chosen uniformly at random; the accepted
    payload passes through the noise channel, every other arrival is dropped.

    Returns ``(receivers, accepted, senders_of[, targets])`` with receivers
    in ascending order.  ``senders_of`` and ``targets`` are diagnostics-only;
    protocol logic must consume payloads alone.

    The uniform accept choice is realized by drawing one random arrival
    order per round (a permutation) and letting the earliest arrival win;
    relative orders of disjoint arrival groups under a uniform permutation
    are independent and uniform, so each receiver's accepted message is an
    independent uniform pick.
    """
    m = int(sender_ids.size)
    empty = np.empty(0, np.int64)
    if m == 0:
        out = (empty, np.empty(0, np.int8), empty)
        return out + (empty,) if return_targets else out
    if n < 2:
        raise ConfigurationError("delivery requires at least two agents")
    t = rng.integers(0, n - 1, size=m)
    targets = t + (t >= sender_ids)
    perm = rng.permutation(m)
    slot = np.full(n, -1, np.int64)
    # reversed scatter: the earliest arrival in permuted order wins its slot
    tp = targets[perm]
    slot[tp[::-1]] = perm[::-1]
    receivers = np.flatnonzero(slot >= 0)
    chosen = slot[receivers]
    flips = rng.random(receivers.size) < channel.flip_probability
    accepted = (payloads[chosen] ^ flips).astype(np.int8)
    out = (receivers, accepted, sender_ids[chosen])
    return out + (targets,) if return_targets else out


def deliver_round(senders, n: int, channel: NoiseChannel, rng: np.random.Generator) -> dict:
    """Deliver one round of push gossip for a set of ``(agent, opinion)`` pairs.

    Protocol-facing form: the returned map contains only receivers that
    accepted a message, mapping receiver index to the accepted opinion.
    Sender identities are not exposed (anonymity).
    """
    pairs = sorted(senders)
    ids = np.asarray([p[0] for p in pairs], dtype=np.int64)
    if ids.size:
        if ids.min() < 0 or ids.max() >= n:
            raise ConfigurationError("sender index out of range")
        if np.unique(ids).size != ids.size:
            raise ConfigurationError("duplicate sender index")
    pay = np.asarray([p[1] for p in pairs], dtype=np.int8)
    receivers, accepted, _ = deliver_round_arrays(ids, pay, n, channel, rng)
    return {int(r): int(v) for r, v in zip(receivers, accepted)}
