"""Named random streams derived from a single master seed.

Every consumer of randomness asks for its stream by name, so any stage
(encoding, initialization, splitting, batching) can be replayed in
isolation from the master seed alone.
"""

import numpy as np

STREAMS = ("encode", "init", "split", "batch", "eval", "synthetic")


def stream(seed, name):
    """Return a fresh generator for stream ``name`` of master ``seed``."""
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}; expected one of {STREAMS}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS.index(name),))
    return np.random.Generator(np.random.PCG64(ss))


def streams(seed):
    return {name: stream(seed, name) for name in STREAMS}


def get_state(gen):
    return gen.bit_generator.state


def from_state(state):
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)
