"""
Spiking neurons, rate coding and presynaptic traces
===================================================

A leaky integrate-and-fire (LIF) neuron integrates its input current into a
membrane potential, fires when the potential reaches the threshold and then
subtracts the threshold (soft reset).  Real-valued features enter the
network as Bernoulli spike trains, and every layer keeps a leaky spike
counter from which both its firing rate and its presynaptic trace are read.
"""

# %%
# A constant drive of half the threshold fires every second step.
import numpy as np

from dysign.neuron import NeuronConfig, RateAccumulator, bernoulli_encode, lif_step, rate_update, surrogate_derivative

cfg = NeuronConfig(v_th=1.0, lam=1.0, K=8)
u, s = np.zeros(1), np.zeros(1)
acc = RateAccumulator.zeros(1)
train = []
for _ in range(cfg.K):
    u, s = lif_step(u, s, 0.5, cfg)
    acc = rate_update(acc, s, cfg.lam)
    train.append(int(s[0]))
print("spike train      :", train)
print("firing rate      :", acc.rate[0])

# %%
# With a leak below 1 the rate weights recent spikes more: for lambda = 0.5
# the train [1, 0, 1] has rate (0.25 + 1) / (0.25 + 0.5 + 1) = 5/7.
acc = RateAccumulator.zeros(())
for spike in (1.0, 0.0, 1.0):
    acc = rate_update(acc, spike, 0.5)
print("leaky rate       :", acc.rate, "(5/7 =", 5 / 7, ")")
print("trace / C        :", acc.trace / acc.normalizer)

# %%
# Bernoulli encoding: each feature becomes an independent spike with that
# probability at every latency step; averaging recovers the feature.
X = np.array([[0.0, 0.25, 0.5, 1.0]])
spikes = bernoulli_encode(X, 10_000, rng_seed=0)
print("encoded means    :", spikes.mean(axis=0).round(3))

# %%
# Training replaces the step function's derivative by a rectangular window
# of half-width gamma (default v_th / 2) around the threshold.
potentials = np.linspace(0.0, 2.0, 9)
for p, g in zip(potentials, surrogate_derivative(potentials, cfg)):
    print(f"u={p:.2f}  surrogate={g:.1f}")
