# %% [markdown]
# # Source, fiber and detectors
#
# Pairs per pulse are Poisson with mean 0.08, fiber loss is exponential in
# length, and each detector clicks on a photon with its efficiency or on a
# dark count.

# %%
import numpy as np
from scipy import stats

from timebin.photonics import (
    ChannelParams,
    DetectorParams,
    SourceParams,
    channel_transmittance,
    detect_many,
    sample_pair_count,
)

rng = np.random.default_rng(0)
k = sample_pair_count(SourceParams(0.08), rng, size=10**6)
print("P(k>=1) sampled", np.mean(k >= 1), "exact", stats.poisson.sf(0, 0.08))
print("P(k>=2) sampled", np.mean(k >= 2), "exact", stats.poisson.sf(1, 0.08))

# %%
for name, ch in {"Alice 1.3 um": ChannelParams(25.3, 0.35), "Bob 1.55 um": ChannelParams(25.3, 0.25)}.items():
    print(f"{name}: transmittance {channel_transmittance(ch):.4f}")

# %% [markdown]
# Dark clicks per gate for Bob's gated InGaAs detectors, from 1e-4 per ns
# and a 1.2 ns gate.

# %%
bob = DetectorParams.from_dark_prob_per_ns(0.2, 1e-4)
clicks, photon = detect_many(bob, np.zeros(10**7, dtype=bool), rng)
print("dark probability per gate", bob.dark_prob_per_gate, "measured", clicks.mean())
