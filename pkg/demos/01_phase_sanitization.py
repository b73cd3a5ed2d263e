"""
Cleaning the phase of a synthetic CSI packet
============================================

A synthetic sample carries a known per-packet slope and offset on top of
the true channel. Unwrapping and removing the fitted line should give back
the clean phase up to a line of its own.
"""

import numpy as np
import matplotlib.pyplot as plt

from csiaug.csi_core import sanitize_phase, subcarrier_bins
from csiaug.synthgen import SynthProfile, channel_response

# one walking sample of a six-class profile, no receiver noise
profile = SynthProfile.default(6, seed=3, noise_std=0.0)
clean, corrupted, slopes, offsets = channel_response(profile, label=2, index=0)
print("values per sample (packets, antennas, bins):", clean.shape)

# keep the usable carriers of antenna 0 in packet 0
k = subcarrier_bins()[profile.mask.usable]
raw = np.angle(corrupted[0, 0, profile.mask.usable])
truth = np.angle(clean[0, 0, profile.mask.usable])
print("planted slope %.4f rad/bin, offset %.3f rad" % (slopes[0], offsets[0]))

# sanitize both and compare
fixed, fit = sanitize_phase(raw, k)
ref, _ = sanitize_phase(truth, k)
print("max difference after sanitizing: %.2e rad" % np.abs(fixed - ref).max())

fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
axes[0].plot(k, raw, ".", ms=2)
axes[0].set_title("raw phase")
axes[1].plot(k, fixed, label="corrupted, sanitized")
axes[1].plot(k, ref, "--", label="clean, sanitized")
axes[1].set_title("sanitized phase")
axes[1].legend()
for ax in axes:
    ax.set_xlabel("subcarrier index")
fig.tight_layout()
fig.savefig("phase_sanitization.png", dpi=120)
