"""
Synthetic CSI images per activity class
=======================================

Each class moves at its own Doppler rate, which shows up as stripes along
the time axis of the phase channels.
"""

import numpy as np
import matplotlib.pyplot as plt

from csiaug.csi_core import ChannelStats, normalize_array
from csiaug.synthgen import SynthProfile, synth_image_dataset

profile = SynthProfile.default(6, seed=0)
print("Doppler rate per class (Hz):", profile.doppler_rate_hz.round(2))

# four samples per class, shrunk to 32 x 32
ds = synth_image_dataset(profile, 4, (32, 32))
print("dataset:", ds.data.shape, "labels:", np.bincount(ds.labels))

# scale each channel to [-1, 1] with stats of this set
stats = ChannelStats.from_array(ds.data)
x = normalize_array(ds.data, stats)

# first sample of every class, amplitude and phase of antenna A
fig, axes = plt.subplots(2, 6, figsize=(13, 4.5))
for c in range(6):
    first = x[ds.labels == c][0]
    axes[0, c].imshow(first[0], aspect="auto", cmap="viridis", vmin=-1, vmax=1)
    axes[1, c].imshow(first[1], aspect="auto", cmap="twilight", vmin=-1, vmax=1)
    axes[0, c].set_title("class %d" % c)
axes[0, 0].set_ylabel("amplitude")
axes[1, 0].set_ylabel("phase")
for ax in axes.flat:
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig("synthetic_images.png", dpi=120)
