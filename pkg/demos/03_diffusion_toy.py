"""
A small class-conditional diffusion model
=========================================

Train the noise predictor on two classes of 16 x 16 synthetic images for a
few hundred steps, then draw new samples and keep snapshots of the reverse
process. Runs in a couple of minutes on a CPU; samples stay rough at this
budget (the desk preset trains for 4000 steps).
"""

import numpy as np
import torch
import matplotlib.pyplot as plt

from csiaug.csi_core import ChannelStats, normalize_array
from csiaug.diffusion import DiffusionConfig, generate, train_diffusion
from csiaug.synthgen import SynthProfile, synth_image_dataset

profile = SynthProfile.default(2, seed=0, n_frames=64)
ds = synth_image_dataset(profile, 40, (16, 16))
x = normalize_array(ds.data, ChannelStats.from_array(ds.data))

# scaled channels sit in a narrow band, so diffuse them standardized;
# dropping 10% of labels lets the sampler use guidance
cfg = DiffusionConfig(T=100, beta_end=0.05, image_shape=x.shape[1:], num_classes=2,
                      base_width=8, stage_multipliers=(1, 2), embedding_dim=32,
                      max_steps=600, learning_rate=1e-3, log_every=50,
                      standardize=True, label_dropout=0.1, guidance_scale=2.0)
run = train_diffusion(cfg, x, ds.labels)
print("loss per 50 steps:", [round(loss, 3) for _, loss in run.losses])

# eight samples of class 1 with snapshots along the way
snaps = {}
fake = generate(run.model, 1, 8, run.schedule, torch.Generator().manual_seed(0),
                snapshots=snaps, snapshot_steps=(100, 50, 20, 5, 0),
                guidance_scale=cfg.guidance_scale)
print("generated:", tuple(fake.shape), "range [%.2f, %.2f]" % (fake.min(), fake.max()))

steps = sorted(snaps, reverse=True)
fig, axes = plt.subplots(1, len(steps) + 1, figsize=(2.2 * (len(steps) + 1), 2.4))
for ax, s in zip(axes, steps):
    ax.imshow(snaps[s][0, 0], cmap="viridis", vmin=-1, vmax=1)
    ax.set_title("step %d" % s)
axes[-1].imshow(x[ds.labels == 1][0, 0], cmap="viridis", vmin=-1, vmax=1)
axes[-1].set_title("real")
for ax in axes:
    ax.axis("off")
fig.tight_layout()
fig.savefig("diffusion_toy.png", dpi=120)
