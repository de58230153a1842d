# %% [markdown]
# # From pixels to tokens
#
# The frame stem turns a clip `[3, T, H, W]` into `T/2` tokens of width 64.
# We feed it a synthetic face clip and look at the intermediate shapes and
# the spatial attention mask.

# %%
import numpy as np

from ssd_pulse.model import PhysMambaConfig, init_weights
from ssd_pulse.stem import attention_mask, diff_frames, frame_stem_forward, fuse_stem
from ssd_pulse.synth import SynthSpec, gen_video

cfg = PhysMambaConfig()
weights = init_weights(cfg, seed=0)
clip, label = gen_video(SynthSpec(hr_bpm=72, duration_s=160 / 30, seed=1))
print("clip", clip.data.shape, "fps", clip.fps)

# %%
d = diff_frames(clip)
print("difference frames", d.shape, "max |d|", float(np.abs(d).max()))

# %%
feats = fuse_stem(clip, weights.stem).features
print("fused stem features", feats.shape)

# %% [markdown]
# Each frame's mask sums to `h * w / 2`; with 16x16 feature maps that is 128.

# %%
mask = attention_mask(feats, weights.stem.attn_conv)
print("mask sums (first 5 frames)", mask.sum(axis=(2, 3))[0, :5])

# %%
tokens = frame_stem_forward(clip, weights.stem)
print("tokens", tokens.shape)
