# %% [markdown]
# # A full forward pass
#
# Random weights, a 160-frame 128x128 clip, and a checkpoint round trip.
# The weights are untrained, so the waveform is not a pulse; this shows
# shapes, determinism and I/O.

# %%
import tempfile

import numpy as np

from ssd_pulse.model import PhysMambaConfig, forward_trace, init_weights, load_checkpoint, save_checkpoint
from ssd_pulse.synth import SynthSpec, gen_video

cfg = PhysMambaConfig()
weights = init_weights(cfg, seed=0)
clip, _ = gen_video(SynthSpec(hr_bpm=80, duration_s=160 / 30, seed=3))

# %%
trace = forward_trace(clip, weights, cfg)
print("tokens", trace.tokens.shape)
print("SA / CA after FDF", trace.x_sa.shape, trace.x_ca.shape)
print("fusion (CA, SA)", trace.fusion.shape)
print("signal", len(trace.signal), "samples at", trace.signal.fs, "Hz")

# %%
with tempfile.TemporaryDirectory() as d:
    save_checkpoint(weights, d, cfg)
    loaded, cfg2 = load_checkpoint(d)
again = forward_trace(clip, loaded, cfg2).signal.samples
print("bitwise identical after reload:", again.tobytes() == trace.signal.samples.tobytes())
