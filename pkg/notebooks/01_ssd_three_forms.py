# %% [markdown]
# # One layer, three algorithms
#
# A scalar-decay SSD layer can be run as a recurrence, as a masked
# attention product or chunk by chunk. Here we build one random instance,
# run it all three ways and then time them as the sequence grows.

# %%
import time

import numpy as np

from ssd_pulse.bench import random_inputs, rel_err, run_bench
from ssd_pulse.ssd import SsdConfig, build_mask_L, ssd_chunked, ssd_quadratic, ssm_recurrence_scan

cfg = SsdConfig()
rng = np.random.default_rng(0)
inp = random_inputs(96, cfg, rng)
print("q", inp.q.shape, "v", inp.v.shape, "decay", inp.decay.shape)

# %% [markdown]
# The mask `L` of head 0 is lower-triangular; entry `(i, j)` is the product of
# decays between steps `j` and `i`.

# %%
L = build_mask_L(inp.decay, 0)
np.set_printoptions(precision=3, suppress=True)
print(L[:5, :5])

# %%
y_rec = ssm_recurrence_scan(inp)
y_quad = ssd_quadratic(inp)
y_chunk = ssd_chunked(inp, cfg.chunk_size)
print("quadratic vs recurrence", rel_err(y_quad, y_rec))
print("chunked   vs recurrence", rel_err(y_chunk, y_rec))

# %% [markdown]
# Timing. The chunked form should grow roughly linearly in `T`, the
# quadratic one roughly with `T**2`.

# %%
res = run_bench(lengths=(512, 1024, 2048), repeats=2)
for row in res.rows:
    print(f"{row.formulation:>10}  T={row.length:5d}  {row.wall_ns / 1e6:8.2f} ms")
print("chunked ratio", round(res.chunked_ratio, 2), "quadratic ratio", round(res.quadratic_ratio, 2))
