"""A tiny convolution / pooling / ReLU stack and one backward step."""
# %%
import numpy as np

from racetrack_cim import conv2d, input_gradient, max_pool2d, relu, rotate180, weight_update

rng = np.random.default_rng(3)
x = rng.standard_normal((1, 8, 8)).astype(np.float32)
k = rng.standard_normal((2, 1, 3, 3)).astype(np.float32)

# %% Forward.
y, flags, ledger = conv2d(x, k)
print("conv out", y.shape, "flags", int(flags.sum()), "cycles", ledger.cycles)
y, _ = relu(y)
pooled = max_pool2d(y)[0]
print("pooled:\n", pooled)

# %% Rotating a kernel twice gives it back.
r = rotate180(k[0, 0])[0]
assert np.array_equal(rotate180(r)[0], k[0, 0])

# %% Backward: loss through the kernels, then an SGD step.
delta = rng.standard_normal(y.shape).astype(np.float32)
dx = input_gradient(delta, k)[0]
print("input gradient", dx.shape)
new_k = weight_update(k, np.float32(0.01), np.ones_like(k))[0]
print("max weight change", float(np.abs(new_k - k).max()))
