"""The tensor engine: forward ops, reverse-mode gradients, and the
finite-difference oracle that keeps them honest."""

import numpy as np

from ofat import autodiff as ad
from ofat.autodiff import Tensor, finite_diff_check
from ofat.rng import Rng

rng = Rng(seed=7, stream_id=1)

print("== forward ops ==")
x = Tensor(rng.normal((2, 3)).astype(np.float32), requires_grad=True)
w = Tensor(rng.normal((3, 3)).astype(np.float32), requires_grad=True)
gain = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
bias = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)

h = ad.layer_norm(ad.matmul(x, w), gain, bias)
y = ad.tsum(ad.gelu(h))
print("x @ w -> layer_norm -> gelu -> sum =", y.item())

print("\n== backward ==")
y.backward()
print("x.grad:\n", x.grad)
print("w.grad row norms:", np.linalg.norm(w.grad, axis=1))

print("\n== the gradient oracle ==")
err = finite_diff_check(lambda t: ad.tsum(ad.gelu(ad.layer_norm(ad.matmul(t, w), gain, bias))), x)
print(f"max relative error vs central differences (float32): {err:.2e}")

print("\n== float64 verification mode ==")
with ad.precision(np.float64):
    x64 = Tensor(rng.normal((2, 3)), requires_grad=True)
    w64 = Tensor(rng.normal((3, 3)))
    err64 = finite_diff_check(lambda t: ad.tsum(ad.gelu(ad.matmul(t, w64))), x64)
print(f"same check at float64: {err64:.2e} (tolerance tightens from 1e-3 to 1e-6)")

print("\n== prefix slicing, the weight-sharing primitive ==")
big = Tensor(np.arange(12, dtype=np.float32).reshape(3, 4), requires_grad=True)
small = ad.slice_prefix(big, 1, 2)  # a 2-wide layer nested in a 4-wide one
ad.tsum(small).backward()
print("gradient scatters back into the prefix only:\n", big.grad)
