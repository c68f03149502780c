"""The differentiation engine, ending at the trick the gradient penalty
depends on: gradients that are themselves differentiable graph nodes.

Run:  python3 demos/02_autodiff_double_backprop.py
"""

import numpy as np

from popsynth import autodiff as ad

# First-order: d/dx of sum((x - 3)^2) is 2(x - 3).
x = ad.tensor(np.array([1.0, 2.0, 5.0]))
loss = ad.sum_(ad.square(x - ad.tensor(3.0)))
(gx,) = ad.grad(loss, [x])
print("analytic 2(x-3):", 2 * (x.values - 3))
print("autodiff:       ", gx.values)

# Second-order: gx above is a graph node, so we can differentiate an
# expression built from it. d/dx sum(gx^2) = d/dx sum(4 (x-3)^2) = 8(x-3).
second = ad.grad(ad.sum_(ad.square(gx)), [x])[0]
print("double backprop 8(x-3):", second.values)

# That is exactly what a gradient penalty needs: the penalty is a function
# of an input gradient, and training differentiates it w.r.t. parameters.
rng = np.random.default_rng(0)
w = ad.tensor(rng.standard_normal((4, 1)), name="w")
inputs = ad.tensor(rng.random((6, 4)))
score = ad.sum_(ad.matmul(inputs, w))
grad_in = ad.gradient_as_node(score, inputs)      # rows all equal w^T
norms = ad.row_l2_norm(grad_in)
penalty = ad.mean(ad.square(norms - ad.tensor(1.0)))
(gw,) = ad.grad(penalty, [w])

# For a linear map the penalty is (||w|| - 1)^2 with a closed-form gradient.
nw = np.linalg.norm(w.values)
analytic = 2.0 * (nw - 1.0) * w.values / nw
print("penalty:", float(penalty.values), "= (||w||-1)^2 =", (nw - 1) ** 2)
print("max |autodiff - analytic| grad:", np.abs(gw.values - analytic).max())
