"""Nested derivatives of a small tanh network, checked against finite differences."""

# %% A network is a flat parameter vector plus its layer sizes.
import numpy as np

from pinncurv import autodiff as ad
from pinncurv.model import init_params, param_count

sizes = [2, 8, 8, 1]
params = init_params(sizes, seed=0)
print(f"{param_count(sizes)} parameters")

# %% Forward mode gives u and its input slopes in one pass per direction.
u, ux, ut = ad.eval_with_input_derivs(sizes, params, 1.3, 0.4)
h = 1e-6
fd_x = (ad.eval_with_input_derivs(sizes, params, 1.3 + h, 0.4)[0]
        - ad.eval_with_input_derivs(sizes, params, 1.3 - h, 0.4)[0]) / (2 * h)
print(f"u={u:.6f}  du/dx={ux:.8f}  finite difference={fd_x:.8f}")

# %% Reverse mode differentiates any scalar built from those pieces, here
# the squared advection residual at one point, with respect to all weights.
beta = 5.0


def residual_sq(q):
    _, qx, qt = ad.eval_with_input_derivs(sizes, q, 1.3, 0.4)
    return ad.square(qt + beta * qx)


grad = ad.grad_params(residual_sq, params)
fd = ad.finite_diff_gradient(lambda q: float(residual_sq(q)), params)
print(f"max |reverse - finite difference| = {np.abs(grad - fd).max():.2e}")
