"""The advection problem, its collocation data and the three loss terms."""

# %%
import numpy as np

from pinncurv.model import AdvectionProblem, exact_solution, grid_mse, init_params, pinn_loss, sample_dataset

problem = AdvectionProblem(beta=5.0)
data = sample_dataset(problem, seed=0)
print("train sizes (IC, bulk, BC):", data.train.sizes)
print("test sizes  (IC, bulk, BC):", data.test.sizes)

# %% The exact solution is the initial profile carried at speed beta.
x = np.linspace(0, 2 * np.pi, 5)
print("u(x, 0.2) =", np.round(exact_solution(5.0, x, 0.2), 4))

# %% A freshly initialised network: most of the loss sits in the IC term.
params = init_params("S", seed=0)
loss = pinn_loss("S", params, problem, data.train)
print(f"IC {loss.ic:.4f}  bulk {loss.bulk:.4f}  BC {loss.bc:.4f}  total {loss.total:.4f}")
print(f"grid MSE against the exact solution: {grid_mse('S', params, problem):.4f}")
