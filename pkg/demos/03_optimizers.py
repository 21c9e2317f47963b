"""Four optimizers on the same small PINN, a few hundred epochs each."""

# %%
from pinncurv.optim import OptimizerConfig
from pinncurv.runner import ExperimentConfig, default_lr, run_single

EPOCHS = 200

for kind in ("GD", "ADAM", "LBFGS", "BBI"):
    lr = default_lr(kind, 1.0)
    record = run_single(ExperimentConfig(OptimizerConfig(kind, lr), beta=1.0, epochs=EPOCHS))
    first, last = record.epochs[0], record.epochs[-1]
    print(f"{kind:5s} lr={lr:<6g} train loss {first.train.total:.3e} -> {last.train.total:.3e}"
          f"   grid MSE {last.mse:.3e}   ({record.status})")
