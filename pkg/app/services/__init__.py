"""Search spaces, kernels, Kriging, optimizers and the benchmark harness."""
