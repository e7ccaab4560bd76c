# Perturbation Sampling & Sample Weights
