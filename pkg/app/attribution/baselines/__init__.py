# Bottom-Up / Top-Down Baselines
