# Attribution Module - Two-Level Surrogates, ADMM Solver & Synthetic Benchmark
