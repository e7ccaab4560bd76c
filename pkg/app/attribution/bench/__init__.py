# Synthetic Oracles
