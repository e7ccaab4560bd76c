# Evaluation Metrics
