# Nested Input Structure
