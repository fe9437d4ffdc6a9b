"""
detlp Test Suite

Tests for the detection-loophole LP library covering:
- Configuration loading and tolerance profiles
- Experiment schemas, category indexing and frequency files
- Quantum fixtures and Born-rule probabilities
- The bounded-variable simplex, duals and Farkas rays
- Local-realist programs, certificates and published tables
- The command line and event logging
"""
