# Experiment Harness Package
