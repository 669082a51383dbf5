"""Numerical core: distributions, games, learners, dynamics, checks and the gadget."""
